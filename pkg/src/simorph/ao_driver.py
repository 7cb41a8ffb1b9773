"""Outer alternating optimization over morphing, beamformer, and layer responses."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import bf_opt
from . import channel as _channel
from . import geometry as _geometry
from . import metrics as _metrics
from . import morph_opt
from . import phase_opt
from . import scenario as _scenario

logger = logging.getLogger(__name__)


@dataclass
class AoIteration:
    index: int
    sum_rate: float
    aug_objective: float
    rates: np.ndarray
    max_violation: float
    omega: float
    wall_s: float


@dataclass
class AoTrace:
    iterations: list = field(default_factory=list)
    termination: str = ""

    def sum_rates(self) -> np.ndarray:
        return np.array([row.sum_rate for row in self.iterations])


@dataclass
class AoResult:
    state: _scenario.SystemState
    report: _metrics.RateReport

    @property
    def sum_rate(self) -> float:
        return self.report.sum_rate


def run_ao(cfg, geom, mode: str, phase_mode: str = "continuous",
           eps_outer: float = 1e-3, max_outer: int = 100,
           bf_rounds: int = 20, phase_rounds: int = 2,
           morph_steps: int = 4, rel_tol: float = 1e-2) -> tuple[AoResult, AoTrace]:
    """Alternate morphing, beamformer, and per-layer response updates.

    Stops when the sum-rate change between consecutive outer iterations
    (evaluated after the full iteration) is at most ``eps_outer`` AND at most
    ``rel_tol`` of the current sum rate, or at ``max_outer``. The relative
    guard keeps the absolute threshold from firing during the early
    iterations, where rates are orders of magnitude below their converged
    scale and still growing multiplicatively. The rigid mode skips the
    morphing block entirely. Block stalls are logged, never fatal.
    """
    if phase_mode not in ("continuous", "discrete"):
        raise ValueError(f"unknown phase mode {phase_mode!r}")
    state = _scenario.init_state(cfg, geom, mode)
    cs = _geometry.build_constraints(cfg, mode)
    noise = cfg.noise()

    stack = _channel.build_channel_stack(state.morph, geom, cfg)
    g = _channel.cascade(stack, state.phases)
    report = _metrics.sinr_and_rates(g, state.precoder, noise)
    opt = morph_opt.default_opt_state(state.morph, cfg.num_users, cfg.morph_range)

    trace = AoTrace()
    trace.iterations.append(_row(0, report, state, opt, cfg, 0.0))
    prev_sum = report.sum_rate
    termination = "max_outer"

    for outer in range(1, max_outer + 1):
        tic = time.perf_counter()

        if mode != "rsim" and cfg.morph_range > 0:
            ctx = morph_opt.MorphContext(cfg=cfg, geom=geom, cs=cs,
                                         phases=state.phases,
                                         precoder=state.precoder,
                                         thresholds=state.thresholds)
            # Inner ascent steps per outer pass: a single step per iteration
            # starves the high-dimensional morphing modes, so step until the
            # per-step gain turns marginal (or the cap is hit).
            last = report.sum_rate
            for _ in range(morph_steps):
                opt, report = morph_opt.morph_update(opt, ctx)
                if opt.stalled:
                    break
                gain = report.sum_rate - last
                last = report.sum_rate
                if gain <= max(eps_outer, rel_tol * report.sum_rate) / 10.0:
                    break
            state.morph = opt.morph
            stack = _channel.build_channel_stack(state.morph, geom, cfg)

        g = _channel.cascade(stack, state.phases)
        w_new, bf_info = bf_opt.run_bf_opt(state.precoder, g, noise,
                                           state.thresholds, cfg.power_budget,
                                           max_rounds=bf_rounds)
        if bf_info["stalled"]:
            logger.debug("beamformer stalled at outer iteration %d", outer)
        state.precoder = w_new

        for ell in range(1, cfg.num_layers + 1):
            surr = phase_opt.build_layer_surrogate(ell, stack, state.phases,
                                                   state.precoder)
            if phase_mode == "discrete":
                start = state.phases.layer_indices(ell)
                if start is None:
                    raise ValueError("discrete phase mode needs a quantized stack")
                values, indices = phase_opt.optimize_layer_discrete(
                    surr, state.phases.quant_set, state.thresholds, noise, start)
                state.phases = state.phases.with_layer(ell, values, indices)
            else:
                values = phase_opt.optimize_layer_continuous(
                    surr, state.thresholds, noise, max_rounds=phase_rounds)
                state.phases = state.phases.with_layer(ell, values)

        g = _channel.cascade(stack, state.phases)
        report = _metrics.sinr_and_rates(g, state.precoder, noise)
        trace.iterations.append(_row(outer, report, state, opt, cfg,
                                     time.perf_counter() - tic))

        change = abs(report.sum_rate - prev_sum)
        if change <= min(eps_outer, rel_tol * max(report.sum_rate, 1e-30)):
            termination = "converged"
            break
        prev_sum = report.sum_rate

    trace.termination = termination
    return AoResult(state=state, report=report), trace


def _row(index: int, report: _metrics.RateReport, state, opt, cfg,
         wall_s: float) -> AoIteration:
    aug = _metrics.augmented_objective(report, state.thresholds, opt.mu,
                                       opt.omega)
    viol = float(np.max(_metrics.qos_violations(report.rates, state.thresholds),
                        initial=0.0))
    return AoIteration(index=index, sum_rate=report.sum_rate,
                       aug_objective=aug, rates=report.rates.copy(),
                       max_violation=viol, omega=opt.omega, wall_s=wall_s)
