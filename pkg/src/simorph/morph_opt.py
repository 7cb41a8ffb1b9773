"""Morphing update: penalized projected gradient ascent with backtracking.

One update takes a single gradient step on the penalized objective, projects
onto the distance/box polytope and the architecture pattern, then refreshes
the QoS slacks. If any user's rate falls below threshold, the penalty weight
is tightened and the step re-runs from the latest iterate, a bounded number
of times; on exhaustion the best feasible iterate seen is kept.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel as _channel
from . import geometry as _geometry
from . import gradients as _gradients
from . import metrics as _metrics

logger = logging.getLogger(__name__)


@dataclass
class MorphContext:
    """Fixed quantities during one morphing update."""

    cfg: object
    geom: object
    cs: _geometry.ConstraintSystem
    phases: _channel.PhaseStack
    precoder: np.ndarray
    thresholds: np.ndarray


@dataclass
class MorphOptState:
    morph: _geometry.MorphState
    mu: np.ndarray
    omega: float = 1.0
    kappa: float = 0.5
    step_init: float = 0.0          # meters of max-coordinate motion; 0 = auto
    step_cap: float = 0.0
    armijo_eps: float = 1e-4
    omega_floor: float = 1e-6
    qos_tol: float = 1e-6
    max_retries: int = 20
    max_halvings: int = 60
    stalled: bool = False
    last_step: float = 0.0


def default_opt_state(morph: _geometry.MorphState, num_users: int,
                      morph_range: float) -> MorphOptState:
    # Initial max-coordinate move of 20% of the morphing range; the step
    # adapts (doubles on acceptance, halves in backtracking) within [0, cap].
    step = 0.2 * morph_range
    return MorphOptState(morph=morph, mu=np.zeros(num_users),
                         step_init=step, step_cap=2.0 * morph_range)


def _evaluate(morph: _geometry.MorphState, ctx: MorphContext) -> _metrics.RateReport:
    stack = _channel.build_channel_stack(morph, ctx.geom, ctx.cfg)
    g = _channel.cascade(stack, ctx.phases)
    return _metrics.sinr_and_rates(g, ctx.precoder, ctx.cfg.noise())


def morph_step(opt: MorphOptState,
               ctx: MorphContext) -> tuple[MorphOptState, _metrics.RateReport]:
    """One backtracked projected-gradient step plus the slack refresh.

    The sufficient-increase test runs on the projection arc (candidates are
    projected before evaluation), which makes an accepted step a guaranteed
    improvement of the penalized objective at the emitted, feasible point.
    """
    morph0 = opt.morph
    stack0 = _channel.build_channel_stack(morph0, ctx.geom, ctx.cfg)
    g0 = _channel.cascade(stack0, ctx.phases)
    report0 = _metrics.sinr_and_rates(g0, ctx.precoder, ctx.cfg.noise())
    aug0 = _metrics.augmented_objective(report0, ctx.thresholds, opt.mu, opt.omega)

    if morph0.mode == "rsim" or ctx.cfg.morph_range <= 0:
        mu = np.maximum(0.0, report0.rates - ctx.thresholds)
        return replace(opt, mu=mu, stalled=True, last_step=0.0), report0

    ws = _gradients.build_workspace(morph0, ctx.phases, ctx.precoder,
                                    stack0, ctx.geom, ctx.cfg)
    grad = _gradients.grad_aug(ws, report0, ctx.thresholds, opt.mu, opt.omega)
    # Step inside the mode's subspace: normalizing the raw gradient would let
    # coordinates that the mode projection discards (or averages away) starve
    # the effective step.
    grad = _geometry.project_mode_vector(grad, morph0.mode, morph0.num_layers)
    gnorm = float(np.max(np.abs(grad)))
    if gnorm <= 0.0 or not np.isfinite(gnorm):
        mu = np.maximum(0.0, report0.rates - ctx.thresholds)
        return replace(opt, mu=mu, stalled=True, last_step=0.0), report0

    direction = grad / gnorm
    delta = opt.step_init if opt.step_init > 0 else 0.2 * ctx.cfg.morph_range
    accepted = None
    for _ in range(opt.max_halvings):
        raw = morph0.y + delta * direction
        cand = _geometry.project_feasible_mode(raw, ctx.cs, morph0.mode,
                                               morph0.num_layers)
        move_sq = float(np.sum((cand.y - morph0.y) ** 2))
        if move_sq <= 0.0:
            break
        report_c = _evaluate(cand, ctx)
        aug_c = _metrics.augmented_objective(report_c, ctx.thresholds,
                                             opt.mu, opt.omega)
        if aug_c >= aug0 + opt.armijo_eps * move_sq:
            accepted = (cand, report_c)
            break
        delta *= 0.5

    if accepted is None:
        mu = np.maximum(0.0, report0.rates - ctx.thresholds)
        return replace(opt, mu=mu, stalled=True, last_step=0.0), report0

    cand, report_c = accepted
    mu = np.maximum(0.0, report_c.rates - ctx.thresholds)
    next_step = min(2.0 * delta, opt.step_cap) if opt.step_cap > 0 else 2.0 * delta
    return replace(opt, morph=cand, mu=mu, stalled=False, last_step=delta,
                   step_init=next_step), report_c


def penalty_schedule(opt: MorphOptState, report: _metrics.RateReport,
                     thresholds: np.ndarray) -> tuple[MorphOptState, bool]:
    """Tighten the penalty when a threshold is violated; floor respected."""
    worst = float(np.max(_metrics.qos_violations(report.rates, thresholds),
                         initial=0.0))
    if worst <= opt.qos_tol:
        return opt, False
    if opt.omega <= opt.omega_floor:
        logger.warning("penalty weight at floor with QoS violation %.3e", worst)
        return opt, True
    return replace(opt, omega=max(opt.omega_floor, opt.kappa * opt.omega)), True


def morph_update(opt: MorphOptState,
                 ctx: MorphContext) -> tuple[MorphOptState, _metrics.RateReport]:
    """Full morphing update: step, slack refresh, penalty retry loop."""
    report = _evaluate(opt.morph, ctx)
    opt = replace(opt, mu=np.maximum(0.0, report.rates - ctx.thresholds))

    def _feasible(rep):
        return float(np.max(_metrics.qos_violations(rep.rates, ctx.thresholds),
                            initial=0.0)) <= opt.qos_tol

    best = (opt.morph, report) if _feasible(report) else None
    fallback = (opt.morph, report)
    fallback_viol = float(np.max(
        _metrics.qos_violations(report.rates, ctx.thresholds), initial=0.0))

    for _ in range(opt.max_retries + 1):
        opt, report = morph_step(opt, ctx)
        viol = float(np.max(_metrics.qos_violations(report.rates, ctx.thresholds),
                            initial=0.0))
        if viol <= opt.qos_tol:
            if best is None or report.sum_rate >= best[1].sum_rate:
                best = (opt.morph, report)
        elif viol < fallback_viol:
            fallback, fallback_viol = (opt.morph, report), viol
        opt, retry = penalty_schedule(opt, report, ctx.thresholds)
        if not retry:
            return opt, report

    logger.warning("QoS violation persists after %d penalty retries; "
                   "keeping best feasible iterate", opt.max_retries)
    morph, report = best if best is not None else fallback
    mu = np.maximum(0.0, report.rates - ctx.thresholds)
    return replace(opt, morph=morph, mu=mu, stalled=True), report
