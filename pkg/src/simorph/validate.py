"""Self-contained oracle suites behind the `validate` CLI subcommand.

Each suite cross-checks a production path against an independent reference
(finite differences, active-set enumeration, closed forms, exhaustive
search) and prints one PASS/FAIL line.
"""

from __future__ import annotations

import math

import numpy as np

from . import bf_opt
from . import channel as _channel
from . import geometry as _geometry
from . import gradients as _gradients
from . import metrics as _metrics
from . import oracles
from . import perturbation as _perturbation
from . import phase_opt
from . import scenario as _scenario


def small_config(**kwargs) -> _scenario.ScenarioConfig:
    base = dict(num_tx_antennas=2, num_layers=3, atoms_per_layer=4, atoms_x=2,
                num_users=2, num_paths=3)
    base.update(kwargs)
    return _scenario.ScenarioConfig(**base)


def _random_feasible_point(cfg, geom, seed):
    """A scenario state with mild random morphing and random-ish responses."""
    rng = np.random.default_rng(seed)
    state = _scenario.init_state(cfg, geom)
    cs = _geometry.build_constraints(cfg)
    y = rng.uniform(-0.3, 0.3, cfg.total_atoms) * cfg.morph_range
    morph = _geometry.MorphState(y=_geometry.project_feasible(y, cs),
                                 mode="sfim", num_layers=cfg.num_layers)
    phi = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.total_atoms))
    phases = _channel.PhaseStack(values=phi, num_layers=cfg.num_layers)
    return morph, phases, state


def check_gradients(seeds=range(3), rel_tol=1e-4) -> tuple[bool, str]:
    cfg = small_config()
    worst = 0.0
    for seed in seeds:
        geom = _scenario.sample_scenario(cfg, seed)
        morph, phases, state = _random_feasible_point(cfg, geom, seed + 1000)
        stack = _channel.build_channel_stack(morph, geom, cfg)
        ws = _gradients.build_workspace(morph, phases, state.precoder, stack,
                                        geom, cfg)
        report = _metrics.sinr_and_rates(ws.g, state.precoder, cfg.noise())
        analytic = _gradients.grad_sum_rate(ws, report)

        def sum_rate_at(y):
            m = morph.copy_with(y)
            s = _channel.build_channel_stack(m, geom, cfg)
            g = _channel.cascade(s, phases)
            return _metrics.sinr_and_rates(g, state.precoder, cfg.noise()).sum_rate

        fd = _gradients.fd_oracle(sum_rate_at, morph.y, 1e-6 * cfg.wavelength)
        mask = (np.abs(analytic) > 1e-12) | (np.abs(fd) > 1e-12)
        if mask.any():
            rel = np.max(np.abs(analytic - fd)[mask]
                         / np.maximum(np.abs(fd[mask]), 1e-12))
            worst = max(worst, float(rel))
    return worst <= rel_tol, f"max rel err {worst:.2e} (tol {rel_tol:.0e})"


def check_projection(num_instances=10, tol=1e-6) -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(num_instances):
        cfg = small_config(num_layers=3, atoms_per_layer=2, atoms_x=1,
                           min_distance=0.05)
        cs = _geometry.build_constraints(cfg)
        raw = rng.uniform(-2.5, 2.5, cfg.total_atoms) * cfg.morph_range
        ours = _geometry.project_feasible(raw, cs)
        g_mat, h = oracles.projection_rows(cs)
        ref = oracles.qp_projection_oracle(raw, g_mat, h)
        worst = max(worst, float(np.max(np.abs(ours - ref))))
    return worst <= tol, f"max |diff| {worst:.2e} (tol {tol:.0e})"


def check_beamformer(seeds=range(2), tol=1e-3) -> tuple[bool, str]:
    cfg = small_config(num_users=1, num_paths=2)
    worst = 0.0
    for seed in seeds:
        geom = _scenario.sample_scenario(cfg, seed)
        state = _scenario.init_state(cfg, geom)
        morph = state.morph
        stack = _channel.build_channel_stack(morph, geom, cfg)
        g = _channel.cascade(stack, state.phases)
        rng = np.random.default_rng(seed)
        w0 = rng.normal(size=(cfg.num_tx_antennas, 1)) \
            + 1j * rng.normal(size=(cfg.num_tx_antennas, 1))
        w0 *= math.sqrt(0.5 * cfg.power_budget) / np.linalg.norm(w0)
        w, _ = bf_opt.run_bf_opt(w0, g, cfg.noise(), np.zeros(1),
                                 cfg.power_budget)
        achieved = _metrics.sinr_and_rates(g, w, cfg.noise()).sum_rate
        target = oracles.matched_filter_rate(g[0], cfg.power_budget,
                                             cfg.noise()[0])
        worst = max(worst, target - achieved)
    return worst <= tol, f"max gap to closed form {worst:.2e} (tol {tol:.0e})"


def check_discrete_phase(seeds=range(3)) -> tuple[bool, str]:
    cfg = small_config(num_layers=1, atoms_per_layer=4, atoms_x=2,
                       quant_bits=1)
    qset = _channel.quantization_set(cfg.quant_bits)
    worst = 0.0
    for seed in seeds:
        geom = _scenario.sample_scenario(cfg, seed)
        state = _scenario.init_state(cfg, geom)
        stack = _channel.build_channel_stack(state.morph, geom, cfg)
        surr = phase_opt.build_layer_surrogate(1, stack, state.phases,
                                               state.precoder)
        thr = np.zeros(cfg.num_users)
        _, idx = phase_opt.optimize_layer_discrete(
            surr, qset, thr, cfg.noise(), np.zeros(cfg.atoms_per_layer, int))
        _, ours = phase_opt.layer_rates(surr.link_tensor, qset[idx], cfg.noise())
        ref, _ = oracles.exhaustive_phase_search(surr.link_tensor, qset, thr,
                                                 cfg.noise())
        worst = max(worst, abs(ref - ours))
    return worst <= 1e-9, f"max |gap to exhaustive| {worst:.2e} (tol 1e-09)"


def check_perturbation(num_seeds=10) -> tuple[bool, str]:
    cfg = small_config(num_tx_antennas=1, num_users=1, num_layers=4,
                       atoms_per_layer=4, atoms_x=2)
    for seed in range(num_seeds):
        geom = _scenario.sample_scenario(cfg, seed)
        phases = _channel.PhaseStack.all_ones(cfg.num_layers, cfg.atoms_per_layer)
        rep = _perturbation.perturb_gains(cfg, geom, phases)
        if rep.gain_dsim > rep.gain_sfim + 1e-15:
            return False, f"dominance violated on seed {seed}"
    return True, f"layer-translation gain dominated on {num_seeds} seeds"


SUITES = (
    ("gradient-vs-finite-differences", check_gradients),
    ("projection-vs-enumeration", check_projection),
    ("beamformer-vs-closed-form", check_beamformer),
    ("discrete-phase-vs-exhaustive", check_discrete_phase),
    ("perturbation-dominance", check_perturbation),
)


def run_all(printer=print) -> bool:
    ok = True
    for name, fn in SUITES:
        passed, detail = fn()
        ok &= passed
        printer(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return ok
