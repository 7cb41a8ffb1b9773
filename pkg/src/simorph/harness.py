"""Experiment sweeps: seeded Monte-Carlo runs, CSV emission, worker pool.

CSV files are comma-separated, UTF-8, LF-terminated, `.` decimal, with a
versioned `#` header comment. Rows are gathered in deterministic order, so
re-running a spec reproduces the file byte-for-byte except for the measured
wall_ms column.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import ao_driver
from . import perturbation as _perturbation
from . import channel as _channel
from . import scenario as _scenario

SWEEP_VARIABLES = ("morph_range", "num_layers", "atoms_per_layer",
                   "power_budget_dbm", "quant_bits", "iterations")

SWEEP_SCHEMA = "# simorph sweep csv v1"
CONVERGENCE_SCHEMA = "# simorph convergence csv v1"
PERTURB_SCHEMA = "# simorph perturbation csv v1"

SWEEP_COLUMNS = ("sweep_var", "value", "mode", "phase_mode", "realization",
                 "sum_rate", "iterations_used", "wall_ms", "status")


def derive_seed(base_seed: int, variable: str, value, mode: str,
                phase_mode: str, realization: int) -> int:
    """Stable 63-bit seed from the run coordinates (process-independent)."""
    key = f"{base_seed}|{variable}|{value!r}|{mode}|{phase_mode}|{realization}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _atoms_x_for(n_atoms: int, base_atoms_x: int) -> int:
    root = int(round(math.sqrt(n_atoms)))
    if root * root == n_atoms:
        return root
    if n_atoms % base_atoms_x == 0:
        return base_atoms_x
    for cand in range(root, 0, -1):
        if n_atoms % cand == 0:
            return cand
    return 1


def config_for_value(base: _scenario.ScenarioConfig, variable: str,
                     value) -> _scenario.ScenarioConfig:
    """Base config specialized to one sweep value."""
    if variable == "morph_range":
        return replace(base, morph_range=float(value))
    if variable == "num_layers":
        # Fixed total stack thickness: gaps shrink as layers are added.
        total = float(np.sum(base.gaps()))
        layers = int(value)
        return replace(base, num_layers=layers, nominal_gaps=total / layers)
    if variable == "atoms_per_layer":
        atoms = int(value)
        return replace(base, atoms_per_layer=atoms,
                       atoms_x=_atoms_x_for(atoms, base.atoms_x))
    if variable == "power_budget_dbm":
        return replace(base, power_budget=_scenario.dbm_to_watt(float(value)))
    if variable == "quant_bits":
        return replace(base, quant_bits=int(value))
    if variable == "iterations":
        return base
    raise ValueError(f"unknown sweep variable {variable!r}")


@dataclass
class SweepSpec:
    variable: str
    values: list
    modes: tuple = ("rsim", "hsim", "dsim", "sfim")
    phase_mode: str = "continuous"
    num_realizations: int = 20
    base: _scenario.ScenarioConfig = field(default_factory=_scenario.ScenarioConfig)
    out_path: str = "sweep.csv"
    base_seed: int | None = None
    workers: int = 1
    max_outer: int = 100
    eps_outer: float = 1e-3

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {self.variable!r}")
        if not self.values:
            raise ValueError("value list must be non-empty")
        if self.num_realizations < 1:
            raise ValueError("need at least one realization")
        for mode in self.modes:
            if mode not in _scenario.MODES:
                raise ValueError(f"unknown mode {mode!r}")
        if self.base_seed is None:
            self.base_seed = self.base.rng_seed


def run_single(cfg: _scenario.ScenarioConfig, mode: str, phase_mode: str,
               seed: int, max_outer: int, eps_outer: float) -> dict:
    """One seeded AO run, returning summary fields; failures become a status."""
    tic = time.perf_counter()
    try:
        geom = _scenario.sample_scenario(cfg, seed)
        result, trace = ao_driver.run_ao(cfg, geom, mode, phase_mode,
                                         eps_outer=eps_outer,
                                         max_outer=max_outer)
        return {"sum_rate": result.sum_rate,
                "iterations_used": len(trace.iterations) - 1,
                "wall_ms": (time.perf_counter() - tic) * 1e3,
                "status": "ok"}
    except Exception as exc:  # noqa: BLE001 - per-run failures become rows
        return {"sum_rate": float("nan"), "iterations_used": 0,
                "wall_ms": (time.perf_counter() - tic) * 1e3,
                "status": f"error:{type(exc).__name__}"}


def _sweep_task(args):
    cfg, mode, phase_mode, seed, max_outer, eps_outer = args
    return run_single(cfg, mode, phase_mode, seed, max_outer, eps_outer)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_sweep(spec: SweepSpec) -> str:
    """Run the full sweep grid and write data plus mean/std summary rows."""
    tasks = []
    keys = []
    for value in spec.values:
        cfg = config_for_value(spec.base, spec.variable, value)
        max_outer = int(value) if spec.variable == "iterations" else spec.max_outer
        for mode in spec.modes:
            for real in range(spec.num_realizations):
                seed = derive_seed(spec.base_seed, spec.variable, value, mode,
                                   spec.phase_mode, real)
                tasks.append((cfg, mode, spec.phase_mode, seed, max_outer,
                              spec.eps_outer))
                keys.append((value, mode, real))

    if spec.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]

    lines = [SWEEP_SCHEMA, ",".join(SWEEP_COLUMNS)]
    for (value, mode, real), res in zip(keys, results):
        lines.append(",".join([
            spec.variable, _fmt(value), mode, spec.phase_mode, str(real),
            _fmt(res["sum_rate"]), str(res["iterations_used"]),
            _fmt(res["wall_ms"]), res["status"]]))

    for value in spec.values:
        for mode in spec.modes:
            rows = [res for (v, m, _), res in zip(keys, results)
                    if v == value and m == mode and res["status"] == "ok"]
            rates = np.array([r["sum_rate"] for r in rows]) if rows else np.array([np.nan])
            its = np.array([r["iterations_used"] for r in rows]) if rows else np.array([0.0])
            walls = np.array([r["wall_ms"] for r in rows]) if rows else np.array([0.0])
            for stat, val in (("mean", np.mean), ("std", np.std)):
                lines.append(",".join([
                    spec.variable, _fmt(value), mode, spec.phase_mode, stat,
                    _fmt(float(val(rates))), _fmt(float(val(its))),
                    _fmt(float(val(walls))), "summary"]))

    _write_lines(spec.out_path, lines)
    return spec.out_path


def run_convergence(cfg: _scenario.ScenarioConfig, modes,
                    phase_modes=("continuous", "discrete"),
                    out_path: str = "convergence.csv", seed: int | None = None,
                    max_outer: int = 100, eps_outer: float = 1e-3,
                    dump_omega_path: str | None = None) -> str:
    """Single-realization per-iteration traces for each mode and phase mode."""
    if seed is None:
        seed = cfg.rng_seed
    lines = [CONVERGENCE_SCHEMA, "mode,phase_mode,iteration,sum_rate"]
    if max_outer > 0:
        geom = _scenario.sample_scenario(cfg, seed)
        for mode in modes:
            for phase_mode in phase_modes:
                _, trace = ao_driver.run_ao(cfg, geom, mode, phase_mode,
                                            eps_outer=eps_outer,
                                            max_outer=max_outer)
                for row in trace.iterations:
                    lines.append(f"{mode},{phase_mode},{row.index},"
                                 f"{row.sum_rate!r}")
        if dump_omega_path is not None:
            from . import geometry as _geometry
            morph = _geometry.MorphState(y=np.zeros(cfg.total_atoms),
                                         mode=modes[0],
                                         num_layers=cfg.num_layers)
            stack = _channel.build_channel_stack(morph, geom, cfg)
            _channel.dump_channel_stack(stack, dump_omega_path)
    _write_lines(out_path, lines)
    return out_path


def run_perturbation_sweep(cfg: _scenario.ScenarioConfig, y_tilde_list,
                           num_seeds: int = 20,
                           out_path: str = "perturbation.csv",
                           base_seed: int | None = None) -> str:
    """Predicted and measured single-link flexibility gains across seeds."""
    if base_seed is None:
        base_seed = cfg.rng_seed
    lines = [PERTURB_SCHEMA,
             "y_tilde,predicted_gain,actual_gain,g_sfim,g_dsim"]
    for s in range(num_seeds):
        seed = derive_seed(base_seed, "perturbation", 0, "sfim", "continuous", s)
        geom = _scenario.sample_scenario(cfg, seed)
        phases = _channel.PhaseStack.all_ones(cfg.num_layers, cfg.atoms_per_layer)
        rows = _perturbation.first_order_validate(cfg, geom, phases, y_tilde_list)
        for row in rows:
            lines.append(",".join(_fmt(row[c]) for c in
                                  ("y_tilde", "predicted_gain", "actual_gain",
                                   "g_sfim", "g_dsim")))
    _write_lines(out_path, lines)
    return out_path


def _write_lines(path: str, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
