"""Command-line interface: sweeps, convergence traces, perturbation, validation.

Scenario fields are settable from a YAML config file (`scenario:` section)
and individually overridable by flags. Power-like flags take dBm; everything
else is SI. Report subcommands write a CSV and, unless --no-plot is given, a
PNG figure next to it.
"""

from __future__ import annotations

import argparse
import os
import sys

import yaml

from . import harness, plotting, validate
from .scenario import ScenarioConfig, dbm_to_watt

_INT_FIELDS = ("num_tx_antennas", "num_layers", "atoms_per_layer", "atoms_x",
               "num_users", "num_paths", "quant_bits", "rng_seed")
_FLOAT_FIELDS = ("carrier_freq", "antenna_area", "atom_area",
                 "antenna_spacing", "atom_spacing_x", "atom_spacing_z",
                 "morph_range", "min_distance", "power_budget",
                 "rate_threshold_factor", "x_offset", "z_offset")


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("scenario", "ScenarioConfig overrides (SI units)")
    for name in _INT_FIELDS:
        group.add_argument(f"--{name.replace('_', '-')}", type=int, default=None)
    for name in _FLOAT_FIELDS:
        group.add_argument(f"--{name.replace('_', '-')}", type=float, default=None)
    group.add_argument("--nominal-gaps", type=str, default=None,
                       help="scalar or comma list of per-layer gaps [m]")
    group.add_argument("--noise-vars", type=str, default=None,
                       help="scalar or comma list of per-user noise powers [W]")
    group.add_argument("--power-budget-dbm", type=float, default=None,
                       help="power budget in dBm (overrides --power-budget)")
    group.add_argument("--noise-dbm", type=float, default=None,
                       help="per-user noise power in dBm (overrides --noise-vars)")
    parser.add_argument("--config", type=str, default=None,
                        help="YAML config file with a scenario: section")


def _scalar_or_tuple(text: str):
    parts = [float(p) for p in text.split(",") if p != ""]
    return parts[0] if len(parts) == 1 else tuple(parts)


def build_config(args, defaults: dict | None = None) -> ScenarioConfig:
    fields: dict = dict(defaults or {})
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        fields.update(loaded.get("scenario", {}))
    for name in _INT_FIELDS + _FLOAT_FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            fields[name] = val
    if args.nominal_gaps is not None:
        fields["nominal_gaps"] = _scalar_or_tuple(args.nominal_gaps)
    if args.noise_vars is not None:
        fields["noise_vars"] = _scalar_or_tuple(args.noise_vars)
    if args.power_budget_dbm is not None:
        fields["power_budget"] = dbm_to_watt(args.power_budget_dbm)
    if args.noise_dbm is not None:
        fields["noise_vars"] = dbm_to_watt(args.noise_dbm)
    if isinstance(fields.get("nominal_gaps"), list):
        fields["nominal_gaps"] = tuple(fields["nominal_gaps"])
    if isinstance(fields.get("noise_vars"), list):
        fields["noise_vars"] = tuple(fields["noise_vars"])
    return ScenarioConfig(**fields)


def _parse_values(text: str, cfg: ScenarioConfig) -> list:
    """Comma-separated numbers; a 'lam' suffix scales by the wavelength."""
    out = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token.endswith("lam"):
            out.append(float(token[:-3]) * cfg.wavelength)
        elif token.isdigit() or (token.startswith("-") and token[1:].isdigit()):
            out.append(int(token))
        else:
            out.append(float(token))
    return out


def _png_path(csv_path: str) -> str:
    stem, _ = os.path.splitext(csv_path)
    return stem + ".png"


def _cmd_sweep(args) -> int:
    cfg = build_config(args)
    values = _parse_values(args.values, cfg)
    spec = harness.SweepSpec(
        variable=args.variable, values=values,
        modes=tuple(args.modes.split(",")), phase_mode=args.phase_mode,
        num_realizations=args.realizations, base=cfg, out_path=args.out,
        base_seed=args.seed, workers=args.workers,
        max_outer=args.max_outer, eps_outer=args.eps_outer)
    path = harness.run_sweep(spec)
    print(f"wrote {path}")
    if not args.no_plot:
        print(f"wrote {plotting.plot_sweep(path, _png_path(path))}")
    return 0


def _cmd_converge(args) -> int:
    cfg = build_config(args)
    path = harness.run_convergence(
        cfg, modes=args.modes.split(","),
        phase_modes=args.phase_modes.split(","), out_path=args.out,
        seed=args.seed, max_outer=args.max_outer, eps_outer=args.eps_outer,
        dump_omega_path=args.dump_omega)
    print(f"wrote {path}")
    if not args.no_plot and args.max_outer > 0:
        print(f"wrote {plotting.plot_convergence(path, _png_path(path))}")
    return 0


def _cmd_perturb(args) -> int:
    cfg = build_config(args, defaults=dict(num_tx_antennas=1, num_users=1,
                                           num_layers=4))
    ranges = _parse_values(args.morph_ranges, cfg)
    path = harness.run_perturbation_sweep(cfg, [float(v) for v in ranges],
                                          num_seeds=args.seeds,
                                          out_path=args.out,
                                          base_seed=args.seed)
    print(f"wrote {path}")
    if not args.no_plot:
        print(f"wrote {plotting.plot_perturbation(path, _png_path(path))}")
    return 0


def _cmd_validate(args) -> int:
    del args
    return 0 if validate.run_all() else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="simorph",
        description="Flexible stacked-metasurface downlink simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="Monte-Carlo sweep over one variable")
    p_sweep.add_argument("--variable", required=True,
                         choices=harness.SWEEP_VARIABLES)
    p_sweep.add_argument("--values", required=True,
                         help="comma list; 'lam' suffix scales by wavelength")
    p_sweep.add_argument("--modes", default="rsim,hsim,dsim,sfim")
    p_sweep.add_argument("--phase-mode", default="continuous",
                         choices=("continuous", "discrete"))
    p_sweep.add_argument("--realizations", type=int, default=20)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--max-outer", type=int, default=100)
    p_sweep.add_argument("--eps-outer", type=float, default=1e-3)
    p_sweep.add_argument("--out", default="sweep.csv")
    p_sweep.add_argument("--no-plot", action="store_true")
    _add_scenario_flags(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_conv = sub.add_parser("converge", help="per-iteration sum-rate traces")
    p_conv.add_argument("--modes", default="rsim,hsim,dsim,sfim")
    p_conv.add_argument("--phase-modes", default="continuous,discrete")
    p_conv.add_argument("--seed", type=int, default=None)
    p_conv.add_argument("--max-outer", type=int, default=100)
    p_conv.add_argument("--eps-outer", type=float, default=1e-3)
    p_conv.add_argument("--out", default="convergence.csv")
    p_conv.add_argument("--dump-omega", default=None,
                        help="also dump the propagation matrices to this path")
    p_conv.add_argument("--no-plot", action="store_true")
    _add_scenario_flags(p_conv)
    p_conv.set_defaults(func=_cmd_converge)

    p_pert = sub.add_parser("perturb", help="single-link flexibility gains")
    p_pert.add_argument("--morph-ranges", default="0.01lam,0.05lam,0.1lam,0.2lam")
    p_pert.add_argument("--seeds", type=int, default=20)
    p_pert.add_argument("--seed", type=int, default=None)
    p_pert.add_argument("--out", default="perturbation.csv")
    p_pert.add_argument("--no-plot", action="store_true")
    _add_scenario_flags(p_pert)
    p_pert.set_defaults(func=_cmd_perturb)

    p_val = sub.add_parser("validate", help="run the oracle cross-check suites")
    p_val.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
