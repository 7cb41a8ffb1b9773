"""Scenario configuration, unit conversions, and seeded scenario generation.

All internal quantities are SI (meters, watts, Hz); dB/dBm conversions happen
only at the CLI boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel as _channel
from . import geometry as _geometry
from . import metrics as _metrics

C_LIGHT = 299_792_458.0

MODES = ("rsim", "hsim", "dsim", "sfim")


class DegenerateScenarioError(RuntimeError):
    """Raised when the sampled scenario produces a singular cascaded channel."""


def dbm_to_watt(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0) * 1e-3


def watt_to_dbm(p_watt: float) -> float:
    return 10.0 * math.log10(p_watt / 1e-3)


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and algorithmic parameters of one downlink scenario.

    Fields left at None are derived from the carrier wavelength in
    ``__post_init__`` (areas λ²/4, spacings λ/2, nominal inter-layer gaps 6λ,
    morphing range λ/2, minimum distance 0.62·λ/2). ``nominal_gaps`` and
    ``noise_vars`` accept a scalar, which is broadcast per layer / per user.
    """

    num_tx_antennas: int = 6
    num_layers: int = 6
    atoms_per_layer: int = 36
    atoms_x: int = 6
    num_users: int = 4
    carrier_freq: float = 28e9
    antenna_area: float | None = None
    atom_area: float | None = None
    antenna_spacing: float | None = None
    atom_spacing_x: float | None = None
    atom_spacing_z: float | None = None
    nominal_gaps: tuple | float | None = None
    morph_range: float | None = None
    min_distance: float | None = None
    power_budget: float = dbm_to_watt(25.0)
    noise_vars: tuple | float | None = None
    num_paths: int = 5
    quant_bits: int = 2
    rate_threshold_factor: float = 0.95
    rng_seed: int = 0
    x_offset: float = 0.0
    z_offset: float = 0.0

    def __post_init__(self):
        if self.carrier_freq <= 0:
            raise ValueError("carrier_freq must be positive")
        lam = C_LIGHT / self.carrier_freq

        def _default(name, value):
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)

        _default("antenna_area", lam**2 / 4.0)
        _default("atom_area", lam**2 / 4.0)
        _default("antenna_spacing", lam / 2.0)
        _default("atom_spacing_x", lam / 2.0)
        _default("atom_spacing_z", lam / 2.0)
        _default("morph_range", lam / 2.0)
        _default("min_distance", 0.62 * math.sqrt(lam**2 / 4.0))

        gaps = self.nominal_gaps
        if gaps is None:
            gaps = 6.0 * lam
        if np.isscalar(gaps):
            gaps = (float(gaps),) * self.num_layers
        object.__setattr__(self, "nominal_gaps", tuple(float(g) for g in gaps))

        noise = self.noise_vars
        if noise is None:
            noise = dbm_to_watt(-104.0)
        if np.isscalar(noise):
            noise = (float(noise),) * self.num_users
        object.__setattr__(self, "noise_vars", tuple(float(s) for s in noise))

        self._validate()

    def _validate(self):
        if min(self.num_tx_antennas, self.num_layers, self.atoms_per_layer,
               self.num_users, self.num_paths) < 1:
            raise ValueError("counts must be >= 1")
        if self.atoms_per_layer % self.atoms_x != 0:
            raise ValueError("atoms_x must divide atoms_per_layer")
        if len(self.nominal_gaps) != self.num_layers:
            raise ValueError("nominal_gaps must have one entry per layer")
        if len(self.noise_vars) != self.num_users:
            raise ValueError("noise_vars must have one entry per user")
        if self.power_budget <= 0 or any(s <= 0 for s in self.noise_vars):
            raise ValueError("power_budget and noise variances must be positive")
        if self.morph_range < 0:
            raise ValueError("morph_range must be non-negative")
        if self.min_distance <= 0:
            raise ValueError("min_distance must be positive")
        if any(g <= 0 for g in self.nominal_gaps):
            raise ValueError("nominal gaps must be positive")
        if self.quant_bits < 1:
            raise ValueError("quant_bits must be >= 1")
        if not 0.0 < self.rate_threshold_factor <= 1.0:
            raise ValueError("rate_threshold_factor must be in (0, 1]")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.carrier_freq

    @property
    def total_atoms(self) -> int:
        return self.num_layers * self.atoms_per_layer

    def gaps(self) -> np.ndarray:
        return np.asarray(self.nominal_gaps, dtype=float)

    def noise(self) -> np.ndarray:
        return np.asarray(self.noise_vars, dtype=float)

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class UserGeometry:
    """Per-user multipath geometry: path 0 is line-of-sight."""

    gains: np.ndarray      # (K, I) complex path gains
    azimuth: np.ndarray    # (K, I) departure azimuth [rad]
    elevation: np.ndarray  # (K, I) departure elevation [rad]
    distances: np.ndarray  # (K, I) path distances [m]

    def __post_init__(self):
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("path gains must be finite")
        if np.any(np.abs(self.gains) <= 0):
            raise ValueError("path gains must be nonzero")

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]

    @property
    def num_paths(self) -> int:
        return self.gains.shape[1]


# NLoS paths carry a -10 dB power penalty on top of free-space loss.
_NLOS_PENALTY_AMP = math.sqrt(0.1)


def _free_space_amp(dist: np.ndarray, lam: float) -> np.ndarray:
    return lam / (4.0 * np.pi * dist)


def sample_scenario(cfg: ScenarioConfig, seed: int) -> UserGeometry:
    """Draw user/scatterer geometry and path gains for one realization.

    LoS distances ~ U[95, 105] m with angles ~ U[-pi/4, pi/4]; each NLoS path
    has distance ~ U[55, 105] m and angles ~ U[-pi/2, -pi/4]. Deterministic
    for a given (cfg, seed).
    """
    rng = np.random.default_rng(seed)
    k, n_paths = cfg.num_users, cfg.num_paths
    lam = cfg.wavelength

    d_los = rng.uniform(95.0, 105.0, size=k)
    az_los = rng.uniform(-np.pi / 4, np.pi / 4, size=k)
    el_los = rng.uniform(-np.pi / 4, np.pi / 4, size=k)

    n_nlos = n_paths - 1
    d_nlos = rng.uniform(55.0, 105.0, size=(k, n_nlos))
    az_nlos = rng.uniform(-np.pi / 2, -np.pi / 4, size=(k, n_nlos))
    el_nlos = rng.uniform(-np.pi / 2, -np.pi / 4, size=(k, n_nlos))
    chi = rng.uniform(0.0, 2.0 * np.pi, size=(k, n_nlos))

    distances = np.concatenate([d_los[:, None], d_nlos], axis=1)
    azimuth = np.concatenate([az_los[:, None], az_nlos], axis=1)
    elevation = np.concatenate([el_los[:, None], el_nlos], axis=1)

    gains = np.empty((k, n_paths), dtype=complex)
    gains[:, 0] = _free_space_amp(d_los, lam)
    if n_nlos:
        gains[:, 1:] = (_free_space_amp(d_nlos, lam)
                        * _NLOS_PENALTY_AMP * np.exp(1j * chi))

    return UserGeometry(gains=gains, azimuth=azimuth,
                        elevation=elevation, distances=distances)


@dataclass
class SystemState:
    """One joint design point: morphing, layer responses, precoder, thresholds."""

    morph: "_geometry.MorphState"
    phases: "_channel.PhaseStack"
    precoder: np.ndarray        # (M, K) complex
    thresholds: np.ndarray      # (K,) bits/s/Hz


def zero_forcing_precoder(g: np.ndarray, power_budget: float) -> np.ndarray:
    """ZF on the cascaded channel, columns scaled to equal per-user power.

    The returned matrix satisfies ||W||_F^2 == power_budget.
    """
    k, m = g.shape
    if k > m:
        raise DegenerateScenarioError(
            f"zero-forcing needs num_users <= num_tx_antennas (K={k}, M={m})")
    gram = g @ g.conj().T
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > 1e12:
        raise DegenerateScenarioError("cascaded channel matrix is singular")
    w = g.conj().T @ np.linalg.inv(gram)
    norms = np.linalg.norm(w, axis=0)
    if np.any(norms == 0):
        raise DegenerateScenarioError("zero-forcing produced a null column")
    return w / norms * math.sqrt(power_budget / k)


def init_state(cfg: ScenarioConfig, geom: UserGeometry,
               mode: str = "sfim") -> SystemState:
    """Initial design: zero morphing, all-ones responses, scaled ZF precoder.

    Rate thresholds are set from the initial SINRs scaled by
    ``rate_threshold_factor``, which guarantees strict initial QoS slack.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    morph = _geometry.MorphState(
        y=np.zeros(cfg.total_atoms), mode=mode, num_layers=cfg.num_layers)
    qset = _channel.quantization_set(cfg.quant_bits)
    phases = _channel.PhaseStack.all_ones(
        cfg.num_layers, cfg.atoms_per_layer, quant_set=qset)
    stack = _channel.build_channel_stack(morph, geom, cfg)
    g = _channel.cascade(stack, phases)
    w = zero_forcing_precoder(g, cfg.power_budget)
    report = _metrics.sinr_and_rates(g, w, cfg.noise())
    thresholds = np.log2(1.0 + cfg.rate_threshold_factor * report.sinr)
    return SystemState(morph=morph, phases=phases, precoder=w,
                       thresholds=thresholds)
