"""Channel construction: inter-layer propagation, user channels, cascade.

Each inter-layer entry is the near-field coefficient p*q*r with
p = area * axial_gap / d^2 (obliquity and spreading), q = 1/(2*pi*d) - j/lambda
(near-field correction), and r = exp(j*2*pi*d/lambda) (propagation phase).
Phases are reduced mod 2*pi before exponentiation to limit round-off at
large d/lambda.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry


def quantization_set(bits: int) -> np.ndarray:
    """The 2^bits unit-circle responses, starting at 1."""
    u = 2**bits
    return np.exp(2j * np.pi * np.arange(u) / u)


@dataclass
class PhaseStack:
    """Unit-modulus responses of every atom, layer-major, plus quantization data.

    In quantized mode ``indices`` selects entries of ``quant_set`` and
    ``values`` is derived from it, so discrete responses never drift.
    """

    values: np.ndarray            # (N*L,) complex, |.| == 1
    num_layers: int
    quant_set: np.ndarray | None = None
    indices: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.size % self.num_layers != 0:
            raise ValueError("phase vector length must be divisible by num_layers")
        if np.any(np.abs(np.abs(self.values) - 1.0) > 1e-9):
            raise ValueError("responses must be unit-modulus")

    @property
    def atoms_per_layer(self) -> int:
        return self.values.size // self.num_layers

    def layer(self, ell: int) -> np.ndarray:
        n = self.atoms_per_layer
        return self.values[(ell - 1) * n: ell * n]

    def layer_indices(self, ell: int) -> np.ndarray | None:
        if self.indices is None:
            return None
        n = self.atoms_per_layer
        return self.indices[(ell - 1) * n: ell * n]

    @classmethod
    def all_ones(cls, num_layers: int, atoms_per_layer: int,
                 quant_set: np.ndarray | None = None) -> "PhaseStack":
        total = num_layers * atoms_per_layer
        indices = None
        if quant_set is not None:
            indices = np.zeros(total, dtype=int)
        return cls(values=np.ones(total, dtype=complex), num_layers=num_layers,
                   quant_set=quant_set, indices=indices)

    def with_layer(self, ell: int, values: np.ndarray,
                   indices: np.ndarray | None = None) -> "PhaseStack":
        """New stack with layer ell replaced."""
        n = self.atoms_per_layer
        new_vals = self.values.copy()
        new_idx = None if self.indices is None else self.indices.copy()
        if indices is not None:
            if self.quant_set is None:
                raise ValueError("indices given but no quantization set attached")
            values = self.quant_set[indices]
            if new_idx is None:
                new_idx = np.zeros(self.values.size, dtype=int)
            new_idx[(ell - 1) * n: ell * n] = indices
        elif new_idx is not None:
            # Continuous replacement invalidates the stored indices.
            new_idx = None
        new_vals[(ell - 1) * n: ell * n] = values
        return PhaseStack(values=new_vals, num_layers=self.num_layers,
                          quant_set=self.quant_set, indices=new_idx)


@dataclass
class ChannelStack:
    """Materialized propagation matrices and user channels for one morphing."""

    omegas: tuple        # omegas[0]: (N, M); omegas[ell-1]: (N, N) for ell >= 2
    h: np.ndarray        # (K, N) final-layer-to-user channels

    def omega(self, ell: int) -> np.ndarray:
        return self.omegas[ell - 1]

    @property
    def num_layers(self) -> int:
        return len(self.omegas)


def _rs_entries(rho: np.ndarray, gap: np.ndarray, area: float,
                lam: float) -> np.ndarray:
    d2 = rho + gap**2
    d = np.sqrt(d2)
    if np.any(d <= 0):
        raise ValueError("propagation distance must be positive")
    p = area * gap / d2
    q = 1.0 / (2.0 * np.pi * d) - 1j / lam
    r = np.exp(2j * np.pi * np.mod(d / lam, 1.0))
    return p * q * r


def build_omega(ell: int, morph: geometry.MorphState, cfg) -> np.ndarray:
    """Propagation matrix into layer ell (from the array if ell == 1)."""
    if not 1 <= ell <= cfg.num_layers:
        raise IndexError(f"layer {ell} out of range")
    rho = geometry.inplane_offsets_sq(cfg, ell)
    gap = geometry.axial_gaps(cfg, ell, morph)
    area = cfg.antenna_area if ell == 1 else cfg.atom_area
    return _rs_entries(rho, gap, area, cfg.wavelength)


def omega_gap_derivative(ell: int, morph: geometry.MorphState,
                         cfg) -> np.ndarray:
    """Entrywise derivative of layer ell's matrix w.r.t. its axial gap.

    The derivative w.r.t. a receive-side morph is this value; w.r.t. a
    transmit-side morph it is the negative (the gap is receive minus source).
    """
    rho = geometry.inplane_offsets_sq(cfg, ell)
    gap = geometry.axial_gaps(cfg, ell, morph)
    area = cfg.antenna_area if ell == 1 else cfg.atom_area
    lam = cfg.wavelength
    d2 = rho + gap**2
    d = np.sqrt(d2)
    p = area * gap / d2
    q = 1.0 / (2.0 * np.pi * d) - 1j / lam
    r = np.exp(2j * np.pi * np.mod(d / lam, 1.0))
    dp = area * (rho - gap**2) / d2**2
    dq = -gap / (2.0 * np.pi * d * d2)
    dr = 1j * (2.0 * np.pi / lam) * (gap / d) * r
    return dp * q * r + p * dq * r + p * q * dr


def _steering_phase_base(cfg, azimuth: np.ndarray,
                         elevation: np.ndarray) -> np.ndarray:
    """Reference-plane steering argument per (path..., atom), in meters."""
    u = np.arange(cfg.atoms_per_layer)
    col = cfg.atom_spacing_x * np.mod(u, cfg.atoms_x)
    row = cfg.atom_spacing_z * (u // cfg.atoms_x)
    az = azimuth[..., None]
    el = elevation[..., None]
    return col * np.cos(az) * np.sin(el) + row * np.cos(el)


def build_user_channels(morph: geometry.MorphState, geom, cfg) -> np.ndarray:
    """(K, N) multipath channels from the final layer to every user."""
    lam = cfg.wavelength
    y_last = morph.layer(cfg.num_layers)
    psi = _steering_phase_base(cfg, geom.azimuth, geom.elevation)  # (K, I, N)
    morph_term = (y_last[None, None, :]
                  * np.sin(geom.azimuth)[..., None]
                  * np.sin(geom.elevation)[..., None])
    steering = np.exp(2j * np.pi * (psi + morph_term) / lam)
    return np.einsum("ki,kin->kn", geom.gains, steering)


def build_user_channel(k: int, morph: geometry.MorphState, geom,
                       cfg) -> np.ndarray:
    """Channel of user k (1-based)."""
    return build_user_channels(morph, geom, cfg)[k - 1]


def user_channel_derivative(morph: geometry.MorphState, geom,
                            cfg) -> np.ndarray:
    """(K, N) entrywise derivative of h w.r.t. the final layer's morphs.

    Entry (k, u) is d h_k[u] / d y_u of the last layer; off-diagonal
    dependencies are zero.
    """
    lam = cfg.wavelength
    y_last = morph.layer(cfg.num_layers)
    psi = _steering_phase_base(cfg, geom.azimuth, geom.elevation)
    dirsin = np.sin(geom.azimuth) * np.sin(geom.elevation)       # (K, I)
    morph_term = y_last[None, None, :] * dirsin[..., None]
    steering = np.exp(2j * np.pi * (psi + morph_term) / lam)
    scale = 1j * 2.0 * np.pi / lam
    return scale * np.einsum("ki,kin->kn", geom.gains * dirsin, steering)


def build_channel_stack(morph: geometry.MorphState, geom, cfg) -> ChannelStack:
    omegas = tuple(build_omega(ell, morph, cfg)
                   for ell in range(1, cfg.num_layers + 1))
    h = build_user_channels(morph, geom, cfg)
    return ChannelStack(omegas=omegas, h=h)


def cascade(stack: ChannelStack, phases: PhaseStack) -> np.ndarray:
    """(K, M) cascaded channels g: rows g_k^T through all layers."""
    if phases.num_layers != stack.num_layers:
        raise ValueError("phase stack and channel stack disagree on layer count")
    rows = stack.h
    for ell in range(stack.num_layers, 0, -1):
        rows = (rows * phases.layer(ell)[None, :]) @ stack.omega(ell)
    return rows


def dump_channel_stack(stack: ChannelStack, path) -> None:
    """Columnar text dump of the propagation matrices for cross-validation."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("layer,n,m,re,im\n")
        for ell in range(1, stack.num_layers + 1):
            om = stack.omega(ell)
            for n in range(om.shape[0]):
                for m in range(om.shape[1]):
                    fh.write(f"{ell},{n + 1},{m + 1},"
                             f"{om[n, m].real!r},{om[n, m].imag!r}\n")
