"""Meta-atom/antenna coordinates, morphing constraints, and projections.

The transmit array sits on the z-axis at y = 0; layer ell's rigid reference
plane sits at y = sum of the first ell nominal gaps. Every layer shares the
same (x, z) atom grid, so the inter-layer in-plane offsets depend only on the
atom indices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MODES = ("rsim", "hsim", "dsim", "sfim")


class InfeasibleConstraintsError(RuntimeError):
    """The morphing constraint polytope is empty (min_distance too large)."""


@dataclass
class MorphState:
    """Stacked morphing vector of length N*L, ordered layer-major."""

    y: np.ndarray
    mode: str = "sfim"
    num_layers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        self.y = np.asarray(self.y, dtype=float)
        if self.y.size % self.num_layers != 0:
            raise ValueError("morphing vector length must be divisible by num_layers")

    @property
    def atoms_per_layer(self) -> int:
        return self.y.size // self.num_layers

    def by_layer(self) -> np.ndarray:
        """View of the morphing vector as an (L, N) array."""
        return self.y.reshape(self.num_layers, self.atoms_per_layer)

    def layer(self, ell: int) -> np.ndarray:
        return self.by_layer()[ell - 1]

    def copy_with(self, y: np.ndarray) -> "MorphState":
        return MorphState(y=np.asarray(y, dtype=float).copy(),
                          mode=self.mode, num_layers=self.num_layers)


def antenna_coords(cfg) -> np.ndarray:
    """(M, 3) coordinates of the transmit array elements."""
    m = np.arange(cfg.num_tx_antennas)
    out = np.zeros((cfg.num_tx_antennas, 3))
    out[:, 2] = m * cfg.antenna_spacing
    return out


def atom_grid(cfg) -> tuple[np.ndarray, np.ndarray]:
    """(x, z) in-plane coordinates shared by every layer's atoms, row-major."""
    n = np.arange(cfg.atoms_per_layer)
    x = cfg.x_offset + cfg.atom_spacing_x * np.mod(n, cfg.atoms_x)
    z = cfg.z_offset + cfg.atom_spacing_z * (n // cfg.atoms_x)
    return x, z


def layer_reference_y(cfg, ell: int) -> float:
    """y-coordinate of layer ell's rigid reference plane."""
    return float(np.sum(cfg.gaps()[:ell]))


def atom_coords(ell: int, n: int, morph: MorphState, cfg) -> tuple[float, float, float]:
    """Global coordinates of atom n (1-based) in layer ell under morphing."""
    if not 1 <= ell <= cfg.num_layers or not 1 <= n <= cfg.atoms_per_layer:
        raise IndexError(f"atom index out of range: layer {ell}, atom {n}")
    x, z = atom_grid(cfg)
    y = layer_reference_y(cfg, ell) + morph.layer(ell)[n - 1]
    return float(x[n - 1]), float(y), float(z[n - 1])


def inplane_offsets_sq(cfg, ell: int) -> np.ndarray:
    """Squared (x, z) offsets between layer ell receivers and their sources.

    For ell = 1 the sources are the transmit antennas; otherwise the
    previous layer's atoms (aligned grids, so the matrix is index-symmetric).
    """
    xr, zr = atom_grid(cfg)
    if ell == 1:
        ant = antenna_coords(cfg)
        xt, zt = ant[:, 0], ant[:, 2]
    else:
        xt, zt = xr, zr
    return (xr[:, None] - xt[None, :]) ** 2 + (zr[:, None] - zt[None, :]) ** 2


def axial_gaps(cfg, ell: int, morph: MorphState) -> np.ndarray:
    """Morphed axial (y) gaps between layer ell receivers and their sources."""
    gap0 = cfg.gaps()[ell - 1]
    y_rx = morph.layer(ell)
    if ell == 1:
        return gap0 + y_rx[:, None] + np.zeros((1, cfg.num_tx_antennas))
    y_tx = morph.layer(ell - 1)
    return gap0 + y_rx[:, None] - y_tx[None, :]


def distance_and_cos(ell: int, n: int, m: int, morph: MorphState,
                     cfg) -> tuple[float, float]:
    """Euclidean distance and obliquity cosine for one propagation pair.

    Both use the morphed axial gap; the cosine is the gap over the distance.
    Indices are 1-based; for ell = 1, m indexes a transmit antenna.
    """
    rho = inplane_offsets_sq(cfg, ell)[n - 1, m - 1]
    gap = axial_gaps(cfg, ell, morph)[n - 1, m - 1]
    d = float(np.hypot(np.sqrt(rho), gap))
    return d, gap / d


@dataclass
class ConstraintSystem:
    """Linearized minimum-distance system: delta @ y >= zeta, |y| <= box.

    ``delta`` has an identity block for the first layer followed by
    difference rows (+1 on an atom, -1 on the same atom one layer below).
    """

    delta: np.ndarray   # (N*L, N*L) entries in {-1, 0, 1}
    zeta: np.ndarray    # (N*L,) meters
    box: float          # morphing range, meters
    num_layers: int
    atoms_per_layer: int
    mode: str = "sfim"

    def zeta_by_layer(self) -> np.ndarray:
        return self.zeta.reshape(self.num_layers, self.atoms_per_layer)

    def violation(self, y: np.ndarray) -> float:
        """Largest constraint violation of y in meters (0 if feasible)."""
        box_viol = float(np.max(np.abs(y) - self.box, initial=0.0))
        lin_viol = float(np.max(self.zeta - self.delta @ y, initial=0.0))
        return max(0.0, box_viol, lin_viol)


def build_constraints(cfg, mode: str = "sfim") -> ConstraintSystem:
    """Assemble the minimum-distance constraint system for a scenario.

    First layer: y_n >= sqrt(max(0, eps^2 - min_m rho_nm)) - gap_1.
    Later layers: y_n[ell] - y_n[ell-1] >= sqrt(max(0, eps^2 - rho_nn)) - gap_ell.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    n_atoms, n_layers = cfg.atoms_per_layer, cfg.num_layers
    eps2 = cfg.min_distance**2
    gaps = cfg.gaps()

    zeta = np.empty((n_layers, n_atoms))
    rho1 = inplane_offsets_sq(cfg, 1)
    zeta[0] = np.sqrt(np.maximum(0.0, eps2 - rho1.min(axis=1))) - gaps[0]
    for ell in range(2, n_layers + 1):
        rho_diag = np.diag(inplane_offsets_sq(cfg, ell))
        zeta[ell - 1] = np.sqrt(np.maximum(0.0, eps2 - rho_diag)) - gaps[ell - 1]

    total = n_layers * n_atoms
    delta = np.zeros((total, total), dtype=np.int8)
    delta[:n_atoms, :n_atoms] = np.eye(n_atoms, dtype=np.int8)
    for ell in range(2, n_layers + 1):
        for n in range(n_atoms):
            row = (ell - 1) * n_atoms + n
            delta[row, row] = 1
            delta[row, row - n_atoms] = -1

    cs = ConstraintSystem(delta=delta, zeta=zeta.ravel(), box=cfg.morph_range,
                          num_layers=n_layers, atoms_per_layer=n_atoms,
                          mode=mode)
    _check_chain_feasible(cs)
    return cs


def _check_chain_feasible(cs: ConstraintSystem, tol: float = 1e-12):
    """Raise if the per-atom chain lower bounds climb above the box."""
    zeta = cs.zeta_by_layer()
    lb = np.maximum(-cs.box, zeta[0])
    if np.any(lb > cs.box + tol):
        raise InfeasibleConstraintsError("first-layer distance bound exceeds the box")
    for ell in range(1, cs.num_layers):
        lb = np.maximum(-cs.box, lb + zeta[ell])
        if np.any(lb > cs.box + tol):
            raise InfeasibleConstraintsError(
                f"distance chain infeasible at layer {ell + 1}")


def project_polyhedron(a: np.ndarray, g_mat: np.ndarray, h: np.ndarray,
                       tol: float = 1e-11, max_updates: int = 1000) -> np.ndarray:
    """Euclidean projection of a onto {y : g_mat @ y >= h}.

    Dual active-set scheme: start at the unconstrained optimum, repeatedly add
    the most violated row and drop working-set rows with negative multipliers.
    Exact (up to round-off) and finite for non-degenerate small systems.
    """
    y = a.astype(float).copy()
    work: list[int] = []
    for _ in range(max_updates):
        resid = h - g_mat @ y
        worst = int(np.argmax(resid))
        if resid[worst] <= tol:
            return y
        work.append(worst)
        while work:
            gw = g_mat[work]
            gram = gw @ gw.T
            rhs = h[work] - gw @ a
            nu = np.linalg.lstsq(gram, rhs, rcond=None)[0]
            if nu.min() >= -tol:
                y = a + gw.T @ nu
                break
            work.pop(int(np.argmin(nu)))
        else:
            y = a.copy()
    else:
        raise RuntimeError("projection active-set did not converge")
    return y


def _chain_rows(n_layers: int, box: float,
                zeta_chain: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Constraint rows (G, h) of one atom's chain: box plus difference rows."""
    eye = np.eye(n_layers)
    diff = np.eye(n_layers)
    diff[np.arange(1, n_layers), np.arange(n_layers - 1)] = -1.0
    g_mat = np.vstack([eye, -eye, diff])
    h = np.concatenate([np.full(n_layers, -box), np.full(n_layers, -box),
                        zeta_chain])
    return g_mat, h


def project_feasible(y_raw: np.ndarray, cs: ConstraintSystem) -> np.ndarray:
    """Project a raw morphing vector onto the box + distance polytope.

    The system decouples across atoms (each difference row touches a single
    atom column), so the projection is solved as N independent L-dimensional
    chain QPs. The whole-system oracle in ``oracles`` checks this claim.
    """
    _check_chain_feasible(cs)
    n_layers, n_atoms = cs.num_layers, cs.atoms_per_layer
    raw = np.asarray(y_raw, dtype=float).reshape(n_layers, n_atoms)
    zeta = cs.zeta_by_layer()

    out = np.clip(raw, -cs.box, cs.box)
    # Fast path: clipping alone already satisfies the difference rows.
    diff_ok = np.all(out[0] >= zeta[0] - 1e-13)
    if diff_ok and n_layers > 1:
        diff_ok = np.all(np.diff(out, axis=0) >= zeta[1:] - 1e-13)
    if diff_ok:
        return out.ravel()

    for n in range(n_atoms):
        chain_ok = out[0, n] >= zeta[0, n] - 1e-13 and np.all(
            np.diff(out[:, n]) >= zeta[1:, n] - 1e-13)
        if chain_ok:
            continue
        g_mat, h = _chain_rows(n_layers, cs.box, zeta[:, n])
        out[:, n] = project_polyhedron(raw[:, n], g_mat, h)
    return out.ravel()


def project_mode_vector(vec: np.ndarray, mode: str,
                        num_layers: int) -> np.ndarray:
    """Orthogonal projection of a stacked vector onto a mode's subspace.

    Used both for iterates (the architecture pattern itself) and for ascent
    directions, so each mode's step is normalized within its own subspace.
    """
    y = np.asarray(vec, dtype=float).reshape(num_layers, -1).copy()
    if mode == "rsim":
        y[:] = 0.0
    elif mode == "dsim":
        y[:] = y.mean(axis=1, keepdims=True)
    elif mode == "hsim" and num_layers > 2:
        y[1:-1] = 0.0
    return y.ravel()


def project_mode(state: MorphState) -> MorphState:
    """Apply the architecture pattern: average (dsim), zero (rsim/hsim interior)."""
    return state.copy_with(project_mode_vector(state.y, state.mode,
                                               state.num_layers))


def _project_dsim_exact(y_raw: np.ndarray, cs: ConstraintSystem) -> np.ndarray:
    """Exact projection onto the feasible set intersected with equal-per-layer.

    Reduces to a single chain over the L per-layer scalars with the tightest
    zeta per layer; the objective weight N is uniform and drops out.
    """
    n_layers, n_atoms = cs.num_layers, cs.atoms_per_layer
    means = np.asarray(y_raw, dtype=float).reshape(n_layers, n_atoms).mean(axis=1)
    zeta_chain = cs.zeta_by_layer().max(axis=1)
    g_mat, h = _chain_rows(n_layers, cs.box, zeta_chain)
    scal = project_polyhedron(means, g_mat, h)
    return np.repeat(scal, n_atoms)


def _project_hsim_exact(y_raw: np.ndarray, cs: ConstraintSystem) -> np.ndarray:
    """Exact projection with interior layers pinned at zero.

    With the interior fixed, the first and final layers decouple into
    per-atom interval clips (L >= 3); L <= 2 falls back to the free chain.
    """
    n_layers, n_atoms = cs.num_layers, cs.atoms_per_layer
    if n_layers <= 2:
        return project_feasible(y_raw, cs)
    zeta = cs.zeta_by_layer()
    if np.any(zeta[2:-1] > 0):
        raise InfeasibleConstraintsError("interior rigid layers violate the distance bound")
    raw = np.asarray(y_raw, dtype=float).reshape(n_layers, n_atoms)
    out = np.zeros_like(raw)
    lo1 = np.maximum(-cs.box, zeta[0])
    hi1 = np.minimum(cs.box, -zeta[1])
    if np.any(lo1 > hi1):
        raise InfeasibleConstraintsError("first-layer interval empty under hsim")
    out[0] = np.clip(raw[0], lo1, hi1)
    lo_l = np.maximum(-cs.box, zeta[-1])
    if np.any(lo_l > cs.box):
        raise InfeasibleConstraintsError("final-layer interval empty under hsim")
    out[-1] = np.clip(raw[-1], lo_l, cs.box)
    return out.ravel()


def project_feasible_mode(y_raw: np.ndarray, cs: ConstraintSystem, mode: str,
                          num_layers: int, tol: float = 1e-10) -> MorphState:
    """Convex projection, then mode projection, with an exact fallback.

    Mode averaging/zeroing can re-break the difference rows; when it does,
    the point is re-projected exactly inside the mode subspace so that both
    the feasibility and the pattern invariants hold.
    """
    state = MorphState(y=project_feasible(y_raw, cs), mode=mode,
                       num_layers=num_layers)
    state = project_mode(state)
    if cs.violation(state.y) <= tol:
        return state
    if mode == "dsim":
        y = _project_dsim_exact(y_raw, cs)
    elif mode == "hsim":
        y = _project_hsim_exact(y_raw, cs)
    elif mode == "rsim":
        raise InfeasibleConstraintsError("zero morphing violates the distance bounds")
    else:
        y = project_feasible(state.y, cs)
    state = state.copy_with(y)
    if cs.violation(state.y) > 1e-8:
        raise InfeasibleConstraintsError("mode projection could not restore feasibility")
    return state
