"""Independent reference implementations used by tests and `validate`.

These deliberately take the slow, literal route (enumeration, brute force,
closed forms) and share no code with the production paths they check.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def qp_projection_oracle(a: np.ndarray, g_mat: np.ndarray, h: np.ndarray,
                         tol: float = 1e-8, max_size: int | None = None,
                         chunk: int = 4096) -> np.ndarray:
    """Projection onto {y : g_mat y >= h} by enumerating active subsets.

    Walks every candidate active set in order of size and returns the first
    KKT-consistent point; for a convex projection that point is the unique
    optimum. Subsets of one size are processed in batched linear solves.
    """
    a = np.asarray(a, dtype=float)
    m, n = g_mat.shape
    if max_size is None:
        max_size = n
    gram_full = g_mat @ g_mat.T
    defect = h - g_mat @ a

    if np.min(-defect) >= -tol:
        return a.copy()

    for size in range(1, max_size + 1):
        combos = itertools.combinations(range(m), size)
        while True:
            block = np.array(list(itertools.islice(combos, chunk)))
            if block.size == 0:
                break
            grams = gram_full[block[:, :, None], block[:, None, :]]
            rhs = defect[block]
            try:
                nus = np.linalg.solve(grams, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                nus = np.empty_like(rhs)
                for j in range(block.shape[0]):
                    nus[j] = np.linalg.lstsq(grams[j], rhs[j], rcond=None)[0]
            ok = nus.min(axis=1) >= -tol
            if not ok.any():
                continue
            rows_ok = block[ok]
            nus_ok = nus[ok]
            # h - G y for every candidate, batched over the block.
            sel = gram_full[:, rows_ok]                        # (m, B, size)
            feas = defect[None, :] - np.einsum("rjs,js->jr", sel, nus_ok)
            cons = np.abs(feas[np.arange(rows_ok.shape[0])[:, None],
                               rows_ok]).max(axis=1) <= tol
            prim = feas.max(axis=1) <= tol
            hits = np.flatnonzero(cons & prim)
            if hits.size:
                j = hits[0]
                return a + g_mat[rows_ok[j]].T @ nus_ok[j]
    raise RuntimeError("active-set enumeration found no KKT point")


def projection_rows(cs) -> tuple[np.ndarray, np.ndarray]:
    """Full coupled constraint rows (G, h) of a ConstraintSystem."""
    n = cs.zeta.size
    eye = np.eye(n)
    g_mat = np.vstack([eye, -eye, np.asarray(cs.delta, dtype=float)])
    h = np.concatenate([np.full(n, -cs.box), np.full(n, -cs.box), cs.zeta])
    return g_mat, h


def naive_cascade(omegas, h, phase_layers) -> np.ndarray:
    """Entry-by-entry evaluation of the cascaded channels (triple loops)."""
    k = h.shape[0]
    m = omegas[0].shape[1]
    out = np.zeros((k, m), dtype=complex)
    for kk in range(k):
        row = h[kk].copy()
        for ell in range(len(omegas), 0, -1):
            om = omegas[ell - 1]
            nxt = np.zeros(om.shape[1], dtype=complex)
            for col in range(om.shape[1]):
                acc = 0.0 + 0.0j
                for n in range(om.shape[0]):
                    acc += row[n] * phase_layers[ell - 1][n] * om[n, col]
                nxt[col] = acc
            row = nxt
        out[kk] = row
    return out


def matched_filter_rate(g_row: np.ndarray, power_budget: float,
                        noise_var: float) -> float:
    """Closed-form single-user optimum: log2(1 + P ||g||^2 / sigma^2)."""
    return math.log1p(power_budget * float(np.linalg.norm(g_row) ** 2)
                      / noise_var) / math.log(2.0)


def exhaustive_phase_search(link: np.ndarray, qset: np.ndarray,
                            thresholds: np.ndarray,
                            noise_vars: np.ndarray) -> tuple[float, np.ndarray]:
    """Best feasible layer response over all |Q|^N configurations."""
    k = link.shape[0]
    n_atoms = link.shape[2]
    noise = np.asarray(noise_vars, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    best_sum, best_idx = -np.inf, None
    for combo in itertools.product(range(qset.size), repeat=n_atoms):
        phi = qset[list(combo)]
        s = link @ phi
        powers = np.abs(s) ** 2
        desired = np.diagonal(powers)
        interf = powers.sum(axis=1) - desired
        rates = np.log1p(desired / (interf + noise)) / np.log(2.0)
        if np.any(rates < thresholds - 1e-9):
            continue
        total = float(rates.sum())
        if total > best_sum:
            best_sum, best_idx = total, np.array(combo)
    if best_idx is None:
        raise RuntimeError("no feasible configuration in exhaustive search")
    return best_sum, best_idx
