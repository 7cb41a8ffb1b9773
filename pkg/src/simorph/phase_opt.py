"""Per-layer meta-atom response optimization over the quantized unit circle.

The cascade is split around the target layer into effective user rows and
effective precoder columns, so every link power is a quadratic form in that
layer's response vector alone. Discrete mode runs exhaustive per-atom
coordinate descent on the true objective (each candidate is a rank-one
update); continuous mode runs SCA rounds on the standard convex surrogate
with the modulus relaxed to |phi_n| <= 1 and re-normalized afterwards.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import ipm
from . import metrics

logger = logging.getLogger(__name__)

# Matches the QoS violation tolerance of the penalty machinery; the
# beamformer pins the weakest user exactly on its threshold, so a tighter
# slop would misread solver-level wobble as a violation.
_QOS_SLOP = 1e-6


@dataclass
class LayerSurrogate:
    """Cascade split at one layer: g_k^T w_i == g_tilde_k . (phi * w_tilde_i)."""

    layer: int
    g_tilde: np.ndarray     # (K, N) user rows pulled through layers above
    w_tilde: np.ndarray     # (N, K) precoder columns pushed through layers below
    phi_prev: np.ndarray    # (N,) linearization point

    @property
    def link_tensor(self) -> np.ndarray:
        """(K, K, N) coefficients: s[k, i] = sum_n link[k, i, n] * phi[n]."""
        return self.g_tilde[:, None, :] * self.w_tilde.T[None, :, :]


def build_layer_surrogate(ell: int, stack, phases, precoder) -> LayerSurrogate:
    n_layers = stack.num_layers
    rows = stack.h
    for l in range(n_layers, ell, -1):
        rows = (rows * phases.layer(l)[None, :]) @ stack.omega(l)
    e = precoder
    for l in range(1, ell):
        e = phases.layer(l)[:, None] * (stack.omega(l) @ e)
    w_tilde = stack.omega(ell) @ e
    return LayerSurrogate(layer=ell, g_tilde=rows, w_tilde=w_tilde,
                          phi_prev=phases.layer(ell).copy())


def layer_rates(link: np.ndarray, phi: np.ndarray,
                noise_vars: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-user rates and sum rate for a candidate layer response."""
    s = link @ phi
    powers = np.abs(s) ** 2
    desired = np.diagonal(powers)
    interf = powers.sum(axis=1) - desired
    rates = np.log1p(desired / (interf + np.asarray(noise_vars))) / np.log(2.0)
    return rates, float(rates.sum())


def selection_matrix(indices: np.ndarray, num_levels: int) -> np.ndarray:
    """(N, U) one-hot encoding of quantization choices."""
    b = np.zeros((indices.size, num_levels), dtype=int)
    b[np.arange(indices.size), indices] = 1
    return b


def selection_to_values(b: np.ndarray, qset: np.ndarray) -> np.ndarray:
    return b @ qset


def _coordinate_sweep(link: np.ndarray, candidates: np.ndarray,
                      thresholds: np.ndarray, noise_vars: np.ndarray,
                      start_indices: np.ndarray,
                      max_passes: int) -> np.ndarray:
    """Cyclic per-atom exhaustive descent over a fixed candidate set.

    Every candidate is scored on the true sum rate through rank-one updates;
    candidates that break a QoS threshold are rejected, and if nothing
    (including the current value) is feasible the current value is kept.
    Ties break to the lowest candidate index, so runs are reproducible.
    """
    k = link.shape[0]
    n_atoms = link.shape[2]
    noise = np.asarray(noise_vars, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    idx = np.asarray(start_indices, dtype=int).copy()
    phi = candidates[idx]
    diag = np.arange(k)

    for _ in range(max_passes):
        s = link @ phi
        changed = False
        for n in range(n_atoms):
            base = s - link[:, :, n] * phi[n]
            cand = base[None, :, :] + candidates[:, None, None] * link[None, :, :, n]
            powers = np.abs(cand) ** 2
            desired = powers[:, diag, diag]
            interf = powers.sum(axis=2) - desired
            rates = np.log1p(desired / (interf + noise[None, :])) / np.log(2.0)
            sums = rates.sum(axis=1)
            feasible = np.all(rates >= thresholds[None, :] - _QOS_SLOP, axis=1)
            if feasible.any():
                best = int(np.argmax(np.where(feasible, sums, -np.inf)))
                if best != idx[n]:
                    idx[n] = best
                    changed = True
            phi[n] = candidates[idx[n]]
            s = base + link[:, :, n] * phi[n]
        if not changed:
            break
    return idx


def optimize_layer_discrete(surr: LayerSurrogate, qset: np.ndarray,
                            thresholds: np.ndarray, noise_vars: np.ndarray,
                            start_indices: np.ndarray,
                            max_passes: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom exhaustive descent over the quantization set.

    Never lowers the sum rate of a threshold-feasible input, and the output
    responses are exact members of the quantization set (index-backed).
    """
    idx = _coordinate_sweep(surr.link_tensor, qset, thresholds, noise_vars,
                            start_indices, max_passes)
    return qset[idx], idx


def _build_layer_program(link: np.ndarray, phi_lin: np.ndarray,
                         thresholds: np.ndarray, noise_vars: np.ndarray):
    """Convex round program in [phi_re, phi_im, nu, rho] at one linearization.

    ``link`` and ``noise_vars`` are expected pre-normalized by the noise floor
    so the Newton systems stay well conditioned.
    """
    k = link.shape[0]
    n_atoms = link.shape[2]
    ln2 = math.log(2.0)

    nu0 = 2 * n_atoms
    pairs = [(i, kk) for kk in range(k) for i in range(k) if i != kk]
    rho_index = {p: nu0 + k * k + j for j, p in enumerate(pairs)}
    n = nu0 + k * k + len(pairs)

    def nu_idx(i, kk):
        return nu0 + kk * k + i

    # Real/imag rows of sum_n link[k, i, n] phi_n over [phi_re, phi_im].
    u_re = np.zeros((k, k, n))
    u_im = np.zeros((k, k, n))
    for kk in range(k):
        for i in range(k):
            v = link[kk, i]
            u_re[i, kk, :n_atoms] = v.real
            u_re[i, kk, n_atoms:nu0] = -v.imag
            u_im[i, kk, :n_atoms] = v.imag
            u_im[i, kk, n_atoms:nu0] = v.real

    s_lin = link @ phi_lin

    builder = ipm.ProgramBuilder(n)
    denoms = np.empty(k)
    lin = np.zeros(n)
    for kk in range(k):
        a = np.zeros(n)
        for i in range(k):
            a[nu_idx(i, kk)] = 1.0
        builder.add_log(a, noise_vars[kk], alpha=1.0 / ln2)
        denoms[kk] = sum(abs(s_lin[kk, i]) ** 2 for i in range(k)
                         if i != kk) + noise_vars[kk]
        for i in range(k):
            if i != kk:
                lin[rho_index[(i, kk)]] -= 1.0 / (ln2 * denoms[kk])
    builder.add_linear(lin)

    # Unit-disc relaxation of each atom's modulus.
    for atom in range(n_atoms):
        s_rows = np.zeros((2, n))
        s_rows[0, atom] = 1.0
        s_rows[1, n_atoms + atom] = 1.0
        builder.add_sumsq_con(s_rows, np.zeros(2), None, -1.0)

    # Interference epigraphs.
    for (i, kk), col in rho_index.items():
        s_rows = np.stack([u_re[i, kk], u_im[i, kk]])
        g_lin = np.zeros(n)
        g_lin[col] = -1.0
        builder.add_sumsq_con(s_rows, np.zeros(2), g_lin, 0.0)

    # Affine underestimators of the link powers at the linearization point.
    for kk in range(k):
        for i in range(k):
            sp = s_lin[kk, i]
            row = np.zeros(n)
            row[nu_idx(i, kk)] = 1.0
            row -= 2.0 * (sp.real * u_re[i, kk] + sp.imag * u_im[i, kk])
            builder.add_affine_con(row, abs(sp) ** 2)

    # Conservative QoS rows.
    for kk in range(k):
        thr = thresholds[kk]
        if thr <= 0:
            continue
        factor = 2.0**thr - 1.0
        row = np.zeros(n)
        row[nu_idx(kk, kk)] = -1.0
        for i in range(k):
            if i != kk:
                row[rho_index[(i, kk)]] = factor
        builder.add_affine_con(row, factor * noise_vars[kk])

    return builder.build(), (nu0, nu_idx, rho_index, n)


def _layer_start(link, phi_lin, noise_vars, layout):
    nu0, nu_idx, rho_index, n = layout
    k = link.shape[0]
    n_atoms = link.shape[2]
    phi0 = (1.0 - 1e-6) * phi_lin
    x = np.zeros(n)
    x[:n_atoms] = phi0.real
    x[n_atoms:nu0] = phi0.imag
    s0 = link @ phi0
    powers = np.abs(s0) ** 2
    for kk in range(k):
        floor = 1e-9 * noise_vars[kk]
        for i in range(k):
            j = powers[kk, i]
            x[nu_idx(i, kk)] = 0.99 * j if j > floor else -floor
            if i != kk:
                x[rho_index[(i, kk)]] = 1.01 * j + floor
    return x


_POLISH_LEVELS = 128


def optimize_layer_continuous(surr: LayerSurrogate, thresholds: np.ndarray,
                              noise_vars: np.ndarray, max_rounds: int = 5,
                              tol: float = 1e-4,
                              polish_passes: int = 2) -> np.ndarray:
    """SCA rounds with unit-circle re-normalization and a monotone safeguard.

    A round is rejected (and iteration stops) if the re-normalized response
    lowers the true sum rate or worsens the worst QoS violation. A per-atom
    fine-grid descent on the true objective then polishes the result; the
    grid resolution (2pi/128) makes the residual loss against the exact
    continuous optimum negligible at link-rate scales.
    """
    noise_vars = np.asarray(noise_vars, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    phi = surr.phi_prev.copy()
    link = surr.link_tensor
    n_atoms = phi.size
    rates, best_sum = layer_rates(link, phi, noise_vars)
    best_viol = float(np.max(metrics.qos_violations(rates, thresholds),
                             initial=0.0))
    scale = float(np.min(noise_vars))
    link_n = link / math.sqrt(scale)
    noise_n = noise_vars / scale

    for _ in range(max_rounds):
        prog, layout = _build_layer_program(link_n, phi, thresholds, noise_n)
        x0 = _layer_start(link_n, phi, noise_n, layout)
        if np.any(prog.constraint_values(x0) >= 0) or np.any(prog.log_args(x0) <= 0):
            break
        try:
            x_opt, _ = ipm.solve(prog, x0, gap_tol=1e-8)
        except ipm.IpmError:
            break
        raw = x_opt[:n_atoms] + 1j * x_opt[n_atoms:2 * n_atoms]
        mags = np.abs(raw)
        cand = np.where(mags > 1e-12, raw / np.where(mags > 1e-12, mags, 1.0), phi)
        rates_c, sum_c = layer_rates(link, cand, noise_vars)
        viol_c = float(np.max(metrics.qos_violations(rates_c, thresholds),
                              initial=0.0))
        if sum_c < best_sum - 1e-12 or viol_c > best_viol + 1e-12:
            break
        gain = sum_c - best_sum
        phi, best_sum, best_viol = cand, sum_c, min(best_viol, viol_c)
        if gain <= tol:
            break

    if polish_passes > 0:
        grid = np.exp(2j * np.pi * np.arange(_POLISH_LEVELS) / _POLISH_LEVELS)
        # Sweep from the grid snap of the SCA iterate; adopt the result only
        # if it beats the SCA iterate without worsening the QoS state.
        start = np.round(np.angle(phi) / (2 * np.pi) * _POLISH_LEVELS).astype(int)
        start %= _POLISH_LEVELS
        idx = _coordinate_sweep(link, grid, thresholds, noise_vars, start,
                                polish_passes)
        rates_p, sum_p = layer_rates(link, grid[idx], noise_vars)
        viol_p = float(np.max(metrics.qos_violations(rates_p, thresholds),
                              initial=0.0))
        if sum_p > best_sum and viol_p <= best_viol + _QOS_SLOP:
            phi = grid[idx]
    return phi
