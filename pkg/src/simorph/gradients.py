"""Analytic morphing gradients of the link powers, rates, and penalized objective.

Perturbing one atom's axial position touches exactly one row of its own
layer's propagation matrix, one column of the next layer's matrix, and (for
the final layer) one entry of each user channel. The gradient therefore
reduces, per layer, to a handful of dense products against cached prefix and
suffix cascade products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as _channel
from . import metrics as _metrics


@dataclass
class GradWorkspace:
    """Cached cascade splits for one (morph, phases, precoder) point.

    ``forward[ell - 1]`` is the precoder pushed through layers < ell,
    ``through[ell - 1]`` additionally through layer ell's propagation.
    ``back_rows[ell - 1]`` is the user rows pulled down to just above layer
    ell (a row per user over layer ell's atoms; for ell = L it is h itself)
    and ``back_phased[ell - 1]`` the same rows with layer ell's responses
    applied.
    """

    morph: object
    phases: _channel.PhaseStack
    precoder: np.ndarray
    stack: _channel.ChannelStack
    geom: object
    cfg: object
    forward: list           # (dim_{ell-1}, K) per layer
    through: list           # (N, K) per layer
    back_rows: list         # (K, N) per layer
    back_phased: list       # (K, N) per layer
    g: np.ndarray           # (K, M) cascaded channels
    s: np.ndarray           # (K, K) inner products g_k^T w_i
    dh: np.ndarray          # (K, N) final-layer steering derivatives

    @property
    def num_layers(self) -> int:
        return self.stack.num_layers

    def recompose(self, ell: int) -> np.ndarray:
        """(K, K) inner products rebuilt from the split at layer ell."""
        return self.back_phased[ell - 1] @ self.through[ell - 1]


def build_workspace(morph, phases: _channel.PhaseStack, precoder: np.ndarray,
                    stack: _channel.ChannelStack, geom, cfg) -> GradWorkspace:
    n_layers = stack.num_layers
    forward, through = [], []
    e = precoder
    for ell in range(1, n_layers + 1):
        forward.append(e)
        p = stack.omega(ell) @ e
        through.append(p)
        e = phases.layer(ell)[:, None] * p

    back_rows = [None] * n_layers
    back_phased = [None] * n_layers
    u = stack.h
    back_rows[n_layers - 1] = u
    for ell in range(n_layers, 0, -1):
        v = u * phases.layer(ell)[None, :]
        back_phased[ell - 1] = v
        u = v @ stack.omega(ell)
        if ell >= 2:
            back_rows[ell - 2] = u

    g = u
    s = g @ precoder
    dh = _channel.user_channel_derivative(morph, geom, cfg)
    return GradWorkspace(morph=morph, phases=phases, precoder=precoder,
                         stack=stack, geom=geom, cfg=cfg, forward=forward,
                         through=through, back_rows=back_rows,
                         back_phased=back_phased, g=g, s=s, dh=dh)


def grad_J_all(ws: GradWorkspace) -> np.ndarray:
    """(K, K, N*L) array of d|g_k^T w_i|^2 / d y, layer-major coordinates."""
    cfg, morph = ws.cfg, ws.morph
    n_layers = ws.num_layers
    n_atoms = cfg.atoms_per_layer
    k = ws.s.shape[0]
    grads = np.empty((k, k, n_layers * n_atoms))

    for ell in range(1, n_layers + 1):
        d_own = _channel.omega_gap_derivative(ell, morph, cfg)
        d1 = d_own @ ws.forward[ell - 1]                      # (N, K)
        if ell < n_layers:
            # Next layer's matrix: gap decreases with this layer's morph.
            d_next = -_channel.omega_gap_derivative(ell + 1, morph, cfg)
            row_all = ws.back_phased[ell] @ d_next            # (K, N)
            a_all = ws.back_rows[ell - 1]                     # (K, N)
        else:
            row_all = ws.dh
            a_all = ws.stack.h
        phi = ws.phases.layer(ell)
        inner = phi[None, :, None] * (row_all[:, :, None] * ws.through[ell - 1][None, :, :]
                                      + a_all[:, :, None] * d1[None, :, :])
        block = 2.0 * np.real(np.conj(inner) * ws.s[:, None, :])   # (K, N, Ki)
        grads[:, :, (ell - 1) * n_atoms: ell * n_atoms] = block.transpose(0, 2, 1)
    return grads


def grad_J(k: int, i: int, ws: GradWorkspace) -> np.ndarray:
    """Gradient of one link power |g_k^T w_i|^2 (1-based user/stream indices)."""
    return grad_J_all(ws)[k - 1, i - 1]


def grad_rates(grads: np.ndarray, report: _metrics.RateReport,
               noise_vars: np.ndarray) -> np.ndarray:
    """(K, N*L) per-user rate gradients from the link-power gradients."""
    k = grads.shape[0]
    noise = np.asarray(noise_vars, dtype=float)
    total = report.signal_powers.sum(axis=1) + noise
    diag = np.diagonal(report.signal_powers)
    interf = total - diag
    grad_total = grads.sum(axis=1)
    grad_diag = grads[np.arange(k), np.arange(k)]
    grad_interf = grad_total - grad_diag
    return (grad_total / total[:, None]
            - grad_interf / interf[:, None]) / np.log(2.0)


def grad_sum_rate(ws: GradWorkspace, report: _metrics.RateReport) -> np.ndarray:
    grads = grad_J_all(ws)
    return grad_rates(grads, report, ws.cfg.noise()).sum(axis=0)


def grad_aug(ws: GradWorkspace, report: _metrics.RateReport,
             thresholds: np.ndarray, mu: np.ndarray,
             omega: float) -> np.ndarray:
    """Gradient of the penalized objective: residual-weighted rate gradients."""
    grads = grad_J_all(ws)
    per_user = grad_rates(grads, report, ws.cfg.noise())
    resid = np.asarray(thresholds) - report.rates + np.asarray(mu)
    weights = 1.0 + resid / omega
    return (weights[:, None] * per_user).sum(axis=0)


def fd_oracle(f, y0: np.ndarray, h: float) -> np.ndarray:
    """Central finite differences of a scalar function, coordinate by coordinate."""
    if h <= 0:
        raise ValueError("step must be positive")
    y0 = np.asarray(y0, dtype=float)
    out = np.empty_like(y0)
    for j in range(y0.size):
        yp = y0.copy()
        ym = y0.copy()
        yp[j] += h
        ym[j] -= h
        out[j] = (f(yp) - f(ym)) / (2.0 * h)
    return out
