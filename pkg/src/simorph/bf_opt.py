"""Transmit beamformer optimization via successive convex approximation.

Each round maximizes a concave surrogate of the sum rate in (W, tau, varpi):
tau lower-bounds each link power through an affine underestimator at the
previous precoder, varpi upper-bounds the interference powers through their
convex epigraphs, and the interference log is linearized. The QoS rows bound
the desired-signal tau against the interference varpi, which conservatively
implies the true per-user rate constraints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import ipm
from . import metrics

logger = logging.getLogger(__name__)

_TAU_FLOOR = 1e-9          # relative to noise, keeps log domains open
_POWER_SHRINK = 0.999


@dataclass
class BfSubproblem:
    """Data of one SCA round: linearization point and derived coefficients."""

    w_prev: np.ndarray          # (M, K)
    s_prev: np.ndarray          # (K, K) entries g_k^T w_i
    denoms: np.ndarray          # (K,) linearized interference-plus-noise
    thresholds: np.ndarray
    power_budget: float
    noise_vars: np.ndarray
    g: np.ndarray               # (K, M)


@dataclass
class BfRoundInfo:
    stalled: bool
    kkt_residual: float
    used_feasibility_phase: bool
    sum_rate: float


def _layout(m: int, k: int):
    """Variable layout: [wr, wi, tau (K*K), varpi (K*(K-1))]."""
    n_w = 2 * m * k
    tau0 = n_w
    pairs = [(i, kk) for kk in range(k) for i in range(k) if i != kk]
    varpi_index = {p: tau0 + k * k + j for j, p in enumerate(pairs)}
    n = tau0 + k * k + len(pairs)
    return n_w, tau0, varpi_index, n


def _tau_idx(tau0: int, k: int, i: int, kk: int) -> int:
    return tau0 + kk * k + i


def _link_rows(g: np.ndarray, n: int, m: int, k: int):
    """Real/imag linear forms of g_k^T w_i over the stacked variable vector."""
    u_re = np.zeros((k, k, n))
    u_im = np.zeros((k, k, n))
    mk = m * k
    for kk in range(k):
        gr, gi = g[kk].real, g[kk].imag
        for i in range(k):
            cols = np.arange(m) * k + i
            u_re[i, kk, cols] = gr
            u_re[i, kk, mk + cols] = -gi
            u_im[i, kk, cols] = gi
            u_im[i, kk, mk + cols] = gr
    return u_re, u_im


def _pack_w(w: np.ndarray) -> np.ndarray:
    return np.concatenate([w.real.ravel(), w.imag.ravel()])


def _unpack_w(x: np.ndarray, m: int, k: int) -> np.ndarray:
    mk = m * k
    return (x[:mk] + 1j * x[mk:2 * mk]).reshape(m, k)


def make_subproblem(w_prev: np.ndarray, g: np.ndarray, noise_vars: np.ndarray,
                    thresholds: np.ndarray, power_budget: float) -> BfSubproblem:
    s_prev = g @ w_prev
    powers = np.abs(s_prev) ** 2
    denoms = powers.sum(axis=1) - np.diag(powers) + np.asarray(noise_vars)
    return BfSubproblem(w_prev=w_prev, s_prev=s_prev, denoms=denoms,
                        thresholds=np.asarray(thresholds, dtype=float),
                        power_budget=power_budget,
                        noise_vars=np.asarray(noise_vars, dtype=float), g=g)


def surrogate_value(sub: BfSubproblem, w: np.ndarray, tau: np.ndarray,
                    varpi: np.ndarray) -> float:
    """Linearized surrogate objective at explicit slack values (for tests)."""
    k = sub.s_prev.shape[0]
    ln2 = math.log(2.0)
    val = 0.0
    for kk in range(k):
        val += math.log(tau[:, kk].sum() + sub.noise_vars[kk]) / ln2
        val -= math.log(sub.denoms[kk]) / ln2
        extra = sum(varpi[i, kk] - np.abs(sub.s_prev[kk, i]) ** 2
                    for i in range(k) if i != kk)
        val -= extra / (ln2 * sub.denoms[kk])
    return val


def _build_program(sub: BfSubproblem, qos: str = "hard"):
    """Assemble the SCA round program.

    ``qos`` selects hard conservative QoS rows, none at all, or a
    feasibility-phase variant whose objective is an extra min-slack variable
    added to every QoS row.
    """
    g = sub.g
    k, m = g.shape[0], g.shape[1]
    n_w, tau0, varpi_index, n = _layout(m, k)
    slack = 1 if qos == "slack" else 0
    width = n + slack
    u_re, u_im = _link_rows(g, width, m, k)
    ln2 = math.log(2.0)

    builder = ipm.ProgramBuilder(width)

    if qos == "slack":
        obj = np.zeros(width)
        obj[n] = 1.0
        builder.add_linear(obj)
        # Keep the log domains of the eventual main solve open.
        for kk in range(k):
            row = np.zeros(width)
            for i in range(k):
                row[_tau_idx(tau0, k, i, kk)] = -1.0
            builder.add_affine_con(row, -0.999 * sub.noise_vars[kk])
    else:
        # sum_k log2(sum_i tau_{i,k} + sigma_k^2) minus the linearized
        # interference terms (constants dropped).
        lin = np.zeros(width)
        for kk in range(k):
            a = np.zeros(width)
            for i in range(k):
                a[_tau_idx(tau0, k, i, kk)] = 1.0
            builder.add_log(a, sub.noise_vars[kk], alpha=1.0 / ln2)
            for i in range(k):
                if i != kk:
                    lin[varpi_index[(i, kk)]] -= 1.0 / (ln2 * sub.denoms[kk])
        builder.add_linear(lin)

    # Power ball over the precoder coordinates.
    s_pow = np.zeros((n_w, width))
    s_pow[np.arange(n_w), np.arange(n_w)] = 1.0
    builder.add_sumsq_con(s_pow, None, None, -sub.power_budget)

    # Interference epigraphs |g_k^T w_i|^2 <= varpi_{i,k}.
    for (i, kk), col in varpi_index.items():
        g_lin = np.zeros(width)
        g_lin[col] = -1.0
        builder.add_sumsq_con(np.stack([u_re[i, kk], u_im[i, kk]]),
                              None, g_lin, 0.0)

    # Affine underestimators tau_{i,k} <= 2 Re{s_prev^* (g_k^T w_i)} - |s_prev|^2.
    for kk in range(k):
        for i in range(k):
            sp = sub.s_prev[kk, i]
            row = np.zeros(width)
            row[_tau_idx(tau0, k, i, kk)] = 1.0
            row -= 2.0 * (sp.real * u_re[i, kk] + sp.imag * u_im[i, kk])
            builder.add_affine_con(row, abs(sp) ** 2)

    # Conservative QoS rows (zero thresholds are vacuous and skipped).
    if qos != "none":
        for kk in range(k):
            thr = sub.thresholds[kk]
            if thr <= 0:
                continue
            factor = 2.0**thr - 1.0
            row = np.zeros(width)
            row[_tau_idx(tau0, k, kk, kk)] = -1.0
            if qos == "slack":
                row[n] = 1.0
            for i in range(k):
                if i != kk:
                    row[varpi_index[(i, kk)]] = factor
            builder.add_affine_con(row, factor * sub.noise_vars[kk])

    return builder.build(), (n_w, tau0, varpi_index, n, m, k)


def _initial_point(sub: BfSubproblem, layout) -> np.ndarray:
    n_w, tau0, varpi_index, n, m, k = layout
    x = np.zeros(n)
    w = sub.w_prev
    x[:n_w] = _pack_w(w)
    powers = np.abs(sub.s_prev) ** 2
    for kk in range(k):
        floor = _TAU_FLOOR * sub.noise_vars[kk]
        for i in range(k):
            j = powers[kk, i]
            x[_tau_idx(tau0, k, i, kk)] = 0.99 * j if j > floor else -floor
            if i != kk:
                x[varpi_index[(i, kk)]] = 1.01 * j + floor
    return x


def _qos_margin(sub: BfSubproblem, x: np.ndarray, layout) -> float:
    n_w, tau0, varpi_index, n, m, k = layout
    margin = np.inf
    for kk in range(k):
        thr = sub.thresholds[kk]
        if thr <= 0:
            continue
        factor = 2.0**thr - 1.0
        interf = sum(x[varpi_index[(i, kk)]] for i in range(k) if i != kk)
        margin = min(margin, x[_tau_idx(tau0, k, kk, kk)]
                     - factor * (interf + sub.noise_vars[kk]))
    return margin


def _feasibility_phase(sub: BfSubproblem, x0: np.ndarray, layout):
    """Maximize the minimum QoS slack to recover a strictly feasible start."""
    n = layout[3]
    prog, _ = _build_program(sub, qos="slack")
    noise_scale = float(np.min(sub.noise_vars))
    x_ext = np.append(x0, _qos_margin(sub, x0, layout) - noise_scale)
    x_ext, _ = ipm.solve(prog, x_ext, gap_tol=1e-6)
    return x_ext[:n], x_ext[n]


def bf_sca_round(w_prev: np.ndarray, g: np.ndarray, noise_vars: np.ndarray,
                 thresholds: np.ndarray,
                 power_budget: float) -> tuple[np.ndarray, BfRoundInfo]:
    """One convex SCA round; never returns a precoder with a lower sum rate.

    Solved internally in noise-normalized units (unit power ball, noise near
    one) so the Newton systems stay well conditioned at physical scales.
    """
    noise_vars = np.asarray(noise_vars, dtype=float)
    scale = float(np.min(noise_vars))
    g_n = g * math.sqrt(power_budget / scale)
    noise_n = noise_vars / scale
    return _bf_sca_round_normalized(w_prev, g, noise_vars, thresholds,
                                    power_budget, g_n, noise_n)


def _bf_sca_round_normalized(w_prev, g, noise_vars, thresholds, power_budget,
                             g_n, noise_n) -> tuple[np.ndarray, BfRoundInfo]:
    w_start = w_prev / math.sqrt(power_budget)
    norm_sq = np.linalg.norm(w_start) ** 2
    if norm_sq >= 1.0 - 1e-9:
        w_start = w_start * math.sqrt(_POWER_SHRINK / norm_sq)
    sub = make_subproblem(w_start, g_n, noise_n, thresholds, 1.0)
    prog, layout = _build_program(sub)
    x0 = _initial_point(sub, layout)

    used_phase1 = False
    if np.any(sub.thresholds > 0) and _qos_margin(sub, x0, layout) <= 0:
        used_phase1 = True
        try:
            x0, slack = _feasibility_phase(sub, x0, layout)
        except ipm.IpmError:
            slack = -1.0
        if slack <= 1e-12:
            rep = metrics.sinr_and_rates(g, w_prev, noise_vars)
            logger.warning("beamformer QoS rows infeasible; keeping previous precoder")
            return w_prev, BfRoundInfo(True, np.inf, True, rep.sum_rate)

    try:
        x_opt, info = ipm.solve(prog, x0, gap_tol=1e-8)
    except ipm.IpmError:
        rep = metrics.sinr_and_rates(g, w_prev, noise_vars)
        return w_prev, BfRoundInfo(True, np.inf, used_phase1, rep.sum_rate)

    m = g.shape[1]
    k = g.shape[0]
    w_new = _unpack_w(x_opt, m, k) * math.sqrt(power_budget)
    prev_rate = metrics.sinr_and_rates(g, w_prev, noise_vars).sum_rate
    new_rate = metrics.sinr_and_rates(g, w_new, noise_vars).sum_rate
    if new_rate < prev_rate - 1e-12:
        return w_prev, BfRoundInfo(True, info.kkt_residual, used_phase1, prev_rate)
    return w_new, BfRoundInfo(False, info.kkt_residual, used_phase1, new_rate)


def run_bf_opt(w0: np.ndarray, g: np.ndarray, noise_vars: np.ndarray,
               thresholds: np.ndarray, power_budget: float,
               max_rounds: int = 20, tol: float = 1e-4) -> tuple[np.ndarray, dict]:
    """Iterate SCA rounds until the sum rate stops improving."""
    w = w0
    rate = metrics.sinr_and_rates(g, w, np.asarray(noise_vars)).sum_rate
    trace = [rate]
    stalled = False
    for _ in range(max_rounds):
        w, info = bf_sca_round(w, g, noise_vars, thresholds, power_budget)
        trace.append(info.sum_rate)
        if info.stalled:
            stalled = True
            break
        if abs(trace[-1] - trace[-2]) <= tol:
            break
    return w, {"stalled": stalled, "rounds": len(trace) - 1, "trace": trace}
