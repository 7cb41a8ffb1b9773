"""SINR, rates, QoS violations, and the penalized objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RateReport:
    signal_powers: np.ndarray   # (K, K), entry (k, i) = |g_k^T w_i|^2 [W]
    sinr: np.ndarray            # (K,)
    rates: np.ndarray           # (K,) bits/s/Hz
    sum_rate: float             # bits/s/Hz


def sinr_and_rates(g: np.ndarray, w: np.ndarray,
                   noise_vars: np.ndarray) -> RateReport:
    """Per-user SINR and rates for cascaded channels g (K, M) and precoder w (M, K)."""
    s = g @ w
    powers = np.abs(s) ** 2
    desired = np.diag(powers).copy()
    interference = powers.sum(axis=1) - desired
    sinr = desired / (interference + np.asarray(noise_vars, dtype=float))
    rates = np.log1p(sinr) / np.log(2.0)
    return RateReport(signal_powers=powers, sinr=sinr, rates=rates,
                      sum_rate=float(rates.sum()))


def qos_violations(rates: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Per-user rate shortfall, zero where the threshold is met."""
    return np.maximum(0.0, np.asarray(thresholds) - np.asarray(rates))


def penalty_term(rates: np.ndarray, thresholds: np.ndarray,
                 mu: np.ndarray) -> float:
    """Sum of squared QoS residuals with slacks."""
    resid = np.asarray(thresholds) - np.asarray(rates) + np.asarray(mu)
    return float(np.sum(resid**2))


def augmented_objective(report: RateReport, thresholds: np.ndarray,
                        mu: np.ndarray, omega: float) -> float:
    """Sum rate minus the weighted squared-residual penalty.

    Always <= the sum rate, with equality iff every residual is zero.
    """
    if omega <= 0:
        raise ValueError("penalty weight must be positive")
    return report.sum_rate - penalty_term(report.rates, thresholds, mu) / (2.0 * omega)
