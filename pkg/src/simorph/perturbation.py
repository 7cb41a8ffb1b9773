"""First-order flexibility gains for the single-antenna, single-user case.

Around the rigid configuration, the received power is linearized in the
morphing vector. Full flexibility extracts the l1-norm of the gradient times
the morphing range; whole-layer translation extracts the per-layer gradient
sums instead, which is never larger (triangle inequality).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channel as _channel
from . import geometry as _geometry
from . import gradients as _gradients


@dataclass
class PerturbReport:
    power_at_zero: float        # W
    grad: np.ndarray            # (N*L,) W/m
    gain_sfim: float            # W, predicted
    gain_dsim: float            # W, predicted
    y_sfim: np.ndarray
    y_dsim: np.ndarray
    actual_sfim: float          # W, measured at the chosen morphing
    actual_dsim: float


def _require_siso(cfg):
    if cfg.num_users != 1 or cfg.num_tx_antennas != 1:
        raise ValueError("perturbation analysis is defined for M = K = 1 only")


def received_power(y: np.ndarray, phases, geom, cfg,
                   transmit_power: float) -> float:
    """P_r = P_t |g|^2 for the single-link cascade at morphing y."""
    _require_siso(cfg)
    morph = _geometry.MorphState(y=np.asarray(y, dtype=float), mode="sfim",
                                 num_layers=cfg.num_layers)
    stack = _channel.build_channel_stack(morph, geom, cfg)
    g = _channel.cascade(stack, phases)
    return transmit_power * float(np.abs(g[0, 0]) ** 2)


def power_gradient_at_zero(phases, geom, cfg,
                           transmit_power: float) -> tuple[float, np.ndarray]:
    _require_siso(cfg)
    morph = _geometry.MorphState(y=np.zeros(cfg.total_atoms), mode="sfim",
                                 num_layers=cfg.num_layers)
    stack = _channel.build_channel_stack(morph, geom, cfg)
    w = np.array([[math.sqrt(transmit_power)]], dtype=complex)
    ws = _gradients.build_workspace(morph, phases, w, stack, geom, cfg)
    grads = _gradients.grad_J_all(ws)
    p0 = float(np.abs(ws.s[0, 0]) ** 2)
    return p0, grads[0, 0]


def perturb_gains(cfg, geom, phases, y_tilde: float | None = None,
                  transmit_power: float | None = None) -> PerturbReport:
    """Predicted and measured flexibility gains at one morphing range.

    Sign ties (zero gradient entries) resolve to +1. The chosen morphings
    stay inside the box by construction; distance constraints are assumed
    slack and are not projected here.
    """
    _require_siso(cfg)
    if y_tilde is None:
        y_tilde = cfg.morph_range
    if transmit_power is None:
        transmit_power = cfg.power_budget
    p0, grad = power_gradient_at_zero(phases, geom, cfg, transmit_power)

    signs = np.where(grad >= 0.0, 1.0, -1.0)
    y_sfim = y_tilde * signs
    gain_sfim = y_tilde * float(np.sum(np.abs(grad)))

    layer_sums = grad.reshape(cfg.num_layers, cfg.atoms_per_layer).sum(axis=1)
    layer_signs = np.where(layer_sums >= 0.0, 1.0, -1.0)
    y_dsim = np.repeat(y_tilde * layer_signs, cfg.atoms_per_layer)
    gain_dsim = y_tilde * float(np.sum(np.abs(layer_sums)))

    assert np.all(np.abs(y_sfim) <= y_tilde + 1e-15)
    actual_sfim = received_power(y_sfim, phases, geom, cfg, transmit_power) - p0
    actual_dsim = received_power(y_dsim, phases, geom, cfg, transmit_power) - p0
    return PerturbReport(power_at_zero=p0, grad=grad, gain_sfim=gain_sfim,
                         gain_dsim=gain_dsim, y_sfim=y_sfim, y_dsim=y_dsim,
                         actual_sfim=actual_sfim, actual_dsim=actual_dsim)


def first_order_validate(cfg, geom, phases, y_tilde_list,
                         transmit_power: float | None = None) -> list[dict]:
    """Prediction-vs-measurement table across morphing ranges."""
    rows = []
    for y_tilde in y_tilde_list:
        rep = perturb_gains(cfg, geom, phases, y_tilde=float(y_tilde),
                            transmit_power=transmit_power)
        denom = abs(rep.actual_sfim) if rep.actual_sfim != 0 else np.inf
        rows.append({
            "y_tilde": float(y_tilde),
            "predicted_gain": rep.gain_sfim,
            "actual_gain": rep.actual_sfim,
            "rel_error": abs(rep.gain_sfim - rep.actual_sfim) / denom,
            "g_sfim": rep.gain_sfim,
            "g_dsim": rep.gain_dsim,
            "actual_dsim": rep.actual_dsim,
        })
    return rows
