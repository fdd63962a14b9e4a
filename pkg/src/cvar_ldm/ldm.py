"""Layered-division-multiplexing rate model.

A broadcast transmitter superposes ``M`` layers.  Layer ``m`` is allocated
a power share ``lam[m]`` and a gain increment ``s[m]``; a receiver with
channel gain ``g`` decodes layers ``1..m`` exactly when ``g`` reaches the
decoding threshold ``T_m = s[1] + ... + s[m]``.  While decoding layer
``m``, the not-yet-cancelled layers ``m+1..M`` act as interference, so the
layer carries

    rho_m = log2(1 + T_m lam_m P / (1 + T_m I_m P)),   I_m = sum_{i>m} lam_i

bits per channel use, and a receiver at gain ``g`` gets the sum of
``rho_m`` over the layers whose thresholds it clears.

The hard indicator makes the total rate a step function of the
parameters, so the optimizers work on a smoothed version where each
indicator ``1{g >= T_m}`` is replaced by the logistic ``sigma(c (g -
T_m))``.  Everything here computes internally in nats and converts to
bits at the public boundary.

The private helpers accept parameter arrays of shape ``(..., M)`` and are
safe to evaluate on complex inputs; the meta-learning module relies on
this to push complex-step directional derivatives through the exact same
code path that produces the real values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ParameterError

__all__ = [
    "LayerAllocation",
    "RiskSpec",
    "interference",
    "layer_rate",
    "layer_rates",
    "cumulative_rates",
    "total_rate",
    "surrogate_rate",
    "surrogate_rate_grad",
]

_LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class LayerAllocation:
    """Gain increments ``s`` and power shares ``lam`` for the ``M`` layers."""

    s: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        lam = np.asarray(self.lam, dtype=float)
        if s.ndim != 1 or lam.shape != s.shape or s.size == 0:
            raise ParameterError("s and lam must be 1-D arrays of equal positive length")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(lam))):
            raise ParameterError("allocation entries must be finite")
        if np.any(s < 0) or s.sum() <= 0:
            raise ParameterError("gain increments must be nonnegative with positive sum")
        if np.any(lam < 0) or lam.sum() > 1.0 + 1e-9:
            raise ParameterError("power shares must be nonnegative and sum to at most 1")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "lam", lam)
        s.setflags(write=False)
        lam.setflags(write=False)

    @property
    def m(self) -> int:
        return int(self.s.size)

    @property
    def thresholds(self) -> np.ndarray:
        """Decoding thresholds ``T_m``, the prefix sums of ``s``."""
        return np.cumsum(self.s)

    def to_dict(self) -> dict:
        return {"s": [float(v) for v in self.s], "lambda": [float(v) for v in self.lam]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "LayerAllocation":
        try:
            return cls(s=np.array(d["s"], dtype=float), lam=np.array(d["lambda"], dtype=float))
        except (TypeError, KeyError) as exc:
            raise ParameterError(f"allocation JSON needs 's' and 'lambda' lists: {d!r}") from exc

    @classmethod
    def from_json(cls, text_or_path) -> "LayerAllocation":
        p = Path(str(text_or_path))
        text = p.read_text() if p.suffix == ".json" and p.exists() else str(text_or_path)
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParameterError(f"invalid allocation JSON: {exc}") from exc


@dataclass(frozen=True)
class RiskSpec:
    """Evaluation context: risk level, transmit power, and smoothing.

    beta is the tail fraction of receivers the risk functionals average
    over (beta = 1 recovers the plain mean); power is the linear transmit
    SNR ``P``; c is the logistic sharpness of the smoothed indicator;
    norm_bound is the a-priori bound ``S`` on the total gain span used by
    the concentration bounds.
    """

    beta: float
    power: float
    c: float = 10.0
    norm_bound: float = 10.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and 0.0 < self.beta <= 1.0):
            raise ParameterError(f"beta must be in (0, 1], got {self.beta}")
        if not (np.isfinite(self.power) and self.power > 0):
            raise ParameterError(f"power must be positive, got {self.power}")
        if not (np.isfinite(self.c) and self.c > 0):
            raise ParameterError(f"c must be positive, got {self.c}")
        if not (np.isfinite(self.norm_bound) and self.norm_bound > 0):
            raise ParameterError(f"norm_bound must be positive, got {self.norm_bound}")


# ---------------------------------------------------------------------------
# private engine: broadcastable over leading axes, complex-safe
# ---------------------------------------------------------------------------


def _sigmoid(x):
    """Stable logistic; complex inputs branch on the real part."""
    if not np.iscomplexobj(x):
        return expit(x)
    out = np.empty_like(x)
    pos = x.real >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[np.logical_not(pos)])
    out[np.logical_not(pos)] = ex / (1.0 + ex)
    return out


def _suffix_interference(lam):
    """I_m = sum_{i > m} lam_i along the last axis."""
    rev = np.flip(np.cumsum(np.flip(lam, -1), -1), -1)
    return rev - lam


def _rate_parts(s, lam, power):
    """Per-layer rate pieces shared by values and gradients.

    Returns thresholds T, layer rates rho (nats), and the partials
    d rho_m / d T_m, d rho_m / d lam_m, and the common coefficient of
    d rho_m / d lam_j for j > m, all shaped like ``s``.
    """
    T = np.cumsum(s, axis=-1)
    I = _suffix_interference(lam)
    A = 1.0 + T * (lam + I) * power
    B = 1.0 + T * I * power
    rho = np.log(A) - np.log(B)
    drho_dT = (lam + I) * power / A - I * power / B
    drho_dlam_diag = T * power / A
    drho_dlam_after = T * power * (1.0 / A - 1.0 / B)
    return T, rho, drho_dT, drho_dlam_diag, drho_dlam_after


def _reverse_cumsum(x):
    return np.flip(np.cumsum(np.flip(x, -1), -1), -1)


def _weighted_surrogate(s, lam, gains, weights, power, c, want_grad=True):
    """Weighted smoothed rate sum_i w_i R_sigma(s, lam, g_i) and its gradient.

    s, lam may carry leading batch axes; gains and weights are flat
    ``(K,)`` arrays.  Returns nats; callers convert to bits.
    """
    T, rho, drho_dT, diag, after = _rate_parts(s, lam, power)
    X = c * (gains[:, None] - T[..., None, :])  # (..., K, M)
    sig = _sigmoid(X)
    wsig = np.matmul(weights, sig)  # (..., M)
    val = np.sum(rho * wsig, axis=-1)
    if not want_grad:
        return val, None, None
    wdsig = c * np.matmul(weights, sig * (1.0 - sig))
    # d/ds_k: every layer m >= k sees both its rate coefficient and its
    # sigmoid argument move with the threshold
    grad_s = _reverse_cumsum(drho_dT * wsig - rho * wdsig)
    t = wsig * after
    grad_lam = wsig * diag + (np.cumsum(t, axis=-1) - t)
    return val, grad_s, grad_lam


def _expected_rate(s, lam, model, power, want_grad=True):
    """Distribution-averaged exact rate sum_m rho_m Pr[g >= T_m] (nats)."""
    T, rho, drho_dT, diag, after = _rate_parts(s, lam, power)
    cc = model.ccdf(T)
    val = np.sum(rho * cc, axis=-1)
    if not want_grad:
        return val, None, None
    dens = model.pdf(T)
    grad_s = _reverse_cumsum(drho_dT * cc - rho * dens)
    t = cc * after
    grad_lam = cc * diag + (np.cumsum(t, axis=-1) - t)
    return val, grad_s, grad_lam


# ---------------------------------------------------------------------------
# public surface (bits per channel use)
# ---------------------------------------------------------------------------


def interference(lam) -> np.ndarray:
    """Residual interference power share seen by each layer."""
    return _suffix_interference(np.asarray(lam, dtype=float))


def layer_rates(alloc: LayerAllocation, spec: RiskSpec) -> np.ndarray:
    """All M layer rates rho_m in bits per channel use."""
    _, rho, _, _, _ = _rate_parts(alloc.s, alloc.lam, spec.power)
    return rho / _LN2


def layer_rate(alloc: LayerAllocation, spec: RiskSpec, m: int) -> float:
    """Rate of layer ``m`` (zero-based index) in bits per channel use."""
    rates = layer_rates(alloc, spec)
    if not 0 <= m < alloc.m:
        raise ParameterError(f"layer index {m} out of range for M={alloc.m}")
    return float(rates[m])


def cumulative_rates(alloc: LayerAllocation, spec: RiskSpec) -> np.ndarray:
    """Prefix sums of the layer rates: the M+1 values the total rate can take.

    Entry 0 is 0 (no layer decoded); entry m is the rate of a receiver
    that clears thresholds 1..m.
    """
    return np.concatenate(([0.0], np.cumsum(layer_rates(alloc, spec))))


def total_rate(alloc: LayerAllocation, spec: RiskSpec, g):
    """Exact decoded rate at gain ``g`` (scalar or array), in bits.

    Every gain indexes into one precomputed prefix-sum table, so scalar
    and batched evaluations of the same gain return the identical float.
    """
    g_arr = np.asarray(g, dtype=float)
    rho = layer_rates(alloc, spec)
    steps = np.concatenate(([0.0], np.cumsum(rho)))
    decoded = np.searchsorted(alloc.thresholds, g_arr, side="right")
    out = steps[decoded]
    return out if out.ndim else float(out)


def surrogate_rate(alloc: LayerAllocation, spec: RiskSpec, g):
    """Smoothed rate with logistic indicators, in bits."""
    g_arr = np.asarray(g, dtype=float)
    _, rho, _, _, _ = _rate_parts(alloc.s, alloc.lam, spec.power)
    sig = _sigmoid(spec.c * (g_arr[..., None] - alloc.thresholds))
    out = (sig @ rho) / _LN2
    return out if out.ndim else float(out)


def surrogate_rate_grad(alloc: LayerAllocation, spec: RiskSpec, g: float):
    """Gradient of the smoothed rate at a single gain.

    Returns
    -------
    (grad_s, grad_lam) : pair of (M,) arrays
        Partials of ``surrogate_rate`` with respect to the gain
        increments and the power shares, in bits.
    """
    gains = np.array([float(g)])
    weights = np.array([1.0])
    _, gs, gl = _weighted_surrogate(alloc.s, alloc.lam, gains, weights, spec.power, spec.c)
    return gs / _LN2, gl / _LN2
