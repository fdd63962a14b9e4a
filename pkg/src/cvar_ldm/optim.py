"""Mirror descent on the smoothed tail-rate objective.

The allocation is optimized in mirror coordinates: the gain increments
through ``s = exp(u)`` (so a plain gradient-ascent step on ``u`` is
multiplicative on ``s`` and keeps it positive), and the power shares
through an exponentiated-gradient step that renormalizes onto the
simplex.  One iteration updates both blocks from the same previous
iterate (a Jacobi sweep); a Gauss-Seidel variant that lets the power
update see the fresh ``u`` is available behind ``update_order``.

The loop stops when the relative objective change between consecutive
iterates drops below ``rel_tol``, or after ``max_iters`` sweeps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import NumericalError, ParameterError
from .fading import FadingModel, GainDataset, ccdf
from .ldm import _LN2, LayerAllocation, RiskSpec, _expected_rate, _weighted_surrogate
from .risk import tail_weights

__all__ = [
    "OptimConfig",
    "OptimTrace",
    "gd_step",
    "eg_step",
    "optimize",
    "optimize_known_distribution",
    "default_u_init",
    "random_u_init",
]

_S_FLOOR = 1e-8  # smallest gain increment the quantile init will emit


@dataclass
class OptimConfig:
    """Knobs of the mirror-descent loop.

    ``u_init``/``lambda_init`` override the default initialization; when
    absent, thresholds start at the ``beta * m / (M + 1)`` quantiles
    (``init = "quantile"``) or at ``exp`` of a standard-normal draw
    (``init = "random"``, seeded by ``seed``), with uniform power shares
    either way.  ``m`` fixes the number of layers when no explicit init
    is given.
    """

    eta: float = 0.01
    gamma: float = 0.01
    max_iters: int = 20000
    rel_tol: float = 1e-7
    m: int | None = None
    u_init: np.ndarray | None = None
    lambda_init: np.ndarray | None = None
    init: str = "quantile"
    seed: int | None = None
    update_order: str = "jacobi"
    grad_clip: float = 1e6

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ParameterError(f"eta must be positive, got {self.eta}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (np.isfinite(self.rel_tol) and self.rel_tol >= 0):
            raise ParameterError(f"rel_tol must be nonnegative, got {self.rel_tol}")
        if self.update_order not in ("jacobi", "gauss-seidel"):
            raise ParameterError(f"update_order must be jacobi or gauss-seidel, got {self.update_order!r}")
        if self.init not in ("quantile", "random"):
            raise ParameterError(f"init must be quantile or random, got {self.init!r}")
        if not (np.isfinite(self.grad_clip) and self.grad_clip > 0):
            raise ParameterError(f"grad_clip must be positive, got {self.grad_clip}")
        if self.u_init is not None:
            self.u_init = np.asarray(self.u_init, dtype=float)
        if self.lambda_init is not None:
            self.lambda_init = np.asarray(self.lambda_init, dtype=float)

    def layers(self) -> int:
        if self.u_init is not None:
            return int(np.asarray(self.u_init).size)
        if self.m is not None:
            return int(self.m)
        raise ParameterError("config needs either m or an explicit u_init")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ParameterError(f"unknown optimizer config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text_or_path) -> "OptimConfig":
        p = Path(str(text_or_path))
        text = p.read_text() if p.suffix == ".json" and p.exists() else str(text_or_path)
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParameterError(f"invalid optimizer config JSON: {exc}") from exc


@dataclass(frozen=True)
class OptimTrace:
    """Objective path and final iterate of one mirror-descent run.

    ``objectives[0]`` is the objective at the initialization and
    ``objectives[i]`` after the i-th sweep, recorded verbatim.
    """

    objectives: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    iterations: int
    converged: bool

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("iter,objective\n")
            for i, v in enumerate(self.objectives):
                f.write(f"{i},{float(v)!r}\n")


def _clip_grad(g, cap):
    """Clamp gradient entries to [-cap, cap]; complex entries clamp on the real part."""
    if np.iscomplexobj(g):
        out = np.array(g, copy=True)
        out[out.real > cap] = cap
        out[out.real < -cap] = -cap
        return out
    return np.clip(g, -cap, cap)


def _eg_update(lam, scaled_grad):
    """Multiplicative simplex step lam * exp(scaled_grad), renormalized.

    Subtracting the max of the real part before exponentiating changes
    nothing mathematically (the update is shift invariant) but prevents
    overflow; an underflow floor keeps every share strictly positive.
    Broadcasts over leading axes; the simplex lives on the last one.
    """
    sg_real = scaled_grad.real if np.iscomplexobj(scaled_grad) else scaled_grad
    t = scaled_grad - np.max(sg_real, axis=-1, keepdims=True)
    w = lam * np.exp(t)
    w = w / np.sum(w, axis=-1, keepdims=True)
    if not np.iscomplexobj(w):
        w = np.maximum(w, 1e-290)
        w = w / np.sum(w, axis=-1, keepdims=True)
    return w


def gd_step(u, lam, data: GainDataset, spec: RiskSpec, eta: float = 0.01, grad_clip: float = 1e6):
    """One mirror gradient-ascent step on ``u`` (with ``s = exp(u)``).

    The chain rule turns the ``s``-gradient of the smoothed tail
    objective into ``exp(u) * grad_s``; the power shares are held fixed.
    Accepts complex ``u``/``lam`` so the step map itself can be
    differentiated by forward-mode perturbations.
    """
    k, w = tail_weights(data.n, spec.beta)
    s = np.exp(u)
    _, gs, _ = _weighted_surrogate(s, lam, data.gains[:k], w, spec.power, spec.c)
    return u + eta * _clip_grad(s * gs / _LN2, grad_clip)


def eg_step(lam, u, data: GainDataset, spec: RiskSpec, gamma: float = 0.01, grad_clip: float = 1e6):
    """One exponentiated-gradient ascent step on the power shares."""
    k, w = tail_weights(data.n, spec.beta)
    _, _, gl = _weighted_surrogate(np.exp(u), lam, data.gains[:k], w, spec.power, spec.c)
    return _eg_update(lam, gamma * _clip_grad(gl / _LN2, grad_clip))


def default_u_init(thresholds: np.ndarray) -> np.ndarray:
    """log of the increments of a nondecreasing threshold vector, floored."""
    t = np.asarray(thresholds, dtype=float)
    incr = np.diff(np.concatenate(([0.0], t)))
    return np.log(np.maximum(incr, _S_FLOOR))


def random_u_init(m: int, seed) -> np.ndarray:
    """Standard-normal ``u``: the uninformed baseline initialization."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.standard_normal(m)


def _quantile_thresholds_empirical(data: GainDataset, beta: float, m: int) -> np.ndarray:
    # interior levels so the top threshold avoids the sample maximum,
    # where the smoothed objective has no usable gradient
    levels = beta * np.arange(1, m + 1) / (m + 1)
    return np.quantile(data.gains, levels)


def _model_quantile(model: FadingModel, p: float) -> float:
    """Smallest t with Pr[g <= t] >= p, by bracketing the continuous CCDF."""
    f = lambda t: ccdf(model, t) - (1.0 - p)
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise NumericalError(f"quantile bracket for p={p} did not close")
    return brentq(f, 0.0, hi, xtol=1e-12, rtol=1e-12)


def _quantile_thresholds_model(model: FadingModel, beta: float, m: int) -> np.ndarray:
    # interior levels so the top threshold stays finite at beta = 1
    levels = beta * np.arange(1, m + 1) / (m + 1)
    return np.array([_model_quantile(model, p) for p in levels])


def _initial_point(config: OptimConfig, beta: float, quantile_thresholds) -> tuple[np.ndarray, np.ndarray]:
    m = config.layers()
    if config.u_init is not None:
        u = np.array(config.u_init, dtype=float)
    elif config.init == "random":
        u = random_u_init(m, config.seed)
    else:
        u = default_u_init(quantile_thresholds(beta, m))
    if config.lambda_init is not None:
        lam = np.array(config.lambda_init, dtype=float)
        if lam.shape != u.shape or np.any(lam <= 0):
            raise ParameterError("lambda_init must be positive and match u_init in length")
        lam = lam / lam.sum()
    else:
        lam = np.full(m, 1.0 / m)
    if u.shape != lam.shape:
        raise ParameterError("u_init and lambda_init must have the same length")
    return u, lam


def _run_mirror_ascent(value_and_grad, u, lam, config: OptimConfig):
    """Shared Jacobi/Gauss-Seidel sweep loop; one fused eval per iteration."""
    val, gs, gl = value_and_grad(np.exp(u), lam)
    if not np.isfinite(val):
        raise NumericalError(f"objective not finite at initialization: {val}")
    objectives = [val]
    converged = False
    for _ in range(config.max_iters):
        s = np.exp(u)
        u_new = u + config.eta * _clip_grad(s * gs, config.grad_clip)
        if config.update_order == "gauss-seidel":
            _, _, gl = value_and_grad(np.exp(u_new), lam)
        lam = _eg_update(lam, config.gamma * _clip_grad(gl, config.grad_clip))
        u = u_new
        new_val, gs, gl = value_and_grad(np.exp(u), lam)
        objectives.append(new_val)
        if not np.isfinite(new_val):
            raise NumericalError(
                f"objective became non-finite at iteration {len(objectives) - 1}"
            )
        if abs(new_val - val) <= config.rel_tol * max(1.0, abs(val)):
            converged = True
            break
        val = new_val
    s = np.exp(u)
    if not (np.all(np.isfinite(s)) and np.sum(s) > 0):
        raise NumericalError(
            "iterate left the feasible region (gain increments overflowed or collapsed to zero)"
        )
    trace = OptimTrace(
        objectives=np.array(objectives),
        s=s,
        lam=lam,
        iterations=len(objectives) - 1,
        converged=converged,
    )
    return LayerAllocation(s=s, lam=lam), trace


def optimize(data: GainDataset, spec: RiskSpec, config: OptimConfig):
    """Maximize the smoothed empirical beta-CVaR on a gain sample.

    Returns
    -------
    (alloc, trace) : LayerAllocation and OptimTrace
        The final allocation and the verbatim objective path (bits).
    """
    k, w = tail_weights(data.n, spec.beta)
    gains = data.gains[:k]

    def value_and_grad(s, lam):
        val, gs, gl = _weighted_surrogate(s, lam, gains, w, spec.power, spec.c)
        return float(val) / _LN2, gs / _LN2, gl / _LN2

    u, lam = _initial_point(config, spec.beta, lambda b, m: _quantile_thresholds_empirical(data, b, m))
    return _run_mirror_ascent(value_and_grad, u, lam, config)


def optimize_known_distribution(model: FadingModel, spec: RiskSpec, config: OptimConfig):
    """Maximize the exact expected rate when the gain distribution is known.

    The distribution-averaged rate sum_m rho_m Pr[g >= T_m] is smooth in
    the parameters (the CCDF plays the role the sigmoid plays on data),
    so the same mirror sweep applies with the analytic gradient and no
    smoothing constant.
    """

    def value_and_grad(s, lam):
        val, gs, gl = _expected_rate(s, lam, model, spec.power)
        return float(val) / _LN2, gs / _LN2, gl / _LN2

    u, lam = _initial_point(config, 1.0, lambda b, m: _quantile_thresholds_model(model, b, m))
    return _run_mirror_ascent(value_and_grad, u, lam, config)
