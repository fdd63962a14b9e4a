"""Infinite-layer baselines and finite-sample guarantees.

With a continuum of layers the expected-rate problem has a variational
solution: the optimal power profile ``I(u)`` (residual interference as a
function of the decoding threshold) is pinned by the gain distribution,

    I(u) = (ccdf(u) - u pdf(u)) / (u^2 pdf(u)),

active between the thresholds ``u0`` and ``u1`` where ``I(u0) = P`` (all
power still undecoded) and ``I(u1) = 0`` (everything decoded).  The
achieved expected rate is the integral of ``ccdf(u) u rho(u) / (1 + u
I(u))`` over ``[u0, u1]`` with layer density ``rho = -dI/du``.  For unit
Rayleigh fading the integral collapses to exponential integrals, which
provides an independent closed-form cross-check.

The finite-sample results bound the empirical-vs-population gaps through
a Rademacher-complexity bracket

    eps(n, delta) = 4 sqrt((2n+1) ln(n+1) / (3 n (n+1)))
                    + sqrt(2 ln(2/delta) / n)

that multiplies the rate ceiling ``2 log2(1 + S P)`` (and ``1/beta`` for
the tail objective).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import NumericalError, ParameterError
from .fading import FadingModel, ccdf, pdf, pdf_derivative

__all__ = [
    "InfiniteLayerSolution",
    "BoundReport",
    "exp_integral_e1",
    "rayleigh_closed_form",
    "infinite_layer_rate",
    "expected_rate_gap_bound",
    "cvar_gap_bound",
    "ccdf_deviation_bound",
    "sample_complexity",
]

_LN2 = float(np.log(2.0))


def exp_integral_e1(x: float) -> float:
    """Exponential integral E1(x) for x > 0, to ~1e-14 absolute.

    Power series around zero for x <= 1; modified-Lentz continued
    fraction beyond.
    """
    if not (np.isfinite(x) and x > 0):
        raise ParameterError(f"exp_integral_e1 needs x > 0, got {x}")
    if x <= 1.0:
        total = -np.euler_gamma - np.log(x)
        term = 1.0
        for k in range(1, 200):
            term *= -x / k
            contrib = -term / k
            total += contrib
            if abs(contrib) < 1e-17 * max(abs(total), 1e-300):
                break
        return total
    # E1(x) = e^-x / (x + 1 - 1/(x + 3 - 4/(x + 5 - 9/(...))))
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 200):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * np.exp(-x)


def rayleigh_closed_form(power: float, var: float = 1.0) -> float:
    """Infinite-layer expected rate under Rayleigh fading, in bits.

    Closed form in exponential integrals; a general variance rescales
    onto the unit-variance case with effective power ``P var``.
    """
    if power <= 0 or var <= 0:
        raise ParameterError("power and var must be positive")
    pe = power * var
    u0 = 2.0 / (1.0 + np.sqrt(1.0 + 4.0 * pe))
    nats = 2.0 * (exp_integral_e1(u0) - exp_integral_e1(1.0)) - (np.exp(-u0) - np.exp(-1.0))
    return float(nats / _LN2)


@dataclass(frozen=True)
class InfiniteLayerSolution:
    """Solved infinite-layer profile and its expected rate (bits)."""

    u0: float
    u1: float
    expected_rate: float
    quad_error: float
    root_ambiguous: bool = False

    def to_dict(self) -> dict:
        return {
            "u0": self.u0,
            "u1": self.u1,
            "expected_rate": self.expected_rate,
            "quad_error": self.quad_error,
            "root_ambiguous": self.root_ambiguous,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def infinite_layer_rate(model: FadingModel, power: float) -> InfiniteLayerSolution:
    """Solve the infinite-layer profile for any supported gain model.

    The boundary ``u1`` is taken as the largest root of ``ccdf(u) = u
    pdf(u)``; if the scan sees several sign changes the solution is
    flagged ``root_ambiguous`` (the profile is only guaranteed
    meaningful when ``I`` stays nonnegative below ``u1``).
    """
    if power <= 0:
        raise ParameterError(f"power must be positive, got {power}")

    def h(u):
        return ccdf(model, u) - u * pdf(model, u)

    def interference(u):
        return h(u) / (u * u * pdf(model, u))

    # scan a geometric grid for sign changes of h, take the largest
    scale = model.mean_gain()
    grid = scale * np.geomspace(1e-8, 1.0, 200)
    hi = scale
    while ccdf(model, hi) > 1e-14:
        hi *= 2.0
        if hi > 1e9 * scale:
            raise NumericalError("could not find the upper edge of the gain distribution")
    grid = np.unique(np.concatenate((grid, np.geomspace(scale, hi, 200))))
    hv = np.array([h(u) for u in grid])
    signs = np.sign(hv)
    flips = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    zeros = np.flatnonzero(signs == 0)  # a grid point can land exactly on the root
    if flips.size == 0 and zeros.size == 0:
        raise NumericalError("no root for the upper threshold u1")
    if flips.size > 0 and (zeros.size == 0 or grid[flips[-1]] > grid[zeros[-1]]):
        idx = flips[-1]
        u1 = brentq(h, grid[idx], grid[idx + 1], xtol=1e-12, rtol=1e-12)
    else:
        u1 = float(grid[zeros[-1]])
    root_ambiguous = flips.size + zeros.size > 1

    def g(u):
        return h(u) - power * u * u * pdf(model, u)

    lo = u1 * 1e-12
    if g(lo) <= 0:
        raise NumericalError("lower threshold bracket failed; interference never reaches P")
    u0 = brentq(g, lo, u1, xtol=1e-14, rtol=1e-12)

    def integrand(u):
        p = pdf(model, u)
        dp = pdf_derivative(model, u)
        cc = ccdf(model, u)
        layer_density = cc * (2.0 * p + u * dp) / (u**3 * p * p)
        return cc * u * layer_density / (1.0 + u * interference(u))

    nats, err = quad(integrand, u0, u1, epsabs=1e-12, epsrel=1e-10, limit=300)
    return InfiniteLayerSolution(
        u0=float(u0),
        u1=float(u1),
        expected_rate=float(nats / _LN2),
        quad_error=float(err / _LN2),
        root_ambiguous=root_ambiguous,
    )


def _bracket(n: int, delta: float) -> float:
    if n < 1 or int(n) != n:
        raise ParameterError(f"n must be a positive integer, got {n}")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    n = float(n)
    rad = 4.0 * np.sqrt((2.0 * n + 1.0) * np.log(n + 1.0) / (3.0 * n * (n + 1.0)))
    dev = np.sqrt(2.0 * np.log(2.0 / delta) / n)
    return float(rad + dev)


def expected_rate_gap_bound(n: int, delta: float, s_bound: float, power: float) -> float:
    """High-probability bound on the expected-rate optimality gap (bits)."""
    if s_bound <= 0 or power <= 0:
        raise ParameterError("s_bound and power must be positive")
    return _bracket(n, delta) * 2.0 * np.log2(1.0 + s_bound * power)


def cvar_gap_bound(n: int, delta: float, beta: float, s_bound: float, power: float) -> float:
    """Tail-objective version: the expected-rate bound scaled by 1/beta."""
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"beta must be in (0, 1], got {beta}")
    return expected_rate_gap_bound(n, delta, s_bound, power) / beta


def ccdf_deviation_bound(n: int, delta: float) -> float:
    """Uniform CCDF deviation bound (a probability, clamped to 1)."""
    return min(1.0, _bracket(n, delta))


def sample_complexity(epsilon: float, beta: float, s_bound: float, power: float) -> int:
    """Smallest n >= 3 with n / ln(n) >= (log2(S P) / (beta epsilon))^2."""
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"beta must be in (0, 1], got {beta}")
    if s_bound <= 0 or power <= 0:
        raise ParameterError("s_bound and power must be positive")
    target = (np.log2(s_bound * power) / (beta * epsilon)) ** 2

    def ok(n: int) -> bool:
        return n / np.log(n) >= target

    lo, hi = 3, 3
    if ok(3):
        return 3
    while not ok(hi):
        hi *= 2
        if hi > 2**62:
            raise NumericalError("sample complexity target out of integer range")
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class BoundReport:
    """CLI-facing bundle of one bound evaluation."""

    n: int
    delta: float
    beta: float
    s_bound: float
    power: float
    bound_value: float
    kind: str = "cvar_gap"

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "delta": self.delta,
            "beta": self.beta,
            "s_bound": self.s_bound,
            "power": self.power,
            "bound_value": self.bound_value,
            "kind": self.kind,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())
