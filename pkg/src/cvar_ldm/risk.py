"""Risk functionals of the decoded rate: mean, outage, and tail-average.

For a receiver population with gain distribution ``G`` and an allocation
``(s, lam)``, the decoded rate ``R`` is a step function of the gain.  The
beta-outage rate is the largest rate served to at least a ``1 - beta``
fraction of receivers; the beta-CVaR rate is the mean rate of the worst
``beta`` fraction.  Both have empirical versions on a finite gain sample
and closed forms under a known gain distribution.

The empirical tail average on ``N`` sorted gains uses the nearest-integer
index ``k = nint(N beta)`` and the split-weight correction

    cvar = (k / (N beta)) * mean(rate of k lowest gains)
           + (1 - k / (N beta)) * rate(g_(k))

which keeps the estimator exact at integer tail sizes and consistent in
between.  The empirical outage rate uses the crossing index
``outage_index(N, beta)``, the smallest order statistic whose cumulative
count reaches ``N beta``; that point maximizes the variational objective
``variational_f`` and is the largest rate with empirical complementary
CDF at least ``1 - beta``, mirroring the closed-form convention of
``analytic_outage_rate``.  The smoothed (``surrogate_``) versions replace
the exact step rate by the logistic-smoothed rate and are what the
optimizers climb.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .fading import FadingModel, GainDataset, ccdf
from .ldm import (
    _LN2,
    LayerAllocation,
    RiskSpec,
    _weighted_surrogate,
    cumulative_rates,
    total_rate,
)

__all__ = [
    "RiskReport",
    "nint",
    "outage_index",
    "tail_weights",
    "empirical_mean_rate",
    "empirical_outage_rate",
    "variational_f",
    "empirical_cvar",
    "surrogate_empirical_cvar",
    "surrogate_empirical_cvar_grad",
    "analytic_mean_rate",
    "analytic_outage_rate",
    "analytic_cvar",
    "smoothed_mean_rate",
]


def nint(x: float) -> int:
    """Nearest positive integer: round half away from zero, floor of 1.

    The empirical tail size ``nint(N beta)`` must stay at least 1 so a
    tail exists even when ``N beta < 1``.
    """
    if not (np.isfinite(x) and x > 0):
        raise ParameterError(f"nint needs a positive finite argument, got {x}")
    return max(1, int(np.floor(x + 0.5)))


def tail_weights(n: int, beta: float) -> tuple[int, np.ndarray]:
    """Tail size ``k`` and sample weights of the empirical tail average.

    The weights apply to the ``k`` lowest order statistics; they sum to 1
    with ``1/(n beta)`` on each tail sample plus the boundary correction
    ``1 - k/(n beta)`` folded onto the k-th.
    """
    k = nint(n * beta)
    w = np.full(k, 1.0 / (n * beta))
    w[k - 1] += 1.0 - k / (n * beta)
    return k, w


def empirical_mean_rate(alloc: LayerAllocation, data: GainDataset, spec: RiskSpec) -> float:
    """Average exact rate over the whole sample, in bits."""
    return float(np.mean(total_rate(alloc, spec, data.gains)))


def outage_index(n: int, beta: float) -> int:
    """Order-statistic index where the cumulative sample count crosses n*beta.

    This is the ceiling of ``n * beta`` for fractional products and the
    exact count at integer ones, clamped to ``[1, n]``.  A small slack
    absorbs floating-point noise in the product so that a value such as
    ``3.0000000000000004`` still counts as the integer 3.
    """
    x = n * beta
    if not (np.isfinite(x) and x > 0):
        raise ParameterError(f"outage_index needs a positive finite n*beta, got {x}")
    return min(n, max(1, int(np.ceil(x - 1e-9))))


def empirical_outage_rate(alloc: LayerAllocation, data: GainDataset, spec: RiskSpec) -> float:
    """Empirical beta-outage rate: exact rate at the crossing order statistic.

    Evaluating the rate at gain ``g_(outage_index(N, beta))`` yields the
    largest rate whose empirical complementary CDF is at least
    ``1 - beta``; equivalently, the maximizer of ``variational_f``.
    """
    k = outage_index(data.n, spec.beta)
    return float(total_rate(alloc, spec, data.gains[k - 1]))


def variational_f(alloc: LayerAllocation, data: GainDataset, spec: RiskSpec, r):
    """Empirical Rockafellar-Uryasev objective f(r) = r - mean((r - R_i)+) / beta.

    The empirical beta-CVaR rate is the maximum of this concave piecewise
    linear function over r >= 0, attained at the empirical outage rate.
    Accepts scalar or array ``r``.
    """
    r_arr = np.asarray(r, dtype=float)
    rates = total_rate(alloc, spec, data.gains)
    shortfall = np.maximum(r_arr[..., None] - rates, 0.0)
    out = r_arr - np.mean(shortfall, axis=-1) / spec.beta
    return out if out.ndim else float(out)


def empirical_cvar(alloc: LayerAllocation, data: GainDataset, spec: RiskSpec) -> float:
    """Empirical beta-CVaR of the exact rate (bits): split-weight tail average."""
    k, w = tail_weights(data.n, spec.beta)
    tail = total_rate(alloc, spec, data.gains[:k])
    return float(np.dot(w, np.atleast_1d(tail)))


def surrogate_empirical_cvar(alloc: LayerAllocation, data: GainDataset, spec: RiskSpec) -> float:
    """Smoothed empirical beta-CVaR: the objective the optimizers climb."""
    k, w = tail_weights(data.n, spec.beta)
    val, _, _ = _weighted_surrogate(
        alloc.s, alloc.lam, data.gains[:k], w, spec.power, spec.c, want_grad=False
    )
    return float(val) / _LN2


def surrogate_empirical_cvar_grad(
    alloc: LayerAllocation, data: GainDataset, spec: RiskSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of the smoothed empirical beta-CVaR.

    Returns
    -------
    (grad_s, grad_lam) : pair of (M,) arrays in bits.
    """
    k, w = tail_weights(data.n, spec.beta)
    _, gs, gl = _weighted_surrogate(alloc.s, alloc.lam, data.gains[:k], w, spec.power, spec.c)
    return gs / _LN2, gl / _LN2


# ---------------------------------------------------------------------------
# known-distribution (analytic) counterparts
# ---------------------------------------------------------------------------


def _rate_distribution(alloc: LayerAllocation, model: FadingModel, spec: RiskSpec):
    """Values the exact rate takes and their probabilities under ``model``.

    Returns (values, ccdf_at_values) where values[m] is the rate of a
    receiver decoding exactly m layers and ccdf_at_values[m] = Pr[R >=
    values[m]] = Pr[g >= T_m] (with T_0 = 0).
    """
    values = cumulative_rates(alloc, spec)
    cc = np.concatenate(([1.0], np.atleast_1d(ccdf(model, alloc.thresholds))))
    return values, cc


def analytic_mean_rate(alloc: LayerAllocation, model: FadingModel, spec: RiskSpec) -> float:
    """Exact expected rate sum_m rho_m Pr[g >= T_m], in bits."""
    values, cc = _rate_distribution(alloc, model, spec)
    return float(np.dot(np.diff(values), cc[1:]))


def smoothed_mean_rate(alloc: LayerAllocation, model: FadingModel, spec: RiskSpec) -> float:
    """Expected logistic-smoothed rate under a known gain distribution.

    Integrates pdf(g) * sum_m rho_m sigmoid(c (g - T_m)) by adaptive
    quadrature.  This is the population value of the objective the
    sample-based optimizer climbs, which differs from the exact step
    rate by the smoothing of each decoding threshold.
    """
    from scipy.integrate import quad

    from .fading import pdf as _pdf
    from .ldm import _rate_parts, _sigmoid

    thresholds, rho = _rate_parts(alloc.s, alloc.lam, spec.power)[:2]
    rho_bits = rho / _LN2

    def integrand(g):
        return _pdf(model, g) * float(rho_bits @ _sigmoid(spec.c * (g - thresholds)))

    cut = float(thresholds[-1]) + 1.0
    while ccdf(model, cut) > 1e-16 and cut < 1e9:
        cut *= 2.0
    head, _ = quad(integrand, 0.0, cut, points=list(thresholds[thresholds < cut]),
                   limit=300, epsabs=1e-12, epsrel=1e-10)
    tail, _ = quad(integrand, cut, np.inf, limit=100, epsabs=1e-12, epsrel=1e-10)
    return float(head + tail)


def analytic_outage_rate(alloc: LayerAllocation, model: FadingModel, spec: RiskSpec) -> float:
    """beta-outage rate under a known gain distribution.

    The largest rate r with Pr[R >= r] >= 1 - beta; since R is a step
    function the maximum is attained at one of the cumulative layer
    rates.
    """
    values, cc = _rate_distribution(alloc, model, spec)
    ok = np.flatnonzero(cc >= 1.0 - spec.beta)
    return float(values[ok[-1]])


def analytic_cvar(alloc: LayerAllocation, model: FadingModel, spec: RiskSpec) -> float:
    """beta-CVaR rate under a known gain distribution, in bits.

    Evaluates the Rockafellar-Uryasev form cvar = r* - E[(r* - R)+] / beta
    at the outage rate r*, which splits any probability mass sitting at
    r* so that exactly beta of probability is averaged.
    """
    values, cc = _rate_distribution(alloc, model, spec)
    r_star = analytic_outage_rate(alloc, model, spec)
    masses = cc - np.concatenate((cc[1:], [0.0]))  # Pr[R = values[m]]
    shortfall = np.maximum(r_star - values, 0.0)
    return float(r_star - np.dot(masses, shortfall) / spec.beta)


@dataclass(frozen=True)
class RiskReport:
    """Bundle of the three rate metrics at one risk level.

    ``n_used`` is the empirical tail size nint(N beta) (0 when the
    metrics come from a known distribution); ``oracle`` records which
    evaluator produced the numbers.
    """

    mean_rate: float
    outage_rate: float
    cvar_rate: float
    beta: float
    n_used: int
    oracle: str = "empirical"

    _CSV_HEADER = "mean_rate,outage_rate,cvar_rate,beta,n_used,oracle"

    def to_dict(self) -> dict:
        return {
            "mean_rate": self.mean_rate,
            "outage_rate": self.outage_rate,
            "cvar_rate": self.cvar_rate,
            "beta": self.beta,
            "n_used": self.n_used,
            "oracle": self.oracle,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RiskReport":
        d = json.loads(text)
        return cls(**d)

    @classmethod
    def csv_header(cls) -> str:
        return cls._CSV_HEADER

    def to_csv_row(self) -> str:
        return (
            f"{self.mean_rate!r},{self.outage_rate!r},{self.cvar_rate!r},"
            f"{self.beta!r},{self.n_used},{self.oracle}"
        )
