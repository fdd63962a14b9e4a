"""Mean, outage, and tail-average rate estimators and their closed forms."""

import numpy as np
import pytest

from cvar_ldm.errors import ParameterError
from cvar_ldm.fading import GainDataset, Rayleigh, Rician, sample_gains
from cvar_ldm.ldm import LayerAllocation, RiskSpec, total_rate
from cvar_ldm.risk import (
    RiskReport,
    analytic_cvar,
    analytic_mean_rate,
    analytic_outage_rate,
    empirical_cvar,
    empirical_mean_rate,
    empirical_outage_rate,
    nint,
    outage_index,
    smoothed_mean_rate,
    surrogate_empirical_cvar,
    surrogate_empirical_cvar_grad,
    tail_weights,
    variational_f,
)

ALLOC = LayerAllocation(s=np.array([1.0, 1.0]), lam=np.array([0.5, 0.5]))
SPEC = RiskSpec(beta=1.0, power=2.0)


def _random_alloc(rng, m):
    return LayerAllocation(s=np.exp(rng.normal(size=m)), lam=rng.dirichlet(np.ones(m)))


def test_nint_rounds_half_away_from_zero_and_clamps():
    assert nint(2.5) == 3
    assert nint(2.49) == 2
    assert nint(3.5) == 4
    assert nint(0.2) == 1  # never below one sample
    assert nint(10.0) == 10
    with pytest.raises(ParameterError):
        nint(-1.0)


def test_outage_index_is_guarded_ceiling():
    assert outage_index(10, 0.21) == 3  # 2.1 crosses at the third sample
    assert outage_index(10, 0.2) == 2  # integer product stays exact
    assert outage_index(10, 0.05) == 1  # clamped below at one sample
    assert outage_index(10, 1.0) == 10  # full sample, clamped above at n
    assert outage_index(25, 0.28) == 7  # 25 * 0.28 = 7.000000000000001 in floats
    with pytest.raises(ParameterError):
        outage_index(10, -0.5)


def test_tail_weights_hand_case():
    # N=10, beta=0.25: tail size nint(2.5)=3, first two weighted 1/2.5,
    # the third absorbs the remainder so the weights sum to one
    k, w = tail_weights(10, 0.25)
    assert k == 3
    np.testing.assert_allclose(w, [0.4, 0.4, 0.2])
    assert w.sum() == pytest.approx(1.0)


def test_tail_weights_integer_tail_is_uniform():
    k, w = tail_weights(4, 1.0)
    assert k == 4
    np.testing.assert_allclose(w, [0.25] * 4)
    k, w = tail_weights(100, 0.1)
    assert k == 10
    np.testing.assert_allclose(w, [0.1] * 10)


def test_tail_weights_sum_to_one_property():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 400))
        beta = float(rng.uniform(0.001, 1.0))
        k, w = tail_weights(n, beta)
        assert 1 <= k <= n
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert (w >= -1e-12).all()


def test_empirical_mean_rate_hand_case():
    data = GainDataset(np.array([0.5, 1.2, 2.5]))
    rates = [total_rate(ALLOC, SPEC, g) for g in (0.5, 1.2, 2.5)]
    assert empirical_mean_rate(ALLOC, data, SPEC) == pytest.approx(np.mean(rates))


def test_beta_one_tail_average_equals_mean():
    rng = np.random.default_rng(31)
    for _ in range(20):
        m = int(rng.integers(1, 5))
        alloc = _random_alloc(rng, m)
        data = sample_gains(Rayleigh(1.0), int(rng.integers(1, 60)), int(rng.integers(1e6)))
        spec = RiskSpec(beta=1.0, power=10.0)
        assert empirical_cvar(alloc, data, spec) == pytest.approx(
            empirical_mean_rate(alloc, data, spec), rel=1e-12
        )


def test_tail_average_below_outage_and_mean():
    rng = np.random.default_rng(32)
    for _ in range(50):
        m = int(rng.integers(1, 6))
        alloc = _random_alloc(rng, m)
        n = int(rng.integers(2, 80))
        data = sample_gains(Rayleigh(1.0), n, int(rng.integers(1e6)))
        spec = RiskSpec(beta=float(rng.uniform(0.05, 1.0)), power=20.0)
        cvar = empirical_cvar(alloc, data, spec)
        assert cvar <= empirical_outage_rate(alloc, data, spec) + 1e-9
        assert cvar <= empirical_mean_rate(alloc, data, spec) + 1e-9
        assert cvar >= -1e-12


def test_outage_rate_is_variational_maximizer():
    # the closed-form crossing quantile rate maximizes r - E[(r - R)+] / beta
    # over the candidate rates the step function actually takes, exactly
    rng = np.random.default_rng(33)
    for _ in range(50):
        m = int(rng.integers(1, 6))
        alloc = _random_alloc(rng, m)
        n = int(rng.integers(3, 60))
        data = sample_gains(Rayleigh(1.0), n, int(rng.integers(1e6)))
        spec = RiskSpec(beta=float(rng.uniform(0.05, 1.0)), power=10.0)
        rates = np.array([total_rate(alloc, spec, g) for g in data.gains])
        candidates = np.unique(rates)
        values = variational_f(alloc, data, spec, candidates)
        best = float(candidates[int(np.argmax(values))])
        r_out = empirical_outage_rate(alloc, data, spec)
        assert variational_f(alloc, data, spec, r_out) == values.max()
        assert r_out == best


def test_variational_value_at_tail_boundary_is_tail_average():
    # the split-weight tail average equals the variational objective at the
    # rate of the nint(N beta)-th gain, and never exceeds the variational max
    rng = np.random.default_rng(34)
    for _ in range(50):
        m = int(rng.integers(1, 6))
        alloc = _random_alloc(rng, m)
        n = int(rng.integers(3, 60))
        data = sample_gains(Rayleigh(1.0), n, int(rng.integers(1e6)))
        spec = RiskSpec(beta=float(rng.uniform(0.05, 1.0)), power=10.0)
        k = nint(data.n * spec.beta)
        boundary = float(total_rate(alloc, spec, data.gains[k - 1]))
        cvar = empirical_cvar(alloc, data, spec)
        assert cvar == pytest.approx(
            variational_f(alloc, data, spec, boundary), rel=1e-10, abs=1e-12
        )
        r_out = empirical_outage_rate(alloc, data, spec)
        assert cvar <= variational_f(alloc, data, spec, r_out) + 1e-12


def test_analytic_mean_matches_monte_carlo():
    model = Rician(2.0, 1.0)
    alloc = LayerAllocation(s=np.array([0.8, 1.2, 2.0]), lam=np.array([0.5, 0.3, 0.2]))
    spec = RiskSpec(beta=1.0, power=30.0)
    data = sample_gains(model, 400000, 99)
    assert analytic_mean_rate(alloc, model, spec) == pytest.approx(
        empirical_mean_rate(alloc, data, spec), rel=0.01
    )


def test_analytic_cvar_matches_monte_carlo():
    model = Rayleigh(1.0)
    alloc = LayerAllocation(s=np.array([0.1, 0.4, 1.0]), lam=np.array([0.6, 0.3, 0.1]))
    spec = RiskSpec(beta=0.2, power=50.0)
    data = sample_gains(model, 400000, 101)
    assert analytic_cvar(alloc, model, spec) == pytest.approx(
        empirical_cvar(alloc, data, spec), rel=0.02
    )
    assert analytic_outage_rate(alloc, model, spec) == pytest.approx(
        empirical_outage_rate(alloc, data, spec), abs=0.02
    )


def test_analytic_beta_one_equals_mean():
    model = Rayleigh(1.0)
    rng = np.random.default_rng(35)
    for _ in range(20):
        alloc = _random_alloc(rng, int(rng.integers(1, 6)))
        spec = RiskSpec(beta=1.0, power=25.0)
        assert analytic_cvar(alloc, model, spec) == pytest.approx(
            analytic_mean_rate(alloc, model, spec), rel=1e-10
        )


def test_analytic_cvar_nondecreasing_in_beta():
    model = Rician(2.0, 1.0)
    alloc = LayerAllocation(s=np.array([0.5, 1.0]), lam=np.array([0.6, 0.4]))
    spec = lambda b: RiskSpec(beta=b, power=20.0)
    values = [analytic_cvar(alloc, model, spec(b)) for b in (0.01, 0.1, 0.3, 0.7, 1.0)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_smoothed_mean_tracks_exact_mean_for_steep_slopes():
    model = Rayleigh(1.0)
    alloc = LayerAllocation(s=np.array([0.3, 0.9]), lam=np.array([0.7, 0.3]))
    exact = analytic_mean_rate(alloc, model, RiskSpec(beta=1.0, power=20.0))
    smoothed = smoothed_mean_rate(alloc, model, RiskSpec(beta=1.0, power=20.0, c=5000.0))
    assert smoothed == pytest.approx(exact, abs=2e-3)


def test_surrogate_cvar_grad_matches_finite_differences():
    rng = np.random.default_rng(36)
    h = 1e-6
    for _ in range(20):
        m = int(rng.integers(1, 5))
        s = np.exp(rng.normal(size=m))
        lam = rng.dirichlet(np.ones(m)) * 0.9
        data = sample_gains(Rayleigh(1.0), int(rng.integers(5, 40)), int(rng.integers(1e6)))
        spec = RiskSpec(beta=float(rng.uniform(0.1, 1.0)), power=15.0)

        def value(sv, lv):
            return surrogate_empirical_cvar(LayerAllocation(s=sv, lam=lv), data, spec)

        gs, gl = surrogate_empirical_cvar_grad(LayerAllocation(s=s, lam=lam), data, spec)
        for j in range(m):
            e = np.zeros(m)
            e[j] = h
            assert gs[j] == pytest.approx(
                (value(s + e, lam) - value(s - e, lam)) / (2 * h), rel=2e-5, abs=1e-7
            )
            assert gl[j] == pytest.approx(
                (value(s, lam + e) - value(s, lam - e)) / (2 * h), rel=2e-5, abs=1e-7
            )


def test_risk_report_round_trip():
    report = RiskReport(
        mean_rate=3.5, outage_rate=4.0, cvar_rate=2.5, beta=0.1, n_used=10, oracle="empirical"
    )
    clone = RiskReport.from_json(report.to_json())
    assert clone == report
    assert RiskReport.csv_header() == "mean_rate,outage_rate,cvar_rate,beta,n_used,oracle"
    row = report.to_csv_row()
    assert row.split(",")[-1] == "empirical"
