"""Mirror-descent loop: step maps, invariants, convergence, reproducibility."""

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

import cvar_ldm.optim as optim
from cvar_ldm.errors import ParameterError
from cvar_ldm.fading import Rayleigh, sample_gains
from cvar_ldm.ldm import RiskSpec
from cvar_ldm.optim import (
    OptimConfig,
    default_u_init,
    eg_step,
    gd_step,
    optimize,
    optimize_known_distribution,
    random_u_init,
)
from cvar_ldm.risk import analytic_mean_rate, surrogate_empirical_cvar


def test_eg_update_hand_case():
    # lam = (1/2, 1/2), scaled gradient (ln 2, 0):
    # lam * exp(g) = (1, 1/2), normalized (2/3, 1/3)
    lam = np.array([0.5, 0.5])
    out = optim._eg_update(lam, np.array([np.log(2.0), 0.0]))
    np.testing.assert_allclose(out, [2.0 / 3.0, 1.0 / 3.0], rtol=1e-14)


def test_eg_update_shift_invariant():
    rng = np.random.default_rng(7)
    lam = rng.dirichlet(np.ones(4))
    g = rng.normal(size=4)
    np.testing.assert_allclose(
        optim._eg_update(lam, g), optim._eg_update(lam, g + 123.4), rtol=1e-12
    )


def test_default_u_init_is_log_increments():
    np.testing.assert_allclose(default_u_init(np.array([1.0, 3.0])), [0.0, np.log(2.0)])


def test_random_u_init_reproducible():
    np.testing.assert_array_equal(random_u_init(5, 42), random_u_init(5, 42))
    assert not np.array_equal(random_u_init(5, 42), random_u_init(5, 43))


def test_steps_preserve_simplex_and_positivity():
    rng = np.random.default_rng(11)
    for trial in range(10):
        m = int(rng.integers(1, 6))
        u = rng.normal(size=m)
        lam = rng.dirichlet(np.ones(m))
        data = sample_gains(Rayleigh(1.0), int(rng.integers(5, 50)), trial)
        spec = RiskSpec(beta=float(rng.uniform(0.1, 1.0)), power=100.0)
        for _ in range(50):
            u_new = gd_step(u, lam, data, spec)
            lam = eg_step(lam, u, data, spec)
            u = u_new
            assert abs(lam.sum() - 1.0) <= 1e-12
            assert (lam > 0).all()
            assert np.isfinite(u).all()


def test_optimize_improves_and_converges():
    data = sample_gains(Rayleigh(1.0), 200, 3)
    spec = RiskSpec(beta=0.25, power=100.0)
    alloc, trace = optimize(data, spec, OptimConfig(m=3))
    assert trace.converged
    assert trace.objectives[-1] > trace.objectives[0]
    assert trace.iterations == len(trace.objectives) - 1
    assert surrogate_empirical_cvar(alloc, data, spec) == pytest.approx(
        float(trace.objectives[-1])
    )


def test_optimize_is_deterministic():
    data = sample_gains(Rayleigh(1.0), 100, 5)
    spec = RiskSpec(beta=0.5, power=100.0)
    a1, t1 = optimize(data, spec, OptimConfig(m=2))
    a2, t2 = optimize(data, spec, OptimConfig(m=2))
    np.testing.assert_array_equal(a1.s, a2.s)
    np.testing.assert_array_equal(a1.lam, a2.lam)
    np.testing.assert_array_equal(t1.objectives, t2.objectives)


def test_gauss_seidel_order_also_climbs():
    data = sample_gains(Rayleigh(1.0), 100, 9)
    spec = RiskSpec(beta=1.0, power=100.0)
    _, tj = optimize(data, spec, OptimConfig(m=2))
    _, tg = optimize(data, spec, OptimConfig(m=2, update_order="gauss-seidel"))
    assert tg.converged
    # both orders should land on essentially the same objective
    assert float(tg.objectives[-1]) == pytest.approx(float(tj.objectives[-1]), rel=1e-3)


def test_explicit_init_overrides_are_used():
    data = sample_gains(Rayleigh(1.0), 20, 1)
    spec = RiskSpec(beta=1.0, power=10.0)
    u0 = np.array([0.2, -0.3])
    lam0 = np.array([0.9, 0.1])
    _, trace = optimize(
        data, spec, OptimConfig(u_init=u0, lambda_init=lam0, max_iters=1, rel_tol=0.0)
    )
    # after exactly one sweep the iterate is one step away from (u0, lam0)
    u1 = gd_step(u0, lam0, data, spec)
    lam1 = eg_step(lam0, u0, data, spec)
    np.testing.assert_allclose(trace.s, np.exp(u1), rtol=1e-12)
    np.testing.assert_allclose(trace.lam, lam1, rtol=1e-12)


def test_random_init_depends_on_seed_only():
    data = sample_gains(Rayleigh(1.0), 50, 2)
    spec = RiskSpec(beta=1.0, power=100.0)
    a1, _ = optimize(data, spec, OptimConfig(m=2, init="random", seed=10, max_iters=50))
    a2, _ = optimize(data, spec, OptimConfig(m=2, init="random", seed=10, max_iters=50))
    a3, _ = optimize(data, spec, OptimConfig(m=2, init="random", seed=11, max_iters=50))
    np.testing.assert_array_equal(a1.s, a2.s)
    assert not np.array_equal(a1.s, a3.s)


def test_single_layer_known_distribution_matches_scalar_search():
    # with one layer the expected rate is log2(1 + t P) * ccdf(t); a
    # bounded scalar maximization is an independent check on the full loop
    model = Rayleigh(1.0)
    spec = RiskSpec(beta=1.0, power=100.0)
    alloc, trace = optimize_known_distribution(model, spec, OptimConfig(m=1))
    res = minimize_scalar(
        lambda t: -np.log2(1.0 + t * spec.power) * np.exp(-t),
        bounds=(1e-6, 10.0),
        method="bounded",
        options={"xatol": 1e-12},
    )
    assert analytic_mean_rate(alloc, model, spec) == pytest.approx(-res.fun, abs=5e-4)
    assert float(alloc.s[0]) == pytest.approx(float(res.x), abs=5e-3)


def test_known_distribution_value_increases_with_layers():
    model = Rayleigh(1.0)
    spec = RiskSpec(beta=1.0, power=100.0)
    vals = []
    for m in (1, 2, 3):
        alloc, _ = optimize_known_distribution(model, spec, OptimConfig(m=m))
        vals.append(analytic_mean_rate(alloc, model, spec))
    assert vals[0] < vals[1] < vals[2]


def test_config_validation():
    with pytest.raises(ParameterError):
        OptimConfig(eta=0.0)
    with pytest.raises(ParameterError):
        OptimConfig(gamma=-1.0)
    with pytest.raises(ParameterError):
        OptimConfig(max_iters=0)
    with pytest.raises(ParameterError):
        OptimConfig(update_order="both")
    with pytest.raises(ParameterError):
        OptimConfig(init="zeros")
    with pytest.raises(ParameterError):
        OptimConfig.from_dict({"m": 2, "step": 0.1})
    with pytest.raises(ParameterError):
        OptimConfig(m=None).layers()
    with pytest.raises(ParameterError):
        optimize(
            sample_gains(Rayleigh(1.0), 10, 0),
            RiskSpec(beta=1.0, power=10.0),
            OptimConfig(u_init=np.zeros(2), lambda_init=np.array([1.0, -0.5])),
        )


def test_config_json_round_trip(tmp_path):
    cfg = OptimConfig.from_json('{"m": 3, "eta": 0.02, "init": "random", "seed": 4}')
    assert cfg.m == 3 and cfg.eta == 0.02 and cfg.seed == 4
    p = tmp_path / "cfg.json"
    p.write_text('{"m": 2, "max_iters": 10}')
    cfg2 = OptimConfig.from_json(p)
    assert cfg2.m == 2 and cfg2.max_iters == 10


def test_trace_csv(tmp_path):
    data = sample_gains(Rayleigh(1.0), 30, 4)
    _, trace = optimize(data, RiskSpec(beta=1.0, power=10.0), OptimConfig(m=1, max_iters=5, rel_tol=0.0))
    out = tmp_path / "trace.csv"
    trace.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "iter,objective"
    assert len(lines) == len(trace.objectives) + 1
    assert lines[1].startswith("0,")
