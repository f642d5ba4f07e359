from fractions import Fraction

import numpy as np
import pytest
from scipy import signal

from netrobust.lti import FrequencyPoint, closed_loop, freq_response
from netrobust.scenario import (
    DEFAULT_W_TABLE,
    GAIN_NOMINAL,
    TAU_NOMINAL,
    build_platoon,
    chain_adjacency,
    controller,
    discretize_loop,
    is_stable,
    platoon_plant,
    simulate_and_identify,
    synthetic_identification,
    w_bound_db,
)
from netrobust.uncertainty import contains, eval_factorized, factorize_closed_loop


def test_platoon_defaults():
    sc = build_platoon()
    assert sc.n_mod == 5 and sc.theta0.shape == (5, 2)
    assert sc.controller_name == "improved"
    assert np.all(np.abs(sc.theta0[:, 0] / TAU_NOMINAL - 1) <= 0.10)
    assert np.all(np.abs(sc.theta0[:, 1] / GAIN_NOMINAL - 1) <= 0.10)


def test_platoon_without_dispersion():
    sc = build_platoon(4, seed=3, dispersion=0.0)
    assert np.all(sc.theta0 == [TAU_NOMINAL, GAIN_NOMINAL])


def test_platoon_seed_reproducible():
    assert np.array_equal(build_platoon(seed=7).theta0, build_platoon(seed=7).theta0)
    assert not np.array_equal(build_platoon(seed=7).theta0, build_platoon(seed=8).theta0)


def test_platoon_rejects_bad_input():
    with pytest.raises(ValueError):
        build_platoon(0)
    with pytest.raises(ValueError):
        build_platoon(5, dispersion=0.6)
    with pytest.raises(ValueError):
        controller("pid")


def test_custom_controller():
    K = controller("initial")
    sc = build_platoon(3, K=K)
    assert sc.controller_name == "custom" and sc.K is K


def test_plant_structure():
    s = 0.7j
    G = platoon_plant().at([0.2, 1.5])
    assert G(0.7) == pytest.approx(1.5 / (s**2 * (0.2 * s + 1)), rel=1e-12)


def test_controllers():
    s = 2.0j
    assert freq_response(controller("initial"), 2.0) == pytest.approx((2 * s + 1) / (0.05 * s + 1), rel=1e-12)
    ref = 12111 * (s + 10) * (s**2 + 0.9 * s + 0.4) / (s * (s**2 + 111.6 * s + 6230))
    assert freq_response(controller("improved"), 2.0) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("name", ["initial", "improved"])
def test_nominal_loops_stable(name):
    assert is_stable(closed_loop(platoon_plant().at([TAU_NOMINAL, GAIN_NOMINAL]), controller(name)))


def test_chain_five():
    A, B = chain_adjacency(5)
    ref = np.array([
        [0, .5, 0, 0, 0],
        [.5, 0, .5, 0, 0],
        [0, .5, 0, .5, 0],
        [0, 0, .5, 0, .5],
        [0, 0, 0, 1, 0],
    ])
    np.testing.assert_array_equal(A, ref)
    np.testing.assert_array_equal(B.ravel(), [.5, 0, 0, 0, 0])


def test_chain_small():
    A, B = chain_adjacency(1)
    np.testing.assert_array_equal(A, [[0.0]])
    np.testing.assert_array_equal(B, [[1.0]])
    A, B = chain_adjacency(2)
    np.testing.assert_array_equal(A, [[0, .5], [1, 0]])
    np.testing.assert_array_equal(B.ravel(), [.5, 0])
    with pytest.raises(ValueError):
        chain_adjacency(0)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 9])
def test_chain_rows_sum_to_one(n):
    A, B = chain_adjacency(n)
    rows = [sum(Fraction(v) for v in r) for r in np.c_[A, B]]
    assert rows == [1] * n


def test_factorization_identity_all_modules():
    sc = build_platoon()
    g = np.random.default_rng(2)
    for fz in (0.05, 0.13, 0.15, 0.17, 3.0):
        f = factorize_closed_loop(sc.plant, sc.K, FrequencyPoint.from_hz(fz))
        for T, th in zip(sc.closed_loops(), sc.theta0):
            assert eval_factorized(f, th) == pytest.approx(T(FrequencyPoint.from_hz(fz)), rel=1e-10)
        th = sc.theta0[0] * g.uniform(0.8, 1.2, 2)
        direct = closed_loop(sc.plant.at(th), sc.K)(FrequencyPoint.from_hz(fz))
        assert eval_factorized(f, th) == pytest.approx(direct, rel=1e-10)


def test_synthetic_contains_truth():
    sc = build_platoon()
    for seed in range(20):
        for e, th in zip(synthetic_identification(sc, 0.05, seed=seed), sc.theta0):
            assert contains(e, th)


def test_synthetic_chi_and_shape():
    sc = build_platoon()
    ells = synthetic_identification(sc, 0.05, seed=0)
    for e, th in zip(ells, sc.theta0):
        assert e.chi == pytest.approx(5.99146, abs=1e-5)
        np.testing.assert_allclose(np.sqrt(np.diag(e.P)) / th, 0.05, rtol=1e-12)
        corr = e.P[0, 1] / np.sqrt(e.P[0, 0] * e.P[1, 1])
        assert abs(corr) <= 0.8 + 1e-12
    assert synthetic_identification(sc, 0.05, probability=0.5)[0].chi == pytest.approx(2 * np.log(2))


def test_synthetic_tiny_spread():
    sc = build_platoon()
    for e, th in zip(synthetic_identification(sc, 1e-9, seed=0), sc.theta0):
        np.testing.assert_allclose(e.theta_hat, th, rtol=1e-7)


def test_synthetic_centered():
    sc = build_platoon()
    for e, th in zip(synthetic_identification(sc, 0.05, centered=True), sc.theta0):
        assert np.array_equal(e.theta_hat, th)


def test_synthetic_rejects_bad_std():
    with pytest.raises(ValueError):
        synthetic_identification(build_platoon(), 0.0)


def test_w_table():
    assert DEFAULT_W_TABLE[0] == (0.01, -40.0)
    assert w_bound_db(DEFAULT_W_TABLE, 0.01) == pytest.approx(-40.0)
    assert w_bound_db(DEFAULT_W_TABLE, 0.001) == pytest.approx(-40.0)
    assert w_bound_db(DEFAULT_W_TABLE, 10 ** -1.5) == pytest.approx(-20.0)  # +40 dB/dec
    assert w_bound_db(DEFAULT_W_TABLE, 0.15) == pytest.approx(0.0)
    assert w_bound_db(DEFAULT_W_TABLE, 5e3) == pytest.approx(0.0)


def test_discretization_matches_step_response():
    sc = build_platoon()
    T = closed_loop(sc.plant.at(sc.theta0[0]), controller("initial"))
    ts = 0.01
    b, a = discretize_loop(T, ts)
    yd = signal.lfilter(b, a, np.ones(300))
    # continuous step response from partial fractions of T(s)/s
    r, p, _ = signal.residue(T.num.coef[::-1], np.r_[T.den.coef[::-1], 0.0])
    t = np.arange(300) * ts
    yc = np.real(sum(ri * np.exp(pi * t) for ri, pi in zip(r, p)))
    assert np.max(np.abs(yd - yc)) <= 1e-6


def test_identification_noiseless_recovers_truth():
    sc = build_platoon()
    res = simulate_and_identify(sc, noise_variance=1e-12, seed=1)
    for e, th in zip(res.ellipsoids, sc.theta0):
        np.testing.assert_allclose(e.theta_hat, th, rtol=1e-3)


def test_identification_default_settings():
    sc = build_platoon()
    res = simulate_and_identify(sc, seed=0)
    assert len(res.ellipsoids) == 5 and len(res.sigma2) == 5
    for e, s2 in zip(res.ellipsoids, res.sigma2):
        assert s2 == pytest.approx(4.0, rel=0.2)  # residual variance estimates the noise
        assert np.all(np.linalg.eigvalsh(e.P) > 0)
        assert e.chi == pytest.approx(5.99146, abs=1e-5)


def test_identification_deterministic():
    sc = build_platoon(2)
    a = simulate_and_identify(sc, seed=5)
    b = simulate_and_identify(sc, seed=5)
    for ea, eb in zip(a.ellipsoids, b.ellipsoids):
        assert ea == eb


def test_identification_ellipsoids_small():
    # largest 95% semi-axis at most a quarter of |theta|
    sc = build_platoon()
    res = simulate_and_identify(sc, seed=0)
    for e, th in zip(res.ellipsoids, sc.theta0):
        semi = np.sqrt(e.chi * np.linalg.eigvalsh(e.P)[-1])
        assert semi <= 0.25 * np.linalg.norm(th)
