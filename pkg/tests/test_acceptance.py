"""Acceptance run: one test per criterion, so ``pytest -v`` prints one pass/fail line each."""

import json
import time

import numpy as np
import pytest

from netrobust import sdp
from netrobust.cli import main
from netrobust.embedding import BandEmbedding, DiscEmbedding, DissipativityTriplet, disc_embedding
from netrobust.global_step import EmbeddingConfig, TripletBundle, frequency_sweep, gamma_upper_bound, to_db
from netrobust.lti import FrequencyPoint, InterconnectionMatrix, global_gain
from netrobust.oracle import complexity_estimate, embedding_tightness, worst_case_gain_sampled
from netrobust.scenario import build_platoon, simulate_and_identify, synthetic_identification
from netrobust.uncertainty import Ellipsoid, contains, eval_factorized, factorize_closed_loop, sample

from conftest import FREQS_HZ
from sdp_cases import analytic_cases

OMEGAS = [2 * np.pi * f for f in FREQS_HZ]


def sweep(platoon, ellipsoids, kinds):
    return frequency_sweep(platoon.network(), ellipsoids, OMEGAS, EmbeddingConfig(kinds))


@pytest.fixture(scope="module")
def sweeps(platoon, platoon_ellipsoids):
    return {k: sweep(platoon, platoon_ellipsoids, k) for k in ("disc", "disc+band")}


def test_c01_sdp_analytic_suite():
    cases = analytic_cases()
    assert len(cases) >= 10
    t0 = time.perf_counter()
    for name, problem, optimum, _ in cases:
        sol = sdp.solve(problem)
        assert sol.status == sdp.OPTIMAL, name
        assert abs(sol.objective - optimum) <= 1e-6 * max(1.0, abs(optimum)), name
        assert sol.residual <= 1e-8, name
    assert time.perf_counter() - t0 < 10.0


def test_c02_disc_tightness(platoon, platoon_ellipsoids):
    t0 = time.perf_counter()
    for fz in FREQS_HZ:
        f = factorize_closed_loop(platoon.plant, platoon.K, FrequencyPoint.from_hz(fz))
        rep = embedding_tightness(f, platoon_ellipsoids[0], "disc", 400)
        assert rep.lmi_value >= rep.grid_value, fz
        assert rep.lmi_value <= 1.02 * rep.grid_value, fz
    assert time.perf_counter() - t0 < 60.0


def test_c03_containment(platoon, platoon_ellipsoids, sweeps):
    worst = -np.inf
    for rec in sweeps["disc+band"].records:
        for loc in rec.local:
            e = platoon_ellipsoids[loc.module]
            f = factorize_closed_loop(platoon.plant, platoon.K, rec.point)
            th = np.vstack([sample(e, [loc.module, 0], "interior", 5000),
                            sample(e, [loc.module, 1], "boundary", 5000)])
            T = eval_factorized(f, th)
            for emb in loc.embeddings:
                if isinstance(emb, DiscEmbedding):
                    worst = max(worst, float(np.max(np.abs(T - emb.center) - emb.radius)))
                else:
                    proj = np.real(np.conj(emb.n) * T)
                    worst = max(worst, float(np.max(proj - emb.a1)), float(np.max(emb.a2 - proj)))
    assert worst <= 1e-8


def test_c04_global_soundness(platoon, platoon_ellipsoids, sweeps):
    net = platoon.network()
    for w, *ubs in zip(OMEGAS, sweeps["disc"].gamma_ub, sweeps["disc+band"].gamma_ub):
        lb = worst_case_gain_sampled(net, platoon_ellipsoids, w, 1000, seed=0).gamma_lb
        assert all(np.isfinite(u) and u >= lb for u in ubs)


def test_c05_triplet_monotonicity(platoon, sweeps):
    a, b = sweeps["disc"].gamma_ub, sweeps["disc+band"].gamma_ub
    assert np.all(b <= a * (1 + 1e-6))
    # narrow spread where disc-only bounds sit near -12 dB
    ells = synthetic_identification(platoon, 0.01, seed=0, centered=True)
    disc = sweep(platoon, ells, "disc").gamma_ub
    full = sweep(platoon, ells, "disc+band").gamma_ub
    assert np.all(full <= disc * (1 + 1e-6))
    d_disc = np.array([to_db(g) for g in disc])
    d_full = np.array([to_db(g) for g in full])
    improvement = (d_disc - d_full) / np.abs(d_disc)
    assert np.all((improvement >= 0) & (improvement <= 0.10))


def test_c06_single_disc_exact():
    M = InterconnectionMatrix(np.array([[0, 1], [1, 0]]), 1, 1, 1)
    for c, rho in [(0.3 + 0.4j, 0.2), (-1.2j, 0.05), (2.0, 1.0), (0.0, 0.7)]:
        t = DissipativityTriplet(1.0, -c, abs(c) ** 2 - rho**2)
        g = gamma_upper_bound(M, TripletBundle([[t]])).gamma_ub
        assert abs(g - (abs(c) + rho)) <= 1e-4 * (abs(c) + rho)


def test_c07_zero_uncertainty_limit(platoon, platoon_ellipsoids):
    pts = [Ellipsoid(e.theta_hat, e.P, 1e-12) for e in platoon_ellipsoids]
    ub = sweep(platoon, pts, "disc+band").gamma_ub
    loops = platoon.closed_loops([e.theta_hat for e in pts])
    for w, u in zip(OMEGAS, ub):
        nominal = global_gain([T(FrequencyPoint(w)) for T in loops], platoon.interconnection, w)
        assert abs(u - nominal) <= 1e-3 * nominal


def test_c08_table1_magnitude(platoon, centered_ellipsoids):
    ub = sweep(platoon, centered_ellipsoids, "disc+band").gamma_ub
    db = np.array([to_db(g) for g in ub])
    assert np.all((db >= -18.0) & (db <= -8.0))


def test_c09_parallel_local_step(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"embeddings": "disc+band", "workers": 4}))
    out = {}
    for mode in ("serial", "parallel"):
        assert main(["--config", str(cfg), f"--{mode}", "--emit", str(tmp_path / mode), "--format", "json"]) == 0
        out[mode] = (tmp_path / mode / "report.json").read_bytes()
        out[mode + "_t"] = json.loads((tmp_path / mode / "timings.json").read_text())
    assert out["serial"] == out["parallel"]
    assert out["parallel_t"]["workers"] >= 4
    assert out["parallel_t"]["local_wall_s"] <= out["serial_t"]["local_wall_s"]


def test_c10_complexity_counts():
    assert complexity_estimate(5, 2, 3, "direct").direct_variables == 47
    for mode in ("hierarchical-serial", "hierarchical-parallel"):
        for n, nd in ((5, 1), (5, 3), (12, 3)):
            est = complexity_estimate(n, 2, nd, mode)
            assert est.local_variables == 4
            assert est.global_variables == n * nd


def test_c11_identification_coverage():
    sc = build_platoon()
    t0 = time.perf_counter()
    inside = []
    for seed in range(50):
        res = simulate_and_identify(sc, seed=seed)
        inside += [contains(e, th) for e, th in zip(res.ellipsoids, sc.theta0)]
    assert time.perf_counter() - t0 < 300.0
    assert np.mean(inside) >= 0.85
