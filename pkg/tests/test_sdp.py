import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netrobust import sdp
from netrobust.sdp import LmiBlock, LmiProblem, check_feasibility, minimize_scalar_by_bisection, solve

from sdp_cases import analytic_cases

cvxpy = pytest.importorskip("cvxpy")


@pytest.mark.parametrize("name,problem,optimum,x_opt", analytic_cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_analytic_instance(name, problem, optimum, x_opt):
    sol = solve(problem)
    assert sol.status == sdp.OPTIMAL
    assert sol.objective == pytest.approx(optimum, rel=1e-6, abs=1e-7)
    assert sol.residual <= 1e-8
    assert check_feasibility(problem, sol.x).feasible
    if x_opt is not None:
        np.testing.assert_allclose(sol.x, x_opt, rtol=1e-3, atol=1e-3)


def test_infeasible_detected():
    # x <= -1 and x >= 1
    p = LmiProblem(1, [1.0], [LmiBlock([[1.0]], {0: [[1.0]]}), LmiBlock([[1.0]], {0: [[-1.0]]})])
    assert solve(p).status == sdp.INFEASIBLE


def test_unbounded_detected():
    p = LmiProblem(1, [1.0], [LmiBlock([[0.0]], {0: [[1.0]]})])
    assert solve(p).status == sdp.UNBOUNDED


def test_feasibility_check_examples():
    p = LmiProblem(1, [1.0], [LmiBlock(-np.array([[0, 1.0], [1.0, 0]]), {0: -np.eye(2)})])
    assert check_feasibility(p, [2.0]).feasible
    rep = check_feasibility(p, [0.0])
    assert not rep.feasible and rep.worst == pytest.approx(1.0)


def test_feasibility_reports_box_violation():
    p = LmiProblem(1, [1.0], [LmiBlock([[-1.0]], {})], lower=[0.0])
    assert not check_feasibility(p, [-0.5]).feasible


def test_pure_feasibility_problem():
    p = LmiProblem(2, [0.0, 0.0], [LmiBlock(np.eye(2), {0: -np.eye(2), 1: np.diag([0.0, 1.0])})])
    sol = solve(p)
    assert sol.status == sdp.OPTIMAL and check_feasibility(p, sol.x).feasible


def test_malformed_problem_rejected():
    with pytest.raises(ValueError):
        LmiProblem(1, [1.0, 2.0], [])
    with pytest.raises(ValueError):
        LmiProblem(1, [1.0], [LmiBlock(np.eye(2), {3: np.eye(2)})])
    with pytest.raises(ValueError):
        LmiBlock(np.eye(2), {0: np.eye(3)})


def random_instance(seed, n=3, d=4, complex_=True):
    """Strictly feasible at 0 (F0 < 0) and bounded (c_i = -tr(Z F_i) with Z > 0)."""
    g = np.random.default_rng(seed)

    def herm():
        A = g.standard_normal((d, d)) + (1j * g.standard_normal((d, d)) if complex_ else 0)
        return 0.5 * (A + A.conj().T)

    F = {i: herm() for i in range(n)}
    R = g.standard_normal((d, d))
    F0 = -(R @ R.T + np.eye(d))
    W = g.standard_normal((d, d)) + 1j * g.standard_normal((d, d))
    Z = W @ W.conj().T + 0.1 * np.eye(d)
    c = np.array([-np.real(np.trace(Z @ F[i])) for i in range(n)])
    return LmiProblem(n, c, [LmiBlock(F0, F)])


def cvx_optimum(p: LmiProblem) -> float:
    x = cvxpy.Variable(p.num_vars)
    cons = []
    for b in p.blocks:
        expr = b.F0 + sum(x[i] * Fi for i, Fi in b.F.items())
        expr = (expr + expr.H) / 2
        cons.append(expr << -b.margin * np.eye(b.dim))
    fin = np.isfinite(p.lower)
    if np.any(fin):
        cons.append(x[np.flatnonzero(fin)] >= p.lower[fin])
    prob = cvxpy.Problem(cvxpy.Minimize(p.objective @ x), cons)
    prob.solve(solver="CLARABEL")
    return prob.value


@pytest.mark.parametrize("seed", range(8))
def test_random_instances_match_cvxpy(seed):
    p = random_instance(seed, n=2 + seed % 3, d=3 + seed % 2, complex_=bool(seed % 2))
    sol = solve(p)
    assert sol.status == sdp.OPTIMAL
    assert sol.objective == pytest.approx(cvx_optimum(p), rel=1e-6, abs=1e-7)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_zero_cost_variable_never_increases_optimum(seed):
    p = random_instance(seed)
    g = np.random.default_rng(seed + 1)
    A = g.standard_normal((4, 4))
    blocks = [LmiBlock(b.F0, {**b.F, p.num_vars: 0.5 * (A + A.T)}) for b in p.blocks]
    q = LmiProblem(p.num_vars + 1, np.r_[p.objective, 0.0], blocks)
    a, b = solve(p), solve(q)
    assert b.objective <= a.objective + 1e-7 * (1 + abs(a.objective))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_scaling_by_ten(seed):
    p = random_instance(seed)
    q = LmiProblem(p.num_vars, 10 * p.objective,
                   [LmiBlock(10 * b.F0, {i: 10 * Fi for i, Fi in b.F.items()}) for b in p.blocks])
    a, b = solve(p), solve(q)
    assert b.objective == pytest.approx(10 * a.objective, rel=1e-7, abs=1e-7)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_optimal_solutions_pass_feasibility_check(seed):
    p = random_instance(seed)
    sol = solve(p)
    assert sol.status == sdp.OPTIMAL
    assert check_feasibility(p, sol.x, 1e-8).feasible


def test_deterministic():
    p = random_instance(5)
    a, b = solve(p), solve(p)
    assert a.iterations == b.iterations and np.array_equal(a.x, b.x)


def test_iteration_cap_reported():
    p = random_instance(1)
    sol = solve(p, sdp.SolverOptions(max_newton=3))
    assert sol.status == sdp.MAX_ITERATIONS


def test_bisection_examples():
    assert minimize_scalar_by_bisection(lambda g: g >= 4, 0.0, 100.0, 1e-6) == pytest.approx(4.0, abs=1e-6)
    assert minimize_scalar_by_bisection(lambda g: True, 0.0, 100.0) == 0.0
    with pytest.raises(sdp.SolverError):
        minimize_scalar_by_bisection(lambda g: False, 0.0, 1.0)


def test_dump_problem(tmp_path):
    p = analytic_cases()[0][1]
    path = tmp_path / "p.txt"
    sdp.dump_problem(p, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "1 1"
    assert lines[3].startswith("block 2")
