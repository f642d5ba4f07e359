"""Small dense LMI solver.

Problems have the form::

    minimize    c^T x
    subject to  F0_b + sum_i x_i F_{b,i} <= -margin_b * I   for every block b
                x_i >= lower_i

with complex Hermitian blocks. Blocks are realified once and the problem is
solved with a log-barrier interior-point method (damped Newton centering,
barrier parameter multiplied by ``mu`` between centerings). A phase-1
problem ``min s  s.t.  F(x) <= s I`` locates a strictly feasible start.

Iterates stay strictly inside the feasible set, so an ``optimal`` solution is
always feasible; the objective is within ``nu / t`` of the optimum, where
``nu`` is the barrier parameter.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .numerics import as_hermitian, realify

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max-iterations"


class SolverError(RuntimeError):
    pass


@dataclass
class LmiBlock:
    """One affine Hermitian constraint ``F0 + sum_i x_i F[i] <= -margin I``.

    ``F`` maps variable index to coefficient matrix; variables that do not
    enter the block are simply absent.
    """

    F0: np.ndarray
    F: dict[int, np.ndarray]
    margin: float = 0.0
    name: str = ""

    def __post_init__(self):
        self.F0 = as_hermitian(self.F0)
        n = self.F0.shape[0]
        F = {}
        for i, Fi in self.F.items():
            Fi = as_hermitian(Fi)
            if Fi.shape != (n, n):
                raise ValueError(
                    f"block {self.name!r}: coefficient {i} has shape {Fi.shape}, expected {(n, n)}"
                )
            F[int(i)] = Fi
        self.F = F

    @property
    def dim(self) -> int:
        return self.F0.shape[0]

    def evaluate(self, x) -> np.ndarray:
        out = self.F0.copy()
        for i, Fi in self.F.items():
            out = out + x[i] * Fi
        return out


@dataclass
class LmiProblem:
    num_vars: int
    objective: np.ndarray
    blocks: list[LmiBlock]
    lower: np.ndarray | None = None
    names: list[str] | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        if self.objective.size != self.num_vars:
            raise ValueError(
                f"objective has {self.objective.size} entries for {self.num_vars} variables"
            )
        if self.lower is None:
            self.lower = np.full(self.num_vars, -np.inf)
        else:
            self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
            if self.lower.size != self.num_vars:
                raise ValueError("lower bound length does not match num_vars")
        for b in self.blocks:
            bad = [i for i in b.F if not 0 <= i < self.num_vars]
            if bad:
                raise ValueError(f"block {b.name!r} references unknown variables {bad}")


@dataclass
class SolverOptions:
    gap_rtol: float = 1e-8
    gap_atol: float = 0.0
    mu: float = 10.0
    max_newton: int = 200
    newton_tol: float = 1e-7
    feas_tol: float = 1e-8
    radius: float = 1e8


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray
    objective: float
    residual: float
    iterations: int
    wall_time: float
    phase1_iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class FeasibilityReport:
    block_residuals: list[float]
    box_violations: list[float]
    tol: float

    @property
    def worst(self) -> float:
        vals = list(self.block_residuals) + [v for v in self.box_violations]
        return max(vals) if vals else -np.inf

    @property
    def feasible(self) -> bool:
        return all(r <= self.tol for r in self.block_residuals) and all(
            v <= self.tol for v in self.box_violations
        )


def check_feasibility(problem: LmiProblem, x, tol: float = 1e-8) -> FeasibilityReport:
    """Exact residuals of ``x``: per-block max eigenvalue and box violations.

    Margins are not subtracted; a block is satisfied when its max eigenvalue
    is at most ``tol``.
    """
    x = np.asarray(x, dtype=float)
    if x.size != problem.num_vars:
        raise ValueError(f"x has {x.size} entries for {problem.num_vars} variables")
    res = []
    for b in problem.blocks:
        w = np.linalg.eigvalsh(b.evaluate(x))
        res.append(float(w[-1]))
    box = []
    for i in np.flatnonzero(np.isfinite(problem.lower)):
        box.append(float(problem.lower[i] - x[i]))
    return FeasibilityReport(res, box, tol)


class _Barrier:
    """Realified constraint data and the barrier derivatives.

    Each block stores ``S(x) = G0 - sum_i x_i G_i`` with ``G0 = -(F0 + margin I)``
    and ``G_i = F_i``, both realified; ``S(x) > 0`` is the strict constraint.
    """

    def __init__(self, mats: list[tuple[np.ndarray, np.ndarray]], lower: np.ndarray,
                 radius: float):
        # mats: list of (G0 (d,d), G (n,d,d))
        self.mats = mats
        self.lower = lower
        self.boxed = np.flatnonzero(np.isfinite(lower))
        self.n = lower.size
        # |x_i| <= radius keeps the barrier bounded below along free directions
        self.radius = radius
        self.nu = sum(G0.shape[0] for G0, _ in mats) + self.boxed.size + 2 * self.n

    def _box_slacks(self, x):
        return x[self.boxed] - self.lower[self.boxed], self.radius - x, self.radius + x

    def slack(self, x) -> list[np.ndarray]:
        return [G0 - np.tensordot(x, G, axes=1) for G0, G in self.mats]

    def inside(self, x) -> bool:
        if any(np.any(r <= 0) for r in self._box_slacks(x)):
            return False
        for S in self.slack(x):
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return False
        return True

    def value(self, x) -> float:
        v = 0.0
        for S in self.slack(x):
            L = np.linalg.cholesky(S)
            v -= 2.0 * np.sum(np.log(np.diag(L)))
        for r in self._box_slacks(x):
            v -= np.sum(np.log(r))
        return float(v)

    def derivatives(self, x) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        g = np.zeros(n)
        H = np.zeros((n, n))
        for (G0, G), S in zip(self.mats, self.slack(x)):
            L = np.linalg.cholesky(S)
            d = S.shape[0]
            # W_i = L^{-1} G_i L^{-T}, all i at once
            A = solve_triangular(L, G.transpose(1, 0, 2).reshape(d, n * d), lower=True)
            A = A.reshape(d, n, d).transpose(2, 1, 0).reshape(d, n * d)
            W = solve_triangular(L, A, lower=True).reshape(d, n, d).transpose(1, 0, 2)
            g += np.trace(W, axis1=1, axis2=2)
            Wf = W.reshape(n, d * d)
            H += Wf @ Wf.T
        r, up, dn = self._box_slacks(x)
        g[self.boxed] -= 1.0 / r
        H[self.boxed, self.boxed] += 1.0 / r**2
        g += 1.0 / up - 1.0 / dn
        H[np.diag_indices(self.n)] += 1.0 / up**2 + 1.0 / dn**2
        return g, H


def _realified(problem: LmiProblem, extra_col: bool = False):
    """Realified (G0, G) per block; ``extra_col`` appends a phase-1 variable ``s``."""
    n = problem.num_vars + (1 if extra_col else 0)
    mats = []
    for b in problem.blocks:
        R0 = realify(b.F0)
        d = R0.shape[0]
        G0 = -(R0 + b.margin * np.eye(d))
        G = np.zeros((n, d, d))
        for i, Fi in b.F.items():
            G[i] = realify(Fi)
        if extra_col:
            G[-1] = -np.eye(d)
        mats.append((G0, G))
    return mats


def _newton_solve(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    # symmetric diagonal scaling: variables of very different magnitude
    # otherwise make H numerically singular near the optimum
    s = 1.0 / np.sqrt(np.maximum(np.diag(H), np.finfo(float).tiny))
    Hs = H * s[:, None] * s[None, :]
    gs = g * s
    try:
        L = np.linalg.cholesky(Hs)
        return -s * solve_triangular(L.T, solve_triangular(L, gs, lower=True), lower=False)
    except np.linalg.LinAlgError:
        return -s * np.linalg.lstsq(Hs, gs, rcond=None)[0]


class _IterationLimit(Exception):
    pass


def _center(barrier: _Barrier, c: np.ndarray, t: float, x: np.ndarray, opts: SolverOptions,
            budget: list[int], stop: Callable[[np.ndarray], bool] | None = None) -> np.ndarray:
    """Damped Newton minimization of ``t c^T x + phi(x)`` from a strictly feasible ``x``."""
    f = lambda z: t * float(c @ z) + barrier.value(z)
    fx = f(x)
    while True:
        if stop is not None and stop(x):
            return x
        g, H = barrier.derivatives(x)
        g = g + t * c
        dx = _newton_solve(H, g)
        lam2 = float(-g @ dx)
        if lam2 <= 2 * opts.newton_tol:
            return x
        if budget[0] >= opts.max_newton:
            raise _IterationLimit
        budget[0] += 1
        # trust-region style cap: flat barrier directions give huge raw steps
        step = min(1.0, 10.0 * (1.0 + float(np.max(np.abs(x)))) / float(np.max(np.abs(dx))))
        slope = float(g @ dx)
        while True:
            xn = x + step * dx
            if barrier.inside(xn):
                fn = f(xn)
                if fn <= fx + 0.25 * step * slope:
                    break
            step *= 0.5
            if step < 1e-14:
                # no further progress possible at machine precision
                return x
        if fn >= fx or np.array_equal(xn, x):
            return x
        x, fx = xn, fn


def _phase1(problem: LmiProblem, opts: SolverOptions, budget: list[int]) -> np.ndarray | None:
    """Return a strictly feasible point, or ``None`` when none exists.

    Minimizes ``s`` subject to ``F(x) <= s I`` inside a box ``|x_i| <= R``.
    The box starts small and grows by factors of 100 up to ``opts.radius``:
    along directions where the barrier is unbounded a large box lets the
    iterates run off to huge, badly scaled values.
    """
    n = problem.num_vars
    lower = problem.lower
    x0 = np.zeros(n)
    fin = np.isfinite(lower)
    x0[fin] = np.maximum(lower[fin] + 1.0, 0.0)
    # s enters the boxes too: lb_i - x_i <= s
    lower_aux = np.full(n + 1, -np.inf)
    mats = _realified(problem, extra_col=True)
    for i in np.flatnonzero(fin):
        G = np.zeros((n + 1, 1, 1))
        G[i, 0, 0] = -1.0
        G[n, 0, 0] = -1.0
        mats.append((np.array([[-lower[i]]]), G))
    worst = -np.inf
    for G0, G in mats:
        S = G0 - np.tensordot(np.r_[x0, 0.0], G, axes=1)
        worst = max(worst, -float(np.linalg.eigvalsh(S)[0]))
    scale = max(1.0, abs(worst))
    c = np.r_[np.zeros(n), 1.0]
    done = lambda v: v[-1] < 0.0
    radius = 1e3 * (1.0 + float(np.max(np.abs(x0), initial=0.0)) + scale)
    while True:
        radius = min(radius, opts.radius)
        barrier = _Barrier(mats, lower_aux, radius)
        z = np.r_[x0, max(worst, 0.0) + scale]
        t = 1.0 / scale
        while True:
            z = _center(barrier, c, t, z, opts, budget, stop=done)
            if z[-1] < 0.0:
                return z[:n]
            gap = barrier.nu / t
            if z[-1] - gap >= 0.0 or gap <= 1e-13 * scale:
                break
            t *= opts.mu
        # an inactive box cannot be what keeps s positive
        if radius >= opts.radius or float(np.max(np.abs(z[:n]), initial=0.0)) < 0.1 * radius:
            return None
        radius *= 100.0


def _initial_t(barrier: _Barrier, c: np.ndarray, x: np.ndarray) -> float:
    """Barrier weight whose centering condition ``t c + grad phi = 0`` is best met at ``x``."""
    g, H = barrier.derivatives(x)
    Hc = _newton_solve(H, c)
    Hg = _newton_solve(H, g)
    cHc = float(c @ -Hc)
    t = -float(c @ -Hg) / cHc if cHc > 0 else 0.0
    fallback = barrier.nu / (1.0 + abs(float(c @ x)))
    return t if t > 1e-3 * fallback else fallback


def solve(problem: LmiProblem, options: SolverOptions | None = None) -> SdpSolution:
    """Minimize ``c^T x`` subject to the problem's LMI blocks and bounds."""
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    n = problem.num_vars
    budget = [0]
    c = problem.objective

    def finish(status, x, p1=0):
        x = np.asarray(x, dtype=float)
        rep = check_feasibility(problem, x, opts.feas_tol)
        return SdpSolution(
            status=status,
            x=x,
            objective=float(c @ x),
            residual=rep.worst,
            iterations=budget[0],
            wall_time=time.perf_counter() - t0,
            phase1_iterations=p1,
        )

    try:
        x = _phase1(problem, opts, budget)
    except _IterationLimit:
        return finish(MAX_ITERATIONS, np.zeros(n))
    p1 = budget[0]
    if x is None:
        return finish(INFEASIBLE, np.zeros(n), p1)
    if not np.any(c):
        return finish(OPTIMAL, x, p1)

    # Box grows only when the iterates press against it; a needlessly large
    # box parks unbounded optimal directions near its faces.
    mats = _realified(problem)
    radius = min(opts.radius, 1e3 * (1.0 + float(np.max(np.abs(x)))))
    try:
        while True:
            barrier = _Barrier(mats, problem.lower, radius)
            t = _initial_t(barrier, c, x)
            while True:
                x = _center(barrier, c, t, x, opts, budget)
                if float(c @ x) < -1e-2 * opts.radius * float(np.max(np.abs(c))):
                    return finish(UNBOUNDED, x, p1)
                gap = barrier.nu / t
                if gap <= opts.gap_atol + opts.gap_rtol * (1.0 + abs(float(c @ x))):
                    break
                t *= opts.mu
            if radius >= opts.radius or float(np.max(np.abs(x))) < 0.1 * radius:
                return finish(OPTIMAL, x, p1)
            radius = min(opts.radius, 100.0 * radius)
    except _IterationLimit:
        return finish(MAX_ITERATIONS, x, p1)


def minimize_scalar_by_bisection(feasible_at: Callable[[float], bool], lo: float, hi: float,
                                 tol: float = 1e-6) -> float:
    """Smallest value in ``[lo, hi]`` where a monotone predicate holds, to ``tol``."""
    if not feasible_at(hi):
        raise SolverError(f"predicate infeasible at the interval top {hi}")
    if feasible_at(lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible_at(mid):
            hi = mid
        else:
            lo = mid
    return hi


def dump_problem(problem: LmiProblem, path) -> None:
    """Write a plain-text dump of the problem for cross-checking elsewhere.

    Layout: a header line ``num_vars num_blocks``, the objective, the lower
    bounds, then for each block its dimension, margin and the matrices
    ``F0, F1, ..., Fn`` as rows of ``re im`` pairs (row-major).
    """
    def fmt(M):
        return "\n".join(
            " ".join(f"{v.real:.17g} {v.imag:.17g}" for v in row) for row in M
        )

    lines = [f"{problem.num_vars} {len(problem.blocks)}"]
    lines.append(" ".join(f"{v:.17g}" for v in problem.objective))
    lines.append(" ".join(f"{v:.17g}" for v in problem.lower))
    for b in problem.blocks:
        lines.append(f"block {b.dim} {b.margin:.17g} {b.name}")
        lines.append(fmt(b.F0))
        for i in range(problem.num_vars):
            lines.append(fmt(b.F.get(i, np.zeros((b.dim, b.dim)))))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
