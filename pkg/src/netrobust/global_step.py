"""Global step: combine per-subsystem triplets into a bound on the network gain.

For subsystem sets ``{D : x |D|^2 + 2 Re(conj(y) D) + z <= 0}`` the
performance channel ``diag(D_i) * M`` has gain below ``gamma`` whenever::

    [M; I]^* N(gamma^2, T) [M; I] > 0

where ``N`` weighs the ``(r, y)`` pairs of each subsystem with its triplets
through positive multipliers ``T^k_i`` and the performance pair with
``(-I, gamma^2 I)``. The constraint is affine in ``(gamma^2, T)``, so the
bound is minimized directly.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .embedding import (
    DEFAULT_ANGLES,
    DissipativityTriplet,
    band_embedding_best,
    disc_embedding,
    triplets_of,
)
from .lti import FrequencyPoint, InterconnectionMatrix, RationalTransfer
from .uncertainty import AffineRationalPlant, Ellipsoid, factorize_closed_loop

log = logging.getLogger(__name__)

EPS_REL = 1e-9
DELTA = 1e-9
# Weight on sum(T) in the objective. The optimal multipliers can form an
# unbounded set; without a tie-break the barrier drives them to huge values.
TIE_BREAK = 1e-9

EMBEDDING_KINDS = ("disc", "disc+band")


@dataclass
class TripletBundle:
    """Triplets per subsystem (outer list) and per property (inner list)."""

    triplets: list[list[DissipativityTriplet]]
    point: FrequencyPoint | None = None

    def __post_init__(self):
        counts = {len(t) for t in self.triplets}
        if len(counts) != 1 or 0 in counts:
            raise ValueError("every subsystem needs the same, non-zero number of triplets")
        if any(t.x < 0 for ts in self.triplets for t in ts):
            raise ValueError("triplets must have x >= 0")

    @property
    def n_mod(self) -> int:
        return len(self.triplets)

    @property
    def n_d(self) -> int:
        return len(self.triplets[0])


@dataclass
class GlobalCertificate:
    status: str
    gamma_ub: float
    multipliers: np.ndarray  # (n_d, n_mod)
    gamma2: float = np.inf
    residual: float = np.nan
    iterations: int = 0
    solve_time: float = 0.0

    @property
    def gamma_ub_db(self) -> float:
        return to_db(self.gamma_ub)

    @property
    def certified(self) -> bool:
        return self.status == sdp.OPTIMAL


def to_db(g: float) -> float:
    return float(20.0 * np.log10(g)) if g > 0 else -np.inf


def _global_terms(M: InterconnectionMatrix, bundle: TripletBundle, omega=None):
    """Constant part and per-variable parts of ``-[M; I]^* N [M; I]``.

    Variable 0 is ``gamma^2``; variable ``1 + k*n_mod + i`` is ``T^k_i``.
    """
    n, nw, nz = M.n_mod, M.n_w, M.n_z
    if bundle.n_mod != n:
        raise ValueError(f"bundle has {bundle.n_mod} subsystems, interconnection {n}")
    Mw = M.at(omega)
    Phi = np.vstack([Mw, np.eye(n + nw)])
    # row layout of N: r (n), z (nz), y (n), w (nw)
    dim = 2 * n + nz + nw
    r0, y0, w0 = 0, n + nz, 2 * n + nz
    cong = lambda N: -(Phi.conj().T @ N @ Phi)

    N0 = np.zeros((dim, dim), dtype=complex)
    N0[n:n + nz, n:n + nz] = -np.eye(nz)
    Ng = np.zeros((dim, dim), dtype=complex)
    Ng[w0:, w0:] = np.eye(nw)
    terms = {0: cong(Ng)}
    for k in range(bundle.n_d):
        for i in range(n):
            t = bundle.triplets[i][k]
            Nk = np.zeros((dim, dim), dtype=complex)
            Nk[r0 + i, r0 + i] = t.z
            Nk[y0 + i, y0 + i] = t.x
            Nk[y0 + i, r0 + i] = t.y
            Nk[r0 + i, y0 + i] = np.conj(t.y)
            terms[1 + k * n + i] = cong(Nk)
    return cong(N0), terms


def assemble_global_lmi(M: InterconnectionMatrix, bundle: TripletBundle, omega=None,
                      eps_rel: float = EPS_REL, delta: float = DELTA,
                      tie_break: float = TIE_BREAK) -> sdp.LmiProblem:
    """Minimize ``gamma^2`` over ``(gamma^2, T)``; strict inequalities become margins.

    Variables are ``gamma^2`` then ``T^k_i`` at index ``1 + k*n_mod + i``.
    """
    F0, terms = _global_terms(M, bundle, omega)
    nv = 1 + bundle.n_d * bundle.n_mod
    margin = eps_rel * (1.0 + float(np.linalg.norm(F0, 2)))
    lower = np.full(nv, delta)
    lower[0] = 0.0
    c = np.full(nv, tie_break)
    c[0] = 1.0
    return sdp.LmiProblem(nv, c, [sdp.LmiBlock(F0, terms, margin=margin, name="global")], lower)


def gamma_upper_bound(M: InterconnectionMatrix, bundle: TripletBundle, omega=None,
                      options: sdp.SolverOptions | None = None) -> GlobalCertificate:
    t0 = time.perf_counter()
    sol = sdp.solve(assemble_global_lmi(M, bundle, omega), options)
    mult = sol.x[1:].reshape(bundle.n_d, bundle.n_mod)
    if sol.status != sdp.OPTIMAL:
        # no finite bound is certified with these triplets
        return GlobalCertificate("unbounded-certificate" if sol.status in (sdp.INFEASIBLE, sdp.UNBOUNDED)
                                 else sol.status, np.inf, mult, iterations=sol.iterations,
                                 solve_time=time.perf_counter() - t0)
    g2 = max(float(sol.x[0]), 0.0)
    return GlobalCertificate(sdp.OPTIMAL, float(np.sqrt(g2)), mult, g2, sol.residual,
                             sol.iterations, time.perf_counter() - t0)


def gamma_upper_bound_bisection(M: InterconnectionMatrix, bundle: TripletBundle, hi: float,
                                omega=None, tol: float = 1e-7) -> float:
    """Same bound as :func:`gamma_upper_bound`, found by bisection on ``gamma^2``.

    Each probe is a feasibility problem with ``gamma^2`` fixed.
    """
    F0, terms = _global_terms(M, bundle, omega)
    margin = EPS_REL * (1.0 + float(np.linalg.norm(F0, 2)))
    G = terms.pop(0)
    shifted = {k - 1: v for k, v in terms.items()}
    nv = len(shifted)

    def feasible(g2):
        block = sdp.LmiBlock(F0 + g2 * G, shifted, margin=margin)
        prob = sdp.LmiProblem(nv, np.zeros(nv), [block], np.full(nv, DELTA))
        return sdp.solve(prob).status == sdp.OPTIMAL

    return float(np.sqrt(sdp.minimize_scalar_by_bisection(feasible, 0.0, hi, tol)))


@dataclass
class Network:
    plants: list[AffineRationalPlant]
    controllers: list[RationalTransfer]
    interconnection: InterconnectionMatrix

    def __post_init__(self):
        n = self.interconnection.n_mod
        if len(self.plants) != n or len(self.controllers) != n:
            raise ValueError("plant/controller count does not match the interconnection")

    @property
    def n_mod(self) -> int:
        return self.interconnection.n_mod


@dataclass
class EmbeddingConfig:
    kinds: str = "disc+band"
    band_angles: int = DEFAULT_ANGLES

    def __post_init__(self):
        if self.kinds not in EMBEDDING_KINDS:
            raise ValueError(f"embeddings must be one of {EMBEDDING_KINDS}, got {self.kinds!r}")

    @property
    def n_d(self) -> int:
        return 1 if self.kinds == "disc" else 3


@dataclass
class LocalResult:
    module: int
    omega: float
    embeddings: list = field(default_factory=list)
    triplets: list = field(default_factory=list)
    error: str | None = None
    solve_time: float = 0.0


@dataclass
class FrequencyRecord:
    point: FrequencyPoint
    certificate: GlobalCertificate | None
    local: list[LocalResult]
    error: str | None = None

    @property
    def gamma_ub(self) -> float:
        return self.certificate.gamma_ub if self.certificate else np.inf


@dataclass
class SweepResult:
    records: list[FrequencyRecord]
    config: EmbeddingConfig
    parallel: bool
    workers: int
    local_wall: float
    global_wall: float
    local_cpu: float

    @property
    def gamma_ub(self) -> np.ndarray:
        return np.array([r.gamma_ub for r in self.records])


def _local_task(args) -> LocalResult:
    i, plant, K, ellipsoid, point, cfg = args
    t0 = time.perf_counter()
    res = LocalResult(module=i, omega=point.omega)
    try:
        f = factorize_closed_loop(plant, K, point)
        embs = [disc_embedding(f, ellipsoid)]
        if cfg.kinds == "disc+band":
            embs.append(band_embedding_best(f, ellipsoid, cfg.band_angles))
        res.embeddings = embs
        res.triplets = [t for emb in embs for t in triplets_of(emb)]
    except Exception as exc:  # recorded per frequency, the sweep continues
        res.error = f"{type(exc).__name__}: {exc}"
    res.solve_time = time.perf_counter() - t0
    return res


def _global_task(args):
    M, triplets, point, options = args
    return gamma_upper_bound(M, TripletBundle(triplets, point), point.omega, options)


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("NETROBUST_THREADS")
    n = requested or 4
    if env:
        n = min(n, max(1, int(env)))
    return n


def _map(fn, tasks, pool):
    if pool is None:
        return [fn(t) for t in tasks]
    return list(pool.map(fn, tasks))


def frequency_sweep(network: Network, ellipsoids: list[Ellipsoid], omegas,
                    config: EmbeddingConfig | None = None, parallel: bool = False,
                    workers: int | None = None,
                    options: sdp.SolverOptions | None = None) -> SweepResult:
    """Local embeddings for every (subsystem, frequency), then one global LMI per frequency.

    ``omegas`` are angular frequencies in rad/s, ascending. Results are
    slotted by index, so serial and parallel runs give identical numbers.
    """
    cfg = config or EmbeddingConfig()
    omegas = [float(w) for w in omegas]
    if not omegas:
        raise ValueError("frequency grid is empty")
    if any(b < a for a, b in zip(omegas, omegas[1:])):
        raise ValueError("frequency grid must be ascending")
    if len(ellipsoids) != network.n_mod:
        raise ValueError("need one ellipsoid per subsystem")
    ts = network.plants[0].ts
    points = [FrequencyPoint(w, ts) for w in omegas]
    n = network.n_mod
    tasks = [
        (i, network.plants[i], network.controllers[i], ellipsoids[i], p, cfg)
        for p in points for i in range(n)
    ]
    nworkers = worker_count(workers) if parallel else 1
    pool = ProcessPoolExecutor(max_workers=nworkers) if parallel else None
    try:
        t0 = time.perf_counter()
        local = _map(_local_task, tasks, pool)
        t1 = time.perf_counter()
        per_freq = [local[j * n:(j + 1) * n] for j in range(len(points))]
        gtasks, slots = [], []
        for j, (p, loc) in enumerate(zip(points, per_freq)):
            if all(r.error is None for r in loc):
                gtasks.append((network.interconnection, [r.triplets for r in loc], p, options))
                slots.append(j)
        certs = _map(_global_task, gtasks, pool)
        t2 = time.perf_counter()
    finally:
        if pool is not None:
            pool.shutdown()
    by_slot = dict(zip(slots, certs))
    records = []
    for j, (p, loc) in enumerate(zip(points, per_freq)):
        errs = [f"module {r.module}: {r.error}" for r in loc if r.error]
        cert = by_slot.get(j)
        if cert is not None and not cert.certified:
            errs.append(f"global step: {cert.status}")
        if errs:
            log.warning("frequency %.6g rad/s: %s", p.omega, "; ".join(errs))
        records.append(FrequencyRecord(p, cert, loc, "; ".join(errs) or None))
    return SweepResult(
        records=records,
        config=cfg,
        parallel=parallel,
        workers=nworkers,
        local_wall=t1 - t0,
        global_wall=t2 - t1,
        local_cpu=sum(r.solve_time for r in local),
    )
