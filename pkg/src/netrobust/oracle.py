"""Brute-force references: sampled worst-case gains, grid audits of embeddings,
and decision-variable bookkeeping for direct versus hierarchical analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import BandEmbedding, DiscEmbedding, band_embedding_best, disc_embedding
from .global_step import Network
from .lti import COND_LIMIT, FrequencyPoint
from .uncertainty import Ellipsoid, FactorizationData, eval_factorized, factorize_closed_loop, sample

BLOCK = 256
MIN_GRID = 16
DEFAULT_GRID = 400


@dataclass
class SampledGain:
    gamma_lb: float
    evaluated: int
    skipped: int
    worst_theta: np.ndarray | None


def _module_samples(e: Ellipsoid, seed: int, module: int, count: int) -> np.ndarray:
    """Prefix-stable draws: blocks of interior and boundary points, interleaved.

    The nominal estimate comes first so point ellipsoids give the nominal gain.
    """
    rows = [e.theta_hat[None, :]]
    have = 1
    block = 0
    while have < count:
        inner = sample(e, [seed, module, block, 0], "interior", BLOCK)
        outer = sample(e, [seed, module, block, 1], "boundary", BLOCK)
        mixed = np.empty((2 * BLOCK, e.dim))
        mixed[0::2], mixed[1::2] = inner, outer
        rows.append(mixed)
        have += 2 * BLOCK
        block += 1
    return np.vstack(rows)[:count]


def _batch_gain(T: np.ndarray, M: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Largest singular value of the star product for each row of ``T``; NaN if ill-posed."""
    M11, M12, M21, M22 = M[:n, :n], M[:n, n:], M[n:, :n], M[n:, n:]
    D = T[:, :, None] * np.eye(n)[None]
    K = np.eye(n)[None] - M11[None] @ D
    s = np.linalg.svd(K, compute_uv=False)
    ok = (s[:, -1] > 0) & (s[:, 0] <= COND_LIMIT * s[:, -1])
    gains = np.full(T.shape[0], np.nan)
    if np.any(ok):
        X = np.linalg.solve(K[ok], np.broadcast_to(M12, (int(ok.sum()),) + M12.shape))
        H = M22[None] + M21[None] @ D[ok] @ X
        gains[ok] = np.linalg.svd(H, compute_uv=False)[:, 0]
    return gains, ok


def worst_case_gain_sampled(network: Network, ellipsoids: list[Ellipsoid], omega: float,
                            samples_per_module: int = 1000, seed: int = 0) -> SampledGain:
    """Lower bound on the worst-case gain from joint parameter samples.

    Sample ``k`` takes the ``k``-th draw of every subsystem, so the bound is
    non-decreasing in ``samples_per_module`` for a fixed seed.
    """
    if samples_per_module < 1:
        raise ValueError("samples_per_module must be at least 1")
    n = network.n_mod
    if len(ellipsoids) != n:
        raise ValueError("need one ellipsoid per subsystem")
    p = FrequencyPoint(float(omega), network.plants[0].ts)
    T = np.empty((samples_per_module, n), dtype=complex)
    thetas = []
    for i in range(n):
        f = factorize_closed_loop(network.plants[i], network.controllers[i], p)
        th = _module_samples(ellipsoids[i], seed, i, samples_per_module)
        den = 1.0 + th @ f.ZD
        with np.errstate(divide="ignore", invalid="ignore"):
            T[:, i] = np.where(np.abs(den) > 1e-12, (f.e + th @ f.ZN) / den, np.nan)
        thetas.append(th)
    finite = np.all(np.isfinite(T), axis=1)
    gains = np.full(samples_per_module, np.nan)
    if np.any(finite):
        g, _ = _batch_gain(T[finite], network.interconnection.at(p.omega), n)
        gains[finite] = g
    valid = np.isfinite(gains)
    if not np.any(valid):
        return SampledGain(np.nan, 0, samples_per_module, None)
    k = int(np.nanargmax(gains))
    return SampledGain(float(gains[k]), int(valid.sum()), int((~valid).sum()),
                       np.array([th[k] for th in thetas]))


@dataclass
class TightnessReport:
    kind: str
    lmi_value: float
    grid_value: float
    slack: float
    points: int

    @property
    def relative_slack(self) -> float:
        return self.slack / self.lmi_value if self.lmi_value else np.inf


def _grid(e: Ellipsoid, resolution: int) -> np.ndarray:
    if e.dim == 2:
        r = np.linspace(0.0, 1.0, resolution)
        a = np.linspace(0.0, 2.0 * np.pi, resolution, endpoint=False)
        R, A = np.meshgrid(r, a, indexing="ij")
        u = np.stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()], axis=1)
        return e.theta_hat + np.sqrt(e.chi) * u @ e.chol.T
    count = resolution * resolution // 2
    return np.vstack([sample(e, [0, 0], "interior", count), sample(e, [0, 1], "boundary", count)])


def embedding_tightness(f: FactorizationData, e: Ellipsoid, embedding: DiscEmbedding | BandEmbedding | str = "disc",
                        grid_resolution: int = DEFAULT_GRID) -> TightnessReport:
    """Compare an embedding with the extremum over a dense parameter grid.

    Two parameters are gridded in polar form through the Cholesky factor
    (radius and angle, interior included); more parameters are sampled.
    For a disc the slack is ``rho`` minus the largest grid distance to the
    centre. For a band it is the width minus the grid spread of
    ``Re(conj(n) T)``.
    """
    if grid_resolution < MIN_GRID:
        raise ValueError(f"grid_resolution must be at least {MIN_GRID}")
    if embedding == "disc":
        embedding = disc_embedding(f, e)
    elif embedding == "band":
        embedding = band_embedding_best(f, e)
    theta = _grid(e, grid_resolution)
    T = eval_factorized(f, theta)
    if isinstance(embedding, DiscEmbedding):
        grid = float(np.max(np.abs(T - embedding.center)))
        lmi = embedding.radius
    elif isinstance(embedding, BandEmbedding):
        proj = np.real(np.conj(embedding.n) * T)
        grid = float(np.max(proj) - np.min(proj))
        lmi = embedding.width
    else:
        raise TypeError(f"unsupported embedding {embedding!r}")
    return TightnessReport(embedding.kind, lmi, grid, lmi - grid, theta.shape[0])


MODES = ("direct", "hierarchical-serial", "hierarchical-parallel")


@dataclass(frozen=True)
class ComplexityEstimate:
    mode: str
    n_mod: int
    n_theta_bar: int
    n_d: int
    local_problems: int
    local_variables: int
    global_variables: int
    direct_variables: int
    order: int
    exponent: int = 3

    @property
    def predicted_cost(self) -> float:
        """Relative cost with one ``O(n^3)`` solve per problem."""
        if self.mode == "direct":
            return float(self.direct_variables) ** self.exponent
        local = float(self.local_variables) ** self.exponent
        if self.mode == "hierarchical-serial":
            local *= self.local_problems
        return local + float(self.global_variables) ** self.exponent


def complexity_estimate(n_mod: int, n_theta_bar: int, n_d: int, mode: str = "direct") -> ComplexityEstimate:
    """Decision-variable counts of the direct and hierarchical analyses.

    Direct: ``2 + N n (N n - 1) / 2`` variables, cubic solve, order ``N^6``.
    Hierarchical: ``N n_d`` local problems of ``3 + n (n - 1) / 2`` variables
    and one global problem of ``N n_d`` variables, order ``N^3``.
    """
    if min(n_mod, n_theta_bar, n_d) < 1:
        raise ValueError("all arguments must be positive")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    nn = n_mod * n_theta_bar
    return ComplexityEstimate(
        mode=mode,
        n_mod=n_mod,
        n_theta_bar=n_theta_bar,
        n_d=n_d,
        local_problems=n_mod * n_d,
        local_variables=3 + n_theta_bar * (n_theta_bar - 1) // 2,
        global_variables=n_mod * n_d,
        direct_variables=2 + nn * (nn - 1) // 2,
        order=6 if mode == "direct" else 3,
    )
