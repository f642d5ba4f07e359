"""Ellipsoidal parameter sets and the linear-fractional form of an uncertain loop.

An uncertain closed loop is written, frequency by frequency, as::

    T(theta) = (e + Z_N theta) / (1 + Z_D theta)

with complex scalar ``e`` and complex rows ``Z_N``, ``Z_D``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy import stats

from .lti import FrequencyPoint, RationalTransfer, _as_point, poly

COND_LIMIT = 1e12


class FactorizationError(ArithmeticError):
    """The theta-free closed-loop denominator vanishes at this frequency."""


def chi2_quantile(probability: float, dof: int) -> float:
    """Level ``chi`` such that a chi-square(dof) variable is below it with ``probability``."""
    if not 0.0 < probability < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {probability}")
    if dof < 1:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    return float(stats.chi2.ppf(probability, dof))


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """``{theta : (theta - theta_hat)^T P^{-1} (theta - theta_hat) < chi}``."""

    theta_hat: np.ndarray
    P: np.ndarray
    chi: float

    def __post_init__(self):
        th = np.asarray(self.theta_hat, dtype=float).reshape(-1)
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        n = th.size
        if P.shape != (n, n):
            raise ValueError(f"covariance shape {P.shape} does not match {n} parameters")
        if np.max(np.abs(P - P.T)) > 1e-12 * max(1.0, np.max(np.abs(P))):
            raise ValueError("covariance is not symmetric")
        P = 0.5 * (P + P.T)
        if not self.chi > 0:
            raise ValueError(f"chi must be positive, got {self.chi}")
        try:
            L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive definite") from None
        if np.linalg.cond(P) > COND_LIMIT:
            raise ValueError("covariance is too close to singular")
        object.__setattr__(self, "theta_hat", th)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "chi", float(self.chi))
        object.__setattr__(self, "_L", L)

    @property
    def dim(self) -> int:
        return self.theta_hat.size

    @property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of ``P``."""
        return self._L

    def form(self, theta) -> np.ndarray | float:
        """Quadratic form ``(theta - theta_hat)^T P^{-1} (theta - theta_hat)``; rows of a 2-D input."""
        theta = np.asarray(theta, dtype=float)
        d = theta - self.theta_hat
        u = np.linalg.solve(self._L, d.T)
        q = np.sum(u * u, axis=0)
        return float(q) if theta.ndim == 1 else q

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.tolist(),
            "P": self.P.reshape(-1).tolist(),
            "chi": self.chi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ellipsoid":
        th = np.asarray(d["theta_hat"], dtype=float)
        P = np.asarray(d["P"], dtype=float).reshape(th.size, th.size)
        return cls(th, P, d["chi"])

    def __eq__(self, other):
        if not isinstance(other, Ellipsoid):
            return NotImplemented
        return (
            np.array_equal(self.theta_hat, other.theta_hat)
            and np.array_equal(self.P, other.P)
            and self.chi == other.chi
        )


def contains(e: Ellipsoid, theta) -> bool:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != e.dim:
        raise ValueError(f"theta has {theta.size} entries, ellipsoid has {e.dim}")
    return e.form(theta) < e.chi


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator so every (seed, stream) pair is reproducible."""
    return np.random.Generator(np.random.Philox(seed))


def sample(e: Ellipsoid, seed, mode: str = "interior", count: int = 1) -> np.ndarray:
    """Draw ``count`` parameter vectors, shape ``(count, dim)``.

    ``interior`` samples are uniform in the open ellipsoid; ``boundary``
    samples lie on its surface.
    """
    if mode not in ("interior", "boundary"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    n = e.dim
    if count == 0:
        return np.empty((0, n))
    rng = make_rng(seed)
    g = rng.standard_normal((count, n))
    u = g / np.linalg.norm(g, axis=1, keepdims=True)
    if mode == "interior":
        r = rng.random(count) ** (1.0 / n)
        # keep strictly inside: r == 1 only with probability zero, guard anyway
        u *= np.minimum(r, 1.0 - 1e-12)[:, None]
    return e.theta_hat + np.sqrt(e.chi) * u @ e.chol.T


@dataclass(frozen=True)
class AffineRationalPlant:
    """Plant ``(n0 + sum_j theta_j n_j) / (d0 + sum_j theta_j d_j)``."""

    num0: Polynomial
    den0: Polynomial
    num_inc: tuple
    den_inc: tuple
    ts: float | None = None

    def __post_init__(self):
        if len(self.num_inc) != len(self.den_inc):
            raise ValueError("numerator and denominator increments differ in count")
        object.__setattr__(self, "num0", poly(getattr(self.num0, "coef", self.num0)))
        object.__setattr__(self, "den0", poly(getattr(self.den0, "coef", self.den0)))
        object.__setattr__(self, "num_inc", tuple(poly(getattr(p, "coef", p)) for p in self.num_inc))
        object.__setattr__(self, "den_inc", tuple(poly(getattr(p, "coef", p)) for p in self.den_inc))

    @property
    def n_theta(self) -> int:
        return len(self.num_inc)

    def at(self, theta) -> RationalTransfer:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.n_theta:
            raise ValueError(f"expected {self.n_theta} parameters, got {theta.size}")
        num = self.num0 + sum((t * p for t, p in zip(theta, self.num_inc)), Polynomial([0.0]))
        den = self.den0 + sum((t * p for t, p in zip(theta, self.den_inc)), Polynomial([0.0]))
        return RationalTransfer(num, den, self.ts)


@dataclass(frozen=True, eq=False)
class FactorizationData:
    point: FrequencyPoint
    e: complex
    ZN: np.ndarray
    ZD: np.ndarray

    def __post_init__(self):
        ZN = np.asarray(self.ZN, dtype=complex).reshape(-1)
        ZD = np.asarray(self.ZD, dtype=complex).reshape(-1)
        if ZN.size != ZD.size:
            raise ValueError("Z_N and Z_D have different lengths")
        object.__setattr__(self, "ZN", ZN)
        object.__setattr__(self, "ZD", ZD)
        object.__setattr__(self, "e", complex(self.e))

    @property
    def n_theta(self) -> int:
        return self.ZN.size


def factorize_closed_loop(plant: AffineRationalPlant, K: RationalTransfer, p) -> FactorizationData:
    """Linear-fractional form of ``K G(theta) / (1 + K G(theta))`` at one frequency.

    With ``K = N_K / D_K`` the closed loop is ``N_K num / (den D_K + num N_K)``.
    Both are affine in theta; dividing by the theta-free part of the
    denominator gives ``e``, ``Z_N`` and ``Z_D``.
    """
    if plant.ts != K.ts:
        raise ValueError("plant and controller live in different time domains")
    p = _as_point(p, plant.ts)
    v = p.varpi
    NK, DK = complex(K.num(v)), complex(K.den(v))
    n0, d0 = complex(plant.num0(v)), complex(plant.den0(v))
    nj = np.array([complex(q(v)) for q in plant.num_inc])
    dj = np.array([complex(q(v)) for q in plant.den_inc])
    D = d0 * DK + n0 * NK
    scale = max(abs(d0 * DK), abs(n0 * NK), 1e-300)
    if abs(D) <= 1e-12 * scale:
        raise FactorizationError(f"normalizer vanishes at omega = {p.omega} rad/s")
    return FactorizationData(
        point=p,
        e=NK * n0 / D,
        ZN=NK * nj / D,
        ZD=(dj * DK + nj * NK) / D,
    )


def eval_factorized(f: FactorizationData, theta) -> complex | np.ndarray:
    """``(e + Z_N theta) / (1 + Z_D theta)``; accepts a batch of rows."""
    theta = np.asarray(theta, dtype=float)
    den = 1.0 + theta @ f.ZD
    if np.any(np.abs(den) <= 1e-12):
        raise ZeroDivisionError("1 + Z_D theta vanishes")
    val = (f.e + theta @ f.ZN) / den
    return complex(val) if np.ndim(val) == 0 else val


def whiten(f: FactorizationData, e: Ellipsoid) -> FactorizationData:
    """Rewrite ``f`` in coordinates where the ellipsoid is the unit ball.

    With ``theta = theta_hat + sqrt(chi) L v`` (``P = L L^T``), the returned
    data satisfies ``eval_factorized(g, v) == eval_factorized(f, theta)``.
    """
    S = np.sqrt(e.chi) * e.chol
    d0 = 1.0 + complex(e.theta_hat @ f.ZD)
    if abs(d0) <= 1e-12:
        raise FactorizationError("1 + Z_D theta_hat vanishes")
    n0 = f.e + complex(e.theta_hat @ f.ZN)
    return FactorizationData(f.point, n0 / d0, (f.ZN @ S) / d0, (f.ZD @ S) / d0)
