"""SISO transfer functions, frequency responses and the network star product."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .numerics import max_singular_value, min_singular_value

COND_LIMIT = 1e12


class PoleError(ArithmeticError):
    """Evaluation hit a pole of a transfer function."""


class IllPosedError(ArithmeticError):
    """``I - M11 Delta`` is singular to working precision."""


def poly(coeffs) -> Polynomial:
    """Polynomial from ascending coefficients, trailing zeros trimmed."""
    p = Polynomial(np.asarray(coeffs, dtype=float))
    return p.trim() if np.any(p.coef) else Polynomial([0.0])


@dataclass(frozen=True)
class FrequencyPoint:
    """Angular frequency ``omega`` (rad/s); ``ts`` set for discrete time."""

    omega: float
    ts: float | None = None

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError(f"omega must be non-negative, got {self.omega}")

    @classmethod
    def from_hz(cls, f: float, ts: float | None = None) -> "FrequencyPoint":
        return cls(2 * np.pi * f, ts)

    @property
    def hz(self) -> float:
        return self.omega / (2 * np.pi)

    @property
    def varpi(self) -> complex:
        """``j omega`` in continuous time, ``exp(j omega Ts)`` in discrete time."""
        if self.ts is None:
            return 1j * self.omega
        return complex(np.exp(1j * self.omega * self.ts))


def _as_point(p, ts=None) -> FrequencyPoint:
    return p if isinstance(p, FrequencyPoint) else FrequencyPoint(float(p), ts)


@dataclass(frozen=True)
class RationalTransfer:
    """``num(s) / den(s)``; ``ts=None`` for continuous time, else the sample period."""

    num: Polynomial
    den: Polynomial
    ts: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "num", poly(getattr(self.num, "coef", self.num)))
        object.__setattr__(self, "den", poly(getattr(self.den, "coef", self.den)))
        if not np.any(self.den.coef):
            raise ZeroDivisionError("denominator is the zero polynomial")

    @classmethod
    def from_coeffs(cls, num, den, ts=None) -> "RationalTransfer":
        return cls(poly(num), poly(den), ts)

    def __call__(self, p) -> complex:
        return freq_response(self, p)

    def _check_domain(self, other: "RationalTransfer"):
        if self.ts != other.ts:
            raise ValueError("transfer functions live in different time domains")

    def __mul__(self, other: "RationalTransfer") -> "RationalTransfer":
        self._check_domain(other)
        return RationalTransfer(self.num * other.num, self.den * other.den, self.ts)


def freq_response(tf: RationalTransfer, p) -> complex:
    """Evaluate ``tf`` at the frequency point ``p`` (or angular frequency)."""
    p = _as_point(p, tf.ts)
    v = p.varpi
    den = complex(tf.den(v))
    scale = float(np.max(np.abs(tf.den.coef)))
    if abs(den) <= 1e-12 * scale:
        raise PoleError(f"pole at omega = {p.omega} rad/s")
    return complex(tf.num(v)) / den


def closed_loop(G: RationalTransfer, K: RationalTransfer) -> RationalTransfer:
    """Complementary sensitivity ``KG / (1 + KG)`` at polynomial level."""
    G._check_domain(K)
    num = K.num * G.num
    den = K.den * G.den + num
    if not np.any(den.coef):
        raise ArithmeticError("1 + KG is identically zero")
    return RationalTransfer(num, den, G.ts)


@dataclass(frozen=True)
class InterconnectionMatrix:
    """Network matrix mapping ``(y, w)`` to ``(r, z)``.

    Rows are ``n_mod`` local references followed by ``n_z`` performance
    outputs; columns are ``n_mod`` local outputs followed by ``n_w``
    performance inputs. ``table`` optionally overrides ``M`` at given
    angular frequencies (exact key match).
    """

    M: np.ndarray
    n_mod: int
    n_w: int
    n_z: int
    table: dict = field(default_factory=dict)

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=complex))
        object.__setattr__(self, "M", M)
        want = (self.n_mod + self.n_z, self.n_mod + self.n_w)
        for key, Mk in [(None, M), *self.table.items()]:
            if np.shape(Mk) != want:
                raise ValueError(f"interconnection matrix at {key} has shape {np.shape(Mk)}, expected {want}")

    def at(self, omega: float | None = None) -> np.ndarray:
        if omega is not None and omega in self.table:
            return np.asarray(self.table[omega], dtype=complex)
        return self.M

    def blocks(self, omega: float | None = None):
        """``(M11, M12, M21, M22)`` partitions."""
        M = self.at(omega)
        n = self.n_mod
        return M[:n, :n], M[:n, n:], M[n:, :n], M[n:, n:]


def build_interconnection(A, B, performance: str = "tracking") -> InterconnectionMatrix:
    """``[[A, B], [A - I, B]]``: references from the network, tracking errors as outputs."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError(f"dimension mismatch: A {A.shape}, B {B.shape}")
    if performance != "tracking":
        raise ValueError(f"unknown performance specification {performance!r}")
    M = np.block([[A, B], [A - np.eye(n), B]])
    return InterconnectionMatrix(M, n_mod=n, n_w=B.shape[1], n_z=n)


def star_product(deltas, M: InterconnectionMatrix, omega: float | None = None) -> np.ndarray:
    """``M22 + M21 D (I - M11 D)^{-1} M12`` with ``D = diag(deltas)``."""
    M11, M12, M21, M22 = M.blocks(omega)
    D = np.diag(np.asarray(deltas, dtype=complex))
    K = np.eye(M.n_mod) - M11 @ D
    smin = min_singular_value(K)
    if smin == 0 or max_singular_value(K) / smin > COND_LIMIT:
        raise IllPosedError("I - M11 Delta is singular (ill-posed interconnection)")
    return M22 + M21 @ D @ np.linalg.solve(K, M12)


def global_gain(deltas, M: InterconnectionMatrix, omega: float | None = None) -> float:
    """Largest singular value of the closed performance channel."""
    return max_singular_value(star_product(deltas, M, omega))
