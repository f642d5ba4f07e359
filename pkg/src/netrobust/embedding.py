"""Local step: certify quadratic constraints on an uncertain loop's frequency response.

A triplet ``(x, y, z)`` describes the set of complex ``D`` with
``x |D|^2 + 2 Re(conj(y) D) + z <= 0``. For ``x > 0`` this is a disc, for
``x = 0`` a half plane. The loop ``T(theta) = (e + Z_N theta) / (1 + Z_D theta)``
satisfies the constraint for every ``theta`` in an ellipsoid exactly when a
small LMI in an S-procedure multiplier ``xi >= 0`` and a real antisymmetric
matrix ``X`` is feasible.

Embedding LMIs are solved in whitened coordinates, where the ellipsoid is
the unit ball (see :func:`netrobust.uncertainty.whiten`); certificates are
mapped back to the caller's coordinates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .lti import FrequencyPoint
from .numerics import skew_basis, skew_from_vector
from .uncertainty import Ellipsoid, FactorizationData, eval_factorized, sample, whiten

DEFAULT_ANGLES = 32
COUNTEREXAMPLE_SAMPLES = 4096

# rho^2 of a near-point set is tiny; the default gap would leave rho near 1e-5
EMBED_OPTIONS = sdp.SolverOptions(gap_rtol=1e-11)


class EmbeddingError(RuntimeError):
    pass


@dataclass(frozen=True)
class DissipativityTriplet:
    x: float
    y: complex
    z: float
    point: FrequencyPoint | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", complex(self.y))
        object.__setattr__(self, "z", float(self.z))

    def value(self, D) -> np.ndarray | float:
        """Quadratic form ``x |D|^2 + 2 Re(conj(y) D) + z``; ``<= 0`` inside the set."""
        D = np.asarray(D, dtype=complex)
        return self.x * np.abs(D) ** 2 + 2.0 * np.real(np.conj(self.y) * D) + self.z

    @property
    def nonempty(self) -> bool:
        return self.x == 0 or abs(self.y) ** 2 >= self.x * self.z


@dataclass
class SProcedureCertificate:
    xi: float
    skew: np.ndarray

    def to_dict(self) -> dict:
        return {"xi": self.xi, "skew": np.asarray(self.skew).reshape(-1).tolist()}


@dataclass
class DiscEmbedding:
    center: complex
    radius: float
    certificate: SProcedureCertificate
    point: FrequencyPoint
    solve_time: float = 0.0
    kind: str = field(default="disc", init=False)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "omega": self.point.omega,
            "center": [self.center.real, self.center.imag],
            "radius": self.radius,
            "certificate": self.certificate.to_dict(),
        }


@dataclass
class BandEmbedding:
    n: complex
    a1: float
    a2: float
    certificates: tuple[SProcedureCertificate, SProcedureCertificate]
    point: FrequencyPoint
    solve_time: float = 0.0
    kind: str = field(default="band", init=False)

    @property
    def width(self) -> float:
        return self.a1 - self.a2

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "omega": self.point.omega,
            "n": [self.n.real, self.n.imag],
            "a1": self.a1,
            "a2": self.a2,
            "certificates": [c.to_dict() for c in self.certificates],
        }


def build_B(e: Ellipsoid) -> np.ndarray:
    """Matrix ``B`` with ``[theta; 1]^T B [theta; 1] < 0`` exactly on the ellipsoid."""
    Pinv = np.linalg.inv(e.P)
    Pinv = 0.5 * (Pinv + Pinv.T)
    th = e.theta_hat
    v = Pinv @ th
    n = e.dim
    B = np.empty((n + 1, n + 1))
    B[:n, :n] = Pinv
    B[:n, n] = -v
    B[n, :n] = -v
    B[n, n] = th @ v - e.chi
    return B


def _a1(f: FactorizationData) -> np.ndarray:
    a = np.r_[f.ZD, 1.0]
    return np.outer(a.conj(), a)


def _a2(f: FactorizationData) -> np.ndarray:
    a = np.r_[f.ZD, 1.0]
    b = np.r_[f.ZN, f.e]
    return np.outer(a.conj(), b)


def _pad(M: np.ndarray, lead: int) -> np.ndarray:
    """Embed ``M`` in the lower-right corner of a matrix with ``lead`` extra rows/cols."""
    n = M.shape[0] + lead
    out = np.zeros((n, n), dtype=complex)
    out[lead:, lead:] = M
    return out


def _multiplier_terms(B: np.ndarray, lead: int, first: int) -> tuple[dict, int]:
    """Coefficients of ``-xi B + j X`` starting at variable index ``first``."""
    terms = {first: _pad(-B.astype(complex), lead)}
    for k, E in enumerate(skew_basis(B.shape[0])):
        terms[first + 1 + k] = _pad(1j * E, lead)
    return terms, len(terms)


def _dissipativity_block(f: FactorizationData, B: np.ndarray, t: DissipativityTriplet,
                  first: int = 0) -> tuple[sdp.LmiBlock, int]:
    """LMI block in ``(xi, X)`` for the triplet; returns the block and variable count."""
    A1 = _a1(f)
    if t.x < 0:
        raise ValueError("triplet must have x >= 0")
    if t.x > 0:
        alpha = abs(t.y) ** 2 / t.x**2 - t.z / t.x
        lam = np.r_[f.ZN + (t.y / t.x) * f.ZD, f.e + t.y / t.x]
        n = lam.size
        F0 = np.zeros((n + 1, n + 1), dtype=complex)
        F0[0, 0] = -alpha
        F0[0, 1:] = lam
        F0[1:, 0] = lam.conj()
        F0[1:, 1:] = -A1
        terms, nv = _multiplier_terms(B, 1, first)
    else:
        A2 = _a2(f)
        F0 = A2.conj().T * t.y + np.conj(t.y) * A2 + A1 * t.z
        terms, nv = _multiplier_terms(B, 0, first)
    return sdp.LmiBlock(F0, terms, name="dissipativity"), nv


def assemble_dissipativity(f: FactorizationData, e: Ellipsoid, t: DissipativityTriplet) -> sdp.LmiProblem:
    """Feasibility problem in ``(xi, X)`` certifying the triplet on the whole ellipsoid.

    Variables: ``xi`` (bounded below by 0) followed by the strictly upper
    triangle of ``X``, row by row.
    """
    if f.n_theta != e.dim:
        raise ValueError(f"factorization has {f.n_theta} parameters, ellipsoid {e.dim}")
    block, nv = _dissipativity_block(f, build_B(e), t)
    lower = np.full(nv, -np.inf)
    lower[0] = 0.0
    return sdp.LmiProblem(nv, np.zeros(nv), [block], lower)


def _unit_B(n: int) -> np.ndarray:
    B = np.eye(n + 1)
    B[n, n] = -1.0
    return B


def _unwhiten(cert_x: np.ndarray, f: FactorizationData, e: Ellipsoid) -> SProcedureCertificate:
    """Map a whitened-coordinate ``(xi, X)`` back to the original parameters."""
    n = e.dim
    S = np.zeros((n + 1, n + 1))
    S[:n, :n] = np.sqrt(e.chi) * e.chol
    S[:n, n] = e.theta_hat
    S[n, n] = 1.0
    d0 = 1.0 + complex(e.theta_hat @ f.ZD)
    g = abs(d0) ** 2
    Sinv = np.linalg.inv(S)
    Xw = skew_from_vector(cert_x[1:], n + 1)
    X = g * Sinv.T @ Xw @ Sinv
    return SProcedureCertificate(xi=float(cert_x[0]) * g / e.chi, skew=0.5 * (X - X.T))


def certificate_vector(cert: SProcedureCertificate) -> np.ndarray:
    """``(xi, X)`` flattened in the variable order of :func:`assemble_dissipativity`."""
    X = np.asarray(cert.skew)
    return np.r_[cert.xi, X[np.triu_indices(X.shape[0], 1)]]


@dataclass
class DissipativityCheck:
    holds: bool | None
    certificate: SProcedureCertificate | None = None
    counterexample: np.ndarray | None = None
    violation: float | None = None


def check_dissipative(f: FactorizationData, e: Ellipsoid, t: DissipativityTriplet,
                      seed: int = 0, samples: int = COUNTEREXAMPLE_SAMPLES) -> DissipativityCheck:
    """Certify the triplet over the ellipsoid, or look for a violating parameter.

    ``holds`` is ``None`` when the LMI is infeasible but sampling found no
    violator.
    """
    if t.x > 0 and not t.nonempty:
        return DissipativityCheck(False, counterexample=e.theta_hat.copy(),
                                  violation=float(t.value(eval_factorized(f, e.theta_hat))))
    fw = whiten(f, e)
    block, nv = _dissipativity_block(fw, _unit_B(e.dim), t)
    lower = np.full(nv, -np.inf)
    lower[0] = 0.0
    sol = sdp.solve(sdp.LmiProblem(nv, np.zeros(nv), [block], lower), EMBED_OPTIONS)
    if sol.status == sdp.OPTIMAL:
        return DissipativityCheck(True, certificate=_unwhiten(sol.x, f, e))
    if sol.status != sdp.INFEASIBLE:
        raise EmbeddingError(f"solver returned {sol.status}")
    thetas = np.vstack([
        sample(e, seed, "boundary", samples),
        sample(e, seed + 1, "interior", samples),
    ])
    vals = t.value(eval_factorized(f, thetas))
    k = int(np.argmax(vals))
    if vals[k] > 0:
        return DissipativityCheck(False, counterexample=thetas[k], violation=float(vals[k]))
    return DissipativityCheck(None, violation=float(vals[k]))


def disc_embedding(f: FactorizationData, e: Ellipsoid,
                   options: sdp.SolverOptions | None = None) -> DiscEmbedding:
    """Smallest disc containing ``T(theta)`` for every ``theta`` in the ellipsoid.

    Decision variables ``(rho^2, Re c, Im c, xi, X)``. With ``x = 1``,
    ``y = -c`` the Schur-complemented constraint only sees ``rho^2`` in the
    corner and ``c`` affinely in the off-diagonal row, so the problem is an
    SDP.
    """
    t0 = time.perf_counter()
    fw = whiten(f, e)
    n = fw.n_theta
    a = np.r_[fw.ZD, 1.0]
    lam0 = np.r_[fw.ZN, fw.e]
    F0 = np.zeros((n + 2, n + 2), dtype=complex)
    F0[0, 1:] = lam0
    F0[1:, 0] = lam0.conj()
    F0[1:, 1:] = -_a1(fw)
    E_rho = np.zeros_like(F0)
    E_rho[0, 0] = -1.0
    E_re = np.zeros_like(F0)
    E_re[0, 1:] = -a
    E_re[1:, 0] = -a.conj()
    E_im = np.zeros_like(F0)
    E_im[0, 1:] = -1j * a
    E_im[1:, 0] = 1j * a.conj()
    terms, nv = _multiplier_terms(_unit_B(n), 1, 3)
    terms.update({0: E_rho, 1: E_re, 2: E_im})
    nv += 3
    lower = np.full(nv, -np.inf)
    lower[3] = 0.0
    c = np.zeros(nv)
    c[0] = 1.0
    sol = sdp.solve(sdp.LmiProblem(nv, c, [sdp.LmiBlock(F0, terms, name="disc")], lower),
                    options or EMBED_OPTIONS)
    if sol.status != sdp.OPTIMAL:
        raise EmbeddingError(f"disc embedding solver returned {sol.status}")
    rho2, cr, ci = sol.x[:3]
    return DiscEmbedding(
        center=complex(cr, ci),
        radius=float(np.sqrt(max(rho2, 0.0))),
        certificate=_unwhiten(sol.x[3:], f, e),
        point=f.point,
        solve_time=time.perf_counter() - t0,
    )


def band_embedding_fixed(f: FactorizationData, e: Ellipsoid, n: complex,
                         options: sdp.SolverOptions | None = None) -> BandEmbedding:
    """Narrowest band ``a2 <= Re(conj(n) T) <= a1`` for a fixed unit orientation ``n``."""
    if abs(abs(n) - 1.0) > 1e-9:
        raise ValueError(f"band orientation must have unit modulus, got |n| = {abs(n)}")
    t0 = time.perf_counter()
    fw = whiten(f, e)
    B = _unit_B(fw.n_theta)
    A1, A2 = _a1(fw), _a2(fw)
    H = A2.conj().T * n + np.conj(n) * A2
    upper_terms, nv = _multiplier_terms(B, 0, 1)
    upper_terms[0] = -2.0 * A1
    lower_terms, _ = _multiplier_terms(B, 0, nv + 2)
    lower_terms[nv + 1] = 2.0 * A1
    total = 2 * (nv + 1)
    blocks = [
        sdp.LmiBlock(H, upper_terms, name="band-upper"),
        sdp.LmiBlock(-H, lower_terms, name="band-lower"),
    ]
    lower = np.full(total, -np.inf)
    lower[1] = 0.0
    lower[nv + 2] = 0.0
    c = np.zeros(total)
    c[0], c[nv + 1] = 1.0, -1.0
    sol = sdp.solve(sdp.LmiProblem(total, c, blocks, lower), options or EMBED_OPTIONS)
    if sol.status != sdp.OPTIMAL:
        raise EmbeddingError(f"band embedding solver returned {sol.status}")
    x = sol.x
    return BandEmbedding(
        n=complex(n),
        a1=float(x[0]),
        a2=float(x[nv + 1]),
        certificates=(_unwhiten(x[1:nv + 1], f, e), _unwhiten(x[nv + 2:], f, e)),
        point=f.point,
        solve_time=time.perf_counter() - t0,
    )


def band_embedding_best(f: FactorizationData, e: Ellipsoid, num_angles: int = DEFAULT_ANGLES,
                        options: sdp.SolverOptions | None = None) -> BandEmbedding:
    """Narrowest band over orientations ``exp(j pi k / num_angles)``.

    Orientation and its negation describe the same band, so half a turn
    suffices. The joint problem over ``n`` is not convex; the grid is a
    conservative stand-in.
    """
    if num_angles < 2:
        raise ValueError("num_angles must be at least 2")
    t0 = time.perf_counter()
    best = None
    for k in range(num_angles):
        n = complex(np.exp(1j * np.pi * k / num_angles))
        band = band_embedding_fixed(f, e, n, options)
        if best is None or band.width < best.width:
            best = band
    best.solve_time = time.perf_counter() - t0
    return best


def triplets_of(embedding) -> list[DissipativityTriplet]:
    if isinstance(embedding, DiscEmbedding):
        p = embedding.point
        c, r = embedding.center, embedding.radius
        return [DissipativityTriplet(1.0, -c, abs(c) ** 2 - r**2, p)]
    if isinstance(embedding, BandEmbedding):
        p = embedding.point
        n = embedding.n
        return [
            DissipativityTriplet(0.0, n, -2.0 * embedding.a1, p),
            DissipativityTriplet(0.0, -n, 2.0 * embedding.a2, p),
        ]
    raise TypeError(f"not an embedding: {type(embedding).__name__}")
