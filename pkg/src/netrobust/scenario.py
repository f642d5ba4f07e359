"""Automated-highway platoon: plants, controllers, chain topology and parameter sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize, signal

from .global_step import Network
from .lti import RationalTransfer, build_interconnection, closed_loop, poly
from .uncertainty import AffineRationalPlant, Ellipsoid, chi2_quantile, contains, make_rng

TAU_NOMINAL = 0.105
GAIN_NOMINAL = 0.95

# Default bound on the tracking-error gain: +40 dB/dec up to the corner, flat
# above it. The true shape is only shown graphically; this one is ours.
DEFAULT_W_TABLE = ((0.01, -40.0), (0.1, 0.0), (1000.0, 0.0))


def controller(name: str) -> RationalTransfer:
    """``initial`` lead compensator or the ``improved`` high-order design."""
    if name == "initial":
        return RationalTransfer.from_coeffs([1.0, 2.0], [1.0, 0.05])
    if name == "improved":
        num = 12111.0 * np.polymul([1.0, 10.0], [1.0, 0.9, 0.4])
        den = np.polymul([1.0, 0.0], [1.0, 111.6, 6230.0])
        return RationalTransfer.from_coeffs(num[::-1], den[::-1])
    raise ValueError(f"unknown controller {name!r}")


def platoon_plant() -> AffineRationalPlant:
    """``k / (s^2 (tau s + 1))`` as an affine-rational plant in ``theta = (tau, k)``."""
    return AffineRationalPlant(
        num0=[0.0],
        den0=[0.0, 0.0, 1.0],
        num_inc=([0.0], [1.0]),
        den_inc=([0.0, 0.0, 0.0, 1.0], [0.0]),
    )


def chain_adjacency(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized adjacency of a bidirectional chain with the reference at node 1.

    Every row of ``[A | B]`` sums to one. A single node gets ``A = 0``,
    ``B = 1`` and tracks the reference directly.
    """
    if n < 1:
        raise ValueError("need at least one node")
    half = Fraction(1, 2)
    A = [[Fraction(0)] * n for _ in range(n)]
    B = [Fraction(0)] * n
    if n == 1:
        B[0] = Fraction(1)
    else:
        A[0][1], B[0] = half, half
        for i in range(1, n - 1):
            A[i][i - 1] = A[i][i + 1] = half
        A[n - 1][n - 2] = Fraction(1)
    for i in range(n):
        assert sum(A[i]) + B[i] == 1
    return np.array(A, dtype=float), np.array(B, dtype=float)[:, None]


@dataclass
class PlatoonScenario:
    n_mod: int
    theta0: np.ndarray  # (n_mod, 2): tau_i, k_i
    controller_name: str
    K: RationalTransfer
    A: np.ndarray
    B: np.ndarray
    w_table: tuple = DEFAULT_W_TABLE
    freqs_hz: tuple = (0.13, 0.15, 0.17)

    @property
    def plant(self) -> AffineRationalPlant:
        return platoon_plant()

    @property
    def interconnection(self):
        return build_interconnection(self.A, self.B)

    def network(self) -> Network:
        return Network([self.plant] * self.n_mod, [self.K] * self.n_mod, self.interconnection)

    def closed_loops(self, thetas=None) -> list[RationalTransfer]:
        thetas = self.theta0 if thetas is None else thetas
        return [closed_loop(self.plant.at(th), self.K) for th in thetas]


def build_platoon(n_mod: int = 5, seed: int = 0, dispersion: float = 0.10,
                  controller_name: str = "improved", K: RationalTransfer | None = None) -> PlatoonScenario:
    """Platoon with ``tau_i``, ``k_i`` drawn uniformly within ``dispersion`` of nominal."""
    if n_mod < 1:
        raise ValueError("n_mod must be at least 1")
    if not 0.0 <= dispersion <= 0.5:
        raise ValueError("dispersion must lie in [0, 0.5]")
    rng = make_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=(n_mod, 2))
    theta0 = np.array([TAU_NOMINAL, GAIN_NOMINAL]) * (1.0 + dispersion * u)
    A, B = chain_adjacency(n_mod)
    if K is None:
        K = controller(controller_name)
    else:
        controller_name = "custom"
    return PlatoonScenario(n_mod, theta0, controller_name, K, A, B)


def w_bound_db(w_table, f_hz: float) -> float:
    """Piecewise log-linear interpolation of ``(freq_hz, dB)`` points; flat outside."""
    pts = np.asarray(w_table, dtype=float)
    return float(np.interp(np.log10(f_hz), np.log10(pts[:, 0]), pts[:, 1]))


def synthetic_identification(scenario: PlatoonScenario, relative_std: float = 0.05,
                             probability: float = 0.95, seed: int = 0,
                             centered: bool = False) -> list[Ellipsoid]:
    """Fabricate identification-like ellipsoids that contain the true parameters.

    ``P_i`` has standard deviations ``relative_std * theta_i`` rotated by a
    random angle; the estimate is drawn from ``N(theta_i, P_i)`` and redrawn
    until the truth lies inside. ``centered=True`` puts the estimate on the
    truth instead.

    The random angle sets the orientation of the ellipse in relative
    coordinates: correlation ``0.8 cos(2 phi)`` between the relative errors,
    marginal relative standard deviations exactly ``relative_std``.
    """
    if relative_std <= 0:
        raise ValueError("relative_std must be positive")
    chi = chi2_quantile(probability, 2)
    rng = make_rng(seed)
    out = []
    for th in scenario.theta0:
        phi = rng.uniform(0.0, np.pi)
        rho = 0.8 * np.cos(2.0 * phi)
        Srel = relative_std**2 * np.array([[1.0, rho], [rho, 1.0]])
        P = np.diag(th) @ Srel @ np.diag(th)
        if centered:
            out.append(Ellipsoid(th.copy(), P, chi))
            continue
        Lc = np.linalg.cholesky(P)
        for _ in range(100):
            est = th + Lc @ rng.standard_normal(2)
            e = Ellipsoid(est, P, chi)
            if contains(e, th):
                out.append(e)
                break
        else:
            raise RuntimeError("could not draw an estimate whose ellipsoid holds the truth")
    return out


def discretize_loop(T: RationalTransfer, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold equivalent of a continuous loop as ``(b, a)`` in descending powers of z."""
    num = T.num.coef[::-1]
    den = T.den.coef[::-1]
    b, a, _ = signal.cont2discrete((num, den), ts, method="zoh")
    return np.atleast_1d(np.squeeze(b)), np.atleast_1d(a)


def is_stable(T: RationalTransfer) -> bool:
    return bool(np.all(np.real(T.den.roots()) < 0))


@dataclass
class IdentificationResult:
    ellipsoids: list[Ellipsoid]
    sigma2: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)


class IdentificationError(RuntimeError):
    pass


def _simulate(plant, K, theta, r, ts):
    b, a = discretize_loop(closed_loop(plant.at(theta), K), ts)
    return signal.lfilter(b, a, r)


def simulate_and_identify(scenario: PlatoonScenario, n_id: int = 1000, ts: float = 0.01,
                          excitation_variance: float = 10.0, noise_variance: float = 4.0,
                          seed: int = 0, probability: float = 0.95,
                          controller_name: str = "initial") -> IdentificationResult:
    """Per-module closed-loop experiment followed by an output-error fit of ``(tau, k)``.

    Each loop is excited with white noise through a zero-order hold and its
    output is measured with additive white noise. ``theta`` is fitted by
    bounded trust-region least squares on the sampled output error, started near the truth;
    the covariance is ``sigma^2 (J^T J)^{-1}`` with the residual variance
    ``sigma^2``.
    """
    K = controller(controller_name)
    plant = platoon_plant()
    chi = chi2_quantile(probability, 2)
    result = IdentificationResult([])
    for i, th0 in enumerate(scenario.theta0):
        if not is_stable(closed_loop(plant.at(th0), K)):
            raise IdentificationError(f"module {i}: closed loop is unstable")
        rng = make_rng([seed, i])
        r = rng.standard_normal(n_id) * np.sqrt(excitation_variance)
        v = rng.standard_normal(n_id) * np.sqrt(noise_variance)
        y = _simulate(plant, K, th0, r, ts) + v
        start = th0 * (1.0 + 0.05 * rng.uniform(-1.0, 1.0, 2))
        # fit in units of the starting point so both parameters are O(1)
        def resid(u):
            th = u * start
            if not is_stable(closed_loop(plant.at(th), K)):
                # unstable trial points are pushed back by a huge residual
                return np.full(n_id, 1e6)
            return _simulate(plant, K, th, r, ts) - y

        try:
            fit = optimize.least_squares(resid, np.ones(2), method="trf", bounds=(1e-2, 1e2),
                                         xtol=1e-12, ftol=1e-12)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise IdentificationError(f"module {i}: output-error fit failed: {exc}") from exc
        th = fit.x * start
        if not fit.success or not np.all(np.isfinite(th)) or np.any(th <= 0):
            raise IdentificationError(f"module {i}: output-error fit diverged ({fit.message})")
        sigma2 = float(fit.fun @ fit.fun) / (n_id - 2)
        J = fit.jac / start
        P = sigma2 * np.linalg.inv(J.T @ J)
        result.ellipsoids.append(Ellipsoid(th, 0.5 * (P + P.T), chi))
        result.sigma2.append(sigma2)
        result.iterations.append(int(fit.nfev))
    return result
