"""Model matrices, stability and Gaussian-state diagnostics.

A single bosonic mode with quadratures (q, p) evolves under a detuning
rotation at frequency ``omega`` plus a quadrature-squeezing interaction of
strength ``chi``, decays at rate ``kappa``, and is continuously monitored by
homodyne detection of the q quadrature with efficiency ``eta``.  Covariance
matrices use the convention where the vacuum state has sigma = identity
(variance 1/2 per quadrature maps to diagonal entry 1).

Everything in this module is a pure function of its arguments and safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SystemParams",
    "SystemMatrices",
    "GaussianState",
    "EPS_DIRECTION",
    "DET_TOLERANCE",
    "build_matrices",
    "stability_check",
    "steady_state_covariance",
    "unconditional_steady_state",
    "squeezing_db",
    "perpendicular_squeezing_db",
    "purity",
]

# First-moment directions shorter than this are treated as undefined when
# projecting the covariance perpendicular to them.
EPS_DIRECTION = 1e-6

# Slack on det(sigma) >= 1; the integrator projects states back onto the
# physical manifold whenever Euler oversteps the pure boundary, so only
# rounding-level violations remain.
DET_TOLERANCE = 1e-9

# d(drift)/d(omega); independent of every parameter.
_DRIFT_DERIVATIVE = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class SystemParams:
    """Physical constants and integration step.

    omega, chi and dt are expressed in units of kappa (kappa = 1 sets the
    time unit by default).  Construction validates kappa > 0, dt > 0,
    0 <= eta <= 1, chi < kappa/2, and that the drift matrix without control
    is Hurwitz, so a steady state exists.
    """

    omega: float
    chi: float
    eta: float
    kappa: float = 1.0
    dt: float = 1e-3

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not self.chi < self.kappa / 2:
            raise ValueError(
                f"chi = {self.chi} is not below the instability threshold kappa/2 = {self.kappa / 2}"
            )
        if not stability_check(build_matrices(self, 0.0).A):
            raise ValueError(
                f"drift matrix is not Hurwitz for omega={self.omega}, chi={self.chi}, kappa={self.kappa}"
            )


@dataclass(frozen=True)
class SystemMatrices:
    """Drift A, diffusion D, measurement B (= E) and dA = dA/d(omega)."""

    A: np.ndarray
    D: np.ndarray
    B: np.ndarray
    E: np.ndarray
    dA: np.ndarray


@dataclass
class GaussianState:
    """First-moment vector r = (q, p) and 2x2 covariance sigma (vacuum = I)."""

    r: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float).reshape(2)
        sigma = np.asarray(self.sigma, dtype=float).reshape(2, 2)
        if abs(sigma[0, 1] - sigma[1, 0]) > 1e-10:
            raise ValueError(f"covariance is not symmetric: {sigma}")
        self.sigma = 0.5 * (sigma + sigma.T)
        det = float(np.linalg.det(self.sigma))
        if det < 1.0 - DET_TOLERANCE:
            raise ValueError(f"unphysical covariance, det = {det} < 1")
        if np.linalg.eigvalsh(self.sigma)[0] <= 0.0:
            raise ValueError("covariance is not positive definite")


def build_matrices(params: SystemParams, omega_fb: float = 0.0) -> SystemMatrices:
    """Assemble the moment-equation matrices for total rotation omega + omega_fb.

    A = [[-(chi + kappa/2), w], [-w, chi - kappa/2]] with w = omega + omega_fb;
    D = kappa * I; B = E with the only nonzero entry B[0, 0] = -sqrt(eta*kappa).
    Any real omega_fb is accepted (a rotation cannot break stability on its own,
    it only shifts the detuning).
    """
    w = params.omega + omega_fb
    a = np.array(
        [
            [-(params.chi + params.kappa / 2), w],
            [-w, params.chi - params.kappa / 2],
        ]
    )
    d = params.kappa * np.eye(2)
    b = np.zeros((2, 2))
    b[0, 0] = -math.sqrt(params.eta * params.kappa)
    return SystemMatrices(A=a, D=d, B=b, E=b.copy(), dA=_DRIFT_DERIVATIVE.copy())


def stability_check(A: np.ndarray) -> bool:
    """Hurwitz criterion: both eigenvalues of A have strictly negative real part.

    For a real 2x2 matrix this is equivalent to trace(A) < 0 and det(A) > 0.
    """
    A = np.asarray(A, dtype=float)
    trace = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    return trace < 0.0 and det > 0.0


def steady_state_covariance(params: SystemParams) -> np.ndarray:
    """Closed-form conditional steady-state covariance at zero total rotation.

    Valid when the rotation has been cancelled (omega + omega_fb = 0) and
    chi < kappa/2.  Returns diag(s_qq, s_pp) with

        s_qq = (kappa(2 eta - 1) - 2 chi
                + sqrt(kappa^2 - 4 kappa chi (2 eta - 1) + 4 chi^2)) / (2 eta kappa)
        s_pp = kappa / (kappa - 2 chi)

    The monitored quadrature interpolates between the unmonitored limit
    kappa/(kappa + 2 chi) at eta = 0 and (kappa - 2 chi)/kappa at eta = 1.
    """
    kappa, chi, eta = params.kappa, params.chi, params.eta
    if not chi < kappa / 2:
        raise ValueError(f"no steady state: chi = {chi} >= kappa/2 = {kappa / 2}")
    s_pp = kappa / (kappa - 2 * chi)
    if eta == 0.0:
        s_qq = kappa / (kappa + 2 * chi)
    elif eta == 1.0:
        s_qq = (kappa - 2 * chi) / kappa
    else:
        disc = kappa * kappa - 4 * kappa * chi * (2 * eta - 1) + 4 * chi * chi
        s_qq = (kappa * (2 * eta - 1) - 2 * chi + math.sqrt(disc)) / (2 * eta * kappa)
    return np.diag([s_qq, s_pp])


def unconditional_steady_state(params: SystemParams) -> np.ndarray:
    """Steady-state covariance of the unmonitored dynamics (eta = 0 limit)."""
    kappa, chi = params.kappa, params.chi
    if not chi < kappa / 2:
        raise ValueError(f"no steady state: chi = {chi} >= kappa/2 = {kappa / 2}")
    return np.diag([kappa / (kappa + 2 * chi), kappa / (kappa - 2 * chi)])


def _eigvals_sym(sigma: np.ndarray) -> tuple[float, float]:
    """Eigenvalues (min, max) of a symmetric 2x2 matrix."""
    qq, qp, pp = float(sigma[0, 0]), float(sigma[0, 1]), float(sigma[1, 1])
    mean = 0.5 * (qq + pp)
    split = math.hypot(0.5 * (qq - pp), qp)
    return mean - split, mean + split


def squeezing_db(sigma: np.ndarray) -> float:
    """Maximum squeezing of a covariance matrix: -10 log10(lambda_min).

    Positive values mean fluctuations below vacuum along the most squeezed
    quadrature.  Rejects matrices that are not positive definite.
    """
    sigma = np.asarray(sigma, dtype=float)
    if abs(sigma[0, 1] - sigma[1, 0]) > 1e-10:
        raise ValueError("covariance must be symmetric")
    lam_min, _ = _eigvals_sym(sigma)
    if lam_min <= 0.0:
        raise ValueError(f"covariance is not positive definite (lambda_min = {lam_min})")
    return -10.0 * math.log10(lam_min)


def perpendicular_squeezing_db(state: GaussianState) -> float | None:
    """Squeezing along the quadrature perpendicular to the first-moment vector.

    With u = r/|r| and u_perp its +90 degree rotation, returns
    -10 log10(u_perp^T sigma u_perp).  Returns None when |r| <= EPS_DIRECTION,
    where the perpendicular direction is undefined.
    """
    rq, rp = float(state.r[0]), float(state.r[1])
    norm = math.hypot(rq, rp)
    if norm <= EPS_DIRECTION:
        return None
    # u = (rq, rp)/|r|, u_perp = (-rp, rq)/|r|
    uq, up = -rp / norm, rq / norm
    s = state.sigma
    var = uq * (s[0, 0] * uq + s[0, 1] * up) + up * (s[1, 0] * uq + s[1, 1] * up)
    return -10.0 * math.log10(var)


def purity(sigma: np.ndarray) -> float:
    """Purity mu = 1/sqrt(det sigma), clipped to 1.

    A determinant below 1 - DET_TOLERANCE signals an unphysical state
    (typically an integration failure) and raises.
    """
    sigma = np.asarray(sigma, dtype=float)
    det = sigma[0, 0] * sigma[1, 1] - sigma[0, 1] * sigma[1, 0]
    if det < 1.0 - DET_TOLERANCE:
        raise ValueError(f"unphysical covariance, det = {det} < 1")
    return min(1.0, 1.0 / math.sqrt(det))
