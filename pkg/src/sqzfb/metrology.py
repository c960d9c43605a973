"""Fisher-information functionals for the monitored Gaussian mode.

Three quantities bound the precision of frequency estimation:

* the classical information of the measurement record, accumulated per
  trajectory as 2 * integral dt (dr)^T B B^T (dr) = 2 eta kappa
  * integral dt dr_q^2;
* the quantum information of the conditional Gaussian state, evaluated from
  (sigma, dsigma, dr) in closed form;
* their sum, the effective information, averaged over trajectories — the
  figure of merit Q_eff/t entering the Cramer-Rao bound
  delta_omega * sqrt(T) >= 1/sqrt(Q_eff/t).

The closed-form Gaussian information is

    Q = Tr[(sigma^-1 dsigma)^2] / (2 (1 + mu^2))
        + 2 (dmu)^2 / (1 - mu^4)
        + 2 dr^T sigma^-1 dr,

with purity mu = 1/sqrt(det sigma) and dmu = -mu Tr[sigma^-1 dsigma]/2.  The
middle term carries the squared derivative of the purity: the squared form is
required for the expression to have consistent units and to agree with the
fidelity expansion of the Bures metric (cross-checked in the test suite
against a fidelity-difference oracle).  Near purity the term is a 0/0 limit
and is dropped below the EPS_PURE guard: physical one-parameter families
touching mu = 1 have dmu -> 0 there since mu <= 1 always.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .model import GaussianState, SystemParams

if TYPE_CHECKING:
    from .trajectory import EnsembleRecord, TangentState

__all__ = [
    "EPS_PURE",
    "FisherReport",
    "StrongMeasurementSpec",
    "gaussian_qfi",
    "fhom_increment",
    "reward_increment",
    "effective_qfi",
    "qcrb_bound",
    "measurement_covariance",
    "final_homodyne_fi",
    "optimize_final_homodyne",
    "qfi_arrays",
    "final_homodyne_fi_arrays",
    "write_fisher_csv",
    "FISHER_COLUMNS",
]

# Guard on 1 - mu^4 below which the purity term of the information formula
# is dropped (removes the 0/0 singularity at exact purity).
EPS_PURE = 1e-9

FISHER_COLUMNS = ("t", "fhom_over_t", "qbar_c", "qeff_over_t", "stderr_qeff", "n_traj")


def _qfi_components(sqq, sqp, spp, dqq, dqp, dpp, drq, drp):
    """Gaussian information from covariance/tangent components.

    Elementwise: accepts floats or same-shaped arrays.  Assumes the
    covariance is physical (det >= 1 up to integration slack).
    """
    det = sqq * spp - sqp * sqp
    g11 = (spp * dqq - sqp * dqp) / det
    g12 = (spp * dqp - sqp * dpp) / det
    g21 = (sqq * dqp - sqp * dqq) / det
    g22 = (sqq * dpp - sqp * dqp) / det
    tr_g_sq = g11 * g11 + 2.0 * g12 * g21 + g22 * g22
    mu2 = 1.0 / det
    mu4 = mu2 * mu2
    term1 = tr_g_sq / (2.0 * (1.0 + mu2))
    trace_g = g11 + g22
    dmu_sq = 0.25 * mu2 * trace_g * trace_g
    one_minus = 1.0 - mu4
    if isinstance(one_minus, np.ndarray):
        term2 = np.where(
            one_minus >= EPS_PURE, 2.0 * dmu_sq / np.maximum(one_minus, EPS_PURE), 0.0
        )
    else:
        term2 = 2.0 * dmu_sq / one_minus if one_minus >= EPS_PURE else 0.0
    term3 = 2.0 * (drq * (spp * drq - sqp * drp) + drp * (sqq * drp - sqp * drq)) / det
    return term1 + term2 + term3


def gaussian_qfi(state: GaussianState, tangent: "TangentState") -> float:
    """Information of the conditional Gaussian state about the frequency.

    Zero when the tangent vanishes; always non-negative.  Rejects singular
    covariance matrices.
    """
    s = state.sigma
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    if det <= 0.0 or not math.isfinite(det):
        raise ValueError(f"singular covariance, det = {det}")
    ds = tangent.dsigma
    dr = tangent.dr
    return float(
        _qfi_components(
            s[0, 0], s[0, 1], s[1, 1], ds[0, 0], ds[0, 1], ds[1, 1], dr[0], dr[1]
        )
    )


def qfi_arrays(cov: np.ndarray, dcov: np.ndarray, dr: np.ndarray) -> np.ndarray:
    """Vectorized conditional-state information.

    cov and dcov are (..., 3) as (qq, qp, pp); dr is (..., 2).
    """
    return _qfi_components(
        cov[..., 0], cov[..., 1], cov[..., 2],
        dcov[..., 0], dcov[..., 1], dcov[..., 2],
        dr[..., 0], dr[..., 1],
    )


def fhom_increment(tangent: "TangentState", params: SystemParams) -> float:
    """Per-step record-information increment 2 dt eta kappa dr_q^2."""
    drq = float(tangent.dr[0])
    return 2.0 * params.dt * params.eta * params.kappa * drq * drq


def reward_increment(
    state_before: GaussianState,
    tangent_before: "TangentState",
    state_after: GaussianState,
    tangent_after: "TangentState",
    params: SystemParams,
) -> float:
    """Telescoped per-step reward.

    The record-information increment (from the pre-update tangent) plus the
    change of conditional-state information across the step.  Summed over an
    episode this equals fhom_integral(T) + Q(T) - Q(0), a monotone affine
    transform of the per-trajectory figure of merit at fixed episode length.
    """
    return (
        fhom_increment(tangent_before, params)
        + gaussian_qfi(state_after, tangent_after)
        - gaussian_qfi(state_before, tangent_before)
    )


@dataclass
class FisherReport:
    """Ensemble information summary on a time grid (t > 0 points only).

    qeff_over_t * t = fhom_over_t * t + qbar_c holds exactly by construction,
    and std_err is the ensemble standard error of the effective information.
    """

    times: np.ndarray
    fhom_over_t: np.ndarray
    qbar_c: np.ndarray
    qeff_over_t: np.ndarray
    std_err: np.ndarray
    n_traj: int


def effective_qfi(record: "EnsembleRecord") -> FisherReport:
    """Average record information and conditional-state information per grid point.

    Failed trajectories are excluded; an ensemble with no healthy trajectory
    is rejected.
    """
    ok = record.healthy
    n = int(np.count_nonzero(ok))
    if n == 0:
        raise ValueError("empty ensemble: no healthy trajectories")
    mask = record.times > 0.0
    times = record.times[mask]
    fhom = record.fhom[ok][:, mask]
    qfi = qfi_arrays(record.cov[ok][:, mask], record.dcov[ok][:, mask], record.dr[ok][:, mask])
    fhom_mean = fhom.mean(axis=0)
    qbar = qfi.mean(axis=0)
    qeff_samples = fhom + qfi
    if n > 1:
        std_err = qeff_samples.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        std_err = np.zeros_like(fhom_mean)
    return FisherReport(
        times=times,
        fhom_over_t=fhom_mean / times,
        qbar_c=qbar,
        qeff_over_t=(fhom_mean + qbar) / times,
        std_err=std_err,
        n_traj=n,
    )


def qcrb_bound(qeff: float, t: float) -> float:
    """Precision bound on delta_omega * sqrt(T): 1/sqrt(qeff/t)."""
    if qeff <= 0.0:
        raise ValueError(f"qeff must be positive, got {qeff}")
    if t <= 0.0:
        raise ValueError(f"t must be positive, got {t}")
    return 1.0 / math.sqrt(qeff / t)


@dataclass(frozen=True)
class StrongMeasurementSpec:
    """Projective Gaussian measurement: squeezed covariance rotated by theta.

    sigma_m = R(theta) diag(z, 1/z) R(theta)^T has unit determinant; z -> 0
    is the sharp homodyne limit (theta = 0 measures q, theta = pi/2
    measures p).
    """

    theta: float
    z: float = 1e-8

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError(f"z must be positive, got {self.z}")


def measurement_covariance(z: float, theta: float) -> np.ndarray:
    """Covariance matrix R(theta) diag(z, 1/z) R(theta)^T."""
    ct, st = math.cos(theta), math.sin(theta)
    zi = 1.0 / z
    return np.array(
        [
            [z * ct * ct + zi * st * st, (z - zi) * st * ct],
            [(z - zi) * st * ct, z * st * st + zi * ct * ct],
        ]
    )


def _final_homodyne_components(sqq, sqp, spp, dqq, dqp, dpp, drq, drp, z, theta):
    """Information of the measurement-outcome distribution; elementwise."""
    ct, st = np.cos(theta), np.sin(theta)
    zi = 1.0 / z
    m_qq = z * ct * ct + zi * st * st
    m_qp = (z - zi) * st * ct
    m_pp = z * st * st + zi * ct * ct
    # Outcome distribution is Gaussian with covariance (sigma + sigma_m)/2
    # and mean r; its frequency sensitivity enters through dr and dsigma/2.
    c_qq = 0.5 * (sqq + m_qq)
    c_qp = 0.5 * (sqp + m_qp)
    c_pp = 0.5 * (spp + m_pp)
    d_qq = 0.5 * dqq
    d_qp = 0.5 * dqp
    d_pp = 0.5 * dpp
    det = c_qq * c_pp - c_qp * c_qp
    quad = (drq * (c_pp * drq - c_qp * drp) + drp * (c_qq * drp - c_qp * drq)) / det
    g11 = (c_pp * d_qq - c_qp * d_qp) / det
    g12 = (c_pp * d_qp - c_qp * d_pp) / det
    g21 = (c_qq * d_qp - c_qp * d_qq) / det
    g22 = (c_qq * d_pp - c_qp * d_qp) / det
    return quad + 0.5 * (g11 * g11 + 2.0 * g12 * g21 + g22 * g22)


def final_homodyne_fi(
    state: GaussianState, tangent: "TangentState", spec: StrongMeasurementSpec
) -> float:
    """Information extracted by a final Gaussian measurement of given angle."""
    s, ds, dr = state.sigma, tangent.dsigma, tangent.dr
    return float(
        _final_homodyne_components(
            s[0, 0], s[0, 1], s[1, 1],
            ds[0, 0], ds[0, 1], ds[1, 1],
            dr[0], dr[1],
            spec.z, spec.theta,
        )
    )


def final_homodyne_fi_arrays(cov, dcov, dr, z: float, theta) -> np.ndarray:
    """Vectorized final-measurement information; theta may broadcast."""
    return _final_homodyne_components(
        cov[..., 0], cov[..., 1], cov[..., 2],
        dcov[..., 0], dcov[..., 1], dcov[..., 2],
        dr[..., 0], dr[..., 1],
        z, theta,
    )


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_final_homodyne(
    state: GaussianState,
    tangent: "TangentState",
    z: float = 1e-8,
    grid_points: int = 181,
    tol: float = 1e-6,
) -> tuple[float, float]:
    """Best sharp-measurement angle and its information.

    Coarse grid over [-pi/2, pi/2] followed by golden-section refinement of
    the best bracket down to ``tol`` radians.  The returned angle lies in
    [-pi/2, pi/2); the objective has period pi.
    """
    s, ds, dr = state.sigma, tangent.dsigma, tangent.dr

    def fi(theta):
        return _final_homodyne_components(
            s[0, 0], s[0, 1], s[1, 1],
            ds[0, 0], ds[0, 1], ds[1, 1],
            dr[0], dr[1],
            z, theta,
        )

    thetas = np.linspace(-math.pi / 2, math.pi / 2, grid_points)
    values = fi(thetas)
    best = int(np.argmax(values))
    h = thetas[1] - thetas[0]
    a = thetas[best] - h
    b = thetas[best] + h
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = fi(x1), fi(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = fi(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = fi(x1)
    theta_star = 0.5 * (a + b)
    theta_star = (theta_star + math.pi / 2) % math.pi - math.pi / 2
    return float(theta_star), float(fi(theta_star))


def write_fisher_csv(path, report: FisherReport) -> None:
    """Write a FisherReport as CSV with %.12e formatting."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(FISHER_COLUMNS) + "\n")
        for i, t in enumerate(report.times):
            fh.write(
                f"{t:.12e},{report.fhom_over_t[i]:.12e},{report.qbar_c[i]:.12e},"
                f"{report.qeff_over_t[i]:.12e},{report.std_err[i]:.12e},{report.n_traj}\n"
            )
