"""Stochastic integration of the conditional moment equations.

One Euler-Maruyama step advances the conditional first moments r = (q, p)
and their frequency derivative dr, together with explicit Euler updates of
the covariance sigma and its derivative dsigma (both deterministic given the
control sequence).  The homodyne increment for a step is

    dy = sqrt(2 eta kappa) * q * dt + dw,      dw ~ Normal(0, dt),

computed from the pre-update state, and each step adds
2 * dt * eta * kappa * dr_q^2 to the accumulated information integral of the
measurement record.  Only one scalar Gaussian is consumed per step: the
second component of the Wiener vector multiplies a zero column of the
measurement matrix and is never generated.

The derivative equations hold the measurement record fixed, which is why the
dr update contains the feedback term (E - sigma B) B^T dr: the Wiener
increment is record plus predicted drift, so differentiating at fixed record
pulls in the sensitivity of the prediction.

Reproducibility: every trajectory owns a counter-based Philox stream keyed
by (base_seed, trajectory_index, episode_index); results are independent of
batching, worker count and scheduling order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .model import GaussianState, SystemParams

if TYPE_CHECKING:
    from .policies import FeedbackPolicy

__all__ = [
    "TangentState",
    "TrajectoryState",
    "StepResult",
    "InitialCondition",
    "RandomInit",
    "EnsembleRecord",
    "UnphysicalStateError",
    "trajectory_streams",
    "reset",
    "step",
    "run_trajectory",
    "run_ensemble",
    "integrate_covariance",
    "write_trace_csv",
    "TRACE_COLUMNS",
]

_SQRT2 = math.sqrt(2.0)

# Pre-projection determinants at or below this value cannot be a boundary
# overstep of a healthy step and indicate divergence.
DET_FAILURE = 0.5

TRACE_COLUMNS = (
    "t",
    "r_q",
    "r_p",
    "s_qq",
    "s_qp",
    "s_pp",
    "dr_q",
    "dr_p",
    "ds_qq",
    "ds_qp",
    "ds_pp",
    "omega_fb",
    "dy",
    "fhom_integral",
)


class UnphysicalStateError(RuntimeError):
    """Integration produced a non-finite or determinant-violating state."""

    def __init__(self, step_index: int, detail: str = ""):
        self.step_index = step_index
        msg = f"unphysical state after step {step_index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


@dataclass
class TangentState:
    """Frequency derivatives of the first moments and covariance."""

    dr: np.ndarray
    dsigma: np.ndarray

    def __post_init__(self):
        self.dr = np.asarray(self.dr, dtype=float).reshape(2)
        ds = np.asarray(self.dsigma, dtype=float).reshape(2, 2)
        if abs(ds[0, 1] - ds[1, 0]) > 1e-10:
            raise ValueError(f"tangent covariance is not symmetric: {ds}")
        self.dsigma = 0.5 * (ds + ds.T)


@dataclass(frozen=True)
class InitialCondition:
    """Fixed start: first moments r0 and thermal occupation n_th.

    The initial covariance is (2 n_th + 1) * I.
    """

    r0: tuple[float, float] = (0.0, 0.0)
    n_th: float = 0.0

    def __post_init__(self):
        if self.n_th < 0:
            raise ValueError(f"n_th must be non-negative, got {self.n_th}")

    def sample(self, rng: np.random.Generator) -> "InitialCondition":
        return self


@dataclass(frozen=True)
class RandomInit:
    """Episode randomization: r components uniform on [lo, hi], n_th uniform.

    Draw order from the stream is (r_q, r_p, n_th).
    """

    r_low: float = -3.0
    r_high: float = 3.0
    nth_low: float = 0.0
    nth_high: float = 5.0

    def sample(self, rng: np.random.Generator) -> InitialCondition:
        r = rng.uniform(self.r_low, self.r_high, size=2)
        n_th = float(rng.uniform(self.nth_low, self.nth_high))
        return InitialCondition(r0=(float(r[0]), float(r[1])), n_th=n_th)


def _seed_key(seed: int | Sequence[int]) -> tuple[int, ...]:
    """Canonical stream key (base_seed, trajectory_index, episode_index).

    An int s means (s, 0, 0); shorter sequences are zero-padded so that e.g.
    [s, k] and (s, k, 0) name the same stream.
    """
    if isinstance(seed, (int, np.integer)):
        key = (int(seed),)
    else:
        key = tuple(int(s) for s in seed)
    if len(key) < 3:
        key = key + (0,) * (3 - len(key))
    return key


def trajectory_streams(
    seed: int | Sequence[int],
) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Derive the (init, measurement, action) streams for one trajectory.

    The key (base_seed, trajectory_index, episode_index) is spawned into
    three independent Philox substreams so that adding or removing draws
    from one never shifts another.
    """
    children = np.random.SeedSequence(_seed_key(seed)).spawn(3)
    return tuple(np.random.Generator(np.random.Philox(c)) for c in children)


@dataclass
class _Consts:
    a11: float
    a22: float
    b: float  # sqrt(eta * kappa)
    kappa: float
    dt: float
    omega: float
    sqrt_dt: float

    @classmethod
    def from_params(cls, params: SystemParams) -> "_Consts":
        return cls(
            a11=-(params.chi + params.kappa / 2),
            a22=params.chi - params.kappa / 2,
            b=math.sqrt(params.eta * params.kappa),
            kappa=params.kappa,
            dt=params.dt,
            omega=params.omega,
            sqrt_dt=math.sqrt(params.dt),
        )


def _step_moments(c, w, dw, rq, rp, sqq, sqp, spp, drq, drp, dqq, dqp, dpp):
    """One update of all moments; works elementwise on floats or arrays.

    Returns (dy, fhom_increment, det_raw, new moments...).  dy and the
    information increment use the pre-update values.

    Explicit Euler can overstep the pure boundary det(sigma) = 1 by O(dt)
    (the rotation/squeezing part preserves the determinant only to first
    order), so covariances with det < 1 are projected back onto the physical
    manifold by uniform rescaling; the tangent receives the exact derivative
    of that projection so it stays the sensitivity of the map actually
    applied.  ``det_raw`` is the pre-projection determinant used by health
    checks.
    """
    b, dt = c.b, c.dt
    m1 = b * (sqq - 1.0)
    m2 = b * sqp
    dy = _SQRT2 * b * rq * dt + dw
    fhom_inc = 2.0 * dt * (b * b) * (drq * drq)
    g = dw / _SQRT2
    n_rq = rq + dt * (c.a11 * rq + w * rp) + m1 * g
    n_rp = rp + dt * (-w * rq + c.a22 * rp) + m2 * g
    n_sqq = sqq + dt * (2.0 * (c.a11 * sqq + w * sqp) + c.kappa - m1 * m1)
    n_sqp = sqp + dt * ((c.a11 + c.a22) * sqp + w * (spp - sqq) - m1 * m2)
    n_spp = spp + dt * (2.0 * (-w * sqp + c.a22 * spp) + c.kappa - m2 * m2)
    n_drq = drq + dt * (rp + c.a11 * drq + w * drp - b * m1 * drq) + b * dqq * g
    n_drp = drp + dt * (-rq - w * drq + c.a22 * drp - b * m2 * drq) + b * dqp * g
    n_dqq = dqq + dt * (2.0 * sqp + 2.0 * (c.a11 * dqq + w * dqp) - 2.0 * b * m1 * dqq)
    n_dqp = dqp + dt * (
        (spp - sqq) + (c.a11 + c.a22) * dqp + w * (dpp - dqq) - b * (dqq * m2 + dqp * m1)
    )
    n_dpp = dpp + dt * (-2.0 * sqp + 2.0 * (-w * dqp + c.a22 * dpp) - 2.0 * b * m2 * dqp)
    det_raw = n_sqq * n_spp - n_sqp * n_sqp
    inside = det_raw < 1.0
    safe = np.where(inside & (det_raw > 0.0), det_raw, 1.0)
    scale = 1.0 / np.sqrt(safe)
    trace = (n_spp * n_dqq - 2.0 * n_sqp * n_dqp + n_sqq * n_dpp) / safe
    adj = np.where(inside & (det_raw > 0.0), 0.5 * trace, 0.0)
    n_dqq = scale * (n_dqq - adj * n_sqq)
    n_dqp = scale * (n_dqp - adj * n_sqp)
    n_dpp = scale * (n_dpp - adj * n_spp)
    n_sqq = scale * n_sqq
    n_sqp = scale * n_sqp
    n_spp = scale * n_spp
    return (
        dy, fhom_inc, det_raw,
        n_rq, n_rp, n_sqq, n_sqp, n_spp, n_drq, n_drp, n_dqq, n_dqp, n_dpp,
    )


@dataclass
class StepResult:
    """Outcome of one step: homodyne increment, consumed noise, reward term."""

    dy: float
    dw: float
    reward_increment: float


class TrajectoryState:
    """Mutable per-trajectory integration state.

    Confined to one worker at a time.  ``t`` is always step_index * dt in the
    integrator's arithmetic.  Use :func:`reset` to construct.
    """

    __slots__ = (
        "rq",
        "rp",
        "sqq",
        "sqp",
        "spp",
        "drq",
        "drp",
        "dqq",
        "dqp",
        "dpp",
        "step_index",
        "fhom_integral",
        "last_dy",
        "rng",
        "action_rng",
        "_dt",
    )

    def __init__(self, r0, sigma0_diag, dt):
        self.rq = float(r0[0])
        self.rp = float(r0[1])
        self.sqq = float(sigma0_diag)
        self.sqp = 0.0
        self.spp = float(sigma0_diag)
        self.drq = 0.0
        self.drp = 0.0
        self.dqq = 0.0
        self.dqp = 0.0
        self.dpp = 0.0
        self.step_index = 0
        self.fhom_integral = 0.0
        self.last_dy = 0.0
        self.rng = None
        self.action_rng = None
        self._dt = float(dt)

    @property
    def t(self) -> float:
        return self.step_index * self._dt

    @property
    def state(self) -> GaussianState:
        return GaussianState(
            r=np.array([self.rq, self.rp]),
            sigma=np.array([[self.sqq, self.sqp], [self.sqp, self.spp]]),
        )

    @property
    def tangent(self) -> TangentState:
        return TangentState(
            dr=np.array([self.drq, self.drp]),
            dsigma=np.array([[self.dqq, self.dqp], [self.dqp, self.dpp]]),
        )

    def observation(self) -> np.ndarray:
        """Observation vector (layout version 1): r, sigma, dr, dsigma, dy."""
        return np.array(
            [
                self.rq,
                self.rp,
                self.sqq,
                self.sqp,
                self.spp,
                self.drq,
                self.drp,
                self.dqq,
                self.dqp,
                self.dpp,
                self.last_dy,
            ]
        )


def reset(
    params: SystemParams,
    init: InitialCondition | RandomInit,
    seed: int | Sequence[int],
) -> TrajectoryState:
    """Fresh trajectory state with deterministically seeded noise streams."""
    init_rng, dw_rng, action_rng = trajectory_streams(seed)
    cond = init.sample(init_rng)
    traj = TrajectoryState(cond.r0, 2.0 * cond.n_th + 1.0, params.dt)
    traj.rng = dw_rng
    traj.action_rng = action_rng
    return traj


def step(
    traj: TrajectoryState, params: SystemParams, omega_fb: float
) -> tuple[TrajectoryState, StepResult]:
    """Advance one step under feedback omega_fb, mutating ``traj``.

    Draws one Wiener increment, updates all moments, re-accumulates the
    information integral, and computes the reward increment (information
    gain of the record plus the change in conditional-state information).
    Raises :class:`UnphysicalStateError` if the update leaves the physical
    manifold.
    """
    from .metrology import _qfi_components

    c = _Consts.from_params(params)
    dw = float(traj.rng.normal(0.0, c.sqrt_dt))
    w = c.omega + omega_fb
    q_before = _qfi_components(
        traj.sqq, traj.sqp, traj.spp, traj.dqq, traj.dqp, traj.dpp, traj.drq, traj.drp
    )
    out = _step_moments(
        c, w, dw,
        traj.rq, traj.rp, traj.sqq, traj.sqp, traj.spp,
        traj.drq, traj.drp, traj.dqq, traj.dqp, traj.dpp,
    )
    dy, fhom_inc, det_raw = out[0], out[1], float(out[2])
    (
        traj.rq, traj.rp, traj.sqq, traj.sqp, traj.spp,
        traj.drq, traj.drp, traj.dqq, traj.dqp, traj.dpp,
    ) = (float(v) for v in out[3:])
    traj.step_index += 1
    traj.fhom_integral += fhom_inc
    traj.last_dy = float(dy)

    vals = (traj.rq, traj.rp, traj.sqq, traj.sqp, traj.spp,
            traj.drq, traj.drp, traj.dqq, traj.dqp, traj.dpp)
    if not (det_raw > DET_FAILURE) or not all(math.isfinite(v) for v in vals):
        raise UnphysicalStateError(traj.step_index, f"det(sigma) = {det_raw}")

    q_after = _qfi_components(
        traj.sqq, traj.sqp, traj.spp, traj.dqq, traj.dqp, traj.dpp, traj.drq, traj.drp
    )
    return traj, StepResult(dy=dy, dw=dw, reward_increment=fhom_inc + (q_after - q_before))


@dataclass
class EnsembleRecord:
    """Strided time series for a batch of trajectories.

    Arrays are indexed (trajectory, grid point).  ``dy`` holds the increment
    of the step ending at each grid point (0 at t = 0); ``omega_fb`` holds
    the action applied during the step leaving each grid point (the final
    point repeats the last applied action).  ``failed_steps`` is -1 for
    healthy trajectories, otherwise the index of the first bad step;
    statistics must exclude failed trajectories.
    """

    times: np.ndarray
    r: np.ndarray  # (n, g, 2)
    cov: np.ndarray  # (n, g, 3) as (qq, qp, pp)
    dr: np.ndarray  # (n, g, 2)
    dcov: np.ndarray  # (n, g, 3)
    omega_fb: np.ndarray  # (n, g)
    dy: np.ndarray  # (n, g)
    fhom: np.ndarray  # (n, g)
    failed_steps: np.ndarray  # (n,)
    base_seed: int | tuple
    params: SystemParams

    @property
    def n_traj(self) -> int:
        return self.r.shape[0]

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(self.failed_steps >= 0))

    @property
    def healthy(self) -> np.ndarray:
        return self.failed_steps < 0

    def final_state(self, k: int = 0) -> tuple[GaussianState, TangentState, float]:
        """State, tangent and accumulated record information at the last grid point."""
        g = -1
        state = GaussianState(
            r=self.r[k, g].copy(),
            sigma=np.array(
                [
                    [self.cov[k, g, 0], self.cov[k, g, 1]],
                    [self.cov[k, g, 1], self.cov[k, g, 2]],
                ]
            ),
        )
        tangent = TangentState(
            dr=self.dr[k, g].copy(),
            dsigma=np.array(
                [
                    [self.dcov[k, g, 0], self.dcov[k, g, 1]],
                    [self.dcov[k, g, 1], self.dcov[k, g, 2]],
                ]
            ),
        )
        return state, tangent, float(self.fhom[k, g])


def _grid_indices(horizon_steps: int, stride: int) -> np.ndarray:
    idx = np.arange(0, horizon_steps + 1, stride)
    if horizon_steps % stride != 0:
        idx = np.append(idx, horizon_steps)
    return idx


def _run_batch(
    params: SystemParams,
    init: InitialCondition | RandomInit,
    seed_keys: list[tuple[int, ...]],
    horizon_steps: int,
    policy: "FeedbackPolicy",
    record_stride: int,
) -> EnsembleRecord:
    """Advance a batch of trajectories in lockstep, recording a strided trace."""
    n = len(seed_keys)
    c = _Consts.from_params(params)
    dw_gens = []
    act_gens = []
    rq = np.empty(n)
    rp = np.empty(n)
    s0 = np.empty(n)
    for k, key in enumerate(seed_keys):
        init_rng, dw_rng, act_rng = trajectory_streams(key)
        cond = init.sample(init_rng)
        rq[k], rp[k] = cond.r0
        s0[k] = 2.0 * cond.n_th + 1.0
        dw_gens.append(dw_rng)
        act_gens.append(act_rng)
    sqq = s0.copy()
    sqp = np.zeros(n)
    spp = s0.copy()
    drq = np.zeros(n)
    drp = np.zeros(n)
    dqq = np.zeros(n)
    dqp = np.zeros(n)
    dpp = np.zeros(n)
    fhom = np.zeros(n)
    last_dy = np.zeros(n)
    failed = np.full(n, -1, dtype=np.int64)

    grid = _grid_indices(horizon_steps, record_stride)
    g_of_step = {int(i): g for g, i in enumerate(grid)}
    gsz = len(grid)
    rec_r = np.empty((gsz, n, 2))
    rec_cov = np.empty((gsz, n, 3))
    rec_dr = np.empty((gsz, n, 2))
    rec_dcov = np.empty((gsz, n, 3))
    rec_w = np.empty((gsz, n))
    rec_dy = np.empty((gsz, n))
    rec_fhom = np.empty((gsz, n))

    constant = getattr(policy, "constant", False)
    needs_noise = getattr(policy, "requires_noise", False)
    if constant:
        const_action = float(policy.act(np.zeros(11)))

    block = 1024
    dw_block = None
    act_block = None
    action = np.zeros(n)

    def record(g: int, act_now: np.ndarray | float):
        rec_r[g, :, 0] = rq
        rec_r[g, :, 1] = rp
        rec_cov[g, :, 0] = sqq
        rec_cov[g, :, 1] = sqp
        rec_cov[g, :, 2] = spp
        rec_dr[g, :, 0] = drq
        rec_dr[g, :, 1] = drp
        rec_dcov[g, :, 0] = dqq
        rec_dcov[g, :, 1] = dqp
        rec_dcov[g, :, 2] = dpp
        rec_w[g] = act_now
        rec_dy[g] = last_dy
        rec_fhom[g] = fhom

    with np.errstate(all="ignore"):
        for i in range(horizon_steps):
            j = i % block
            if j == 0:
                m = min(block, horizon_steps - i)
                dw_block = np.stack(
                    [gen.normal(0.0, c.sqrt_dt, size=m) for gen in dw_gens], axis=1
                )
                if needs_noise:
                    act_block = np.stack(
                        [gen.normal(0.0, 1.0, size=m) for gen in act_gens], axis=1
                    )
            if constant:
                action = const_action
            else:
                obs = np.stack(
                    (rq, rp, sqq, sqp, spp, drq, drp, dqq, dqp, dpp, last_dy), axis=-1
                )
                action = policy.act(obs, act_block[j] if needs_noise else None)
            g = g_of_step.get(i)
            if g is not None:
                record(g, action)
            dw = dw_block[j]
            w = c.omega + action
            out = _step_moments(
                c, w, dw, rq, rp, sqq, sqp, spp, drq, drp, dqq, dqp, dpp
            )
            dy, fhom_inc, det_raw = out[0], out[1], out[2]
            rq, rp, sqq, sqp, spp, drq, drp, dqq, dqp, dpp = out[3:]
            fhom = fhom + fhom_inc
            last_dy = dy
            total = rq + rp + sqq + sqp + spp + drq + drp + dqq + dqp + dpp
            bad = ~((det_raw > DET_FAILURE) & np.isfinite(total))
            newly = bad & (failed < 0)
            if np.any(newly):
                failed[newly] = i + 1
        record(g_of_step[horizon_steps], action)

    return EnsembleRecord(
        times=grid * c.dt,
        r=rec_r.transpose(1, 0, 2),
        cov=rec_cov.transpose(1, 0, 2),
        dr=rec_dr.transpose(1, 0, 2),
        dcov=rec_dcov.transpose(1, 0, 2),
        omega_fb=rec_w.T.copy(),
        dy=rec_dy.T.copy(),
        fhom=rec_fhom.T.copy(),
        failed_steps=failed,
        base_seed=seed_keys[0],
        params=params,
    )


def run_trajectory(
    params: SystemParams,
    init: InitialCondition | RandomInit,
    seed: int | Sequence[int],
    horizon_steps: int,
    policy: "FeedbackPolicy",
    record_stride: int = 100,
) -> EnsembleRecord:
    """Integrate a single trajectory; returns its strided trace.

    A plain integer seed s is equivalent to the stream key (s, 0, 0) used by
    :func:`run_ensemble` for trajectory 0.
    """
    if horizon_steps < 0:
        raise ValueError("horizon_steps must be >= 0")
    rec = _run_batch(
        params, init, [_seed_key(seed)], horizon_steps, policy, max(1, record_stride)
    )
    if rec.failed_steps[0] >= 0:
        raise UnphysicalStateError(int(rec.failed_steps[0]))
    return rec


def _chunk_worker(args):
    params, init, keys, horizon_steps, policy, record_stride = args
    return _run_batch(params, init, keys, horizon_steps, policy, record_stride)


def run_ensemble(
    params: SystemParams,
    init: InitialCondition | RandomInit,
    n_traj: int,
    horizon_steps: int,
    policy: "FeedbackPolicy",
    base_seed: int,
    record_stride: int = 100,
    jobs: int = 1,
) -> EnsembleRecord:
    """Monte Carlo ensemble with per-trajectory streams keyed (base_seed, k, 0).

    The result is bitwise independent of ``jobs``: each trajectory's
    arithmetic and noise depend only on its own key, and reductions happen
    downstream in index order.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    keys = [(int(base_seed), k, 0) for k in range(n_traj)]
    record_stride = max(1, record_stride)
    if jobs <= 1 or n_traj == 1:
        rec = _run_batch(params, init, keys, horizon_steps, policy, record_stride)
        rec.base_seed = int(base_seed)
        return rec

    from concurrent.futures import ProcessPoolExecutor

    jobs = min(jobs, n_traj)
    bounds = np.linspace(0, n_traj, jobs + 1).astype(int)
    tasks = [
        (params, init, keys[a:b], horizon_steps, policy, record_stride)
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_chunk_worker, tasks))
    return EnsembleRecord(
        times=parts[0].times,
        r=np.concatenate([p.r for p in parts]),
        cov=np.concatenate([p.cov for p in parts]),
        dr=np.concatenate([p.dr for p in parts]),
        dcov=np.concatenate([p.dcov for p in parts]),
        omega_fb=np.concatenate([p.omega_fb for p in parts]),
        dy=np.concatenate([p.dy for p in parts]),
        fhom=np.concatenate([p.fhom for p in parts]),
        failed_steps=np.concatenate([p.failed_steps for p in parts]),
        base_seed=int(base_seed),
        params=params,
    )


def integrate_covariance(
    params: SystemParams,
    omega_fb: float,
    sigma0: np.ndarray,
    horizon_steps: int,
    record_stride: int | None = None,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Explicit-Euler integration of the covariance equation alone.

    The covariance obeys a deterministic matrix Riccati equation, so no noise
    is involved.  Returns the final 2x2 matrix, or (times, series) with
    series shaped (g, 3) as (qq, qp, pp) when ``record_stride`` is given.
    Useful for steady-state and relaxation studies; near the instability
    threshold the anti-squeezed variance relaxes at the slow rate
    kappa - 2 chi, so horizons must scale with 1/(kappa - 2 chi).
    """
    c = _Consts.from_params(params)
    w = c.omega + omega_fb
    sqq = float(sigma0[0, 0])
    sqp = float(sigma0[0, 1])
    spp = float(sigma0[1, 1])
    b, dt, kappa, a11, a22 = c.b, c.dt, c.kappa, c.a11, c.a22
    out = []
    for i in range(horizon_steps):
        if record_stride and i % record_stride == 0:
            out.append((sqq, sqp, spp))
        m1 = b * (sqq - 1.0)
        m2 = b * sqp
        n_qq = sqq + dt * (2.0 * (a11 * sqq + w * sqp) + kappa - m1 * m1)
        n_qp = sqp + dt * ((a11 + a22) * sqp + w * (spp - sqq) - m1 * m2)
        n_pp = spp + dt * (2.0 * (-w * sqp + a22 * spp) + kappa - m2 * m2)
        det = n_qq * n_pp - n_qp * n_qp
        if 0.0 < det < 1.0:
            scale = 1.0 / math.sqrt(det)
            n_qq, n_qp, n_pp = scale * n_qq, scale * n_qp, scale * n_pp
        sqq, sqp, spp = n_qq, n_qp, n_pp
    if record_stride:
        out.append((sqq, sqp, spp))
        idx = _grid_indices(horizon_steps, record_stride)
        return idx * dt, np.asarray(out)
    return np.array([[sqq, sqp], [sqp, spp]])


def write_trace_csv(path, record: EnsembleRecord, k: int = 0) -> None:
    """Write one trajectory's trace as CSV with %.12e formatting."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for g, t in enumerate(record.times):
            row = (
                t,
                record.r[k, g, 0],
                record.r[k, g, 1],
                record.cov[k, g, 0],
                record.cov[k, g, 1],
                record.cov[k, g, 2],
                record.dr[k, g, 0],
                record.dr[k, g, 1],
                record.dcov[k, g, 0],
                record.dcov[k, g, 1],
                record.dcov[k, g, 2],
                record.omega_fb[k, g],
                record.dy[k, g],
                record.fhom[k, g],
            )
            fh.write(",".join(f"{v:.12e}" for v in row) + "\n")
