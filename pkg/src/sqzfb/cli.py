"""Batch experiment driver.

Every command is deterministic given (config, seed): rerunning writes
byte-identical CSVs.  Plots are out of scope here; the CSVs are the contract
and rendering lives with the training tools.

Config files are YAML with flat keys; command-line flags override the file.
Default physics follows the benchmark configuration omega = 0.1, chi = 0.49,
eta = 0.9, dt = 1e-3, thermal start n_th = 5 with r0 = (0, 0).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .metrology import (
    effective_qfi,
    final_homodyne_fi_arrays,
    qfi_arrays,
    write_fisher_csv,
)
from .model import (
    EPS_DIRECTION,
    SystemParams,
    squeezing_db,
    steady_state_covariance,
)
from .policies import NeuralPolicy, NoControl, OpenLoop, load_weights
from .trajectory import (
    EnsembleRecord,
    InitialCondition,
    integrate_covariance,
    run_ensemble,
    run_trajectory,
    write_trace_csv,
)

__all__ = ["ExperimentConfig", "main"]

STRATEGIES = ("none", "open_loop", "neural")

HIST_BIN_WIDTH = 0.25
HIST_RANGE = (-10.0, 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    params: SystemParams
    strategy: str = "none"
    weights: str | None = None
    stochastic: bool = False
    n_traj: int = 5000
    horizon_steps: int = 20_000
    stride: int = 100
    seed: int = 2024
    n_th: float = 5.0
    r0: tuple[float, float] = (0.0, 0.0)
    out_dir: str = "out"
    jobs: int = 1

    @property
    def init(self) -> InitialCondition:
        return InitialCondition(r0=self.r0, n_th=self.n_th)


def load_config(path: str | None) -> ExperimentConfig:
    doc = {}
    if path:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    params = SystemParams(
        omega=float(doc.get("omega", 0.1)),
        chi=float(doc.get("chi", 0.49)),
        eta=float(doc.get("eta", 0.9)),
        kappa=float(doc.get("kappa", 1.0)),
        dt=float(doc.get("dt", 1e-3)),
    )
    r0 = doc.get("r0", [0.0, 0.0])
    return ExperimentConfig(
        params=params,
        strategy=str(doc.get("strategy", "none")),
        weights=doc.get("weights"),
        stochastic=bool(doc.get("stochastic", False)),
        n_traj=int(doc.get("n_traj", 5000)),
        horizon_steps=int(doc.get("horizon_steps", 20_000)),
        stride=int(doc.get("stride", 100)),
        seed=int(doc.get("seed", 2024)),
        n_th=float(doc.get("n_th", 5.0)),
        r0=(float(r0[0]), float(r0[1])),
        out_dir=str(doc.get("out_dir", "out")),
        jobs=int(doc.get("jobs", 1)),
    )


def build_policy(config: ExperimentConfig, strategy: str | None = None):
    strategy = strategy or config.strategy
    if strategy == "none":
        return NoControl()
    if strategy == "open_loop":
        return OpenLoop(config.params)
    if strategy == "neural":
        if not config.weights:
            raise SystemExit("strategy 'neural' requires a weight file (weights: <path>)")
        if not os.path.exists(config.weights):
            raise SystemExit(f"weight file not found: {config.weights}")
        return NeuralPolicy(load_weights(config.weights), deterministic=not config.stochastic)
    raise SystemExit(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")


def run_strategy(config: ExperimentConfig, strategy: str | None = None) -> EnsembleRecord:
    policy = build_policy(config, strategy)
    return run_ensemble(
        config.params,
        config.init,
        config.n_traj,
        config.horizon_steps,
        policy,
        config.seed,
        record_stride=config.stride,
        jobs=config.jobs,
    )


def _ensure_out(config: ExperimentConfig) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    return config.out_dir


def _perp_squeezing_db_arrays(r: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Vectorized squeezing perpendicular to r; NaN where |r| is degenerate."""
    rq, rp = r[..., 0], r[..., 1]
    norm = np.hypot(rq, rp)
    with np.errstate(invalid="ignore", divide="ignore"):
        uq = -rp / norm
        up = rq / norm
        var = uq * (cov[..., 0] * uq + cov[..., 1] * up) + up * (
            cov[..., 1] * uq + cov[..., 2] * up
        )
        out = -10.0 * np.log10(var)
    return np.where(norm > EPS_DIRECTION, out, np.nan)


def _reference_squeezing_db(params: SystemParams) -> tuple[float, float]:
    """Steady squeezing bounds: free-running at the true detuning, and
    rotation-cancelled (the open-loop limit)."""
    horizon = int(round(12.0 / ((params.kappa - 2.0 * params.chi) * params.dt)))
    sigma0 = np.eye(2)
    sigma_nc = integrate_covariance(params, 0.0, sigma0, horizon)
    xi_none = squeezing_db(sigma_nc)
    xi_ol = squeezing_db(steady_state_covariance(params))
    return xi_none, xi_ol


def _grid_index(record: EnsembleRecord, t: float) -> int:
    return int(np.argmin(np.abs(record.times - t)))


def cmd_simulate(config: ExperimentConfig) -> list[str]:
    out = _ensure_out(config)
    record = run_trajectory(
        config.params, config.init, config.seed, config.horizon_steps,
        build_policy(config), record_stride=config.stride,
    )
    path = os.path.join(out, "trace.csv")
    write_trace_csv(path, record)
    return [path]

def cmd_compare(config: ExperimentConfig, strategies: list[str]) -> list[str]:
    out = _ensure_out(config)
    paths = []
    reports = {}
    for strategy in strategies:
        record = run_strategy(config, strategy)
        report = effective_qfi(record)
        reports[strategy] = report
        path = os.path.join(out, f"fisher_{strategy}.csv")
        write_fisher_csv(path, report)
        paths.append(path)
    merged = os.path.join(out, "comparison.csv")
    names = list(reports)
    with open(merged, "w", newline="") as fh:
        cols = ["t"]
        for s in names:
            cols += [f"qeff_over_t_{s}", f"fhom_over_t_{s}", f"qbar_c_{s}"]
        fh.write(",".join(cols) + "\n")
        times = reports[names[0]].times
        for i, t in enumerate(times):
            row = [f"{t:.12e}"]
            for s in names:
                rep = reports[s]
                row += [
                    f"{rep.qeff_over_t[i]:.12e}",
                    f"{rep.fhom_over_t[i]:.12e}",
                    f"{rep.qbar_c[i]:.12e}",
                ]
            fh.write(",".join(row) + "\n")
    paths.append(merged)
    return paths


def cmd_hist_perp_squeezing(config: ExperimentConfig, sample_times: list[float]) -> list[str]:
    out = _ensure_out(config)
    record = run_strategy(config)
    xi_none, xi_ol = _reference_squeezing_db(config.params)
    lo, hi = HIST_RANGE
    edges = np.arange(lo, hi + HIST_BIN_WIDTH / 2, HIST_BIN_WIDTH)
    paths = []
    ok = record.healthy
    for t in sample_times:
        g = _grid_index(record, t)
        xi = _perp_squeezing_db_arrays(record.r[ok, g], record.cov[ok, g])
        defined = xi[np.isfinite(xi)]
        clipped = np.clip(defined, lo + 1e-12, hi - 1e-12)
        counts, _ = np.histogram(clipped, bins=edges)
        total = defined.size
        path = os.path.join(out, f"hist_perp_t{record.times[g]:g}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(f"# t = {record.times[g]:.12e}\n")
            fh.write(f"# xi_ref_none_db = {xi_none:.12e}\n")
            fh.write(f"# xi_ref_open_loop_db = {xi_ol:.12e}\n")
            fh.write(f"# n_defined = {total}\n")
            fh.write(f"# n_undefined = {int(np.sum(~np.isfinite(xi)))}\n")
            fh.write(f"# n_failed = {record.n_failed}\n")
            fh.write("bin_left,bin_right,count,density\n")
            width = HIST_BIN_WIDTH
            for b in range(len(counts)):
                dens = counts[b] / (total * width) if total else 0.0
                fh.write(
                    f"{edges[b]:.12e},{edges[b + 1]:.12e},{counts[b]},{dens:.12e}\n"
                )
        paths.append(path)
    return paths


def cmd_mean_abs_r(config: ExperimentConfig) -> list[str]:
    out = _ensure_out(config)
    record = run_strategy(config)
    ok = record.healthy
    n = int(np.count_nonzero(ok))
    absr = np.hypot(record.r[ok, :, 0], record.r[ok, :, 1])
    mean = absr.mean(axis=0)
    stderr = absr.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    path = os.path.join(out, "mean_abs_r.csv")
    with open(path, "w", newline="") as fh:
        fh.write("t,mean_abs_r,stderr\n")
        for i, t in enumerate(record.times):
            fh.write(f"{t:.12e},{mean[i]:.12e},{stderr[i]:.12e}\n")
    return [path]


def cmd_omega_fb_trace(config: ExperimentConfig, n_samples: int = 5) -> list[str]:
    out = _ensure_out(config)
    record = run_strategy(config)
    ok = record.healthy
    w = record.omega_fb[ok]
    mean = w.mean(axis=0)
    std = w.std(axis=0, ddof=1) if w.shape[0] > 1 else np.zeros_like(mean)
    k = min(n_samples, w.shape[0])
    path = os.path.join(out, "omega_fb.csv")
    with open(path, "w", newline="") as fh:
        cols = ["t", "omega_fb_mean", "omega_fb_std"] + [f"trace_{i}" for i in range(k)]
        fh.write(",".join(cols) + "\n")
        for g, t in enumerate(record.times):
            row = [f"{t:.12e}", f"{mean[g]:.12e}", f"{std[g]:.12e}"]
            row += [f"{w[i, g]:.12e}" for i in range(k)]
            fh.write(",".join(row) + "\n")
    return [path]


def cmd_scatter(config: ExperimentConfig, t: float) -> list[str]:
    out = _ensure_out(config)
    record = run_strategy(config)
    g = _grid_index(record, t)
    ok = record.healthy
    idx = np.nonzero(ok)[0]
    xi = _perp_squeezing_db_arrays(record.r[ok, g], record.cov[ok, g])
    absr = np.hypot(record.r[ok, g, 0], record.r[ok, g, 1])
    fhom = record.fhom[ok, g]
    path = os.path.join(out, f"scatter_t{record.times[g]:g}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(f"# t = {record.times[g]:.12e}\n")
        fh.write("traj,perp_squeezing_db,abs_r,fhom_traj\n")
        for row in range(idx.size):
            xi_s = f"{xi[row]:.12e}" if np.isfinite(xi[row]) else "nan"
            fh.write(f"{idx[row]},{xi_s},{absr[row]:.12e},{fhom[row]:.12e}\n")
    return [path]


def _optimize_theta_batch(cov, dcov, dr, z: float = 1e-8, grid_points: int = 181,
                          tol: float = 1e-6) -> np.ndarray:
    """Best final-measurement information per trajectory (vectorized)."""
    thetas = np.linspace(-math.pi / 2, math.pi / 2, grid_points)
    vals = final_homodyne_fi_arrays(
        cov[:, None, :], dcov[:, None, :], dr[:, None, :], z, thetas[None, :]
    )
    best = np.argmax(vals, axis=1)
    h = thetas[1] - thetas[0]
    a = thetas[best] - h
    b = thetas[best] + h
    golden = (math.sqrt(5.0) - 1.0) / 2.0

    def fi(theta):
        return final_homodyne_fi_arrays(cov, dcov, dr, z, theta)

    x1 = b - golden * (b - a)
    x2 = a + golden * (b - a)
    f1, f2 = fi(x1), fi(x2)
    while np.max(b - a) > tol:
        left = f1 < f2
        a = np.where(left, x1, a)
        b = np.where(left, b, x2)
        x1n = b - golden * (b - a)
        x2n = a + golden * (b - a)
        f1n, f2n = fi(x1n), fi(x2n)
        f1, f2 = f1n, f2n
        x1, x2 = x1n, x2n
    return np.maximum(fi(0.5 * (a + b)), vals[np.arange(vals.shape[0]), best])


def cmd_final_homodyne(config: ExperimentConfig) -> list[str]:
    out = _ensure_out(config)
    record = run_strategy(config)
    ok = record.healthy
    mask = record.times > 0
    times = record.times[mask]
    path = os.path.join(out, "final_homodyne.csv")
    rows = []
    for gi, t in zip(np.nonzero(mask)[0], times):
        cov = record.cov[ok, gi]
        dcov = record.dcov[ok, gi]
        dr = record.dr[ok, gi]
        qfi = qfi_arrays(cov, dcov, dr)
        qbar = qfi.mean()
        if qbar <= 0.0:
            continue  # tangent-free point: ratios are 0/0
        f_opt = _optimize_theta_batch(cov, dcov, dr).mean()
        f_q = final_homodyne_fi_arrays(cov, dcov, dr, 1e-8, 0.0).mean()
        fhom = record.fhom[ok, gi].mean()
        rows.append(
            (t, f_opt / qbar, f_q / qbar, (fhom + f_opt) / (fhom + qbar),
             (fhom + f_q) / (fhom + qbar))
        )
    with open(path, "w", newline="") as fh:
        fh.write("t,ratio_cond_opt,ratio_cond_theta0,ratio_eff_opt,ratio_eff_theta0\n")
        for row in rows:
            fh.write(",".join(f"{v:.12e}" for v in row) + "\n")
    return [path]


def cmd_sweep(config: ExperimentConfig, param: str, values: list[float],
              strategies: list[str]) -> list[str]:
    paths = []
    for v in values:
        if param == "chi":
            params = replace(config.params, chi=v)
        elif param == "eta":
            params = replace(config.params, eta=v)
        else:
            raise SystemExit(f"sweep parameter must be 'chi' or 'eta', got {param!r}")
        sub = replace(
            config,
            params=params,
            out_dir=os.path.join(config.out_dir, f"sweep_{param}_{v:g}"),
        )
        paths += cmd_compare(sub, strategies)
    return paths


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sqzfb", description="Monitored squeezed-mode metrology experiments."
    )
    parser.add_argument("--config", help="YAML experiment configuration")
    parser.add_argument("--seed", type=int, help="override the base seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--jobs", type=int, help="worker processes for the ensemble")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="export a single-trajectory trace CSV")
    p = sub.add_parser("compare", help="information-vs-time curves per strategy")
    p.add_argument("--strategies", default="none,open_loop",
                   help="comma list from: none,open_loop,neural")
    p = sub.add_parser("hist-perp", help="histograms of squeezing perpendicular to r")
    p.add_argument("--times", required=True, help="comma list of sample times (1/kappa)")
    sub.add_parser("mean-abs-r", help="ensemble mean of |r| over time")
    sub.add_parser("omega-fb", help="control traces with ensemble mean/std")
    p = sub.add_parser("scatter", help="per-trajectory snapshot at a fixed time")
    p.add_argument("--time", type=float, required=True)
    sub.add_parser("final-homodyne", help="final-measurement information ratios")
    p = sub.add_parser("sweep", help="repeat compare over a parameter grid")
    p.add_argument("--param", required=True, choices=("chi", "eta"))
    p.add_argument("--values", required=True, help="comma list of parameter values")
    p.add_argument("--strategies", default="none,open_loop")

    args = parser.parse_args(argv)
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    if args.jobs is not None:
        config = replace(config, jobs=args.jobs)

    if args.command == "simulate":
        paths = cmd_simulate(config)
    elif args.command == "compare":
        paths = cmd_compare(config, args.strategies.split(","))
    elif args.command == "hist-perp":
        paths = cmd_hist_perp_squeezing(config, _parse_floats(args.times))
    elif args.command == "mean-abs-r":
        paths = cmd_mean_abs_r(config)
    elif args.command == "omega-fb":
        paths = cmd_omega_fb_trace(config)
    elif args.command == "scatter":
        paths = cmd_scatter(config, args.time)
    elif args.command == "final-homodyne":
        paths = cmd_final_homodyne(config)
    elif args.command == "sweep":
        paths = cmd_sweep(config, args.param, _parse_floats(args.values),
                          args.strategies.split(","))
    else:  # pragma: no cover
        parser.error(f"unknown command {args.command}")
    for path in paths:
        print(path, file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
