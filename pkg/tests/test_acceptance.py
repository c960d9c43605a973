"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines.  All physics checks run against the default benchmark configuration
(omega = 0.1, chi = 0.49, eta = 0.9, dt = 1e-3, thermal start n_th = 5)
unless a criterion names other values.  Everything here runs without the
training tools: the neural-policy path uses the checked-in fixture weights.

Two checks are expected to fail on physical grounds; the failure analysis
lives with the project notes, and companion tests elsewhere in the suite
demonstrate the same quantities converging on adequate horizons:

* the perfect-monitoring covariance relaxes at rate kappa - 2 chi = 0.02,
  so no simulation can be within 1e-5 of the fixed point by kappa t = 50
  from a generic start (about 8 time constants, kappa t ~ 380, are needed);
* the open-loop conditional-state information inherits the same slow mode
  (the anti-squeezed variance and the tangent noise level keep growing on
  the 1/(kappa - 2 chi) timescale), so its curve has not plateaued to
  1 percent per unit time by kappa t = 20.
"""

import math
import sys
import time

import numpy as np
import pytest

from sqzfb import (
    InitialCondition,
    NeuralPolicy,
    NoControl,
    OpenLoop,
    RandomInit,
    SystemParams,
    GaussianState,
    TangentState,
    final_homodyne_fi,
    StrongMeasurementSpec,
    gaussian_qfi,
    integrate_covariance,
    load_weights,
    run_ensemble,
    squeezing_db,
    steady_state_covariance,
    unconditional_steady_state,
)
from sqzfb.cli import main as cli_main
from sqzfb.metrology import qfi_arrays
from oracles import (
    qfi_fidelity_oracle,
    random_physical_instance,
    refilter_moments_batch,
)

THERMAL5 = InitialCondition(r0=(0.0, 0.0), n_th=5.0)


def report(criterion: str, ok: bool, detail: str) -> bool:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


class TestSteadyStateAnalytics:
    def test_criterion_01_open_loop_squeezing_level(self):
        params = SystemParams(omega=0.0, chi=0.49, eta=0.9)
        start = time.perf_counter()
        for _ in range(100):
            value = squeezing_db(steady_state_covariance(params))
        elapsed = (time.perf_counter() - start) / 100
        ok = abs(value - 6.05) <= 0.01 and elapsed < 1e-3
        assert report(
            "criterion 1", ok,
            f"squeezing {value:.4f} dB vs 6.05 +- 0.01, runtime {elapsed * 1e6:.1f} us",
        )

    def test_criterion_02_perfect_monitoring_steady_state(self):
        params = SystemParams(omega=0.0, chi=0.49, eta=1.0)
        ss = steady_state_covariance(params)
        exact = ss[0, 0] == (params.kappa - 2 * params.chi) / params.kappa
        sigma = integrate_covariance(params, 0.0, 11.0 * np.eye(2), 50_000)
        err = abs(sigma[0, 0] - 0.02)
        ok = exact and err < 1e-5
        assert report(
            "criterion 2", ok,
            f"analytic exact: {exact}; |sim(kt=50) - 0.02| = {err:.3e} vs 1e-5 "
            "(relaxation rate kappa - 2 chi = 0.02 makes this horizon unreachable)",
        )

    def test_criterion_03_unconditional_limit(self):
        errs = []
        sq = []
        for chi in (0.05, 0.15, 0.25, 0.35, 0.45, 0.49):
            params = SystemParams(omega=0.0, chi=chi, eta=0.0)
            horizon = int(round(16.0 / ((1.0 - 2.0 * chi) * params.dt)))
            sigma = integrate_covariance(params, 0.0, 11.0 * np.eye(2), horizon)
            target = unconditional_steady_state(params)
            errs.append(np.abs(sigma - target).max())
            sq.append(squeezing_db(sigma))
        ok = max(errs) < 1e-5 and max(sq) < 3.0103
        assert report(
            "criterion 3", ok,
            f"max |sim - analytic| = {max(errs):.2e} vs 1e-5; "
            f"max squeezing {max(sq):.4f} dB < 3.0103",
        )

    def test_criterion_04_free_running_squeezing(self):
        params = SystemParams(omega=0.1, chi=0.49, eta=0.9)
        sigma = integrate_covariance(params, 0.0, 11.0 * np.eye(2), 600_000)
        value = squeezing_db(sigma)
        ok = abs(value - 5.25) <= 0.1
        assert report("criterion 4", ok, f"max squeezing {value:.4f} dB vs 5.25 +- 0.1")


class TestDerivativeSystem:
    def test_criterion_05_tangents_match_refiltered_differences(self):
        params = SystemParams(omega=0.1, chi=0.49, eta=0.9)
        n, steps, delta = 100, 10_000, 1e-4
        rec = run_ensemble(
            params, RandomInit(), n, steps, NoControl(), 31415, record_stride=1
        )
        dy_seq = rec.dy[:, 1:].T
        r0 = rec.r[:, 0, :]
        sig0 = np.empty((n, 2, 2))
        sig0[:, 0, 0] = rec.cov[:, 0, 0]
        sig0[:, 0, 1] = sig0[:, 1, 0] = rec.cov[:, 0, 1]
        sig0[:, 1, 1] = rec.cov[:, 0, 2]
        worst = 0.0
        up_r, up_s = refilter_moments_batch(
            dy_seq, params.dt, params.omega + delta, params.chi, params.kappa,
            params.eta, r0, sig0,
        )
        dn_r, dn_s = refilter_moments_batch(
            dy_seq, params.dt, params.omega - delta, params.chi, params.kappa,
            params.eta, r0, sig0,
        )
        fd_r = (up_r - dn_r) / (2 * delta)
        fd_s = (up_s - dn_s) / (2 * delta)
        got_r = rec.dr[:, -1, :]
        got_s = np.empty_like(fd_s)
        got_s[:, 0, 0] = rec.dcov[:, -1, 0]
        got_s[:, 0, 1] = got_s[:, 1, 0] = rec.dcov[:, -1, 1]
        got_s[:, 1, 1] = rec.dcov[:, -1, 2]
        for fd, got in ((fd_r, got_r), (fd_s, got_s)):
            scale = np.maximum(np.abs(fd), np.abs(got))
            floor = 0.01 * np.median(scale[scale > 0])
            rel = np.abs(fd - got) / np.maximum(scale, floor)
            worst = max(worst, float(rel.max()))
        ok = worst < 1e-2
        assert report(
            "criterion 5", ok,
            f"{n} random trajectories, worst relative error {worst:.2e} vs 1e-2",
        )

    def test_criterion_06_state_information_vs_fidelity_oracle(self):
        rng = np.random.default_rng(62831)
        worst = 0.0
        for _ in range(10_000):
            r, sigma, dr, dsigma = random_physical_instance(rng)
            q = gaussian_qfi(GaussianState(r, sigma), TangentState(dr, dsigma))
            oracle = qfi_fidelity_oracle(r, sigma, dr, dsigma)
            worst = max(worst, abs(q - oracle) / max(q, 1e-12))
        ok = worst < 0.01
        assert report(
            "criterion 6", ok, f"10^4 instances, worst relative error {worst:.2e} vs 1e-2"
        )

    def test_criterion_07_open_loop_record_information_is_null(self):
        params = SystemParams(omega=0.1, chi=0.49, eta=0.9)
        rec = run_ensemble(params, THERMAL5, 200, 5_000, OpenLoop(params), 2024, 500)
        worst = float(np.abs(rec.fhom).max())
        ok = worst <= 1e-12
        assert report(
            "criterion 7", ok,
            f"200 open-loop trajectories, max per-trajectory integral {worst:.1e} vs 1e-12",
        )

    def test_criterion_08_measurement_never_beats_state_information(self):
        rng = np.random.default_rng(16180)
        worst = -np.inf
        for _ in range(10_000):
            r, sigma, dr, dsigma = random_physical_instance(rng)
            state = GaussianState(r, sigma)
            tangent = TangentState(dr, dsigma)
            q = gaussian_qfi(state, tangent)
            spec = StrongMeasurementSpec(
                theta=rng.uniform(-math.pi / 2, math.pi / 2),
                z=10.0 ** rng.uniform(-8, 0),
            )
            fi = final_homodyne_fi(state, tangent, spec)
            worst = max(worst, (fi - q) / max(q, 1e-12))
        ok = worst <= 1e-9
        assert report(
            "criterion 8", ok,
            f"10^4 instances, worst (FI - Q)/Q = {worst:.2e} vs 1e-9",
        )


@pytest.fixture(scope="module")
def benchmark_runs():
    params = SystemParams(omega=0.1, chi=0.49, eta=0.9)
    t0 = time.perf_counter()
    ol = run_ensemble(params, THERMAL5, 500, 20_000, OpenLoop(params), 7, 100)
    nc = run_ensemble(params, THERMAL5, 500, 20_000, NoControl(), 7, 100)
    elapsed = time.perf_counter() - t0
    return ol, nc, elapsed


class TestEnsembleStatistics:

    def test_criterion_09a_open_loop_beats_no_control_early(self, benchmark_runs):
        from sqzfb import effective_qfi

        ol, nc, elapsed = benchmark_runs
        rep_ol = effective_qfi(ol)
        rep_nc = effective_qfi(nc)
        window = (rep_ol.times >= 1.0) & (rep_ol.times <= 10.0)
        t_win = rep_ol.times[window]
        margin = rep_ol.qeff_over_t[window] - rep_nc.qeff_over_t[window]
        sig = margin / (
            np.hypot(rep_ol.std_err[window], rep_nc.std_err[window]) / t_win
        )
        ok = bool(np.all(margin > 0.0))
        assert report(
            "criterion 9a", ok,
            f"N = 500, min margin over kt in [1, 10]: {margin.min():.3f} "
            f"(significance reaches {sig.max():.0f} standard errors by kt = 10; "
            f"below kt of about 2 the strategies are statistically indistinguishable "
            f"at this ensemble size), runtime {elapsed:.1f} s",
        )

    def test_criterion_09b_open_loop_state_information_plateau(self, benchmark_runs):
        from sqzfb import effective_qfi

        ol, _, _ = benchmark_runs
        rep = effective_qfi(ol)
        slopes = []
        for t in range(10, 20):
            i = int(np.argmin(np.abs(rep.times - t)))
            j = int(np.argmin(np.abs(rep.times - (t + 1))))
            slopes.append((rep.qbar_c[j] - rep.qbar_c[i]) / rep.qbar_c[i])
        worst = max(slopes)
        ok = worst < 0.01
        assert report(
            "criterion 9b", ok,
            f"max relative slope of the open-loop state information after kt = 10: "
            f"{worst:.3f} per unit kt vs 0.01 (the slow mode kappa - 2 chi keeps it "
            "growing until kt of order several hundred)",
        )

    def test_criterion_10_byte_identical_reruns(self, tmp_path):
        import yaml

        cfg = tmp_path / "config.yaml"
        cfg.write_text(
            yaml.safe_dump(
                {
                    "omega": 0.1, "chi": 0.49, "eta": 0.9, "dt": 1e-3,
                    "n_traj": 3, "horizon_steps": 200, "stride": 50, "seed": 99,
                    "n_th": 5.0,
                }
            )
        )
        blobs = []
        for name, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
            out = tmp_path / name
            cli_main([
                "--config", str(cfg), "--out", str(out), "--jobs", jobs,
                "compare", "--strategies", "none,open_loop",
            ])
            blobs.append([
                (out / f).read_bytes()
                for f in ("fisher_none.csv", "fisher_open_loop.csv", "comparison.csv")
            ])
        ok = blobs[0] == blobs[1] == blobs[2]
        assert report(
            "criterion 10", ok,
            "two reruns and a multi-worker run produced byte-identical CSVs",
        )


class TestStandaloneNeuralPath:
    def test_fixture_weights_drive_the_simulator(self):
        """The neural-policy path works from checked-in fixtures alone."""
        import os

        fixture = os.path.join(os.path.dirname(__file__), "fixtures", "actor_fixture.json")
        weights = load_weights(fixture)
        params = SystemParams(omega=0.1, chi=0.49, eta=0.9)
        rec = run_ensemble(
            params, THERMAL5, 4, 200, NeuralPolicy(weights), 5, 100
        )
        trainer_modules = [m for m in sys.modules if "trainer" in m.lower()]
        ok = rec.n_failed == 0 and np.all(np.isfinite(rec.omega_fb)) and not trainer_modules
        assert report(
            "fixture-only neural path", ok,
            f"layer sizes {weights.layer_sizes}, no training modules loaded",
        )
