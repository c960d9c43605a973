import math
import os

import numpy as np
import pytest
import yaml

from sqzfb import InitialCondition, NoControl, effective_qfi, run_ensemble
from sqzfb.cli import main
from sqzfb.metrology import FISHER_COLUMNS

SMALL = {
    "omega": 0.1,
    "chi": 0.3,
    "eta": 0.9,
    "dt": 1e-3,
    "n_traj": 2,
    "horizon_steps": 10,
    "stride": 5,
    "seed": 7,
    "n_th": 5.0,
}


def write_config(tmp_path, name="config.yaml", **overrides):
    doc = {**SMALL, **overrides}
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def run_cli(*args) -> int:
    return main(list(args))


class TestSimulate:
    def test_trace_file(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert run_cli("--config", cfg, "--out", str(out), "simulate") == 0
        lines = (out / "trace.csv").read_text().splitlines()
        assert len(lines) == 4  # header + 3 grid points
        assert lines[0].startswith("t,r_q,r_p")


class TestCompare:
    def test_smoke_run_well_formed(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "compare",
                "--strategies", "none,open_loop")
        for name in ("fisher_none.csv", "fisher_open_loop.csv", "comparison.csv"):
            assert (out / name).exists()
        lines = (out / "fisher_none.csv").read_text().splitlines()
        assert lines[0] == ",".join(FISHER_COLUMNS)
        assert len(lines) == 3  # two positive-time grid rows

    def test_open_loop_record_information_is_zero(self, tmp_path):
        cfg = write_config(tmp_path, horizon_steps=200, stride=50)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "compare", "--strategies", "open_loop")
        rows = np.loadtxt(out / "fisher_open_loop.csv", delimiter=",", skiprows=1)
        assert np.all(rows[:, 1] == 0.0)

    def test_cross_command_consistency(self, tmp_path):
        """The ensemble behind the CSVs is reproducible in-process."""
        cfg = write_config(tmp_path, n_traj=4, horizon_steps=100, stride=50)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "compare", "--strategies", "none")
        rows = np.loadtxt(out / "fisher_none.csv", delimiter=",", skiprows=1)
        from sqzfb import SystemParams

        rec = run_ensemble(
            SystemParams(omega=0.1, chi=0.3, eta=0.9, dt=1e-3),
            InitialCondition((0.0, 0.0), 5.0),
            4, 100, NoControl(), 7, record_stride=50,
        )
        rep = effective_qfi(rec)
        # CSV carries 13 significant digits
        assert np.allclose(rows[:, 2], rep.qbar_c, rtol=5e-12)


class TestDeterminism:
    def test_byte_identical_reruns_and_jobs(self, tmp_path):
        cfg = write_config(tmp_path, n_traj=3, horizon_steps=60, stride=20)
        outs = []
        for name, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
            out = tmp_path / name
            run_cli("--config", cfg, "--out", str(out), "--jobs", jobs,
                    "compare", "--strategies", "none,open_loop")
            outs.append(out)
        for name in ("fisher_none.csv", "fisher_open_loop.csv", "comparison.csv"):
            blobs = [(o / name).read_bytes() for o in outs]
            assert blobs[0] == blobs[1] == blobs[2]


class TestHistogram:
    def test_layout_and_reference_lines(self, tmp_path):
        cfg = write_config(tmp_path, n_traj=20, horizon_steps=200, stride=100)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "hist-perp", "--times", "0.1,0.2")
        files = sorted(os.listdir(out))
        assert files == ["hist_perp_t0.1.csv", "hist_perp_t0.2.csv"]
        text = (out / "hist_perp_t0.1.csv").read_text()
        assert "# xi_ref_none_db = " in text and "# xi_ref_open_loop_db = " in text
        body = [l for l in text.splitlines() if not l.startswith("#")]
        assert body[0] == "bin_left,bin_right,count,density"
        assert len(body) == 1 + 80  # 0.25 dB bins spanning [-10, 10]
        counts = [int(l.split(",")[2]) for l in body[1:]]
        undef = int(text.split("# n_undefined = ")[1].split()[0])
        assert sum(counts) + undef == 20

    def test_vacuum_start_is_single_bin_at_zero(self, tmp_path):
        cfg = write_config(tmp_path, n_traj=10, horizon_steps=5, stride=5,
                           n_th=0.0, r0=[1.0, 0.0])
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "hist-perp", "--times", "0.0")
        body = [
            l for l in (out / "hist_perp_t0.csv").read_text().splitlines()
            if not l.startswith("#")
        ][1:]
        populated = [l for l in body if int(l.split(",")[2]) > 0]
        assert len(populated) == 1
        left, right = float(populated[0].split(",")[0]), float(populated[0].split(",")[1])
        assert left <= 0.0 <= right


class TestMeanAbsR:
    def test_starts_at_zero(self, tmp_path):
        cfg = write_config(tmp_path, n_traj=3, horizon_steps=40, stride=20)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "mean-abs-r")
        rows = np.loadtxt(out / "mean_abs_r.csv", delimiter=",", skiprows=1)
        assert rows[0, 0] == 0.0 and rows[0, 1] == 0.0
        assert np.all(rows[1:, 1] > 0.0)

    def test_unmonitored_decay_matches_linear_drift(self, tmp_path):
        """At eta = 0 the mean follows the deterministic damped rotation."""
        cfg = write_config(
            tmp_path, eta=0.0, n_traj=2, horizon_steps=2000, stride=500,
            n_th=0.0, r0=[2.0, 0.0],
        )
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "mean-abs-r")
        rows = np.loadtxt(out / "mean_abs_r.csv", delimiter=",", skiprows=1)
        from scipy.linalg import expm

        A = np.array([[-(0.3 + 0.5), 0.1], [-0.1, 0.3 - 0.5]])
        for t, mean, _ in rows:
            expected = np.linalg.norm(expm(A * t) @ np.array([2.0, 0.0]))
            assert math.isclose(mean, expected, rel_tol=5e-3, abs_tol=1e-9)


class TestOmegaFb:
    def test_open_loop_constant_trace(self, tmp_path):
        cfg = write_config(tmp_path, strategy="open_loop", n_traj=4,
                           horizon_steps=40, stride=20)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "omega-fb")
        rows = np.loadtxt(out / "omega_fb.csv", delimiter=",", skiprows=1)
        assert np.all(rows[:, 1] == -0.1)
        assert np.all(rows[:, 2] == 0.0)
        assert np.all(rows[:, 3:] == -0.1)

    def test_no_control_zero(self, tmp_path):
        cfg = write_config(tmp_path, strategy="none", n_traj=2,
                           horizon_steps=20, stride=10)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "omega-fb")
        rows = np.loadtxt(out / "omega_fb.csv", delimiter=",", skiprows=1)
        assert np.all(rows[:, 1:] == 0.0)


class TestScatter:
    def test_row_per_trajectory(self, tmp_path):
        cfg = write_config(tmp_path, n_traj=5, horizon_steps=100, stride=50)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "scatter", "--time", "0.1")
        lines = [
            l for l in (out / "scatter_t0.1.csv").read_text().splitlines()
            if not l.startswith("#")
        ]
        assert lines[0] == "traj,perp_squeezing_db,abs_r,fhom_traj"
        assert len(lines) == 1 + 5

    def test_open_loop_information_column_is_zero(self, tmp_path):
        cfg = write_config(tmp_path, strategy="open_loop", n_traj=3,
                           horizon_steps=100, stride=50)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "scatter", "--time", "0.1")
        rows = [
            l.split(",") for l in (out / "scatter_t0.1.csv").read_text().splitlines()[2:]
        ]
        assert all(float(r[3]) == 0.0 for r in rows)

    def test_single_trajectory(self, tmp_path):
        cfg = write_config(tmp_path, n_traj=1, horizon_steps=20, stride=10)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "scatter", "--time", "0.02")
        lines = (out / "scatter_t0.02.csv").read_text().splitlines()
        assert len([l for l in lines if not l.startswith("#")]) == 2


class TestFinalHomodyne:
    def test_ratios_bounded_by_one(self, tmp_path):
        cfg = write_config(tmp_path, n_traj=6, horizon_steps=300, stride=100)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "final-homodyne")
        rows = np.loadtxt(out / "final_homodyne.csv", delimiter=",", skiprows=1)
        assert rows.shape[0] == 3
        assert np.all(rows[:, 1] <= 1.0 + 1e-9)
        assert np.all(rows[:, 3] <= 1.0 + 1e-9)
        assert np.all(rows[:, 1] >= rows[:, 2] - 1e-12)


class TestSweep:
    def test_chi_grid(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "sweep",
                "--param", "chi", "--values", "0,0.2", "--strategies", "none")
        assert (out / "sweep_chi_0" / "fisher_none.csv").exists()
        assert (out / "sweep_chi_0.2" / "fisher_none.csv").exists()

    def test_rejects_unstable_value(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        with pytest.raises(ValueError):
            run_cli("--config", cfg, "--out", str(out), "sweep",
                    "--param", "chi", "--values", "0.6", "--strategies", "none")


class TestPolicyWiring:
    def test_neural_strategy_requires_existing_weights(self, tmp_path):
        cfg = write_config(tmp_path, strategy="neural", weights=str(tmp_path / "nope.json"))
        with pytest.raises(SystemExit, match="not found"):
            run_cli("--config", cfg, "--out", str(tmp_path / "out"), "simulate")

    def test_neural_strategy_runs_from_fixture(self, tmp_path):
        fixture = os.path.join(os.path.dirname(__file__), "fixtures", "actor_fixture.json")
        cfg = write_config(tmp_path, strategy="neural", weights=fixture,
                           n_traj=2, horizon_steps=20, stride=10)
        out = tmp_path / "out"
        run_cli("--config", cfg, "--out", str(out), "omega-fb")
        rows = np.loadtxt(out / "omega_fb.csv", delimiter=",", skiprows=1)
        assert np.all(np.isfinite(rows))
        assert rows[:, 2].max() > 0.0  # actions vary across trajectories
