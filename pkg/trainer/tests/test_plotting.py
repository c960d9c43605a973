import os

import numpy as np
import pytest

from sqzfb_trainer.plotting import (
    plot_compare,
    plot_histograms,
    plot_learning_curve,
    plot_omega_fb,
    plot_scatter,
)


@pytest.fixture
def fisher_csv(tmp_path):
    path = tmp_path / "fisher_none.csv"
    path.write_text(
        "t,fhom_over_t,qbar_c,qeff_over_t,stderr_qeff,n_traj\n"
        "1.0,0.5,10.0,10.5,0.1,100\n"
        "2.0,0.7,12.0,12.7,0.1,100\n"
    )
    return str(path)


class TestPlots:
    def test_compare(self, tmp_path, fisher_csv):
        out = str(tmp_path / "compare.png")
        assert plot_compare([fisher_csv], out) == out
        assert os.path.getsize(out) > 0

    def test_histograms(self, tmp_path):
        path = tmp_path / "hist_perp_t5.csv"
        path.write_text(
            "# t = 5.0\n# xi_ref_none_db = 5.25\n# xi_ref_open_loop_db = 6.05\n"
            "bin_left,bin_right,count,density\n"
            "0.0,0.25,3,0.3\n0.25,0.5,7,0.7\n"
        )
        out = str(tmp_path / "hist.png")
        plot_histograms([str(path)], out)
        assert os.path.getsize(out) > 0

    def test_learning_curve(self, tmp_path):
        path = tmp_path / "curve.csv"
        path.write_text(
            "timesteps,mean_episode_return,episodes,policy_loss,value_loss,entropy,log_std\n"
            "512,nan,0,0.1,1.0,1.4,0.0\n"
            "1024,25.0,2,0.1,0.9,1.4,0.0\n"
        )
        out = str(tmp_path / "curve.png")
        plot_learning_curve(str(path), out)
        assert os.path.getsize(out) > 0

    def test_omega_fb(self, tmp_path):
        path = tmp_path / "omega_fb.csv"
        path.write_text(
            "t,omega_fb_mean,omega_fb_std,trace_0\n0.0,-0.1,0.0,-0.1\n1.0,-0.1,0.0,-0.1\n"
        )
        out = str(tmp_path / "fb.png")
        plot_omega_fb(str(path), out)
        assert os.path.getsize(out) > 0

    def test_scatter(self, tmp_path):
        path = tmp_path / "scatter_t5.csv"
        path.write_text(
            "# t = 5.0\ntraj,perp_squeezing_db,abs_r,fhom_traj\n"
            "0,3.0,1.2,0.5\n1,4.0,0.8,0.0\n"
        )
        out = str(tmp_path / "scatter.png")
        plot_scatter(str(path), out)
        assert os.path.getsize(out) > 0

    def test_empty_csv_rejected_and_no_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("t,fhom_over_t,qbar_c,qeff_over_t,stderr_qeff,n_traj\n")
        out = str(tmp_path / "nope.png")
        with pytest.raises(ValueError, match="no data rows"):
            plot_compare([str(path)], out)
        assert not os.path.exists(out)
