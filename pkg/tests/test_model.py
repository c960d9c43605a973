import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqzfb import (
    GaussianState,
    SystemParams,
    build_matrices,
    perpendicular_squeezing_db,
    purity,
    squeezing_db,
    stability_check,
    steady_state_covariance,
    unconditional_steady_state,
)
from oracles import riccati_rhs

# Frozen from the closed form evaluated independently.
SS_QQ_ETA09 = 0.24801021696368497


class TestSystemParams:
    def test_valid(self, params):
        assert params.kappa == 1.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(omega=0.1, chi=0.49, eta=0.9, kappa=0.0),
            dict(omega=0.1, chi=0.49, eta=0.9, dt=0.0),
            dict(omega=0.1, chi=0.49, eta=-0.1),
            dict(omega=0.1, chi=0.49, eta=1.1),
            dict(omega=0.1, chi=0.5, eta=0.9),
            dict(omega=0.1, chi=0.6, eta=0.9),
            dict(omega=0.1, chi=-5.0, eta=0.9),  # Hurwitz fails: det(A) < 0
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SystemParams(**kwargs)


class TestBuildMatrices:
    def test_free_damped_mode(self):
        p = SystemParams(omega=0.0, chi=0.0, eta=0.5)
        m = build_matrices(p, 0.0)
        assert np.array_equal(m.A, [[-0.5, 0.0], [0.0, -0.5]])

    def test_benchmark_values(self, params):
        m = build_matrices(params, 0.0)
        assert np.allclose(m.A, [[-0.99, 0.1], [-0.1, -0.01]], atol=1e-15)

    def test_open_loop_cancels_rotation(self, params):
        m = build_matrices(params, -params.omega)
        assert m.A[0, 1] == 0.0 and m.A[1, 0] == 0.0

    def test_structure(self, params):
        m = build_matrices(params, 0.3)
        assert np.array_equal(m.D, np.eye(2))
        b = -math.sqrt(0.9)
        assert m.B[0, 0] == b and np.array_equal(m.B, m.E)
        assert m.B[0, 1] == m.B[1, 0] == m.B[1, 1] == 0.0

    @settings(max_examples=200, deadline=None)
    @given(
        omega=st.floats(-2.0, 2.0),
        chi=st.floats(-0.4, 0.49),
        eta=st.floats(0.0, 1.0),
        omega_fb=st.floats(-5.0, 5.0),
    )
    def test_drift_derivative_is_constant(self, omega, chi, eta, omega_fb):
        p = SystemParams(omega=omega, chi=chi, eta=eta)
        m = build_matrices(p, omega_fb)
        assert np.array_equal(m.dA, [[0.0, 1.0], [-1.0, 0.0]])


class TestStability:
    def test_benchmark_stable(self, params):
        # det = 0.25 - 0.2401 + 0.01 = 0.0199 > 0, trace = -1
        assert stability_check(build_matrices(params, 0.0).A)

    def test_overcritical_squeezing_unstable(self):
        A = np.array([[-(0.6 + 0.5), 0.0], [0.0, 0.6 - 0.5]])
        assert not stability_check(A)  # det = 0.25 - 0.36 < 0

    @pytest.mark.parametrize("omega", [-3.0, 0.0, 0.7, 12.0])
    def test_pure_damping_always_stable(self, omega):
        A = np.array([[-0.5, omega], [-omega, -0.5]])
        assert stability_check(A)


class TestSteadyState:
    def test_perfect_monitoring(self):
        p = SystemParams(omega=0.0, chi=0.49, eta=1.0)
        ss = steady_state_covariance(p)
        assert ss[0, 0] == (p.kappa - 2 * p.chi) / p.kappa
        assert abs(ss[0, 0] - 0.02) < 1e-15
        assert math.isclose(ss[1, 1], 50.0, rel_tol=1e-12)

    def test_partial_monitoring_closed_form(self):
        p = SystemParams(omega=0.0, chi=0.49, eta=0.9)
        ss = steady_state_covariance(p)
        assert math.isclose(ss[0, 0], SS_QQ_ETA09, rel_tol=1e-14)
        assert math.isclose(ss[1, 1], 50.0, rel_tol=1e-12)

    def test_no_squeezing_gives_vacuum(self):
        p = SystemParams(omega=0.0, chi=0.0, eta=0.37)
        assert np.allclose(steady_state_covariance(p), np.eye(2), atol=1e-14)

    def test_eta_zero_is_unconditional_limit(self):
        p = SystemParams(omega=0.0, chi=0.49, eta=0.0)
        ss = steady_state_covariance(p)
        assert np.allclose(ss, unconditional_steady_state(p), atol=1e-15)
        assert math.isclose(ss[0, 0], 1.0 / 1.98, rel_tol=1e-14)

    @pytest.mark.parametrize("eta", [0.0, 0.3, 0.5, 0.9, 1.0])
    def test_fixed_point_of_dynamics(self, eta):
        p = SystemParams(omega=0.0, chi=0.49, eta=eta)
        ss = steady_state_covariance(p)
        residual = riccati_rhs(ss, 0.0, p.chi, p.kappa, eta)
        assert np.abs(residual).max() < 1e-10

    def test_monotone_in_eta(self):
        qq = [
            steady_state_covariance(SystemParams(omega=0.0, chi=0.49, eta=e))[0, 0]
            for e in np.linspace(0.0, 1.0, 11)
        ]
        assert all(a > b for a, b in zip(qq, qq[1:]))

    def test_unconditional_3db_bound(self):
        for chi in np.linspace(0.01, 0.4999, 40):
            p = SystemParams(omega=0.0, chi=chi, eta=0.0)
            assert squeezing_db(steady_state_covariance(p)) < 3.0103
        near = SystemParams(omega=0.0, chi=0.499999, eta=0.0)
        assert squeezing_db(steady_state_covariance(near)) > 3.0

    def test_rejects_unstable(self):
        with pytest.raises(ValueError):
            SystemParams(omega=0.0, chi=0.51, eta=0.9)


class TestSqueezingDb:
    def test_vacuum(self):
        assert squeezing_db(np.eye(2)) == 0.0

    def test_squeezed_diag(self):
        assert math.isclose(squeezing_db(np.diag([0.5, 2.0])), 3.0102999566398, rel_tol=1e-12)

    def test_benchmark_open_loop_value(self):
        p = SystemParams(omega=0.0, chi=0.49, eta=0.9)
        assert math.isclose(squeezing_db(steady_state_covariance(p)), 6.0553, abs_tol=5e-4)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            squeezing_db(np.diag([-0.1, 1.0]))


class TestPerpendicularSqueezing:
    def test_moment_along_p(self):
        s = GaussianState([0.0, 1.0], np.diag([0.5, 2.0]))
        assert math.isclose(perpendicular_squeezing_db(s), 3.0103, abs_tol=1e-4)

    def test_moment_along_q(self):
        s = GaussianState([1.0, 0.0], np.diag([0.5, 2.0]))
        assert math.isclose(perpendicular_squeezing_db(s), -3.0103, abs_tol=1e-4)

    def test_degenerate_direction(self):
        s = GaussianState([0.0, 0.0], np.diag([0.5, 2.0]))
        assert perpendicular_squeezing_db(s) is None

    @settings(max_examples=200, deadline=None)
    @given(
        phi=st.floats(-math.pi, math.pi),
        nu=st.floats(1.0, 4.0),
        sq=st.floats(-1.0, 1.0),
        angle=st.floats(0.0, 2 * math.pi),
        norm=st.floats(0.1, 5.0),
    )
    def test_rotation_invariance(self, phi, nu, sq, angle, norm):
        c, s = math.cos(phi), math.sin(phi)
        rot0 = np.array([[c, -s], [s, c]])
        sigma = nu * rot0 @ np.diag([math.exp(2 * sq), math.exp(-2 * sq)]) @ rot0.T
        r = np.array([norm * math.cos(angle), norm * math.sin(angle)])
        base = perpendicular_squeezing_db(GaussianState(r, sigma))
        theta = 1.234
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        rotated = perpendicular_squeezing_db(
            GaussianState(rot @ r, rot @ sigma @ rot.T)
        )
        assert math.isclose(base, rotated, abs_tol=1e-9)


class TestPurity:
    def test_vacuum_pure(self):
        assert purity(np.eye(2)) == 1.0

    def test_thermal(self):
        assert math.isclose(purity(np.diag([11.0, 11.0])), 1.0 / 11.0, rel_tol=1e-14)

    def test_squeezed_steady_state_pure(self):
        assert purity(np.diag([0.02, 50.0])) == 1.0

    def test_rejects_unphysical(self):
        with pytest.raises(ValueError):
            purity(np.diag([0.3, 0.3]))
