"""Time steppers: accuracy, convergence order, adaptive control,
symplectic boundedness, trajectory invariants."""

import math

import numpy as np
import pytest

from ermakov import dynamics, invariants
from ermakov.errors import IntegrationError, SingularityError
from ermakov.expr import compile_func
from ermakov.integrators import (
    Trajectory,
    integrate_adaptive54,
    integrate_fixed_rk4,
    integrate_verlet_Q,
    interpolate,
)
from ermakov.model import QFrameState


def harmonic(t, y):
    return np.array([y[1], -y[0]])


def zero_rhs(t, y):
    return np.zeros_like(y)


class TestFixedRK4:
    def test_harmonic_full_period(self):
        # dt ~ 0.01 chosen to subdivide the period exactly
        dt = 2 * math.pi / 628
        traj = integrate_fixed_rk4(harmonic, np.array([1.0, 0.0]), 0.0,
                                   2 * math.pi, dt, 2 * math.pi)
        assert abs(traj.y[-1, 0] - 1.0) < 1e-7

    def test_stride_mismatch_rejected(self):
        with pytest.raises(IntegrationError, match="subdivide"):
            integrate_fixed_rk4(harmonic, np.array([1.0, 0.0]), 0.0, 1.0,
                                0.3, 0.5)

    def test_zero_rhs_constant_trajectory(self):
        traj = integrate_fixed_rk4(zero_rhs, np.array([2.0, -1.0]), 0.0,
                                   1.0, 0.1, 0.5)
        assert np.all(traj.y == np.array([2.0, -1.0]))
        assert list(traj.t) == [0.0, 0.5, 1.0]

    def test_fourth_order_convergence(self):
        errs = []
        for dt in (0.1, 0.05, 0.025):
            traj = integrate_fixed_rk4(harmonic, np.array([1.0, 0.0]), 0.0,
                                       10.0, dt, 10.0)
            errs.append(abs(traj.y[-1, 0] - math.cos(10.0))
                        + abs(traj.y[-1, 1] + math.sin(10.0)))
        for a, b in zip(errs, errs[1:]):
            assert 12.0 < a / b < 20.0, errs

    def test_backward_integration(self):
        dt = 2 * math.pi / 628
        traj = integrate_fixed_rk4(harmonic, np.array([1.0, 0.0]), 2 * math.pi,
                                   0.0, dt, 2 * math.pi)
        assert traj.t[0] == 2 * math.pi and traj.t[-1] == 0.0
        assert abs(traj.y[-1, 0] - 1.0) < 1e-7

    def test_first_sample_is_exact_initial(self):
        y0 = np.array([1.0, 1.0 / 3.0])
        traj = integrate_fixed_rk4(harmonic, y0, 0.0, 1.0, 0.1, 1.0)
        assert traj.y[0][0] == y0[0] and traj.y[0][1] == y0[1]

    def test_partial_trajectory_attached_on_abort(self):
        calls = {"n": 0}

        def flaky(t, y):
            calls["n"] += 1
            if t > 0.5:
                raise SingularityError("synthetic pole", t)
            return harmonic(t, y)

        with pytest.raises(SingularityError) as exc:
            integrate_fixed_rk4(flaky, np.array([1.0, 0.0]), 0.0, 2.0, 0.05, 0.25)
        err = exc.value
        assert err.partial is not None
        assert err.partial.t[-1] <= 0.5
        assert err.last_state is not None


class TestAdaptive54:
    def test_long_harmonic_phase_error(self):
        traj = integrate_adaptive54(harmonic, np.array([1.0, 0.0]), 0.0,
                                    100 * math.pi, 1e-10, 100 * math.pi)
        assert abs(traj.y[-1, 0] - 1.0) < 1e-6
        assert abs(traj.y[-1, 1]) < 1e-6

    def test_negative_tol_rejected(self):
        with pytest.raises(IntegrationError, match="tol"):
            integrate_adaptive54(harmonic, np.array([1.0, 0.0]), 0.0, 1.0,
                                 -1.0, 0.5)

    def test_rejected_steps_recorded(self, s2):
        st = s2.initial
        y0 = np.array([st.q, st.q_dot, st.f, st.f_dot, st.tau])
        traj = integrate_adaptive54(dynamics.phys_ode(s2), y0, st.t,
                                    s2.plan.t_end, s2.plan.tol,
                                    s2.plan.output_stride)
        assert traj.rejected_steps > 0
        assert traj.method == "adaptive54"

    def test_tolerance_monotonicity(self):
        errs = []
        for tol in (1e-6, 1e-8, 1e-10):
            traj = integrate_adaptive54(harmonic, np.array([1.0, 0.0]), 0.0,
                                        10.0, tol, 10.0)
            errs.append(abs(traj.y[-1, 0] - math.cos(10.0)))
        assert errs[1] <= 2.0 * errs[0] and errs[2] <= 2.0 * errs[1], errs

    def test_dense_output_accuracy(self):
        # stride samples fall inside steps; the interpolant must hold
        # the integration tolerance, not just cubic-Hermite accuracy
        traj = integrate_adaptive54(harmonic, np.array([1.0, 0.0]), 0.0,
                                    20.0, 1e-10, 0.037)
        err = np.max(np.abs(traj.y[:, 0] - np.cos(traj.t)))
        assert err < 1e-8, err

    def test_stride_grid_hits_endpoint(self):
        traj = integrate_adaptive54(harmonic, np.array([1.0, 0.0]), 0.0,
                                    50.0, 1e-8, 0.05)
        assert len(traj) == 1001
        assert traj.t[-1] == pytest.approx(50.0, abs=1e-7)

    def test_underflow_is_classified_singular(self):
        def blowup(t, y):
            # y' = y^2 from y(0) = 1 diverges at t = 1
            return y * y

        with pytest.raises(SingularityError, match="underflow") as exc:
            integrate_adaptive54(blowup, np.array([1.0]), 0.0, 2.0, 1e-10, 0.5)
        assert exc.value.partial is not None

    def test_single_sample_when_span_empty(self):
        traj = integrate_adaptive54(harmonic, np.array([1.0, 0.0]), 0.0, 0.0,
                                    1e-10, 0.5)
        assert len(traj) == 1


class TestVerlet:
    def test_fixed_point_stays(self):
        V = compile_func("2*Q^2", "Q")
        W = compile_func("2*s^2", "s")
        traj = integrate_verlet_Q(V, W, QFrameState(tau=0.0, Q=1.0, Q_prime=0.0),
                                  0.01, 10.0, 0.1)
        assert np.max(np.abs(traj.y[:, 0] - 1.0)) < 1e-12
        assert np.max(np.abs(traj.y[:, 1])) < 1e-12

    def test_harmonic_period(self):
        # V = 2 Q^2 oscillates at angular frequency 2: period pi
        V = compile_func("2*Q^2", "Q")
        W = compile_func("0", "s")
        dt = math.pi / 314  # ~0.01, subdividing the period exactly
        traj = integrate_verlet_Q(V, W, QFrameState(tau=0.0, Q=1.0, Q_prime=0.0),
                                  dt, math.pi, math.pi)
        assert abs(traj.y[-1, 0] - 1.0) < 1e-3
        assert abs(traj.y[-1, 1]) < 1e-3

    def test_zero_dt_rejected(self):
        V = compile_func("0", "Q")
        with pytest.raises(IntegrationError, match="dt"):
            integrate_verlet_Q(V, None, QFrameState(tau=0.0, Q=1.0, Q_prime=0.0),
                               0.0, 1.0)

    def test_energy_bounded_no_secular_trend(self, s3):
        st = s3.initial
        init = QFrameState(tau=0.0, Q=st.q / st.f,
                           Q_prime=st.q_dot * st.f - st.q * st.f_dot)
        traj = integrate_verlet_Q(s3.potential_V, s3.potential_W, init,
                                  0.01, 1000.0, 0.1)
        e = np.array([invariants.energy_Q(QFrameState(tau=t, Q=y[0], Q_prime=y[1]),
                                          s3.potential_V, s3.potential_W)
                      for t, y in zip(traj.t, traj.y)])
        drift = np.abs(e - e[0])
        assert drift.max() < 1e-3, drift.max()
        # least-squares slope of |drift| vs tau, consistent with zero
        A = np.vstack([traj.t, np.ones_like(traj.t)]).T
        coef, *_ = np.linalg.lstsq(A, drift, rcond=None)
        resid = drift - A @ coef
        sigma2 = float(resid @ resid) / (len(drift) - 2)
        se = math.sqrt(sigma2 * np.linalg.inv(A.T @ A)[0, 0])
        assert abs(coef[0]) <= se, (coef[0], se)


class TestTrajectoryType:
    def test_monotonicity_enforced(self):
        with pytest.raises(IntegrationError, match="monotone"):
            Trajectory(t=np.array([0.0, 1.0, 0.5]), y=np.zeros((3, 1)),
                       dy=np.zeros((3, 1)), method="rk4", step_count=2,
                       rejected_steps=0)

    def test_empty_rejected(self):
        with pytest.raises(IntegrationError):
            Trajectory(t=np.array([]), y=np.zeros((0, 1)),
                       dy=np.zeros((0, 1)), method="rk4", step_count=0,
                       rejected_steps=0)

    def test_tau_strictly_increasing_along_physical_run(self, s2):
        st = s2.initial
        y0 = np.array([st.q, st.q_dot, st.f, st.f_dot, st.tau])
        traj = integrate_adaptive54(dynamics.phys_ode(s2), y0, st.t, 10.0,
                                    1e-8, 0.1)
        assert np.all(np.diff(traj.y[:, 4]) > 0)


class TestInterpolate:
    def test_matches_analytic_between_samples(self):
        traj = integrate_adaptive54(harmonic, np.array([1.0, 0.0]), 0.0,
                                    10.0, 1e-10, 0.1)
        for tq in (0.05, 1.73, 5.01, 9.93):
            got = interpolate(traj, tq)
            # cubic Hermite between samples 0.1 apart: error ~ h^4/384
            assert got[0] == pytest.approx(math.cos(tq), abs=1e-5)

    def test_exact_at_samples(self):
        traj = integrate_adaptive54(harmonic, np.array([1.0, 0.0]), 0.0,
                                    5.0, 1e-10, 0.5)
        got = interpolate(traj, float(traj.t[3]))
        assert got[0] == traj.y[3, 0]

    def test_out_of_range_rejected(self):
        traj = integrate_fixed_rk4(harmonic, np.array([1.0, 0.0]), 0.0, 1.0,
                                   0.1, 0.5)
        with pytest.raises(ValueError):
            interpolate(traj, 2.0)
