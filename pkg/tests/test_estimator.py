import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from varattitude import _kernels
from varattitude.errors import ConfigError, NewtonDivergence
from varattitude.estimator import (
    EstimatorGains,
    EstimatorState,
    FrameBatch,
    PhiFunction,
    continuous_rhs,
    continuous_step,
    discrete_step,
    initial_state,
    lyapunov_V,
    lyapunov_V_error,
    newton_solve_omega,
    potential_U0,
    run_discrete,
)
from varattitude.measurement import MeasurementFrame, compute_SL
from varattitude.so3 import exp_so3, log_so3, principal_angle, rotation_defect

import oracles
from scenarios import ref_series, run_from_errors

needs_compiled = pytest.mark.skipif(not _kernels.HAVE_COMPILED, reason="compiled kernel not built")


def _frame(R, E, W, Omega=np.zeros(3), beta=np.zeros(3), t=0.0):
    return MeasurementFrame(t, E, R.T @ E, np.asarray(Omega) + beta, W)


def _state_error(a, b):
    return np.linalg.norm(np.r_[log_so3(a.R_hat @ b.R_hat.T), a.omega - b.omega, a.beta_hat - b.beta_hat])


class TestPotential:
    def test_zero_at_truth(self, rng, ref_E, ref_W):
        R = oracles.random_rotation(rng)
        assert potential_U0(R, _frame(R, ref_E, ref_W)) == pytest.approx(0.0, abs=1e-14)

    def test_error_form(self, rng, ref_E, ref_W):
        K = ref_E @ ref_W @ ref_E.T
        for _ in range(200):
            R, R_hat = oracles.random_rotation(rng), oracles.random_rotation(rng)
            Q = R @ R_hat.T
            assert potential_U0(R_hat, _frame(R, ref_E, ref_W)) == pytest.approx(
                np.trace((np.eye(3) - Q).T @ K), abs=1e-12
            )

    def test_antipodal_columns(self):
        frame = MeasurementFrame(0.0, np.eye(3), -np.eye(3), np.zeros(3), np.eye(3))
        assert potential_U0(np.eye(3), frame) == pytest.approx(6.0, abs=1e-15)

    def test_nonnegative(self, rng, ref_E, ref_W):
        for _ in range(100):
            U = ref_E + 0.3 * rng.normal(size=ref_E.shape)
            frame = MeasurementFrame(0.0, ref_E, U, np.zeros(3), ref_W)
            assert potential_U0(oracles.random_rotation(rng), frame) >= 0.0


class TestContinuous:
    def test_equilibrium_tracks_truth(self, rng, ref_E, ref_W, ref_gains):
        R = oracles.random_rotation(rng)
        Om, beta = rng.normal(size=3), rng.normal(size=3) * 0.01
        frame = _frame(R, ref_E, ref_W, Om, beta)
        R_dot, w_dot, b_dot = continuous_rhs(EstimatorState(R, np.zeros(3), beta), frame, ref_gains)
        np.testing.assert_allclose(R_dot, R @ oracles.skew(Om), atol=1e-15)
        np.testing.assert_allclose(w_dot, 0.0, atol=1e-14)
        np.testing.assert_allclose(b_dot, 0.0, atol=1e-17)

    def test_matches_written_equations(self, rng, ref_E, ref_W, ref_gains):
        g = ref_gains
        R_hat = oracles.random_rotation(rng)
        frame = _frame(oracles.random_rotation(rng), ref_E, ref_W, rng.normal(size=3))
        s = EstimatorState(R_hat, rng.normal(size=3), rng.normal(size=3) * 0.1)
        R_dot, w_dot, b_dot = continuous_rhs(s, frame, g)
        Om_hat = frame.Omega_m - s.omega - s.beta_hat
        S = oracles.unskew(frame.L.T @ R_hat - R_hat.T @ frame.L)
        np.testing.assert_allclose(R_dot, R_hat @ oracles.skew(Om_hat), atol=1e-14)
        np.testing.assert_allclose(g.m * w_dot, -g.m * np.cross(Om_hat, s.omega) + S - g.D @ s.omega, atol=1e-12)
        np.testing.assert_allclose(b_dot, np.linalg.solve(g.P, S), atol=1e-15)

    def test_dissipation_identity(self, dense_frames, ref_gains):
        g = ref_gains
        s = initial_state(
            oracles.rot(oracles.REF_RHAT0_ANGLE * oracles.REF_AXIS), oracles.REF_OMEGA_HAT0,
            oracles.REF_BETA_HAT0, dense_frames(0.0).Omega_m,
        )
        h, d = 4.0 / 8000.0, 2.0 / 8000.0
        t = 0.0
        for _ in range(10):
            for k in range(200):
                s = continuous_step(s, t + k * h, dense_frames, g, h)
            t = round((t + 200 * h) * 8000.0) / 8000.0
            V = [lyapunov_V(continuous_step(s, t, dense_frames, g, j * d), dense_frames(t + j * d), g, oracles.REF_BETA)
                 for j in (-2, -1, 1, 2)]
            fd = (V[0] - 8 * V[1] + 8 * V[2] - V[3]) / (12 * d)
            exact = -s.omega @ g.D @ s.omega
            assert fd == pytest.approx(exact, rel=1e-6)

    def test_conservative_limit(self, dense_frames):
        # negligible dissipation and a frozen bias estimate: T + U is a first integral
        g = EstimatorGains(5.0, 1e-14 * np.eye(3), 1e15 * np.eye(3), 0.0)
        f0 = dense_frames(0.0)
        s = initial_state(oracles.rot(0.4 * oracles.REF_AXIS), [0.1, -0.2, 0.05], oracles.REF_BETA, f0.Omega_m)
        energy = lambda st, f: 0.5 * g.m * st.omega @ st.omega + potential_U0(st.R_hat, f)  # noqa: E731
        E0 = energy(s, f0)
        h = 8.0 / 8000.0
        for k in range(2000):
            s = continuous_step(s, k * h, dense_frames, g, h)
        assert energy(s, dense_frames(2000 * h)) == pytest.approx(E0, rel=1e-9)


class TestNewton:
    def test_zero_step_is_linear(self, rng):
        g = EstimatorGains.reference(h=0.0)
        c = rng.normal(size=3)
        w, it, res = newton_solve_omega(c, np.zeros(3), rng.normal(size=3), rng.normal(size=3), g, full_output=True)
        np.testing.assert_allclose(w, c / g.m, atol=1e-16)
        assert it <= 1

    def test_matches_fixed_point_oracle(self, rng, ref_gains):
        g = ref_gains
        for _ in range(200):
            c = rng.normal(size=3) * 2.0
            Om_m, b = rng.normal(size=3), rng.normal(size=3) * 0.02
            w = newton_solve_omega(c, np.zeros(3), Om_m, b, g)
            ref = oracles.picard_omega(c, Om_m - b, g.m, g.h)
            np.testing.assert_allclose(w, ref, atol=1e-10)

    def test_residual_audit(self, rng, ref_gains):
        g = ref_gains
        worst_it, worst_res = 0, 0.0
        for _ in range(1000):
            c = rng.normal(size=3) * 2.0
            Om_m, b = rng.normal(size=3), rng.normal(size=3) * 0.02
            w, it, res = newton_solve_omega(c, rng.normal(size=3) * 0.1, Om_m, b, g, full_output=True)
            resid = g.m * w - exp_so3(-g.h * (Om_m - w - b)) @ c
            assert np.linalg.norm(resid) <= 1e-12
            worst_it, worst_res = max(worst_it, it), max(worst_res, res)
        assert worst_it <= 10
        assert worst_res <= 1e-12

    def test_fd_jacobian_flag(self, rng, ref_gains):
        c, Om_m, b = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3) * 0.01
        w_an = newton_solve_omega(c, np.zeros(3), Om_m, b, ref_gains)
        w_fd = newton_solve_omega(c, np.zeros(3), Om_m, b, ref_gains, fd_jacobian=True)
        np.testing.assert_allclose(w_fd, w_an, atol=1e-13)

    def test_divergence_raises(self, rng, ref_gains):
        with pytest.raises(NewtonDivergence) as exc:
            newton_solve_omega(rng.normal(size=3), np.full(3, 50.0), np.zeros(3), np.zeros(3), ref_gains, max_iter=1)
        assert exc.value.residual > 1e-12


class TestDiscreteStep:
    def test_group_closure_over_run(self):
        cfg, tr, series = ref_series(40.0, noisy=True)
        est, _ = run_from_errors(cfg, tr, series, oracles.rot([0.5, -1.0, 2.0]), [0.2, 0.0, -0.1], [0.01, 0.0, 0.0])
        for R in est.R_hat:
            assert rotation_defect(R) <= 1e-9

    @given(
        arrays(np.float64, 3, elements=st.floats(-3.0, 3.0)),
        arrays(np.float64, 3, elements=st.floats(-1.0, 1.0)),
        arrays(np.float64, 3, elements=st.floats(-0.05, 0.05)),
    )
    @settings(max_examples=60, deadline=None)
    def test_step_stays_on_group(self, v, w, b):
        E = np.eye(3)
        W = np.diag([3.0, 2.0, 1.0])
        f0 = _frame(np.eye(3), E, W, [0.1, 0.2, 0.3], t=0.0)
        f1 = _frame(exp_so3([0.001, 0.002, 0.003]), E, W, [0.1, 0.2, 0.3], t=0.01)
        s = discrete_step(EstimatorState(exp_so3(v), w, b), f0, f1, EstimatorGains.reference())
        assert rotation_defect(s.R_hat) <= 1e-12

    def test_written_update_order(self, rng, ref_E, ref_W, ref_gains):
        g = ref_gains
        f0 = _frame(oracles.random_rotation(rng), ref_E, ref_W, rng.normal(size=3), t=0.0)
        f1 = _frame(oracles.random_rotation(rng), ref_E, ref_W, rng.normal(size=3), t=g.h)
        s = EstimatorState(oracles.random_rotation(rng), rng.normal(size=3) * 0.1, rng.normal(size=3) * 0.01)
        nxt = discrete_step(s, f0, f1, g)
        R1 = s.R_hat @ oracles.rot(g.h * (f0.Omega_m - s.omega - s.beta_hat))
        b1 = s.beta_hat + g.h * np.linalg.solve(g.P, compute_SL(s.R_hat, f0.L))
        c = (g.m * np.eye(3) - g.h * g.D) @ s.omega + g.h * compute_SL(R1, f1.L)
        w1 = oracles.picard_omega(c, f1.Omega_m - b1, g.m, g.h)
        np.testing.assert_allclose(nxt.R_hat, R1, atol=1e-14)
        np.testing.assert_allclose(nxt.beta_hat, b1, atol=1e-16)
        np.testing.assert_allclose(nxt.omega, w1, atol=1e-12)

    def test_fixed_point(self):
        cfg, tr, series = ref_series(40.0, attitude_update="lie_euler")
        est, trace = run_from_errors(cfg, tr, series, np.eye(3), np.zeros(3), np.zeros(3))
        assert trace.principal_angle.max() <= 1e-9
        assert np.abs(est.omega).max() <= 1e-9
        assert np.abs(trace.beta_err).max() <= 1e-9

    def test_local_order_two(self, dense_frames, ref_gains):
        s0 = initial_state(
            oracles.rot(oracles.REF_RHAT0_ANGLE * oracles.REF_AXIS), oracles.REF_OMEGA_HAT0,
            oracles.REF_BETA_HAT0, dense_frames(0.0).Omega_m,
        )
        errs = []
        for h in (0.01, 0.005, 0.0025):
            g = ref_gains.with_step(h)
            a = discrete_step(s0, dense_frames(0.0), dense_frames(h), g)
            b = continuous_step(s0, 0.0, dense_frames, g, h)
            errs.append(_state_error(a, b))
        for e1, e2 in zip(errs, errs[1:]):
            assert 3.5 <= e1 / e2 <= 4.5

    def test_first_step_from_rest(self, ref_E, ref_W, ref_gains):
        # with omega_0 = 0 the attitude is frozen for one step while omega and
        # beta_hat pick up h S; V rises by h^2/2 (|S|^2/m + S^T P^-1 S) + O(h^3)
        g = ref_gains
        frame = _frame(np.eye(3), ref_E, ref_W)
        R_hat = oracles.rot([0.0, 0.0, 1.0])
        s0 = EstimatorState(R_hat, np.zeros(3), np.zeros(3))
        s1 = discrete_step(s0, frame, frame, g)
        np.testing.assert_array_equal(s1.R_hat, R_hat)
        S = compute_SL(R_hat, frame.L)
        dV = lyapunov_V(s1, frame, g, np.zeros(3)) - lyapunov_V(s0, frame, g, np.zeros(3))
        expected = 0.5 * g.h**2 * (S @ S / g.m + S @ g.P_inv @ S)
        assert dV > 0.0
        assert dV == pytest.approx(expected, rel=0.05)

    def test_noise_free_energy_never_increases(self):
        cfg, tr, series = ref_series(40.0)
        state0 = initial_state(cfg.R_hat0, cfg.Omega_hat0, cfg.beta_hat0, series.Omega_m[0])
        _, trace = run_from_errors(
            cfg, tr, series, tr.R[0] @ state0.R_hat.T, state0.omega, cfg.beta - state0.beta_hat
        )
        assert np.max(np.diff(trace.V)) <= 1e-8 * max(1.0, trace.V[0])
        assert trace.V[-1] < 0.2 * trace.V[0]


class TestLongHorizon:
    """Noise-free convergence once the slow bias mode has decayed."""

    @pytest.mark.slow
    def test_attitude_and_bias_converge(self):
        cfg, tr, series = ref_series(800.0)
        state0 = initial_state(cfg.R_hat0, cfg.Omega_hat0, cfg.beta_hat0, series.Omega_m[0])
        _, trace = run_from_errors(
            cfg, tr, series, tr.R[0] @ state0.R_hat.T, state0.omega, cfg.beta - state0.beta_hat
        )
        assert trace.principal_angle[-1] <= 1e-3
        assert np.linalg.norm(trace.beta_err[-1]) <= 1e-4
        assert np.max(np.diff(trace.V)) <= 1e-8 * max(1.0, trace.V[0])

    @pytest.mark.slow
    def test_random_initial_errors_converge(self):
        cfg, tr, series = ref_series(1000.0)
        rng = np.random.default_rng(7)
        for _ in range(8):
            Q0 = oracles.random_rotation(rng, 3.0)
            _, trace = run_from_errors(cfg, tr, series, Q0, rng.uniform(-0.3, 0.3, 3), rng.uniform(-0.02, 0.02, 3))
            assert trace.principal_angle[-1] <= 1e-3


class TestRunDiscrete:
    @needs_compiled
    def test_backends_agree(self):
        cfg, tr, series = ref_series(40.0, noisy=True)
        Q0 = oracles.rot([0.3, 0.2, -1.0])
        a, _ = run_from_errors(cfg, tr, series, Q0, [0.1, 0.1, 0.1], [0.0, 0.01, 0.0], backend="cython")
        b, _ = run_from_errors(cfg, tr, series, Q0, [0.1, 0.1, 0.1], [0.0, 0.01, 0.0], backend="python")
        assert np.max(np.abs(a.R_hat - b.R_hat)) <= 1e-11
        assert np.max(np.abs(a.omega - b.omega)) <= 1e-11
        assert np.max(np.abs(a.beta_hat - b.beta_hat)) <= 1e-13
        assert a.backend == "cython" and b.backend == "python"

    def test_nonlinear_phi_runs_in_python(self):
        cfg, tr, series = ref_series(40.0)
        phi = PhiFunction(lambda x: x + 0.5 * x * x, lambda x: 1.0 + x, "quadratic")
        g = EstimatorGains(cfg.gains.m, cfg.gains.D, cfg.gains.P, cfg.gains.h, phi)
        state0 = initial_state(cfg.R_hat0, cfg.Omega_hat0, cfg.beta_hat0, series.Omega_m[0])
        est, trace = run_from_errors(
            cfg, tr, series, tr.R[0] @ state0.R_hat.T, state0.omega, cfg.beta - state0.beta_hat, gains=g
        )
        assert est.backend == "python"
        assert np.max(np.diff(trace.V)) <= 1e-8 * max(1.0, trace.V[0])
        if _kernels.HAVE_COMPILED:
            with pytest.raises(ValueError):
                run_from_errors(cfg, tr, series, np.eye(3), np.zeros(3), np.zeros(3), gains=g, backend="cython")

    def test_rejects_non_rotation(self, ref_gains):
        batch = FrameBatch(np.zeros(2), np.zeros((2, 3, 3)), np.zeros(2), np.zeros((2, 3)))
        with pytest.raises(ConfigError):
            run_discrete(EstimatorState(2.0 * np.eye(3), np.zeros(3), np.zeros(3)), batch, ref_gains)

    @pytest.mark.parametrize("backend", ["python", pytest.param("cython", marks=needs_compiled)])
    def test_divergence_reports_step(self, backend):
        cfg, tr, series = ref_series(40.0)
        batch = FrameBatch(series.t[:50], series.L[:50], series.offset[:50], series.Omega_m[:50])
        s0 = EstimatorState(np.eye(3), np.zeros(3), np.zeros(3))
        with pytest.raises(NewtonDivergence) as exc:
            run_discrete(s0, batch, cfg.gains, tol=1e-300, max_iter=3, backend=backend)
        assert exc.value.step is not None and 0 <= exc.value.step < 50

    def test_unknown_backend(self, ref_gains):
        batch = FrameBatch(np.zeros(2), np.zeros((2, 3, 3)), np.zeros(2), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            run_discrete(EstimatorState(np.eye(3), np.zeros(3), np.zeros(3)), batch, ref_gains, backend="gpu")


class TestLyapunov:
    def test_zero_at_zero_error(self, ref_gains):
        assert lyapunov_V_error(np.eye(3), np.zeros(3), np.zeros(3), np.eye(3), ref_gains) == 0.0

    def test_kinetic_only(self, ref_gains):
        assert lyapunov_V_error(np.eye(3), [1.0, 0.0, 0.0], np.zeros(3), np.eye(3), ref_gains) == pytest.approx(2.5)

    def test_forms_agree(self, rng, ref_E, ref_W, ref_gains):
        K = ref_E @ ref_W @ ref_E.T
        beta = rng.normal(size=3) * 0.02
        for _ in range(1000):
            R, R_hat = oracles.random_rotation(rng), oracles.random_rotation(rng)
            s = EstimatorState(R_hat, rng.normal(size=3), beta + rng.normal(size=3) * 0.01)
            a = lyapunov_V(s, _frame(R, ref_E, ref_W, beta=beta), ref_gains, beta)
            b = lyapunov_V_error(R @ R_hat.T, s.omega, beta - s.beta_hat, K, ref_gains)
            assert a == pytest.approx(b, abs=1e-12 * max(1.0, b))


class TestGainsAndInit:
    def test_reference_values(self):
        g = EstimatorGains.reference()
        assert g.m == 5.0 and g.h == 0.01
        np.testing.assert_array_equal(np.diag(g.D), [17.4, 18.85, 20.3])
        np.testing.assert_allclose(g.P_inv, np.eye(3) / 2000.0, rtol=1e-15)

    @pytest.mark.parametrize(
        "kwargs, field",
        [
            (dict(m=0.0), "gains.m"),
            (dict(D=-np.eye(3)), "gains.D"),
            (dict(D=np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])), "gains.D"),
            (dict(P=np.diag([1.0, 0.0, 1.0])), "gains.P"),
            (dict(h=1.0), "gains.D"),
            (dict(h=-0.01), "gains.h"),
            (dict(phi=PhiFunction(lambda x: x + 1.0, lambda x: 1.0)), "phi"),
            (dict(phi=PhiFunction(lambda x: -x, lambda x: -1.0)), "phi"),
        ],
    )
    def test_guards(self, kwargs, field):
        base = dict(m=5.0, D=np.diag([17.4, 18.85, 20.3]), P=2e3 * np.eye(3), h=0.01)
        base.update(kwargs)
        with pytest.raises(ConfigError, match=field):
            EstimatorGains(**base)

    def test_dense_P_inverse(self):
        P = np.array([[2.0, 0.5, 0.0], [0.5, 2.0, 0.1], [0.0, 0.1, 1.0]]) * 1e3
        g = EstimatorGains(5.0, np.eye(3), P, 0.01)
        np.testing.assert_allclose(g.P_inv @ P, np.eye(3), atol=1e-13)

    def test_initial_residual_subtracts_bias_estimate(self):
        s = initial_state(np.eye(3), [0.1, 0.2, 0.3], [0.01, 0.02, 0.03], [1.0, 1.0, 1.0])
        np.testing.assert_allclose(s.omega, [0.89, 0.78, 0.67], atol=1e-15)
        np.testing.assert_allclose(s.Omega_hat([1.0, 1.0, 1.0]), [0.1, 0.2, 0.3], atol=1e-15)

    def test_initial_principal_angle(self):
        R0 = oracles.rot(oracles.REF_R0_ANGLE * oracles.REF_AXIS)
        R_hat0 = oracles.rot(oracles.REF_RHAT0_ANGLE * oracles.REF_AXIS)
        assert principal_angle(R0 @ R_hat0.T) == pytest.approx(0.15 * np.pi, abs=1e-14)
