"""Fast invariant checks runnable without pytest (``varattitude selftest``)."""

from __future__ import annotations

import time

import numpy as np

from . import _kernels
from .estimator import EstimatorGains, EstimatorState, FrameBatch, newton_solve_omega, run_discrete
from .harness import ScenarioConfig, run_scenario
from .measurement import choose_weights, compute_L, compute_SL, ref_directions
from .so3 import exp_so3, hat, log_so3, principal_angle, rotation_defect, vex


def _random_rotations(rng, n):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return [exp_so3(a * u) for a, u in zip(rng.uniform(0, np.pi - 1e-3, n), v)]


def check_hat_vex(rng):
    v = rng.normal(size=(200, 3))
    return max(np.max(np.abs(vex(hat(x)) - x)) for x in v) == 0.0


def check_exp_log(rng):
    err = 0.0
    for _ in range(500):
        u = rng.normal(size=3)
        v = u / np.linalg.norm(u) * rng.uniform(0, np.pi - 1e-3)
        R = exp_so3(v)
        err = max(err, np.max(np.abs(log_so3(R) - v)), rotation_defect(R))
    return err < 1e-9


def check_L_equals_KR(rng):
    E = ref_directions(9)
    W = choose_weights(E)
    K = E @ W @ E.T
    return all(np.max(np.abs(compute_L(E, W, R.T @ E) - K @ R)) < 1e-12 for R in _random_rotations(rng, 50))


def check_gradient(rng):
    E = ref_directions(9)
    W = choose_weights(E)
    ok = True
    for R, Rh in zip(_random_rotations(rng, 20), _random_rotations(rng, 20)):
        U = R.T @ E + 0.01 * rng.normal(size=E.shape)
        L = compute_L(E, W, U)
        eta = rng.normal(size=3)

        def cost(eps):
            A = E - Rh @ exp_so3(eps * eta) @ U
            return 0.5 * np.sum(A * (A @ W))

        eps = 1e-5
        fd = (cost(eps) - cost(-eps)) / (2 * eps)
        an = compute_SL(Rh, L) @ eta
        ok &= abs(fd - an) <= 1e-6 * max(abs(an), 1e-3)
    return ok


def check_newton(rng):
    g = EstimatorGains.reference()
    for _ in range(100):
        c = rng.normal(size=3)
        a = rng.normal(size=3) * 0.5
        w, it, res = newton_solve_omega(c, np.zeros(3), a, np.zeros(3), g, full_output=True)
        if res > 1e-12 or it > 10:
            return False
    return True


def check_fixed_point():
    cfg = ScenarioConfig.preset("paper_fig123").with_overrides(zero_noise=True)
    raw = cfg.raw
    raw["truth"]["attitude_update"] = "lie_euler"
    raw["estimator"] = {"attitude": raw["truth"]["attitude"], "omega": raw["truth"]["omega"], "bias": raw["truth"]["bias"]}
    res = run_scenario(ScenarioConfig.from_dict(raw))
    s = res.summary
    return (
        s["principal_angle_tail_max"] <= 1e-9
        and s["omega_err_norm_tail_max"] <= 1e-9
        and s["beta_err_norm_tail_max"] <= 1e-9
    )


def check_backends_agree():
    if not _kernels.HAVE_COMPILED:
        return True
    cfg = ScenarioConfig.preset("paper_fig123")
    raw = cfg.raw
    raw["duration"] = 2.0
    res = run_scenario(ScenarioConfig.from_dict(raw))
    st = res.estimate.state(0)
    batch = FrameBatch(res.series.t, res.series.L, res.series.offset, res.series.Omega_m)
    py = run_discrete(EstimatorState(st.R_hat, st.omega, st.beta_hat), batch, cfg.gains, backend="python")
    return np.max(np.abs(py.R_hat - res.estimate.R_hat)) < 1e-11 and np.max(np.abs(py.omega - res.estimate.omega)) < 1e-11


def run_all(seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    checks = [
        ("hat/vex inverse", lambda: check_hat_vex(rng)),
        ("exp/log roundtrip", lambda: check_exp_log(rng)),
        ("L = K R without noise", lambda: check_L_equals_KR(rng)),
        ("S_L is the Wahba gradient", lambda: check_gradient(rng)),
        ("Newton residual audit", lambda: check_newton(rng)),
        ("zero-error fixed point", check_fixed_point),
        ("compiled and python loops agree", check_backends_agree),
    ]
    print(f"kernel backend: {_kernels.BACKEND}")
    all_ok = True
    for name, fn in checks:
        t0 = time.perf_counter()
        ok = bool(fn())
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({time.perf_counter() - t0:.2f} s)")
    return all_ok
