"""Shared scenario builders for the test-suite."""

import functools

import numpy as np

from varattitude.measurement import MeasurementFrame
from varattitude.truth import REF_INERTIA, TorqueProfile, TruthState, propagate_truth

import oracles


class DenseFrames:
    """Noise-free measurement frames on a fine truth grid."""

    def __init__(self, E, W, beta, h_fine, T):
        tr = propagate_truth(
            TruthState(0.0, oracles.rot(oracles.REF_R0_ANGLE * oracles.REF_AXIS), oracles.REF_OMEGA0),
            REF_INERTIA, TorqueProfile.reference(), h_fine, T,
        )
        self.truth = tr
        self.samples = oracles.DenseSamples(tr.t, tr.R, tr.Omega)
        self.E, self.W, self.beta = E, W, np.asarray(beta, dtype=float)

    def __call__(self, t):
        i = self.samples.index(t)
        return MeasurementFrame(t, self.E, self.truth.R[i].T @ self.E, self.truth.Omega[i] + self.beta, self.W)


@functools.lru_cache(maxsize=8)
def ref_series(T=40.0, noisy=False, attitude_update="rkmk4"):
    """Truth and measurements of the reference scenario (cached across tests)."""
    from varattitude.harness import ScenarioConfig
    from varattitude.measurement import build_series

    cfg = ScenarioConfig.preset("paper_fig123")
    if not noisy:
        cfg = cfg.with_overrides(zero_noise=True)
    tr = propagate_truth(
        TruthState(0.0, cfg.R0, cfg.Omega0), cfg.inertia, cfg.torque, cfg.step, T,
        attitude_update=attitude_update,
    )
    series = build_series(tr.t, tr.R, tr.Omega, cfg.directions, cfg.beta, cfg.noise, cfg.weight_eigs)
    return cfg, tr, series


def run_from_errors(cfg, truth, series, Q0, omega0, beta_tilde0, gains=None, backend="auto"):
    """Run the discrete filter from prescribed initial errors ``(Q0, omega0, beta_tilde0)``."""
    from varattitude.diagnostics import error_trace
    from varattitude.estimator import EstimatorState, FrameBatch, run_discrete

    gains = gains or cfg.gains
    state0 = EstimatorState(Q0.T @ truth.R[0], np.asarray(omega0, float), cfg.beta - np.asarray(beta_tilde0, float))
    batch = FrameBatch(series.t, series.L, series.offset, series.Omega_m)
    est = run_discrete(state0, batch, gains, backend=backend)
    return est, error_trace(truth, est, series, cfg.beta, gains)
