"""Compare the compiled and pure-Python loops on the preset scenario.

Usage::

    python3 benchmarks/bench_kernels.py [--duration 40] [--repeat 5]

Times the truth propagation and the estimator loop separately, reports the
best of ``--repeat`` runs and checks that both backends agree.
"""

import argparse
import timeit

import numpy as np

from varattitude import _kernels
from varattitude.estimator import FrameBatch, initial_state, run_discrete
from varattitude.harness import ScenarioConfig
from varattitude.measurement import build_series
from varattitude.truth import TruthState, propagate_truth


def _setup(duration):
    raw = ScenarioConfig.preset("paper_fig123").raw
    raw["duration"] = duration
    cfg = ScenarioConfig.from_dict(raw)
    truth = propagate_truth(TruthState(0.0, cfg.R0, cfg.Omega0), cfg.inertia, cfg.torque, cfg.step, cfg.duration)
    series = build_series(truth.t, truth.R, truth.Omega, cfg.directions, cfg.beta, cfg.noise,
                          target_eigs=cfg.weight_eigs, mask=cfg.availability_mask())
    state0 = initial_state(cfg.R_hat0, cfg.Omega_hat0, cfg.beta_hat0, series.Omega_m[0])
    batch = FrameBatch(series.t, series.L, series.offset, series.Omega_m)
    return cfg, state0, batch


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=40.0)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if not _kernels.HAVE_COMPILED:
        print("compiled extension not built; run `python3 setup.py build_ext --inplace` first")
        return 1
    cfg, state0, batch = _setup(args.duration)
    n = len(batch.t) - 1
    s0 = TruthState(0.0, cfg.R0, cfg.Omega0)

    jobs = {
        "truth": lambda b: propagate_truth(s0, cfg.inertia, cfg.torque, cfg.step, cfg.duration, backend=b),
        "estimator": lambda b: run_discrete(state0, batch, cfg.gains, backend=b),
    }
    print(f"{n} steps, best of {args.repeat}")
    print(f"{'loop':<10} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for name, job in jobs.items():
        best = {b: min(timeit.repeat(lambda: job(b), number=1, repeat=args.repeat)) for b in ("python", "cython")}
        print(f"{name:<10} {1e3 * best['python']:12.2f} {1e3 * best['cython']:12.2f} "
              f"{best['python'] / best['cython']:8.1f}x")

    a, b = jobs["estimator"]("python"), jobs["estimator"]("cython")
    gap = max(np.abs(a.R_hat - b.R_hat).max(), np.abs(a.omega - b.omega).max())
    print(f"max backend disagreement (estimator): {gap:.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
