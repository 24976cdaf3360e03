"""Scenario configuration and the end-to-end simulation driver.

A scenario file is YAML; numeric fields also accept small arithmetic
expressions in ``pi`` (``"pi/2.5"``, ``"-1.1*pi/60"``). See
``presets/paper_fig123.yaml`` for every recognised key.
"""

from __future__ import annotations

import ast
import copy
import logging
import operator
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import ErrorTrace, error_trace
from .errors import ConfigError, VarAttitudeError
from .estimator import (
    EstimatorGains,
    EstimatorTrace,
    FrameBatch,
    PhiFunction,
    initial_state,
    run_discrete,
)
from .measurement import (
    DEG,
    MeasurementSeries,
    NoiseModel,
    Sinusoid,
    build_series,
    ref_directions,
)
from .so3 import exp_so3, is_rotation
from .truth import TorqueProfile, TruthState, TruthTrajectory, check_inertia, n_steps, propagate_truth

log = logging.getLogger(__name__)

PRESETS = ("paper_fig123",)

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "pi":
        return np.pi
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    raise ValueError("unsupported expression")


def number(value, name: str) -> float:
    """Parse a float or a ``pi`` expression string."""
    if isinstance(value, bool):
        raise ConfigError(name, "expected a number")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        try:
            out = _eval_node(ast.parse(value, mode="eval"))
        except (SyntaxError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(name, f"cannot evaluate {value!r}") from exc
    else:
        raise ConfigError(name, f"expected a number, got {type(value).__name__}")
    if not np.isfinite(out):
        raise ConfigError(name, "must be finite")
    return out


def vector(value, name: str, size: int = 3) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != size:
        raise ConfigError(name, f"expected a list of {size} numbers")
    return np.array([number(v, f"{name}[{i}]") for i, v in enumerate(value)])


def matrix3(value, name: str) -> np.ndarray:
    """A 3-list is read as a diagonal, a 3x3 nested list as a full matrix."""
    if isinstance(value, (list, tuple)) and len(value) == 3 and all(
        isinstance(r, (list, tuple)) for r in value
    ):
        return np.array([vector(r, f"{name}[{i}]") for i, r in enumerate(value)])
    return np.diag(vector(value, name))


def rotation(value, name: str) -> np.ndarray:
    if isinstance(value, dict):
        axis = vector(value.get("axis"), f"{name}.axis")
        if np.linalg.norm(axis) == 0.0:
            raise ConfigError(f"{name}.axis", "must be non-zero")
        angle = number(value.get("angle", 0.0), f"{name}.angle")
        return exp_so3(angle * axis / np.linalg.norm(axis))
    R = matrix3(value, name)
    if not is_rotation(R):
        raise ConfigError(name, "is not a rotation matrix")
    return R


def _sinusoids(items, name: str) -> tuple[Sinusoid, ...]:
    out = []
    for i, it in enumerate(items or []):
        key = f"{name}[{i}]"
        if not isinstance(it, dict):
            raise ConfigError(key, "expected a mapping")
        if "amplitude_deg" in it:
            amp = number(it["amplitude_deg"], f"{key}.amplitude_deg") * DEG
        else:
            amp = number(it.get("amplitude", 0.0), f"{key}.amplitude")
        out.append(
            Sinusoid(
                number(it.get("frequency"), f"{key}.frequency"),
                number(it.get("phase", 0.0), f"{key}.phase"),
                amp,
            )
        )
    return tuple(out)


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    duration: float
    step: float
    inertia: np.ndarray
    torque: TorqueProfile
    R0: np.ndarray
    Omega0: np.ndarray
    beta: np.ndarray
    directions: np.ndarray
    availability: object
    noise: NoiseModel
    gains: EstimatorGains
    weight_eigs: tuple
    R_hat0: np.ndarray
    Omega_hat0: np.ndarray
    beta_hat0: np.ndarray
    seed: int = 0
    attitude_update: str = "rkmk4"
    out_dir: str = "out"
    plots: bool = True
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        if not isinstance(d, dict):
            raise ConfigError("<root>", "scenario must be a mapping")
        raw = copy.deepcopy(d)
        T = number(d.get("duration"), "duration")
        h = number(d.get("step"), "step")
        if not h > 0.0:
            raise ConfigError("step", "must be positive")
        if not T >= h:
            raise ConfigError("duration", "must be at least one step")
        n_steps(h, T)
        seed = int(d.get("seed", 0))

        tr = d.get("truth") or {}
        try:
            J = check_inertia(matrix3(tr.get("inertia"), "truth.inertia"))
        except ConfigError as exc:
            raise ConfigError("truth.inertia", str(exc)) from exc
        tq = tr.get("torque") or {}
        torque = TorqueProfile(
            number(tq.get("amplitude", 0.0), "truth.torque.amplitude"),
            number(tq.get("frequency", 0.0), "truth.torque.frequency"),
            number(tq.get("phase", 0.0), "truth.torque.phase"),
            int(tq.get("axis", 1)),
        )
        R0 = rotation(tr.get("attitude", {"axis": [1, 0, 0], "angle": 0}), "truth.attitude")
        Omega0 = vector(tr.get("omega"), "truth.omega")
        beta = vector(tr.get("bias", [0, 0, 0]), "truth.bias")
        attitude_update = str(tr.get("attitude_update", "rkmk4"))
        if attitude_update not in ("rkmk4", "lie_euler"):
            raise ConfigError("truth.attitude_update", "must be 'rkmk4' or 'lie_euler'")

        dr = d.get("directions") or {}
        if "vectors" in dr:
            E = np.array([vector(v, f"directions.vectors[{i}]") for i, v in enumerate(dr["vectors"])]).T
            if E.ndim != 2 or E.shape[1] < 2:
                raise ConfigError("directions.vectors", "need at least two directions")
            norms = np.linalg.norm(E, axis=0)
            if np.any(norms == 0.0):
                raise ConfigError("directions.vectors", "zero vector")
            E = E / norms
        else:
            k = int(dr.get("count", 9))
            if k < 2:
                raise ConfigError("directions.count", "need at least two directions")
            E = ref_directions(k)
        if E.shape[1] > 9:
            raise ConfigError("directions", "at most nine directions are supported")
        availability = dr.get("availability", "all")
        eigs = tuple(vector(dr.get("weight_eigenvalues", [3, 2, 1]), "directions.weight_eigenvalues"))
        if min(eigs) <= 0.0:
            raise ConfigError("directions.weight_eigenvalues", "must be positive")
        if len(set(eigs)) < 3:
            raise ConfigError("directions.weight_eigenvalues", "must be distinct")

        nz = d.get("noise") or {}
        if nz.get("random_phases", False):
            rng = np.random.default_rng(seed)
        dir_terms = _sinusoids(nz.get("direction"), "noise.direction")
        gyro_terms = _sinusoids(nz.get("gyro"), "noise.gyro")
        if nz.get("random_phases", False):
            dir_terms = tuple(replace(s, phase=float(rng.uniform(0, 2 * np.pi))) for s in dir_terms)
            gyro_terms = tuple(replace(s, phase=float(rng.uniform(0, 2 * np.pi))) for s in gyro_terms)
        noise = NoiseModel(dir_terms, gyro_terms, rng_seed=seed)

        gn = d.get("gains") or {}
        phi_cfg = gn.get("phi") or {"kind": "linear"}
        if phi_cfg.get("kind", "linear") != "linear":
            raise ConfigError("gains.phi.kind", "only 'linear' is available from config files")
        phi = PhiFunction.linear(number(phi_cfg.get("scale", 1.0), "gains.phi.scale"))
        gains = EstimatorGains(
            m=number(gn.get("m"), "gains.m"),
            D=matrix3(gn.get("D"), "gains.D"),
            P=matrix3(gn.get("P"), "gains.P"),
            h=h,
            phi=phi,
        )

        es = d.get("estimator") or {}
        R_hat0 = rotation(es.get("attitude", {"axis": [1, 0, 0], "angle": 0}), "estimator.attitude")
        Omega_hat0 = vector(es.get("omega", [0, 0, 0]), "estimator.omega")
        beta_hat0 = vector(es.get("bias", [0, 0, 0]), "estimator.bias")

        out = d.get("output") or {}
        cfg = cls(
            T, h, J, torque, R0, Omega0, beta, E, availability, noise, gains, eigs,
            R_hat0, Omega_hat0, beta_hat0, seed, attitude_update,
            str(out.get("dir", "out")), bool(out.get("plots", True)), raw,
        )
        cfg.availability_mask()  # validate the schedule up front
        return cfg

    @classmethod
    def load(cls, path) -> ScenarioConfig:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"{path}: invalid YAML: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def preset(cls, name: str) -> ScenarioConfig:
        return cls.from_dict(preset_dict(name))

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(n_steps(self.step, self.duration) + 1)

    def availability_mask(self) -> np.ndarray | None:
        """Boolean ``(n, k)`` schedule, or ``None`` when every direction is always on."""
        sched = self.availability
        if sched in (None, "all"):
            return None
        if not isinstance(sched, list):
            raise ConfigError("directions.availability", "expected 'all' or a list of windows")
        t = self.times
        k = self.directions.shape[1]
        mask = np.ones((len(t), k), dtype=bool)
        for i, win in enumerate(sched):
            key = f"directions.availability[{i}]"
            if not isinstance(win, dict) or "active" not in win:
                raise ConfigError(key, "expected a mapping with 'active'")
            lo = number(win.get("from", 0.0), f"{key}.from")
            hi = number(win.get("to", np.inf), f"{key}.to") if "to" in win else np.inf
            active = [int(j) for j in win["active"]]
            if any(j < 0 or j >= k for j in active):
                raise ConfigError(f"{key}.active", f"indices must lie in [0, {k})")
            if len(set(active)) < 2:
                raise ConfigError(f"{key}.active", "at least two directions must be active")
            rows = (t >= lo - 1e-12) & (t < hi - 1e-12)
            mask[rows] = False
            mask[np.ix_(rows, active)] = True
        return mask

    def with_overrides(self, zero_noise: bool = False, seed: int | None = None) -> ScenarioConfig:
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = int(seed)
        if zero_noise:
            raw.setdefault("noise", {})
            raw["noise"] = {**(raw["noise"] or {}), "direction": [], "gyro": []}
        return ScenarioConfig.from_dict(raw)


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("varattitude").joinpath("presets", f"{name}.yaml").read_text()
    return yaml.safe_load(text)


def preset_text(name: str) -> str:
    preset_dict(name)
    return resources.files("varattitude").joinpath("presets", f"{name}.yaml").read_text()


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    config: ScenarioConfig
    truth: TruthTrajectory
    series: MeasurementSeries
    estimate: EstimatorTrace
    trace: ErrorTrace

    @property
    def summary(self) -> dict:
        s = self.trace.summary()
        s["backend"] = self.estimate.backend
        s["newton_iterations_max"] = int(self.estimate.newton_iterations.max())
        s["rotation_defect_max"] = float(
            np.max(np.linalg.norm(
                np.einsum("nji,njk->nik", self.estimate.R_hat, self.estimate.R_hat) - np.eye(3),
                axis=(1, 2),
            ))
        )
        return s


def run_scenario(cfg: ScenarioConfig, backend: str = "auto") -> ScenarioResult:
    """Propagate truth, synthesize measurements, run the discrete estimator, score it."""
    truth = propagate_truth(
        TruthState(0.0, cfg.R0, cfg.Omega0), cfg.inertia, cfg.torque, cfg.step, cfg.duration,
        backend=backend, attitude_update=cfg.attitude_update,
    )
    series = build_series(
        truth.t, truth.R, truth.Omega, cfg.directions, cfg.beta, cfg.noise,
        target_eigs=cfg.weight_eigs, mask=cfg.availability_mask(),
    )
    state0 = initial_state(cfg.R_hat0, cfg.Omega_hat0, cfg.beta_hat0, series.Omega_m[0])
    batch = FrameBatch(series.t, series.L, series.offset, series.Omega_m)
    try:
        est = run_discrete(state0, batch, cfg.gains, backend=backend)
    except VarAttitudeError as exc:
        step = getattr(exc, "step", None)
        if step is not None:
            log.error("estimator failed at step %d (t=%.6g s)", step, step * cfg.step)
        raise
    trace = error_trace(truth, est, series, cfg.beta, cfg.gains)
    return ScenarioResult(cfg, truth, series, est, trace)


CSV_HEADER = "t,principal_angle_rad,werr_x,werr_y,werr_z,berr_x,berr_y,berr_z,V,U,T"


def emit_csv(trace: ErrorTrace, path) -> Path:
    """Write one row per sample with 17 significant digits and LF endings."""
    path = Path(path)
    if len(trace) == 0:
        raise ValueError("refusing to write an empty trace")
    rows = trace.as_array()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in rows:
                fh.write(",".join(format(x, ".17g") for x in r) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc.strerror or exc}") from exc
    return path


def load_csv(path) -> ErrorTrace:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        a = np.loadtxt(fh, delimiter=",", ndmin=2)
    return ErrorTrace(a[:, 0], a[:, 1], a[:, 2:5], a[:, 5:8], a[:, 8], a[:, 9], a[:, 10])


PLOT_FILES = ("principal_angle.svg", "omega_error.svg", "bias_error.svg")


def _figures(trace: ErrorTrace):
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib.figure import Figure

    specs = [
        ("Principal angle of the attitude estimate error", "principal angle (deg)",
         [np.degrees(trace.principal_angle)], [None]),
        ("Angular velocity estimate error", "error (rad/s)",
         [trace.omega_err[:, j] for j in range(3)], ["x", "y", "z"]),
        ("Bias estimate error", "error (rad/s)",
         [trace.beta_err[:, j] for j in range(3)], ["x", "y", "z"]),
    ]
    figs = []
    for title, ylabel, series, labels in specs:
        fig = Figure(figsize=(6.4, 3.6))
        ax = fig.add_subplot()
        for y, lab in zip(series, labels):
            ax.plot(trace.t, y, linewidth=0.9, label=lab)
        lo = min(float(np.min(y)) for y in series)
        hi = max(float(np.max(y)) for y in series)
        if hi - lo < 1e-300:
            pad = max(abs(hi), 1.0) * 0.05
            ax.set_ylim(lo - pad, hi + pad)
        ax.set_title(title)
        ax.set_xlabel("time (s)")
        ax.set_ylabel(ylabel)
        ax.grid(True, linewidth=0.3)
        if labels[0] is not None:
            ax.legend(loc="upper right")
        fig.tight_layout()
        figs.append(fig)
    return figs


def emit_plots(trace: ErrorTrace, out_dir) -> list[Path]:
    """Write the three error plots as standalone SVG files."""
    import matplotlib

    if len(trace) == 0:
        raise ValueError("refusing to plot an empty trace")
    out_dir = Path(out_dir)
    paths = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "varattitude"}):
            for fig, name in zip(_figures(trace), PLOT_FILES):
                p = out_dir / name
                fig.savefig(p, format="svg", metadata={"Date": None})
                paths.append(p)
    except OSError as exc:
        raise OSError(f"cannot write plots to {out_dir}: {exc.strerror or exc}") from exc
    return paths


def _sweep_one(args):
    raw, seed = args
    cfg = ScenarioConfig.from_dict(raw).with_overrides(seed=seed)
    return seed, run_scenario(cfg).summary


def sweep(cfg: ScenarioConfig, seeds, jobs: int | None = None) -> list[tuple[int, dict]]:
    """Run independent copies of a scenario (one per seed) in worker processes."""
    from concurrent.futures import ProcessPoolExecutor

    jobs = jobs or min(len(seeds), os.cpu_count() or 1)
    if jobs <= 1:
        return [_sweep_one((cfg.raw, s)) for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_one, [(cfg.raw, s) for s in seeds]))
