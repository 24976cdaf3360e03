"""Direction and gyro measurement synthesis plus the Wahba-gradient terms.

Conventions: ``E`` is ``(3, k)`` with known inertial unit directions as
columns, ``U_m`` holds the same directions measured in the body frame,
``W`` is a ``(k, k)`` symmetric positive-definite weight matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateDirections,
    EigensNotDistinct,
    RankDeficient,
)
from .so3 import vex

DEG = np.pi / 180.0
DIRECTION_NOISE_CAP = 2.4 * DEG
GYRO_NOISE_CAP = 0.97 * DEG
DEFAULT_TARGET_EIGS = (3.0, 2.0, 1.0)
DEFAULT_EIG_GAP = 1e-3
DEFAULT_MIN_SEP = 1e-3


@dataclass(frozen=True)
class Sinusoid:
    """One term ``amplitude * sin(2 pi frequency t + phase) * pattern``.

    ``pattern`` is broadcast against the quantity being corrupted: a ``(3,)``
    unit vector for the gyro, a ``(3, k)`` matrix with columns of norm at
    most one for directions. ``None`` selects the built-in deterministic
    pattern.
    """

    frequency: float
    phase: float
    amplitude: float
    pattern: np.ndarray | None = field(default=None, compare=False)

    def value(self, t) -> np.ndarray:
        return self.amplitude * np.sin(2.0 * np.pi * self.frequency * np.asarray(t) + self.phase)


def _spiral_directions(n: int, offset: int = 0) -> np.ndarray:
    # golden-angle spiral; deterministic and roughly uniform on the sphere
    idx = np.arange(offset, offset + n) + 0.5
    total = offset + n + 1
    z = 1.0 - 2.0 * idx / total
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    ang = np.pi * (3.0 - np.sqrt(5.0)) * idx
    return np.stack([r * np.cos(ang), r * np.sin(ang), z])


@dataclass(frozen=True)
class NoiseModel:
    """Bounded sinusoidal noise on directions and gyro readings."""

    direction_noise: tuple[Sinusoid, ...] = ()
    gyro_noise: tuple[Sinusoid, ...] = ()
    rng_seed: int = 0
    direction_cap: float = DIRECTION_NOISE_CAP
    gyro_cap: float = GYRO_NOISE_CAP

    def __post_init__(self):
        for name, terms, cap in (
            ("direction_noise", self.direction_noise, self.direction_cap),
            ("gyro_noise", self.gyro_noise, self.gyro_cap),
        ):
            amps = [s.amplitude for s in terms]
            if any(a < 0.0 or not np.isfinite(a) for a in amps):
                raise ConfigError(name, "amplitudes must be finite and non-negative")
            if sum(amps) > cap * (1.0 + 1e-12):
                raise ConfigError(
                    name, f"amplitude sum {sum(amps):.6g} rad exceeds cap {cap:.6g} rad"
                )

    @classmethod
    def reference(
        cls,
        random_phases: bool = False,
        seed: int = 0,
        direction_amplitudes: Sequence[float] = (1.2 * DEG, 0.8 * DEG, 0.4 * DEG),
        gyro_amplitudes: Sequence[float] = (0.6 * DEG, 0.37 * DEG),
    ) -> NoiseModel:
        """1/10/100 Hz direction noise and 10/200 Hz gyro noise."""
        if random_phases:
            rng = np.random.default_rng(seed)
            dphase = rng.uniform(0.0, 2.0 * np.pi, 3)
            gphase = rng.uniform(0.0, 2.0 * np.pi, 2)
        else:
            dphase = np.array([0.0, 2.0, 4.0]) * np.pi / 3.0
            gphase = np.array([0.0, 2.0]) * np.pi / 3.0
        dirs = tuple(
            Sinusoid(f, float(p), float(a))
            for f, p, a in zip((1.0, 10.0, 100.0), dphase, direction_amplitudes)
        )
        gyro = tuple(
            Sinusoid(f, float(p), float(a))
            for f, p, a in zip((10.0, 200.0), gphase, gyro_amplitudes)
        )
        return cls(dirs, gyro, rng_seed=seed)

    @classmethod
    def zero(cls) -> NoiseModel:
        return cls()

    def direction_pattern(self, index: int, k: int) -> np.ndarray:
        term = self.direction_noise[index]
        if term.pattern is not None:
            return np.asarray(term.pattern, dtype=float)
        return _spiral_directions(k, offset=7 * index)

    def gyro_pattern(self, index: int) -> np.ndarray:
        term = self.gyro_noise[index]
        if term.pattern is not None:
            return np.asarray(term.pattern, dtype=float)
        return _spiral_directions(1, offset=3 + 5 * index)[:, 0]

    def direction_noise_at(self, t, k: int) -> np.ndarray:
        """``N(t)``; shape ``(3, k)`` for scalar ``t``, ``(n, 3, k)`` for arrays."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (3, k))
        for i, term in enumerate(self.direction_noise):
            out += term.value(t)[..., None, None] * self.direction_pattern(i, k)
        return out

    def gyro_noise_at(self, t) -> np.ndarray:
        """``w(t)``; shape ``(3,)`` for scalar ``t``, ``(n, 3)`` for arrays."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (3,))
        for i, term in enumerate(self.gyro_noise):
            out += term.value(t)[..., None] * self.gyro_pattern(i)
        return out


def _columns_separated(A: np.ndarray, min_sep: float) -> bool:
    a, b = A[:, 0], A[:, 1]
    s = np.linalg.norm(np.cross(a, b))
    c = a @ b
    return np.arctan2(s, abs(c)) >= min_sep


def augment_two_vectors(E_raw, U_raw, min_sep: float = DEFAULT_MIN_SEP):
    """Append ``col0 x col1`` as a third column to both ``E_raw`` and ``U_raw``."""
    E_raw = np.asarray(E_raw, dtype=float)
    U_raw = np.asarray(U_raw, dtype=float)
    if E_raw.shape != (3, 2) or U_raw.shape != (3, 2):
        raise ValueError("augment_two_vectors expects two (3, 2) matrices")
    if not (_columns_separated(E_raw, min_sep) and _columns_separated(U_raw, min_sep)):
        raise DegenerateDirections(
            f"direction pair separated by less than {min_sep:g} rad"
        )
    E = np.column_stack([E_raw, np.cross(E_raw[:, 0], E_raw[:, 1])])
    U = np.column_stack([U_raw, np.cross(U_raw[:, 0], U_raw[:, 1])])
    return E, U


def synthesize_directions(R, E, noise: NoiseModel, t: float) -> np.ndarray:
    """``U_m = R^T E + N(t)``. Columns are not renormalized."""
    R = np.asarray(R, dtype=float)
    E = np.asarray(E, dtype=float)
    U = R.T @ E
    if noise.direction_noise:
        U = U + noise.direction_noise_at(t, E.shape[1])
    return U


def synthesize_gyro(Omega, beta, noise: NoiseModel, t: float) -> np.ndarray:
    """``Omega_m = Omega + w(t) + beta``."""
    Om = np.asarray(Omega, dtype=float) + np.asarray(beta, dtype=float)
    if noise.gyro_noise:
        Om = Om + noise.gyro_noise_at(t)
    return Om


def choose_weights(
    E,
    target_eigs: Sequence[float] = DEFAULT_TARGET_EIGS,
    mu: float | None = None,
    eig_gap: float = DEFAULT_EIG_GAP,
    rank_tol: float = 1e-6,
) -> np.ndarray:
    """Weight matrix ``W`` with ``E W E^T = diag(target_eigs)``.

    Built as ``pinv(E) K pinv(E)^T + mu (I - pinv(E) E)``; the null-space
    term makes ``W`` positive definite without touching ``E W E^T``.

    Raises
    ------
    RankDeficient
        ``E`` does not span three dimensions.
    EigensNotDistinct
        The resulting ``K`` has eigenvalues closer than ``eig_gap`` or
        drifting from the targets by more than 1e-8.
    """
    E = np.asarray(E, dtype=float)
    target = np.asarray(target_eigs, dtype=float)
    if target.shape != (3,) or np.any(target <= 0.0):
        raise ValueError("target_eigs must be three positive numbers")
    if E.ndim != 2 or E.shape[0] != 3 or E.shape[1] < 3:
        raise RankDeficient(f"need at least three columns, got shape {E.shape}")
    sv = np.linalg.svd(E, compute_uv=False)
    if sv[-1] <= rank_tol * sv[0]:
        raise RankDeficient(f"smallest singular value {sv[-1]:.3e} of E")

    Ep = np.linalg.pinv(E)
    k = E.shape[1]
    if mu is None:
        mu = 1e-2 * float(target.min())
    W = Ep @ np.diag(target) @ Ep.T + mu * (np.eye(k) - Ep @ E)
    W = 0.5 * (W + W.T)

    eigs = np.sort(np.linalg.eigvalsh(E @ W @ E.T))
    if np.min(np.diff(eigs)) < eig_gap or np.max(np.abs(eigs - np.sort(target))) > 1e-8:
        raise EigensNotDistinct(f"K eigenvalues {eigs} do not match targets {target}")
    return W


def compute_L(E, W, U_m) -> np.ndarray:
    """``L = E W U_m^T``."""
    return np.asarray(E) @ np.asarray(W) @ np.asarray(U_m).T


def compute_SL(R_hat, L) -> np.ndarray:
    """``S_L(R_hat) = vex(L^T R_hat - R_hat^T L)``."""
    A = np.asarray(L).T @ np.asarray(R_hat)
    return vex(A - A.T)


def measurement_offset(E, W, U_m) -> float:
    """Constant part of the Wahba cost: ``U0 = offset - tr(L^T R_hat)``."""
    E = np.asarray(E)
    U_m = np.asarray(U_m)
    return 0.5 * (np.trace(E @ W @ E.T) + np.trace(U_m @ W @ U_m.T))


@dataclass(frozen=True, eq=False)
class MeasurementFrame:
    """One sample of direction and gyro data."""

    t: float
    E: np.ndarray
    U_m: np.ndarray
    Omega_m: np.ndarray
    W: np.ndarray

    @cached_property
    def L(self) -> np.ndarray:
        return compute_L(self.E, self.W, self.U_m)

    @cached_property
    def K(self) -> np.ndarray:
        return self.E @ self.W @ self.E.T

    @cached_property
    def offset(self) -> float:
        return measurement_offset(self.E, self.W, self.U_m)


@dataclass(frozen=True, eq=False)
class MeasurementSeries:
    """Measurements for a whole run in fixed-shape arrays.

    Inactive directions carry zero columns and zero weights, so they drop
    out of ``L``, ``K`` and the Wahba cost. When a sample has exactly two
    active directions the trailing slot holds their cross product.
    """

    t: np.ndarray  # (n,)
    E: np.ndarray  # (n, 3, ke)
    U_m: np.ndarray  # (n, 3, ke)
    W: np.ndarray  # (n, ke, ke)
    Omega_m: np.ndarray  # (n, 3)

    def __len__(self) -> int:
        return len(self.t)

    @cached_property
    def L(self) -> np.ndarray:
        return np.einsum("nij,njk,nlk->nil", self.E, self.W, self.U_m)

    @cached_property
    def K(self) -> np.ndarray:
        return np.einsum("nij,njk,nlk->nil", self.E, self.W, self.E)

    @cached_property
    def offset(self) -> np.ndarray:
        EW = np.einsum("nij,njk->nik", self.E, self.W)
        UW = np.einsum("nij,njk->nik", self.U_m, self.W)
        return 0.5 * (np.sum(EW * self.E, axis=(1, 2)) + np.sum(UW * self.U_m, axis=(1, 2)))

    def frame(self, i: int) -> MeasurementFrame:
        return MeasurementFrame(float(self.t[i]), self.E[i], self.U_m[i], self.Omega_m[i], self.W[i])

    def wahba_cost(self, R_hat: np.ndarray) -> np.ndarray:
        """Wahba cost of each estimate ``R_hat[n]`` against its own sample."""
        A = self.E - np.einsum("nij,njk->nik", R_hat, self.U_m)
        return 0.5 * np.sum(A * np.einsum("nij,njk->nik", A, self.W), axis=(1, 2))


def build_series(
    t,
    R,
    Omega,
    E_raw,
    beta,
    noise: NoiseModel,
    target_eigs: Sequence[float] = DEFAULT_TARGET_EIGS,
    mask=None,
    min_sep: float = DEFAULT_MIN_SEP,
) -> MeasurementSeries:
    """Synthesize noisy measurements along a truth trajectory.

    ``mask`` is an optional ``(n, k)`` boolean availability schedule; at
    least two directions must be active in every row. Weights are chosen
    once per distinct availability pattern.
    """
    t = np.asarray(t, dtype=float)
    R = np.asarray(R, dtype=float)
    E_raw = np.asarray(E_raw, dtype=float)
    n, k = len(t), E_raw.shape[1]
    if k < 2:
        raise DegenerateDirections("need at least two inertial directions")
    if not np.allclose(np.linalg.norm(E_raw, axis=0), 1.0, atol=1e-12):
        raise ConfigError("directions", "inertial directions must be unit vectors")
    if mask is None:
        mask = np.ones((n, k), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n, k):
        raise ConfigError("mask", f"expected shape {(n, k)}, got {mask.shape}")
    if np.any(mask.sum(axis=1) < 2):
        raise ConfigError("mask", "every sample needs at least two active directions")

    needs_cross = bool(np.any(mask.sum(axis=1) == 2))
    ke = k + 1 if needs_cross else k

    U_raw = np.einsum("nji,jk->nik", R, E_raw)
    if noise.direction_noise:
        U_raw = U_raw + noise.direction_noise_at(t, k)
    Omega_m = np.asarray(Omega, dtype=float) + np.asarray(beta, dtype=float)
    if noise.gyro_noise:
        Omega_m = Omega_m + noise.gyro_noise_at(t)

    E = np.zeros((n, 3, ke))
    U = np.zeros((n, 3, ke))
    W = np.zeros((n, ke, ke))
    patterns, inverse = np.unique(mask, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for p, pattern in enumerate(patterns):
        rows = np.flatnonzero(inverse == p)
        cols = np.flatnonzero(pattern)
        if len(cols) == 2:
            Ea, _ = augment_two_vectors(E_raw[:, cols], E_raw[:, cols], min_sep)
            slots = np.append(cols, k)
            Ua = np.empty((len(rows), 3, 3))
            Ua[:, :, :2] = U_raw[rows][:, :, cols]
            Ua[:, :, 2] = np.cross(Ua[:, :, 0], Ua[:, :, 1])
            for r in range(len(rows)):
                if not _columns_separated(Ua[r, :, :2], min_sep):
                    raise DegenerateDirections(f"measured pair nearly parallel at sample {rows[r]}")
        else:
            Ea = E_raw[:, cols]
            slots = cols
            Ua = U_raw[rows][:, :, cols]
        Wa = choose_weights(Ea, target_eigs)
        E[np.ix_(rows, range(3), slots)] = Ea
        U[np.ix_(rows, range(3), slots)] = Ua
        W[np.ix_(rows, slots, slots)] = Wa
    return MeasurementSeries(t, E, U, W, Omega_m)


def ref_directions(k: int = 9) -> np.ndarray:
    """``k`` fixed, well-spread inertial unit directions."""
    return _spiral_directions(k)
