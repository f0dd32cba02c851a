"""Time-changed walks ``W_n = sum_m D_m L_m`` on ``Z^d``.

Directions are signed axis indices ``±1..±d`` in the public API.  Internally
they are codes ``0..2d-1`` with ``code = 2*(axis-1) + (sign < 0)``, so that
negation is ``code ^ 1``.

Persistent walks take ``L_m = T_m`` and never repeat the previous direction.
Reinforced walks take ``L_m = 1{T_m odd}``; after a zero-length step the
direction may not repeat, after a unit step it may not reverse.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .reinforcement import ReinforcementSpec, sample_time

PERSISTENT = "persistent"
REINFORCED = "reinforced"
KINDS = (PERSISTENT, REINFORCED)


class ConfigurationError(ValueError):
    """Walk parameters outside the supported regime."""


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise ConfigurationError(f"kind must be one of {KINDS}, got {kind!r}")
    return kind


def check_reinforced_regime(spec: ReinforcementSpec) -> None:
    """Reject ``d = 1`` with ``p = P(T odd) = 1``.

    ``p = 1`` exactly when ``T = 1`` almost surely, i.e. ``f(1) = -1``; the
    one-dimensional reinforced walk then moves deterministically.
    """
    if spec.dimension == 1 and spec.f(1) == -1.0:
        raise ConfigurationError(
            "reinforced walk with d=1 and p=P(T odd)=1 is excluded: "
            "the walk would move in one direction forever")


def signed_to_code(direction: int, d: int) -> int:
    axis = abs(int(direction))
    if not 1 <= axis <= d:
        raise ValueError(f"direction {direction} is not a unit vector of Z^{d}")
    return 2 * (axis - 1) + (direction < 0)


def code_to_signed(code):
    code = np.asarray(code)
    out = (code // 2 + 1) * np.where(code % 2 == 0, 1, -1)
    return out if out.ndim else int(out)


def unit_vectors(codes, d: int) -> np.ndarray:
    """Integer unit vectors for an array of direction codes; shape ``codes.shape + (d,)``."""
    codes = np.asarray(codes)
    out = np.zeros(codes.shape + (d,), dtype=np.int64)
    sign = 1 - 2 * (codes % 2).astype(np.int64)
    np.put_along_axis(out, (codes // 2)[..., None].astype(np.intp), sign[..., None], axis=-1)
    return out


def direction_dot(code_a, code_b):
    """``D_a . D_b`` for direction codes: 1, -1 or 0."""
    code_a = np.asarray(code_a)
    code_b = np.asarray(code_b)
    same_axis = (code_a // 2) == (code_b // 2)
    return np.where(same_axis, np.where(code_a == code_b, 1, -1), 0)


def _pick_excluding(u, excluded):
    """Map ``u`` uniform on ``0..2d-2`` to a code uniform on the ``2d-1`` codes other than ``excluded``."""
    return u + (u >= excluded)


def initial_direction(d: int, rng: np.random.Generator) -> int:
    """Uniform over the ``2d`` unit vectors."""
    return code_to_signed(int(rng.integers(2 * d)))


def next_direction_persistent(prev: int, d: int, rng: np.random.Generator) -> int:
    excluded = signed_to_code(prev, d)
    return code_to_signed(int(_pick_excluding(rng.integers(2 * d - 1), excluded)))


def next_direction_reinforced(prev: int, prev_length: int, d: int, rng: np.random.Generator) -> int:
    if prev_length not in (0, 1):
        raise ValueError(f"reinforced step lengths are 0 or 1, got {prev_length}")
    code = signed_to_code(prev, d)
    excluded = code if prev_length == 0 else code ^ 1
    return code_to_signed(int(_pick_excluding(rng.integers(2 * d - 1), excluded)))


def step_length(kind: str, t: int) -> int:
    return t if kind == PERSISTENT else t % 2


def iter_runs(kind: str, spec: ReinforcementSpec, rng: np.random.Generator) -> Iterator[tuple[int, int]]:
    """Yield ``(direction, T)`` for successive macro-steps, forever.

    Each macro-step draws its direction first and then its run length one
    Bernoulli trial at a time; the direct senile simulators consume the
    stream in exactly this order.
    """
    d = spec.dimension
    direction = initial_direction(d, rng)
    while True:
        t = sample_time(spec, rng)
        yield direction, t
        if kind == PERSISTENT:
            direction = next_direction_persistent(direction, d, rng)
        else:
            direction = next_direction_reinforced(direction, t % 2, d, rng)


@dataclass(frozen=True)
class WalkPath:
    kind: str
    dimension: int
    directions: np.ndarray  # signed axis per step
    times: np.ndarray
    lengths: np.ndarray
    positions: np.ndarray  # (n, d); row m-1 holds W_m

    @classmethod
    def from_steps(cls, kind: str, dimension: int, directions, times) -> "WalkPath":
        check_kind(kind)
        directions = np.asarray(directions, dtype=np.int64)
        times = np.asarray(times, dtype=np.int64)
        if directions.shape != times.shape or directions.ndim != 1:
            raise ValueError("directions and times must be 1-d and the same length")
        if np.any(times < 1):
            raise ValueError("run lengths must be positive")
        lengths = times.copy() if kind == PERSISTENT else times % 2
        codes = np.array([signed_to_code(s, dimension) for s in directions], dtype=np.int64)
        positions = np.cumsum(unit_vectors(codes, dimension) * lengths[:, None], axis=0)
        return cls(kind, dimension, directions, times, lengths, positions)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def codes(self) -> np.ndarray:
        return np.array([signed_to_code(s, self.dimension) for s in self.directions], dtype=np.int64)

    @property
    def tau(self) -> np.ndarray:
        return np.cumsum(self.times)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step_index", "axis", "sign", "T", "L"]
                        + [f"x{i + 1}" for i in range(self.dimension)])
        for m in range(len(self)):
            s = int(self.directions[m])
            writer.writerow([m + 1, abs(s), 1 if s > 0 else -1, int(self.times[m]), int(self.lengths[m])]
                            + [int(v) for v in self.positions[m]])
        return buf.getvalue()


def generate_walk(kind: str, spec: ReinforcementSpec, n_steps: int, rng: np.random.Generator) -> WalkPath:
    """One path of ``n_steps`` macro-steps; positions are exact integers."""
    check_kind(kind)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if kind == REINFORCED:
        check_reinforced_regime(spec)
    runs = iter_runs(kind, spec, rng)
    directions, times = zip(*(next(runs) for _ in range(n_steps)))
    return WalkPath.from_steps(kind, spec.dimension, directions, times)


class StepSampler:
    """Vectorised macro-step primitives for a block of independent paths.

    Successive :meth:`draw` calls continue the same paths.  Returns direction
    codes and run lengths, both shaped ``(n_paths, n_steps)``.
    """

    def __init__(self, kind: str, spec: ReinforcementSpec, n_paths: int,
                 rng: np.random.Generator, censor_at: int | None = None):
        self.kind = check_kind(kind)
        if kind == REINFORCED:
            check_reinforced_regime(spec)
        self.spec = spec
        self.n_paths = n_paths
        self.rng = rng
        self.censor_at = censor_at
        self._last_code = None
        self._last_len = None

    def draw(self, n_steps: int):
        d = self.spec.dimension
        shape = (self.n_paths, n_steps)
        times = sample_time(self.spec, self.rng, shape, censor_at=self.censor_at)
        u = self.rng.integers(0, 2 * d - 1, size=shape)
        codes = np.empty(shape, dtype=np.int64)
        if self._last_code is None:
            codes[:, 0] = self.rng.integers(0, 2 * d, size=self.n_paths)
        else:
            codes[:, 0] = _pick_excluding(u[:, 0], self._excluded(self._last_code, self._last_len))
        persistent = self.kind == PERSISTENT
        for m in range(1, n_steps):
            prev = codes[:, m - 1]
            excluded = prev if persistent else prev ^ (times[:, m - 1] & 1)
            codes[:, m] = u[:, m] + (u[:, m] >= excluded)
        self._last_code = codes[:, -1].copy()
        self._last_len = times[:, -1].copy()
        return codes, times

    def _excluded(self, code, t):
        return code if self.kind == PERSISTENT else code ^ (t & 1)


def batch_lengths(kind: str, times: np.ndarray) -> np.ndarray:
    return times if kind == PERSISTENT else times & 1


def batch_positions(codes: np.ndarray, lengths: np.ndarray, d: int) -> np.ndarray:
    """``W_1..W_n`` for each path, shape ``(n_paths, n_steps, d)``."""
    return np.cumsum(unit_vectors(codes, d) * lengths[..., None], axis=1)
