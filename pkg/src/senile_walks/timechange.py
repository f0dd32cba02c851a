"""Random time-change and the senile walks.

With ``tau_m = T_1 + ... + T_m`` and ``tau_inv(n) = min{m : tau_m >= n}``,
the senile walk at unit time ``n`` sits inside macro-step ``m = tau_inv(n)``,
``j = n - tau_{m-1}`` unit steps into that run:

* persistent: ``S_n = W_m + D_m (n - tau_m) = W_{m-1} + j D_m``;
* reinforced: ``S_n = W_m - D_m (2 L_m - 1) 1{tau_m - n odd} = W_{m-1} + 1{j odd} D_m``.

For the reinforced walk ``D_m`` is the first step of run ``m``: a run of
length ``T`` crosses one edge back and forth, so it ends displaced by ``D_m``
when ``T`` is odd and back where it started when ``T`` is even.
"""
from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .reinforcement import CapExceededError, IndeterminateMomentError, ReinforcementSpec, compute_time_law
from .walk_core import (PERSISTENT, REINFORCED, StepSampler, WalkPath, batch_lengths, check_kind,
                        check_reinforced_regime, iter_runs, unit_vectors)


@dataclass(frozen=True)
class TimeIndex:
    partial_sums: np.ndarray

    @classmethod
    def from_times(cls, times) -> "TimeIndex":
        times = np.asarray(times, dtype=np.int64)
        if np.any(times < 1):
            raise ValueError("run lengths must be positive")
        return cls(np.cumsum(times))

    @property
    def horizon(self) -> int:
        return int(self.partial_sums[-1]) if len(self.partial_sums) else 0


def tau_inverse(index: TimeIndex, n):
    """``min{m : tau_m >= n}`` (1-based) for scalar or array ``n``."""
    n_arr = np.asarray(n)
    if np.any(n_arr < 1) or np.any(n_arr > index.horizon):
        raise IndexError(f"time {n} outside 1..{index.horizon}")
    m = np.searchsorted(index.partial_sums, n_arr, side="left") + 1
    return m if m.ndim else int(m)


@dataclass(frozen=True)
class SenilePath:
    kind: str
    positions: np.ndarray  # (N, d); row n-1 holds S_n

    @property
    def horizon(self) -> int:
        return len(self.positions)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        d = self.positions.shape[1]
        writer.writerow(["n"] + [f"x{i + 1}" for i in range(d)])
        for n, row in enumerate(self.positions, start=1):
            writer.writerow([n] + [int(v) for v in row])
        return buf.getvalue()


def senile_from_timechange(path: WalkPath, horizon: int) -> SenilePath:
    """Unit-time positions ``S_1..S_horizon`` read off a time-changed path."""
    index = TimeIndex.from_times(path.times)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if index.horizon < horizon:
        raise ValueError(f"path covers unit times up to {index.horizon} < horizon {horizon}; "
                         "extend the path with walk_to_horizon")
    n = np.arange(1, horizon + 1)
    m = tau_inverse(index, n) - 1  # 0-based macro-step
    d = path.dimension
    units = unit_vectors(path.codes[m], d)
    overshoot = index.partial_sums[m] - n  # tau_m - n >= 0
    if path.kind == PERSISTENT:
        positions = path.positions[m] - units * overshoot[:, None]
    else:
        odd = (overshoot % 2)[:, None]
        positions = path.positions[m] - units * (2 * path.lengths[m] - 1)[:, None] * odd
    return SenilePath(path.kind, positions.astype(np.int64))


def walk_to_horizon(kind: str, spec: ReinforcementSpec, horizon: int, rng: np.random.Generator) -> WalkPath:
    """Generate macro-steps until the accumulated time reaches ``horizon``."""
    check_kind(kind)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if kind == REINFORCED:
        check_reinforced_regime(spec)
    directions, times = [], []
    total = 0
    for direction, t in iter_runs(kind, spec, rng):
        directions.append(direction)
        times.append(t)
        total += t
        if total >= horizon:
            break
    return WalkPath.from_steps(kind, spec.dimension, directions, times)


def senile_direct(kind: str, spec: ReinforcementSpec, horizon: int, rng: np.random.Generator) -> SenilePath:
    """Simulate the senile walk one unit step at a time.

    After ``l`` steps in the same direction (persistent) or across the same
    edge (reinforced) the walk repeats with probability
    ``(1 + f(l)) / (2d + f(l))``; otherwise it picks uniformly among the
    other ``2d - 1`` directions, respectively the other ``2d - 1`` edges at
    its current site.  Random draws are consumed in the same order as
    :func:`walk_core.iter_runs`, which makes the two constructions couple
    exactly on a shared stream.
    """
    check_kind(kind)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    d = spec.dimension
    persistent = kind == PERSISTENT
    units = unit_vectors(np.arange(2 * d), d)
    positions = np.empty((horizon, d), dtype=np.int64)
    here = np.zeros(d, dtype=np.int64)
    step = int(rng.integers(2 * d))  # code of the last unit step taken
    run = 1
    here += units[step]
    positions[0] = here
    for n in range(1, horizon):
        if rng.random() < spec.continuation_at(run):
            run += 1
            if not persistent:
                step ^= 1
        else:
            # the forbidden move repeats the current direction / edge
            excluded = step if persistent else step ^ 1
            u = int(rng.integers(2 * d - 1))
            step = u + (u >= excluded)
            run = 1
        here += units[step]
        positions[n] = here
    return SenilePath(kind, positions)


def coupled_pair(kind: str, spec: ReinforcementSpec, horizon: int, rng: np.random.Generator):
    """A time-changed path and a directly simulated senile path on the same randomness."""
    walk = walk_to_horizon(kind, spec, horizon, copy.deepcopy(rng))
    return walk, senile_direct(kind, spec, horizon, rng)


@dataclass(frozen=True)
class SenileSample:
    times: np.ndarray
    positions: np.ndarray  # (n_paths, len(times), d)
    tau_inverse: np.ndarray  # (n_paths, len(times))
    cap_breaches: int


def senile_positions_at(kind: str, spec: ReinforcementSpec, times, n_paths: int, rng: np.random.Generator,
                        *, on_cap: str = "raise", block: int = 1024) -> SenileSample:
    """Senile positions of ``n_paths`` independent walks at the given unit times.

    Runs are drawn in vectorised blocks until every path has reached the
    largest requested time.  Run lengths are censored at that time, which
    leaves every requested position unchanged.  If ``spec.t_cap`` is smaller,
    a longer run is a cap breach: ``on_cap="raise"`` raises
    :class:`CapExceededError`, ``on_cap="truncate"`` counts it and cuts the
    run at ``t_cap``.
    """
    check_kind(kind)
    times = np.asarray(times, dtype=np.int64)
    if times.ndim != 1 or np.any(times < 0):
        raise ValueError("times must be a 1-d array of nonnegative integers")
    if on_cap not in ("raise", "truncate"):
        raise ValueError("on_cap must be 'raise' or 'truncate'")
    d = spec.dimension
    out = np.zeros((n_paths, len(times), d), dtype=np.int64)
    tau_inv = np.zeros((n_paths, len(times)), dtype=np.int64)
    t_max = int(times.max(initial=0))
    if t_max == 0:
        return SenileSample(times, out, tau_inv, 0)

    capped = spec.t_cap < t_max
    censor = spec.t_cap + 1 if capped else t_max
    sampler = StepSampler(kind, spec, n_paths, rng, censor_at=censor)
    try:
        mean = compute_time_law(spec).mean
    except IndeterminateMomentError:
        mean = math.inf
    tau_prev = np.zeros(n_paths, dtype=np.int64)
    w_prev = np.zeros((n_paths, d), dtype=np.int64)
    offset = 0
    breaches = 0
    persistent = kind == PERSISTENT
    while True:
        remaining = t_max - int(tau_prev.min())
        if remaining <= 0:
            break
        guess = remaining / mean * 1.1 + 16 if math.isfinite(mean) else 256
        k = int(min(max(guess, 16), block, remaining))
        codes, t = sampler.draw(k)
        if capped:
            over = t > spec.t_cap
            n_over = int(np.count_nonzero(over))
            if n_over:
                if on_cap == "raise":
                    raise CapExceededError(spec.t_cap, n_over)
                breaches += n_over
                t[over] = spec.t_cap
        tau = tau_prev[:, None] + np.cumsum(t, axis=1)
        units = unit_vectors(codes, d)
        w = w_prev[:, None, :] + np.cumsum(units * batch_lengths(kind, t)[..., None], axis=1)
        for j, target in enumerate(times):
            rows = np.nonzero((tau_prev < target) & (tau[:, -1] >= target))[0]
            if not len(rows):
                continue
            idx = np.count_nonzero(tau[rows] < target, axis=1)
            first = idx == 0
            prev_idx = np.maximum(idx - 1, 0)
            tau_before = np.where(first, tau_prev[rows], tau[rows, prev_idx])
            w_before = np.where(first[:, None], w_prev[rows], w[rows, prev_idx])
            into = target - tau_before
            step = units[rows, idx]
            if persistent:
                out[rows, j] = w_before + step * into[:, None]
            else:
                out[rows, j] = w_before + step * (into & 1)[:, None]
            tau_inv[rows, j] = offset + idx + 1
        tau_prev = tau[:, -1]
        w_prev = w[:, -1]
        offset += k
    return SenileSample(times, out, tau_inv, breaches)
