"""Reinforcement functions and the induced law of the run length ``T``.

A run that has lasted ``l`` unit steps continues with probability
``(1 + f(l)) / (2d + f(l))``; the run length ``T`` therefore has tail

    P(T >= k) = prod_{l=1}^{k-1} (1 + f(l)) / (2d + f(l)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import hyp2f1

DEFAULT_T_CAP = 10_000_000
DEFAULT_TOL = 1e-12
DEFAULT_MAX_TERMS = 20_000_000
# Uniforms come from 1 - Generator.random(), i.e. multiples of 2**-53 in (0, 1].
_TAIL_FLOOR = 2.0 ** -54
_CHUNK = 1 << 16


class ReinforcementError(ValueError):
    """Invalid reinforcement function or dimension."""


class CapExceededError(RuntimeError):
    """A sampled run length exceeded ``t_cap``."""

    def __init__(self, t_cap: int, count: int = 1):
        self.t_cap = t_cap
        self.count = count
        super().__init__(
            f"{count} sampled run length(s) exceeded t_cap={t_cap}; "
            "raise --tcap or pick a lighter-tailed reinforcement")


class IndeterminateMomentError(RuntimeError):
    """Moment convergence could not be certified within the term budget."""


@dataclass(frozen=True)
class ReinforcementSpec:
    """Reinforcement function ``f`` on the lattice ``Z^d``.

    ``family`` is ``"const"`` (``params=(c,)``), ``"affine"``
    (``params=(a, b)``, ``f(l) = a*l + b``) or ``"table"`` (``params`` holds
    ``f(1), f(2), ...``; the last value is extended to all larger ``l``).
    """

    dimension: int
    family: str
    params: tuple[float, ...]
    t_cap: int = DEFAULT_T_CAP

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ReinforcementError(f"dimension must be a positive integer, got {self.dimension}")
        if int(self.t_cap) != self.t_cap or self.t_cap < 1:
            raise ReinforcementError(f"t_cap must be a positive integer, got {self.t_cap}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if any(not math.isfinite(v) for v in self.params):
            raise ReinforcementError("reinforcement parameters must be finite")
        if self.family == "const":
            if len(self.params) != 1:
                raise ReinforcementError("const family takes exactly one value")
            lowest = self.params[0]
        elif self.family == "affine":
            if len(self.params) != 2:
                raise ReinforcementError("affine family takes two values a,b")
            a, b = self.params
            if a < 0:
                # f(l) -> -inf, so f < -1 is eventually encountered
                raise ReinforcementError(f"affine slope must be >= 0 (f(l) < -1 for large l), got {a}")
            lowest = a + b
        elif self.family == "table":
            if not self.params:
                raise ReinforcementError("table family needs at least one value")
            lowest = min(self.params)
        else:
            raise ReinforcementError(f"unknown reinforcement family {self.family!r}")
        if lowest < -1:
            raise ReinforcementError(f"f(l) >= -1 is required, found f = {lowest}")

    @classmethod
    def const(cls, c: float, dimension: int, t_cap: int = DEFAULT_T_CAP) -> "ReinforcementSpec":
        return cls(dimension, "const", (c,), t_cap)

    @classmethod
    def affine(cls, a: float, b: float, dimension: int, t_cap: int = DEFAULT_T_CAP) -> "ReinforcementSpec":
        return cls(dimension, "affine", (a, b), t_cap)

    @classmethod
    def table(cls, values, dimension: int, t_cap: int = DEFAULT_T_CAP) -> "ReinforcementSpec":
        return cls(dimension, "table", tuple(values), t_cap)

    def f(self, l):
        """Evaluate ``f`` at run length(s) ``l >= 1``."""
        l = np.asarray(l)
        if self.family == "const":
            out = np.full(l.shape, self.params[0])
        elif self.family == "affine":
            a, b = self.params
            out = a * l + b
        else:
            table = np.asarray(self.params)
            out = table[np.minimum(l, len(table)) - 1]
        return out if out.ndim else float(out)

    def continuation(self, l):
        """Probability that a run of length ``l`` is extended by one step."""
        fl = self.f(l)
        return (1.0 + fl) / (2 * self.dimension + fl)

    def continuation_at(self, l: int) -> float:
        """Scalar :meth:`continuation` in plain floats, for per-step loops."""
        if self.family == "const":
            fl = self.params[0]
        elif self.family == "affine":
            fl = self.params[0] * l + self.params[1]
        else:
            fl = self.params[min(l, len(self.params)) - 1]
        return (1.0 + fl) / (2 * self.dimension + fl)

    def describe(self) -> str:
        if self.family == "table":
            return "table:" + ",".join(f"{v:g}" for v in self.params)
        return f"{self.family}:" + ",".join(f"{v:g}" for v in self.params)


def parse_reinforcement(text: str, dimension: int, t_cap: int = DEFAULT_T_CAP) -> ReinforcementSpec:
    """Parse ``"const:c"``, ``"affine:a,b"`` or ``"table:path"``.

    A table file holds one ``f(l)`` value per line; blank lines and ``#``
    comments are skipped.
    """
    family, sep, rest = text.partition(":")
    family = family.strip().lower()
    if not sep or not rest.strip():
        raise ReinforcementError(f"expected FAMILY:VALUES, got {text!r}")
    try:
        if family == "table":
            lines = Path(rest.strip()).read_text().splitlines()
            values = [float(ln.split("#")[0]) for ln in lines if ln.split("#")[0].strip()]
        else:
            values = [float(v) for v in rest.split(",")]
    except OSError as exc:
        raise ReinforcementError(f"cannot read table file: {exc}") from None
    except ValueError as exc:
        raise ReinforcementError(f"bad number in {text!r}: {exc}") from None
    return ReinforcementSpec(dimension, family, tuple(values), t_cap)


def tail_probability(spec: ReinforcementSpec, k: int) -> float:
    """``P(T >= k)``; exactly 1 for ``k = 1``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k == 1:
        return 1.0
    factors = spec.continuation(np.arange(1, k))
    return float(np.prod(factors))


def pmf(spec: ReinforcementSpec, k: int) -> float:
    """``P(T = k)``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    here = tail_probability(spec, k)
    return max(here - here * float(spec.continuation(k)), 0.0)


@dataclass(frozen=True)
class TimeLaw:
    spec: ReinforcementSpec
    mean: float
    second_moment: float
    p_odd: float
    truncation_index: int

    @property
    def mean_finite(self) -> bool:
        return math.isfinite(self.mean)

    @property
    def second_moment_finite(self) -> bool:
        return math.isfinite(self.second_moment)

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean ** 2


def _geometric_bound(rho: float, start: int, tail: float) -> float:
    """Bound on sum_{k >= start} k**2 P(T >= k) when P(T >= start + j) <= tail * rho**j."""
    one = 1.0 - rho
    a = float(start)
    return tail * (a * a / one + 2 * a * rho / one ** 2 + rho * (1 + rho) / one ** 3)


def _affine_law(spec: ReinforcementSpec) -> TimeLaw:
    """Closed forms for increasing affine ``f(l) = a l + b`` with ``f(1) > -1``.

    With ``u = (1 + b)/a``, ``v = (2d + b)/a`` and ``alpha = v - u`` the
    continuation probability is ``(l + u)/(l + v)``, so
    ``P(T >= k) = G(1+v) G(k+u) / (G(1+u) G(k+v))``.  Summing gamma ratios
    gives ``E(T) = v/(alpha-1)`` and
    ``E(T^2) = 2v(1+u)/(alpha-2) - v(2u+1)/(alpha-1)``, finite iff
    ``alpha > 1`` resp. ``alpha > 2``.  Writing the pmf as a beta integral
    gives ``p = 2F1(1, 1+u; 1+v; -1)``.
    """
    a, b = spec.params
    d = spec.dimension
    u = (1 + b) / a
    v = (2 * d + b) / a
    alpha = v - u
    mean = v / (alpha - 1) if alpha > 1 else math.inf
    second = 2 * v * (1 + u) / (alpha - 2) - v * (2 * u + 1) / (alpha - 1) if alpha > 2 else math.inf
    p_odd = float(hyp2f1(1.0, 1.0 + u, 1.0 + v, -1.0))
    return TimeLaw(spec, mean, second, min(max(p_odd, 0.0), 1.0), 0)


def compute_time_law(spec: ReinforcementSpec, tol: float = DEFAULT_TOL,
                     max_terms: int = DEFAULT_MAX_TERMS) -> TimeLaw:
    """Moments ``E(T)``, ``E(T^2)`` and ``p = P(T odd)``.

    Increasing affine ``f`` has exact closed forms (see :func:`_affine_law`),
    which also decide finiteness.  Otherwise the continuation probability is
    eventually bounded by a constant below one and the sums run until a
    geometric bound on the neglected remainder is below ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    return _compute_time_law(spec, float(tol), int(max_terms))


@lru_cache(maxsize=64)
def _compute_time_law(spec: ReinforcementSpec, tol: float, max_terms: int) -> TimeLaw:
    if spec.family == "affine" and spec.params[0] > 0 and spec.f(1) > -1.0:
        return _affine_law(spec)

    s1 = s2 = s_odd = 0.0
    tail = 1.0  # P(T >= start) for the current chunk start
    start = 1
    while True:
        ks = np.arange(start, start + _CHUNK)
        cont = spec.continuation(ks)
        tails = tail * np.concatenate(([1.0], np.cumprod(cont[:-1])))
        probs = tails * (1.0 - cont)
        kf = ks.astype(float)
        s1 += float(np.dot(kf, probs))
        s2 += float(np.dot(kf * kf, probs))
        s_odd += float(probs[ks % 2 == 1].sum())
        tail = float(tails[-1] * cont[-1])
        start += _CHUNK
        K = start - 1  # terms 1..K are summed, tail = P(T >= K+1)

        if tail == 0.0:
            return TimeLaw(spec, s1, s2, s_odd, K)
        rho = float(np.max(spec.continuation(np.arange(K + 1, max(K + 2, len(spec.params) + 2)))))
        bound = _geometric_bound(rho, K + 1, tail) if rho < 1.0 else math.inf
        if bound < tol:
            return TimeLaw(spec, s1, s2, s_odd, K)
        if K >= max_terms:
            raise IndeterminateMomentError(
                f"moments of T for {spec.describe()} (d={spec.dimension}) not certified within {max_terms} terms")


@lru_cache(maxsize=16)
def _tail_table(spec: ReinforcementSpec, length: int) -> np.ndarray:
    """``P(T >= k)`` for ``k = 1..n``, stopped early once below the uniform resolution."""
    out = []
    tail = 1.0
    start = 1
    while start <= length:
        ks = np.arange(start, min(start + _CHUNK, length + 1))
        cont = spec.continuation(ks)
        tails = tail * np.concatenate(([1.0], np.cumprod(cont[:-1])))
        out.append(tails)
        tail = float(tails[-1] * cont[-1])
        start = int(ks[-1]) + 1
        if tails[-1] < _TAIL_FLOOR:
            break
    table = np.concatenate(out)
    table.setflags(write=False)
    return table


def sample_time(spec: ReinforcementSpec, rng: np.random.Generator, size=None, *, censor_at: int | None = None):
    """Draw run lengths ``T``.

    Scalar draws (``size=None``) walk the runs one Bernoulli trial at a time:
    at run length ``l`` a uniform below the continuation probability extends
    the run.  Array draws invert the tail table.  Either way a value above
    ``spec.t_cap`` raises :class:`CapExceededError`.  With ``censor_at`` the
    array sampler returns ``min(T, censor_at)`` instead and never raises;
    callers use this when nothing beyond ``censor_at`` is observed.
    """
    if size is None:
        t = 1
        while rng.random() < spec.continuation_at(t):
            t += 1
            if t > spec.t_cap:
                raise CapExceededError(spec.t_cap)
        return t

    limit = spec.t_cap + 1 if censor_at is None else int(censor_at)
    table = _tail_table(spec, limit)
    u = 1.0 - rng.random(size)
    # T = #{k : P(T >= k) > u}; the table is nonincreasing.
    t = np.searchsorted(-table, -u, side="left")
    if censor_at is None:
        over = int(np.count_nonzero(t > spec.t_cap))
        if over:
            raise CapExceededError(spec.t_cap, over)
    else:
        np.minimum(t, censor_at, out=t)
    return t
