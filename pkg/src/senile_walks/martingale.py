"""Diffusion constants, exact finite-n second moments and martingale transforms.

Persistent:  C = (d E(T^2) - E(T)^2) / d,   M_n = W_n - E(T)/(2d) D_n.
Reinforced:  C = d p / (d - p),              M_n = W_n + p/(2(d-p)) D_n (2 L_n - 1).

In both cases ``|M_n|^2 - n C`` is also a martingale.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .reinforcement import TimeLaw
from .walk_core import PERSISTENT, REINFORCED, WalkPath, check_kind, unit_vectors


class RegimeError(ValueError):
    """A moment condition required by the requested quantity fails."""


@dataclass(frozen=True)
class WalkConstants:
    kind: str
    dimension: int
    mean_T: float
    second_moment_T: float
    p_odd: float
    diffusion_constant: float
    correction_coefficient: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _check_regime(kind: str, d: int, law: TimeLaw) -> None:
    check_kind(kind)
    if kind == PERSISTENT:
        if not law.second_moment_finite:
            raise RegimeError("persistent walk requires E(T^2) < infinity")
    else:
        if d == 1 and law.p_odd >= 1.0:
            raise RegimeError("reinforced walk with d=1 requires p = P(T odd) < 1")


def diffusion_constant(kind: str, d: int, law: TimeLaw) -> float:
    _check_regime(kind, d, law)
    if kind == PERSISTENT:
        return (d * law.second_moment - law.mean ** 2) / d
    p = law.p_odd
    return d * p / (d - p)


def correction_coefficient(kind: str, d: int, law: TimeLaw) -> float:
    _check_regime(kind, d, law)
    if kind == PERSISTENT:
        return law.mean / (2 * d)
    p = law.p_odd
    return p / (2 * (d - p))


def walk_constants(kind: str, d: int, law: TimeLaw) -> WalkConstants:
    return WalkConstants(kind, d, law.mean, law.second_moment, law.p_odd,
                         diffusion_constant(kind, d, law), correction_coefficient(kind, d, law))


def exact_second_moment(kind: str, d: int, law: TimeLaw, n: int) -> float:
    """``E(|W_n|^2)`` at finite ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_regime(kind, d, law)
    if kind == PERSISTENT:
        r = -1.0 / (2 * d - 1)
        return n * law.second_moment - law.mean ** 2 * (
            n / d + (2 * d - 1) / (2 * d * d) * (r ** n - 1.0))
    p = law.p_odd
    r = (2 * p - 1) / (2 * d - 1)
    return n * d * p / (d - p) + p * p * (2 * d - 1) / (2 * (d - p) ** 2) * (r ** n - 1.0)


def autocorrelation_reference(kind: str, d: int, k: int, p_odd: float | None = None) -> float:
    """``E(D_m . D_{m+k})`` (persistent) or ``E(D_m . D_{m+k} L_m L_{m+k})`` (reinforced)."""
    if k < 0:
        raise ValueError("lag must be nonnegative")
    if kind == PERSISTENT:
        return (-1.0 / (2 * d - 1)) ** k
    if p_odd is None:
        raise ValueError("reinforced autocorrelation needs p = P(T odd)")
    if k == 0:
        return p_odd
    return p_odd ** 2 / (2 * d - 1) * ((2 * p_odd - 1) / (2 * d - 1)) ** (k - 1)


@dataclass(frozen=True)
class MartingalePath:
    values: np.ndarray  # (n, d) float
    compensated_qv: np.ndarray  # |M_n|^2 - n C


def correction_vectors(kind: str, codes: np.ndarray, lengths: np.ndarray, d: int) -> np.ndarray:
    """Unit direction of the correction term: ``-D_n`` or ``D_n (2 L_n - 1)``."""
    units = unit_vectors(codes, d)
    if kind == PERSISTENT:
        return -units
    return units * (2 * lengths - 1)[..., None]


def to_martingale(path: WalkPath, constants: WalkConstants, coefficient_scale: float = 1.0) -> MartingalePath:
    """Add the constant-length correction to every position of ``path``.

    ``coefficient_scale`` rescales the correction; anything but 1 breaks the
    martingale property and exists for power checks.
    """
    if path.kind != constants.kind or path.dimension != constants.dimension:
        raise ValueError(f"path is {path.kind}/d={path.dimension} but constants are "
                         f"{constants.kind}/d={constants.dimension}")
    coeff = constants.correction_coefficient * coefficient_scale
    values = path.positions + coeff * correction_vectors(path.kind, path.codes, path.lengths, path.dimension)
    n = np.arange(1, len(path) + 1)
    qv = np.einsum("ij,ij->i", values, values) - n * constants.diffusion_constant
    return MartingalePath(values, qv)


def exact_curve(constants: WalkConstants, law: TimeLaw, n_values) -> list[dict]:
    """JSON-ready records ``{kind, d, C, correction, n, exact_msd}``."""
    out = []
    for n in n_values:
        msd = exact_second_moment(constants.kind, constants.dimension, law, int(n))
        out.append({"kind": constants.kind, "d": constants.dimension,
                    "C": constants.diffusion_constant, "correction": constants.correction_coefficient,
                    "n": int(n), "exact_msd": msd})
    return out


def senile_diffusion_constant(kind: str, d: int, law: TimeLaw) -> float:
    """``C / E(T)``; zero for the reinforced walk when ``E(T)`` is infinite."""
    if kind == REINFORCED and not law.mean_finite:
        _check_regime(kind, d, law)
        return 0.0
    if not math.isfinite(law.mean):
        raise RegimeError("senile diffusion constant requires E(T) < infinity")
    return diffusion_constant(kind, d, law) / law.mean
