"""Monte Carlo estimators and diagnostics for the walks.

Paths are simulated in fixed-size chunks.  Chunk ``i`` draws from a Philox
stream keyed by ``SeedSequence(seed, spawn_key=(i,))``, so the sample set
depends only on ``(seed, n_paths, chunk_size)``.  Workers only change who
computes a chunk; per-chunk accumulators are merged in chunk order, which
keeps every sum bit-identical for any worker count.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .martingale import (RegimeError, autocorrelation_reference, correction_vectors, exact_second_moment,
                         senile_diffusion_constant, walk_constants)
from .reinforcement import ReinforcementSpec, compute_time_law
from .timechange import senile_positions_at
from .walk_core import (PERSISTENT, REINFORCED, StepSampler, batch_lengths, batch_positions, check_kind,
                        direction_dot)

DEFAULT_CHUNK = 2000
JITTER_INDEX = 2**31  # never reached by a chunk index
SE_BAND = 3.0
# Asymptotic Kolmogorov quantiles: P(sqrt(n) D_n > c) = alpha.
KS_CRITICAL = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628, 0.001: 1.949}


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def ks_statistic(sorted_sample, cdf: Callable[[float], float] = normal_cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance ``sup_x |F_n(x) - F(x)|``."""
    x = np.asarray(sorted_sample, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise ValueError("sample must be a nonempty 1-d array")
    if np.any(np.diff(x) < 0):
        raise ValueError("sample must be sorted in nondecreasing order")
    n = len(x)
    if cdf is normal_cdf:
        from scipy.special import ndtr
        f = ndtr(x)
    else:
        f = np.array([cdf(v) for v in x])
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    if alpha not in KS_CRITICAL:
        raise ValueError(f"alpha must be one of {sorted(KS_CRITICAL)}")
    return KS_CRITICAL[alpha] / math.sqrt(n)


@dataclass
class Accumulator:
    """Mergeable ``(count, sum, sum of squares)`` over rows of samples."""

    count: int = 0
    total: np.ndarray | float = 0.0
    total_sq: np.ndarray | float = 0.0

    def add(self, samples) -> "Accumulator":
        samples = np.asarray(samples, dtype=float)
        if samples.shape[0] == 0:
            return self
        self.count += samples.shape[0]
        self.total = self.total + samples.sum(axis=0)
        self.total_sq = self.total_sq + (samples * samples).sum(axis=0)
        return self

    def merge(self, other: "Accumulator") -> "Accumulator":
        self.count += other.count
        self.total = self.total + other.total
        self.total_sq = self.total_sq + other.total_sq
        return self

    @property
    def mean(self):
        return self.total / self.count

    @property
    def std_error(self):
        n = self.count
        var = (self.total_sq - self.total * self.total / n) / (n - 1)
        return np.sqrt(np.maximum(var, 0.0) / n)

    def triple(self):
        return (self.total, self.total_sq, self.count)


def merge_accumulators(parts: Sequence[dict]) -> dict:
    out: dict = {}
    for part in parts:
        for key, acc in part.items():
            if key in out:
                out[key].merge(acc)
            else:
                out[key] = Accumulator(acc.count, np.copy(acc.total), np.copy(acc.total_sq))
    return out


@dataclass(frozen=True)
class EstimateReport:
    quantity: str
    estimate: float
    std_error: float
    n_samples: int
    reference: float | None = None
    z_score: float | None = None
    threshold: float | None = None  # upper bound on the estimate itself
    band: float = SE_BAND
    warnings: tuple[str, ...] = ()

    @classmethod
    def from_moments(cls, quantity: str, estimate, std_error, n_samples: int,
                     reference: float | None = None, **kw) -> "EstimateReport":
        estimate = float(estimate)
        std_error = float(std_error)
        z = None
        if reference is not None:
            diff = estimate - reference
            if std_error > 0:
                z = diff / std_error
            else:
                z = 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(reference)) else math.copysign(math.inf, diff)
        return cls(quantity, estimate, std_error, int(n_samples), reference, z, **kw)

    @property
    def passed(self) -> bool:
        if self.threshold is not None:
            return self.estimate < self.threshold
        if self.z_score is not None:
            return abs(self.z_score) < self.band
        return True

    def to_dict(self) -> dict:
        out = asdict(self)
        out["warnings"] = list(self.warnings)
        out["passed"] = self.passed
        for key in ("estimate", "std_error", "reference", "z_score", "threshold"):
            if isinstance(out[key], float) and not math.isfinite(out[key]):
                out[key] = str(out[key])
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def report(quantity: str, acc: Accumulator, reference: float | None = None, **kw) -> EstimateReport:
    return EstimateReport.from_moments(quantity, acc.mean, acc.std_error, acc.count, reference, **kw)


def chunk_stream(seed, index: int) -> np.random.Generator:
    """Counter-based stream for chunk (or path) ``index`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def jitter_stream(seed) -> np.random.Generator:
    """Stream reserved for dequantisation noise, disjoint from every chunk stream."""
    return chunk_stream(seed, JITTER_INDEX)


def chunk_sizes(n_paths: int, chunk_size: int = DEFAULT_CHUNK) -> list[int]:
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    full, rest = divmod(n_paths, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def map_chunks(func, n_paths: int, seed: int, *, workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> list:
    """``[func(rng_i, size_i) for each chunk i]`` in chunk order."""
    sizes = chunk_sizes(n_paths, chunk_size)
    jobs = [(chunk_stream(seed, i), size) for i, size in enumerate(sizes)]
    if workers <= 1 or len(jobs) == 1:
        return [func(rng, size) for rng, size in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: func(*job), jobs))


def _walk_chunk(kind: str, spec: ReinforcementSpec, n_steps: int, rng, size: int):
    sampler = StepSampler(kind, spec, size, rng)
    codes, times = sampler.draw(n_steps)
    lengths = batch_lengths(kind, times)
    return codes, lengths, batch_positions(codes, lengths, spec.dimension)


def msd_accumulators(kind: str, target: str, spec: ReinforcementSpec, n_list, n_paths: int, seed: int,
                     *, workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> Accumulator:
    """Merged accumulator of ``|X_n|^2 / n`` over paths, one column per ``n``."""
    check_kind(kind)
    n_list = np.asarray(n_list, dtype=np.int64)
    if np.any(n_list < 1):
        raise ValueError("n must be >= 1")
    if target not in ("walk", "senile"):
        raise ValueError("target must be 'walk' or 'senile'")

    def run(rng, size):
        if target == "walk":
            _, _, pos = _walk_chunk(kind, spec, int(n_list.max()), rng, size)
            x = pos[:, n_list - 1]
        else:
            x = senile_positions_at(kind, spec, n_list, size, rng).positions
        return Accumulator().add((x * x).sum(axis=-1) / n_list)

    parts = map_chunks(run, n_paths, seed, workers=workers, chunk_size=chunk_size)
    return merge_accumulators([{0: p} for p in parts])[0]


def msd_reports(kind: str, target: str, spec: ReinforcementSpec, n_list, n_paths: int, seed: int,
                *, workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> list[EstimateReport]:
    """``E(|X_n|^2) / n`` for the time-changed walk or the senile walk.

    References: the exact finite-``n`` value for time-changed walks and the
    limit ``C / E(T)`` for senile walks.  Outside the diffusive regime the
    estimate still runs and the report carries a warning.
    """
    d = spec.dimension
    law = compute_time_law(spec)
    warnings: list[str] = []
    if kind == PERSISTENT and not law.second_moment_finite:
        warnings.append("E(T^2) is infinite: persistent walk is not diffusive")
    if target == "senile" and kind == REINFORCED and not law.mean_finite:
        warnings.append("E(T) is infinite: reinforced senile walk is subdiffusive")
    acc = msd_accumulators(kind, target, spec, n_list, n_paths, seed, workers=workers, chunk_size=chunk_size)
    diffusive = law.second_moment_finite if kind == PERSISTENT else (target == "walk" or law.mean_finite)
    out = []
    for col, n in enumerate(n_list):
        ref = None
        if diffusive:
            ref = (exact_second_moment(kind, d, law, int(n)) / n if target == "walk"
                   else senile_diffusion_constant(kind, d, law))
        sub = Accumulator(acc.count, acc.total[col], acc.total_sq[col])
        out.append(report(f"msd_over_n[{target},{kind},d={d},n={int(n)}]", sub, ref,
                          warnings=tuple(warnings)))
    return out


def estimate_msd(kind: str, target: str, spec: ReinforcementSpec, n: int, n_paths: int, seed: int,
                 **kw) -> EstimateReport:
    return msd_reports(kind, target, spec, [n], n_paths, seed, **kw)[0]


def subdiffusive_check(spec: ReinforcementSpec, n_grid, n_paths: int, seed: int,
                       **kw) -> list[EstimateReport]:
    """``E(|S^r_n|^2) / n`` on an increasing grid for the reinforced senile walk.

    When ``E(T)`` is infinite the ratio tends to zero, so the point estimates
    should decrease along the grid.  Runs longer than ``t_cap`` are cut at the
    cap and counted in the report warnings instead of aborting.
    """
    n_grid = np.asarray(sorted(int(n) for n in n_grid), dtype=np.int64)
    d = spec.dimension
    law = compute_time_law(spec)
    breaches = 0

    def run(rng, size):
        nonlocal breaches
        sample = senile_positions_at(REINFORCED, spec, n_grid, size, rng, on_cap="truncate")
        breaches += sample.cap_breaches
        x = sample.positions
        return Accumulator().add((x * x).sum(axis=-1) / n_grid)

    parts = map_chunks(run, n_paths, seed, **kw)
    acc = merge_accumulators([{0: p} for p in parts])[0]
    warnings = (f"{breaches} run(s) exceeded t_cap={spec.t_cap} and were truncated",) if breaches else ()
    ref = senile_diffusion_constant(REINFORCED, d, law) if law.mean_finite else None
    return [report(f"senile_msd_over_n[reinforced,d={d},n={int(n)}]",
                   Accumulator(acc.count, acc.total[i], acc.total_sq[i]), ref, warnings=warnings)
            for i, n in enumerate(n_grid)]


def strictly_decreasing(reports: Sequence[EstimateReport]) -> bool:
    values = [r.estimate for r in reports]
    return all(b < a for a, b in zip(values, values[1:]))


def direction_autocorrelation(kind: str, spec: ReinforcementSpec, m: int, k_max: int, n_paths: int, seed: int,
                              **kw) -> list[EstimateReport]:
    """``E(D_m . D_{m+k})`` (persistent) or ``E(D_m . D_{m+k} L_m L_{m+k})`` (reinforced), ``k = 1..k_max``."""
    if k_max < 1 or m < 1:
        raise ValueError("need m >= 1 and k_max >= 1")
    d = spec.dimension
    p = compute_time_law(spec).p_odd if kind == REINFORCED else None

    def run(rng, size):
        codes, lengths, _ = _walk_chunk(kind, spec, m + k_max, rng, size)
        base = codes[:, m - 1]
        cols = []
        for k in range(1, k_max + 1):
            prod = direction_dot(base, codes[:, m - 1 + k])
            if kind == REINFORCED:
                prod = prod * lengths[:, m - 1] * lengths[:, m - 1 + k]
            cols.append(prod)
        return Accumulator().add(np.stack(cols, axis=1))

    acc = merge_accumulators([{0: a} for a in map_chunks(run, n_paths, seed, **kw)])[0]
    return [report(f"autocorr[{kind},d={d},m={m},k={k}]",
                   Accumulator(acc.count, acc.total[k - 1], acc.total_sq[k - 1]),
                   autocorrelation_reference(kind, d, k, p))
            for k in range(1, k_max + 1)]


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    name: str
    reports: list[EstimateReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def max_abs_z(self) -> float:
        zs = [abs(r.z_score) for r in self.reports if r.z_score is not None]
        return max(zs) if zs else 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "max_abs_z": self.max_abs_z,
                "reports": [r.to_dict() for r in self.reports]}


def martingale_tests(kind: str, spec: ReinforcementSpec, n_list, n_paths: int, seed: int, *,
                     coefficient_scale: float = 1.0, **kw) -> dict[str, TestReport]:
    """Increment, compensated-QV and cross-coordinate checks for ``M_n``.

    * ``increment``: mean of each coordinate of ``M_{n+1} - M_n``, overall and
      within strata of the current state ``(D_n, min(L_n, 2))``.  Both kernels
      are Markov in ``(D_n, L_n)``, so zero stratum means are the conditional
      martingale property.
    * ``compensated_qv``: pairwise differences of ``|M_n|^2 - n C`` over ``n_list``.
    * ``orthogonality``: mean of ``dM^i dM^j`` for ``i < j``.

    ``coefficient_scale != 1`` deliberately mis-corrects the walk.
    """
    d = spec.dimension
    law = compute_time_law(spec)
    const = walk_constants(kind, d, law)
    coeff = const.correction_coefficient * coefficient_scale
    n_list = sorted(int(n) for n in n_list)
    n_max = max(n_list)
    pairs = list(itertools.combinations(range(d), 2))

    def run(rng, size):
        codes, lengths, pos = _walk_chunk(kind, spec, n_max + 1, rng, size)
        m = pos + coeff * correction_vectors(kind, codes, lengths, d)
        out = {}
        for n in n_list:
            inc = m[:, n] - m[:, n - 1]
            out[("inc", n)] = Accumulator().add(inc)
            stratum = codes[:, n - 1] * 3 + np.minimum(lengths[:, n - 1], 2)
            for s in np.unique(stratum):
                out[("inc", n, int(s))] = Accumulator().add(inc[stratum == s])
            for i, j in pairs:
                out[("cross", n, i, j)] = Accumulator().add(inc[:, i] * inc[:, j])
        qv = {n: np.einsum("ij,ij->i", m[:, n - 1], m[:, n - 1]) - n * const.diffusion_constant
              for n in n_list}
        for a, b in itertools.combinations(n_list, 2):
            out[("qv", a, b)] = Accumulator().add(qv[b] - qv[a])
        return out

    acc = merge_accumulators(map_chunks(run, n_paths, seed, **kw))
    tag = f"{kind},d={d}"
    inc, qv, cross = TestReport("increment"), TestReport("compensated_qv"), TestReport("orthogonality")
    for key in sorted(acc, key=str):
        a = acc[key]
        if key[0] == "inc":
            n = key[1]
            label = "all" if len(key) == 2 else f"D={key[2] // 3},L={key[2] % 3}"
            for i in range(d):
                inc.reports.append(report(f"mean_increment[{tag},n={n},{label},coord={i + 1}]",
                                          Accumulator(a.count, a.total[i], a.total_sq[i]), 0.0))
        elif key[0] == "cross":
            cross.reports.append(report(f"cross_increment[{tag},n={key[1]},i={key[2] + 1},j={key[3] + 1}]", a, 0.0))
        else:
            qv.reports.append(report(f"compensated_qv_diff[{tag},n={key[1]}->{key[2]}]", a, 0.0))
    return {t.name: t for t in (inc, qv, cross)}


@dataclass(frozen=True)
class ScaledProcessSample:
    t_grid: np.ndarray
    values: np.ndarray  # (n_paths, len(t_grid), d)
    scale: float


def scaled_process(kind: str, spec: ReinforcementSpec, n: int, t_grid, n_paths: int, seed: int,
                   **kw) -> ScaledProcessSample:
    """``Z^n_t = sqrt(d E(T) / (n C)) S_{floor(n t)}`` on ``t_grid``."""
    d = spec.dimension
    law = compute_time_law(spec)
    if kind == PERSISTENT and not law.second_moment_finite:
        raise RegimeError("Brownian scaling of the persistent walk requires E(T^2) < infinity")
    if not law.mean_finite:
        raise RegimeError("Brownian scaling requires E(T) < infinity")
    const = walk_constants(kind, d, law)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0):
        raise ValueError("t_grid must be nonnegative")
    times = np.floor(n * t_grid).astype(np.int64)
    parts = map_chunks(lambda rng, size: senile_positions_at(kind, spec, times, size, rng).positions,
                       n_paths, seed, **kw)
    scale = math.sqrt(d * law.mean / (n * const.diffusion_constant))
    return ScaledProcessSample(t_grid, np.concatenate(parts) * scale, scale)


def clt_diagnostic(kind: str, spec: ReinforcementSpec, n: int, t_grid, n_paths: int, seed: int, *,
                   alpha: float = 0.01, **kw) -> dict[str, TestReport]:
    """Finite-dimensional checks of the Brownian limit of ``Z^n``.

    Per coordinate and positive ``t``: KS distance of the dequantised ``Z_t / sqrt(t)`` from
    N(0, 1) against the asymptotic level-``alpha`` critical value.  Cross
    moments ``E(Z_t^i Z_t^j)`` for ``i != j`` against 0 and temporal moments
    ``E(Z_s^i Z_t^i)`` for ``s < t`` against ``s``, both in the 3-SE band.
    Moments are taken about the origin, the exact mean of every coordinate.
    """
    sample = scaled_process(kind, spec, n, t_grid, n_paths, seed, **kw)
    z = sample.values
    d = spec.dimension
    # Unit-step paths live on a lattice (one parity class when d = 1); a
    # uniform jitter over the lattice cell removes the discreteness offset
    # from the KS distance without changing the Gaussian limit.
    cell = (2.0 if d == 1 else 1.0) * sample.scale
    jitter = (jitter_stream(seed).random(z.shape) - 0.5) * cell
    tag = f"{kind},d={d},n={n}"
    crit = ks_critical_value(n_paths, alpha)
    ks, cross, temporal = TestReport("ks"), TestReport("cross_covariance"), TestReport("temporal_covariance")
    positive = [(j, float(t)) for j, t in enumerate(sample.t_grid) if t > 0]
    for j, t in positive:
        for i in range(d):
            stat = ks_statistic(np.sort((z[:, j, i] + jitter[:, j, i]) / math.sqrt(t)))
            raw = ks_statistic(np.sort(z[:, j, i] / math.sqrt(t)))
            ks.reports.append(EstimateReport(f"ks_stat[{tag},t={t:g},coord={i + 1}]", stat, 0.0, n_paths,
                                             threshold=crit, warnings=(f"lattice KS {raw:.5f}",)))
        for i, k in itertools.combinations(range(d), 2):
            cross.reports.append(report(f"cross_cov[{tag},t={t:g},i={i + 1},j={k + 1}]",
                                        Accumulator().add(z[:, j, i] * z[:, j, k]), 0.0))
    for (ja, s), (jb, t) in itertools.combinations(positive, 2):
        if s >= t:
            continue
        for i in range(d):
            temporal.reports.append(report(f"temporal_cov[{tag},s={s:g},t={t:g},coord={i + 1}]",
                                           Accumulator().add(z[:, ja, i] * z[:, jb, i]), s))
    return {r.name: r for r in (ks, cross, temporal)}


def renewal_rate(kind: str, spec: ReinforcementSpec, n: int, n_paths: int, seed: int, **kw) -> EstimateReport:
    """``tau_inv(n) / n`` against its almost-sure limit ``1 / E(T)``."""
    law = compute_time_law(spec)

    def run(rng, size):
        sample = senile_positions_at(kind, spec, [n], size, rng)
        return Accumulator().add(sample.tau_inverse[:, 0] / n)

    acc = merge_accumulators([{0: a} for a in map_chunks(run, n_paths, seed, **kw)])[0]
    ref = 1.0 / law.mean if law.mean_finite else 0.0
    return report(f"renewal_rate[{kind},d={spec.dimension},n={n}]", acc, ref)
