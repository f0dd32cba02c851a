"""Verification suite: each check returns a :class:`CheckResult`.

Every configuration inside a check draws from its own stream key
``[seed, check_number, config_index]`` so distinct configurations are
statistically independent.
"""
from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .martingale import exact_second_moment
from .reinforcement import ReinforcementSpec, compute_time_law
from .stats import (TestReport, chunk_stream, clt_diagnostic, direction_autocorrelation, martingale_tests,
                    msd_accumulators, msd_reports, strictly_decreasing, subdiffusive_check)
from .timechange import coupled_pair, senile_from_timechange
from .walk_core import KINDS, PERSISTENT, REINFORCED

SUITES = ("full", "quick")


@dataclass(frozen=True)
class Scale:
    msd_paths: int
    martingale_paths: int
    coupled_pairs: int
    coupled_horizon: int
    senile_n: int
    senile_paths: int
    autocorr_paths: int
    clt_n: int
    clt_paths: int
    subdiffusive_paths: int


SCALES = {
    "full": Scale(100_000, 100_000, 1000, 1000, 10_000, 10_000, 100_000, 10_000, 10_000, 10_000),
    "quick": Scale(10_000, 10_000, 50, 200, 2000, 2000, 10_000, 2000, 2000, 2000),
}


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    summary: str
    details: list = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        out = {"criterion": self.number, "name": self.name, "passed": self.passed,
               "summary": self.summary, "details": self.details}
        if timing:
            out["seconds"] = round(self.seconds, 3)
        return out

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: {self.name} - {self.summary}"


def _key(seed, number: int, config: int) -> list[int]:
    return [int(seed), number, config]


def _fail_count(reports) -> int:
    return sum(not r.passed for r in reports)


def check_exact_formula(scale: Scale, seed: int = 1, workers: int = 1) -> CheckResult:
    """Monte Carlo E|W_n|^2 against the exact finite-n formula."""
    n_list = [1, 2, 5, 10, 100]
    reports = []
    configs = itertools.product(KINDS, (1, 2, 3), (0.0, 2.0))
    for idx, (kind, d, c) in enumerate(configs):
        spec = ReinforcementSpec.const(c, d)
        reports += msd_reports(kind, "walk", spec, n_list, scale.msd_paths, _key(seed, 1, idx), workers=workers)
    bad = _fail_count(reports)
    worst = max(abs(r.z_score) for r in reports)
    return CheckResult(1, "exact second moment of time-changed walks", bad == 0,
                       f"{len(reports) - bad}/{len(reports)} within 3 SE (max |z| = {worst:.2f})",
                       [r.to_dict() for r in reports])


TRUNCATED_TABLE = (-0.25, -0.5, -1.0)  # d=1: P(T=1,2,3) = 4/7, 2/7, 1/7


def enumerate_second_moment(kind: str, d: int, pmf: dict[int, Fraction], n: int) -> Fraction:
    """Exact ``E|W_n|^2`` by summing over every direction and run-length sequence.

    Directions are unit vectors ``(axis, sign)``; the transition rules are
    applied literally, independent of the simulator's code arithmetic.
    """
    units = [(axis, sign) for axis in range(d) for sign in (1, -1)]
    total = Fraction(0)

    def allowed(prev, prev_len):
        if kind == PERSISTENT or prev_len == 0:
            banned = prev
        else:
            banned = (prev[0], -prev[1])
        return [u for u in units if u != banned]

    def rec(m, prev, prev_len, pos, prob):
        nonlocal total
        if m == n:
            total += prob * sum(x * x for x in pos)
            return
        choices = units if prev is None else allowed(prev, prev_len)
        for u in choices:
            for t, pt in pmf.items():
                length = t if kind == PERSISTENT else t % 2
                new = list(pos)
                new[u[0]] += u[1] * length
                rec(m + 1, u, length, new, prob * pt / len(choices))

    rec(0, None, None, [0] * d, Fraction(1))
    return total


def check_brute_force(seed: int = 1) -> CheckResult:
    """Exhaustive enumeration on a three-point run-length law against the exact formula."""
    d = 1
    spec = ReinforcementSpec.table(TRUNCATED_TABLE, d)
    law = compute_time_law(spec)
    pmf = {1: Fraction(4, 7), 2: Fraction(2, 7), 3: Fraction(1, 7)}
    details = []
    ok = True
    for kind in KINDS:
        for n in (1, 2, 3):
            exact = float(enumerate_second_moment(kind, d, pmf, n))
            formula = exact_second_moment(kind, d, law, n)
            err = abs(exact - formula)
            ok &= err <= 1e-10
            details.append({"kind": kind, "n": n, "enumerated": exact, "formula": formula, "abs_error": err})
    worst = max(x["abs_error"] for x in details)
    return CheckResult(2, "brute-force enumeration oracle", ok, f"max |enumerated - formula| = {worst:.2e}",
                       details)


def check_martingales(scale: Scale, seed: int = 1, workers: int = 1) -> CheckResult:
    details = []
    ok = True
    notes = []
    for idx, (kind, d) in enumerate(itertools.product(KINDS, (1, 2))):
        spec = ReinforcementSpec.const(0.0, d)
        key = _key(seed, 3, idx)
        res = martingale_tests(kind, spec, [1, 10, 100], scale.martingale_paths, key, workers=workers)
        sabotaged = martingale_tests(kind, spec, [1, 10, 100], scale.martingale_paths, key,
                                     coefficient_scale=0.5, workers=workers)["increment"]
        power = sabotaged.max_abs_z > 3
        good = all(t.passed for t in res.values())
        ok &= good and power
        notes.append(f"{kind} d={d}: {'ok' if good else 'FAIL'}, sabotage |z|={sabotaged.max_abs_z:.1f}")
        details.append({"kind": kind, "d": d, "tests": {k: t.to_dict() for k, t in res.items()},
                        "sabotage_max_abs_z": sabotaged.max_abs_z, "sabotage_detected": power})
    return CheckResult(3, "martingale suite and sabotage power", ok, "; ".join(notes), details)


COUPLING_CONFIGS = ((PERSISTENT, 1, 0.0), (PERSISTENT, 2, 0.0), (REINFORCED, 1, 1.0), (REINFORCED, 2, 0.0))


def check_coupling(scale: Scale, seed: int = 1) -> CheckResult:
    details = []
    ok = True
    for idx, (kind, d, c) in enumerate(COUPLING_CONFIGS):
        spec = ReinforcementSpec.const(c, d)
        mismatched = renewal_errors = 0
        for i in range(scale.coupled_pairs):
            rng = chunk_stream(_key(seed, 4, idx), i)
            walk, direct = coupled_pair(kind, spec, scale.coupled_horizon, rng)
            from_walk = senile_from_timechange(walk, scale.coupled_horizon)
            mismatched += not np.array_equal(from_walk.positions, direct.positions)
            tau = walk.tau
            seen = tau <= scale.coupled_horizon
            renewal_errors += not np.array_equal(direct.positions[tau[seen] - 1], walk.positions[seen])
        ok &= mismatched == 0 and renewal_errors == 0
        details.append({"kind": kind, "d": d, "f": f"const:{c:g}", "pairs": scale.coupled_pairs,
                        "horizon": scale.coupled_horizon, "mismatched_paths": mismatched,
                        "renewal_mismatches": renewal_errors})
    total = sum(x["mismatched_paths"] + x["renewal_mismatches"] for x in details)
    return CheckResult(4, "exact coupling of senile constructions", ok,
                       f"{total} mismatches over {len(details) * scale.coupled_pairs} coupled pairs", details)


def check_senile_constants(scale: Scale, seed: int = 1, workers: int = 1) -> CheckResult:
    reports = []
    for idx, kind in enumerate(KINDS):
        spec = ReinforcementSpec.const(0.0, 1)
        reports += msd_reports(kind, "senile", spec, [scale.senile_n], scale.senile_paths,
                               _key(seed, 5, idx), workers=workers)
    summary = ", ".join(f"{r.quantity}={r.estimate:.4f}±{r.std_error:.4f} (ref {r.reference:g})" for r in reports)
    return CheckResult(5, "senile diffusion constants", _fail_count(reports) == 0, summary,
                       [r.to_dict() for r in reports])


def check_autocorrelation(scale: Scale, seed: int = 1, workers: int = 1, m: int = 3) -> CheckResult:
    reports = []
    for idx, (kind, d) in enumerate(itertools.product(KINDS, (1, 2, 3))):
        k_max = 6 if kind == PERSISTENT else 4
        reports += direction_autocorrelation(kind, ReinforcementSpec.const(0.0, d), m, k_max,
                                             scale.autocorr_paths, _key(seed, 6, idx), workers=workers)
    bad = _fail_count(reports)
    worst = max(abs(r.z_score) for r in reports)
    return CheckResult(6, "direction autocorrelation recursions", bad == 0,
                       f"{len(reports) - bad}/{len(reports)} within 3 SE (max |z| = {worst:.2f})",
                       [r.to_dict() for r in reports])


def check_clt(scale: Scale, seed: int = 1, workers: int = 1) -> CheckResult:
    details = []
    notes = []
    ok = True
    for idx, (kind, d) in enumerate(itertools.product(KINDS, (1, 2))):
        res = clt_diagnostic(kind, ReinforcementSpec.const(0.0, d), scale.clt_n, [0.5, 1.0],
                             scale.clt_paths, _key(seed, 7, idx), workers=workers)
        good = all(t.passed for t in res.values())
        ok &= good
        ks_max = max(r.estimate for r in res["ks"].reports)
        notes.append(f"{kind} d={d}: max KS {ks_max:.4f}/{res['ks'].reports[0].threshold:.4f}"
                     f"{'' if good else ' FAIL'}")
        details.append({"kind": kind, "d": d, "tests": {k: t.to_dict() for k, t in res.items()}})
    return CheckResult(7, "Brownian scaling diagnostics", ok, "; ".join(notes), details)


def check_subdiffusive(scale: Scale, seed: int = 1, workers: int = 1) -> CheckResult:
    spec = ReinforcementSpec.affine(1.0, 0.0, 1)
    reports = subdiffusive_check(spec, [100, 1000, 10_000], scale.subdiffusive_paths, _key(seed, 8, 0),
                                 workers=workers)
    ok = strictly_decreasing(reports)
    summary = " > ".join(f"{r.estimate:.4f}" for r in reports)
    return CheckResult(8, "subdiffusive reinforced walk (E(T) infinite)", ok, summary,
                       [r.to_dict() for r in reports])


def check_reproducibility(scale: Scale, seed: int = 1) -> CheckResult:
    """Simulation files repeat byte for byte; (sum, sumsq, count) ignores the worker count."""
    from .cli import ExperimentConfig, simulation_files

    sim = {}
    for tag, workers in (("first", 1), ("second", 1), ("workers4", 4)):
        config = ExperimentConfig(model=PERSISTENT, dim=2, seed=42, paths=10, steps=200, workers=workers)
        sim[tag] = simulation_files(config)
    files_same = sim["first"] == sim["second"] == sim["workers4"]
    spec = ReinforcementSpec.const(0.0, 2)
    triples = {}
    for workers in (1, 4):
        acc = msd_accumulators(PERSISTENT, "walk", spec, [1, 10, 100], scale.msd_paths // 10,
                               _key(seed, 9, 0), workers=workers, chunk_size=500)
        triples[workers] = acc.triple()
    a, b = triples[1], triples[4]
    same = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) and a[2] == b[2]
    return CheckResult(9, "reproducibility", same and files_same,
                       f"simulate files identical across runs: {files_same}; "
                       f"triples identical for workers 1 and 4: {same}",
                       [{"simulate_files": len(sim["first"]), "identical": files_same}]
                       + [{"workers": w, "sum": t[0].tolist(), "sumsq": t[1].tolist(), "count": t[2]}
                          for w, t in triples.items()])


CHECKS = {
    1: lambda sc, seed, w: check_exact_formula(sc, seed, w),
    2: lambda sc, seed, w: check_brute_force(seed),
    3: lambda sc, seed, w: check_martingales(sc, seed, w),
    4: lambda sc, seed, w: check_coupling(sc, seed),
    5: lambda sc, seed, w: check_senile_constants(sc, seed, w),
    6: lambda sc, seed, w: check_autocorrelation(sc, seed, w),
    7: lambda sc, seed, w: check_clt(sc, seed, w),
    8: lambda sc, seed, w: check_subdiffusive(sc, seed, w),
    9: lambda sc, seed, w: check_reproducibility(sc, seed),
}


def run_check(number: int, suite: str = "full", seed: int = 1, workers: int = 1,
              coefficient_scale: float = 1.0) -> CheckResult:
    scale = SCALES[suite]
    start = time.perf_counter()
    if number == 3 and coefficient_scale != 1.0:
        result = _sabotaged_martingales(scale, seed, workers, coefficient_scale)
    else:
        result = CHECKS[number](scale, seed, workers)
    result.seconds = time.perf_counter() - start
    return result


def _sabotaged_martingales(scale: Scale, seed: int, workers: int, coefficient_scale: float) -> CheckResult:
    """Martingale suite run on mis-corrected walks; expected to fail."""
    reports: list[TestReport] = []
    for idx, (kind, d) in enumerate(itertools.product(KINDS, (1, 2))):
        res = martingale_tests(kind, ReinforcementSpec.const(0.0, d), [1, 10, 100], scale.martingale_paths,
                               _key(seed, 3, idx), coefficient_scale=coefficient_scale, workers=workers)
        reports.extend(res.values())
    ok = all(t.passed for t in reports)
    worst = max(t.max_abs_z for t in reports)
    return CheckResult(3, f"martingale suite with correction scaled by {coefficient_scale:g}", ok,
                       f"max |z| = {worst:.1f}", [t.to_dict() for t in reports])


def run_suite(suite: str = "full", seed: int = 1, workers: int = 1, checks=None,
              coefficient_scale: float = 1.0, progress=None) -> list[CheckResult]:
    if suite not in SUITES:
        raise ValueError(f"suite must be one of {SUITES}")
    results = []
    for number in (checks or sorted(CHECKS)):
        result = run_check(number, suite, seed, workers, coefficient_scale)
        if progress:
            progress(result)
        results.append(result)
    return results


def suite_json(results, timing: bool = False) -> str:
    return json.dumps([r.to_dict(timing) for r in results], indent=1, sort_keys=True, default=float)
