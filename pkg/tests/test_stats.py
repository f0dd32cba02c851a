import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from senile_walks.martingale import RegimeError
from senile_walks.reinforcement import ReinforcementSpec
from senile_walks.stats import (Accumulator, EstimateReport, chunk_sizes, chunk_stream, clt_diagnostic,
                                direction_autocorrelation, ks_critical_value, ks_statistic, map_chunks,
                                martingale_tests, merge_accumulators, msd_accumulators, msd_reports,
                                normal_cdf, renewal_rate, scaled_process, strictly_decreasing,
                                subdiffusive_check)
from senile_walks.walk_core import PERSISTENT, REINFORCED


@pytest.mark.parametrize("x", [-3.0, -1.0, 0.0, 0.5, 1.96, 4.0])
def test_normal_cdf_against_mpmath(x):
    assert normal_cdf(x) == pytest.approx(float(mpmath.ncdf(x)), abs=1e-15)


def test_normal_cdf_reference_value():
    assert normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-12)


def test_ks_statistic_matches_scipy():
    x = np.sort(np.random.default_rng(0).normal(size=500))
    assert ks_statistic(x) == pytest.approx(sps.kstest(x, "norm").statistic, abs=1e-12)
    u = np.sort(np.random.default_rng(1).random(300))
    assert ks_statistic(u, cdf=lambda t: min(max(t, 0.0), 1.0)) == pytest.approx(
        sps.kstest(u, "uniform").statistic, abs=1e-12)


def test_ks_rejects_unsorted_input():
    with pytest.raises(ValueError):
        ks_statistic(np.array([1.0, 0.0]))


def test_ks_critical_value():
    assert ks_critical_value(10_000) == pytest.approx(0.01628)
    assert ks_critical_value(10_000, 0.05) == pytest.approx(0.01358)


@settings(max_examples=60, deadline=None)
@given(xs=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60), cut=st.integers(0, 60))
def test_accumulator_merge_equals_whole(xs, cut):
    cut = min(cut, len(xs))
    whole = Accumulator().add(np.array(xs))
    parts = Accumulator().add(np.array(xs[:cut])).merge(Accumulator().add(np.array(xs[cut:])))
    assert parts.count == whole.count
    assert parts.mean == pytest.approx(whole.mean, rel=1e-9, abs=1e-9)
    assert parts.std_error == pytest.approx(np.std(xs, ddof=1) / math.sqrt(len(xs)), rel=1e-6, abs=1e-6)


def test_merge_accumulators_by_key():
    a = {1: Accumulator().add(np.array([1.0, 2.0]))}
    b = {1: Accumulator().add(np.array([3.0])), 2: Accumulator().add(np.array([5.0]))}
    merged = merge_accumulators([a, b])
    assert merged[1].count == 3 and merged[1].mean == 2.0 and merged[2].count == 1


def test_report_z_score_and_pass_rules():
    r = EstimateReport.from_moments("q", 1.1, 0.05, 100, reference=1.0)
    assert r.z_score == pytest.approx(2.0) and r.passed
    assert not EstimateReport.from_moments("q", 1.2, 0.05, 100, reference=1.0).passed
    assert EstimateReport.from_moments("q", 1.0, 0.0, 100, reference=1.0).z_score == 0.0
    assert EstimateReport.from_moments("q", 1.5, 0.0, 100, reference=1.0).z_score == math.inf
    assert EstimateReport("ks", 0.01, 0.0, 100, threshold=0.02).passed
    assert not EstimateReport("ks", 0.03, 0.0, 100, threshold=0.02).passed


def test_chunk_streams_are_deterministic_and_distinct():
    a = chunk_stream(7, 0).random(4)
    assert np.array_equal(a, chunk_stream(7, 0).random(4))
    assert not np.array_equal(a, chunk_stream(7, 1).random(4))
    assert not np.array_equal(a, chunk_stream(8, 0).random(4))
    assert not np.array_equal(a, chunk_stream([7, 1, 0], 0).random(4))
    assert chunk_sizes(4500, 2000) == [2000, 2000, 500]


def test_map_chunks_independent_of_worker_count():
    run = lambda rng, size: rng.random(size).sum()
    assert map_chunks(run, 9000, 3, workers=1) == map_chunks(run, 9000, 3, workers=4)


def test_accumulator_triples_identical_across_workers():
    spec = ReinforcementSpec.const(1.0, 2)
    one = msd_accumulators(REINFORCED, "walk", spec, [1, 7], 5000, 11, workers=1, chunk_size=700)
    four = msd_accumulators(REINFORCED, "walk", spec, [1, 7], 5000, 11, workers=4, chunk_size=700)
    for x, y in zip(one.triple(), four.triple()):
        assert np.array_equal(x, y)


@pytest.mark.parametrize("kind", [PERSISTENT, REINFORCED])
def test_walk_msd_matches_exact_formula(kind):
    reports = msd_reports(kind, "walk", ReinforcementSpec.const(2.0, 2), [1, 5, 50], 20_000, 5)
    assert all(r.passed for r in reports), [r.to_dict() for r in reports]


def test_senile_msd_outside_diffusive_regime_has_no_reference():
    reports = msd_reports(PERSISTENT, "senile", ReinforcementSpec.affine(1.0, 0.0, 1), [100], 200, 1)
    assert reports[0].reference is None and reports[0].warnings


def test_subdiffusive_decrease():
    reports = subdiffusive_check(ReinforcementSpec.affine(1.0, 0.0, 1), [100, 1000, 10_000], 2000, 3)
    assert strictly_decreasing(reports)


def test_autocorrelation_small_scale():
    for kind, k_max in ((PERSISTENT, 6), (REINFORCED, 4)):
        reports = direction_autocorrelation(kind, ReinforcementSpec.const(0.0, 2), 2, k_max, 20_000, 4)
        assert len(reports) == k_max and all(r.passed for r in reports)


def test_martingale_suite_has_power():
    spec = ReinforcementSpec.const(0.0, 1)
    good = martingale_tests(PERSISTENT, spec, [1, 10], 20_000, 6)
    assert all(t.passed for t in good.values())
    bad = martingale_tests(PERSISTENT, spec, [1, 10], 20_000, 6, coefficient_scale=0.5)
    assert bad["increment"].max_abs_z > 3


def test_clt_diagnostic_small_scale():
    res = clt_diagnostic(PERSISTENT, ReinforcementSpec.const(0.0, 2), 2000, [0.5, 1.0], 3000, 2)
    assert set(res) == {"ks", "cross_covariance", "temporal_covariance"}
    assert len(res["ks"].reports) == 4 and len(res["cross_covariance"].reports) == 2
    assert all(t.passed for t in res.values())


def test_scaled_process_regime_guard():
    with pytest.raises(RegimeError):
        scaled_process(REINFORCED, ReinforcementSpec.affine(1.0, 0.0, 1), 100, [1.0], 10, 1)
    with pytest.raises(RegimeError):
        scaled_process(PERSISTENT, ReinforcementSpec.affine(2.0, 0.0, 2), 100, [1.0], 10, 1)


def test_renewal_rate():
    r = renewal_rate(PERSISTENT, ReinforcementSpec.const(0.0, 1), 2000, 2000, 1)
    assert r.reference == 0.5 and r.passed
