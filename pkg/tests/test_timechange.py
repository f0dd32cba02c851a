import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from senile_walks.reinforcement import CapExceededError, ReinforcementSpec, compute_time_law
from senile_walks.martingale import senile_diffusion_constant
from senile_walks.timechange import (SenilePath, TimeIndex, coupled_pair, senile_direct, senile_from_timechange,
                                     senile_positions_at, tau_inverse, walk_to_horizon)
from senile_walks.walk_core import PERSISTENT, REINFORCED, WalkPath


def test_tau_inverse_examples():
    index = TimeIndex.from_times([3, 1, 2])  # tau = 3, 4, 6
    assert [tau_inverse(index, n) for n in range(1, 7)] == [1, 1, 1, 2, 3, 3]
    assert tau_inverse(index, np.array([4, 6])).tolist() == [2, 3]
    with pytest.raises(IndexError):
        tau_inverse(index, 7)
    with pytest.raises(IndexError):
        tau_inverse(index, 0)


def test_persistent_senile_by_hand():
    path = WalkPath.from_steps(PERSISTENT, 1, [1, -1], [3, 2])
    assert senile_from_timechange(path, 5).positions[:, 0].tolist() == [1, 2, 3, 2, 1]


def test_reinforced_senile_by_hand():
    # first run crosses the edge (0,1) three times, second run of length 2
    # starts at 1 going up and comes back
    path = WalkPath.from_steps(REINFORCED, 1, [1, 1], [3, 2])
    assert senile_from_timechange(path, 5).positions[:, 0].tolist() == [1, 0, 1, 2, 1]


def test_even_run_does_not_reuse_the_previous_edge():
    # under the first-step convention an even run returns to its start
    path = WalkPath.from_steps(REINFORCED, 1, [1, 1], [1, 2])
    s = senile_from_timechange(path, 3).positions[:, 0].tolist()
    assert s == [1, 2, 1]
    # a literal reading with D_m as the last step direction would give 0, 1, 0:
    # the second run would re-cross the edge just left, which the model forbids


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from([PERSISTENT, REINFORCED]), d=st.integers(1, 3),
       times=st.lists(st.integers(1, 7), min_size=1, max_size=25), seed=st.integers(0, 2**32 - 1))
def test_senile_path_takes_unit_steps_and_hits_w_at_renewals(kind, d, times, seed):
    rng = np.random.default_rng(seed)
    dirs = [int(rng.choice([1, -1]) * rng.integers(1, d + 1)) for _ in times]
    path = WalkPath.from_steps(kind, d, dirs, times)
    horizon = int(sum(times))
    s = senile_from_timechange(path, horizon).positions
    steps = np.diff(np.vstack([np.zeros((1, d), dtype=np.int64), s]), axis=0)
    assert np.all(np.abs(steps).sum(axis=1) == 1)
    assert np.array_equal(s[np.cumsum(times) - 1], path.positions)


@pytest.mark.parametrize("kind", [PERSISTENT, REINFORCED])
@pytest.mark.parametrize("d,c", [(1, 0.0), (2, 1.0), (3, 0.0)])
def test_coupling_is_exact(kind, d, c):
    spec = ReinforcementSpec.const(c, d)
    for seed in range(25):
        walk, direct = coupled_pair(kind, spec, 300, np.random.default_rng(seed))
        assert np.array_equal(senile_from_timechange(walk, 300).positions, direct.positions)


def test_horizon_must_be_covered():
    path = WalkPath.from_steps(PERSISTENT, 1, [1], [3])
    with pytest.raises(ValueError):
        senile_from_timechange(path, 4)
    walk = walk_to_horizon(PERSISTENT, ReinforcementSpec.const(0.0, 1), 50, np.random.default_rng(0))
    assert walk.tau[-1] >= 50 > walk.tau[-2]


def test_senile_csv_contract():
    text = SenilePath(PERSISTENT, np.array([[1, 0], [1, 1]])).to_csv()
    assert text.splitlines() == ["n,x1,x2", "1,1,0", "2,1,1"]


@pytest.mark.parametrize("kind", [PERSISTENT, REINFORCED])
def test_batch_senile_positions_are_consistent(kind):
    spec = ReinforcementSpec.const(0.0, 2)
    times = np.array([1, 2, 7, 50, 51, 400])
    sample = senile_positions_at(kind, spec, times, 3000, np.random.default_rng(2), block=16)
    x = sample.positions
    gaps = np.diff(times)
    l1 = np.abs(np.diff(x, axis=1)).sum(axis=2)
    assert np.all(l1 <= gaps) and np.all((l1 - gaps) % 2 == 0)
    assert np.all(np.abs(x).sum(axis=2) % 2 == times % 2)
    assert np.all(np.diff(sample.tau_inverse, axis=1) >= 0)
    assert np.all(sample.tau_inverse <= times)


@pytest.mark.parametrize("kind", [PERSISTENT, REINFORCED])
def test_batch_and_direct_senile_agree_in_law(kind):
    from scipy import stats as sps
    spec = ReinforcementSpec.const(1.0, 1)
    n = 60
    batch = senile_positions_at(kind, spec, [n], 4000, np.random.default_rng(8)).positions[:, 0, 0]
    rng = np.random.default_rng(9)
    direct = np.array([senile_direct(kind, spec, n, rng).positions[-1, 0] for _ in range(4000)])
    assert sps.ks_2samp(batch, direct).pvalue > 0.001
    law = compute_time_law(spec)
    ref = senile_diffusion_constant(kind, 1, law)
    assert np.mean(batch.astype(float) ** 2) / n == pytest.approx(ref, rel=0.15)


def test_cap_policy_for_heavy_tails():
    spec = ReinforcementSpec(1, "affine", (1.0, 0.0), t_cap=50)
    with pytest.raises(CapExceededError):
        senile_positions_at(REINFORCED, spec, [1000], 500, np.random.default_rng(0))
    sample = senile_positions_at(REINFORCED, spec, [1000], 500, np.random.default_rng(0), on_cap="truncate")
    assert sample.cap_breaches > 0
    # within the cap no run is censored, so no breach
    ok = senile_positions_at(REINFORCED, spec, [40], 500, np.random.default_rng(0))
    assert ok.cap_breaches == 0
