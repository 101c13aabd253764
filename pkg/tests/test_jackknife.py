import functools
import warnings
from collections import Counter

import numpy as np
import pytest

import mc_runs
from simdebias.debias import Dataset
from simdebias.design import LinkModel
from simdebias.exceptions import InputError, JackknifeBlockError
from simdebias.jackknife import (
    JackknifePlan,
    degree_variances,
    jackknife_spread,
    jackknife_variance,
    leave_out_values,
    select_degree,
)
from simdebias.simulation import replicate_streams, simulate_dataset


def test_plan_blocks():
    plan = JackknifePlan(25, 10)
    assert plan.n_blocks == 2
    np.testing.assert_array_equal(plan.rows(1), np.arange(10, 20))
    covered = np.concatenate(plan.blocks())
    assert np.unique(covered).size == covered.size  # disjoint
    assert covered.max() < 20  # remainder rows are never left out


def test_plan_paper_indexing():
    plan = JackknifePlan(1000)
    assert plan.n_blocks == 100
    np.testing.assert_array_equal(plan.rows(0), np.arange(10))
    np.testing.assert_array_equal(plan.rows(99), np.arange(990, 1000))


def test_plan_needs_two_blocks():
    with pytest.raises(InputError):
        JackknifePlan(15, 10)
    with pytest.raises(InputError):
        JackknifePlan(10, 0)


def test_constant_estimator():
    assert jackknife_variance(np.zeros((50, 2)), JackknifePlan(50, 5), lambda d: 3.0) == 0.0


def test_block_index_estimator():
    plan = JackknifePlan(60, 6)
    data = np.arange(60.0)
    # the left-out block is the one whose first row is missing from the reduced data
    def which_block(sub):
        missing = np.setdiff1d(data, sub)
        return missing[0] // 6 + 1

    var = jackknife_variance(data, plan, which_block)
    assert var == pytest.approx(np.var(np.arange(1, 11)), abs=1e-12)


def test_leave_out_count():
    calls = []
    values = leave_out_values(np.zeros(1000), JackknifePlan(1000, 10), lambda d: calls.append(d.size) or 0.0)
    assert len(calls) == 100 and values.shape == (100,)
    assert set(calls) == {990}


def test_order_invariance():
    rng = np.random.default_rng(2)
    theta = rng.standard_normal(100) * 1e3 + 1e8
    base = jackknife_spread(theta)
    for _ in range(5):
        assert jackknife_spread(rng.permutation(theta)) == base


def test_vector_values():
    theta = np.array([[1.0, 2.0], [3.0, 2.0], [5.0, 2.0]])
    np.testing.assert_allclose(jackknife_spread(theta), [8 / 3, 0.0])


def test_block_failure_is_reported():
    def estimator(sub):
        if sub.size < 40 and 30 not in sub:
            raise ValueError("boom")
        return 1.0

    with pytest.raises(JackknifeBlockError) as info:
        jackknife_variance(np.arange(40.0), JackknifePlan(40, 10), estimator)
    assert info.value.block == 3
    assert isinstance(info.value.__cause__, ValueError)


def test_dataset_blocks_come_from_first_subsample():
    rng = np.random.default_rng(0)
    data = Dataset(rng.standard_normal((40, 3)), rng.standard_normal(40))
    seen = []

    def estimator(sub):
        seen.append((sub.plan.s1.size, sub.plan.s2.size, sub.plan.s1[0]))
        return 0.0

    leave_out_values(data, JackknifePlan(20, 5), estimator)
    assert seen[0] == (15, 20, 5)
    assert seen[1][2] == 0
    with pytest.raises(InputError):
        leave_out_values(data, JackknifePlan(30, 5), estimator)


def test_mean_scaling():
    rng = np.random.default_rng(11)
    n, k = 1000, 10
    column = rng.standard_normal(n) * 3.0
    var = jackknife_variance(column, JackknifePlan(n, k), np.mean, scaled=True)
    ratio = var / (column.var() / (n - k))
    assert 0.5 <= ratio <= 2.0


def test_select_single_candidate():
    def broken(sub, m):
        raise AssertionError("must not be called")

    assert select_degree(None, [4], JackknifePlan(20, 10), estimator=broken) == 4


def test_select_ties_and_minimum():
    data = np.arange(30.0)
    plan = JackknifePlan(30, 10)
    spread = {1: 2.0, 2: 0.5, 3: 0.5, 4: 1.0}

    def estimator(sub, m):
        return spread[m] * sub.sum()

    assert select_degree(data, [4, 3, 2, 1], plan, estimator=estimator) == 2
    with pytest.raises(InputError):
        select_degree(data, [], plan, estimator=estimator)


def test_degree_variances_keys():
    config = mc_runs.sine_config(n=100, p=200, degrees=(1, 2, 3))
    data = simulate_dataset(config, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = degree_variances(data, [1, 3], JackknifePlan(100), cov=config.cov, rng=np.random.default_rng(0))
    assert list(out) == [1, 3]
    assert all(v > 0 for v in out.values())


# Monte Carlo selection over seeds


@functools.lru_cache(maxsize=None)
def _sine_choices():
    config = mc_runs.sine_config()
    out = []
    for seed in range(10):
        data = simulate_dataset(config, seed)
        fold_rng = replicate_streams(config.master_seed, seed)[2]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out.append(select_degree(data, range(1, 11), JackknifePlan(config.n), cov=config.cov, rng=fold_rng))
    return tuple(out)


@pytest.mark.slow
def test_sine_selection_prefers_odd_degrees():
    choices = _sine_choices()
    assert sum(m % 2 for m in choices) > len(choices) / 2


@pytest.mark.slow
def test_sine_modal_selection():
    counts = Counter(_sine_choices())
    top = max(counts.values())
    modes = {m for m, c in counts.items() if c == top}
    assert modes <= {3, 5}


@pytest.mark.slow
def test_linear_link_selects_degree_one():
    config = mc_runs.model1_config(n=500, p=1000, link=LinkModel.linear_plus_noise())
    picks = []
    for seed in range(10):
        data = simulate_dataset(config, seed)
        fold_rng = replicate_streams(config.master_seed, seed)[2]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            picks.append(select_degree(data, [1, 5], JackknifePlan(config.n), cov=config.cov, rng=fold_rng))
    assert picks.count(1) > 5
