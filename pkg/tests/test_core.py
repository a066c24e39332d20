import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crbias.core import (DataError, Horizon, StepFunction, SurvivalDataset, event_time_quantile,
                         step_eval, step_eval_left)

from conftest import make_data


@pytest.fixture
def f():
    return StepFunction([2.0], [0.5], 1.0)


@pytest.mark.parametrize("t, expected", [(1, 1.0), (2, 0.5), (99, 0.5)])
def test_step_eval_right_continuous(f, t, expected):
    assert step_eval(f, t) == expected


@pytest.mark.parametrize("t, expected", [(2, 1.0), (2.5, 0.5), (1, 1.0)])
def test_step_eval_left_limit(f, t, expected):
    assert step_eval_left(f, t) == expected


def test_step_eval_rejects_negative_and_left_rejects_zero(f):
    with pytest.raises(ValueError):
        step_eval(f, -1)
    with pytest.raises(ValueError):
        step_eval_left(f, 0)


def test_step_function_rejects_duplicate_or_unsorted_jumps():
    with pytest.raises(ValueError):
        StepFunction([1.0, 1.0], [0.5, 0.2], 1.0)
    with pytest.raises(ValueError):
        StepFunction([2.0, 1.0], [0.5, 0.2], 1.0)
    with pytest.raises(ValueError):
        StepFunction([1.0], [0.5, 0.2], 1.0)


def test_step_function_vectorised(f):
    np.testing.assert_array_equal(f(np.array([0.0, 2.0, 3.0])), [1.0, 0.5, 0.5])
    np.testing.assert_array_equal(f.left(np.array([0.5, 2.0, 3.0])), [1.0, 1.0, 0.5])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 100, allow_nan=False), min_size=1, max_size=8, unique=True),
       st.floats(0.001, 120, allow_nan=False))
def test_right_and_left_agree_off_jumps(jumps, t):
    jumps = sorted(jumps)
    f = StepFunction(jumps, np.linspace(1, 0, len(jumps)), 1.0)
    if t in jumps:
        return
    assert step_eval(f, t) == step_eval_left(f, t)


@pytest.fixture
def qdata():
    return make_data([1, 2, 3, 4], [1, 1, 0, 2])


def test_quantile_max(qdata):
    assert event_time_quantile(qdata, 1.0).t == 4


def test_quantile_median_follows_lower_quantile_definition(qdata):
    # Uncensored times {1, 2, 4}: the fraction <= 1 is 1/3 < 0.5 and the fraction <= 2 is
    # 2/3 >= 0.5, so the smallest qualifying time is 2.
    h = event_time_quantile(qdata, 0.5)
    assert h.t == 2
    assert h.label == "q0.5"


def test_quantile_all_censored():
    with pytest.raises(DataError, match="no uncensored events"):
        event_time_quantile(make_data([5], [0]), 0.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 50, allow_nan=False), st.integers(0, 2)),
                min_size=1, max_size=20),
       st.floats(0, 1), st.floats(0, 1))
def test_quantile_monotone(rows, q1, q2):
    times, events = zip(*rows)
    if not any(events):
        return
    data = make_data(times, events)
    lo, hi = sorted((q1, q2))
    assert event_time_quantile(data, lo).t <= event_time_quantile(data, hi).t


def test_horizon_rejects_negative():
    with pytest.raises(ValueError):
        Horizon(-1.0)


def test_dataset_validation():
    with pytest.raises(DataError):
        make_data([], [])
    with pytest.raises(DataError):
        make_data([1.0, -1.0], [1, 1])
    with pytest.raises(DataError):
        make_data([1.0], [-1])
    with pytest.raises(DataError):
        make_data([1.0, 2.0], [1, 3], n_risks=2)
    with pytest.raises(DataError):
        SurvivalDataset(["a"], np.zeros((2, 1)), [0], [1.0], [1])


def test_dataset_is_immutable_and_subsettable():
    d = make_data([1, 2, 3], [1, 0, 2], x=[[0.1], [0.2], [0.3]])
    assert d.n == 3 and d.n_covariates == 1 and d.n_risks == 2
    with pytest.raises(ValueError):
        d.times[0] = 5
    sub = d.subset([2, 0])
    assert list(sub.times) == [3, 1] and sub.n_risks == 2
    assert d.subject(1).event == 0
    assert list(d.recode(2)) == [0, 0, 1]
    assert [s.time for s in d] == [1, 2, 3]
