import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpvolseg.errors import ParameterError
from fpvolseg.focused_practice import (
    LossRegistry,
    build_epoch_plan,
    classify,
    load_checkpoint,
    otsu_threshold,
    record_loss,
    save_checkpoint,
    uniform_plan,
)
from oracles import otsu_brute_force


def _registry(mapping):
    reg = LossRegistry()
    for k, v in mapping.items():
        record_loss(reg, k, v)
    return reg


def test_record_loss_last_write_wins():
    reg = LossRegistry()
    record_loss(reg, 3, 0.5)
    record_loss(reg, 3, 0.2)
    record_loss(reg, 4, 0.7)
    assert reg.entries == {3: 0.2, 4: 0.7}


@pytest.mark.parametrize("bad", [math.nan, -0.1, math.inf])
def test_record_loss_rejects(bad):
    with pytest.raises(ParameterError):
        record_loss(LossRegistry(), 1, bad)


def test_otsu_examples():
    t, k = otsu_threshold([0.10, 0.12, 0.11, 0.90, 0.95])
    assert k == 3 and t == pytest.approx(0.51)
    t, k = otsu_threshold([0.3] * 6)
    assert k == 6 and t == 0.3
    t, k = otsu_threshold([0.1, 0.9])
    assert k == 1 and t == pytest.approx(0.5)
    t, k = otsu_threshold([0.4])
    assert k == 1 and t == 0.4
    with pytest.raises(ParameterError):
        otsu_threshold([])


def test_otsu_ties_go_to_smallest_split():
    # splits 1 and 3 both give 1/3 in exact arithmetic
    t, k = otsu_threshold([0.0, 1.0, 1.0, 2.0])
    assert k == 1 and t == 0.5
    assert otsu_brute_force([0.0, 1.0, 1.0, 2.0]) == 1
    _, k = otsu_threshold([0.0, 1.0, 2.0, 3.0])
    assert k == 2
    _, k = otsu_threshold([0.0, 0.0, 1.0, 1.0])
    assert k == otsu_brute_force([0.0, 0.0, 1.0, 1.0]) == 2


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=2, max_size=60))
def test_otsu_matches_brute_force(values):
    assert otsu_threshold(values)[1] == otsu_brute_force(values)


def test_classify_examples():
    easy, hard, t = classify(_registry({1: 0.1, 2: 0.12, 3: 0.11, 4: 0.9, 5: 0.95}))
    assert easy == [1, 2, 3] and hard == [5, 4] and t == pytest.approx(0.51)
    easy, hard, _ = classify(_registry({i: 0.4 for i in range(5)}))
    assert easy == list(range(5)) and hard == []
    easy, hard, _ = classify(_registry({9: 0.2}))
    assert easy == [9] and hard == []
    with pytest.raises(ParameterError):
        classify(LossRegistry())


def test_classify_is_recomputed_after_update():
    reg = _registry({1: 0.1, 2: 0.12, 3: 0.11, 4: 0.9, 5: 0.95})
    assert 4 in classify(reg)[1]
    record_loss(reg, 4, 0.1)
    assert 4 in classify(reg)[0]


def _five_and_five():
    return _registry({**{i: 0.1 + 0.001 * i for i in range(5)}, **{i: 0.9 + 0.01 * i for i in range(5, 10)}})


def test_plan_excludes_hardest_and_oversamples():
    plan = build_epoch_plan(_five_and_five(), 2, 0.2, np.random.default_rng(0))
    assert plan.excluded == {9}
    assert len(plan) == 5 + 4 * 2
    assert all(plan.counts[i] == 1 for i in range(5))
    assert all(plan.counts[i] == 2 for i in range(5, 9))
    assert plan.threshold == pytest.approx((0.104 + 0.95) / 2)


def test_plan_uniform_when_disabled():
    reg = _five_and_five()
    plan = build_epoch_plan(reg, 1, 0.0, np.random.default_rng(0))
    assert sorted(plan.entries) == sorted(reg.entries)
    assert not plan.excluded


def test_plan_floor_keeps_small_hard_sets():
    reg = _registry({0: 0.1, 1: 0.1, 2: 0.11, 3: 0.9, 4: 0.91, 5: 0.92})
    plan = build_epoch_plan(reg, 2, 0.2, np.random.default_rng(0))
    assert not plan.excluded
    assert len(plan) == 3 + 3 * 2


def test_plan_ties_exclude_higher_id():
    reg = _registry({0: 0.1, 1: 0.1, 2: 0.1, 3: 0.9, 4: 0.9, 5: 0.9, 6: 0.9, 7: 0.9})
    plan = build_epoch_plan(reg, 2, 0.2, np.random.default_rng(0))
    assert plan.excluded == {7}


def test_plan_parameter_errors():
    reg = _five_and_five()
    for kwargs in ({"oversample_factor": 0}, {"oversample_factor": 1.5}, {"exclude_frac": 1.0}, {"exclude_frac": -0.1}):
        with pytest.raises(ParameterError):
            build_epoch_plan(reg, rng=np.random.default_rng(0), **{"oversample_factor": 2, "exclude_frac": 0.2, **kwargs})


@settings(max_examples=100, deadline=None)
@given(
    st.dictionaries(st.integers(0, 500), st.floats(0, 5, allow_nan=False), min_size=1, max_size=80),
    st.integers(1, 4),
    st.floats(0, 0.95),
    st.integers(0, 2**16),
)
def test_plan_multiset_properties(losses, factor, frac, seed):
    reg = _registry(losses)
    plan = build_epoch_plan(reg, factor, frac, np.random.default_rng(seed))
    assert Counter(plan.entries) == Counter(plan.counts)
    assert not plan.excluded & set(plan.entries)
    assert set(plan.counts) | plan.excluded == set(reg.entries)
    _, hard, t = classify(reg)
    assert plan.threshold == t
    assert len(plan.excluded) == math.floor(frac * len(hard))
    again = build_epoch_plan(reg, factor, frac, np.random.default_rng(seed))
    assert again.entries == plan.entries


def test_uniform_plan(rng):
    plan = uniform_plan(range(7), rng)
    assert sorted(plan.entries) == list(range(7))


def test_checkpoint_round_trip(tmp_path):
    reg = _five_and_five()
    reg.epoch_tag = 4
    plan = build_epoch_plan(reg, 2, 0.2, np.random.default_rng(0))
    save_checkpoint(tmp_path / "reg.json", reg, plan)
    back, threshold = load_checkpoint(tmp_path / "reg.json")
    assert back.entries == reg.entries and back.epoch_tag == 4
    assert threshold == plan.threshold
