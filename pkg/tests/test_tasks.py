import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lethal_dose.tasks import (BijectionTask, Dataset, GaussianTask, LabeledSample, MemorizationTask,
                               encode_sample, gaussian_gap_delta, ml_label, sample, task_from_json)
from oracles import normal_cdf_quad

DELTA_R1 = 2 * normal_cdf_quad(1.0) - 1  # 0.682689...


def test_empty_draw(rng):
    task = BijectionTask(3, (0, 1, 2))
    D = sample(task, 0, rng)
    assert len(D) == 0 and D == Dataset()


def test_sample_rejects_negative(rng):
    with pytest.raises(ValueError):
        sample(BijectionTask(3, (0, 1, 2)), -1, rng)


def test_memorization_uniform_inputs(rng):
    task = MemorizationTask(2, 2, (1, 0))
    D = task.sample(10_000, rng)
    freq = sum(c for s, c in D.items() if s.x == 0) / len(D)
    assert abs(freq - 0.5) <= 0.02


def test_gaussian_class_mean(rng):
    task = GaussianTask(((-1.0,), (1.0,)))
    X, y = task.sample(100_000, rng).arrays()
    assert abs(X[y == 0, 0].mean() + 1) <= 0.02
    assert abs(X[y == 1, 0].mean() - 1) <= 0.02


@pytest.mark.parametrize("task", [
    BijectionTask(5, (3, 1, 4, 0, 2)),
    MemorizationTask(7, 3, (0, 2, 2, 1, 0, 1, 2)),
])
def test_clean_labels_are_ml_labels(task, rng):
    D = task.sample(500, rng)
    assert all(s.y == ml_label(task, s.x) for s in D)


def test_gaussian_samples_labels_in_range(rng):
    task = GaussianTask(((0.0, 0.0), (5.0, 0.0), (0.0, 5.0)))
    D = task.sample(300, rng)
    assert {s.y for s in D} <= {0, 1, 2}
    assert all(len(s.x) == 2 for s in D)


def test_sampling_reproducible():
    task = MemorizationTask(10, 3, (0, 1, 2, 0, 1, 2, 0, 1, 2, 0))
    a = task.sample(200, np.random.default_rng(7))
    b = task.sample(200, np.random.default_rng(7))
    assert a == b
    g = GaussianTask(((0.0,), (2.0,)))
    assert g.sample(50, np.random.default_rng(3)) == g.sample(50, np.random.default_rng(3))


def test_ml_label_gaussian_examples():
    task = GaussianTask(((0.0,), (3.0,)))
    assert task.ml_label((1.0,)) == 0
    assert task.ml_label((1.5,)) == 0  # tie goes to the smaller label
    assert task.ml_label((2.0,)) == 1


def test_ml_label_table_lookup():
    assert MemorizationTask(2, 2, (1, 0)).ml_label(0) == 1


@pytest.mark.parametrize("bad", [-1, 2, (0,), 1.5])
def test_ml_label_rejects_bad_discrete(bad):
    task = MemorizationTask(2, 2, (1, 0))
    with pytest.raises((ValueError, TypeError)):
        task.ml_label(bad)


def test_gaussian_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        GaussianTask(((0.0, 0.0), (1.0, 1.0))).ml_label((1.0,))


@pytest.mark.parametrize("centers, x, expected", [
    (((0.0,), (2.0,)), (0.0,), DELTA_R1),
    (((0.0,), (3.0,)), (0.5,), DELTA_R1),
    (((0.0,), (2.0,)), (1.0,), 0.0),
])
def test_gap_delta(centers, x, expected):
    assert gaussian_gap_delta(GaussianTask(centers), x) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(shift=st.lists(st.floats(-50, 50), min_size=2, max_size=2),
       x=st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_gap_delta_translation_invariant(shift, x):
    centers = np.array([[0.0, 0.0], [3.0, 1.0], [-2.0, 2.0]])
    base = GaussianTask(tuple(map(tuple, centers)))
    moved = GaussianTask(tuple(map(tuple, centers + shift)))
    a = base.gap_delta(tuple(x))
    b = moved.gap_delta(tuple(np.add(x, shift)))
    assert a == pytest.approx(b, abs=1e-9)


def test_ml_label_deterministic():
    task = GaussianTask(((0.0, 0.0), (2.0, 0.0)))
    assert len({task.ml_label((1.0, 0.3)) for _ in range(20)}) == 1


def test_invalid_tasks():
    with pytest.raises(ValueError):
        BijectionTask(3, (0, 0, 1))
    with pytest.raises(ValueError):
        BijectionTask(1, (0,))
    with pytest.raises(ValueError):
        MemorizationTask(2, 2, (0, 2))
    with pytest.raises(ValueError):
        GaussianTask(((0.0,), (1.0, 2.0)))


def test_encode_sample_layout():
    assert encode_sample(LabeledSample(5, 2)) == struct.pack("<QQ", 2, 5)
    assert encode_sample(LabeledSample((1.5, -2.0), 1)) == struct.pack("<Qdd", 1, 1.5, -2.0)


class TestDataset:
    def test_multiset_equality(self):
        assert Dataset([(0, 1), (1, 0), (0, 1)]) == Dataset([(1, 0), (0, 1), (0, 1)])
        assert Dataset([(0, 1)]) != Dataset([(0, 1), (0, 1)])

    def test_size_and_multiplicity(self):
        D = Dataset({(0, 1): 3, (2, 0): 1})
        assert len(D) == 4
        assert D.multiplicity((0, 1)) == 3
        assert D.multiplicity((9, 9)) == 0

    def test_zero_multiplicities_dropped(self):
        assert Dataset({(0, 1): 0}) == Dataset()

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            Dataset({(0, 1): -1})

    def test_add_and_remove(self):
        D = Dataset([(0, 1)])
        assert D.add((0, 1)).multiplicity((0, 1)) == 2
        assert len(D.add((0, 1), -1)) == 0
        with pytest.raises(ValueError):
            D.add((0, 1), -2)
        assert len(D) == 1  # original untouched

    def test_iteration_is_canonical(self):
        a = Dataset([(2, 0), (1, 1), (2, 0)])
        b = Dataset([(1, 1), (2, 0), (2, 0)])
        assert list(a) == list(b)


@pytest.mark.parametrize("task", [
    BijectionTask(3, (2, 0, 1)),
    MemorizationTask(4, 3, (0, 2, 1, 1)),
    GaussianTask(((0.0, 1.0), (2.0, -1.0))),
])
def test_json_round_trip(task):
    text = json.dumps(task.to_json())
    assert task_from_json(text) == task


def test_json_draws_hidden_structure(rng):
    task = task_from_json({"type": "bijection", "k": 6}, rng)
    assert sorted(task.g) == list(range(6))
    with pytest.raises(ValueError):
        task_from_json({"type": "bijection", "k": 6})
    with pytest.raises(ValueError):
        task_from_json({"type": "nope"})
    with pytest.raises(ValueError):
        task_from_json({"type": "gaussian", "k": 3, "centers": [[0], [1]]})


def test_gap_delta_matches_closed_form_erf():
    task = GaussianTask(((0.0, 0.0), (4.0, 0.0), (0.0, 7.0)))
    x = (0.5, 0.5)
    d = sorted(np.linalg.norm(np.array(task.centers) - x, axis=1))
    assert task.gap_delta(x) == pytest.approx(math.erf((d[1] - d[0]) / (2 * math.sqrt(2))), abs=1e-14)
