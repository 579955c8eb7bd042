import itertools
from collections import Counter

import numpy as np
import pytest

from lethal_dose.learners import (ABSTAIN, bijection_learner, gaussian_learner, learner_from_json,
                                  memorization_learner, radius_nn_learner)
from lethal_dose.tasks import Dataset, MemorizationTask
from lethal_dose.harness import memorization_accuracy


def empirical(clf, x, draws=4000, seed=0):
    rng = np.random.default_rng(seed)
    counts = Counter(clf.classify(x, rng) for _ in range(draws))
    return {y: c / draws for y, c in counts.items()}


class TestBijection:
    def test_memorised_pair(self):
        clf = bijection_learner(4).train(Dataset([(0, 2)]))
        assert clf.predict_proba(0) == {2: 1.0}
        assert all(clf.classify(0, np.random.default_rng(s)) == 2 for s in range(20))

    def test_empty_is_uniform(self):
        clf = bijection_learner(4).train(Dataset())
        assert clf.predict_proba(0) == {y: 0.25 for y in range(4)}
        freq = empirical(clf, 0)
        assert all(abs(freq[y] - 0.25) < 0.03 for y in range(4))

    def test_guess_among_unseen_labels(self):
        clf = bijection_learner(3).train(Dataset([(1, 1)]))
        assert clf.predict_proba(0) == {0: 0.5, 2: 0.5}
        freq = empirical(clf, 0)
        assert 1 not in freq
        assert abs(freq[0] - 0.5) < 0.03

    def test_all_labels_seen_falls_back_to_uniform(self):
        clf = bijection_learner(3).train(Dataset([(1, 0), (2, 1), (2, 2)]))
        assert clf.predict_proba(0) == {0: 1 / 3, 1: 1 / 3, 2: 1 / 3}

    def test_conflicting_labels_majority(self):
        clf = bijection_learner(3).train(Dataset([(0, 2), (0, 2), (0, 1)]))
        assert clf.classify(0) == 2

    def test_derandomized_mode_picks_smallest(self):
        clf = bijection_learner(4).train(Dataset([(1, 0)]))
        assert clf.classify(0, None) == 1


class TestMemorization:
    def test_majority(self):
        clf = memorization_learner(3, 3).train(Dataset([(0, 2), (0, 2), (0, 1)]))
        assert clf.classify(0, np.random.default_rng(0)) == 2

    def test_unseen_uniform(self):
        clf = memorization_learner(3, 5).train(Dataset([(1, 0)]))
        assert clf.predict_proba(0) == {y: 0.2 for y in range(5)}

    def test_tie_derandomized(self):
        clf = memorization_learner(2, 3).train(Dataset([(0, 2), (0, 1)]))
        assert clf.classify(0) == 1
        assert clf.predict_proba(0) == {1: 0.5, 2: 0.5}

    def test_clean_accuracy_closed_form(self):
        assert memorization_accuracy(50, 5, 100) == pytest.approx(1 - 0.98**100 * 0.8)
        assert memorization_accuracy(50, 5, 100) == pytest.approx(0.8939, abs=5e-5)

    def test_exact_accuracy_by_enumeration(self):
        # m=3, k=2, n=3: enumerate all 27 input sequences
        task = MemorizationTask(3, 2, (1, 0, 1))
        learner = memorization_learner(3, 2)
        total = 0.0
        for seq in itertools.product(range(3), repeat=3):
            clf = learner.train(Dataset((x, task.g[x]) for x in seq))
            total += clf.predict_proba(0).get(task.g[0], 0.0)
        assert total / 27 == pytest.approx(memorization_accuracy(3, 2, 3))


def _swap(D, a, b, only_x=None):
    def f(s):
        if only_x is not None and s.x != only_x:
            return s
        y = b if s.y == a else a if s.y == b else s.y
        return (s.x, y)
    return Dataset(f(s) for s in D)


def _small_datasets(n_inputs, k, max_size):
    universe = [(x, y) for x in range(n_inputs) for y in range(k)]
    for size in range(max_size + 1):
        for combo in itertools.combinations_with_replacement(universe, size):
            yield Dataset(combo)


def test_bijection_equivariance_exhaustive():
    learner = bijection_learner(3)
    for D in _small_datasets(3, 3, 3):
        for a, b in itertools.permutations(range(3), 2):
            p = learner.train(D).predict_proba(0)
            q = learner.train(_swap(D, a, b)).predict_proba(0)
            assert p.get(a, 0.0) == pytest.approx(q.get(b, 0.0)), (D, a, b)


def test_memorization_equivariance_exhaustive():
    learner = memorization_learner(2, 3)
    for D in _small_datasets(2, 3, 3):
        for a, b in itertools.permutations(range(3), 2):
            p = learner.train(D).predict_proba(0)
            q = learner.train(_swap(D, a, b, only_x=0)).predict_proba(0)
            assert p.get(a, 0.0) == pytest.approx(q.get(b, 0.0)), (D, a, b)


def test_determinism_modulo_rng():
    clf = bijection_learner(6).train(Dataset([(1, 2), (3, 4)]))
    a = [clf.classify(0, np.random.default_rng(9)) for _ in range(5)]
    b = [clf.classify(0, np.random.default_rng(9)) for _ in range(5)]
    assert a == b


class TestGaussian:
    def test_nearest_mean(self):
        clf = gaussian_learner(2, 1).train(Dataset([((0.0,), 0), ((4.0,), 1)]))
        assert clf.classify((1.0,)) == 0

    def test_single_populated_class(self):
        clf = gaussian_learner(2, 1).train(Dataset([((0.0,), 0), ((2.0,), 0)]))
        assert clf.classify((100.0,)) == 0

    def test_empty_uniform(self):
        clf = gaussian_learner(2, 1).train(Dataset())
        assert clf.predict_proba((0.0,)) == {0: 0.5, 1: 0.5}
        freq = empirical(clf, (0.0,))
        assert abs(freq[0] - 0.5) < 0.03

    def test_means_are_per_class_averages(self):
        clf = gaussian_learner(3, 2).train(Dataset([((0.0, 0.0), 2), ((2.0, 2.0), 2), ((5.0, 5.0), 0)]))
        assert list(clf.labels) == [0, 2]
        np.testing.assert_allclose(clf.means, [[5.0, 5.0], [1.0, 1.0]])

    def test_batch_matches_scalar(self, rng):
        clf = gaussian_learner(3, 2).train(Dataset([((0.0, 0.0), 0), ((3.0, 0.0), 1), ((0.0, 3.0), 2)]))
        X = rng.normal(size=(50, 2)) * 3
        assert list(clf.classify_many(X)) == [clf.classify(tuple(x)) for x in X]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gaussian_learner(2, 2).train(Dataset([((0.0,), 0)]))


class TestRadiusNN:
    def test_single_neighbour(self):
        clf = radius_nn_learner(1.0, 2).train(Dataset([((0.0, 0.0), 1)]))
        assert clf.classify((0.5, 0.3)) == 1

    def test_empty_ball_abstains(self):
        clf = radius_nn_learner(1.0, 2).train(Dataset([((0.0, 0.0), 1)]))
        assert clf.classify((2.0, 2.0)) is ABSTAIN

    def test_majority_in_ball(self):
        clf = radius_nn_learner(0.25, 2).train(Dataset([((0.0,), 0), ((0.1,), 0), ((0.2,), 1)]))
        assert clf.classify((0.1,)) == 0

    def test_uses_l1_not_l2(self):
        # l1 distance 1.4 > r = 1.2 although l2 distance is ~1.0
        clf = radius_nn_learner(1.2, 2).train(Dataset([((0.0, 0.0), 1)]))
        assert clf.classify((0.7, 0.7)) is ABSTAIN

    def test_tie_to_smaller(self):
        clf = radius_nn_learner(5.0, 3).train(Dataset([((0.0,), 2), ((1.0,), 1)]))
        assert clf.classify((0.5,)) == 1

    def test_empty_training_set(self):
        assert radius_nn_learner(1.0, 2).train(Dataset()).classify((0.0,)) is ABSTAIN

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            radius_nn_learner(0.0, 2)

    def test_abstain_is_not_a_label(self):
        assert all(ABSTAIN != y for y in range(10))


@pytest.mark.parametrize("obj", [
    {"name": "bijection", "params": {"k": 4}},
    {"name": "memorization", "params": {"m": 5, "k": 3}},
    {"name": "gaussian", "params": {"k": 2, "d": 3}},
    {"name": "radius_nn", "params": {"r": 0.5, "k": 2}},
])
def test_learner_json_round_trip(obj):
    learner = learner_from_json(obj)
    assert learner.to_json() == obj
    assert learner_from_json(learner.to_json()).to_json() == obj


def test_unknown_learner():
    with pytest.raises(ValueError):
        learner_from_json({"name": "svm"})
