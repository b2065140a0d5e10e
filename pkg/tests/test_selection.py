import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopal.classifiers import LabelerProfile, TrainingSet, TreeMedium, WeightedKnn, train
from coopal.core import Label, ValidationError
from coopal.dataset import synthesize
from coopal.integration import AggregatedSample, Method
from coopal.selection import (
    CandidatePool,
    baseline_mvqs,
    baseline_rs,
    diversity_score,
    mvqs_order,
    qds_run,
    quality_score,
    select_class,
    select_sample,
)

from oracles import entropy_bits, label_states, select_class_oracle


def make_pool(labels, qualities, X=None):
    if X is None:
        X = np.zeros((len(labels), 2))
    return CandidatePool(
        tuple(
            AggregatedSample(
                data=(X[i],),
                label=Label(int(l)),
                quality=float(q),
                method=Method.WA,
                segment=i,
                origins=((0, float(i)),),
            )
            for i, (l, q) in enumerate(zip(labels, qualities))
        )
    )


L = [Label(k) for k in range(4)]


class TestScores:
    def test_quality_mean(self):
        assert quality_score([0.5, 0.7, 0.9]) == pytest.approx(0.7)
        assert quality_score([1.0]) == 1.0
        assert quality_score([0.3] * 7) == pytest.approx(0.3)
        with pytest.raises(ValidationError):
            quality_score([])

    def test_entropy_examples(self):
        assert diversity_score(L, 4) == 2.0
        assert diversity_score([L[2]] * 5, 4) == 0.0
        assert diversity_score([L[0], L[0], L[1], L[2]], 3) == pytest.approx(1.5)
        assert diversity_score([], 4) == 0.0

    @given(st.lists(st.integers(0, 3), max_size=30))
    def test_entropy_bounds_and_oracle(self, labels):
        h = diversity_score([Label(k) for k in labels], 4)
        assert 0.0 <= h <= math.log2(4) + 1e-12
        assert h == pytest.approx(entropy_bits(labels), abs=1e-12)


class TestSelectClass:
    def test_fills_least_represented(self):
        current = [L[0]] * 3 + [L[1], L[2], L[3]]
        assert select_class(current, set(L), 4) == L[1]

    def test_empty_start(self):
        assert select_class([], set(L), 4) == L[0]

    def test_forced_choice(self):
        assert select_class([L[0]] * 5, {L[0]}, 4) == L[0]

    def test_nothing_available(self):
        with pytest.raises(ValidationError):
            select_class([], set(), 4)

    def test_matches_brute_force_exhaustively(self):
        for K in range(1, 5):
            subsets = [
                {k for k in range(K) if mask >> k & 1} for mask in range(1, 2 ** K)
            ]
            for state in label_states(12, K):
                current = [Label(k) for k in state]
                for avail in subsets:
                    got = select_class(current, {Label(k) for k in avail}, K)
                    assert int(got) == select_class_oracle(state, avail), (state, avail)


class TestSelectSample:
    def test_best_quality(self):
        pool = make_pool([1, 1, 1, 0], [0.4, 0.9, 0.6, 1.0])
        assert select_sample(pool, L[1]) == 1

    def test_single(self):
        assert select_sample(make_pool([2], [0.1]), L[2]) == 0

    def test_tie_lowest_index(self):
        assert select_sample(make_pool([0, 3, 3], [0.9, 0.8, 0.8]), L[3]) == 1

    def test_skips_taken(self):
        pool = make_pool([1, 1], [0.9, 0.5]).take(0)
        assert select_sample(pool, L[1]) == 1


def test_mvqs_order():
    assert mvqs_order([0.9, 0.2, 0.7]) == [0, 2, 1]
    assert mvqs_order([0.5] * 4) == [0, 1, 2, 3]


@pytest.fixture(scope="module")
def separable():
    """Tight clusters; the offline base only covers classes 0 and 1."""
    ds = synthesize(4, 18, 30, 0.01, 42)
    base = np.flatnonzero(ds.y < 2)[:10]
    rest = np.setdiff1d(np.arange(len(ds)), base)
    pool_idx, test_idx = rest[:60], rest[60:]
    model = train(WeightedKnn(k=1), (ds.X[base], ds.y[base]), 0, num_classes=4)
    learner = LabelerProfile(0, model.kind, model, 0.5)
    rng = np.random.default_rng(0)
    pool = make_pool(ds.y[pool_idx], rng.uniform(0.2, 1.0, len(pool_idx)), ds.X[pool_idx])
    return dict(
        pool=pool,
        learner=learner,
        training=TrainingSet(ds.X[base], ds.y[base]),
        test=(ds.X[test_idx], ds.y[test_idx]),
    )


POLICIES = [qds_run, baseline_mvqs, lambda *a, **k: baseline_rs(*a, seed=3, **{x: v for x, v in k.items() if x != "seed"})]


@pytest.mark.parametrize("policy", POLICIES, ids=["qds", "mvqs", "rs"])
def test_alpha_zero_stops_after_one(separable, policy):
    s = separable
    out = policy(s["pool"], s["learner"], s["training"], s["test"], alpha=0.0)
    assert out.n_star == 1 and out.target_met
    assert len(out.accuracies) == 1


@pytest.mark.parametrize("policy", POLICIES, ids=["qds", "mvqs", "rs"])
def test_single_candidate_exhausts(separable, policy):
    s = separable
    one = CandidatePool(s["pool"].candidates[:1])
    out = policy(one, s["learner"], s["training"], s["test"], alpha=1.0)
    assert out.n_star == 1
    assert not out.target_met


def test_empty_inputs_rejected(separable):
    s = separable
    with pytest.raises(ValidationError):
        qds_run(CandidatePool(()), s["learner"], s["training"], s["test"])
    with pytest.raises(ValidationError):
        qds_run(s["pool"], s["learner"], s["training"], (s["test"][0][:0], s["test"][1][:0]))


def _class_balance_ok(pool, chosen, K):
    for step in range(1, len(chosen) + 1):
        taken = set(chosen[:step])
        counts = np.bincount([int(pool.candidates[i].label) for i in chosen[:step]], minlength=K)
        open_ = {int(pool.candidates[i].label) for i in range(len(pool)) if i not in taken}
        live = [counts[k] for k in range(K) if k in open_]
        if live and max(live) - min(live) > 1:
            return False
    return True


def test_qds_reaches_target_balanced(separable):
    s = separable
    out = qds_run(s["pool"], s["learner"], s["training"], s["test"], alpha=0.95)
    assert out.target_met and out.n_star <= len(s["pool"])
    assert out.n_star == len(out.accuracies) == len(out.chosen)
    assert _class_balance_ok(s["pool"], out.chosen, 4)
    # within each class the picks come in descending quality
    for k in range(4):
        qs = [s["pool"].candidates[i].quality for i in out.chosen if int(s["pool"].candidates[i].label) == k]
        assert qs == sorted(qs, reverse=True)


@pytest.fixture(scope="module")
def hard():
    ds = synthesize(4, 8, 40, 3.0, 5)
    base = np.arange(12)
    if len(set(ds.y[base].tolist())) < 2:
        pytest.skip("degenerate base")
    pool_idx, test_idx = np.arange(12, 92), np.arange(92, 160)
    model = train(TreeMedium(), (ds.X[base], ds.y[base]), 0, num_classes=4)
    learner = LabelerProfile(0, model.kind, model, 0.4)
    # class 0 holds every top-quality candidate
    q = np.where(ds.y[pool_idx] == 0, 0.95, np.linspace(0.2, 0.6, len(pool_idx)))
    pool = make_pool(ds.y[pool_idx], q, ds.X[pool_idx])
    return pool, learner, TrainingSet(ds.X[base], ds.y[base]), (ds.X[test_idx], ds.y[test_idx])


def test_qds_balance_on_skewed_pool(hard):
    pool, learner, training, test = hard
    out = qds_run(pool, learner, training, test, alpha=1.0, max_steps=40)
    assert _class_balance_ok(pool, out.chosen, 4)


def test_mvqs_less_diverse_than_qds(hard):
    pool, learner, training, test = hard
    half = math.ceil(len(pool) / 2)
    q = qds_run(pool, learner, training, test, alpha=1.0, max_steps=half)
    m = baseline_mvqs(pool, learner, training, test, alpha=1.0, max_steps=half)
    assert len(q.chosen) == len(m.chosen) == half
    h = lambda chosen: diversity_score([pool.candidates[i].label for i in chosen], 4)
    assert h(m.chosen) <= h(q.chosen)
    assert m.chosen == tuple(mvqs_order([c.quality for c in pool.candidates])[:half])


def test_rs_is_seeded(hard):
    pool, learner, training, test = hard
    a = baseline_rs(pool, learner, training, test, alpha=1.0, max_steps=15, seed=9)
    b = baseline_rs(pool, learner, training, test, alpha=1.0, max_steps=15, seed=9)
    c = baseline_rs(pool, learner, training, test, alpha=1.0, max_steps=15, seed=10)
    assert a == b
    assert a.chosen != c.chosen


def test_qds_deterministic(hard):
    pool, learner, training, test = hard
    assert qds_run(pool, learner, training, test, 1.0, 20) == qds_run(pool, learner, training, test, 1.0, 20)
