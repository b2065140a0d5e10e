"""Training-sample selection: quality/diversity scores, QDS and the RS / MVQS baselines.

All three policies share one loop: pick a candidate, append its data to the
online set, retrain the learner, measure test accuracy, stop once the target
accuracy is reached or the pool / step budget runs out.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .classifiers import LabelerProfile, TrainingSet, measure_accuracy, retrain_with
from .core import Label, ValidationError
from .integration import AggregatedSample


@dataclass(frozen=True, eq=False)
class CandidatePool:
    candidates: tuple[AggregatedSample, ...]
    selected: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if len(set(self.selected)) != len(self.selected):
            raise ValidationError("candidate selected twice")
        if any(not 0 <= i < len(self.candidates) for i in self.selected):
            raise ValidationError("selected index out of range")

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def remaining(self) -> tuple[int, ...]:
        taken = set(self.selected)
        return tuple(i for i in range(len(self.candidates)) if i not in taken)

    def take(self, i: int) -> "CandidatePool":
        return CandidatePool(self.candidates, self.selected + (i,))

    def selected_labels(self) -> list[Label]:
        return [self.candidates[i].label for i in self.selected]

    def available_classes(self) -> set[Label]:
        return {self.candidates[i].label for i in self.remaining}


@dataclass(frozen=True)
class SelectionOutcome:
    """Result of one selection run.

    ``accuracies[s]`` is the test accuracy after ``s + 1`` selections;
    ``baseline_accuracy`` is the accuracy before any selection.
    """

    chosen: tuple[int, ...]
    n_star: int
    achieved_accuracy: float
    target_met: bool
    accuracies: tuple[float, ...] = ()
    baseline_accuracy: float = float("nan")


def quality_score(selected: Sequence[float]) -> float:
    if len(selected) == 0:
        raise ValidationError("quality score of an empty selection is undefined")
    return math.fsum(selected) / len(selected)


def _entropy_of_counts(counts: Iterable[int]) -> float:
    # sorted so that permuted count vectors give bit-identical results
    nz = sorted(c for c in counts if c > 0)
    n = sum(nz)
    if n == 0:
        return 0.0
    return max(0.0, -math.fsum((c / n) * math.log2(c / n) for c in nz))


def diversity_score(selected_labels: Sequence[Label], K: int) -> float:
    """Base-2 Shannon entropy of the class proportions in ``selected_labels``."""
    if K < 1:
        raise ValidationError("K must be >= 1")
    counts = Counter(int(l) for l in selected_labels)
    if any(not 0 <= k < K for k in counts):
        raise ValidationError(f"label outside [0, {K})")
    return _entropy_of_counts(counts.values())


def select_class(current_labels: Sequence[Label], available_classes: Iterable[Label], K: int) -> Label:
    """Class whose one-sample addition maximizes entropy; ties go to the lowest index."""
    available = sorted({int(k) for k in available_classes})
    if not available:
        raise ValidationError("no class has remaining candidates")
    counts = [0] * K
    for l in current_labels:
        counts[int(l)] += 1
    best, best_h = None, -1.0
    for k in available:
        counts[k] += 1
        h = _entropy_of_counts(counts)
        counts[k] -= 1
        if h > best_h:
            best, best_h = k, h
    return Label(best)


def select_sample(pool: CandidatePool, k_star: Label) -> int:
    best, best_q = None, -1.0
    for i in pool.remaining:
        c = pool.candidates[i]
        if c.label == k_star and c.quality > best_q:
            best, best_q = i, c.quality
    if best is None:
        raise ValidationError(f"no remaining candidate of class {int(k_star)}")
    return best


def qds_next(pool: CandidatePool, K: int) -> int:
    k_star = select_class(pool.selected_labels(), pool.available_classes(), K)
    return select_sample(pool, k_star)


def mvqs_order(qualities: Sequence[float]) -> list[int]:
    """Indices by descending quality, ties in index order."""
    return sorted(range(len(qualities)), key=lambda i: -qualities[i])


def _ordered_policy(order: Sequence[int]) -> Callable[[CandidatePool, int], int]:
    def next_index(pool: CandidatePool, K: int) -> int:
        taken = set(pool.selected)
        return next(i for i in order if i not in taken)

    return next_index


def run_policy(
    next_index: Callable[[CandidatePool, int], int],
    pool: CandidatePool,
    learner: LabelerProfile,
    training: TrainingSet,
    test_set,
    alpha: float,
    max_steps: int | None = None,
    seed: int = 0,
) -> SelectionOutcome:
    if len(pool.remaining) == 0:
        raise ValidationError("candidate pool is empty")
    X_test, y_test = test_set
    if len(y_test) == 0:
        raise ValidationError("test set is empty")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    limit = len(pool.remaining) if max_steps is None else min(max_steps, len(pool.remaining))
    if limit < 1:
        raise ValidationError("max_steps must be >= 1")

    K = learner.model.num_classes
    baseline = measure_accuracy(learner.model, (X_test, y_test))
    accuracies: list[float] = []
    acc = baseline
    while len(accuracies) < limit:
        i = next_index(pool, K)
        pool = pool.take(i)
        training = training.extended(pool.candidates[i].training_samples())
        model = retrain_with(learner.model, training, seed)
        acc = measure_accuracy(model, (X_test, y_test))
        accuracies.append(acc)
        if acc >= alpha:
            break
    return SelectionOutcome(
        chosen=pool.selected,
        n_star=len(pool.selected),
        achieved_accuracy=acc,
        target_met=acc >= alpha,
        accuracies=tuple(accuracies),
        baseline_accuracy=baseline,
    )


def qds_run(pool, learner, training, test_set, alpha=0.95, max_steps=None, seed=0) -> SelectionOutcome:
    """Quality-diversity selection: most-diverse class first, best quality within it."""
    return run_policy(qds_next, pool, learner, training, test_set, alpha, max_steps, seed)


def baseline_rs(pool, learner, training, test_set, alpha=0.95, max_steps=None, seed=0) -> SelectionOutcome:
    order = np.random.default_rng(seed).permutation(len(pool)).tolist()
    return run_policy(_ordered_policy(order), pool, learner, training, test_set, alpha, max_steps, seed)


def baseline_mvqs(pool, learner, training, test_set, alpha=0.95, max_steps=None, seed=0) -> SelectionOutcome:
    order = mvqs_order([c.quality for c in pool.candidates])
    return run_policy(_ordered_policy(order), pool, learner, training, test_set, alpha, max_steps, seed)


POLICIES = {"qds": qds_run, "rs": baseline_rs, "mvqs": baseline_mvqs}
