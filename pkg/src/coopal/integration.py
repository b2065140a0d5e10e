"""Label integration: freshness, correctness probability, MV / WMV / WA, labeling accuracy."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import Label, Sample, ValidationError

LIKELIHOOD_EPS = 1e-6
# relative tolerance under which two class scores count as tied
TIE_RTOL = 1e-9


class Method(str, enum.Enum):
    MV = "mv"
    WMV = "wmv"
    WMV_LIKELIHOOD = "wmv_likelihood"
    WA = "wa"


class WmvVariant(str, enum.Enum):
    PRODUCT = "product"
    LIKELIHOOD = "likelihood"


@dataclass(frozen=True)
class Contribution:
    labeler: int
    label: Label
    time: float
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValidationError(f"accuracy must lie in [0, 1], got {self.accuracy}")


@dataclass(frozen=True)
class WaWeights:
    a: float = 0.5
    b: float = 0.5

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.a + self.b <= 0:
            raise ValidationError("WA weights need a, b >= 0 with a + b > 0")
        total = self.a + self.b
        object.__setattr__(self, "a", self.a / total)
        object.__setattr__(self, "b", self.b / total)


class Integrated(NamedTuple):
    label: Label
    quality: float


@dataclass(frozen=True, eq=False)
class AggregatedSample:
    """An event's data with its integrated label and quality.

    ``origins`` holds the (vehicle, time) pair of every vector in ``data``;
    ``ground_truth`` is for metrics only and never reaches a learner.
    """

    data: tuple[np.ndarray, ...]
    label: Label
    quality: float
    method: Method
    segment: int = -1
    origins: tuple[tuple[int, float], ...] = ()
    ground_truth: Label | None = None
    load_bytes: int = 0

    def __post_init__(self):
        if not 0.0 <= self.quality <= 1.0:
            raise ValidationError(f"quality must lie in [0, 1], got {self.quality}")
        if self.origins and len(self.origins) != len(self.data):
            raise ValidationError("origins must match data one to one")

    def training_samples(self) -> list[Sample]:
        if not self.origins:
            raise ValidationError("aggregated sample has no origins; cannot form training samples")
        return [Sample(x, self.label, t, src) for x, (src, t) in zip(self.data, self.origins)]


def freshness(t_ego: float, t_j: float, decay: float = 1.0) -> float:
    """exp(-(t_ego - t_j) / decay) for past observations, 0 otherwise."""
    if not decay > 0:
        raise ValidationError(f"decay must be positive, got {decay}")
    if t_ego > t_j:
        return math.exp(-(t_ego - t_j) / decay)
    return 0.0


def correctness_probability(f: float, A: float) -> float:
    if not 0.0 <= f <= 1.0:
        raise ValidationError(f"freshness must lie in [0, 1], got {f}")
    if not 0.0 <= A <= 1.0:
        raise ValidationError(f"accuracy must lie in [0, 1], got {A}")
    return f * A


def _labels_of(contribs) -> list[int]:
    if not contribs:
        raise ValidationError("label integration needs at least one contribution")
    return [int(c.label) for c in contribs]


def _argmax_lowest(scores: dict[int, float]) -> int:
    """Key with the largest score; near-ties go to the lowest key."""
    best = max(scores.values())
    tol = TIE_RTOL * abs(best)
    return min(k for k, v in scores.items() if v >= best - tol)


def integrate_mv(contribs: Sequence[Contribution]) -> Integrated:
    labels = _labels_of(contribs)
    counts: dict[int, int] = {}
    for lbl in labels:
        counts[lbl] = counts.get(lbl, 0) + 1
    top = max(counts.values())
    winner = min(k for k, v in counts.items() if v == top)
    return Integrated(Label(winner), top / len(labels))


def wmv_from_probabilities(
    labels: Sequence[int], probs: Sequence[float], variant: WmvVariant = WmvVariant.PRODUCT
) -> Integrated:
    """Weighted majority vote given each voter's correctness probability.

    Voters with probability 0 carry no evidence and are skipped; if nothing is
    left the plain majority label is returned with quality 0.
    """
    if len(labels) == 0 or len(labels) != len(probs):
        raise ValidationError("need equal, non-zero numbers of labels and probabilities")
    for p in probs:
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"probability must lie in [0, 1], got {p}")
    votes: dict[int, list[float]] = {}
    for lbl, p in zip(labels, probs):
        if p > 0.0:
            votes.setdefault(int(lbl), []).append(float(p))
    if not votes:
        counts: dict[int, int] = {}
        for lbl in labels:
            counts[int(lbl)] = counts.get(int(lbl), 0) + 1
        return Integrated(Label(_argmax_lowest(counts)), 0.0)

    variant = WmvVariant(variant)
    if variant is WmvVariant.PRODUCT:
        scores = {k: math.prod(sorted(ps)) for k, ps in votes.items()}
        winner = _argmax_lowest(scores)
        return Integrated(Label(winner), scores[winner])

    scores = {}
    for k, ps in votes.items():
        clamped = [min(max(p, LIKELIHOOD_EPS), 1.0 - LIKELIHOOD_EPS) for p in sorted(ps)]
        scores[k] = math.fsum(math.log(p / (1.0 - p)) for p in clamped)
    winner = _argmax_lowest(scores)
    top = scores[winner]
    z = math.fsum(math.exp(s - top) for s in scores.values())
    return Integrated(Label(winner), 1.0 / z)


def integrate_wmv(
    contribs: Sequence[Contribution],
    t_ego: float,
    decay: float = 1.0,
    variant: WmvVariant = WmvVariant.PRODUCT,
) -> Integrated:
    labels = _labels_of(contribs)
    probs = [correctness_probability(freshness(t_ego, c.time, decay), c.accuracy) for c in contribs]
    return wmv_from_probabilities(labels, probs, variant)


def wa_from_lambdas(labels: Sequence[int], lambdas: Sequence[float]) -> Integrated:
    """Weighted average vote with weight exp(lambda); quality is the winner's share of total weight."""
    if len(labels) == 0 or len(labels) != len(lambdas):
        raise ValidationError("need equal, non-zero numbers of labels and weights")
    per_class: dict[int, list[float]] = {}
    for lbl, lam in zip(labels, lambdas):
        per_class.setdefault(int(lbl), []).append(math.exp(lam))
    scores = {k: math.fsum(ws) for k, ws in per_class.items()}
    winner = _argmax_lowest(scores)
    total = math.fsum(scores.values())
    return Integrated(Label(winner), min(1.0, scores[winner] / total))


def integrate_wa(
    contribs: Sequence[Contribution],
    t_ego: float,
    decay: float = 1.0,
    weights: WaWeights = WaWeights(),
) -> Integrated:
    labels = _labels_of(contribs)
    lambdas = [weights.a * freshness(t_ego, c.time, decay) + weights.b * c.accuracy for c in contribs]
    return wa_from_lambdas(labels, lambdas)


def integrate(
    method: Method,
    contribs: Sequence[Contribution],
    t_ego: float,
    decay: float = 1.0,
    weights: WaWeights = WaWeights(),
) -> Integrated:
    method = Method(method)
    if method is Method.MV:
        return integrate_mv(contribs)
    if method is Method.WMV:
        return integrate_wmv(contribs, t_ego, decay, WmvVariant.PRODUCT)
    if method is Method.WMV_LIKELIHOOD:
        return integrate_wmv(contribs, t_ego, decay, WmvVariant.LIKELIHOOD)
    return integrate_wa(contribs, t_ego, decay, weights)


def labeling_accuracy(aggregates: Sequence[Label], ground_truth: Sequence[Label]) -> float:
    if len(aggregates) == 0 or len(aggregates) != len(ground_truth):
        raise ValidationError("labeling accuracy needs equal, non-zero numbers of labels")
    hits = sum(1 for a, g in zip(aggregates, ground_truth) if int(a) == int(g))
    return hits / len(aggregates)
