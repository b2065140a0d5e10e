"""Fleet model: an ego vehicle, its neighbors, per-segment timing, mode-dependent
information exchange, network-load accounting and the end-to-end experiment run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import classifiers
from .classifiers import LabelerProfile, TrainingSet, build_profile
from .config import LoadModel, RunConfig
from .core import EGO_ID, InvariantError, Label, Mode, Sample, ValidationError
from .dataset import Dataset, Partition, load_csv, partition, synthesize
from .integration import (
    AggregatedSample,
    Contribution,
    Method,
    WaWeights,
    integrate,
    labeling_accuracy,
)
from .selection import POLICIES, CandidatePool

log = logging.getLogger(__name__)

SEGMENT_GAP = 1.0


@dataclass(frozen=True, eq=False)
class FleetTopology:
    """``profiles[0]`` is the ego; ``schedule[i, j]`` is when vehicle j passed segment i."""

    profiles: tuple[LabelerProfile, ...]
    schedule: np.ndarray
    seed: int

    @property
    def ego(self) -> LabelerProfile:
        return self.profiles[0]

    @property
    def neighbors(self) -> tuple[LabelerProfile, ...]:
        return self.profiles[1:]

    @property
    def num_segments(self) -> int:
        return self.schedule.shape[0]


@dataclass(frozen=True, eq=False)
class Payload:
    """What one neighbor ships for an event: a label, a feature vector, or both."""

    source: int
    time: float
    label: Label | None = None
    data: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class CooperationEvent:
    segment: int
    mode: Mode
    ego_sample: Sample
    payloads: tuple[Payload, ...]
    ground_truth: Label
    # ego's own labels for received data (data mode only), aligned with payloads
    ego_data_labels: tuple[Label, ...] = ()

    @property
    def num_features(self) -> int:
        return len(self.ego_sample.data)


@dataclass(frozen=True)
class MetricsRow:
    step: int
    online_size: int
    mode: str
    method: str
    policy: str
    seed: int
    labeling_accuracy: float
    classification_accuracy: float
    cum_bytes: int


CSV_HEADER = (
    "step",
    "online_size",
    "mode",
    "method",
    "policy",
    "seed",
    "labeling_accuracy",
    "classification_accuracy",
    "cum_bytes",
)


@dataclass(frozen=True)
class RunMetrics:
    rows: tuple[MetricsRow, ...]
    n_star: int = 0
    target_met: bool = False
    offline_accuracies: tuple[float, ...] = ()
    ego_kind: str = ""

    def __post_init__(self):
        for prev, cur in zip(self.rows, self.rows[1:]):
            if cur.step <= prev.step or cur.cum_bytes < prev.cum_bytes:
                raise InvariantError("metrics rows must have increasing steps and non-decreasing bytes")


def build_topology(
    profiles: Sequence[LabelerProfile],
    num_segments: int,
    delta_max: float,
    seed: int,
) -> FleetTopology:
    """Ego reaches segment i at ``i * SEGMENT_GAP``; each neighbor passed it
    Uniform(0, delta_max] earlier."""
    if delta_max < 0:
        raise ValidationError(f"delta_max must be >= 0, got {delta_max}")
    if not profiles:
        raise ValidationError("need at least the ego profile")
    if num_segments < 0:
        raise ValidationError("num_segments must be >= 0")
    rng = np.random.default_rng(seed)
    t_ego = np.arange(num_segments, dtype=np.float64) * SEGMENT_GAP
    # 1 - U with U in [0, 1) gives a lag in (0, delta_max]
    lag = delta_max * (1.0 - rng.random((num_segments, len(profiles) - 1)))
    schedule = np.hstack([t_ego[:, None], t_ego[:, None] - lag])
    schedule.setflags(write=False)
    return FleetTopology(tuple(profiles), schedule, seed)


def _neighbor_view(topology: FleetTopology, x: np.ndarray, segment: int, j: int) -> np.ndarray:
    sigma = topology.profiles[j].noise
    if sigma == 0:
        return x.copy()
    rng = np.random.default_rng([topology.seed, segment, j])
    return x + sigma * rng.standard_normal(x.shape)


def generate_events(
    topology: FleetTopology,
    X: np.ndarray,
    y: Sequence[int],
    segments: Sequence[int],
    mode: Mode,
) -> list[CooperationEvent]:
    """Batch form of :func:`generate_event`; gives identical events."""
    mode = Mode(mode)
    X = np.asarray(X, dtype=np.float64)
    segments = [int(s) for s in segments]
    if len(X) != len(segments) or len(y) != len(segments):
        raise ValidationError("X, y and segments must align")
    for s in segments:
        if not 0 <= s < topology.num_segments:
            raise ValidationError(f"segment {s} is not scheduled")
    if len(segments) == 0:
        return []
    ego_model = topology.ego.model
    ego_labels = ego_model.predict_many(X)
    J = len(topology.neighbors)
    neighbor_labels = None
    if mode in (Mode.LABELS, Mode.SAMPLES) and J:
        neighbor_labels = np.stack([p.model.predict_many(X) for p in topology.neighbors], axis=1)
    views = None
    if mode in (Mode.DATA, Mode.SAMPLES) and J:
        views = np.stack(
            [[_neighbor_view(topology, X[r], s, j) for j in range(1, J + 1)] for r, s in enumerate(segments)]
        )
    data_labels = None
    if mode is Mode.DATA and J:
        data_labels = ego_model.predict_many(views.reshape(-1, X.shape[1])).reshape(len(X), J)

    events = []
    for r, s in enumerate(segments):
        times = topology.schedule[s]
        payloads = tuple(
            Payload(
                source=j,
                time=float(times[j]),
                label=Label(int(neighbor_labels[r, j - 1])) if neighbor_labels is not None else None,
                data=views[r, j - 1] if views is not None else None,
            )
            for j in range(1, J + 1)
        )
        events.append(
            CooperationEvent(
                segment=s,
                mode=mode,
                ego_sample=Sample(X[r], Label(int(ego_labels[r])), float(times[0]), EGO_ID),
                payloads=payloads,
                ground_truth=Label(int(y[r])),
                ego_data_labels=tuple(Label(int(v)) for v in data_labels[r]) if data_labels is not None else (),
            )
        )
    return events


def generate_event(topology: FleetTopology, pool_sample, segment: int, mode: Mode) -> CooperationEvent:
    """One road-segment event built from a ``(features, label)`` pair.

    Labels mode: neighbors label the event's vector with their own models.
    Data mode: neighbors ship noisy views and the ego labels them itself.
    Samples mode: neighbors ship both their labels and their views.
    """
    x, y = pool_sample
    return generate_events(topology, np.asarray(x, dtype=np.float64)[None, :], [int(y)], [segment], mode)[0]


def account_load(event: CooperationEvent, mode: Mode, load: LoadModel = LoadModel()) -> int:
    """Bytes received by the ego for this event."""
    mode = Mode(mode)
    J = len(event.payloads)
    per = load.header_bytes
    if mode in (Mode.LABELS, Mode.SAMPLES):
        per += load.label_bytes
    if mode in (Mode.DATA, Mode.SAMPLES):
        per += event.num_features * load.feature_bytes_per_dim
    return J * per


def contributions(event: CooperationEvent, topology: FleetTopology) -> list[Contribution]:
    ego = event.ego_sample
    out = [Contribution(EGO_ID, ego.label, ego.time, topology.ego.offline_accuracy)]
    if event.mode is Mode.DATA:
        for p, lbl in zip(event.payloads, event.ego_data_labels):
            out.append(Contribution(EGO_ID, lbl, p.time, topology.ego.offline_accuracy))
    else:
        for p in event.payloads:
            out.append(Contribution(p.source, p.label, p.time, topology.profiles[p.source].offline_accuracy))
    return out


def aggregate_event(
    event: CooperationEvent,
    topology: FleetTopology,
    method: Method,
    decay: float = 1.0,
    weights: WaWeights = WaWeights(),
    load: LoadModel = LoadModel(),
) -> AggregatedSample:
    label, quality = integrate(method, contributions(event, topology), event.ego_sample.time, decay, weights)
    data = [event.ego_sample.data]
    origins = [(EGO_ID, event.ego_sample.time)]
    for p in event.payloads:
        if p.data is not None:
            data.append(p.data)
            origins.append((p.source, p.time))
    return AggregatedSample(
        data=tuple(data),
        label=label,
        quality=quality,
        method=Method(method),
        segment=event.segment,
        origins=tuple(origins),
        ground_truth=event.ground_truth,
        load_bytes=account_load(event, event.mode, load),
    )


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything about a run that depends on the seed but not on mode/method/policy."""

    dataset: Dataset
    split: Partition
    profiles: tuple[LabelerProfile, ...]
    topology: FleetTopology
    seed: int
    events: int
    offline_accuracies: tuple[float, ...] = field(default=())


def load_dataset(config: RunConfig, seed: int) -> Dataset:
    dc = config.dataset
    if dc.synthetic is not None:
        s = dc.synthetic
        ds = synthesize(s.classes, s.features, s.per_class, s.spread, seed if s.seed is None else s.seed)
    else:
        ds = load_csv(dc.path, dc.label_column, dc.header)
    return ds.minmax_scaled() if dc.scale else ds


def _pick_ego(config: RunConfig, accs: Sequence[float]) -> int:
    if config.ego == "lq":
        return int(np.argmin(accs))
    if config.ego == "hq":
        return int(np.argmax(accs))
    return int(config.ego)


def prepare(config: RunConfig, seed: int) -> Setup:
    ds = load_dataset(config, seed)
    test_size = config.test_size if config.test_size is not None else max(1, round(0.2 * len(ds)))
    split = partition(ds, config.offline_size, test_size, seed)
    off = np.array(split.offline)
    X_off, y_off = ds.X[off], ds.y[off]

    trained = [
        build_profile(i, pc.classifier_kind(), X_off, y_off, ds.num_classes, seed, pc.noise, config.holdout)
        for i, pc in enumerate(config.profiles)
    ]
    accs = [p.offline_accuracy for p in trained]
    ego = _pick_ego(config, accs)
    others = [i for i in range(len(trained)) if i != ego][: config.neighbors]
    fleet = [trained[ego]] + [trained[i] for i in others]
    fleet = tuple(LabelerProfile(vid, p.kind, p.model, p.offline_accuracy, p.noise) for vid, p in enumerate(fleet))

    n_events = len(split.online_pool) if config.events is None else min(config.events, len(split.online_pool))
    topology = build_topology(fleet, n_events + len(split.test), config.delta_max, seed)
    log.debug("seed %d: offline accuracies %s, ego=%s", seed, accs, fleet[0].kind.name)
    return Setup(ds, split, fleet, topology, seed, n_events, tuple(accs))


def run_experiment(config: RunConfig, seed: int, setup: Setup | None = None) -> RunMetrics:
    """One seed of one (mode, method, policy) configuration.

    Pool events occupy segments ``0..events-1`` and test events follow. The
    labeling accuracy column is the integration accuracy on the test events;
    classification accuracy is the ego's test accuracy after each selection.
    """
    if setup is None:
        setup = prepare(config, seed)
    ds, split, topo = setup.dataset, setup.split, setup.topology
    mode = config.mode
    method = config.integration.resolved_method()
    decay, weights = config.integration.decay, config.integration.weights()

    test_idx = np.array(split.test)
    test_segments = range(setup.events, setup.events + len(test_idx))
    test_events = generate_events(topo, ds.X[test_idx], ds.y[test_idx], test_segments, mode)
    test_agg = [aggregate_event(e, topo, method, decay, weights, config.load) for e in test_events]
    la = labeling_accuracy([a.label for a in test_agg], [e.ground_truth for e in test_events])

    ego = topo.ego
    test_set = (ds.X[test_idx], ds.y[test_idx])
    baseline = classifiers.measure_accuracy(ego.model, test_set)

    def row(step, acc, cum):
        return MetricsRow(step, step, mode.value, method.value, config.policy, seed, la, acc, cum)

    rows = [row(0, baseline, 0)]
    if setup.events == 0:
        return RunMetrics(tuple(rows), 0, False, setup.offline_accuracies, ego.kind.name)

    pool_idx = np.array(split.online_pool[: setup.events])
    pool_events = generate_events(topo, ds.X[pool_idx], ds.y[pool_idx], range(setup.events), mode)
    pool = CandidatePool(tuple(aggregate_event(e, topo, method, decay, weights, config.load) for e in pool_events))

    off = np.array(split.offline)
    training = TrainingSet(ds.X[off], ds.y[off])
    outcome = POLICIES[config.policy](
        pool, ego, training, test_set, alpha=config.alpha, max_steps=config.max_steps, seed=seed
    )
    cum = 0
    for step, (i, acc) in enumerate(zip(outcome.chosen, outcome.accuracies), start=1):
        cum += pool.candidates[i].load_bytes
        rows.append(row(step, acc, cum))
    return RunMetrics(tuple(rows), outcome.n_star, outcome.target_met, setup.offline_accuracies, ego.kind.name)
