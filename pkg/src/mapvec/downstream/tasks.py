"""Downstream task definitions: heads, label builders, compatibility rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import torch
from torch import nn

from ..data.model import Dataset, Trajectory
from ..data.networks import haversine_m
from ..data.synth import parcel_of_point
from ..encoders.codec import FeatureCodec
from ..encoders.sequence import slot_of_timestamp
from ..encoders.token import _uniform, glorot
from ..errors import LeakageError, UsageError
from ..pretrain.heads import PairScorer
from .sts import generate_detour

DOWNSTREAM_TASKS = ("poic", "npp", "tul", "asi", "tte", "sts", "lpc", "fi", "mi")

TASK_ENTITY = {
    "poic": "point",
    "npp": "point",
    "tul": "point",
    "asi": "polyline",
    "tte": "polyline",
    "sts": "polyline",
    "lpc": "polygon",
    "fi": "polygon",
    "mi": "polygon",
}

TASK_METRIC_KIND = {
    "poic": "classification",
    "npp": "classification",
    "tul": "classification",
    "lpc": "classification",
    "asi": "regression",
    "tte": "regression",
    "fi": "regression",
    "mi": "regression",
    "sts": "retrieval",
}

# Feature that doubles as the task's label and must stay out of the codec.
TASK_LABEL_FEATURE = {"poic": "category", "lpc": "category", "asi": "speed"}


class MlpClassifier(nn.Module):
    def __init__(self, dim, classes, hidden=256, seed=0, dtype=torch.float32):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.w1 = nn.Parameter(glorot((dim, hidden), gen, dtype))
        self.b1 = nn.Parameter(torch.zeros(hidden, dtype=dtype))
        self.w2 = nn.Parameter(glorot((hidden, classes), gen, dtype))
        self.b2 = nn.Parameter(torch.zeros(classes, dtype=dtype))

    def forward(self, x):
        return torch.relu(x @ self.w1 + self.b1) @ self.w2 + self.b2


class LinearRegressor(nn.Module):
    def __init__(self, dim, out=1, seed=0, dtype=torch.float32):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.w = nn.Parameter(glorot((dim, out), gen, dtype))
        self.b = nn.Parameter(torch.zeros(out, dtype=dtype))

    def forward(self, x):
        return x @ self.w + self.b


class RecurrentClassifier(nn.Module):
    """GRU over prefix representations; the final state classifies."""

    def __init__(self, dim, classes, hidden=256, seed=0, dtype=torch.float32):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.gru = nn.GRU(input_size=dim, hidden_size=hidden, batch_first=True)
        for p in self.gru.parameters():
            with torch.no_grad():
                p.copy_(_uniform(p.shape, 1.0 / math.sqrt(hidden), gen, dtype))
        if dtype == torch.float64:
            self.gru.double()
        self.out = nn.Parameter(glorot((hidden, classes), gen, dtype))

    def forward(self, x, lengths):
        states, _ = self.gru(x)
        last = states[torch.arange(x.shape[0]), lengths - 1]
        return last @ self.out


@dataclass
class DownstreamTask:
    kind: str
    entity_kind: str
    metric_kind: str
    head: Optional[nn.Module]
    items: list
    classes: list = field(default_factory=list)
    label_std: float = 0.0
    # Source key per item (entity id, trajectory id, or OD pair); aligned with
    # ``items`` and used to keep pretraining inside the training partition.
    item_keys: list = field(default_factory=list)
    # Regression heads work in standardized target space; fine-tuning fits
    # these to the training labels and evaluation undoes the transform.
    target_mean: float = 0.0
    target_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in DOWNSTREAM_TASKS:
            raise UsageError(f"unknown downstream task {self.kind!r}")

    def raw_targets(self, items) -> list[float]:
        if self.metric_kind != "regression":
            raise UsageError("raw_targets applies to regression tasks")
        if self.kind == "fi":
            return [v for _, i, o in items for v in (i, o)]
        return [it[-1] for it in items]

    def fit_target_scale(self, items) -> None:
        import numpy as np

        values = np.asarray(self.raw_targets(items), dtype=np.float64)
        self.target_mean = float(values.mean())
        std = float(values.std())
        self.target_scale = std if std > 0 else 1.0


def _rows_and_slots(tr: Trajectory, row: dict[str, int], time_slots: int):
    rows = [row[loc] for loc, _ in tr.samples]
    slots = [slot_of_timestamp(t, time_slots) for _, t in tr.samples]
    return rows, slots


def _std(values) -> float:
    import numpy as np

    return float(np.asarray(values, dtype=np.float64).std()) if values else 0.0


def asi_speed_labels(dataset: Dataset) -> dict[str, float]:
    """Per-segment average traversal speed (km/h) derived from trajectory timestamps."""
    segments = {e.id: e for e in dataset.entities_of_kind("polyline")}
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for tr in dataset.trajectories_over("polyline"):
        for (loc, t0), (_, t1) in zip(tr.samples, tr.samples[1:]):
            dt = (t1 - t0).total_seconds()
            if dt <= 0:
                continue
            seg = segments[loc]  # type: ignore[index]
            length = haversine_m(seg.geometry[0], seg.geometry[-1])
            speed_kmh = length / dt * 3.6
            sums[loc] = sums.get(loc, 0.0) + speed_kmh  # type: ignore[index,call-overload]
            counts[loc] = counts.get(loc, 0) + 1  # type: ignore[index,call-overload]
    return {seg: sums[seg] / counts[seg] for seg in sums}


def flow_labels(dataset: Dataset) -> dict[str, tuple[int, int]]:
    """Per-parcel (inflow, outflow) endpoint counts of POI trajectories."""
    parcels = dataset.entities_of_kind("polygon")
    pois = {e.id: e.geometry[0] for e in dataset.entities_of_kind("point")}
    counts = {p.id: [0, 0] for p in parcels}
    for tr in dataset.trajectories_over("point"):
        origin = parcel_of_point(pois[tr.samples[0][0]], parcels)  # type: ignore[index,arg-type]
        dest = parcel_of_point(pois[tr.samples[-1][0]], parcels)  # type: ignore[index,arg-type]
        if origin is not None:
            counts[origin][1] += 1
        if dest is not None:
            counts[dest][0] += 1
    return {pid: (c[0], c[1]) for pid, c in counts.items()}


def od_pair_labels(dataset: Dataset, network_name: str = "parcel_od") -> dict[tuple[str, str], float]:
    if network_name not in dataset.networks:
        raise UsageError(f"dataset has no OD network named {network_name!r}")
    return dict(dataset.networks[network_name].edges)


def build_task(
    kind: str,
    dataset: Dataset,
    codec: FeatureCodec,
    dim: int,
    hidden: int = 256,
    seed: int = 0,
    time_slots: int = 48,
    geo_network: Optional[str] = None,
    dtype=torch.float32,
) -> DownstreamTask:
    """Construct the head and the full labeled item list for one task.

    Item entity rows follow the dataset's entities_of_kind order, matching the
    encoder-side feature matrices.
    """
    if kind not in DOWNSTREAM_TASKS:
        raise UsageError(f"unknown downstream task {kind!r}")
    entity_kind = TASK_ENTITY[kind]
    entities = dataset.entities_of_kind(entity_kind)
    if not entities:
        raise UsageError(f"dataset has no {entity_kind} entities for task {kind}")
    row = {e.id: i for i, e in enumerate(entities)}

    label_feature = TASK_LABEL_FEATURE.get(kind)
    if kind == "asi" and label_feature in codec.feature_names:
        raise LeakageError(
            "the speed label is present in the encoder codec; exclude it before fine-tuning"
        )

    head: Optional[nn.Module] = None
    items: list = []
    classes: list = []
    keys: list = []
    label_std = 0.0

    if kind in ("poic", "lpc"):
        labels = [str(e.features[label_feature]) for e in entities]
        classes = sorted(set(labels))
        class_idx = {c: i for i, c in enumerate(classes)}
        items = [(row[e.id], class_idx[lab]) for e, lab in zip(entities, labels)]
        keys = [e.id for e in entities]
        head = MlpClassifier(dim, len(classes), hidden=hidden, seed=seed, dtype=dtype)

    elif kind == "npp":
        classes = [e.id for e in entities]
        for tr in dataset.trajectories_over("point"):
            if len(tr) < 2:
                continue
            rows, slots = _rows_and_slots(tr, row, time_slots)
            split = -(-len(rows) // 2)
            if split >= len(rows):
                continue
            items.append((rows[:split], slots[:split], rows[split]))
            keys.append(tr.id)
        head = RecurrentClassifier(dim, len(classes), hidden=hidden, seed=seed, dtype=dtype)

    elif kind == "tul":
        trajs = [tr for tr in dataset.trajectories_over("point") if tr.user is not None]
        classes = sorted({tr.user for tr in trajs})
        user_idx = {u: i for i, u in enumerate(classes)}
        for tr in trajs:
            rows, slots = _rows_and_slots(tr, row, time_slots)
            items.append((rows, slots, user_idx[tr.user]))
            keys.append(tr.id)
        head = MlpClassifier(dim, len(classes), hidden=hidden, seed=seed, dtype=dtype)

    elif kind == "asi":
        speed = asi_speed_labels(dataset)
        items = [(row[sid], val) for sid, val in sorted(speed.items())]
        keys = [sid for sid, _ in sorted(speed.items())]
        label_std = _std([v for _, v in items])
        head = LinearRegressor(dim, seed=seed, dtype=dtype)

    elif kind == "tte":
        for tr in dataset.trajectories_over("polyline"):
            if len(tr) < 2:
                continue
            rows, slots = _rows_and_slots(tr, row, time_slots)
            seconds = (tr.samples[-1][1] - tr.samples[0][1]).total_seconds()
            items.append((rows, slots, seconds))
            keys.append(tr.id)
        label_std = _std([s for _, _, s in items])
        head = LinearRegressor(dim, seed=seed, dtype=dtype)

    elif kind == "sts":
        net_name = geo_network or "segment_adjacency"
        if net_name not in dataset.networks:
            raise UsageError(f"dataset has no geographic network named {net_name!r}")
        network = dataset.networks[net_name]
        for n, tr in enumerate(dataset.trajectories_over("polyline")):
            detour = generate_detour(tr, network, seed=seed + n)
            if detour is None:
                continue
            rows, slots = _rows_and_slots(tr, row, time_slots)
            drows, dslots = _rows_and_slots(detour, row, time_slots)
            items.append((rows, slots, drows, dslots, tr.id))
            keys.append(tr.id)

    elif kind == "fi":
        flows = flow_labels(dataset)
        items = [(row[pid], float(inflow), float(outflow)) for pid, (inflow, outflow) in sorted(flows.items())]
        keys = sorted(flows.keys())
        label_std = _std([i for _, i, o in items] + [o for _, i, o in items])
        head = LinearRegressor(dim, out=2, seed=seed, dtype=dtype)

    elif kind == "mi":
        od = od_pair_labels(dataset)
        items = [(row[o], row[d], vol) for (o, d), vol in sorted(od.items())]
        keys = sorted(od.keys())
        label_std = _std([v for _, _, v in items])
        head = PairScorer(dim, hidden=hidden, seed=seed, dtype=dtype)

    if not items:
        raise UsageError(f"task {kind} produced no labeled items on this dataset")
    return DownstreamTask(
        kind=kind,
        entity_kind=entity_kind,
        metric_kind=TASK_METRIC_KIND[kind],
        head=head,
        items=items,
        classes=classes,
        item_keys=keys,
        label_std=label_std,
    )
