"""Feature codec: categorical vocabularies and equal-width bins to one-hot blocks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ..data.model import MapEntity
from ..errors import FormatError, UsageError

DEFAULT_BINS = 16


@dataclass
class CategoricalScheme:
    vocab: list[str]
    oov: bool = True

    @property
    def width(self) -> int:
        return len(self.vocab) + (1 if self.oov else 0)

    def index_of(self, value: str) -> int:
        try:
            return self.vocab.index(value)
        except ValueError:
            if self.oov:
                return len(self.vocab)
            raise UsageError(f"value {value!r} not in vocabulary and OOV is disabled") from None


@dataclass
class ContinuousScheme:
    lo: float
    hi: float
    bins: int

    @property
    def width(self) -> int:
        return 1 if self.lo == self.hi else self.bins

    def index_of(self, value: float) -> int:
        if self.lo == self.hi:
            return 0
        step = (self.hi - self.lo) / self.bins
        idx = int((value - self.lo) / step)
        return min(max(idx, 0), self.bins - 1)

    def center_of(self, index: int) -> float:
        if self.lo == self.hi:
            return self.lo
        step = (self.hi - self.lo) / self.bins
        return self.lo + (index + 0.5) * step


Scheme = Union[CategoricalScheme, ContinuousScheme]


@dataclass
class FeatureCodec:
    """Per-feature encoding schemes in a fixed feature order."""

    schemes: dict[str, Scheme] = field(default_factory=dict)

    @property
    def feature_names(self) -> list[str]:
        return list(self.schemes.keys())

    @property
    def widths(self) -> list[int]:
        return [s.width for s in self.schemes.values()]

    @property
    def total_width(self) -> int:
        return sum(self.widths)


def fit_feature_codec(
    entities: Sequence[MapEntity],
    bins: int = DEFAULT_BINS,
    oov: bool = True,
    exclude: Sequence[str] = (),
) -> FeatureCodec:
    """Build a codec over the entities' shared feature set.

    Categorical features get a lexicographically sorted vocabulary (plus one
    reserved OOV slot unless disabled); continuous features get ``bins``
    equal-width bins over the observed [min, max]. Features named in
    ``exclude`` are left out of the codec entirely.
    """
    if not entities:
        raise UsageError("cannot fit a codec on an empty entity list")
    names = set(entities[0].features.keys())
    for e in entities:
        if set(e.features.keys()) != names:
            raise FormatError(f"entity {e.id} has a different feature-name set")

    schemes: dict[str, Scheme] = {}
    for name in sorted(names - set(exclude)):
        values = [e.features[name] for e in entities]
        kinds = {isinstance(v, str) for v in values}
        if len(kinds) > 1:
            raise FormatError(f"feature {name!r} mixes categorical and continuous values")
        if kinds.pop():
            schemes[name] = CategoricalScheme(vocab=sorted(set(values)), oov=oov)  # type: ignore[arg-type]
        else:
            lo = float(min(values))  # type: ignore[type-var]
            hi = float(max(values))  # type: ignore[type-var]
            schemes[name] = ContinuousScheme(lo=lo, hi=hi, bins=bins)
    return FeatureCodec(schemes=schemes)


def feature_indices(codec: FeatureCodec, entity: MapEntity) -> np.ndarray:
    """Per-feature selected index, shape (K,), in codec feature order."""
    out = np.empty(len(codec.schemes), dtype=np.int64)
    for k, (name, scheme) in enumerate(codec.schemes.items()):
        if name not in entity.features:
            raise UsageError(f"entity {entity.id} is missing feature {name!r}")
        out[k] = scheme.index_of(entity.features[name])  # type: ignore[arg-type]
    return out


def encode_feature(codec: FeatureCodec, entity: MapEntity) -> np.ndarray:
    """Concatenated one-hot blocks, shape (sum of widths,)."""
    idx = feature_indices(codec, entity)
    out = np.zeros(codec.total_width, dtype=np.float64)
    offset = 0
    for k, w in enumerate(codec.widths):
        out[offset + idx[k]] = 1.0
        offset += w
    return out


def encode_all_indices(codec: FeatureCodec, entities: Sequence[MapEntity]) -> np.ndarray:
    """Index matrix of shape (N, K) for a batch of entities."""
    return np.stack([feature_indices(codec, e) for e in entities])
