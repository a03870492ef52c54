"""Trajectory filtering and dataset splitting.

Filtering order is fixed: length filter, then user filter, then truncation.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import replace
from typing import Sequence, TypeVar

from ..errors import UsageError
from .model import Trajectory

T = TypeVar("T")


def preprocess_checkin(
    trajs: list[Trajectory],
    min_len: int = 3,
    min_user_trajs: int = 3,
    max_len: int = 32,
) -> list[Trajectory]:
    """Filter check-in trajectories: drop short ones, drop sparse users, truncate."""
    for tr in trajs:
        if tr.variant != "checkin":
            raise UsageError(f"trajectory {tr.id} is not check-in variant")

    long_enough = [tr for tr in trajs if len(tr) >= min_len]
    per_user = Counter(tr.user for tr in long_enough)
    kept = [tr for tr in long_enough if per_user[tr.user] >= min_user_trajs]
    return [
        replace(tr, samples=tr.samples[:max_len]) if len(tr) > max_len else tr
        for tr in kept
    ]


def preprocess_coordinate(
    trajs: list[Trajectory],
    min_len: int = 10,
    max_len: int = 128,
) -> list[Trajectory]:
    """Filter coordinate trajectories: drop short ones, truncate long ones."""
    for tr in trajs:
        if tr.variant != "coordinate":
            raise UsageError(f"trajectory {tr.id} is not coordinate variant")

    kept = [tr for tr in trajs if len(tr) >= min_len]
    return [
        replace(tr, samples=tr.samples[:max_len]) if len(tr) > max_len else tr
        for tr in kept
    ]


def split_dataset(
    items: Sequence[T],
    ratios: tuple[float, float, float] = (6, 2, 2),
    seed: int = 0,
) -> tuple[list[T], list[T], list[T]]:
    """Seeded shuffle then floor-rule split; remainder items go to test.

    Train and validation sizes are floor(n * r_i / sum(r)); the test partition
    absorbs whatever is left so the split is exhaustive.
    """
    if not items:
        raise UsageError("cannot split an empty item list")
    if any(r <= 0 for r in ratios):
        raise UsageError(f"ratios must be positive, got {ratios}")

    shuffled = list(items)
    random.Random(seed).shuffle(shuffled)
    n = len(shuffled)
    total = sum(ratios)
    n_train = int(n * ratios[0] / total)
    n_val = int(n * ratios[1] / total)
    train = shuffled[:n_train]
    val = shuffled[n_train : n_train + n_val]
    test = shuffled[n_train + n_val :]
    return train, val, test
