"""Pre-processing bias mitigation: reweighing and duplication/deletion resampling."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping

import numpy as np

from .dataset import PRIVILEGED, UNPRIVILEGED, Dataset, ProtectedAttribute, group_counts
from .errors import EmptyCellError

log = logging.getLogger(__name__)

OVERSAMPLE = "oversample"
UNDERSAMPLE = "undersample"


@dataclass(frozen=True)
class WeightPlan:
    """Cell weight ``W_g * W_y / (W * W_gy)`` for each (group, label) cell.

    ``W`` are weighted counts, so with unit weights this is the usual
    ``n_g * n_y / (n * n_gy)``, and on an already reweighed dataset every cell
    weight is 1.
    """

    attribute: str
    weights: Mapping[tuple[str, int], float]

    def to_dict(self) -> dict[str, Any]:
        return {"attribute": self.attribute, "weights": {f"{g}/{y}": w for (g, y), w in self.weights.items()}}


def weight_plan(dataset: Dataset, attr: ProtectedAttribute) -> WeightPlan:
    table = group_counts(dataset, attr)
    total = sum(table.weighted.values())
    weights = {}
    for g in (PRIVILEGED, UNPRIVILEGED):
        for y in (1, 0):
            w_gy = table.cell(g, y, weighted=True)
            if w_gy <= 0:
                raise EmptyCellError(f"{attr.column}: no weighted {g} rows with label {y}")
            weights[(g, y)] = table.group_size(g, weighted=True) * table.label_size(y, weighted=True) / (total * w_gy)
    return WeightPlan(attr.column, weights)


def reweigh(dataset: Dataset, attr: ProtectedAttribute) -> Dataset:
    """Multiply each row's weight by its cell weight; rows with a missing attribute keep theirs."""
    plan = weight_plan(dataset, attr)
    groups = attr.membership(dataset)
    factor = np.ones(dataset.n)
    for (g, y), w in plan.weights.items():
        code = 1 if g == PRIVILEGED else 0
        factor[(groups == code) & (dataset.labels == y)] = w
    log.info("reweighed %s: %s", attr.column, plan.to_dict()["weights"])
    out = dataset.with_weights(dataset.weights * factor)
    return out.with_provenance(mitigation=json.dumps({"method": "reweigh", **plan.to_dict()}, sort_keys=True))


def _min_steps(f: int, m: int, target: Fraction, grow: bool) -> int:
    """Smallest k moving the rate f/m past ``target``, compared exactly.

    Growing adds favorable rows, (f+k)/(m+k) >= target; shrinking deletes
    favorable rows, (f-k)/(m-k) <= target.
    """
    k = 0
    if grow:
        while Fraction(f + k, m + k) < target:
            k += 1
    else:
        while k < f and Fraction(f - k, m - k) > target:
            k += 1
    return k


def resample(dataset: Dataset, attr: ProtectedAttribute, strategy: str, seed: int) -> Dataset:
    """Equalise favorable rates by copying or deleting whole rows.

    ``oversample`` draws, with replacement, extra copies of favorable rows from
    the group with the lower favorable rate until its rate reaches the other
    group's. ``undersample`` deletes favorable rows of the higher-rate group
    until its rate drops to the other's. Copies are appended after the original
    rows; counts are logged and recorded in provenance.
    """
    if strategy not in (OVERSAMPLE, UNDERSAMPLE):
        raise ValueError(f"unknown resampling strategy {strategy!r}")
    table = group_counts(dataset, attr)
    for g in (PRIVILEGED, UNPRIVILEGED):
        for y in (1, 0):
            if table.cell(g, y) == 0:
                raise EmptyCellError(f"{attr.column}: no {g} rows with label {y}")

    rate = {g: Fraction(table.cell(g, 1), table.group_size(g)) for g in (PRIVILEGED, UNPRIVILEGED)}
    low, high = sorted((PRIVILEGED, UNPRIVILEGED), key=lambda g: (rate[g], g == UNPRIVILEGED))
    groups = attr.membership(dataset)
    rng = np.random.default_rng(seed)
    counts = {"added": {PRIVILEGED: 0, UNPRIVILEGED: 0}, "removed": {PRIVILEGED: 0, UNPRIVILEGED: 0}}

    if rate[low] == rate[high]:
        out = dataset
    elif strategy == OVERSAMPLE:
        k = _min_steps(table.cell(low, 1), table.group_size(low), rate[high], grow=True)
        code = 1 if low == PRIVILEGED else 0
        pool = np.flatnonzero((groups == code) & (dataset.labels == 1))
        extra = rng.choice(pool, size=k, replace=True)
        out = dataset.take(np.concatenate([np.arange(dataset.n), extra]))
        counts["added"][low] = int(k)
    else:
        f = table.cell(high, 1)
        k = _min_steps(f, table.group_size(high), rate[low], grow=False)
        if k >= f:
            raise EmptyCellError(f"{attr.column}: undersampling would empty the {high} favorable cell")
        code = 1 if high == PRIVILEGED else 0
        pool = np.flatnonzero((groups == code) & (dataset.labels == 1))
        drop = set(rng.choice(pool, size=k, replace=False).tolist())
        out = dataset.take([i for i in range(dataset.n) if i not in drop])
        counts["removed"][high] = int(k)

    log.info("resampled %s (%s): %s", attr.column, strategy, counts)
    record = {"method": "resample", "strategy": strategy, "attribute": attr.column, "seed": seed, **counts}
    return out.with_provenance(mitigation=json.dumps(record, sort_keys=True))
