"""Hybrid classification: statistically split oversized sub-industries of a fundamental taxonomy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classification import BinaryClassification, ClassificationError
from .kmeans import aggregate_samplings
from .returns import as_array


@dataclass(frozen=True)
class FundamentalClassification:
    membership: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        m = np.asarray(self.membership)
        rows = m.sum(axis=1)
        if np.any(rows != 1):
            bad = int(np.flatnonzero(rows != 1)[0])
            raise ClassificationError(f"fundamental membership row {bad} sums to {rows[bad]}, expected 1")
        bc = BinaryClassification(m)
        labels = tuple(self.labels) if len(self.labels) else tuple(str(a + 1) for a in range(bc.n_clusters))
        if len(labels) != bc.n_clusters:
            raise ClassificationError("one label per sub-industry column is required")
        object.__setattr__(self, "membership", bc.membership)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_names(cls, names) -> "FundamentalClassification":
        """One-hot encode per-stock sub-industry names, columns in first-appearance order."""
        names = list(names)
        uniq = list(dict.fromkeys(names))
        col = {u: a for a, u in enumerate(uniq)}
        m = np.zeros((len(names), len(uniq)), dtype=np.int8)
        m[np.arange(len(names)), [col[v] for v in names]] = 1
        return cls(m, tuple(uniq))


def split_counts(sizes, d: int) -> np.ndarray:
    """Target number of statistical sub-clusters ``round(N_A / (d-1))`` per sub-industry."""
    return np.array([int(round(s / (d - 1))) for s in np.asarray(sizes)], dtype=int)


def improve_classification(
    ret,
    fundamental: FundamentalClassification,
    iter_max: int = 10,
    num_try: int = 100,
    seed: int = 0,
) -> BinaryClassification:
    """Split every sub-industry with at least ``1.5 (d - 1)`` members via aggregated k-means.

    Sub-industries are visited in column order; the split of column ``A``
    uses seeds from ``seed + A * (num_try + 1)``. Columns that are not split
    are copied through unchanged.
    """
    x = as_array(ret)
    n, d = x.shape
    m = fundamental.membership
    if m.shape[0] != n:
        raise ClassificationError(f"classification covers {m.shape[0]} stocks, panel has {n}")
    kappa = split_counts(m.sum(axis=0), d)
    blocks = []
    for a in range(m.shape[1]):
        if kappa[a] < 2:
            blocks.append(m[:, [a]])
            continue
        take = m[:, a] > 0
        sub = aggregate_samplings(x[take], int(kappa[a]), iter_max, num_try, seed + a * (num_try + 1)).membership
        block = np.zeros((n, sub.shape[1]), dtype=np.int8)
        block[take] = sub
        blocks.append(block)
    return BinaryClassification(np.hstack(blocks))
