"""Binary and multilevel classification containers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ClassificationError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryClassification:
    """N x K one-hot membership matrix (stocks -> clusters), no empty columns."""

    membership: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.membership)
        if m.ndim == 1:
            m = m[:, None]
        m = (m > 0).astype(np.int8)
        if m.ndim != 2 or m.shape[0] == 0:
            raise ClassificationError("membership must be a non-empty N x K matrix")
        rows = m.sum(axis=1)
        if not np.all(rows == 1):
            bad = int(np.flatnonzero(rows != 1)[0])
            raise ClassificationError(f"membership row {bad} sums to {rows[bad]}, expected 1")
        if np.any(m.sum(axis=0) == 0):
            raise ClassificationError("membership has an empty cluster column")
        m.setflags(write=False)
        object.__setattr__(self, "membership", m)

    @classmethod
    def from_labels(cls, labels) -> "BinaryClassification":
        """Build from integer labels; columns follow sorted label order."""
        labels = np.asarray(labels)
        uniq, inv = np.unique(labels, return_inverse=True)
        m = np.zeros((labels.size, uniq.size), dtype=np.int8)
        m[np.arange(labels.size), inv] = 1
        return cls(m)

    @property
    def cluster_of(self) -> np.ndarray:
        return self.membership.argmax(axis=1)

    @property
    def n_stocks(self) -> int:
        return self.membership.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.membership.shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return self.membership.sum(axis=0).astype(int)

    def members(self, a: int) -> np.ndarray:
        return np.flatnonzero(self.membership[:, a])

    def member_sets(self) -> list[frozenset]:
        return [frozenset(self.members(a).tolist()) for a in range(self.n_clusters)]

    def __eq__(self, other):
        if not isinstance(other, BinaryClassification):
            return NotImplemented
        return self.membership.shape == other.membership.shape and bool(
            np.array_equal(self.membership, other.membership)
        )

    def __hash__(self):
        return hash(self.membership.tobytes())


@dataclass(frozen=True)
class MultilevelClassification:
    """Levels ordered most granular first; ``levels[mu]`` maps stocks to level-mu clusters."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(
            lv if isinstance(lv, BinaryClassification) else BinaryClassification(lv) for lv in self.levels
        )
        if not levels:
            raise ClassificationError("a classification needs at least one level")
        n = levels[0].n_stocks
        if any(lv.n_stocks != n for lv in levels):
            raise ClassificationError("levels cover different numbers of stocks")
        object.__setattr__(self, "levels", levels)

    @property
    def cluster_counts(self) -> tuple[int, ...]:
        return tuple(lv.n_clusters for lv in self.levels)

    @property
    def n_stocks(self) -> int:
        return self.levels[0].n_stocks

    def labels(self) -> np.ndarray:
        """N x P integer label matrix (0-based cluster columns)."""
        return np.column_stack([lv.cluster_of for lv in self.levels])

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, mu):
        return self.levels[mu]


def is_refinement(fine: BinaryClassification, coarse: BinaryClassification) -> bool:
    """True if every cluster of ``fine`` lies inside one cluster of ``coarse``."""
    overlap = fine.membership.T.astype(int) @ coarse.membership.astype(int)
    return bool(np.all((overlap > 0).sum(axis=1) == 1))


def nesting_violations(ml: MultilevelClassification) -> int:
    """Count stock pairs that share a level-(mu-1) cluster but not a level-mu cluster."""
    bad = 0
    for lo, hi in zip(ml.levels[:-1], ml.levels[1:]):
        a, b = lo.cluster_of, hi.cluster_of
        same_lo = a[:, None] == a[None, :]
        same_hi = b[:, None] == b[None, :]
        bad += int(np.triu(same_lo & ~same_hi, 1).sum())
    return bad


def rand_index(a, b) -> float:
    """Plain Rand index between two labelings."""
    a = np.asarray(a.cluster_of if isinstance(a, BinaryClassification) else a)
    b = np.asarray(b.cluster_of if isinstance(b, BinaryClassification) else b)
    n = a.size
    if n < 2:
        return 1.0
    same_a = a[:, None] == a[None, :]
    same_b = b[:, None] == b[None, :]
    iu = np.triu_indices(n, 1)
    return float(np.mean(same_a[iu] == same_b[iu]))

