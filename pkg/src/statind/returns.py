"""Return panels: loading, validation, normalization and cross-sectional demeaning."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

# scaled MAD constant (normal consistency), as in R's mad()
MAD_SCALE = 1.4826


class DataError(ValueError):
    """Malformed or degenerate input data."""


@dataclass(frozen=True)
class ReturnMatrix:
    """N x d panel of log-returns; row = stock, column 0 = most recent date."""

    values: np.ndarray
    stock_ids: tuple = field(default=())
    date_index: tuple = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("return panel must be two-dimensional")
        n, d = values.shape
        if n < 2 or d < 2:
            raise DataError(f"return panel needs N >= 2 and d >= 2, got {n}x{d}")
        ids = tuple(self.stock_ids) if len(self.stock_ids) else tuple(str(i + 1) for i in range(n))
        dates = tuple(self.date_index) if len(self.date_index) else tuple(str(s + 1) for s in range(d))
        if len(ids) != n or len(dates) != d:
            raise DataError("stock_ids / date_index lengths do not match the panel shape")
        bad = ~np.isfinite(values)
        if bad.any():
            i, s = np.argwhere(bad)[0]
            raise DataError(f"non-finite return for stock {ids[i]} at date {dates[s]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "stock_ids", ids)
        object.__setattr__(self, "date_index", dates)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def subset(self, rows) -> "ReturnMatrix":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return ReturnMatrix(self.values[rows], tuple(self.stock_ids[i] for i in rows), self.date_index)

    def with_values(self, values: np.ndarray) -> "ReturnMatrix":
        return ReturnMatrix(values, self.stock_ids, self.date_index)


@dataclass(frozen=True)
class RowStats:
    sigma: np.ndarray
    u: np.ndarray
    v: float


def as_array(ret) -> np.ndarray:
    if isinstance(ret, ReturnMatrix):
        return ret.values
    x = np.asarray(ret, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    return x


def _ids(ret, n):
    if isinstance(ret, ReturnMatrix):
        return ret.stock_ids
    return tuple(str(i + 1) for i in range(n))


def _rewrap(ret, values):
    if isinstance(ret, ReturnMatrix):
        return ret.with_values(values)
    return values


def row_variances(ret) -> np.ndarray:
    """Serial (per-row) sample variance with the d-1 denominator."""
    return as_array(ret).var(axis=1, ddof=1)


def mad(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return MAD_SCALE * float(np.median(np.abs(x - np.median(x))))


def row_stats(ret) -> RowStats:
    """Serial volatilities and the clamped normalizers used by :func:`normalize_returns`.

    ``v = exp(median(ln sigma) - 3 MAD(ln sigma))`` over the cross-section and
    ``u_i = max(sigma_i / v, 1)``.
    """
    x = as_array(ret)
    sigma = np.sqrt(row_variances(x))
    dead = np.flatnonzero(~(sigma > 0))
    if dead.size:
        raise DataError(f"degenerate row variance for stock {_ids(ret, len(x))[dead[0]]}")
    log_sigma = np.log(sigma)
    log_v = np.median(log_sigma) - 3.0 * mad(log_sigma)
    u = np.exp(log_sigma - log_v)
    u[~(u > 1.0)] = 1.0
    return RowStats(sigma=sigma, u=u, v=float(np.exp(log_v)))


def normalize_returns(ret):
    """Return ``R_is / (sigma_i u_i)``, roughly inverse-variance weighted returns.

    Stocks with unusually low volatility (below ``v``) are only divided by
    sigma, which keeps the normalized values bounded.
    """
    x = as_array(ret)
    st = row_stats(ret)
    out = x / st.sigma[:, None] / st.u[:, None]
    return _rewrap(ret, out)


def demean_cross_sectionally(ret):
    x = as_array(ret)
    return _rewrap(ret, x - x.mean(axis=0, keepdims=True))


def read_return_csv(path: str | Path) -> ReturnMatrix:
    """Read ``stock_id,<date_1>,...,<date_d>`` (date_1 most recent)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3:
            raise DataError(f"{path}:1: header needs stock_id and at least two dates")
        dates = tuple(h.strip() for h in header[1:])
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            ids.append(row[0].strip())
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate stock ids")
    return ReturnMatrix(np.array(rows, dtype=float).reshape(len(rows), len(dates)), tuple(ids), dates)


def write_return_csv(ret: ReturnMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stock_id", *ret.date_index])
        for sid, row in zip(ret.stock_ids, ret.values):
            w.writerow([sid, *(repr(float(v)) for v in row)])


def log_returns(adj_close: np.ndarray) -> np.ndarray:
    """Close-to-close log-returns from an N x T adjusted close panel (column 0 most recent)."""
    p = np.asarray(adj_close, dtype=float)
    return np.log(p[:, :-1] / p[:, 1:])


__all__: Sequence[str] = [
    "DataError",
    "ReturnMatrix",
    "RowStats",
    "row_variances",
    "row_stats",
    "normalize_returns",
    "demean_cross_sectionally",
    "read_return_csv",
    "write_return_csv",
    "log_returns",
]
