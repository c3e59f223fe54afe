"""File formats: classifications, price panels, run configs and sweep output."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backtest import PricePanel
from .classification import BinaryClassification, MultilevelClassification
from .returns import DataError

PANEL_FILES = {
    "open": "open.csv",
    "close": "close.csv",
    "adj_open": "adj_open.csv",
    "adj_close": "adj_close.csv",
    "volume": "volume.csv",
}


def relabel_first_appearance(labels) -> np.ndarray:
    """1-based contiguous labels numbered in order of first appearance."""
    labels = np.asarray(labels)
    mapping: dict = {}
    out = np.empty(labels.size, dtype=int)
    for i, v in enumerate(labels.tolist()):
        out[i] = mapping.setdefault(v, len(mapping) + 1)
    return out


def canonical(ml: MultilevelClassification) -> MultilevelClassification:
    """Reorder cluster columns at every level by first appearance."""
    return MultilevelClassification(
        tuple(BinaryClassification.from_labels(relabel_first_appearance(lv.cluster_of)) for lv in ml.levels)
    )


def write_classification_csv(ml: MultilevelClassification, stock_ids: Sequence[str], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stock_id", *(f"level_{mu + 1}" for mu in range(len(ml)))])
        cols = [relabel_first_appearance(lv.cluster_of) for lv in ml.levels]
        for i, sid in enumerate(stock_ids):
            w.writerow([sid, *(int(c[i]) for c in cols)])


def read_classification_csv(path) -> tuple[MultilevelClassification, tuple[str, ...]]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2 or rows[0][0] != "stock_id":
        raise DataError(f"{path}:1: expected header stock_id,level_1,...")
    p = len(rows[0]) - 1
    ids, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != p + 1:
            raise DataError(f"{path}:{lineno}: expected {p + 1} fields, got {len(row)}")
        try:
            labels.append([int(v) for v in row[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        ids.append(row[0])
    lab = np.array(labels, dtype=int).reshape(len(ids), p)
    ml = MultilevelClassification(tuple(BinaryClassification.from_labels(lab[:, mu]) for mu in range(p)))
    return ml, tuple(ids)


def write_classification_json(ml: MultilevelClassification, stock_ids: Sequence[str], path, **meta) -> None:
    doc = {
        "stock_ids": list(stock_ids),
        "cluster_counts": list(ml.cluster_counts),
        "levels": [relabel_first_appearance(lv.cluster_of).tolist() for lv in ml.levels],
    }
    doc.update(meta)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_classification_json(path) -> tuple[MultilevelClassification, tuple[str, ...]]:
    doc = json.loads(Path(path).read_text())
    ml = MultilevelClassification(tuple(BinaryClassification.from_labels(np.array(lv)) for lv in doc["levels"]))
    if list(ml.cluster_counts) != list(doc["cluster_counts"]):
        raise DataError(f"{path}: cluster_counts do not match the level labels")
    return ml, tuple(doc["stock_ids"])


def read_fundamental_csv(path) -> dict[str, str]:
    """``stock_id,subindustry_label`` -> mapping."""
    path = Path(path)
    out: dict[str, str] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 2:
            raise DataError(f"{path}:1: expected header stock_id,subindustry_label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            if row[0] in out:
                raise DataError(f"{path}:{lineno}: duplicate stock id {row[0]}")
            out[row[0].strip()] = row[1].strip()
    return out


def cluster_size_summary(sizes) -> dict[str, float]:
    """Min / quartiles / median / mean / max / StDev / MAD of per-cluster stock counts."""
    x = np.asarray(sizes, dtype=float)
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return {
        "Min": float(x.min()),
        "1st Qu.": float(q1),
        "Median": float(med),
        "Mean": float(x.mean()),
        "3rd Qu.": float(q3),
        "Max": float(x.max()),
        "StDev": float(x.std(ddof=1)) if x.size > 1 else 0.0,
        "MAD": float(1.4826 * np.median(np.abs(x - med))),
    }


def format_summary(ml: MultilevelClassification) -> str:
    lines = []
    for mu, lv in enumerate(ml.levels):
        st = cluster_size_summary(lv.sizes)
        body = ", ".join(f"{k} = {v:.3f}".rstrip("0").rstrip(".") for k, v in st.items())
        lines.append(f"level {mu + 1}: K = {lv.n_clusters}; stocks per cluster: {body}")
    return "\n".join(lines)


# ---------------------------------------------------------------- price panels


@dataclass
class PanelIssue:
    file: str
    line: int | None
    column: str | None
    message: str

    def __str__(self):
        where = self.file + (f":{self.line}" if self.line else "") + (f" [{self.column}]" if self.column else "")
        return f"{where}: {self.message}"


@dataclass
class PanelReport:
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __str__(self):
        return "panel OK" if self.ok else "\n".join(str(i) for i in self.issues)


def _read_grid(path: Path):
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    ids, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        vals = []
        for col, cell in zip(header[1:], row[1:]):
            cell = cell.strip()
            if cell == "" or cell.upper() in ("NA", "NAN"):
                vals.append(math.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad number {cell!r} in column {col}") from None
        ids.append(row[0].strip())
        values.append(vals)
    return [h.strip() for h in header[1:]], ids, np.array(values, dtype=float).reshape(len(ids), len(header) - 1)


def _dates_descending(dates: Sequence[str]) -> bool:
    try:
        parsed = [date.fromisoformat(d) for d in dates]
    except ValueError:
        return True  # non-ISO labels: ordering cannot be checked
    return all(a > b for a, b in zip(parsed, parsed[1:]))


def validate_panel(directory) -> PanelReport:
    """Check grid alignment, price positivity and missing values across the five panel files."""
    directory = Path(directory)
    report = PanelReport()
    grids = {}
    for key, name in PANEL_FILES.items():
        path = directory / name
        if not path.exists():
            report.issues.append(PanelIssue(name, None, None, "file missing"))
            continue
        try:
            grids[key] = _read_grid(path)
        except DataError as exc:
            report.issues.append(PanelIssue(name, None, None, str(exc)))
    if not grids:
        return report
    ref_key = next(iter(grids))
    ref_dates, ref_ids, _ = grids[ref_key]
    for key, (dates, ids, values) in grids.items():
        name = PANEL_FILES[key]
        if dates != ref_dates:
            report.issues.append(PanelIssue(name, 1, None, f"date columns differ from {PANEL_FILES[ref_key]}"))
        elif not _dates_descending(dates):
            report.issues.append(PanelIssue(name, 1, None, "date columns are not in most-recent-first order"))
        if ids != ref_ids:
            report.issues.append(PanelIssue(name, None, None, f"stock rows differ from {PANEL_FILES[ref_key]}"))
        for i, t in np.argwhere(np.isnan(values)):
            report.issues.append(PanelIssue(name, int(i) + 2, dates[t], f"missing value for {ids[i]}"))
        bad = values < 0 if key == "volume" else values <= 0
        for i, t in np.argwhere(bad):
            kind = "negative volume" if key == "volume" else "non-positive price"
            report.issues.append(PanelIssue(name, int(i) + 2, dates[t], f"{kind} {values[i, t]} for {ids[i]}"))
    return report


def read_price_panel(directory) -> PricePanel:
    directory = Path(directory)
    grids = {key: _read_grid(directory / name) for key, name in PANEL_FILES.items()}
    dates, ids, _ = grids["open"]
    for key, (d, i, _) in grids.items():
        if d != dates or i != ids:
            raise DataError(f"{PANEL_FILES[key]} is not aligned with open.csv")
    return PricePanel(
        open=grids["open"][2],
        close=grids["close"][2],
        adj_open=grids["adj_open"][2],
        adj_close=grids["adj_close"][2],
        volume=grids["volume"][2],
        stock_ids=tuple(ids),
        dates=tuple(dates),
    )


def write_price_panel(panel: PricePanel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for key, name in PANEL_FILES.items():
        with (directory / name).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stock_id", *panel.dates])
            for sid, row in zip(panel.stock_ids, getattr(panel, key)):
                w.writerow([sid, *(repr(float(v)) for v in row)])


# ---------------------------------------------------------------- config / sweep


def read_config(path) -> dict[str, str]:
    """Line-based ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def write_sweep_csv(rows: Iterable[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "ROC", "SR", "CPS"])
        for r in rows:
            w.writerow([r["K"], repr(float(r["ROC"])), repr(float(r["SR"])), repr(float(r["CPS"]))])
