"""Daily biomarker ingestion, per-patient normalization, risk labeling, and
window-sample construction with chronological splits.

The raw unit is one row per calendar day: A+B detection counts on two device
channels plus a long-episode count.  Labels are dynamic: a day is high risk
when its LE count strictly exceeds ``fraction`` times the trailing-window LE
mean.  Everything downstream (windows, splits, exports) is deterministic for
a fixed input file.
"""

from __future__ import annotations

import csv
import datetime
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_LABEL_WINDOW = 60
DEFAULT_LABEL_FRACTION = 0.7
DEFAULT_MIN_HISTORY = 7
DEFAULT_HORIZONS = (1, 3, 7, 14)

CSV_HEADER = ["date", "ab_ch1", "ab_ch2", "le_count"]

UNLABELED = -1  # warm-up days carry no label


class DataError(ValueError):
    """Malformed or degenerate input data (maps to CLI exit code 2)."""


@dataclass(frozen=True)
class DailyRecord:
    date: datetime.date
    ab_ch1: int
    ab_ch2: int
    le_count: int

    def __post_init__(self):
        for name in ("ab_ch1", "ab_ch2", "le_count"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be non-negative, got {getattr(self, name)} on {self.date}")


@dataclass
class PatientSeries:
    patient_id: str
    records: list[DailyRecord]

    def __post_init__(self):
        for prev, cur in zip(self.records, self.records[1:]):
            if cur.date <= prev.date:
                raise DataError(f"dates must be strictly increasing; saw {prev.date} then {cur.date}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def dates(self) -> list[datetime.date]:
        return [r.date for r in self.records]

    def gaps(self) -> list[tuple[datetime.date, datetime.date]]:
        """Adjacent record pairs separated by more than one calendar day."""
        out = []
        for prev, cur in zip(self.records, self.records[1:]):
            if (cur.date - prev.date).days > 1:
                out.append((prev.date, cur.date))
        return out


@dataclass
class ParseReport:
    reordered: bool
    gaps: list[tuple[datetime.date, datetime.date]]


@dataclass
class NormalizedSeries:
    patient_id: str
    dates: list[datetime.date]
    z: np.ndarray      # (T, channels) z-scores
    mu: np.ndarray     # (channels,)
    sigma: np.ndarray  # (channels,) population std


@dataclass
class RiskLabels:
    patient_id: str
    dates: list[datetime.date]
    labels: np.ndarray     # int8; UNLABELED for warm-up days
    le_counts: np.ndarray  # raw per-day LE counts, kept for count-target baselines
    window: int = DEFAULT_LABEL_WINDOW
    fraction: float = DEFAULT_LABEL_FRACTION
    min_history: int = DEFAULT_MIN_HISTORY


@dataclass
class WindowSample:
    x: np.ndarray  # (lookback, channels) normalized values, no missing entries
    y: int
    horizon: int
    anchor_date: datetime.date
    horizon_le_sum: int = 0


def parse_csv(path: str | Path, patient_id: str | None = None) -> tuple[PatientSeries, ParseReport]:
    """Read the canonical per-day CSV; rows come back date-sorted.

    Errors name the offending line or date.  Out-of-order rows are accepted
    and flagged in the report; duplicate dates are rejected.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                day = datetime.date.fromisoformat(row[0].strip())
                counts = [int(v) for v in row[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if any(c < 0 for c in counts):
                raise DataError(f"{path}:{lineno}: negative count")
            records.append(DailyRecord(day, *counts))

    seen: set[datetime.date] = set()
    for rec in records:
        if rec.date in seen:
            raise DataError(f"{path}: duplicate date {rec.date}")
        seen.add(rec.date)

    ordered = sorted(records, key=lambda r: r.date)
    reordered = ordered != records
    series = PatientSeries(patient_id or path.stem, ordered)
    return series, ParseReport(reordered=reordered, gaps=series.gaps())


def write_csv(series: PatientSeries, path: str | Path) -> None:
    """Emit the canonical CSV schema, byte-deterministic for a fixed series."""
    lines = [",".join(CSV_HEADER)]
    for r in series.records:
        lines.append(f"{r.date.isoformat()},{r.ab_ch1},{r.ab_ch2},{r.le_count}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def zscore_normalize(series: PatientSeries) -> NormalizedSeries:
    """Z-score each A+B channel against its own full-series population stats.

    A flat channel (sigma == 0) maps to all-zero scores with a warning rather
    than an error; flat telemetry does occur.
    """
    if not series.records:
        raise DataError("cannot normalize an empty series")
    counts = np.array([[r.ab_ch1, r.ab_ch2] for r in series.records], dtype=np.float64)
    mu = counts.mean(axis=0)
    sigma = counts.std(axis=0)  # population (divide-by-N)
    z = np.zeros_like(counts)
    for c in range(counts.shape[1]):
        if sigma[c] > 0:
            z[:, c] = (counts[:, c] - mu[c]) / sigma[c]
        else:
            warnings.warn(
                f"patient {series.patient_id}: channel {c + 1} is constant; z-scores set to 0",
                stacklevel=2,
            )
    return NormalizedSeries(series.patient_id, series.dates, z, mu, sigma)


def label_days(
    series: PatientSeries,
    window: int = DEFAULT_LABEL_WINDOW,
    fraction: float = DEFAULT_LABEL_FRACTION,
    min_history: int = DEFAULT_MIN_HISTORY,
) -> RiskLabels:
    """Mark each day high risk iff its LE count strictly exceeds ``fraction``
    times the mean LE count over the ``window`` recorded days before it.

    The mean uses an expanding window until ``window`` days of history exist;
    days with fewer than ``min_history`` prior days stay unlabeled.  Ties go
    to low risk.
    """
    if not series.records:
        raise DataError("cannot label an empty series")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if fraction <= 0:
        raise ValueError(f"fraction must be positive, got {fraction}")
    le = np.array([r.le_count for r in series.records], dtype=np.float64)
    labels = np.full(len(le), UNLABELED, dtype=np.int8)
    for i in range(len(le)):
        if i < min_history:
            continue
        history = le[max(0, i - window) : i]
        threshold = fraction * history.mean()
        labels[i] = 1 if le[i] > threshold else 0
    return RiskLabels(
        series.patient_id,
        series.dates,
        labels,
        le.astype(np.int64),
        window=window,
        fraction=fraction,
        min_history=min_history,
    )


def make_windows(
    normalized: NormalizedSeries,
    labels: RiskLabels,
    lookback: int,
    horizon: int,
    aggregation: str = "any",
) -> list[WindowSample]:
    """Pair each anchor day's lookback matrix with its horizon label.

    ``aggregation="any"`` (default) marks the sample positive when any horizon
    day is labeled high risk.  ``"cumulative"`` instead compares the summed
    horizon LE count against ``horizon`` times the anchor-time daily threshold.
    Windows touching calendar gaps or unlabeled horizon days are dropped.
    """
    if lookback < 1:
        raise ValueError(f"lookback must be >= 1, got {lookback}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if aggregation not in ("any", "cumulative"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    if normalized.dates != labels.dates:
        raise DataError("normalized series and labels cover different days")
    total = len(normalized.dates)
    if total < lookback + horizon:
        raise DataError(f"series of {total} days is shorter than lookback+horizon={lookback + horizon}")

    dates = normalized.dates
    le = labels.le_counts
    samples: list[WindowSample] = []
    for i in range(lookback - 1, total - horizon):
        start = i - lookback + 1
        end = i + horizon
        # contiguity over the whole span rules out calendar gaps
        if (dates[end] - dates[start]).days != lookback + horizon - 1:
            continue
        horizon_labels = labels.labels[i + 1 : i + horizon + 1]
        if np.any(horizon_labels == UNLABELED):
            continue
        horizon_sum = int(le[i + 1 : i + horizon + 1].sum())
        if aggregation == "any":
            y = int(np.any(horizon_labels == 1))
        else:
            history = le[max(0, i + 1 - labels.window) : i + 1].astype(np.float64)
            if len(history) < labels.min_history:
                continue
            y = int(horizon_sum > labels.fraction * history.mean() * horizon)
        samples.append(
            WindowSample(
                x=normalized.z[start : i + 1].copy(),
                y=y,
                horizon=horizon,
                anchor_date=dates[i],
                horizon_le_sum=horizon_sum,
            )
        )
    return samples


def split_chronological(
    samples: list[WindowSample],
    train_frac: float = 0.7,
    val_frac: float = 0.1,
) -> tuple[list[WindowSample], list[WindowSample], list[WindowSample]]:
    """Cut date-ordered samples into contiguous train/val/test blocks.

    Samples whose horizon reaches the first anchor of the next block are
    dropped so no training target overlaps the following block's period.
    """
    if len(samples) < 10:
        raise DataError(f"need at least 10 samples to split, got {len(samples)}")
    for a, b in zip(samples, samples[1:]):
        if b.anchor_date < a.anchor_date:
            raise DataError("samples must be ordered by anchor date")
    n = len(samples)
    k1 = int(n * train_frac + 1e-9)
    k2 = k1 + int(n * val_frac + 1e-9)
    train, val, test = samples[:k1], samples[k1:k2], samples[k2:]

    def trim(block: list[WindowSample], nxt: list[WindowSample]) -> list[WindowSample]:
        if not block or not nxt:
            return block
        boundary = nxt[0].anchor_date
        return [s for s in block if s.anchor_date + datetime.timedelta(days=s.horizon) < boundary]

    return trim(train, val), trim(val, test), test


def compute_pos_weight(labels) -> float:
    """Negative:positive ratio of a label vector; errors on a single class."""
    arr = np.asarray(labels)
    n_pos = int(np.sum(arr == 1))
    n_neg = int(np.sum(arr == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError(f"single-class labels (pos={n_pos}, neg={n_neg}); pos_weight undefined")
    return n_neg / n_pos


def samples_to_arrays(samples: list[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into a model-ready (N, channels, lookback) batch plus labels."""
    if not samples:
        raise DataError("no samples to stack")
    x = np.stack([s.x.T for s in samples]).astype(np.float64)
    y = np.array([s.y for s in samples], dtype=np.int64)
    return x, y


def export_samples(samples: list[WindowSample], path: str | Path) -> None:
    """Write ``anchor_date,horizon,y`` rows, byte-deterministic."""
    lines = ["anchor_date,horizon,y"]
    for s in samples:
        lines.append(f"{s.anchor_date.isoformat()},{s.horizon},{s.y}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
