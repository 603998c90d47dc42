"""CSV ingestion, chronological splits, z-scoring and sliding-window batches."""

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Literal

import numpy as np
import pandas as pd

from src.errors import ConfigError, IngestionError
from src.models.schemas import SplitSpec

logger = logging.getLogger(__name__)

Segment = Literal["train", "val", "test"]
SEGMENTS: tuple[str, ...] = ("train", "val", "test")

Batch = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class RawSeries:
    timestamps: list[str]
    values: np.ndarray
    channel_names: list[str]

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def truncate(self, length: int) -> "RawSeries":
        if length >= self.length:
            return self
        return RawSeries(self.timestamps[:length], self.values[:length], self.channel_names)


def _parser_row(exc: Exception) -> str:
    # pandas reports 1-based file lines; the header is line 1
    match = re.search(r"line (\d+)", str(exc))
    return f"row {int(match.group(1)) - 1}" if match else "unknown row"


def load_csv(path: str | Path) -> RawSeries:
    """
    Read a `date,<c1>,...,<cN>` file. Row numbers in errors are 1-based data rows.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"dataset file not found: {path}")
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True, skip_blank_lines=False
        )
    except pd.errors.EmptyDataError:
        raise IngestionError(f"{path} is empty") from None
    except pd.errors.ParserError as exc:
        raise IngestionError(f"{path}: {_parser_row(exc)} has the wrong number of fields") from None
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path} is not valid UTF-8 (byte offset {exc.start})") from None

    # blank lines stay in the frame so row numbers match the file; trailing ones are dropped
    blank = (frame.isna() | (frame == "")).all(axis=1).to_numpy()
    if blank.any():
        kept = len(blank) - int(np.argmin(blank[::-1])) if not blank.all() else 0
        if blank[:kept].any():
            raise IngestionError(f"{path}: row {int(np.argmax(blank)) + 1} is blank")
        frame = frame.iloc[:kept]

    columns = [str(c).strip() for c in frame.columns]
    if not columns or columns[0] != "date":
        raise IngestionError(f"{path}: first column must be 'date', got {columns[:1]}")
    if len(columns) < 2:
        raise IngestionError(f"{path}: no value columns after 'date'")
    if frame.empty:
        raise IngestionError(f"{path} has a header but no data rows")

    channels = columns[1:]
    cells = frame.iloc[:, 1:]
    missing = cells.isna() | (cells == "")
    numeric = cells.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    bad = missing.to_numpy() | ~np.isfinite(numeric)
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        if missing.iat[row, col]:
            raise IngestionError(f"{path}: row {row + 1} has the wrong number of fields")
        raise IngestionError(
            f"{path}: row {row + 1}, column {channels[col]!r}: non-numeric value {cells.iat[row, col]!r}"
        )

    return RawSeries(
        timestamps=frame.iloc[:, 0].astype(str).tolist(),
        values=numeric,
        channel_names=channels,
    )


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray, channel_names: list[str] | None = None) -> "NormStats":
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        constant = std <= 1e-12 * (1.0 + np.abs(mean))
        if constant.any():
            idx = int(np.argmax(constant))
            label = channel_names[idx] if channel_names else str(idx)
            raise IngestionError(f"channel {label!r} is constant over the train segment")
        return cls(mean=mean, std=std)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


@dataclass(frozen=True)
class NormalizedSeries:
    """The whole series z-scored with train statistics, plus the split points."""

    values: np.ndarray
    boundaries: tuple[int, int]
    channel_names: list[str]

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def segment_bounds(self, segment: str) -> tuple[int, int]:
        b1, b2 = self.boundaries
        return {"train": (0, b1), "val": (b1, b2), "test": (b2, self.length)}[segment]

    def segment(self, segment: str) -> np.ndarray:
        start, stop = self.segment_bounds(segment)
        return self.values[start:stop]


def split_boundaries(length: int, spec: SplitSpec) -> tuple[int, int]:
    # the 1e-9 nudge keeps 0.6 * 14400 from landing on 8639
    b1 = math.floor(spec.train_ratio * length + 1e-9)
    b2 = math.floor((spec.train_ratio + spec.val_ratio) * length + 1e-9)
    return b1, b2


def split_and_normalize(
    raw: RawSeries,
    spec: SplitSpec,
    lookback: int | None = None,
    horizon: int | None = None,
) -> tuple[NormalizedSeries, NormStats]:
    b1, b2 = split_boundaries(raw.length, spec)
    if lookback is not None and horizon is not None:
        need = lookback + horizon
        for name, size in (("train", b1), ("val", b2 - b1), ("test", raw.length - b2)):
            if size < need:
                raise ConfigError(
                    f"{name} segment has {size} rows; lookback + horizon needs at least {need}"
                )
    if b1 < 1:
        raise ConfigError(f"train segment is empty for {raw.length} rows and split {spec.label()}")
    stats = NormStats.fit(raw.values[:b1], raw.channel_names)
    series = NormalizedSeries(
        values=stats.apply(raw.values),
        boundaries=(b1, b2),
        channel_names=raw.channel_names,
    )
    return series, stats


@dataclass(frozen=True)
class WindowedDataset:
    """
    Normalized series with (lookback, horizon) windows indexed by target start t:
    input rows [t - T, t), target rows [t, t + F). A window belongs to the segment
    holding t. Val/test inputs may reach back into the previous segment.
    """

    series: NormalizedSeries
    stats: NormStats
    lookback: int
    horizon: int

    @property
    def channels(self) -> int:
        return self.series.values.shape[1]

    def target_starts(self, segment: str) -> np.ndarray:
        if segment not in SEGMENTS:
            raise ConfigError(f"unknown segment {segment!r}, expected one of {SEGMENTS}")
        start, stop = self.series.segment_bounds(segment)
        start = max(start, self.lookback)
        last = stop - self.horizon
        return np.arange(start, last + 1) if last >= start else np.arange(0)

    def window_count(self, segment: str) -> int:
        return int(self.target_starts(segment).size)

    def batch(self, starts: np.ndarray) -> Batch:
        starts = np.asarray(starts)
        inputs = starts[:, None] + np.arange(-self.lookback, 0)[None, :]
        targets = starts[:, None] + np.arange(self.horizon)[None, :]
        return self.series.values[inputs], self.series.values[targets]


def build_dataset(
    raw: RawSeries,
    spec: SplitSpec,
    lookback: int,
    horizon: int,
) -> WindowedDataset:
    series, stats = split_and_normalize(raw, spec, lookback, horizon)
    return WindowedDataset(series=series, stats=stats, lookback=lookback, horizon=horizon)


def windows(
    ds: WindowedDataset,
    segment: str,
    batch_size: int,
    shuffle_seed: int = 0,
) -> Iterator[Batch]:
    """
    Batches of (x [B, T, N], y [B, F, N]). Train windows are shuffled with
    `shuffle_seed`; val/test keep chronological order. The last batch may be short.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be at least 1, got {batch_size}")
    starts = ds.target_starts(segment)
    if starts.size == 0:
        raise ConfigError(f"{segment} segment has no complete windows")
    if segment == "train":
        starts = np.random.default_rng(shuffle_seed).permutation(starts)
    return _iterate(ds, starts, batch_size)


def _iterate(ds: WindowedDataset, starts: np.ndarray, batch_size: int) -> Iterator[Batch]:
    for offset in range(0, starts.size, batch_size):
        yield ds.batch(starts[offset:offset + batch_size])
