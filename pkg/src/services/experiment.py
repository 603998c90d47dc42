import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from src import __version__
from src.backbones.base import ModelParams
from src.backbones.factory import forward
from src.catalog import lookup
from src.config import settings
from src.core.tensor import Tensor
from src.errors import ConfigError
from src.models.schemas import ExperimentConfig, ExperimentResult, SplitSpec
from src.services.dataset import RawSeries, WindowedDataset, build_dataset, load_csv
from src.services.training import TrainingService

logger = logging.getLogger(__name__)


def config_error(exc: ValidationError) -> ConfigError:
    """Turn a pydantic error into one line per offending key."""
    parts = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"]) or "config"
        parts.append(f"{key}: {err['msg']}")
    return ConfigError("; ".join(parts))


def validate(model: type[BaseModel], values: Mapping[str, Any]) -> Any:
    try:
        return model.model_validate(dict(values))
    except ValidationError as exc:
        raise config_error(exc) from None


def read_config_file(path: str | Path) -> dict[str, Any]:
    """
    Read a flat key=value file, or a JSON result document through its `config` object.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return dict(data.get("config", data))

    values = dotenv_values(path)
    for key, value in values.items():
        if value is None:
            raise ConfigError(f"{path}: key {key!r} has no value")
    return dict(values)


def merge(file_values: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """flags > file > defaults; a None override means the flag was not given."""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    """Materialize dataset path, split and benchmark length."""
    entry = lookup(cfg.dataset_name)
    if cfg.data is None and cfg.dataset_name is None:
        raise ConfigError("data: give --data <path> or --dataset-name <name>")

    data = cfg.data
    if data is None:
        name = entry.name if entry else cfg.dataset_name
        data = str(Path(settings.DATA_DIR) / f"{name}.csv")

    split = cfg.split
    if split is None:
        if entry is None:
            raise ConfigError(
                f"split: dataset {cfg.dataset_name or data!r} is not in the catalog; give --split a:b:c"
            )
        split = SplitSpec.parse(entry.split)

    return cfg.model_copy(
        update={
            "dataset_name": entry.name if entry else (cfg.dataset_name or Path(data).stem),
            "data": data,
            "split": split,
            "benchmark_length": cfg.benchmark_length or (entry.length if entry else None),
        }
    )


@dataclass(frozen=True)
class TrainedExperiment:
    """A finished run together with what produced it: best parameters and the windowed data."""

    result: ExperimentResult
    params: ModelParams
    data: WindowedDataset
    raw: RawSeries


def train_experiment(cfg: ExperimentConfig, service: TrainingService | None = None) -> TrainedExperiment:
    cfg = resolve(cfg)
    raw = load_csv(cfg.data)
    entry = lookup(cfg.dataset_name)
    if entry and raw.channels != entry.channels:
        logger.warning("%s has %d channels, catalog lists %d", cfg.data, raw.channels, entry.channels)
    if cfg.benchmark_length:
        if raw.length < cfg.benchmark_length:
            logger.warning("%s has %d rows, fewer than benchmark length %d", cfg.data, raw.length, cfg.benchmark_length)
        raw = raw.truncate(cfg.benchmark_length)

    data = build_dataset(raw, cfg.split, cfg.lookback, cfg.horizon)
    service = service or TrainingService()
    params, report = service.train(cfg.model_spec(), data, cfg.train_config())
    result = ExperimentResult(
        config=cfg,
        mse=report.mse,
        mae=report.mae,
        train_mse=report.train_mse,
        train_mae=report.train_mae,
        best_epoch=report.best_epoch,
        train_loss_curve=report.train_loss_curve,
        val_loss_curve=report.val_loss_curve,
        test_mse_curve=report.test_mse_curve,
        train_mse_curve=report.train_mse_curve,
        wall_clock_seconds=report.wall_clock_seconds,
        version=__version__,
    )
    return TrainedExperiment(result=result, params=params, data=data, raw=raw)


def run_experiment(cfg: ExperimentConfig, service: TrainingService | None = None) -> ExperimentResult:
    return train_experiment(cfg, service).result


def default_result_name(cfg: ExperimentConfig) -> str:
    dataset = cfg.dataset_name or (Path(cfg.data).stem if cfg.data else "series")
    return f"{dataset}_{cfg.model}_{cfg.loss}_h{cfg.horizon}_a{cfg.alpha:g}_b{cfg.beta:g}_s{cfg.seed}.json"


def write_result(result: ExperimentResult, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(result.model_dump_json(indent=2))
    return path


def write_curves(result: ExperimentResult, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            "epoch": range(1, len(result.val_loss_curve) + 1),
            "train_loss": result.train_loss_curve,
            "val_loss": result.val_loss_curve,
        }
    )
    if result.test_mse_curve:
        frame["test_mse"] = result.test_mse_curve
    if result.train_mse_curve:
        frame["train_mse"] = result.train_mse_curve
    frame.to_csv(path, index=False)
    return path


def prediction_frame(run: TrainedExperiment, window_indices: Sequence[int]) -> pd.DataFrame:
    """
    Lookback, ground truth and forecast for the chosen test windows, one row per
    (window, channel, step). Steps run from -lookback to horizon - 1; the forecast
    is empty on the lookback rows. `*_raw` columns undo the z-scoring.
    """
    data = run.data
    starts = data.target_starts("test")
    outside = [i for i in window_indices if not 0 <= i < starts.size]
    if not window_indices or outside:
        raise ConfigError(f"prediction windows {list(outside or window_indices)} must lie in [0, {starts.size})")

    chosen = starts[list(window_indices)]
    x, y = data.batch(chosen)
    forecast = forward(run.params.constants(), Tensor(x)).values
    steps = np.arange(-data.lookback, data.horizon)
    lookback_gap = np.full((data.lookback, data.channels), np.nan)

    frames = []
    for k, (index, start) in enumerate(zip(window_indices, chosen)):
        actual = np.concatenate([x[k], y[k]])
        predicted = np.concatenate([lookback_gap, forecast[k]])
        actual_raw, predicted_raw = data.stats.invert(actual), data.stats.invert(predicted)
        dates = [run.raw.timestamps[row] for row in start + steps]
        for n, channel in enumerate(data.series.channel_names):
            frames.append(pd.DataFrame({
                "window": index,
                "channel": channel,
                "step": steps,
                "date": dates,
                "actual": actual[:, n],
                "predicted": predicted[:, n],
                "actual_raw": actual_raw[:, n],
                "predicted_raw": predicted_raw[:, n],
            }))
    return pd.concat(frames, ignore_index=True)


def write_predictions(run: TrainedExperiment, path: str | Path, window_indices: Sequence[int]) -> Path:
    frame = prediction_frame(run, window_indices)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
