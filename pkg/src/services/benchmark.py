import itertools
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Mapping

import pandas as pd

from src.models.schemas import ExperimentConfig, ExperimentResult, SummaryRow, SweepConfig
from src.services.experiment import default_result_name, merge, run_experiment, validate, write_result

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = list(SummaryRow.model_fields)
CELL_KEYS = ["dataset", "model", "loss", "horizon", "alpha", "beta"]
SWEEP_KEYS = ("horizons", "losses", "alphas", "betas", "seeds")


def _write_csv_atomic(frame: pd.DataFrame, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        frame.to_csv(tmp, index=False)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def aggregate(summary: pd.DataFrame) -> pd.DataFrame:
    """Mean mse/mae over seeds per cell; failed runs are left out of the means."""
    ok = summary.dropna(subset=["mse"])
    if ok.empty:
        return pd.DataFrame(columns=CELL_KEYS + ["mse", "mae", "seeds"])
    return ok.groupby(CELL_KEYS, as_index=False, sort=False).agg(
        mse=("mse", "mean"),
        mae=("mae", "mean"),
        seeds=("seed", "count"),
    )


class BenchmarkService:
    """Runs the Cartesian product of a sweep and writes a summary table.

    Runs share nothing mutable; the summary writer is the only point where
    they meet, and it runs after all of them finish.
    """

    def __init__(self, runner: Callable[[ExperimentConfig], ExperimentResult] = run_experiment):
        self.runner = runner

    def expand(self, sweep: SweepConfig) -> list[ExperimentConfig]:
        base = sweep.base.model_dump()
        configs = []
        for horizon, loss, alpha, beta, seed in itertools.product(
            sweep.horizons, sweep.losses, sweep.alphas, sweep.betas, sweep.seeds
        ):
            values = {**base, "horizon": horizon, "loss": loss, "alpha": alpha, "beta": beta, "seed": seed}
            configs.append(validate(ExperimentConfig, values))
        return configs

    def _run_one(self, index: int, cfg: ExperimentConfig, runs_dir: Path) -> SummaryRow:
        row = dict(
            dataset=cfg.dataset_name or (Path(cfg.data).stem if cfg.data else ""),
            model=cfg.model,
            loss=cfg.loss,
            horizon=cfg.horizon,
            alpha=cfg.alpha,
            beta=cfg.beta,
            seed=cfg.seed,
        )
        try:
            result = self.runner(cfg)
            write_result(result, runs_dir / f"{index:04d}_{default_result_name(result.config)}")
        except Exception as exc:
            logger.error("run %d (%s) failed: %s", index, default_result_name(cfg), exc)
            return SummaryRow(**row, error=f"{type(exc).__name__}: {exc}")

        logger.info("run %d done mse=%.6f mae=%.6f", index, result.mse, result.mae)
        row["dataset"] = result.config.dataset_name or row["dataset"]
        return SummaryRow(**row, mse=result.mse, mae=result.mae)

    def run(self, sweep: SweepConfig, out_dir: str | Path, jobs: int = 1) -> pd.DataFrame:
        out_dir = Path(out_dir)
        runs_dir = out_dir / "runs"
        runs_dir.mkdir(parents=True, exist_ok=True)
        configs = self.expand(sweep)
        logger.info("benchmark: %d runs with %d job(s)", len(configs), jobs)

        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            futures = [pool.submit(self._run_one, i, cfg, runs_dir) for i, cfg in enumerate(configs)]
            rows = [f.result() for f in futures]

        summary = pd.DataFrame([r.model_dump() for r in rows], columns=SUMMARY_COLUMNS)
        _write_csv_atomic(summary, out_dir / "summary.csv")
        _write_csv_atomic(aggregate(summary), out_dir / "summary_mean.csv")
        return summary


def _as_list(value: Any) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [part.strip() for part in str(value).split(",") if part.strip()]


def build_sweep(
    file_values: Mapping[str, Any],
    overrides: Mapping[str, Any],
    sweep_overrides: Mapping[str, Any],
) -> SweepConfig:
    """
    Split comma-separated sweep lists from the base keys. A list that is never
    given defaults to the base config's single value.
    """
    values = dict(file_values)
    lists = {key: values.pop(key) for key in SWEEP_KEYS if key in values}
    lists.update({k: v for k, v in sweep_overrides.items() if v is not None})
    base = validate(ExperimentConfig, merge(values, overrides))
    defaults = {
        "horizons": [base.horizon],
        "losses": [base.loss],
        "alphas": [base.alpha],
        "betas": [base.beta],
        "seeds": [base.seed],
    }
    sweep = {key: _as_list(lists[key]) if key in lists else defaults[key] for key in SWEEP_KEYS}
    return validate(SweepConfig, {"base": base, **sweep})
