import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from src.config import configure_logging, settings
from src.core.decomp import DEFAULT_SMA_KERNEL, SmoothingFactor, ema_decompose, sma_decompose
from src.errors import ConfigError, DblossError, IngestionError
from src.models.schemas import ExperimentConfig
from src.services.benchmark import SWEEP_KEYS, BenchmarkService, build_sweep
from src.services.dataset import load_csv
from src.services.experiment import (
    default_result_name,
    merge,
    read_config_file,
    train_experiment,
    validate,
    write_curves,
    write_predictions,
    write_result,
)

logger = logging.getLogger(__name__)

# argparse dests that map one-to-one onto ExperimentConfig keys
CONFIG_FLAGS = list(ExperimentConfig.model_fields)


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file, or a JSON result to replay")
    parser.add_argument("--data", help="CSV path with header date,<channels...>")
    parser.add_argument("--dataset-name", help="Catalog name (ETTh1, ETTm2, ...); also the file stem under DBLOSS_DATA_DIR")
    parser.add_argument("--split", help="Chronological split a:b:c, e.g. 6:2:2")
    parser.add_argument("--benchmark-length", help="Truncate the series to its first L rows")
    parser.add_argument("--lookback")
    parser.add_argument("--horizon")
    parser.add_argument("--model", help="linear or dlinear")
    parser.add_argument("--sma-kernel", help="DLinear moving-average window (odd)")
    parser.add_argument("--loss", help="mse, mae or dbloss")
    parser.add_argument("--alpha", help="EMA smoothing factor for dbloss")
    parser.add_argument("--beta", help="Seasonal weight for dbloss")
    parser.add_argument("--epsilon", help="Alignment-ratio stabilizer for dbloss")
    parser.add_argument("--learning-rate", "--lr", dest="learning_rate")
    parser.add_argument("--max-epochs")
    parser.add_argument("--patience")
    parser.add_argument("--batch-size")
    parser.add_argument("--seed")
    parser.add_argument("--track-test-curve", action="store_const", const=True, default=None,
                        help="Record test MSE after every epoch")


def _overrides(args: argparse.Namespace) -> dict:
    return {key: getattr(args, key, None) for key in CONFIG_FLAGS}


def _file_values(args: argparse.Namespace) -> dict:
    return read_config_file(args.config) if args.config else {}


def _window_indices(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"prediction windows must be a comma list of integers, got {text!r}") from None


def cmd_decompose(args: argparse.Namespace) -> int:
    raw = load_csv(args.input)
    x = raw.values[np.newaxis]
    if args.method == "ema":
        parts = ema_decompose(x, SmoothingFactor(args.alpha))
    else:
        parts = sma_decompose(x, args.kernel)

    written = []
    for component in ("trend", "seasonal"):
        values = getattr(parts, component).values[0]
        frame = pd.DataFrame(values, columns=raw.channel_names)
        frame.insert(0, "date", raw.timestamps)
        path = Path(f"{args.output}.{component}.csv")
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g")
        written.append(path)

    for path in written:
        print(f"Saved {path}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = validate(ExperimentConfig, merge(_file_values(args), _overrides(args)))
    prediction_windows = _window_indices(args.prediction_windows) if args.predictions else []
    run = train_experiment(cfg)
    result = run.result

    output = Path(args.output) if args.output else Path(settings.RESULTS_DIR) / default_result_name(result.config)
    write_result(result, output)
    if args.curves:
        write_curves(result, args.curves)
        print(f"Saved curves to {args.curves}")
    if args.predictions:
        write_predictions(run, args.predictions, prediction_windows)
        print(f"Saved predictions to {args.predictions}")

    print(f"{result.config.dataset_name} {result.config.model} loss={result.config.loss} "
          f"horizon={result.config.horizon}: mse={result.mse:.6f} mae={result.mae:.6f}")
    print(f"Saved result to {output}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    sweep_overrides = {key: getattr(args, key) for key in SWEEP_KEYS}
    sweep = build_sweep(_file_values(args), _overrides(args), sweep_overrides)
    out_dir = Path(args.out or settings.RESULTS_DIR)
    summary = BenchmarkService().run(sweep, out_dir, jobs=args.jobs)

    failed = int(summary["error"].notna().sum())
    print(f"{len(summary)} runs, {failed} failed")
    print(f"Saved summary to {out_dir / 'summary.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Decomposition-loss forecasting toolkit")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default from DBLOSS_LOG_LEVEL)")
    commands = parser.add_subparsers(dest="command", required=True)

    decompose = commands.add_parser("decompose", help="Split a CSV into trend and seasonal files")
    decompose.add_argument("--input", required=True)
    decompose.add_argument("--output", required=True, help="Output prefix; writes <prefix>.trend.csv and <prefix>.seasonal.csv")
    decompose.add_argument("--alpha", type=float, default=0.3)
    decompose.add_argument("--method", choices=["ema", "sma"], default="ema")
    decompose.add_argument("--kernel", type=int, default=DEFAULT_SMA_KERNEL)
    decompose.set_defaults(handler=cmd_decompose)

    train = commands.add_parser("train", help="Train and evaluate one configuration")
    _add_experiment_flags(train)
    train.add_argument("--output", help="Result JSON path")
    train.add_argument("--curves", help="Also write per-epoch curves to this CSV")
    train.add_argument("--predictions", help="Also write lookback, truth and forecast of test windows to this CSV")
    train.add_argument("--prediction-windows", default="0", help="Comma list of test window indices for --predictions")
    train.set_defaults(handler=cmd_train)

    benchmark = commands.add_parser("benchmark", help="Run a sweep over horizons, losses, alpha, beta and seeds")
    _add_experiment_flags(benchmark)
    benchmark.add_argument("--horizons", help="Comma list, e.g. 96,192,336,720")
    benchmark.add_argument("--losses", help="Comma list, e.g. mse,dbloss")
    benchmark.add_argument("--alphas", help="Comma list of smoothing factors")
    benchmark.add_argument("--betas", help="Comma list of seasonal weights")
    benchmark.add_argument("--seeds", help="Comma list of seeds")
    benchmark.add_argument("--jobs", type=int, default=settings.JOBS)
    benchmark.add_argument("--out", help="Output directory (default DBLOSS_RESULTS_DIR)")
    benchmark.set_defaults(handler=cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except (ConfigError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DblossError as exc:
        logger.debug("%s failed", args.command, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
