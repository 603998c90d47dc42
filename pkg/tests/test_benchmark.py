import pandas as pd
import pytest

from src import __version__
from src.errors import ConfigError, NumericError
from src.models.schemas import ExperimentConfig, ExperimentResult
from src.services.benchmark import BenchmarkService, aggregate, build_sweep
from src.services.experiment import validate, write_result

BASE = {"data": "toy.csv", "split": "6:2:2", "lookback": 16, "horizon": 8, "sma_kernel": 5}


def fake_runner(cfg: ExperimentConfig) -> ExperimentResult:
    # deterministic metrics that depend on the cell and the seed
    score = cfg.horizon / 100 + (0.01 if cfg.loss == "mse" else 0.0) + cfg.seed / 1000
    return ExperimentResult(config=cfg.model_copy(update={"dataset_name": "toy"}), mse=score, mae=score / 2,
                            version=__version__)


def sweep_of(**lists):
    return build_sweep(BASE, {}, {k: lists.get(k) for k in ("horizons", "losses", "alphas", "betas", "seeds")})


def test_sweep_lists_default_to_base_values():
    sweep = sweep_of()
    assert (sweep.horizons, sweep.losses, sweep.alphas, sweep.betas, sweep.seeds) == ([8], ["mse"], [0.3], [0.5], [1])
    assert sweep.size == 1


def test_comma_lists_are_parsed():
    sweep = sweep_of(horizons="96,192", losses="mse,dbloss", seeds="1, 2,3")
    assert sweep.horizons == [96, 192]
    assert sweep.losses == ["mse", "dbloss"]
    assert sweep.seeds == [1, 2, 3]
    assert sweep.size == 12


def test_sweep_lists_from_file_and_flags():
    file_values = {**BASE, "horizons": "96,192", "betas": "0.2,0.8"}
    sweep = build_sweep(file_values, {"lookback": 32}, {"horizons": "336", "losses": None})
    assert sweep.base.lookback == 32
    assert sweep.horizons == [336]
    assert sweep.betas == [0.2, 0.8]


def test_empty_or_invalid_sweep_lists():
    with pytest.raises(ConfigError, match="horizons"):
        sweep_of(horizons="")
    with pytest.raises(ConfigError, match="losses"):
        sweep_of(losses="mse,huber")
    with pytest.raises(ConfigError, match="betas"):
        sweep_of(betas="0.5,1.5")


def test_expand_order_is_cartesian():
    sweep = sweep_of(horizons="8,12", losses="mse,dbloss", seeds="1,2")
    configs = BenchmarkService(runner=fake_runner).expand(sweep)
    assert len(configs) == 8
    assert [(c.horizon, c.loss, c.seed) for c in configs[:3]] == [(8, "mse", 1), (8, "mse", 2), (8, "dbloss", 1)]
    assert all(c.lookback == 16 for c in configs)


@pytest.mark.parametrize("jobs", [1, 3])
def test_run_writes_summary_and_run_files(tmp_path, jobs):
    sweep = sweep_of(horizons="8,12", losses="mse,dbloss", seeds="1,2")
    summary = BenchmarkService(runner=fake_runner).run(sweep, tmp_path, jobs=jobs)

    assert len(summary) == 8
    assert summary["error"].isna().all()
    written = pd.read_csv(tmp_path / "summary.csv")
    assert list(written.columns) == ["dataset", "model", "loss", "horizon", "alpha", "beta", "seed", "mse", "mae", "error"]
    assert written["horizon"].tolist() == [8, 8, 8, 8, 12, 12, 12, 12]
    assert len(list((tmp_path / "runs").glob("*.json"))) == 8
    assert sorted(p.name for p in (tmp_path / "runs").iterdir())[0].startswith("0000_toy_dlinear_mse_h8")


def test_failed_run_becomes_error_row(tmp_path):
    def flaky(cfg):
        if cfg.loss == "dbloss":
            raise NumericError("non-finite loss at epoch 2 batch 5")
        return fake_runner(cfg)

    summary = BenchmarkService(runner=flaky).run(sweep_of(losses="mse,dbloss"), tmp_path)
    failed = summary[summary["loss"] == "dbloss"].iloc[0]
    assert "NumericError" in failed["error"] and "epoch 2 batch 5" in failed["error"]
    assert pd.isna(failed["mse"])
    assert summary[summary["loss"] == "mse"]["error"].isna().all()


def test_unwritable_run_file_becomes_error_row(tmp_path, mocker):
    def picky_write(result, path):
        if result.config.loss == "dbloss":
            raise OSError("disk full")
        return write_result(result, path)

    mocker.patch("src.services.benchmark.write_result", side_effect=picky_write)
    summary = BenchmarkService(runner=fake_runner).run(sweep_of(losses="mse,dbloss"), tmp_path)
    failed = summary[summary["loss"] == "dbloss"].iloc[0]
    assert "OSError: disk full" in failed["error"]
    assert summary[summary["loss"] == "mse"]["error"].isna().all()
    assert (tmp_path / "summary.csv").is_file()


def test_summary_mean_averages_over_seeds(tmp_path):
    BenchmarkService(runner=fake_runner).run(sweep_of(losses="mse,dbloss", seeds="1,2,3"), tmp_path)
    means = pd.read_csv(tmp_path / "summary_mean.csv")
    assert len(means) == 2
    row = means[means["loss"] == "dbloss"].iloc[0]
    assert row["seeds"] == 3
    assert row["mse"] == pytest.approx(0.08 + 0.002)


def test_aggregate_skips_failed_runs():
    summary = pd.DataFrame([
        dict(dataset="d", model="m", loss="mse", horizon=8, alpha=0.3, beta=0.5, seed=1, mse=1.0, mae=1.0, error=None),
        dict(dataset="d", model="m", loss="mse", horizon=8, alpha=0.3, beta=0.5, seed=2, mse=None, mae=None, error="x"),
    ])
    means = aggregate(summary)
    assert means["seeds"].tolist() == [1]
    assert means["mse"].tolist() == [1.0]


def test_base_config_is_validated():
    with pytest.raises(ConfigError, match="lookback"):
        build_sweep({**BASE, "lookback": 0}, {}, {})
    assert validate(ExperimentConfig, BASE).horizon == 8
