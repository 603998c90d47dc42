import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from src.backbones.base import ModelParams
from src.backbones.factory import forward, init_params
from src.core.losses import objective
from src.core.tensor import Tensor, backward
from src.errors import ContractError, NumericError
from src.models.schemas import EvalReport, ModelConfig, TrainConfig
from src.services.dataset import WindowedDataset, windows

logger = logging.getLogger(__name__)

# (epoch, batch_index, params, x, y), called before each optimizer step
BatchHook = Callable[[int, int, ModelParams, np.ndarray, np.ndarray], None]

EVAL_BATCH_SIZE = 256


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        arrays = params.arrays()
        return cls(
            m={k: np.zeros_like(a) for k, a in arrays.items()},
            v={k: np.zeros_like(a) for k, a in arrays.items()},
        )


def adam_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update. Returns new parameters and a new state."""
    if set(grads) != set(params.tensors) or set(state.m) != set(params.tensors):
        raise ContractError(
            f"gradient keys {sorted(grads)} do not match parameter keys {params.names}"
        )
    step = state.step + 1
    bc1 = 1.0 - state.beta1 ** step
    bc2 = 1.0 - state.beta2 ** step

    new_values, new_m, new_v = {}, {}, {}
    for name, theta in params.arrays().items():
        g = grads[name]
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_values[name] = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v

    next_state = AdamState(new_m, new_v, step, state.beta1, state.beta2, state.eps)
    return params.replace(new_values), next_state


@dataclass
class EarlyStopping:
    """Tracks the best validation loss and the parameters that produced it."""

    patience: int
    best_loss: float = np.inf
    best_epoch: int | None = None
    best_params: ModelParams | None = None
    bad_epochs: int = field(default=0)

    def __call__(self, epoch: int, val_loss: float, params: ModelParams) -> bool:
        """Record an epoch; True means stop."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.best_params = params
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= max(self.patience, 1)


class TrainingService:
    def __init__(self, clock: Callable[[], float] = time.perf_counter):
        self.clock = clock

    def _loss(self, cfg: TrainConfig, params: ModelParams, x: np.ndarray, y: np.ndarray) -> Tensor:
        return objective(cfg.loss, forward(params, Tensor(x)), Tensor(y), cfg.db)

    def _segment_loss(self, cfg: TrainConfig, params: ModelParams, data: WindowedDataset, segment: str) -> float:
        frozen = params.constants()
        total, count = 0.0, 0
        for x, y in windows(data, segment, EVAL_BATCH_SIZE):
            total += self._loss(cfg, frozen, x, y).item() * len(x)
            count += len(x)
        return total / count

    def evaluate(self, params: ModelParams, data: WindowedDataset, segment: str = "test") -> EvalReport:
        """MSE and MAE over every window, horizon step and channel of `segment`."""
        frozen = params.constants()
        sq, ab, count = 0.0, 0.0, 0
        for x, y in windows(data, segment, EVAL_BATCH_SIZE):
            err = forward(frozen, Tensor(x)).data - y
            sq += float(np.sum(err * err))
            ab += float(np.sum(np.abs(err)))
            count += err.size
        return EvalReport(mse=sq / count, mae=ab / count)

    def train(
        self,
        model: ModelConfig,
        data: WindowedDataset,
        cfg: TrainConfig,
        on_batch: BatchHook | None = None,
    ) -> tuple[ModelParams, EvalReport]:
        params = init_params(model.kind, data.lookback, data.horizon, cfg.seed, sma_kernel=model.sma_kernel)
        state = AdamState.zeros(params)
        shuffler = np.random.default_rng(cfg.seed)
        stopper = EarlyStopping(cfg.patience)
        train_curve: list[float] = []
        val_curve: list[float] = []
        test_curve: list[float] = []
        train_mse_curve: list[float] = []
        started = self.clock()

        for epoch in range(1, cfg.max_epochs + 1):
            epoch_started = self.clock()
            shuffle_seed = int(shuffler.integers(2**32))
            total, count = 0.0, 0
            for index, (x, y) in enumerate(windows(data, "train", cfg.batch_size, shuffle_seed)):
                if on_batch is not None:
                    on_batch(epoch, index, params, x, y)
                try:
                    loss = self._loss(cfg, params, x, y)
                except NumericError as exc:
                    raise NumericError(f"non-finite loss at epoch {epoch} batch {index}: {exc}") from exc
                grads = params.collect(backward(loss))
                try:
                    params, state = adam_step(params, grads, state, cfg.learning_rate)
                except NumericError as exc:
                    raise NumericError(
                        f"non-finite parameter update at epoch {epoch} batch {index}: {exc}"
                    ) from exc
                total += loss.item() * len(x)
                count += len(x)

            train_loss = total / count
            try:
                val_loss = self._segment_loss(cfg, params, data, "val")
            except NumericError as exc:
                raise NumericError(f"non-finite validation loss at epoch {epoch}: {exc}") from exc
            train_curve.append(train_loss)
            val_curve.append(val_loss)
            if cfg.track_test_curve:
                test_curve.append(self.evaluate(params, data, "test").mse)
                train_mse_curve.append(self.evaluate(params, data, "train").mse)
            logger.info(
                "epoch=%d train_loss=%.6f val_loss=%.6f seconds=%.3f",
                epoch, train_loss, val_loss, self.clock() - epoch_started,
            )
            if stopper(epoch, val_loss, params):
                break

        best = stopper.best_params or params
        test = self.evaluate(best, data, "test")
        train_metrics = self.evaluate(best, data, "train")
        seconds = self.clock() - started
        logger.info(
            "training finished epochs=%d best_epoch=%s seconds=%.3f",
            len(val_curve), stopper.best_epoch, seconds,
        )
        report = EvalReport(
            mse=test.mse,
            mae=test.mae,
            train_loss_curve=train_curve,
            val_loss_curve=val_curve,
            test_mse_curve=test_curve,
            train_mse_curve=train_mse_curve,
            train_mse=train_metrics.mse,
            train_mae=train_metrics.mae,
            best_epoch=stopper.best_epoch,
            wall_clock_seconds=seconds,
        )
        return best, report
