from pydantic import BaseModel, Field, ConfigDict, field_validator, model_validator
from typing import List, Literal, Optional

from src.core.decomp import DEFAULT_SMA_KERNEL, SmoothingFactor

LossName = Literal["mse", "mae", "dbloss"]
ModelKind = Literal["linear", "dlinear"]

LOSS_NAMES: tuple[str, ...] = ("mse", "mae", "dbloss")
MODEL_KINDS: tuple[str, ...] = ("linear", "dlinear")


class DbLossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = Field(0.3, description="EMA smoothing factor, clamped to [0.001, 0.999]")
    beta: float = Field(0.5, ge=0.0, le=1.0, description="Weight of the seasonal loss")
    epsilon: float = Field(1e-8, gt=0.0, description="Stabilizer in the alignment ratio")

    @field_validator("alpha")
    @classmethod
    def _clamp_alpha(cls, v: float) -> float:
        return SmoothingFactor(v).alpha

    @property
    def smoothing(self) -> SmoothingFactor:
        return SmoothingFactor(self.alpha)


class SplitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    train_ratio: float = Field(..., gt=0.0)
    val_ratio: float = Field(..., gt=0.0)
    test_ratio: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def _sums_to_one(self) -> "SplitSpec":
        total = self.train_ratio + self.val_ratio + self.test_ratio
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {total}")
        return self

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """'6:2:2' or '0.7:0.1:0.2' -> ratios normalized to sum 1."""
        parts = [p.strip() for p in text.split(":")]
        if len(parts) != 3:
            raise ValueError(f"split must look like a:b:c, got {text!r}")
        weights = [float(p) for p in parts]
        total = sum(weights)
        if total <= 0:
            raise ValueError(f"split weights must be positive, got {text!r}")
        return cls(
            train_ratio=weights[0] / total,
            val_ratio=weights[1] / total,
            test_ratio=weights[2] / total,
        )

    def label(self) -> str:
        return f"{self.train_ratio:g}:{self.val_ratio:g}:{self.test_ratio:g}"


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: ModelKind = "dlinear"
    sma_kernel: int = Field(DEFAULT_SMA_KERNEL, ge=1)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    loss: LossName = "mse"
    db: DbLossConfig = Field(default_factory=DbLossConfig)
    learning_rate: float = Field(0.005, gt=0.0)
    batch_size: int = Field(64, ge=1)
    max_epochs: int = Field(20, ge=1)
    patience: int = Field(5, ge=0)
    seed: int = 1
    track_test_curve: bool = Field(False, description="Also record test MSE after every epoch")


class EvalReport(BaseModel):
    mse: float = Field(..., ge=0.0)
    mae: float = Field(..., ge=0.0)
    train_loss_curve: List[float] = Field(default_factory=list)
    val_loss_curve: List[float] = Field(default_factory=list)
    test_mse_curve: List[float] = Field(default_factory=list)
    train_mse_curve: List[float] = Field(default_factory=list)
    train_mse: Optional[float] = None
    train_mae: Optional[float] = None
    best_epoch: Optional[int] = None
    wall_clock_seconds: float = 0.0


class ExperimentConfig(BaseModel):
    """One fully-specified run. Keys double as config-file keys."""

    model_config = ConfigDict(extra="forbid")

    dataset_name: Optional[str] = None
    data: Optional[str] = Field(None, description="CSV path; defaults to <DATA_DIR>/<dataset_name>.csv")
    split: Optional[SplitSpec] = None
    benchmark_length: Optional[int] = Field(None, ge=1)
    lookback: int = Field(96, ge=1)
    horizon: int = Field(96, ge=1)
    model: ModelKind = "dlinear"
    sma_kernel: int = Field(DEFAULT_SMA_KERNEL, ge=1)
    loss: LossName = "mse"
    alpha: float = 0.3
    beta: float = Field(0.5, ge=0.0, le=1.0)
    epsilon: float = Field(1e-8, gt=0.0)
    learning_rate: float = Field(0.005, gt=0.0)
    max_epochs: int = Field(20, ge=1)
    patience: int = Field(5, ge=0)
    batch_size: int = Field(64, ge=1)
    seed: int = 1
    track_test_curve: bool = False

    @field_validator("split", mode="before")
    @classmethod
    def _parse_split(cls, v):
        if isinstance(v, str):
            return SplitSpec.parse(v)
        return v

    @field_validator("alpha")
    @classmethod
    def _clamp_alpha(cls, v: float) -> float:
        return SmoothingFactor(v).alpha

    @field_validator("sma_kernel")
    @classmethod
    def _odd_kernel(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError(f"sma_kernel must be odd, got {v}")
        return v

    def db_config(self) -> DbLossConfig:
        return DbLossConfig(alpha=self.alpha, beta=self.beta, epsilon=self.epsilon)

    def model_spec(self) -> ModelConfig:
        return ModelConfig(kind=self.model, sma_kernel=self.sma_kernel)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            loss=self.loss,
            db=self.db_config(),
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            track_test_curve=self.track_test_curve,
        )


class ExperimentResult(BaseModel):
    config: ExperimentConfig
    mse: float
    mae: float
    train_mse: Optional[float] = None
    train_mae: Optional[float] = None
    best_epoch: Optional[int] = None
    train_loss_curve: List[float] = Field(default_factory=list)
    val_loss_curve: List[float] = Field(default_factory=list)
    test_mse_curve: List[float] = Field(default_factory=list)
    train_mse_curve: List[float] = Field(default_factory=list)
    wall_clock_seconds: float = 0.0
    version: str


class SweepConfig(BaseModel):
    """A benchmark: the Cartesian product of the sweep lists over a base config."""

    model_config = ConfigDict(extra="forbid")

    base: ExperimentConfig
    horizons: List[int] = Field(..., min_length=1)
    losses: List[LossName] = Field(..., min_length=1)
    alphas: List[float] = Field(..., min_length=1)
    betas: List[float] = Field(..., min_length=1)
    seeds: List[int] = Field(..., min_length=1)

    @field_validator("horizons")
    @classmethod
    def _positive_horizons(cls, v: List[int]) -> List[int]:
        if any(h < 1 for h in v):
            raise ValueError(f"horizons must be positive, got {v}")
        return v

    @field_validator("betas")
    @classmethod
    def _betas_in_range(cls, v: List[float]) -> List[float]:
        if any(not 0.0 <= b <= 1.0 for b in v):
            raise ValueError(f"betas must lie in [0, 1], got {v}")
        return v

    @property
    def size(self) -> int:
        return len(self.horizons) * len(self.losses) * len(self.alphas) * len(self.betas) * len(self.seeds)


class SummaryRow(BaseModel):
    dataset: str
    model: str
    loss: str
    horizon: int
    alpha: float
    beta: float
    seed: int
    mse: Optional[float] = None
    mae: Optional[float] = None
    error: Optional[str] = None
