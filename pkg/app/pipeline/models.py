from typing import List, Optional, TypedDict

from pydantic import BaseModel, ConfigDict, Field


class SensorFrame(BaseModel):
    """One timestamped 6-channel reading from one IMU unit (ingest wire format)."""

    model_config = ConfigDict(populate_by_name=True, extra="ignore")

    seq: int = 0
    t_ms: float
    sensor_id: int = Field(alias="sensor")
    ax: float
    ay: float
    az: float
    gx: float
    gy: float
    gz: float

    @property
    def accel(self) -> tuple[float, float, float]:
        return (self.ax, self.ay, self.az)

    @property
    def gyro(self) -> tuple[float, float, float]:
        return (self.gx, self.gy, self.gz)

    @property
    def values(self) -> tuple[float, ...]:
        return (self.ax, self.ay, self.az, self.gx, self.gy, self.gz)

    def to_wire(self) -> dict:
        return self.model_dump(by_alias=True)


class Prediction(BaseModel):
    label: int
    probabilities: List[float]
    decision_scores: List[float]
    infer_micros: float = 0.0


class TriggerEvent(BaseModel):
    """Server -> client event, one per classified window."""

    model_config = ConfigDict(populate_by_name=True)

    t_window_end_ms: float = Field(alias="t_ms")
    label: int = Field(ge=0, le=6)
    probability: float
    probs: List[float]
    latency_ms: float = Field(ge=0.0)
    stale: bool = False
    window: int = 0
    triggered: bool = True

    def to_wire(self) -> dict:
        return self.model_dump(by_alias=True)


class LatencyRecord(BaseModel):
    window: int
    t_ms: float
    label: int
    latency_ms: float
    infer_ms: float
    dropped: int = 0


class LatencySummary(BaseModel):
    count: int
    latency_p50_ms: float
    latency_p95_ms: float
    latency_max_ms: float
    infer_p50_ms: float
    infer_p95_ms: float


class RocCurve(BaseModel):
    fpr: List[float]
    tpr: List[float]


class EvalReport(BaseModel):
    k: int
    seed: int
    n_samples: int
    class_names: List[str]
    fold_sizes: List[int]
    fold_accuracy: List[float]
    mean_accuracy: float
    std_accuracy: float
    macro_f1: float
    confusion: List[List[int]]
    per_class_auc: List[Optional[float]]
    macro_auc: Optional[float]
    absent_classes: List[int] = Field(default_factory=list)
    roc_curves: List[Optional[RocCurve]]
    mean_roc: RocCurve


class TrainingSummary(BaseModel):
    alpha: float
    num_features: int
    dilations: List[int]
    features_per_dilation: List[int]
    n_train_windows: int
    n_augmented_windows: int
    class_counts: dict[int, int]
    seed: int
    wall_time_s: float


class BenchReport(BaseModel):
    iterations: int
    num_features: int
    window_shape: List[int]
    p50_ms: float
    p95_ms: float
    p99_ms: float
    max_ms: float
    mean_ms: float
    samples_ms: List[float]
    machine: dict[str, str]


class ReproState(TypedDict, total=False):
    out_dir: str
    seed: int
    features: int
    folds: int
    replay_speed: float
    replay_windows: int
    bench_iterations: int
    dataset_path: str
    model_path: str
    training: dict
    report: dict
    replay: dict
    latency: dict
    bench: dict
    report_path: str
