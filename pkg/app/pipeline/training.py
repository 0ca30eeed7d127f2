"""Train and apply the full window -> features -> ridge pipeline."""
import logging
import time
from typing import Sequence

import numpy as np

from . import minirocket
from .augment import expand_dataset
from .errors import DataError
from .models import Prediction, TrainingSummary
from .ridge import RidgeModel, fit_ridge, predict, predict_batch
from .settings import AugmentConfig, TrainSettings
from .signal import LabeledDataset, MotionWindow

logger = logging.getLogger(__name__)


def train_model(
    ds: LabeledDataset,
    settings: TrainSettings | None = None,
    augment: AugmentConfig | None = None,
) -> tuple[RidgeModel, TrainingSummary]:
    """Augment (training data only), fit MiniRocket, fit ridge; returns the embedded model."""
    settings = settings or TrainSettings()
    augment = augment or AugmentConfig(copies=0)
    if len(ds) == 0:
        raise DataError("training dataset is empty")
    started = time.perf_counter()
    train = expand_dataset(ds, augment.copies, augment)
    params = minirocket.fit(train, settings.features, settings.seed)
    features = minirocket.transform(train.windows, params, jobs=settings.jobs)
    ridge = fit_ridge(features, train.labels, settings.alpha_grid)
    names = ds.class_names or tuple(f"class_{i}" for i in range(max(ds.num_classes(), 7)))
    model = ridge.with_rocket(params, names)
    summary = TrainingSummary(
        alpha=model.alpha,
        num_features=params.num_features,
        dilations=params.dilations.tolist(),
        features_per_dilation=params.features_per_dilation.tolist(),
        n_train_windows=len(ds),
        n_augmented_windows=len(train),
        class_counts=ds.class_counts(),
        seed=settings.seed,
        wall_time_s=time.perf_counter() - started,
    )
    logger.info(
        f"✅ Trained on {len(train)} windows: {params.num_features} features, alpha={model.alpha:g}"
    )
    return model, summary


def classify(model: RidgeModel, window: MotionWindow) -> Prediction:
    """Transform + predict one window; infer_micros covers both steps."""
    started = time.perf_counter_ns()
    features = minirocket.transform(window.data[None], model.rocket_params)
    prediction = predict(model, features[0])
    prediction.infer_micros = (time.perf_counter_ns() - started) / 1000.0
    return prediction


def predict_windows(
    model: RidgeModel, windows: Sequence[MotionWindow], jobs: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Labels and probability rows for a batch of windows."""
    if not windows:
        return np.zeros(0, dtype=np.int64), np.zeros((0, model.num_classes))
    features = minirocket.transform(windows, model.rocket_params, jobs=jobs)
    labels, proba, _ = predict_batch(model, features)
    return labels, proba


def warm_up(model: RidgeModel) -> None:
    """Trigger JIT compilation before the first live window arrives."""
    params = model.rocket_params
    classify(model, MotionWindow(data=np.zeros((params.num_channels, params.input_length))))
