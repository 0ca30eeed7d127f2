"""Per-window inference timing (transform + predict) for a trained model."""
import logging
import os
import platform
import time

import numba
import numpy as np

from .errors import UsageError
from .latency import nearest_rank
from .models import BenchReport
from .ridge import RidgeModel
from .signal import MotionWindow
from .training import classify, warm_up

logger = logging.getLogger(__name__)


def machine_info() -> dict[str, str]:
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "cpu_count": str(os.cpu_count()),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
    }


def bench(model: RidgeModel, iterations: int = 1000, seed: int = 0) -> BenchReport:
    if iterations < 1:
        raise UsageError("iterations must be >= 1")
    params = model.rocket_params
    if params is None:
        raise UsageError("model has no feature transform to benchmark")
    warm_up(model)
    rng = np.random.default_rng(seed)
    window = MotionWindow(data=rng.standard_normal((params.num_channels, params.input_length)))
    samples = []
    for _ in range(iterations):
        started = time.perf_counter()
        classify(model, window)
        samples.append((time.perf_counter() - started) * 1000.0)
    report = BenchReport(
        iterations=iterations,
        num_features=params.num_features,
        window_shape=[params.num_channels, params.input_length],
        p50_ms=nearest_rank(samples, 50),
        p95_ms=nearest_rank(samples, 95),
        p99_ms=nearest_rank(samples, 99),
        max_ms=max(samples),
        mean_ms=float(np.mean(samples)),
        samples_ms=samples,
        machine=machine_info(),
    )
    logger.info(f"⏱️ {iterations} windows: p50 {report.p50_ms:.2f} ms, p95 {report.p95_ms:.2f} ms")
    return report
