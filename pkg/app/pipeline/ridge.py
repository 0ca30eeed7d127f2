"""Multiclass ridge classifier with leave-one-out GCV alpha selection.

Targets are one-hot in {-1, +1}. Features are standardized with training
mean/std (zero-variance columns keep std 1). With centered features the
intercept is the per-class target mean. Probabilities are a softmax over the
decision margins: monotone in the scores, not calibrated.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import DataError, DegenerateLabelsError, ShapeMismatchError
from .minirocket import RocketParams
from .models import Prediction
from .settings import default_alpha_grid

logger = logging.getLogger(__name__)

Solver = Literal["auto", "primal", "dual"]


@dataclass(frozen=True, eq=False)
class RidgeModel:
    weights: np.ndarray          # (p, K)
    intercepts: np.ndarray       # (K,)
    alpha: float
    classes: np.ndarray          # int64 (K,), ascending
    feature_means: np.ndarray    # (p,)
    feature_stds: np.ndarray     # (p,), all > 0
    rocket_params: Optional[RocketParams] = None
    class_names: tuple[str, ...] = field(default_factory=tuple)

    @property
    def num_features(self) -> int:
        return int(self.weights.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.classes.shape[0])

    def with_rocket(self, params: RocketParams, class_names: Sequence[str] = ()) -> "RidgeModel":
        return RidgeModel(
            weights=self.weights,
            intercepts=self.intercepts,
            alpha=self.alpha,
            classes=self.classes,
            feature_means=self.feature_means,
            feature_stds=self.feature_stds,
            rocket_params=params,
            class_names=tuple(class_names),
        )


def _targets(labels: np.ndarray, classes: np.ndarray) -> np.ndarray:
    Y = -np.ones((labels.shape[0], classes.shape[0]))
    Y[np.arange(labels.shape[0]), np.searchsorted(classes, labels)] = 1.0
    return Y


def _solve(Xs: np.ndarray, Yc: np.ndarray, alpha: float, solver: Solver) -> np.ndarray:
    n, p = Xs.shape
    if solver == "auto":
        solver = "primal" if p <= n else "dual"
    if solver == "primal":
        return np.linalg.solve(Xs.T @ Xs + alpha * np.eye(p), Xs.T @ Yc)
    return Xs.T @ np.linalg.solve(Xs @ Xs.T + alpha * np.eye(n), Yc)


def gcv_scores(Xs: np.ndarray, Y: np.ndarray, alphas: Sequence[float], fit_intercept: bool = True) -> np.ndarray:
    """Mean squared leave-one-out residual for each alpha, from one thin SVD."""
    n = Xs.shape[0]
    y_mean = Y.mean(axis=0) if fit_intercept else np.zeros(Y.shape[1])
    Yc = Y - y_mean
    U, s, _ = np.linalg.svd(Xs, full_matrices=False)
    UtY = U.T @ Yc
    s2 = s ** 2
    scores = []
    for alpha in alphas:
        shrink = s2 / (s2 + alpha)
        fitted = U @ (shrink[:, None] * UtY) + y_mean
        hat_diag = (U ** 2) @ shrink
        if fit_intercept:
            hat_diag = hat_diag + 1.0 / n
        residual = (Y - fitted) / np.maximum(1.0 - hat_diag, 1e-12)[:, None]
        scores.append(float(np.mean(residual ** 2)))
    return np.asarray(scores)


def fit_ridge(
    features: np.ndarray,
    labels: Sequence[int],
    alpha_grid: Sequence[float] | None = None,
    *,
    alpha: float | None = None,
    solver: Solver = "auto",
    standardize: bool = True,
    fit_intercept: bool = True,
) -> RidgeModel:
    """Closed-form ridge fit; alpha from alpha_grid by LOO-GCV unless given."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeMismatchError(f"features {X.shape} do not match {y.shape[0]} labels")
    if X.shape[0] < 2:
        raise DataError("ridge fit needs at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise DataError("features contain non-finite values")
    classes = np.unique(y)
    if classes.shape[0] < 2:
        raise DegenerateLabelsError()

    # the intercept equals the target mean only on centered features
    means = X.mean(axis=0) if (standardize or fit_intercept) else np.zeros(X.shape[1])
    if standardize:
        stds = X.std(axis=0)
        stds[stds == 0] = 1.0
    else:
        stds = np.ones(X.shape[1])
    Xs = (X - means) / stds
    Y = _targets(y, classes)
    y_mean = Y.mean(axis=0) if fit_intercept else np.zeros(Y.shape[1])

    if alpha is None:
        grid = list(alpha_grid) if alpha_grid is not None else default_alpha_grid()
        scores = gcv_scores(Xs, Y, grid, fit_intercept)
        alpha = float(grid[int(np.argmin(scores))])
        logger.debug(f"GCV scores {np.round(scores, 5).tolist()} -> alpha {alpha:g}")

    weights = _solve(Xs, Y - y_mean, alpha, solver)
    return RidgeModel(
        weights=weights,
        intercepts=y_mean,
        alpha=float(alpha),
        classes=classes,
        feature_means=means,
        feature_stds=stds,
    )


def decision_function(model: RidgeModel, features: np.ndarray) -> np.ndarray:
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if F.shape[1] != model.num_features:
        raise ShapeMismatchError(f"expected {model.num_features} features, got {F.shape[1]}")
    return ((F - model.feature_means) / model.feature_stds) @ model.weights + model.intercepts


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict_batch(model: RidgeModel, features: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Labels, probabilities and raw scores for a feature matrix."""
    scores = decision_function(model, features)
    proba = softmax(scores)
    labels = model.classes[np.argmax(proba, axis=1)]
    return labels, proba, scores


def predict(model: RidgeModel, fv: np.ndarray) -> Prediction:
    started = time.perf_counter_ns()
    fv = np.asarray(fv, dtype=np.float64)
    if fv.ndim != 1 or fv.shape[0] != model.num_features:
        raise ShapeMismatchError(f"expected {model.num_features} features, got shape {fv.shape}")
    labels, proba, scores = predict_batch(model, fv[None, :])
    return Prediction(
        label=int(labels[0]),
        probabilities=proba[0].tolist(),
        decision_scores=scores[0].tolist(),
        infer_micros=(time.perf_counter_ns() - started) / 1000.0,
    )
