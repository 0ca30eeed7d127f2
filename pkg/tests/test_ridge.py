from dataclasses import replace

import numpy as np
import pytest

from app.pipeline.errors import DataError, DegenerateLabelsError, ShapeMismatchError
from app.pipeline.ridge import decision_function, fit_ridge, gcv_scores, predict, predict_batch, softmax
from app.pipeline.settings import default_alpha_grid


def random_problem(seed, n=40, p=200, classes=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = np.arange(n) % classes
    rng.shuffle(y)
    return X, y


def test_identity_design_interpolates_targets():
    X = np.eye(2)
    model = fit_ridge(X, [0, 1], alpha=1e-12, standardize=False, fit_intercept=False)
    np.testing.assert_allclose(decision_function(model, X), [[1.0, -1.0], [-1.0, 1.0]], atol=1e-9)
    labels, _, _ = predict_batch(model, X)
    assert labels.tolist() == [0, 1]


def test_identity_design_alpha_one_halves_weights():
    X = np.eye(2)
    near_zero = fit_ridge(X, [0, 1], alpha=1e-12, standardize=False, fit_intercept=False)
    one = fit_ridge(X, [0, 1], alpha=1.0, standardize=False, fit_intercept=False)
    np.testing.assert_allclose(one.weights, near_zero.weights / 2, atol=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_dual_solution_equals_primal(seed):
    X, y = random_problem(seed)
    primal = fit_ridge(X, y, alpha=1.0, solver="primal")
    dual = fit_ridge(X, y, alpha=1.0, solver="dual")
    assert np.max(np.abs(primal.weights - dual.weights)) < 1e-8
    np.testing.assert_array_equal(primal.intercepts, dual.intercepts)


def test_auto_solver_picks_dual_when_wide():
    X, y = random_problem(0)
    auto = fit_ridge(X, y, alpha=2.0)
    dual = fit_ridge(X, y, alpha=2.0, solver="dual")
    np.testing.assert_array_equal(auto.weights, dual.weights)


def test_gcv_alpha_is_in_grid_and_refit_reproduces_model():
    X, y = random_problem(3, n=60, p=30)
    grid = default_alpha_grid()
    chosen = fit_ridge(X, y, grid)
    assert chosen.alpha in grid
    refit = fit_ridge(X, y, alpha=chosen.alpha)
    np.testing.assert_array_equal(chosen.weights, refit.weights)
    np.testing.assert_array_equal(chosen.intercepts, refit.intercepts)


def test_gcv_matches_brute_force_leave_one_out():
    X, y = random_problem(5, n=25, p=8)
    model = fit_ridge(X, y, alpha=1.0)
    Xs = (X - model.feature_means) / model.feature_stds
    Y = np.where(y[:, None] == np.arange(3), 1.0, -1.0)
    residuals = []
    for i in range(len(y)):
        keep = np.arange(len(y)) != i
        Xk = np.c_[np.ones(keep.sum()), Xs[keep]]
        # unpenalized intercept column
        penalty = np.eye(Xk.shape[1])
        penalty[0, 0] = 0.0
        W = np.linalg.solve(Xk.T @ Xk + penalty, Xk.T @ Y[keep])
        residuals.append(Y[i] - np.r_[1.0, Xs[i]] @ W)
    brute = np.mean(np.square(residuals))
    assert gcv_scores(Xs, Y, [1.0])[0] == pytest.approx(brute, rel=1e-8)


def test_zero_variance_feature_gets_unit_std():
    X, y = random_problem(1, n=30, p=5)
    X[:, 2] = 4.0
    model = fit_ridge(X, y, alpha=1.0)
    assert model.feature_stds[2] == 1.0
    assert np.all(model.feature_stds > 0)
    np.testing.assert_allclose(model.weights[2], 0.0, atol=1e-12)


def test_single_class_is_degenerate():
    with pytest.raises(DegenerateLabelsError, match="degenerate labels"):
        fit_ridge(np.ones((5, 3)), [2] * 5)


def test_non_finite_features_rejected():
    X = np.ones((4, 3))
    X[1, 1] = np.nan
    with pytest.raises(DataError):
        fit_ridge(X, [0, 1, 0, 1])


def test_one_sample_rejected():
    with pytest.raises(DataError):
        fit_ridge(np.ones((1, 3)), [0])


def test_classes_sorted_and_non_contiguous_labels():
    X, _ = random_problem(2, n=30, p=6)
    y = np.array([5, 1, 3] * 10)
    model = fit_ridge(X, y, alpha=1.0)
    assert model.classes.tolist() == [1, 3, 5]
    labels, proba, _ = predict_batch(model, X)
    assert set(labels.tolist()) <= {1, 3, 5}
    assert proba.shape == (30, 3)


def test_softmax_dominant_score():
    p = softmax(np.array([10.0] + [-10.0] * 6))
    assert p[0] > 0.999


def test_equal_scores_give_uniform_probabilities_and_lowest_label():
    X, y = random_problem(0, n=21, p=4, classes=7)
    model = fit_ridge(X, y, alpha=1.0)
    flat = np.zeros_like(model.weights)
    tied = replace(model, weights=flat, intercepts=np.zeros(7))
    pred = predict(tied, X[0])
    np.testing.assert_allclose(pred.probabilities, [1 / 7] * 7)
    assert pred.label == 0


def test_prediction_probabilities_form_a_simplex():
    X, y = random_problem(4, n=50, p=12, classes=7)
    model = fit_ridge(X, y)
    rng = np.random.default_rng(0)
    for fv in rng.standard_normal((25, 12)) * 5:
        pred = predict(model, fv)
        assert abs(sum(pred.probabilities) - 1.0) <= 1e-9
        assert min(pred.probabilities) > 0.0
        assert pred.label == model.classes[int(np.argmax(pred.decision_scores))]
        assert pred.infer_micros >= 0.0


def test_label_invariant_under_monotone_score_transform():
    X, y = random_problem(6, n=40, p=10, classes=7)
    model = fit_ridge(X, y, alpha=1.0)
    scores = decision_function(model, X)
    labels, _, _ = predict_batch(model, X)
    np.testing.assert_array_equal(model.classes[np.argmax(np.exp(scores) * 3 + 1, axis=1)], labels)


def test_matches_naive_dense_solve(small_ds):
    from app.pipeline import minirocket

    params = minirocket.fit(small_ds, 840)
    F = minirocket.transform(small_ds.windows, params)
    model = fit_ridge(F, small_ds.labels, alpha=10.0)
    Xs = (F - model.feature_means) / model.feature_stds
    Y = np.where(small_ds.y()[:, None] == model.classes, 1.0, -1.0)
    Yc = Y - Y.mean(axis=0)
    W = np.linalg.inv(Xs.T @ Xs + 10.0 * np.eye(Xs.shape[1])) @ Xs.T @ Yc
    oracle = np.argmax(Xs @ W + Y.mean(axis=0), axis=1)
    labels, _, _ = predict_batch(model, F)
    assert np.mean(model.classes[oracle] == labels) >= 0.99


def test_predict_length_mismatch():
    X, y = random_problem(0, n=10, p=4)
    model = fit_ridge(X, y, alpha=1.0)
    with pytest.raises(ShapeMismatchError):
        predict(model, np.zeros(5))
    with pytest.raises(ShapeMismatchError):
        decision_function(model, np.zeros((2, 3)))
