import numpy as np
import pytest

from app.pipeline import minirocket
from app.pipeline.errors import DataError, ShapeMismatchError, UsageError
from app.pipeline.minirocket import (
    KERNEL_INDICES,
    NUM_KERNELS,
    conv_naive,
    kernel_weights,
    plan_dilations,
    transform,
    transform_naive,
)
from app.pipeline.signal import LabeledDataset, MotionWindow


def dyadic(rng, shape):
    """Values on a 1/64 grid: every convolution sum is exact in float64."""
    return np.round(rng.uniform(-2.0, 2.0, shape) * 64.0) / 64.0


def dataset_of(X, labels=None):
    labels = labels if labels is not None else [i % 7 for i in range(len(X))]
    return LabeledDataset(windows=tuple(MotionWindow(data=x) for x in X), labels=tuple(labels))


@pytest.fixture(scope="module")
def quantized():
    rng = np.random.default_rng(11)
    train = dyadic(rng, (14, 24, 96))
    test = dyadic(rng, (8, 24, 96))
    params = minirocket.fit(dataset_of(train), 10_000, seed=0)
    return params, test


def test_kernels_are_zero_sum_and_lexicographic():
    weights = kernel_weights()
    assert weights.shape == (NUM_KERNELS, 9)
    np.testing.assert_array_equal(weights.sum(axis=1), 0.0)
    assert KERNEL_INDICES[0].tolist() == [0, 1, 2]
    assert KERNEL_INDICES[-1].tolist() == [6, 7, 8]


def test_dilation_plan_for_two_second_windows():
    dilations, fpd = plan_dilations(96, 10_000)
    assert dilations[0] == 1
    assert dilations.max() == 11
    assert np.all(np.diff(dilations) > 0)
    assert NUM_KERNELS * fpd.sum() == 9996
    assert fpd.max() - fpd.min() <= 1


def test_dilation_plan_short_window():
    dilations, fpd = plan_dilations(9, 84)
    assert dilations.tolist() == [1]
    assert fpd.tolist() == [1]



def test_small_request_limits_candidate_dilations():
    dilations, fpd = plan_dilations(96, 840)
    assert len(dilations) <= 10
    assert fpd.min() >= 1
    assert NUM_KERNELS * fpd.sum() == 840

def test_window_shorter_than_kernel_is_rejected():
    with pytest.raises(UsageError, match="window shorter than kernel span"):
        plan_dilations(8, 10_000)


def test_too_few_features_requested():
    with pytest.raises(UsageError):
        plan_dilations(96, 50)


def test_fit_is_deterministic(small_ds):
    a = minirocket.fit(small_ds, 840, seed=4)
    b = minirocket.fit(small_ds, 840, seed=4)
    c = minirocket.fit(small_ds, 840, seed=5)
    assert a == b
    assert a != c


def test_fit_rejects_empty_dataset():
    with pytest.raises(DataError):
        minirocket.fit(LabeledDataset(windows=(), labels=()), 840)


def test_single_channel_combinations_are_channel_zero(rng):
    params = minirocket.fit(dataset_of(rng.standard_normal((6, 1, 96))), 840)
    assert np.all(params.combo_counts == 1)
    assert np.all(params.combo_indices == 0)


def test_channel_combinations_are_sorted_and_bounded(small_ds):
    params = minirocket.fit(small_ds, 10_000)
    assert params.combo_counts.min() >= 1
    assert params.combo_counts.max() <= 9
    for g in range(params.num_groups):
        combo = params.combo(g)
        assert np.all(np.diff(combo) > 0)
        assert combo.min() >= 0 and combo.max() < 24


def test_padding_alternates_by_group(small_ds):
    params = minirocket.fit(small_ds, 840)
    g = np.arange(params.num_groups)
    expected = ((g // NUM_KERNELS + g % NUM_KERNELS) % 2) == 0
    np.testing.assert_array_equal(params.paddings, expected)


def test_zero_training_data_gives_zero_biases_and_features():
    X = np.zeros((4, 24, 96))
    params = minirocket.fit(dataset_of(X), 840)
    np.testing.assert_array_equal(params.biases, 0.0)
    np.testing.assert_array_equal(transform(X, params), 0.0)


def test_conv_of_constant_is_zero_on_valid_positions():
    x = np.full(96, 2.5)
    for k in (0, 41, 83):
        for d in (1, 3, 11):
            y = conv_naive(x, kernel_weights()[k], d, padded=False)
            assert y.shape == (96 - 8 * d,)
            np.testing.assert_array_equal(y, 0.0)


def test_conv_of_impulse_is_reversed_kernel():
    x = np.zeros(41)
    x[20] = 1.0
    w = kernel_weights()[17]
    y = conv_naive(x, w, 1, padded=True)
    np.testing.assert_array_equal(y[16:25], w[::-1])
    assert np.count_nonzero(y) == 9


def test_features_are_proportions(small_ds):
    F = transform(small_ds.windows[:5], minirocket.fit(small_ds, 840))
    assert F.shape == (5, 840)
    assert F.min() >= 0.0 and F.max() <= 1.0


def test_fast_transform_equals_naive_definition(quantized):
    params, test = quantized
    assert params.num_features == 9996
    fast = transform(test, params)
    naive = transform_naive(test, params)
    assert np.array_equal(fast, naive)


def test_threaded_transform_matches_serial(quantized):
    params, test = quantized
    np.testing.assert_array_equal(transform(test, params, jobs=3), transform(test, params, jobs=1))


def test_unpadded_features_ignore_constant_offset(quantized):
    params, test = quantized
    base = transform(test, params)
    shifted = transform(test + 0.75, params)
    unpadded = np.zeros(params.num_features, dtype=bool)
    for _, _, _, padded, _, features in params.groups():
        unpadded[features] = not padded
    assert unpadded.any()
    np.testing.assert_array_equal(base[:, unpadded], shifted[:, unpadded])


def test_transform_rejects_wrong_shape(quantized):
    params, _ = quantized
    with pytest.raises(ShapeMismatchError):
        transform(np.zeros((2, 24, 48)), params)
    with pytest.raises(ShapeMismatchError):
        transform(np.zeros((2, 12, 96)), params)


def test_strict_threshold_on_ties():
    # constant zero input: conv == bias == 0 everywhere, nothing strictly above
    X = np.zeros((3, 2, 32))
    params = minirocket.fit(dataset_of(X), 84)
    assert np.array_equal(transform_naive(X, params), transform(X, params))
    assert transform(X, params).sum() == 0.0
