"""MiniRocket feature transform for multichannel windows.

84 fixed length-9 kernels (weight -1 everywhere, +2 at three positions),
exponentially spaced dilations, random channel combinations per
(dilation, kernel) group, alternating padding, and quantile biases. Each
feature is the proportion of convolution outputs strictly above its bias.

The schedule draws min(32, requested_features // 84) candidate dilations
before dedup. Below 32 * 84 features the candidate count shrinks with the
request, so every surviving dilation still gets at least one feature.

The fast path never convolves with a kernel directly: per dilation it
builds the shared sums
    C_alpha[c, t]    = sum over the 9 taps of -x[c, t + (j - 4) d]
    C_gamma[j, c, t] = 3 x[c, t + (j - 4) d]
and each kernel's output is C_alpha + C_gamma[i0] + C_gamma[i1] + C_gamma[i2].
conv_naive / transform_naive are the direct definitions, kept as the oracle.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .errors import DataError, ShapeMismatchError, UsageError
from .signal import LabeledDataset, MotionWindow

logger = logging.getLogger(__name__)

NUM_KERNELS = 84
KERNEL_LENGTH = 9
MAX_DILATIONS = 32
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# C(9, 3) positions of the +2 weights, lexicographic
KERNEL_INDICES = np.array(list(itertools.combinations(range(KERNEL_LENGTH), 3)), dtype=np.int64)


def kernel_weights() -> np.ndarray:
    """The 84 x 9 weight matrix; every row sums to zero."""
    weights = -np.ones((NUM_KERNELS, KERNEL_LENGTH))
    for k, idx in enumerate(KERNEL_INDICES):
        weights[k, idx] = 2.0
    return weights


@dataclass(frozen=True, eq=False)
class RocketParams:
    num_channels: int
    input_length: int
    dilations: np.ndarray            # int64 (D,)
    features_per_dilation: np.ndarray  # int64 (D,)
    paddings: np.ndarray             # bool (D * 84,)
    combo_counts: np.ndarray         # int64 (D * 84,)
    combo_indices: np.ndarray        # int64 (sum combo_counts,)
    biases: np.ndarray               # float64 (num_features,)
    seed: int = 0

    @property
    def num_features(self) -> int:
        return int(self.biases.shape[0])

    @property
    def num_groups(self) -> int:
        return int(self.paddings.shape[0])

    def combo(self, group: int) -> np.ndarray:
        start = int(self.combo_counts[:group].sum())
        return self.combo_indices[start:start + int(self.combo_counts[group])]

    def groups(self):
        """Yield (group, dilation, kernel, padded, combo, feature_slice) in feature order."""
        f = 0
        start = 0
        g = 0
        for di, d in enumerate(self.dilations):
            n_feat = int(self.features_per_dilation[di])
            for k in range(NUM_KERNELS):
                count = int(self.combo_counts[g])
                combo = self.combo_indices[start:start + count]
                yield g, int(d), k, bool(self.paddings[g]), combo, slice(f, f + n_feat)
                start += count
                f += n_feat
                g += 1

    def __eq__(self, other):
        if not isinstance(other, RocketParams):
            return NotImplemented
        return (
            self.num_channels == other.num_channels
            and self.input_length == other.input_length
            and self.seed == other.seed
            and all(
                a.dtype == b.dtype and np.array_equal(a, b)
                for a, b in zip(self._arrays(), other._arrays())
            )
        )

    def _arrays(self):
        return (
            self.dilations,
            self.features_per_dilation,
            self.paddings,
            self.combo_counts,
            self.combo_indices,
            self.biases,
        )


def plan_dilations(window_len: int, requested_features: int) -> tuple[np.ndarray, np.ndarray]:
    """Exponential dilation schedule and an even per-dilation feature split."""
    if window_len < KERNEL_LENGTH:
        raise UsageError("window shorter than kernel span")
    if requested_features < NUM_KERNELS:
        raise UsageError(f"requested_features must be >= {NUM_KERNELS}")
    per_kernel = requested_features // NUM_KERNELS
    true_max = (window_len - 1) // (KERNEL_LENGTH - 1)
    m = min(MAX_DILATIONS, per_kernel)
    if m == 1 or true_max == 1:
        candidates = [1]
    else:
        exponent = math.log2(true_max) / (m - 1)
        candidates = [int(math.floor(2 ** (j * exponent) + 1e-9)) for j in range(m)]
    dilations = np.array(sorted(set(candidates)), dtype=np.int64)
    base, remainder = divmod(per_kernel, len(dilations))
    counts = np.full(len(dilations), base, dtype=np.int64)
    counts[:remainder] += 1
    return dilations, counts


def quantiles(n: int) -> np.ndarray:
    return np.array([((k + 1) * GOLDEN) % 1.0 for k in range(n)], dtype=np.float64)


@njit(cache=True, nogil=True)
def _dilated_sums(x, d):
    n_ch, length = x.shape
    c_alpha = -x.copy()
    c_gamma = np.zeros((KERNEL_LENGTH, n_ch, length))
    c_gamma[4, :, :] = 3.0 * x
    for j in range(KERNEL_LENGTH):
        if j == 4:
            continue
        shift = (j - 4) * d
        lo = max(0, -shift)
        hi = min(length, length - shift)
        for c in range(n_ch):
            for t in range(lo, hi):
                c_alpha[c, t] -= x[c, t + shift]
                c_gamma[j, c, t] = 3.0 * x[c, t + shift]
    return c_alpha, c_gamma


@njit(cache=True, nogil=True)
def _combine(c_alpha, c_gamma, i0, i1, i2, channels, out):
    length = out.shape[0]
    out[:] = 0.0
    for m in range(channels.shape[0]):
        c = channels[m]
        for t in range(length):
            out[t] += c_alpha[c, t] + c_gamma[i0, c, t] + c_gamma[i1, c, t] + c_gamma[i2, c, t]


@njit(cache=True, nogil=True)
def _fit_biases(X, dilations, fpd, paddings, combo_counts, combo_indices, indices, picks, qs):
    length = X.shape[2]
    biases = np.zeros(qs.shape[0])
    local = np.arange(KERNEL_LENGTH)
    conv = np.zeros(length)
    f = 0
    g = 0
    start = 0
    for di in range(dilations.shape[0]):
        d = dilations[di]
        for k in range(indices.shape[0]):
            count = combo_counts[g]
            channels = combo_indices[start:start + count]
            lo = 0 if paddings[g] else 4 * d
            hi = length if paddings[g] else length - 4 * d
            for _ in range(fpd[di]):
                sub = X[picks[f]][channels]
                c_alpha, c_gamma = _dilated_sums(sub, d)
                _combine(c_alpha, c_gamma, indices[k, 0], indices[k, 1], indices[k, 2], local[:count], conv)
                biases[f] = np.quantile(conv[lo:hi], qs[f])
                f += 1
            start += count
            g += 1
    return biases


@njit(cache=True, nogil=True)
def _window_features(x, dilations, fpd, paddings, combo_counts, combo_indices, biases, indices, out):
    length = x.shape[1]
    conv = np.zeros(length)
    f = 0
    g = 0
    start = 0
    for di in range(dilations.shape[0]):
        d = dilations[di]
        c_alpha, c_gamma = _dilated_sums(x, d)
        for k in range(indices.shape[0]):
            count = combo_counts[g]
            _combine(c_alpha, c_gamma, indices[k, 0], indices[k, 1], indices[k, 2],
                     combo_indices[start:start + count], conv)
            lo = 0 if paddings[g] else 4 * d
            hi = length if paddings[g] else length - 4 * d
            n = hi - lo
            for _ in range(fpd[di]):
                bias = biases[f]
                positive = 0
                for t in range(lo, hi):
                    if conv[t] > bias:
                        positive += 1
                out[f] = positive / n
                f += 1
            start += count
            g += 1


@njit(cache=True, nogil=True)
def _transform_batch(X, dilations, fpd, paddings, combo_counts, combo_indices, biases, indices):
    out = np.zeros((X.shape[0], biases.shape[0]))
    for i in range(X.shape[0]):
        _window_features(X[i], dilations, fpd, paddings, combo_counts, combo_indices, biases, indices, out[i])
    return out


def fit(train: LabeledDataset, requested_features: int = 10_000, seed: int = 0) -> RocketParams:
    """Draw channel combinations and fit quantile biases on training windows."""
    if len(train) == 0:
        raise DataError("cannot fit MiniRocket on an empty dataset")
    X = np.ascontiguousarray(train.X(), dtype=np.float64)
    _, num_channels, length = X.shape
    dilations, fpd = plan_dilations(length, requested_features)
    rng = np.random.default_rng(seed)

    num_groups = len(dilations) * NUM_KERNELS
    max_channels = min(num_channels, KERNEL_LENGTH)
    exponents = rng.uniform(0.0, math.log2(max_channels + 1), num_groups)
    combo_counts = np.clip(np.floor(2.0 ** exponents), 1, max_channels).astype(np.int64)
    combo_indices = np.concatenate(
        [np.sort(rng.choice(num_channels, int(c), replace=False)) for c in combo_counts]
    ).astype(np.int64)
    group_ids = np.arange(num_groups)
    paddings = ((group_ids // NUM_KERNELS + group_ids % NUM_KERNELS) % 2 == 0)

    num_features = NUM_KERNELS * int(fpd.sum())
    picks = rng.integers(0, X.shape[0], num_features).astype(np.int64)
    biases = _fit_biases(
        X, dilations, fpd, paddings, combo_counts, combo_indices, KERNEL_INDICES, picks, quantiles(num_features)
    )
    logger.debug(f"Fitted MiniRocket: {num_features} features over dilations {dilations.tolist()}")
    return RocketParams(
        num_channels=num_channels,
        input_length=length,
        dilations=dilations,
        features_per_dilation=fpd,
        paddings=paddings,
        combo_counts=combo_counts,
        combo_indices=combo_indices,
        biases=biases,
        seed=seed,
    )


def _as_batch(windows: Sequence[MotionWindow] | np.ndarray, params: RocketParams) -> np.ndarray:
    if isinstance(windows, np.ndarray):
        X = windows if windows.ndim == 3 else windows[None]
    else:
        X = np.stack([w.data for w in windows]) if len(windows) else np.zeros((0, params.num_channels, params.input_length))
    if X.shape[1:] != (params.num_channels, params.input_length):
        raise ShapeMismatchError(
            f"window shape {tuple(X.shape[1:])} does not match fitted shape "
            f"({params.num_channels}, {params.input_length})"
        )
    return np.ascontiguousarray(X, dtype=np.float64)


def transform(windows: Sequence[MotionWindow] | np.ndarray, params: RocketParams, jobs: int = 1) -> np.ndarray:
    """PPV features, one row per window, every value in [0, 1]."""
    X = _as_batch(windows, params)
    args = (
        params.dilations,
        params.features_per_dilation,
        params.paddings,
        params.combo_counts,
        params.combo_indices,
        params.biases,
        KERNEL_INDICES,
    )
    if jobs <= 1 or X.shape[0] < 2 * jobs:
        return _transform_batch(X, *args)
    chunks = np.array_split(np.arange(X.shape[0]), jobs)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(lambda idx: _transform_batch(X[idx], *args), chunks))
    return np.concatenate(parts)


def conv_naive(x: np.ndarray, kernel: np.ndarray, dilation: int, padded: bool) -> np.ndarray:
    """y[t] = sum_j w[j] x[t + (j - 4) d]; zero padding, or valid positions only."""
    x = np.asarray(x, dtype=np.float64)
    length = x.shape[0]
    y = np.zeros(length)
    for j in range(KERNEL_LENGTH):
        shift = (j - 4) * dilation
        lo, hi = max(0, -shift), min(length, length - shift)
        if lo < hi:
            y[lo:hi] += kernel[j] * x[lo + shift:hi + shift]
    if padded:
        return y
    margin = 4 * dilation
    if length - 2 * margin <= 0:
        return np.zeros(0)
    return y[margin:length - margin]


def transform_naive(windows: Sequence[MotionWindow] | np.ndarray, params: RocketParams) -> np.ndarray:
    X = _as_batch(windows, params)
    weights = kernel_weights()
    out = np.zeros((X.shape[0], params.num_features))
    for i, x in enumerate(X):
        for _, d, k, padded, combo, features in params.groups():
            conv = sum(conv_naive(x[c], weights[k], d, padded) for c in combo)
            out[i, features] = (conv[None, :] > params.biases[features, None]).mean(axis=1)
    return out
