"""Jitter and time-warp augmentation for training windows.

All functions take an explicit numpy Generator, so a dataset expanded from the
same (seed, input) is bitwise reproducible.
"""
import logging

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import UsageError
from .settings import AugmentConfig
from .signal import LabeledDataset, MotionWindow

logger = logging.getLogger(__name__)

MAX_WARP_ATTEMPTS = 1000


def jitter(w: MotionWindow, cfg: AugmentConfig, rng: np.random.Generator) -> MotionWindow:
    """Add iid Gaussian noise; std is per channel (relative) or absolute."""
    if cfg.jitter_sigma == 0:
        return MotionWindow(data=w.data, t_start_ms=w.t_start_ms, stale=w.stale)
    if cfg.jitter_relative:
        sigma = cfg.jitter_sigma * w.data.std(axis=1, keepdims=True)
    else:
        sigma = np.full((w.num_channels, 1), cfg.jitter_sigma)
    noise = rng.standard_normal(w.data.shape) * sigma
    return MotionWindow(data=w.data + noise, t_start_ms=w.t_start_ms, stale=w.stale)


def warp_map(window_len: int, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Strictly increasing tau sampled at window_len points, tau[0] = 0, tau[-1] = 1.

    Interior knots are displaced by N(0, warp_sigma) in window fractions; a cubic
    spline through the knots is redrawn until it is strictly increasing on a
    grid four times finer than the window.
    """
    u = np.linspace(0.0, 1.0, window_len)
    if cfg.warp_sigma == 0 or cfg.warp_knots < 3:
        return u
    knots = np.linspace(0.0, 1.0, cfg.warp_knots)
    fine = np.linspace(0.0, 1.0, 4 * window_len)
    for _ in range(MAX_WARP_ATTEMPTS):
        displaced = knots.copy()
        displaced[1:-1] += rng.normal(0.0, cfg.warp_sigma, cfg.warp_knots - 2)
        if np.any(np.diff(displaced) <= 0):
            continue
        spline = CubicSpline(knots, displaced)
        if np.all(np.diff(spline(fine)) > 0):
            tau = spline(u)
            tau[0], tau[-1] = 0.0, 1.0
            if np.all(np.diff(tau) > 0):
                return tau
    logger.warning(f"⚠️ No monotone warp after {MAX_WARP_ATTEMPTS} draws; using identity")
    return u


def time_warp(w: MotionWindow, cfg: AugmentConfig, rng: np.random.Generator) -> MotionWindow:
    """Resample every channel at a random monotone time map (endpoints pinned)."""
    if w.window_len < 4:
        raise UsageError("time_warp needs window_len >= 4")
    if cfg.warp_sigma == 0:
        return MotionWindow(data=w.data, t_start_ms=w.t_start_ms, stale=w.stale)
    tau = warp_map(w.window_len, cfg, rng)
    positions = tau * (w.window_len - 1)
    grid = np.arange(w.window_len, dtype=np.float64)
    data = np.stack([np.interp(positions, grid, channel) for channel in w.data])
    return MotionWindow(data=data, t_start_ms=w.t_start_ms, stale=w.stale)


def expand_dataset(ds: LabeledDataset, copies_per_window: int, cfg: AugmentConfig) -> LabeledDataset:
    """Originals first, then copies_per_window jitter(time_warp(w)) copies of each window."""
    if copies_per_window < 0:
        raise UsageError("copies_per_window must be >= 0")
    if copies_per_window == 0 or len(ds) == 0:
        return ds
    rng = np.random.default_rng(cfg.seed)
    windows = list(ds.windows)
    labels = list(ds.labels)
    for window, label in zip(ds.windows, ds.labels):
        for _ in range(copies_per_window):
            windows.append(jitter(time_warp(window, cfg, rng), cfg, rng))
            labels.append(label)
    logger.debug(f"Expanded {len(ds)} windows to {len(windows)}")
    return LabeledDataset(windows=tuple(windows), labels=tuple(labels), class_names=ds.class_names)
