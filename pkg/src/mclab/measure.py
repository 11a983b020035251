"""Measurement utilities: calibrated periodogram, smoothing, band
masking, relative errors, and empirical autocovariance.

The periodogram is normalized so its expectation IS the analytic power
spectrum in physical units: P = |FFT3(frames)|^2 / (T*ny*nx * ppd^2 * fps).
Unit-variance white noise then sits at the flat level 1/(ppd^2 * fps),
and synthesizer output can be compared against the model with no fitted
scale factor.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .synth import FrameStack

__all__ = [
    "band_mask",
    "box_smooth",
    "periodogram",
    "rel_l2_error",
    "spatial_autocov",
    "temporal_acf",
]


def periodogram(stacks: Union[FrameStack, Sequence[FrameStack]]
                ) -> np.ndarray:
    """Ensemble-averaged 3-D periodogram of one or more stacks.

    All stacks must share grid and shape.  Returns an array of shape
    (n_frames, ny, nx) in FFT bin order, calibrated so that its
    expectation equals the analytic spectrum.
    """
    if isinstance(stacks, FrameStack):
        stacks = [stacks]
    stacks = list(stacks)
    if not stacks:
        raise ConfigurationError("periodogram needs at least one stack")
    grid = stacks[0].grid
    shape = stacks[0].frames.shape
    for s in stacks[1:]:
        if s.grid != grid or s.frames.shape != shape:
            raise ConfigurationError(
                "all stacks in a periodogram ensemble must share grid "
                "and shape")
    norm = shape[0] * grid.ny * grid.nx * grid.ppd ** 2 * grid.fps
    acc = np.zeros(shape)
    for s in stacks:
        spec = np.fft.fftn(s.frames)
        acc += (spec.real ** 2 + spec.imag ** 2)
    return acc / (norm * len(stacks))


def box_smooth(power: np.ndarray) -> np.ndarray:
    """3-wide boxcar mean over every axis, periodic at the edges to match
    the circular topology of FFT bins."""
    return ndimage.uniform_filter(power, size=3, mode="wrap")


def band_mask(reference: np.ndarray, frac: float = 0.01) -> np.ndarray:
    """Bins where the reference reaches frac of its maximum."""
    return reference >= frac * reference.max()


def rel_l2_error(estimate: np.ndarray, reference: np.ndarray,
                 mask: Optional[np.ndarray] = None) -> float:
    """Relative L2 error of estimate against reference, optionally
    restricted to a mask."""
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if mask is not None:
        est = est[mask]
        ref = ref[mask]
    denom = np.linalg.norm(ref.ravel())
    if denom == 0.0:
        raise ConfigurationError("reference is identically zero on the "
                                 "comparison region")
    return float(np.linalg.norm((est - ref).ravel()) / denom)


def spatial_autocov(stack: FrameStack) -> np.ndarray:
    """Circular spatial autocovariance, averaged over frames.

    Entry [dy, dx] is the average over pixels and frames of
    frame[y, x] * frame[y+dy, x+dx] with periodic indexing.
    """
    frames = stack.frames
    n_pix = frames.shape[1] * frames.shape[2]
    spec = np.fft.fft2(frames, axes=(-2, -1))
    acc = np.fft.ifft2(spec.real ** 2 + spec.imag ** 2,
                       axes=(-2, -1)).real
    return acc.mean(axis=0) / n_pix


def temporal_acf(series: np.ndarray, n_lags: int) -> np.ndarray:
    """Normalized autocorrelation of a (possibly complex) time series at
    lags 0..n_lags; returns the real part."""
    x = np.asarray(series)
    n = x.shape[0]
    if n_lags >= n:
        raise ConfigurationError("n_lags must be below the series length")
    sig2 = np.vdot(x, x).real / n
    out = np.empty(n_lags + 1)
    for lag in range(n_lags + 1):
        out[lag] = (np.vdot(x[:n - lag], x[lag:]).real
                    / (n - lag) / sig2)
    return out
