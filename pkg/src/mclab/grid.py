"""Discrete sampling contract: pixels and frames mapped to physical units.

A GridSpec fixes how a movie samples the visual field: nx by ny pixels at
ppd pixels per degree, emitted at fps frames per second.  The synthesizer
recursion may run on a finer internal time step delta; emitted frames are
then every (1/fps)/delta-th recursion state, so delta must divide the
frame interval.  All frequency axes are in physical units: cycles per
degree spatially, Hz temporally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError

__all__ = ["GridSpec"]


def _is_power_of_two(n) -> bool:
    return isinstance(n, int) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Sampling geometry of a movie.

    Fields
    ------
    nx, ny : int
        Frame size in pixels; powers of two for FFT efficiency.
    ppd : float
        Pixels per degree of visual angle.
    fps : float
        Emitted frames per second.
    delta : float, optional
        Internal recursion time step in seconds; defaults to 1/fps.  Must
        divide the frame interval evenly so emitted frames fall on
        recursion samples.
    """

    nx: int
    ny: int
    ppd: float
    fps: float
    delta: Optional[float] = None

    def __post_init__(self):
        for name in ("nx", "ny"):
            if not _is_power_of_two(getattr(self, name)):
                raise ConfigurationError(
                    f"{name} must be a positive power of two, got "
                    f"{getattr(self, name)!r}")
        for name in ("ppd", "fps"):
            value = float(getattr(self, name))
            if not (value > 0.0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be positive, got "
                                         f"{getattr(self, name)!r}")
            object.__setattr__(self, name, value)
        if self.delta is None:
            object.__setattr__(self, "delta", 1.0 / self.fps)
        delta = float(self.delta)
        if not (delta > 0.0 and math.isfinite(delta)):
            raise ConfigurationError(f"delta must be positive, got "
                                     f"{self.delta!r}")
        object.__setattr__(self, "delta", delta)
        ratio = self.frame_interval / delta
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ConfigurationError(
                f"delta={delta!r} must divide the frame interval "
                f"{self.frame_interval!r} a whole number of times")

    @property
    def frame_interval(self) -> float:
        """Seconds between emitted frames."""
        return 1.0 / self.fps

    @property
    def substeps(self) -> int:
        """Recursion updates per emitted frame."""
        return round(self.frame_interval / self.delta)

    @property
    def width_deg(self) -> float:
        return self.nx / self.ppd

    @property
    def height_deg(self) -> float:
        return self.ny / self.ppd

    @property
    def xi_x(self) -> np.ndarray:
        """Horizontal frequency axis, FFT bin order, cycles/degree."""
        return np.fft.fftfreq(self.nx, d=1.0 / self.ppd)

    @property
    def xi_y(self) -> np.ndarray:
        """Vertical frequency axis, FFT bin order, cycles/degree."""
        return np.fft.fftfreq(self.ny, d=1.0 / self.ppd)

    @property
    def xi_max(self) -> float:
        """Largest spatial frequency magnitude on the grid (the corner)."""
        return math.hypot(np.abs(self.xi_x).max(), np.abs(self.xi_y).max())

    def taus(self, n_frames: int) -> np.ndarray:
        """Temporal frequency axis for a stack of emitted frames, Hz."""
        return np.fft.fftfreq(n_frames, d=self.frame_interval)

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "ppd": self.ppd,
                "fps": self.fps, "delta": self.delta}

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        known = {"nx", "ny", "ppd", "fps", "delta"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(
                f"unknown grid fields: {sorted(unknown)}")
        return cls(**data)
