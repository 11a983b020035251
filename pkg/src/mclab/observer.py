"""Bayesian observer model for two-interval speed judgments.

An observer measures the log-transformed speed of each interval with
frequency-dependent Gaussian noise, shifts the measurement by a
frequency-dependent prior term, and picks the interval with the larger
shifted estimate.  Because both internal estimates are Gaussian, the
probability of either choice has a probit closed form; the simulated
observer realizes the identical decision rule by explicit sampling so
the two paths can be cross-checked.

All public entry points take speeds in deg/s and transform internally;
the internal measurement scale is log-speed, ln(1 + u / u0).
"""

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ConfigurationError, DomainError
from .grid import GridSpec

__all__ = [
    "ObserverModel",
    "log_speed",
    "log_speed_inverse",
    "map_estimate",
    "psi",
    "psychometric_theoretical",
    "simulate_observer",
]

U0_DEFAULT = 0.3


def psi(t):
    """Standard normal CDF, the observer's response sigmoid."""
    return ndtr(t)


def log_speed(u: float, u0: float = U0_DEFAULT) -> float:
    """Compress a speed in deg/s onto the observer's internal scale.

    The map ln(1 + u/u0) is zero at rest, near-linear below u0, and
    logarithmic above it.  Speeds at or below -u0 have no image.
    """
    if u <= -u0:
        raise DomainError(
            f"speed u={u:g} deg/s is outside the log-speed domain "
            f"(u > {-u0:g} required)")
    return math.log1p(u / u0)


def log_speed_inverse(x: float, u0: float = U0_DEFAULT) -> float:
    """Inverse of log_speed: the speed in deg/s with internal value x."""
    return u0 * math.expm1(x)


@dataclass(frozen=True)
class ObserverModel:
    """Per-frequency sensory noise and prior slope of one observer.

    sigma_by_z maps spatial frequency (cycles/deg) to the likelihood
    width in log-speed units; a_by_z maps it to the prior slope in
    inverse log-speed units.  u_max bounds the prior support.
    """

    sigma_by_z: Mapping[float, float]
    a_by_z: Mapping[float, float]
    u_max: float = 20.0
    u0: float = U0_DEFAULT

    def __post_init__(self):
        if self.u_max <= 0.0:
            raise ConfigurationError("u_max must be positive")
        if self.u0 <= 0.0:
            raise ConfigurationError("u0 must be positive")
        for z, sigma in self.sigma_by_z.items():
            if not (sigma > 0.0 and math.isfinite(sigma)):
                raise ConfigurationError(
                    f"likelihood width at z={z:g} must be a positive "
                    f"finite number, got {sigma!r}")

    def sigma(self, z: float) -> float:
        return _lookup(self.sigma_by_z, z, "sigma_by_z")

    def slope(self, z: float) -> float:
        return _lookup(self.a_by_z, z, "a_by_z")


def _lookup(table: Mapping[float, float], z: float, name: str) -> float:
    """Tolerant frequency lookup: config arithmetic produces keys that
    differ from literals in the last bits, so match within float noise."""
    value = table.get(z)
    if value is not None:
        return value
    for key, value in table.items():
        if math.isclose(key, z, rel_tol=1e-9, abs_tol=1e-12):
            return value
    raise ConfigurationError(
        f"observer model has no {name} entry at z={z!r}")


def map_estimate(m: float, z: float, model: ObserverModel) -> float:
    """Prior-shifted readout of one internal measurement.

    The Laplacian prior shifts the measurement by -a_z * sigma_z^2; the
    result is clamped to the prior support [0, log_speed(u_max)].
    """
    est = m - model.slope(z) * model.sigma(z) ** 2
    top = log_speed(model.u_max, model.u0)
    return min(max(est, 0.0), top)


def psychometric_theoretical(u: float, z: float, u_star: float,
                             z_star: float,
                             model: ObserverModel) -> float:
    """Probability that the (u, z_star) interval is judged faster than
    the (u_star, z) interval, in closed form.

    Both internal estimates are Gaussian, so their difference is too:
    the choice probability is a probit in the log-speed difference with
    a bias set by the two prior terms and a width combining both
    likelihood widths.
    """
    s_star = model.sigma(z_star)
    s_z = model.sigma(z)
    num = (log_speed(u, model.u0) - log_speed(u_star, model.u0)
           - model.slope(z_star) * s_star ** 2
           + model.slope(z) * s_z ** 2)
    return float(psi(num / math.hypot(s_star, s_z)))


def simulate_observer(schedule: Sequence, model: ObserverModel,
                      seed: int, measurement: str = "gaussian",
                      grid: Optional[GridSpec] = None,
                      n_frames: Optional[int] = None):
    """Run the decision rule over a schedule and return the responses.

    Each schedule entry carries pair = ((u1, z1), (u2, z2)) in
    presentation order.  The default measurement draws M ~ N(u~,
    sigma_z^2) per interval; measurement="mle" instead synthesizes each
    interval (entries then need stim_params and stim_seeds) and reads
    the speed off the rendered stack, which is orders of magnitude
    slower and meant for desk-scale checks only.
    """
    if measurement not in ("gaussian", "mle"):
        raise ConfigurationError(
            f"unknown measurement kind {measurement!r}")
    if measurement == "mle":
        if grid is None:
            raise ConfigurationError(
                "measurement='mle' needs a synthesis grid")
        if n_frames is None:
            n_frames = max(3, round(0.25 * grid.fps))
        from .mle import mle_speed
        from .synth import synth_frames

    rng = np.random.default_rng(seed)
    responses = []
    for trial in schedule:
        estimates = []
        for idx, (u, z) in enumerate(trial.pair):
            if measurement == "gaussian":
                m = (log_speed(u, model.u0)
                     + model.sigma(z) * rng.standard_normal())
            else:
                stack = synth_frames(trial.stim_params[idx], grid,
                                     n_frames, trial.stim_seeds[idx])
                u_hat = mle_speed(stack).u_hat
                m = log_speed(max(u_hat, 0.0), model.u0)
            estimates.append(map_estimate(m, z, model))
        if estimates[0] > estimates[1]:
            responses.append("first")
        elif estimates[1] > estimates[0]:
            responses.append("second")
        else:
            responses.append("first" if rng.random() < 0.5
                             else "second")
    return responses
