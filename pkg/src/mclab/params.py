"""Motion cloud parameters, derived quantities, and config serialization.

All quantities are physical: speeds in degrees/second, spatial frequencies in
cycles/degree, angles in radians.  Keeping the parameter set unit-true means
one config reproduces the same texture on any sampling grid.
"""

from __future__ import annotations

import dataclasses
import math

from .errors import ConfigurationError, DomainError

__all__ = [
    "MCParams", "DerivedParams", "derived_params", "convert_mode_std",
    "convert_octave", "params_from_config", "params_to_config",
]

_TWO_PI = 2.0 * math.pi


def _wrap_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    theta = math.fmod(theta + math.pi, _TWO_PI)
    if theta < 0.0:
        theta += _TWO_PI
    return theta - math.pi


@dataclasses.dataclass(frozen=True)
class MCParams:
    """Full parameter set of a motion cloud texture.

    Attributes
    ----------
    v0 : pair of floats
        Central translation speed, degrees/second.
    theta0 : float
        Central grating orientation, radians, wrapped into [-pi, pi).
    sigma_theta : float
        Orientation dispersion, radians.
    z0 : float
        Central spatial frequency, cycles/degree.
    sigma_z : float
        Relative spatial frequency dispersion, dimensionless.
    sigma_r : float
        Residual speed dispersion around v0, degrees/second.
    """

    v0: tuple = (0.0, 0.0)
    theta0: float = 0.0
    sigma_theta: float = math.pi / 12.0
    z0: float = 1.0
    sigma_z: float = 0.25
    sigma_r: float = 1.0

    def __post_init__(self):
        try:
            v0 = tuple(float(c) for c in self.v0)
        except TypeError as exc:
            raise ConfigurationError("v0 must be a pair of numbers") from exc
        if len(v0) != 2:
            raise ConfigurationError("v0 must have exactly two components")
        object.__setattr__(self, "v0", v0)
        for name in ("theta0", "sigma_theta", "z0", "sigma_z", "sigma_r"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.z0 > 0.0):
            raise ConfigurationError("z0 must be strictly positive")
        for name in ("sigma_theta", "sigma_z", "sigma_r"):
            if not (getattr(self, name) > 0.0):
                raise ConfigurationError(f"{name} must be strictly positive")
        object.__setattr__(self, "theta0", _wrap_angle(self.theta0))


@dataclasses.dataclass(frozen=True)
class DerivedParams:
    """Alternative descriptions of the frequency and timing content.

    m_z is the mode of the spatial frequency density (cycles/degree), d_z its
    second-moment spread scale (cycles/degree), b_z the octave bandwidth, and
    t_star = 1/(sigma_r z0) the characteristic temporal scale in seconds.
    """

    m_z: float
    d_z: float
    b_z: float
    t_star: float


def derived_params(params: MCParams) -> DerivedParams:
    s2 = params.sigma_z ** 2
    return DerivedParams(
        m_z=params.z0 / (1.0 + s2),
        d_z=params.z0 * s2 * (1.0 + s2),
        b_z=math.sqrt(8.0 * math.log1p(s2) / math.log(2.0)),
        t_star=1.0 / (params.sigma_r * params.z0),
    )


def convert_mode_std(m_z: float, d_z: float) -> tuple:
    """Recover (z0, sigma_z) from the mode m_z and spread scale d_z.

    sigma_z^2 is the unique nonnegative root of y(1+y)^2 = d_z/m_z, found by
    bracketing bisection; z0 then follows from the mode relation.
    """
    if not (m_z > 0.0):
        raise DomainError("m_z must be strictly positive")
    if d_z < 0.0:
        raise DomainError("d_z must be nonnegative")
    c = d_z / m_z
    if c == 0.0:
        return m_z, 0.0

    def poly(y):
        return y * (1.0 + y) ** 2 - c

    lo, hi = 0.0, max(1.0, c)
    while poly(hi) < 0.0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if poly(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    return m_z * (1.0 + y), math.sqrt(y)


def convert_octave(m_z: float, b_z: float) -> tuple:
    """Recover (z0, sigma_z) from the mode m_z and octave bandwidth b_z."""
    if not (m_z > 0.0):
        raise DomainError("m_z must be strictly positive")
    if b_z < 0.0:
        raise DomainError("b_z must be nonnegative")
    s2 = math.expm1((math.log(2.0) / 8.0) * b_z * b_z)
    return m_z * (1.0 + s2), math.sqrt(s2)


# ----------------------------------------------------------------------------
# config documents

_DIRECT_KEYS = {"v0", "theta0", "sigma_theta", "sigma_r", "z0", "sigma_z"}
_CONVERT_KEYS = {"m_z", "d_z", "b_z"}


def params_from_config(config: dict) -> MCParams:
    """Build MCParams from a plain config mapping.

    The frequency content comes either directly as (z0, sigma_z) or through
    one conversion block, (m_z, d_z) or (m_z, b_z).  Mixing the direct fields
    with a conversion block, or supplying both blocks, is rejected.
    """
    unknown = set(config) - _DIRECT_KEYS - _CONVERT_KEYS
    if unknown:
        raise ConfigurationError(
            f"unknown config fields: {sorted(unknown)}")
    direct = {"z0", "sigma_z"} & set(config)
    converted = _CONVERT_KEYS & set(config)
    if direct and converted:
        raise ConfigurationError(
            "give either (z0, sigma_z) or a conversion block, not both")
    if converted:
        if "m_z" not in converted:
            raise ConfigurationError("conversion block requires m_z")
        if {"d_z", "b_z"} <= converted:
            raise ConfigurationError(
                "d_z and b_z are mutually exclusive conversion targets")
        if "d_z" in converted:
            z0, sigma_z = convert_mode_std(float(config["m_z"]),
                                           float(config["d_z"]))
        elif "b_z" in converted:
            z0, sigma_z = convert_octave(float(config["m_z"]),
                                         float(config["b_z"]))
        else:
            raise ConfigurationError("conversion block requires d_z or b_z")
    else:
        if direct != {"z0", "sigma_z"}:
            raise ConfigurationError(
                "frequency content requires both z0 and sigma_z")
        z0, sigma_z = float(config["z0"]), float(config["sigma_z"])
    missing = {"v0", "theta0", "sigma_theta", "sigma_r"} - set(config)
    if missing:
        raise ConfigurationError(f"missing config fields: {sorted(missing)}")
    return MCParams(v0=config["v0"], theta0=config["theta0"],
                    sigma_theta=config["sigma_theta"], z0=z0, sigma_z=sigma_z,
                    sigma_r=config["sigma_r"])


def params_to_config(params: MCParams) -> dict:
    """Serialize MCParams to a plain JSON-ready mapping."""
    return {
        "v0": list(params.v0),
        "theta0": params.theta0,
        "sigma_theta": params.sigma_theta,
        "z0": params.z0,
        "sigma_z": params.sigma_z,
        "sigma_r": params.sigma_r,
    }
