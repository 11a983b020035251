"""Analytic power spectrum of motion clouds and per-frequency ODE coefficients.

The spectrum factorizes over spatial frequency magnitude, orientation, and a
temporal line shape centered on the plane tau = -<v0, xi>.  Every spatial
frequency evolves as an independent critically damped second-order stochastic
ODE; `spde_coeffs` exposes that per-frequency parametrization.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .densities import eval_fr, eval_ftheta, eval_fz, l_transform
from .errors import DomainError
from .params import MCParams

__all__ = [
    "FreqPoint", "SpdeCoeffs", "spde_coeffs", "mc_power_spectrum",
    "power_spectrum_grid", "spatial_power_grid", "lorentzian_sq",
]

_KINDS = ("gaussian", "spde_exact")


@dataclasses.dataclass(frozen=True)
class FreqPoint:
    """A single spatiotemporal frequency (xi in cycles/degree, tau in Hz)."""

    xi: tuple
    tau: float

    @property
    def xi_norm(self) -> float:
        return math.hypot(self.xi[0], self.xi[1])

    @property
    def xi_angle(self) -> float:
        return math.atan2(self.xi[1], self.xi[0])


@dataclasses.dataclass(frozen=True)
class SpdeCoeffs:
    """Coefficients of one spatial frequency's stochastic ODE.

    nu_hat is the relaxation time in seconds; critical damping fixes
    alpha_hat = 2/nu_hat and beta_hat = 1/nu_hat^2.  sigma_w_hat scales the
    driving noise so the stationary power matches the analytic spectrum.
    """

    alpha_hat: float
    beta_hat: float
    sigma_w_hat: float
    nu_hat: float


def lorentzian_sq(u):
    """Squared Lorentzian line shape (1+u^2)^-2, the relaxation spectrum."""
    u = np.asarray(u, dtype=float)
    out = (1.0 + u * u) ** -2
    return float(out) if out.ndim == 0 else out


def spde_coeffs(xi, params: MCParams) -> SpdeCoeffs:
    """Per-frequency ODE coefficients at spatial frequency xi (cycles/degree).

    The zero frequency has no finite relaxation time and must be excluded by
    the caller (synthesis treats it as exactly zero).
    """
    z = math.hypot(float(xi[0]), float(xi[1]))
    if z == 0.0:
        raise DomainError("spde coefficients are undefined at zero frequency")
    ang = math.atan2(float(xi[1]), float(xi[0]))
    nu = 1.0 / (params.sigma_r * z)
    sw2 = eval_fz(z, params) * eval_ftheta(ang, params) / (nu * z * z)
    return SpdeCoeffs(alpha_hat=2.0 / nu, beta_hat=1.0 / nu ** 2,
                      sigma_w_hat=math.sqrt(sw2), nu_hat=nu)


def mc_power_spectrum(p: FreqPoint, params: MCParams,
                      kind: str = "spde_exact") -> float:
    """Analytic power spectrum value at one spatiotemporal frequency.

    The temporal argument is the speed -(tau + <v0, xi>)/|xi|; a central
    translation therefore shears the spectrum along tau without reshaping it.
    kind "gaussian" averages the gaussian radial speed density over grating
    directions by quadrature; kind "spde_exact" evaluates the closed-form
    relaxation line shape directly.  The value at xi = 0 is 0 by convention
    (textures are zero-mean).
    """
    if kind not in _KINDS:
        raise DomainError(f"unknown spectrum kind: {kind!r}")
    xi0, xi1 = float(p.xi[0]), float(p.xi[1])
    z = math.hypot(xi0, xi1)
    if z == 0.0:
        return 0.0
    ang = math.atan2(xi1, xi0)
    shift = float(p.tau) + params.v0[0] * xi0 + params.v0[1] * xi1
    spatial = eval_fz(z, params) * eval_ftheta(ang, params) / (z * z)
    if kind == "spde_exact":
        temporal = lorentzian_sq(shift / (params.sigma_r * z))
    else:
        radial = lambda r: eval_fr(abs(r), params, kind="gaussian")
        temporal = l_transform(radial, -shift / z)
    return spatial * temporal


def power_spectrum_grid(xi_x, xi_y, taus, params: MCParams,
                        kind: str = "spde_exact"):
    """Spectrum sampled on a separable frequency grid.

    Returns an array of shape (len(taus), len(xi_y), len(xi_x)), matching the
    axis order of a 3-D FFT of a (time, y, x) frame stack.  The gaussian kind
    runs one quadrature per grid point and is meant for small validation
    grids; the exact kind is fully vectorized.
    """
    if kind not in _KINDS:
        raise DomainError(f"unknown spectrum kind: {kind!r}")
    xi_x = np.asarray(xi_x, dtype=float)
    xi_y = np.asarray(xi_y, dtype=float)
    taus = np.asarray(taus, dtype=float)
    xx = xi_x[np.newaxis, np.newaxis, :]
    yy = xi_y[np.newaxis, :, np.newaxis]
    tt = taus[:, np.newaxis, np.newaxis]
    z = np.hypot(xx, yy)
    nonzero = z > 0.0
    z_safe = np.where(nonzero, z, 1.0)
    ang = np.arctan2(yy, xx)
    spatial = np.where(
        nonzero,
        eval_fz(z_safe, params) * eval_ftheta(ang, params) / z_safe ** 2,
        0.0,
    )
    shift = tt + params.v0[0] * xx + params.v0[1] * yy
    if kind == "spde_exact":
        temporal = lorentzian_sq(shift / (params.sigma_r * z_safe))
        return spatial * temporal

    radial = lambda r: eval_fr(abs(r), params, kind="gaussian")
    n_t, n_y, n_x = len(taus), len(xi_y), len(xi_x)
    out = np.zeros((n_t, n_y, n_x))
    for iy in range(n_y):
        for ix in range(n_x):
            if not nonzero[0, iy, ix]:
                continue
            sp = spatial[0, iy, ix]
            zz = z[0, iy, ix]
            for it in range(n_t):
                out[it, iy, ix] = sp * l_transform(
                    radial, -shift[it, iy, ix] / zz)
    return out


def spatial_power_grid(xi_x, xi_y, params: MCParams,
                       kind: str = "gaussian"):
    """Temporal integral of the spectrum on a spatial frequency grid.

    Closed forms: integrating the line shape over tau contributes a factor
    2|xi| for the gaussian kind (the direction average preserves the unit
    mass of the even-extended radial density) and (pi/2) sigma_r |xi| for the
    exact kind.  Shape (len(xi_y), len(xi_x)); zero at the zero frequency.
    """
    if kind not in _KINDS:
        raise DomainError(f"unknown spectrum kind: {kind!r}")
    xi_x = np.asarray(xi_x, dtype=float)
    xi_y = np.asarray(xi_y, dtype=float)
    xx = xi_x[np.newaxis, :]
    yy = xi_y[:, np.newaxis]
    z = np.hypot(xx, yy)
    nonzero = z > 0.0
    z_safe = np.where(nonzero, z, 1.0)
    ang = np.arctan2(yy, xx)
    base = eval_fz(z_safe, params) * eval_ftheta(ang, params) / z_safe
    if kind == "gaussian":
        factor = 2.0
    else:
        factor = 0.5 * math.pi * params.sigma_r
    return np.where(nonzero, factor * base, 0.0)
