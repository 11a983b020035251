"""Parameter validation, derived-quantity conversions, and config round trips."""

import math

import mpmath
import numpy as np
import pytest

from mclab.errors import ConfigurationError, DomainError
from mclab.params import (DerivedParams, MCParams, convert_mode_std,
                          convert_octave, derived_params, params_from_config,
                          params_to_config)


def test_rejects_nonpositive_scale_parameters():
    for kwargs in [dict(z0=0.0), dict(z0=-1.0), dict(sigma_z=0.0),
                   dict(sigma_theta=-0.1), dict(sigma_r=0.0)]:
        with pytest.raises(ConfigurationError):
            MCParams(**kwargs)


def test_central_orientation_wraps_into_principal_range():
    p = MCParams(theta0=math.pi)          # maps to -pi
    assert -math.pi <= p.theta0 < math.pi
    q = MCParams(theta0=7.0)
    assert -math.pi <= q.theta0 < math.pi
    # wrapped angle is the same direction
    assert abs(math.sin(q.theta0 - 7.0)) < 1e-12


def test_v0_coerced_to_float_pair():
    p = MCParams(v0=[3, 4])
    assert p.v0 == (3.0, 4.0)
    with pytest.raises(ConfigurationError):
        MCParams(v0=(1.0, 2.0, 3.0))


# ----------------------------------------------------------------------------
# derived quantities and conversions

def test_derived_quantities_formulas():
    p = MCParams(z0=2.0, sigma_z=0.5, sigma_r=4.0)
    d = derived_params(p)
    assert isinstance(d, DerivedParams)
    assert abs(d.m_z - 2.0 / 1.25) < 1e-14
    assert abs(d.d_z - 2.0 * 0.25 * 1.25) < 1e-14
    assert abs(d.b_z - math.sqrt(8.0 * math.log(1.25) / math.log(2.0))) < 1e-14
    assert abs(d.t_star - 1.0 / (4.0 * 2.0)) < 1e-15


def test_convert_mode_std_reference_point():
    """m_z = d_z = 1 gives sigma_z ~ 0.682, z0 ~ 1.466.  The oracle is a
    50-digit root of y^3 + 2y^2 + y - 1 with y = sigma_z^2."""
    mpmath.mp.dps = 50
    y = mpmath.findroot(lambda y: y ** 3 + 2 * y ** 2 + y - 1, 0.5)
    z0, sigma_z = convert_mode_std(1.0, 1.0)
    assert abs(sigma_z - float(mpmath.sqrt(y))) < 1e-11
    assert abs(z0 - float(1 + y)) < 1e-11
    assert abs(sigma_z - 0.682) < 5e-4
    assert abs(z0 - 1.466) < 5e-4


def test_convert_mode_std_degenerate_limit():
    z0, sigma_z = convert_mode_std(2.5, 1e-14)
    assert sigma_z < 1e-6
    assert abs(z0 - 2.5) < 1e-6


def test_convert_mode_std_round_trip():
    for m, d in [(0.5, 0.1), (1.0, 1.0), (1.28, 1.0), (3.0, 10.0)]:
        z0, sigma_z = convert_mode_std(m, d)
        m_back = z0 / (1.0 + sigma_z ** 2)
        d_back = z0 * sigma_z ** 2 * (1.0 + sigma_z ** 2)
        assert abs(m_back - m) < 1e-10 * m
        assert abs(d_back - d) < 1e-10 * max(d, m)


def test_convert_mode_std_rejects_negative_spread():
    with pytest.raises(DomainError):
        convert_mode_std(1.0, -0.5)


def test_convert_octave_pinned_points():
    z0, sigma_z = convert_octave(1.0, math.sqrt(8.0))
    assert abs(sigma_z - 1.0) < 1e-12
    assert abs(z0 - 2.0) < 1e-12
    z0, sigma_z = convert_octave(1.7, 0.0)
    assert sigma_z == 0.0
    assert abs(z0 - 1.7) < 1e-15


def test_convert_octave_round_trip():
    for b in [0.5, 1.0, 2.0]:
        _, sigma_z = convert_octave(1.0, b)
        b_back = math.sqrt(8.0 * math.log(1.0 + sigma_z ** 2) / math.log(2.0))
        assert abs(b_back - b) < 1e-12


# ----------------------------------------------------------------------------
# config I/O

BASE_CONFIG = {
    "v0": [5.0, 0.0],
    "theta0": 1.5707963267948966,
    "sigma_theta": 0.2617993877991494,
    "sigma_r": 2.0,
}


def test_config_round_trip_with_direct_frequencies():
    cfg = dict(BASE_CONFIG, z0=1.3, sigma_z=0.4)
    p = params_from_config(cfg)
    assert p.z0 == 1.3 and p.sigma_z == 0.4
    assert params_from_config(params_to_config(p)) == p


def test_config_accepts_mode_spread_block():
    cfg = dict(BASE_CONFIG, m_z=1.0, d_z=1.0)
    p = params_from_config(cfg)
    assert abs(p.z0 - 1.466) < 5e-4
    assert abs(p.sigma_z - 0.682) < 5e-4


def test_config_accepts_mode_octave_block():
    cfg = dict(BASE_CONFIG, m_z=1.0, b_z=math.sqrt(8.0))
    p = params_from_config(cfg)
    assert abs(p.sigma_z - 1.0) < 1e-12


def test_config_rejects_mixed_frequency_blocks():
    with pytest.raises(ConfigurationError):
        params_from_config(dict(BASE_CONFIG, z0=1.0, sigma_z=0.2, m_z=1.0,
                                d_z=1.0))
    with pytest.raises(ConfigurationError):
        params_from_config(dict(BASE_CONFIG, m_z=1.0, d_z=1.0,
                                b_z=1.0))


def test_config_rejects_unknown_and_missing_fields():
    with pytest.raises(ConfigurationError):
        params_from_config(dict(BASE_CONFIG, z0=1.0, sigma_z=0.2,
                                contrast=0.5))
    incomplete = dict(BASE_CONFIG, z0=1.0)   # sigma_z missing
    with pytest.raises(ConfigurationError):
        params_from_config(incomplete)
