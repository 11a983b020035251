"""Oracle tests for the component densities and the direction-average transform.

Independent oracles used here:
  * adaptive quadrature (scipy.integrate.quad) for every normalization claim,
  * a closed-form arccos expression for the direction average of an indicator,
  * a cosh substitution that removes the grazing-angle singularity, giving a
    second, structurally different quadrature for the same transform,
  * high-precision reference values from mpmath where a closed form exists.
"""

import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from mclab.densities import eval_fr, eval_ftheta, eval_fz, l_transform, linv_h
from mclab.errors import DomainError
from mclab.params import MCParams

PARAMS = MCParams(v0=(1.0, 0.0), theta0=0.3, sigma_theta=math.pi / 12,
                  z0=1.2, sigma_z=0.35, sigma_r=0.8)


# ----------------------------------------------------------------------------
# spatial frequency density

def test_fz_integrates_to_one():
    """Quadrature of the frequency density over (0, inf) must give 1."""
    val, err = integrate.quad(lambda z: eval_fz(z, PARAMS), 0.0, np.inf,
                              points=None, limit=200)
    assert err < 1e-7
    assert abs(val - 1.0) < 1e-8


def test_fz_mode_matches_derived_value():
    """The density peaks at z0/(1+sigma_z^2)."""
    m_z = PARAMS.z0 / (1.0 + PARAMS.sigma_z ** 2)
    zs = np.linspace(0.5 * m_z, 2.0 * m_z, 20001)
    vals = eval_fz(zs, PARAMS)
    z_peak = zs[np.argmax(vals)]
    assert abs(z_peak - m_z) < 2e-4


def test_fz_concentrates_as_dispersion_vanishes():
    """With sigma_z -> 0 the mass collects into a shrinking band around z0."""
    tight = MCParams(z0=1.0, sigma_z=1e-3, sigma_r=1.0)
    inside, _ = integrate.quad(lambda z: eval_fz(z, tight), 0.99, 1.01)
    assert inside > 1.0 - 1e-6


def test_fz_rejects_nonpositive_argument():
    with pytest.raises(DomainError):
        eval_fz(0.0, PARAMS)
    with pytest.raises(DomainError):
        eval_fz(np.array([0.5, -1.0]), PARAMS)


# ----------------------------------------------------------------------------
# orientation density

def test_ftheta_integrates_to_one_over_period():
    val, err = integrate.quad(lambda t: eval_ftheta(t, PARAMS),
                              -math.pi / 2, math.pi / 2, limit=200)
    assert err < 1e-7
    assert abs(val - 1.0) < 1e-8


def test_ftheta_peaks_at_central_orientation():
    thetas = np.linspace(-math.pi, math.pi, 10001)
    vals = eval_ftheta(thetas, PARAMS)
    assert np.all(vals <= eval_ftheta(PARAMS.theta0, PARAMS) + 1e-15)


def test_ftheta_half_turn_periodic():
    thetas = np.linspace(-2.0, 2.0, 41)
    np.testing.assert_allclose(eval_ftheta(thetas + math.pi, PARAMS),
                               eval_ftheta(thetas, PARAMS), rtol=1e-12)


def test_ftheta_survives_tight_concentration():
    """kappa ~ 1/(4 sigma^2) overflows a naive Bessel evaluation well before
    sigma_theta = 0.01; the density must stay finite and normalized."""
    tight = MCParams(z0=1.0, sigma_z=0.5, sigma_theta=0.01, sigma_r=1.0)
    assert np.isfinite(eval_ftheta(tight.theta0, tight))
    val, _ = integrate.quad(lambda t: eval_ftheta(t, tight),
                            tight.theta0 - math.pi / 2,
                            tight.theta0 + math.pi / 2, limit=400,
                            points=[tight.theta0])
    assert abs(val - 1.0) < 1e-7


# ----------------------------------------------------------------------------
# closed-form radial profile

def test_linv_h_at_zero_is_two_over_pi():
    assert abs(linv_h(0.0) - 2.0 / math.pi) < 1e-12


def test_linv_h_matches_high_precision_reference():
    """Spot values against a 50-digit evaluation of the same closed form."""
    mpmath.mp.dps = 50

    def ref(u):
        u = mpmath.mpf(u)
        s = mpmath.sqrt(u * u + 1)
        t1 = (2 - u * u) / (mpmath.pi * (1 + u * u) ** 2)
        t2 = (u * u * (u * u + 4) * mpmath.log(u / (s + 1))
              / (mpmath.pi * s ** 5))
        return float(t1 - t2)

    for u in [1e-8, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0]:
        assert abs(linv_h(u) - ref(u)) < 1e-14 * max(1.0, abs(ref(u)))


def test_linv_h_nonnegative_on_working_range():
    us = np.linspace(0.0, 50.0, 5001)
    assert np.all(linv_h(us) >= 0.0)


def test_linv_h_even_extension():
    us = np.array([0.25, 1.0, 3.0, 7.5])
    np.testing.assert_allclose(linv_h(-us), linv_h(us), rtol=0, atol=0)


def test_linv_h_quartic_tail():
    """The profile falls off as (16/3)/(pi u^4) at large u."""
    for u in [300.0, 1000.0, 3000.0]:
        expected = (16.0 / 3.0) / (math.pi * u ** 4)
        assert abs(linv_h(u) / expected - 1.0) < 0.01


def test_linv_h_half_line_mass_is_quarter_pi():
    """The area under the profile on (0, inf) is pi/4; this constant is what
    ties the normalized radial density to the closed-form temporal spectrum."""
    val, err = integrate.quad(linv_h, 0.0, 200.0, limit=400)
    tail = (16.0 / 3.0) / (3.0 * math.pi * 200.0 ** 3)  # integral of the tail
    assert err < 1e-8
    assert abs(val + tail - math.pi / 4.0) < 1e-6


# ----------------------------------------------------------------------------
# radial speed density

def test_fr_gaussian_integrates_to_one():
    val, _ = integrate.quad(lambda r: eval_fr(r, PARAMS, kind="gaussian"),
                            0.0, np.inf, limit=200)
    assert abs(val - 1.0) < 1e-8


def test_fr_gaussian_value_at_origin():
    expected = math.sqrt(2.0 / math.pi) / PARAMS.sigma_r
    assert abs(eval_fr(0.0, PARAMS, kind="gaussian") - expected) < 1e-12


def test_fr_gaussian_monotone_decreasing():
    rs = np.linspace(0.0, 6.0 * PARAMS.sigma_r, 400)
    vals = eval_fr(rs, PARAMS, kind="gaussian")
    assert np.all(np.diff(vals) < 0.0)


def test_fr_exact_kind_integrates_to_one():
    val, _ = integrate.quad(lambda r: eval_fr(r, PARAMS, kind="spde_exact"),
                            0.0, 400.0 * PARAMS.sigma_r, limit=400,
                            points=[PARAMS.sigma_r, 10.0 * PARAMS.sigma_r])
    assert abs(val - 1.0) < 1e-5


def test_fr_exact_kind_origin_value():
    # peak = (2/pi) / (sigma_r * pi/4), using the half-line mass constant
    expected = (2.0 / math.pi) / (PARAMS.sigma_r * math.pi / 4.0)
    assert abs(eval_fr(0.0, PARAMS, kind="spde_exact") - expected) < 1e-6


def test_fr_rejects_negative_speed_and_bad_kind():
    with pytest.raises(DomainError):
        eval_fr(-0.1, PARAMS, kind="gaussian")
    with pytest.raises(DomainError):
        eval_fr(1.0, PARAMS, kind="cauchy")


# ----------------------------------------------------------------------------
# direction-average transform

def test_l_transform_of_indicator_matches_arccos():
    """For f = 1 on [-R, R] the direction average has the closed form
    arccos(u/R) for u <= R and 0 beyond.  The discontinuous profile is the
    hardest case for the quadrature, so request extra headroom."""
    R = 2.0

    def box(r):
        return 1.0 if abs(r) <= R else 0.0

    for u in [0.0, 0.3 * R, 0.7 * R, 0.95 * R]:
        expected = math.acos(u / R)
        assert abs(l_transform(box, u, tol=1e-10) - expected) < 1e-8
    assert abs(l_transform(box, 1.8 * R)) < 1e-10


def test_l_transform_matches_cosh_substitution_oracle():
    """Second oracle: for even f, the transform equals
    int_0^inf f(u cosh v) / cosh v dv, a smooth integrand with no grazing
    angle.  Compare both routes on a gaussian profile."""
    sig = 0.7

    def f(r):
        return math.exp(-0.5 * (r / sig) ** 2)

    for u in [0.2, 0.9, 2.1]:
        oracle, err = integrate.quad(
            lambda v: f(u * math.cosh(v)) / math.cosh(v), 0.0, 30.0,
            limit=200)
        assert err < 1e-7
        assert abs(l_transform(f, u) - oracle) < 1e-8


def test_l_transform_even_in_u():
    def f(r):
        return math.exp(-abs(r))

    for u in [0.0, 0.4, 1.3]:
        assert abs(l_transform(f, u) - l_transform(f, -u)) < 1e-9


def test_l_transform_inverts_closed_form_profile():
    """Applying the direction average to linv_h must return 1/(1+u^2)^2."""
    for u in [0.0, 0.5, 1.0, 2.0, 3.3, 5.0]:
        expected = (1.0 + u * u) ** -2
        got = l_transform(lambda r: linv_h(r), u)
        assert abs(got - expected) < 1e-4 * expected
