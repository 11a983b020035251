"""Probit psychometric fitting and observer-model recovery.

The forward model for one condition is p(x) = psi((x - mu) / lam) with
x the log-speed offset between the two intervals.  Fitting maximizes
the Bernoulli likelihood with a deterministic two-level optimizer:
golden-section search over ln(lam) with, at each width, a Newton
profile step for the bias (the likelihood is concave in mu at fixed
lam).  Standard errors come from the observed information at the
optimum.

Recovery inverts the fitted (mu, lam) per frequency into likelihood
widths and prior slopes.  The data constrain the slopes only up to a
one-parameter affine family; the AUTO rule picks the member with the
smallest sum of squared slopes, which has a closed form.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np
from scipy.special import log_ndtr

from .errors import ConfigurationError, FitError
from .observer import ObserverModel, log_speed

__all__ = [
    "LAMBDA_CEIL",
    "LAMBDA_FLOOR",
    "MU_BOUND",
    "PsychometricFit",
    "fit_probit",
    "fit_psychometric",
    "recover_prior_likelihood",
]

LAMBDA_FLOOR = 1e-3
LAMBDA_CEIL = 10.0
MU_BOUND = 5.0

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PsychometricFit:
    """Maximum-likelihood probit fit of one condition."""

    mu: float
    lam: float
    mu_se: float
    lam_se: float
    n_trials: int
    log_lik: float
    deviance: float
    flagged: bool
    condition: Optional[Tuple] = None


def _loglik(x, n, k, mu, lam):
    s = (x - mu) / lam
    return float(k @ log_ndtr(s) + (n - k) @ log_ndtr(-s))


def _profile_mu(x, n, k, lam, mu0):
    """Newton maximization over mu at fixed lam.

    The per-trial log-likelihood is concave in mu, and the score and
    curvature have stable closed forms in terms of the Mills ratios.
    """
    mu = mu0
    for _ in range(80):
        s = (x - mu) / lam
        log_phi = -0.5 * s * s - _HALF_LOG_2PI
        r_p = np.exp(log_phi - log_ndtr(s))
        r_q = np.exp(log_phi - log_ndtr(-s))
        score = -(k @ r_p - (n - k) @ r_q) / lam
        curv = (-(k @ (r_p * (s + r_p)))
                - ((n - k) @ (r_q * (r_q - s)))) / (lam * lam)
        if curv >= 0.0:
            curv = -1e-12
        step = score / curv
        nxt = min(max(mu - step, -4.0 * MU_BOUND), 4.0 * MU_BOUND)
        if abs(nxt - mu) < 1e-12 * (1.0 + abs(mu)):
            return nxt
        mu = nxt
    return mu


def fit_probit(x, n, k, condition=None) -> PsychometricFit:
    """Fit p = psi((x - mu)/lam) to binomial counts k out of n at x.

    Degenerate data (all successes or all failures, or fewer than two
    distinct offsets) cannot pin a slope and raise FitError.  A fitted
    width at the floor is returned flagged rather than rejected.
    """
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    if not (x.shape == n.shape == k.shape) or x.ndim != 1:
        raise ConfigurationError(
            "x, n, k must be one-dimensional and equally long")
    if np.any(n <= 0) or np.any(k < 0) or np.any(k > n):
        raise ConfigurationError("need 0 <= k <= n with n positive")
    if np.unique(x).size < 2:
        raise FitError(
            "need at least two distinct stimulus offsets to fit a "
            "psychometric width")
    if k.sum() == 0 or (n - k).sum() == 0:
        raise FitError(
            "all responses identical; the psychometric function is "
            "unidentifiable from this data")

    # golden-section over ln(lam); each evaluation profiles out mu
    lo, hi = math.log(LAMBDA_FLOOR), math.log(LAMBDA_CEIL)
    warm = 0.0
    cache = {}

    def profiled(t):
        nonlocal warm
        if t not in cache:
            mu_hat = _profile_mu(x, n, k, math.exp(t), warm)
            warm = mu_hat
            cache[t] = (_loglik(x, n, k, mu_hat, math.exp(t)), mu_hat)
        return cache[t]

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = profiled(c)[0], profiled(d)[0]
    while b - a > 1e-9:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = profiled(c)[0]
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = profiled(d)[0]
    t_hat = 0.5 * (a + b)
    lam = math.exp(t_hat)
    mu = _profile_mu(x, n, k, lam, warm)
    ll = _loglik(x, n, k, mu, lam)
    flagged = lam <= LAMBDA_FLOOR * (1.0 + 1e-6)

    mu_se, lam_se = _observed_information_se(x, n, k, mu, lam, flagged)

    with np.errstate(divide="ignore", invalid="ignore"):
        p_hat = k / n
        sat = np.where(k > 0, k * np.log(np.where(k > 0, p_hat, 1.0)),
                       0.0)
        sat += np.where(n - k > 0,
                        (n - k) * np.log(np.where(n - k > 0,
                                                  1.0 - p_hat, 1.0)),
                        0.0)
    deviance = 2.0 * (float(sat.sum()) - ll)

    return PsychometricFit(mu=mu, lam=lam, mu_se=mu_se, lam_se=lam_se,
                           n_trials=int(round(float(n.sum()))),
                           log_lik=ll, deviance=deviance,
                           flagged=flagged, condition=condition)


def _observed_information_se(x, n, k, mu, lam, flagged):
    """Standard errors from a numeric observed-information matrix."""
    if flagged:
        return math.nan, math.nan
    h_mu = 1e-5 * (1.0 + abs(mu))
    h_lam = 1e-5 * lam

    def ll(m, L):
        return _loglik(x, n, k, m, L)

    base = ll(mu, lam)
    d_mm = (ll(mu + h_mu, lam) - 2.0 * base
            + ll(mu - h_mu, lam)) / h_mu ** 2
    d_ll = (ll(mu, lam + h_lam) - 2.0 * base
            + ll(mu, lam - h_lam)) / h_lam ** 2
    d_ml = (ll(mu + h_mu, lam + h_lam) - ll(mu + h_mu, lam - h_lam)
            - ll(mu - h_mu, lam + h_lam)
            + ll(mu - h_mu, lam - h_lam)) / (4.0 * h_mu * h_lam)
    i00, i11, i01 = -d_mm, -d_ll, -d_ml
    det = i00 * i11 - i01 * i01
    if det <= 0.0 or i00 <= 0.0:
        return math.nan, math.nan
    return math.sqrt(i11 / det), math.sqrt(i00 / det)


def fit_psychometric(trials, include_flagged: bool = False):
    """Group trials by condition and fit each psychometric function.

    Trials expose pair, u_offset_interval, response, and optionally
    t_star and flagged.  The success event is "the interval carrying
    the speed offset was judged faster"; offsets are measured on the
    log-speed scale.  Returns {(z, z_star, u_star, t_star):
    PsychometricFit}.
    """
    groups = {}
    for trial in trials:
        if trial.response is None:
            continue
        if getattr(trial, "flagged", False) and not include_flagged:
            continue
        j = trial.u_offset_interval
        u_off, z_star = trial.pair[j]
        u_star, z = trial.pair[1 - j]
        t_star = getattr(trial, "t_star", None)
        key = (round(z, 9), round(z_star, 9), round(u_star, 9),
               None if t_star is None else round(t_star, 9))
        offset = round(log_speed(u_off) - log_speed(u_star), 12)
        chose_offset = (trial.response == "first") == (j == 0)
        counts = groups.setdefault(key, {}).setdefault(offset, [0, 0])
        counts[0] += 1
        counts[1] += int(chose_offset)

    fits = {}
    for key, points in groups.items():
        offsets = sorted(points)
        n = np.array([points[o][0] for o in offsets], dtype=float)
        k = np.array([points[o][1] for o in offsets], dtype=float)
        fits[key] = fit_probit(np.array(offsets), n, k, condition=key)
    return fits


def recover_prior_likelihood(fits, a_zstar="auto",
                             z_star: Optional[float] = None
                             ) -> ObserverModel:
    """Invert per-frequency fits into an observer model.

    fits maps either z or a condition tuple to a PsychometricFit; the
    reference frequency is read from the fit conditions unless passed
    explicitly.  Conditions implying a non-positive likelihood variance
    are excluded with a warning.  a_zstar may be a number or "auto",
    which selects within the affine slope family the member minimizing
    the sum of squared slopes.
    """
    entries = []
    for key, fit in fits.items():
        z = float(key[0]) if isinstance(key, tuple) else float(key)
        entries.append((z, fit))
    if z_star is None:
        for _, fit in entries:
            if fit.condition is not None:
                z_star = float(fit.condition[1])
                break
    if z_star is None:
        raise ConfigurationError(
            "reference frequency unknown; pass z_star or fits carrying "
            "condition tuples")

    reference = [fit for z, fit in entries
                 if math.isclose(z, z_star, rel_tol=1e-9,
                                 abs_tol=1e-12)]
    if not reference:
        raise FitError(
            f"fits do not include the reference condition at "
            f"z_star={z_star:g}")
    sig_star2 = 0.5 * reference[0].lam ** 2

    valid = []
    for z, fit in entries:
        sig2 = fit.lam ** 2 - sig_star2
        if sig2 <= 0.0:
            warnings.warn(
                f"condition z={z:g} implies non-positive likelihood "
                f"variance (lam={fit.lam:.4g} < lam_star/sqrt(2)); "
                f"excluded from recovery")
            continue
        valid.append((z, sig_star2 / sig2, fit.mu / sig2, sig2))

    if not valid:
        raise FitError(
            "every condition implies a non-positive likelihood "
            "variance; the fits are too weak to recover an observer")

    if a_zstar == "auto":
        num = sum(c * d for _, c, d, _ in valid)
        den = sum(c * c for _, c, _, _ in valid)
        a_star = num / den
    else:
        a_star = float(a_zstar)

    sigma_by_z = {z: math.sqrt(sig2) for z, _, _, sig2 in valid}
    a_by_z = {z: c * a_star - d for z, c, d, _ in valid}
    return ObserverModel(sigma_by_z=sigma_by_z, a_by_z=a_by_z)
