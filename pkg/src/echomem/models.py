"""Weighted nonlinear least-squares fits of the measured decay laws.

Two families are shipped: the Mims stretched exponential
A exp(-p (t/T2)^m) with p = 1 (amplitude data) or p = 2 (intensity data),
and the four-pulse echo efficiency surface over the two storage intervals
(Gaussian in t31, Gaussian times exponential in t42).  Stretched
exponentials are multimodal in m, so every fit multistarts over a small
exponent grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .echo import GAUSS_NORM

M_STARTS = (0.8, 1.0, 1.5, 2.0)
MAX_ITERATIONS = 200
STEP_TOLERANCE = 1e-10

_POWERS = {"amplitude": 1.0, "intensity": 2.0}


@dataclass
class DecayFit:
    """Stretched-exponential fit result."""

    t2: float
    m: float
    amplitude: float
    covariance: np.ndarray
    residual_norm: float

    def __post_init__(self):
        if self.t2 <= 0 or self.m <= 0:
            raise ValueError("fitted T2 and m must be positive")


@dataclass
class NlpeFit:
    """Efficiency-surface fit result (broadenings in Hz, gamma in 1/s)."""

    gamma34: float
    gamma23bar: float
    gamma_opt: float
    eta_control: float
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))
    residual_norm: float = 0.0

    def __post_init__(self):
        if min(self.gamma34, self.gamma23bar) <= 0 or self.gamma_opt < 0:
            raise ValueError("fitted rates must be positive")
        if not 0.0 < self.eta_control <= 1.0:
            raise ValueError("eta_control must lie in (0, 1]")


def _prepare(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise ValueError("points must be rows of (t, value[, sigma])")
    t = arr[:, 0]
    v = arr[:, 1]
    sigma = arr[:, 2] if arr.shape[1] == 3 else np.ones_like(v)
    if np.any(sigma <= 0):
        raise ValueError("sigmas must be positive")
    if np.any(t <= 0):
        raise ValueError("times must be positive")
    return t, v, sigma


def _covariance(result, n_points: int, n_params: int) -> np.ndarray:
    jac = result.jac
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    if s[0] == 0 or s[-1] / s[0] < 1e-14:
        raise RuntimeError("rank-deficient Jacobian; parameters are not identifiable")
    dof = max(n_points - n_params, 1)
    scale = 2.0 * result.cost / dof
    return (vt.T / s**2) @ vt * scale


def fit_mims(points, model_power: str = "amplitude") -> DecayFit:
    """Fit A exp(-p (t/T2)^m) to (t, value, sigma) rows.

    model_power selects p = 1 ("amplitude") or p = 2 ("intensity").
    Weighted Levenberg-style minimization with multistart over m.
    """
    if model_power not in _POWERS:
        raise ValueError("model_power must be 'amplitude' or 'intensity'")
    p = _POWERS[model_power]
    t, v, sigma = _prepare(points)
    if t.size < 4:
        raise ValueError("need at least 4 points")
    if np.all(v == 0.0):
        raise ValueError("all-zero data cannot constrain a decay law")

    def residuals(x):
        a, t2, m = x
        return (a * np.exp(-p * (t / t2) ** m) - v) / sigma

    a0 = float(np.max(np.abs(v)))
    # time where the data first drops below A e^-p, as a T2 seed
    drop = np.where(np.abs(v) < a0 * math.exp(-p))[0]
    t2_0 = float(t[drop[0]]) if drop.size else float(np.median(t))
    best = None
    for m0 in M_STARTS:
        try:
            res = least_squares(
                residuals,
                x0=(a0, t2_0, m0),
                bounds=((0.0, 0.0, 1e-3), (np.inf, np.inf, 10.0)),
                xtol=STEP_TOLERANCE,
                ftol=STEP_TOLERANCE,
                gtol=1e-14,
                max_nfev=MAX_ITERATIONS * 4,
            )
        except ValueError:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise RuntimeError("stretched-exponential fit failed from every start")
    cov = _covariance(best, t.size, 3)
    a, t2, m = best.x
    order = np.array([1, 2, 0])  # report covariance as (t2, m, amplitude)
    cov = cov[np.ix_(order, order)]
    return DecayFit(t2=float(t2), m=float(m), amplitude=float(a), covariance=cov, residual_norm=float(np.linalg.norm(best.fun)))


def fit_tail(points, t_min: float, model_power: str = "intensity") -> DecayFit:
    """Mims fit restricted to storage times beyond t_min (intensity power).

    Used when early-time data are distorted (drive-induced heating): the
    tail alone constrains the coherence time.
    """
    t, v, sigma = _prepare(points)
    keep = t > t_min
    if np.count_nonzero(keep) < 4:
        raise ValueError(f"need at least 4 points beyond t_min = {t_min}")
    subset = np.column_stack([t[keep], v[keep], sigma[keep]])
    return fit_mims(subset, model_power=model_power)


def _axis_slices(t31, t42):
    """Pick the two measurement axes: the densest fixed-t42 and fixed-t31 slices."""
    def best_slice(fixed):
        values, counts = np.unique(fixed, return_counts=True)
        order = np.argsort(counts)[::-1]
        return values[order[0]]

    t42_fixed = best_slice(t42)
    t31_fixed = best_slice(t31)
    sel31 = t42 == t42_fixed
    sel42 = t31 == t31_fixed
    if np.unique(t31[sel31]).size < 4:
        raise ValueError("cannot identify the spin broadening: no t31 slice with >= 4 distinct values")
    if np.unique(t42[sel42]).size < 4:
        raise ValueError("cannot identify the excited-pair decay: no t42 slice with >= 4 distinct values")
    return sel31, sel42, t42_fixed


def fit_nlpe_surface(points, fixed: dict) -> NlpeFit:
    """Fit the efficiency surface over (t31, t42).

    points: rows of (t31, t42, intensity, sigma).  fixed supplies the
    absorption depth "d" (and optionally "heating_penalty").  The two axes
    are fitted sequentially, mirroring how such surfaces are measured
    (sweep one interval at a fixed value of the other); the control-pulse
    transfer efficiency then follows from the absolute scale, and a joint
    polish refines all four parameters.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError("points must be rows of (t31, t42, intensity, sigma)")
    t31, t42, y, sigma = arr.T
    if np.any(sigma <= 0):
        raise ValueError("sigmas must be positive")
    d = float(fixed["d"])
    penalty = float(fixed.get("heating_penalty", 1.0))
    absorption = d**2 * math.exp(-d) * penalty
    sel31, sel42, t42_fixed = _axis_slices(t31, t42)

    def gauss_resid(x, tt, vv, ss):
        c, g = x
        return (c * np.exp(-(g * tt) ** 2 / GAUSS_NORM) - vv) / ss

    g34_scale = 1.0 / max(t31[sel31].max(), 1e-12)
    res31 = least_squares(
        gauss_resid,
        x0=(float(y[sel31].max()), g34_scale),
        args=(t31[sel31], y[sel31], sigma[sel31]),
        bounds=((0.0, 0.0), (np.inf, np.inf)),
        xtol=STEP_TOLERANCE,
        max_nfev=MAX_ITERATIONS * 4,
    )
    gamma34 = float(res31.x[1])

    def t42_resid(x, tt, vv, ss):
        c, g, gam = x
        return (c * np.exp(-(g * tt) ** 2 / GAUSS_NORM - 2.0 * gam * tt) - vv) / ss

    res42 = least_squares(
        t42_resid,
        x0=(float(y[sel42].max()), g34_scale, 1.0 / max(t42[sel42].max(), 1e-12)),
        args=(t42[sel42], y[sel42], sigma[sel42]),
        bounds=((0.0, 0.0, 0.0), (np.inf, np.inf, np.inf)),
        xtol=STEP_TOLERANCE,
        max_nfev=MAX_ITERATIONS * 4,
    )
    c42, gamma23, gamma_opt = (float(x) for x in res42.x)
    # absolute scale: the t42 slice sits at one fixed t31, so its prefactor
    # is absorption * eta^4 * (spin Gaussian at that t31)
    spin_factor = math.exp(-(gamma34 * float(t31[sel42][0])) ** 2 / GAUSS_NORM)
    eta4 = c42 / (absorption * spin_factor)
    if eta4 <= 0:
        raise RuntimeError("non-positive transfer efficiency from the absolute scale")
    eta = min(eta4 ** 0.25, 1.0)

    def joint_resid(x):
        g34, g23, gam, et = x
        model = (
            absorption
            * et**4
            * np.exp(-(g34 * t31) ** 2 / GAUSS_NORM)
            * np.exp(-(g23 * t42) ** 2 / GAUSS_NORM - 2.0 * gam * t42)
        )
        return (model - y) / sigma

    polish = least_squares(
        joint_resid,
        x0=(gamma34, gamma23, gamma_opt, eta),
        bounds=((0.0, 0.0, 0.0, 0.0), (np.inf, np.inf, np.inf, 1.0)),
        xtol=STEP_TOLERANCE,
        max_nfev=MAX_ITERATIONS * 4,
    )
    g34, g23, gam, et = (float(x) for x in polish.x)
    cov = _covariance(polish, y.size, 4)
    return NlpeFit(
        gamma34=g34,
        gamma23bar=g23,
        gamma_opt=gam,
        eta_control=et,
        covariance=cov,
        residual_norm=float(np.linalg.norm(polish.fun)),
    )


def mims_curve(t, amplitude: float, t2: float, m: float, model_power: str = "amplitude"):
    """Evaluate the fitted law on a time grid (for synthetic data and plots)."""
    p = _POWERS[model_power]
    t = np.asarray(t, dtype=float)
    return amplitude * np.exp(-p * (t / t2) ** m)


def nlpe_surface_curve(t31, t42, fit: NlpeFit, d: float, heating_penalty: float = 1.0):
    """Evaluate the fitted efficiency surface."""
    absorption = d**2 * math.exp(-d) * heating_penalty
    t31 = np.asarray(t31, dtype=float)
    t42 = np.asarray(t42, dtype=float)
    return (
        absorption
        * fit.eta_control**4
        * np.exp(-(fit.gamma34 * t31) ** 2 / GAUSS_NORM)
        * np.exp(-(fit.gamma23bar * t42) ** 2 / GAUSS_NORM - 2.0 * fit.gamma_opt * t42)
    )
