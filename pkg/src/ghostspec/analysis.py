"""Fano lineshape fitting, resonance-shift estimation and SNR bookkeeping."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .detection import CoincidenceWindow
from .exceptions import (
    ConvergenceError,
    DegenerateDataError,
    DegenerateProfileError,
    GhostSpecError,
    InvalidInputError,
    UnconvergedFitError,
)
from .sample import FanoProfile, fano_model, minimum_from_params

log = logging.getLogger(__name__)

PARAM_NAMES = ("lambda_r_nm", "width_nm", "fano_f", "depth_a", "baseline_t0")
DETECTION_THRESHOLD = 5.0


def fano_jacobian(params, lambda_nm) -> np.ndarray:
    """Analytic derivatives of the Fano transmission, shape (len(lambda_nm), 5)."""
    lam_r, width, f, a, t0 = params
    lam = np.asarray(lambda_nm, dtype=float)
    eps = 2.0 * (lam - lam_r) / width
    one_f2 = 1.0 + f * f
    one_e2 = 1.0 + eps * eps
    g = (f + eps) ** 2 / (one_f2 * one_e2)
    common = 2.0 * (f + eps) * (1.0 - f * eps)
    dg_deps = common / (one_f2 * one_e2 ** 2)
    dg_df = common / (one_f2 ** 2 * one_e2)
    k = -t0 * a
    jac = np.empty((lam.size, 5))
    jac[:, 0] = k * dg_deps * (-2.0 / width)
    jac[:, 1] = k * dg_deps * (-eps / width)
    jac[:, 2] = k * dg_df
    jac[:, 3] = -t0 * g
    jac[:, 4] = 1.0 - a * g
    return jac


@dataclass
class FanoFit:
    params: np.ndarray
    covariance: np.ndarray
    r_squared: float
    converged: bool
    residual_norm: float
    n_iter: int = 0
    n_points: int = 0

    @property
    def profile(self) -> FanoProfile:
        return FanoProfile(*map(float, self.params), checked=False)

    @property
    def q_factor(self) -> float:
        return float(self.params[0] / self.params[1])

    @property
    def lambda_min_nm(self) -> float:
        lam_r, width, f, a, _ = self.params
        return minimum_from_params(lam_r, width, f, a)

    @property
    def dip_depth(self) -> float:
        """Baseline minus minimum transmission, T0 * a."""
        return float(self.params[4] * self.params[3])

    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def to_dict(self) -> dict:
        out = {
            "parameters": {k: float(v) for k, v in zip(PARAM_NAMES, self.params)},
            "stderr": {k: float(v) for k, v in zip(PARAM_NAMES, self.stderr())},
            "covariance": self.covariance.tolist(),
            "r_squared": self.r_squared,
            "converged": self.converged,
            "residual_norm": self.residual_norm,
            "n_iter": self.n_iter,
            "q_factor": self.q_factor,
        }
        try:
            out["lambda_min_nm"] = self.lambda_min_nm
        except DegenerateProfileError:
            out["lambda_min_nm"] = None
        return out


def _initial_guesses(x, y):
    """Starting points from the raw spectrum: one per sign of the asymmetry."""
    k = int(np.argmin(y))
    base = float(np.percentile(y, 90))
    depth = base - float(y[k])
    half = base - depth / 2.0
    lo = k
    while lo > 0 and y[lo - 1] < half:
        lo -= 1
    hi = k
    while hi < len(y) - 1 and y[hi + 1] < half:
        hi += 1
    step = float(np.median(np.diff(x)))
    width = max(float(x[hi] - x[lo]) + step, 2.0 * step)
    a = min(max(depth / base, 1e-3), 1.0) if base > 0 else 0.5
    guesses = []
    for f in (-10.0, 10.0):
        guesses.append(np.array([x[k] - width / (2.0 * f), width, f, a, base]))
    return guesses


def _levenberg_marquardt(x, y, w, p0, max_iter=200, tol=1e-10):
    """Damped Gauss-Newton on the weighted residual sum of squares.

    Damping starts at 1e-3 and is multiplied by 10 on a rejected step and
    divided by 10 on an accepted one. Returns (params, cost, converged, iters).
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _lm_loop(x, y, w, np.array(p0, dtype=float), max_iter, tol)


def _lm_loop(x, y, w, p, max_iter, tol):
    r = y - fano_model(p, x)
    cost = float(np.sum(w * r * r))
    mu = 1e-3
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        jac = fano_jacobian(p, x)
        jw = jac * w[:, None]
        hess = jac.T @ jw
        grad = jw.T @ r
        diag = np.diag(hess).copy()
        diag[diag <= 0] = 1e-12 * max(diag.max(), 1e-300)
        accepted = False
        while mu < 1e16:
            try:
                step = np.linalg.solve(hess + mu * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            trial = p + step
            r_new = y - fano_model(trial, x)
            cost_new = float(np.sum(w * r_new * r_new))
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            # no descent direction left at working precision
            converged = bool(np.all(np.isfinite(p)))
            break
        rel_step = np.linalg.norm(step) / (np.linalg.norm(p) + 1e-300)
        rel_cost = (cost - cost_new) / cost if cost > 0 else 0.0
        p, r, cost = trial, r_new, cost_new
        mu = max(mu / 10.0, 1e-15)
        if (rel_step < tol and rel_cost < tol) or cost <= 1e-30 * len(x):
            converged = True
            break
    return p, cost, converged, it


def fit_fano(spec, init: Optional[FanoProfile] = None, *, strict: bool = True) -> FanoFit:
    """Weighted least-squares Fano fit of a spectrum.

    Per-bin standard errors (std / sqrt(n)) are the weights, and the
    covariance is taken at face value. Bins with zero spread (noiseless
    input) fall back to unit weights, with the covariance scaled by the
    residual variance.

    Raises `DegenerateDataError` for spectra that are flat within their own
    noise and `ConvergenceError` when the iteration cap is hit (unless
    ``strict=False``, which returns the unconverged fit).
    """
    x = np.asarray(spec.lambda_nm, dtype=float)
    y = np.asarray(spec.mean, dtype=float)
    if x.size < 8:
        raise InvalidInputError("need at least 8 spectral points to fit a Fano profile")
    std = np.asarray(spec.std, dtype=float)
    sigma = std / np.sqrt(np.maximum(getattr(spec, "n", np.ones_like(std)), 1))
    raw_depth = float(y.max() - y.min())
    if raw_depth <= 0 or raw_depth < 2.0 * float(np.median(std)):
        raise DegenerateDataError("spectrum is flat within noise; no dip to fit")
    absolute = bool(np.all(sigma > 0))
    w = 1.0 / sigma ** 2 if absolute else np.ones_like(y)

    starts = [init.params()] if init is not None else _initial_guesses(x, y)
    best = None
    for p0 in starts:
        p, cost, ok, it = _levenberg_marquardt(x, y, w, p0)
        if not np.all(np.isfinite(p)):
            continue
        if best is None or (ok and not best[2]) or (ok == best[2] and cost < best[1]):
            best = (p, cost, ok, it)
    if best is None:
        raise ConvergenceError("Fano fit diverged from every starting point")
    p, cost, ok, it = best
    if p[1] < 0:
        # (width, F) and (-width, -F) describe the same curve
        p[1], p[2] = -p[1], -p[2]

    jac = fano_jacobian(p, x)
    hess = jac.T @ (jac * w[:, None])
    cov = np.linalg.pinv(hess)
    if not absolute:
        dof = max(x.size - 5, 1)
        cov = cov * (cost / dof)
    cov = 0.5 * (cov + cov.T)
    resid = y - fano_model(p, x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    fit = FanoFit(p, cov, r2, ok, float(np.sqrt(cost)), it, int(x.size))
    if not ok:
        if strict:
            raise ConvergenceError(f"Fano fit did not converge in {it} iterations", fit)
        log.warning("Fano fit did not converge in %d iterations", it)
    return fit


def _min_gradient(params) -> np.ndarray:
    _, width, f, _, _ = params
    return np.array([1.0, 1.0 / (2.0 * f), -width / (2.0 * f * f), 0.0, 0.0])


@dataclass(frozen=True)
class ShiftEstimate:
    shift_nm: float
    sigma_nm: float
    sensitivity_nm_per_riu: Optional[float] = None
    sensitivity_sigma: Optional[float] = None

    def covers_zero(self, z: float = 1.96) -> bool:
        return abs(self.shift_nm) <= z * self.sigma_nm


def estimate_shift(fit_a: FanoFit, fit_b: FanoFit, delta_n: Optional[float] = None) -> ShiftEstimate:
    """Shift of the fitted transmission minimum from `fit_a` to `fit_b`."""
    for fit in (fit_a, fit_b):
        if not fit.converged:
            raise UnconvergedFitError("shift needs two converged fits")
    shift = fit_b.lambda_min_nm - fit_a.lambda_min_nm
    var = 0.0
    for fit in (fit_a, fit_b):
        g = _min_gradient(fit.params)
        var += float(g @ fit.covariance @ g)
    sigma = float(np.sqrt(max(var, 0.0)))
    if delta_n is None:
        return ShiftEstimate(float(shift), sigma)
    if delta_n == 0:
        raise InvalidInputError("refractive-index change must be non-zero")
    return ShiftEstimate(float(shift), sigma, float(shift / delta_n), sigma / abs(delta_n))


@dataclass(frozen=True)
class Detectability:
    detectable: bool
    score: float


def detectability(fit: Optional[FanoFit], spec=None) -> Detectability:
    """Dip depth in units of its own 1-sigma uncertainty.

    Pass ``fit=None`` together with a spectrum to fit it first; a spectrum
    that cannot be fitted counts as not detectable.
    """
    if fit is None:
        if spec is None:
            raise InvalidInputError("need a fit or a spectrum")
        try:
            fit = fit_fano(spec)
        except GhostSpecError:
            return Detectability(False, 0.0)
    grad = np.array([0.0, 0.0, 0.0, fit.params[4], fit.params[3]])
    var = float(grad @ fit.covariance @ grad)
    depth = fit.dip_depth
    if var <= 0:
        score = np.inf if depth > 0 else 0.0
    else:
        score = depth / np.sqrt(var)
    return Detectability(bool(fit.converged and score >= DETECTION_THRESHOLD), float(score))


@dataclass(frozen=True)
class SnrReport:
    snr_quantum: float
    snr_classical: float
    ratio_measured: float
    ratio_predicted: float


def snr_report(eta_i, n_i_hz, n_s_hz, eta_s, p_hz, w: CoincidenceWindow) -> SnrReport:
    """Signal-to-noise of coincidence versus direct counting, noise-dominated regime."""
    dt = w.delta_t_s if isinstance(w, CoincidenceWindow) else float(w)
    if n_i_hz == 0 or n_s_hz == 0 or dt == 0:
        raise ZeroDivisionError("noise rates and coincidence window must be non-zero")
    if min(eta_i, n_i_hz, n_s_hz, eta_s, p_hz, dt) < 0:
        raise InvalidInputError("rates and efficiencies must be non-negative")
    snr_t = eta_s * p_hz / n_s_hz
    snr_q = eta_i * eta_s * p_hz / (n_s_hz * n_i_hz * dt)
    predicted = eta_i / (n_i_hz * dt)
    measured = snr_q / snr_t if snr_t > 0 else predicted
    return SnrReport(snr_q, snr_t, measured, predicted)
