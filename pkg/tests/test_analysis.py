from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import REFERENCE_PARAMS, synthetic
from ghostspec.analysis import (
    ConvergenceError,
    FanoFit,
    detectability,
    estimate_shift,
    fano_jacobian,
    fit_fano,
    snr_report,
)
from ghostspec.detection import CoincidenceWindow
from ghostspec.exceptions import DegenerateDataError, InvalidInputError, UnconvergedFitError
from ghostspec.experiment import CLASSICAL, Spectrum, measure
from ghostspec.sample import FanoProfile, fano_model, resonance_minimum_wavelength

params = st.tuples(
    st.floats(780.0, 830.0),
    st.floats(10.0, 50.0),
    st.one_of(st.floats(-50.0, -2.0), st.floats(2.0, 50.0)),
    st.floats(0.1, 1.0),
    st.floats(0.2, 1.0),
)


def central_difference(p, lam, k, h):
    """Richardson-extrapolated central difference, O(h**4)."""
    def d(step):
        up, down = np.array(p, float), np.array(p, float)
        up[k] += step
        down[k] -= step
        return (fano_model(up, lam) - fano_model(down, lam)) / (2 * step)
    return (4 * d(h / 2) - d(h)) / 3


@given(params)
def test_jacobian_matches_finite_differences(p):
    lam = np.linspace(750.0, 860.0, 37)
    jac = fano_jacobian(p, lam)
    for k in range(5):
        h = 1e-4 * max(abs(p[k]), 1.0)
        fd = central_difference(p, lam, k, h)
        scale = max(np.max(np.abs(fd)), 1e-12)
        assert np.max(np.abs(jac[:, k] - fd)) / scale < 1e-6


def test_noiseless_round_trip_reference_profile():
    fit = fit_fano(synthetic())
    assert fit.converged
    np.testing.assert_allclose(fit.params, REFERENCE_PARAMS, rtol=1e-6)
    assert fit.q_factor == pytest.approx(26.87, abs=0.005)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.lambda_min_nm == pytest.approx(805.0625, abs=1e-6)


@given(params)
def test_noiseless_round_trip_random(p):
    lam = np.arange(740.0, 871.0, 1.0)
    assume(p[0] + p[1] / (2 * p[2]) - 740 > p[1] and 870 - p[0] > p[1])
    fit = fit_fano(synthetic(p, lam))
    np.testing.assert_allclose(fit.params, p, rtol=1e-6)


def test_explicit_initial_guess():
    fit = fit_fano(synthetic(), init=FanoProfile(800.0, 20.0, -8.0, 0.4, 0.9))
    np.testing.assert_allclose(fit.params, REFERENCE_PARAMS, rtol=1e-6)


def test_covariance_symmetric_psd():
    rng = np.random.default_rng(0)
    spec = synthetic(std=0.02)
    spec.mean = spec.mean + rng.normal(0, 0.02 / np.sqrt(20), spec.mean.size)
    fit = fit_fano(spec)
    np.testing.assert_allclose(fit.covariance, fit.covariance.T)
    assert np.all(np.linalg.eigvalsh(fit.covariance) >= -1e-15)
    assert fit.r_squared <= 1.0


@given(st.floats(0.01, 1e4))
def test_fit_scale_equivariant(c):
    rng = np.random.default_rng(1)
    base = synthetic(std=0.02)
    base.mean = base.mean + rng.normal(0, 0.004, base.mean.size)
    scaled = Spectrum(base.lambda_nm, c * base.mean, c * base.std, base.n)
    a, b = fit_fano(base), fit_fano(scaled)
    np.testing.assert_allclose(b.params[:3], a.params[:3], rtol=1e-6)
    assert b.params[3] == pytest.approx(a.params[3], rel=1e-6)
    assert b.params[4] == pytest.approx(c * a.params[4], rel=1e-6)
    assert b.r_squared == pytest.approx(a.r_squared, abs=1e-9)
    assert b.lambda_min_nm == pytest.approx(a.lambda_min_nm, abs=1e-6)


def test_too_few_points():
    with pytest.raises(InvalidInputError):
        fit_fano(synthetic(lam=np.arange(800.0, 807.0)))


def test_flat_spectrum_degenerate():
    flat = synthetic((806.0, 30.0, -16.0, 0.0, 1.0), std=0.01)
    with pytest.raises(DegenerateDataError):
        fit_fano(flat)
    noisy = synthetic((806.0, 30.0, -16.0, 0.01, 1.0), std=0.05)
    with pytest.raises(DegenerateDataError):
        fit_fano(noisy)


def test_unconverged_fit_strict_and_lenient(monkeypatch):
    import ghostspec.analysis as an

    monkeypatch.setattr(an, "_lm_loop", lambda x, y, w, p, it, tol: (p, 1.0, False, it))
    with pytest.raises(ConvergenceError) as err:
        fit_fano(synthetic())
    assert isinstance(err.value.fit, FanoFit)
    fit = fit_fano(synthetic(), strict=False)
    assert not fit.converged
    with pytest.raises(UnconvergedFitError):
        estimate_shift(fit, fit)


def test_shift_identity():
    fit = fit_fano(synthetic())
    sh = estimate_shift(fit, fit, delta_n=0.014)
    assert sh.shift_nm == 0.0 and sh.sensitivity_nm_per_riu == 0.0


def test_constructed_shift_and_sensitivity():
    a = fit_fano(synthetic())
    b = fit_fano(synthetic((806.0 + 7.98, 30.0, -16.0, 0.5, 1.0)))
    sh = estimate_shift(a, b, 0.014)
    assert sh.shift_nm == pytest.approx(7.98, abs=1e-6)
    assert sh.sensitivity_nm_per_riu == pytest.approx(570.0, abs=1e-3)
    assert sh.sigma_nm >= 0
    with pytest.raises(InvalidInputError):
        estimate_shift(a, b, 0.0)


@given(st.floats(-20.0, 20.0))
def test_shift_antisymmetric(d):
    a = fit_fano(synthetic())
    b = fit_fano(synthetic((806.0 + d, 30.0, -16.0, 0.5, 1.0)))
    ab, ba = estimate_shift(a, b), estimate_shift(b, a)
    assert ab.shift_nm == pytest.approx(-ba.shift_nm, abs=1e-12)
    assert ab.sigma_nm == pytest.approx(ba.sigma_nm)


@pytest.mark.slow
def test_shift_sigma_matches_monte_carlo(fig5):
    # rerun the low-noise quantum measurement and compare scatter to the propagated error
    app = fig5.apparatus()
    scan = replace(fig5.scan, injected_noise_hz=1e3, step_nm=5.0, repeats=5)
    pa = FanoProfile(806.0, 30.0, -16.0, 0.5, 1.0)
    pb = replace(pa, lambda_r_nm=806.0 + 7.98)
    shifts, sigmas = [], []
    for seed in range(50):
        fa = fit_fano(measure(app, pa, scan, seed=seed))
        fb = fit_fano(measure(app, pb, scan, seed=10_000 + seed))
        sh = estimate_shift(fa, fb)
        shifts.append(sh.shift_nm)
        sigmas.append(sh.sigma_nm)
    ratio = np.std(shifts, ddof=1) / np.mean(sigmas)
    assert 0.5 <= ratio <= 2.0


def test_detectability_noiseless_and_flat():
    det = detectability(fit_fano(synthetic()))
    assert det.detectable and det.score > 5
    flat = synthetic((806.0, 30.0, -16.0, 0.0, 1.0), std=0.01)
    assert not detectability(None, flat).detectable
    with pytest.raises(InvalidInputError):
        detectability(None)


def test_detectability_quantum_versus_classical_at_high_noise(fig5):
    app = fig5.apparatus()
    prof = FanoProfile(806.0, 30.0, -16.0, 0.5, 1.0)
    q = measure(app, prof, replace(fig5.scan, injected_noise_hz=7e4), seed=3)
    c = measure(app, prof, replace(fig5.scan, injected_noise_hz=7e4, mode=CLASSICAL), seed=3)
    assert detectability(None, q).detectable
    assert not detectability(None, c).detectable


def test_low_noise_quantum_fit_quality(fig5):
    app = fig5.apparatus()
    prof = FanoProfile(806.0, 30.0, -16.0, 0.5, 1.0)
    fit = fit_fano(measure(app, prof, replace(fig5.scan, injected_noise_hz=1e3), seed=9))
    assert fit.r_squared >= 0.9
    assert fit.lambda_min_nm == pytest.approx(resonance_minimum_wavelength(prof), abs=1.0)


@pytest.mark.parametrize("n_i, dt, ratio", [(1e5, 5e-9, 100.0), (1e3, 1e-10, 5e5)])
def test_snr_ratio(n_i, dt, ratio):
    rep = snr_report(0.05, n_i, 7e4, 0.1, 1e4, CoincidenceWindow(dt))
    assert rep.ratio_predicted == pytest.approx(ratio, rel=1e-12)
    assert rep.snr_classical == pytest.approx(0.1 * 1e4 / 7e4)


@given(st.floats(1e-3, 1.0), st.floats(1.0, 1e7), st.floats(1.0, 1e7), st.floats(1e-3, 1.0),
       st.floats(1.0, 1e8), st.floats(1e-12, 1e-6))
def test_snr_measured_equals_predicted(eta_i, n_i, n_s, eta_s, p, dt):
    rep = snr_report(eta_i, n_i, n_s, eta_s, p, dt)
    assert rep.ratio_measured == pytest.approx(rep.ratio_predicted, rel=1e-12)
    assert min(rep.snr_quantum, rep.snr_classical, rep.ratio_measured) >= 0


@pytest.mark.parametrize("args", [(0.05, 0.0, 7e4, 0.1, 1e4, 5e-9), (0.05, 1e5, 0.0, 0.1, 1e4, 5e-9),
                                  (0.05, 1e5, 7e4, 0.1, 1e4, 0.0)])
def test_snr_zero_division(args):
    with pytest.raises(ZeroDivisionError):
        snr_report(*args)


def test_fit_report_dict():
    d = fit_fano(synthetic()).to_dict()
    assert set(d["parameters"]) == {"lambda_r_nm", "width_nm", "fano_f", "depth_a", "baseline_t0"}
    assert len(d["covariance"]) == 5
    assert d["lambda_min_nm"] == pytest.approx(805.0625)
