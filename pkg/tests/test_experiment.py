from dataclasses import replace

import numpy as np
import pytest

from ghostspec.detection import CoincidenceWindow, DetectorSpec, MonochromatorSpec
from ghostspec.exceptions import EmptyBandError, GridMismatchError, InvalidInputError, NormalizationError
from ghostspec.experiment import (
    CLASSICAL,
    QUANTUM,
    ScanConfig,
    Spectrum,
    derive_seed,
    measure,
    normalize,
    run_classical_scan,
    run_quantum_scan,
    run_scan,
)
from ghostspec.sample import FanoProfile, resonance_minimum_wavelength, transmission
from ghostspec.source import BiphotonSpectrum, Lobe

REFERENCE = FanoProfile(806.0, 30.0, -16.0, 0.5, 1.0)


def quantum(app, profile, scan, seed, **kw):
    return run_quantum_scan(app.source, profile, app.det_signal, app.det_idler, app.mono, app.window,
                            scan, seed, **kw)


@pytest.mark.parametrize("kw", [dict(step_nm=0.0), dict(dwell_s=0.0), dict(repeats=0),
                                dict(lambda_start_nm=900.0), dict(fidelity="exact"), dict(mode="ghost"),
                                dict(injected_noise_hz=-1.0), dict(noiseless=True, fidelity="event")])
def test_scan_validation(kw):
    with pytest.raises(InvalidInputError):
        ScanConfig(**kw)


def test_default_grid():
    g = ScanConfig().grid()
    assert g.size >= 40
    assert g[0] == 740.0 and g[-1] == 869.0
    assert np.allclose(np.diff(g), 3.0)


def test_spectrum_validation_and_records():
    with pytest.raises(InvalidInputError):
        Spectrum([2.0, 1.0], [1, 1], [0, 0], [1, 1])
    with pytest.raises(InvalidInputError):
        Spectrum([1.0, 2.0], [1, 1], [-1, 0], [1, 1])
    s = Spectrum.from_counts([3.0, 1.0, 2.0], [[3, 5], [1, 1], [2, 4]])
    assert s.lambda_nm.tolist() == [1.0, 2.0, 3.0]
    assert s.mean.tolist() == [1.0, 3.0, 4.0]
    assert s.std[0] == 0.0 and s.std[1] == pytest.approx(np.sqrt(2))
    rec = s.records[2]
    assert (rec.lambda_nm, rec.mean_counts, rec.n_repeats) == (3.0, 4.0, 2)


def test_derive_seed_distinct_and_stable():
    seeds = {derive_seed(1, "quantum", "a"), derive_seed(1, "quantum", "b"), derive_seed(2, "quantum", "a"),
             derive_seed(1, "classical", "a"), derive_seed(1, "substrate")}
    assert len(seeds) == 5
    assert derive_seed(1, "quantum", "a") == derive_seed(1, "quantum", "a")


def test_unit_transmission_is_flat(apparatus, fig5):
    scan = replace(fig5.scan, injected_noise_hz=1e3)
    s = measure(apparatus, None, scan, seed=4)
    counts = quantum(apparatus, None, scan, seed=4).mean.mean()
    assert s.mean.std() / s.mean.mean() < 3 / np.sqrt(counts * scan.repeats)


def test_quantum_operating_point_shows_dip(apparatus, fig5):
    scan = replace(fig5.scan, injected_noise_hz=1e3)
    s = measure(apparatus, REFERENCE, scan, seed=5)
    lam_dip = s.lambda_nm[np.argmin(s.mean)]
    assert 800.0 <= lam_dip <= 809.0
    # asymmetric: the short-wavelength wing sits below the long one
    assert s.mean[0] < s.mean[-1]
    # calibration: 1e3 signal counts/s at the centre
    assert s.meta["p_inband_center_hz"] * s.meta["eta_s"] == pytest.approx(1e3, rel=0.01)


def test_dip_on_probe_axis_within_one_step(apparatus, fig5):
    scan = replace(fig5.scan, noiseless=True)
    for centre in (790.0, 806.0, 830.0):
        prof = replace(REFERENCE, lambda_r_nm=centre)
        s = measure(apparatus, prof, scan, seed=0)
        assert abs(s.lambda_nm[np.argmin(s.mean)] - resonance_minimum_wavelength(prof)) <= scan.step_nm


def test_noiseless_quantum_scan_estimates_transmission(apparatus, fig5):
    scan = replace(fig5.scan, injected_noise_hz=1e3)
    clean = measure(apparatus, REFERENCE, replace(scan, noiseless=True), seed=0)
    noisy = measure(apparatus, REFERENCE, scan, seed=6)
    sigma = noisy.stderr
    assert np.all(np.abs(clean.mean - transmission(REFERENCE, clean.lambda_nm)) <= 4 * sigma)


@pytest.mark.parametrize("factor", [0.1, 3.0, 50.0])
def test_dip_location_scale_invariant(apparatus, fig5, factor):
    base = replace(fig5.scan, noiseless=True)
    ref = measure(apparatus, REFERENCE, base, seed=0)
    for mode in (QUANTUM, CLASSICAL):
        scan = replace(base, mode=mode, signal_rate_hz=1e3 * factor)
        s = measure(apparatus, REFERENCE, scan, seed=0)
        assert np.argmin(s.mean) == np.argmin(ref.mean)
    uncal = replace(base, signal_rate_hz=None)
    a = measure(replace(apparatus, source=apparatus.source.with_pair_rate(1e6)), REFERENCE, uncal, seed=0)
    b = measure(replace(apparatus, source=apparatus.source.with_pair_rate(1e6 * factor)), REFERENCE, uncal, seed=0)
    assert np.argmin(a.mean) == np.argmin(b.mean)


@pytest.mark.parametrize("mode, fidelity", [(QUANTUM, "rate"), (CLASSICAL, "rate"), (CLASSICAL, "event")])
def test_injected_noise_equals_raised_dark_rate(apparatus, short_scan, mode, fidelity):
    scan = replace(short_scan, mode=mode, fidelity=fidelity, repeats=2, injected_noise_hz=5e3)
    a = run_scan(apparatus, REFERENCE, scan, seed=8)
    louder = replace(apparatus, det_signal=apparatus.det_signal.with_extra_noise(5e3))
    b = run_scan(louder, REFERENCE, replace(scan, injected_noise_hz=0.0), seed=8)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.std, b.std)


def test_injected_noise_equivalence_event_quantum(apparatus):
    scan = ScanConfig(800.0, 806.0, dwell_s=0.05, repeats=1, fidelity="event", injected_noise_hz=5e3)
    a = quantum(apparatus, REFERENCE, scan, seed=8)
    louder = replace(apparatus, det_signal=apparatus.det_signal.with_extra_noise(5e3))
    b = quantum(louder, REFERENCE, replace(scan, injected_noise_hz=0.0), seed=8)
    np.testing.assert_array_equal(a.mean, b.mean)


def test_quantum_dip_contrast_independent_of_noise(apparatus, fig5):
    contrast = []
    for noise in (1e3, 2e4, 7e4):
        scan = replace(fig5.scan, injected_noise_hz=noise, noiseless=True)
        arr = quantum(apparatus, REFERENCE, scan, seed=0)
        sub = quantum(apparatus, None, scan, seed=0)
        # the array also absorbs broadband idlers, which lowers its flat
        # pedestal; that offset is the wing value of the difference
        diff = sub.mean - arr.mean
        contrast.append(diff.max() - diff.min())
    assert max(contrast) / min(contrast) - 1 < 0.01


def test_classical_relative_contrast_falls_with_noise(apparatus, fig5):
    rel = {}
    for noise in (1e2, 2e4, 7e4):
        scan = replace(fig5.scan, mode=CLASSICAL, injected_noise_hz=noise, noiseless=True)
        arr = run_scan(apparatus, REFERENCE, scan, seed=0)
        sub = run_scan(apparatus, None, scan, seed=0)
        rel[noise] = np.max(sub.mean - arr.mean) / sub.mean.max()
        assert rel[noise] == pytest.approx(0.5 * 1e3 / (1e3 + noise), rel=0.01)
    assert rel[7e4] <= 0.014


def test_classical_flat_lamp(apparatus, fig5):
    scan = replace(fig5.scan, mode=CLASSICAL, injected_noise_hz=0.0)
    det = DetectorSpec(efficiency=0.1)
    s = run_classical_scan(None, None, det, apparatus.mono, scan, seed=2)
    expected = 1e3 * scan.dwell_s
    assert np.all(np.abs(s.mean - expected) <= 4 * np.sqrt(expected / scan.repeats))


def test_classical_relative_error_sqrt_two_law(apparatus):
    det = DetectorSpec(efficiency=0.1)
    rel = []
    for dwell in (1.0, 2.0):
        scan = ScanConfig(800.0, 815.0, dwell_s=dwell, repeats=400, mode=CLASSICAL)
        s = run_classical_scan(None, None, det, apparatus.mono, scan, seed=3)
        rel.append(np.mean(s.std / s.mean))
    assert rel[0] / rel[1] == pytest.approx(np.sqrt(2), rel=0.05)


def test_classical_event_matches_lamp_calibration(apparatus):
    scan = ScanConfig(800.0, 803.0, dwell_s=2.0, repeats=5, mode=CLASSICAL, fidelity="event")
    s = run_classical_scan(None, None, DetectorSpec(efficiency=0.1), apparatus.mono, scan, seed=3)
    assert np.all(np.abs(s.mean - 2000.0) <= 4 * np.sqrt(2000.0 / 5))


def test_lamp_needs_flux_or_calibration(apparatus):
    scan = ScanConfig(signal_rate_hz=None, mode=CLASSICAL)
    with pytest.raises(InvalidInputError):
        run_classical_scan(None, None, apparatus.det_signal, apparatus.mono, scan, seed=0)


def test_empty_band():
    src = BiphotonSpectrum(lobes=(Lobe(440.0, 1.0, 1.0),))
    scan = ScanConfig(signal_rate_hz=None)
    with pytest.raises(EmptyBandError):
        run_quantum_scan(src, None, DetectorSpec(0.1), DetectorSpec(0.05), MonochromatorSpec(),
                         CoincidenceWindow(), scan, seed=0)


def test_normalize_self_ratio():
    s = Spectrum.from_counts([1.0, 2.0, 3.0], [[100, 110], [90, 95], [120, 100]])
    r = normalize(s, s)
    np.testing.assert_allclose(r.mean, 1.0)
    np.testing.assert_allclose(r.std, np.sqrt(2) * s.std / s.mean)
    assert r.meta["units"] == "transmission"


def test_normalize_unit_substrate_recovers_transmission():
    lam = np.linspace(780, 830, 11)
    t = transmission(REFERENCE, lam)
    arr = Spectrum(lam, 1000 * t, np.zeros(11), np.full(11, 4))
    sub = Spectrum(lam, np.full(11, 1000.0), np.zeros(11), np.full(11, 4))
    np.testing.assert_allclose(normalize(arr, sub).mean, t)


def test_normalize_subtracts_floor_only_for_classical():
    lam = [1.0, 2.0]
    meta = {"noise_floor_counts": 50.0}
    arr = Spectrum(lam, [100.0, 75.0], [0, 0], [1, 1], mode=CLASSICAL, meta=meta)
    sub = Spectrum(lam, [150.0, 150.0], [0, 0], [1, 1], mode=CLASSICAL, meta=meta)
    np.testing.assert_allclose(normalize(arr, sub).mean, [0.5, 0.25])
    qa, qs = replace(arr, mode=QUANTUM), replace(sub, mode=QUANTUM)
    np.testing.assert_allclose(normalize(qa, qs).mean, [100 / 150, 75 / 150])


def test_normalize_errors():
    a = Spectrum([1.0, 2.0], [1, 1], [0, 0], [1, 1])
    with pytest.raises(GridMismatchError):
        normalize(a, Spectrum([1.0, 3.0], [1, 1], [0, 0], [1, 1]))
    with pytest.raises(NormalizationError):
        normalize(a, Spectrum([1.0, 2.0], [1, 0], [0, 0], [1, 1]))
    with pytest.raises(ZeroDivisionError):
        normalize(a, Spectrum([1.0, 2.0], [0, 1], [0, 0], [1, 1]))


def test_scans_are_deterministic(apparatus, short_scan):
    a = measure(apparatus, REFERENCE, short_scan, seed=42)
    b = measure(apparatus, REFERENCE, short_scan, seed=42)
    c = measure(apparatus, REFERENCE, short_scan, seed=43)
    np.testing.assert_array_equal(a.mean, b.mean)
    assert not np.array_equal(a.mean, c.mean)


def test_delayed_window_sees_only_accidentals(apparatus):
    scan = ScanConfig(800.0, 803.0, dwell_s=0.5, repeats=2, fidelity="event", injected_noise_hz=7e4)
    prompt = quantum(apparatus, REFERENCE, scan, seed=1)
    delayed = quantum(apparatus, REFERENCE, scan, seed=1, delay_s=1e-6)
    expected = quantum(apparatus, REFERENCE, replace(scan, fidelity="rate", noiseless=True), seed=1,
                       delay_s=1e-6).mean
    assert np.all(delayed.mean < prompt.mean)
    assert np.all(np.abs(delayed.mean - expected) <= 4 * np.sqrt(expected / scan.repeats))


def test_sample_after_monochromator_variant(apparatus, fig5):
    scan = replace(fig5.scan, sample_after_monochromator=True, noiseless=True)
    s = measure(apparatus, REFERENCE, scan, seed=0)
    assert abs(s.lambda_nm[np.argmin(s.mean)] - resonance_minimum_wavelength(REFERENCE)) <= 3.0
    assert s.meta["sample_after_monochromator"] is True
