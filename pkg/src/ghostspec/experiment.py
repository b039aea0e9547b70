"""Scan protocols for ghost (coincidence) and conventional transmission spectroscopy.

In the ghost scan the monochromator sits in the signal arm and the sample in
the idler arm; each monochromator setting selects, through energy
conservation, the idler wavelength at which the sample is probed. Every
(bin, repeat) acquisition draws its randomness from its own child of the
scan seed, so results do not depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .detection import (
    CoincidenceWindow,
    DetectorSpec,
    MonochromatorSpec,
    acquisition_noise_rate,
    count_coincidences,
    detect,
    expected_rates,
    inband_fraction,
    passband,
)
from .exceptions import EmptyBandError, GridMismatchError, InvalidInputError, NormalizationError
from .sample import FanoProfile, transmission
from .source import BiphotonSpectrum, conjugate_wavelength, sample_pairs, spectral_density

QUANTUM = "quantum"
CLASSICAL = "classical"

# stream tags for child seeds
_RATE, _PAIRS, _DET_S, _DET_I, _LAMP = range(5)


@dataclass(frozen=True)
class ScanConfig:
    """Wavelength grid and acquisition protocol.

    The grid is in the wavelength at which the sample is probed. In the ghost
    scan the monochromator is set to the conjugate of each grid point.
    `signal_rate_hz`, when given, calibrates the source (or lamp) so that the
    monochromator channel detects that many signal counts per second at the
    grid centre with unit transmission.
    """

    lambda_start_nm: float = 740.0
    lambda_stop_nm: float = 870.0
    step_nm: float = 3.0
    dwell_s: float = 20.0
    repeats: int = 20
    fidelity: str = "rate"
    mode: str = QUANTUM
    injected_noise_hz: float = 0.0
    signal_rate_hz: Optional[float] = 1.0e3
    sample_after_monochromator: bool = False
    noiseless: bool = False

    def __post_init__(self):
        if not self.step_nm > 0 or not self.dwell_s > 0:
            raise InvalidInputError("step and dwell must be positive")
        if self.repeats < 1:
            raise InvalidInputError("at least one repeat is required")
        if not self.lambda_start_nm < self.lambda_stop_nm:
            raise InvalidInputError("scan start must be below scan stop")
        if self.fidelity not in ("rate", "event"):
            raise InvalidInputError(f"unknown fidelity {self.fidelity!r}")
        if self.mode not in (QUANTUM, CLASSICAL):
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.injected_noise_hz < 0:
            raise InvalidInputError("injected noise must be non-negative")
        if self.noiseless and self.fidelity != "rate":
            raise InvalidInputError("noiseless acquisition is only defined for rate fidelity")

    def grid(self) -> np.ndarray:
        n = int(np.floor((self.lambda_stop_nm - self.lambda_start_nm) / self.step_nm + 1e-9)) + 1
        return self.lambda_start_nm + self.step_nm * np.arange(n)

    @property
    def center_nm(self) -> float:
        return 0.5 * (self.lambda_start_nm + self.lambda_stop_nm)


@dataclass(frozen=True)
class SpectrumRecord:
    lambda_nm: float
    mean_counts: float
    std_counts: float
    n_repeats: int


@dataclass
class Spectrum:
    """Measured spectrum on a strictly increasing wavelength grid."""

    lambda_nm: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n: np.ndarray
    mode: str = QUANTUM
    config_digest: str = ""
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lambda_nm = np.asarray(self.lambda_nm, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        self.n = np.asarray(self.n, dtype=int)
        if self.lambda_nm.size > 1 and np.any(np.diff(self.lambda_nm) <= 0):
            raise InvalidInputError("spectrum wavelengths must be strictly increasing")
        if np.any(self.std < 0):
            raise InvalidInputError("standard deviations must be non-negative")

    def __len__(self):
        return self.lambda_nm.size

    @property
    def records(self):
        return [SpectrumRecord(float(l), float(m), float(s), int(k))
                for l, m, s, k in zip(self.lambda_nm, self.mean, self.std, self.n)]

    @property
    def stderr(self) -> np.ndarray:
        return self.std / np.sqrt(np.maximum(self.n, 1))

    @classmethod
    def from_counts(cls, lambda_nm, counts, **kw) -> "Spectrum":
        """Build from a (bins, repeats) count table, sorting by wavelength."""
        lam = np.asarray(lambda_nm, dtype=float)
        counts = np.asarray(counts, dtype=float)
        order = np.argsort(lam)
        reps = counts.shape[1]
        std = counts.std(axis=1, ddof=1) if reps > 1 else np.zeros(len(lam))
        # identical repeats: exact zero, not rounding residue from the mean
        std[np.ptp(counts, axis=1) == 0] = 0.0
        return cls(lam[order], counts.mean(axis=1)[order], std[order],
                   np.full(len(lam), reps), **kw)


@dataclass(frozen=True)
class Apparatus:
    """Everything on the optical table except the sample and the protocol."""

    source: BiphotonSpectrum = field(default_factory=BiphotonSpectrum)
    det_signal: DetectorSpec = field(default_factory=lambda: DetectorSpec(efficiency=0.1))
    det_idler: DetectorSpec = field(default_factory=lambda: DetectorSpec(efficiency=0.05))
    mono: MonochromatorSpec = field(default_factory=MonochromatorSpec)
    window: CoincidenceWindow = field(default_factory=CoincidenceWindow)
    lamp_flux_per_nm: Optional[float] = None


def _child(seed, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def derive_seed(seed: int, *tags) -> int:
    """Deterministic 63-bit seed for a named sub-run of `seed`.

    Tags may be ints or strings; strings are hashed by their UTF-8 bytes.
    """
    words = [int(seed)]
    for tag in tags:
        if isinstance(tag, str):
            words.extend(tag.encode("utf-8"))
            words.append(0x10000)
        else:
            words.append(int(tag))
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def _t(profile: Optional[FanoProfile], lam):
    """Sample transmission; `None` stands for the bare substrate (T = 1)."""
    if profile is None:
        return np.ones_like(np.asarray(lam, dtype=float)) if np.ndim(lam) else 1.0
    return transmission(profile, lam)


def calibrate_pair_rate(source: BiphotonSpectrum, det_signal: DetectorSpec, mono: MonochromatorSpec,
                        signal_rate_hz: float, mono_center_nm: float) -> BiphotonSpectrum:
    frac = inband_fraction(source, mono.at(mono_center_nm))
    if frac <= 0 or det_signal.efficiency <= 0:
        raise EmptyBandError("cannot calibrate: no pairs reach the signal detector at the scan centre")
    return source.with_pair_rate(signal_rate_hz / (det_signal.efficiency * frac))


def _mono_settings(source, scan, grid):
    if scan.sample_after_monochromator:
        return grid.copy()
    return conjugate_wavelength(source.pump, grid)


def _mean_idler_transmission(source: BiphotonSpectrum, profile) -> float:
    """Pair-averaged transmission seen by idler photons over the whole spectrum."""
    lam_s = source.support()[1:]
    dens = spectral_density(source, lam_s)
    t = _t(profile, conjugate_wavelength(source.pump, lam_s))
    return float(trapezoid(dens * t, lam_s))


def run_quantum_scan(source: BiphotonSpectrum, profile: Optional[FanoProfile], det_signal: DetectorSpec,
                     det_idler: DetectorSpec, mono: MonochromatorSpec, window: CoincidenceWindow,
                     scan: ScanConfig, seed: int, *, delay_s: float = 0.0, digest: str = "") -> Spectrum:
    """Coincidence counts versus probed wavelength.

    With a non-zero `delay_s` the idler clicks are delayed before matching,
    so the counter sees only accidental coincidences.
    """
    grid = scan.grid()
    settings = _mono_settings(source, scan, grid)
    if scan.signal_rate_hz is not None:
        centre = scan.center_nm if scan.sample_after_monochromator else conjugate_wavelength(
            source.pump, scan.center_nm)
        source = calibrate_pair_rate(source, det_signal, mono, scan.signal_rate_hz, centre)
    det_signal = det_signal.with_extra_noise(scan.injected_noise_hz)
    after = scan.sample_after_monochromator

    fracs = np.array([inband_fraction(source, mono.at(m)) for m in settings])
    p_inband = source.pair_rate_hz * fracs
    if not np.any(p_inband > 0):
        raise EmptyBandError("no pair flux reaches the monochromator anywhere in the scan")
    probe_t = np.asarray(_t(profile, grid), dtype=float)
    mean_t_idler = 1.0 if after else _mean_idler_transmission(source, profile)

    t_sig_all = probe_t if after else np.ones_like(probe_t)
    t_idl_all = np.ones_like(probe_t) if after else probe_t
    idler_uncorrelated = det_idler.noise_rate_hz + det_idler.efficiency * np.maximum(
        source.pair_rate_hz * mean_t_idler - p_inband * t_sig_all * t_idl_all, 0.0)
    centre_bin = int(np.argmin(np.abs(grid - scan.center_nm)))

    counts = np.zeros((grid.size, scan.repeats))
    for b, lam_m in enumerate(settings):
        t_sig = probe_t[b] if after else 1.0
        t_idl = 1.0 if after else probe_t[b]
        for r in range(scan.repeats):
            if scan.fidelity == "rate":
                rng = np.random.default_rng(_child(seed, _RATE, b, r))
                if scan.noiseless:
                    ns, ni_dark = det_signal.noise_rate_hz, det_idler.noise_rate_hz
                else:
                    ns = acquisition_noise_rate(det_signal, rng)
                    ni_dark = acquisition_noise_rate(det_idler, rng)
                ni = ni_dark + det_idler.efficiency * (
                    source.pair_rate_hz * mean_t_idler - p_inband[b] * t_sig * t_idl)
                ni = max(ni, 0.0)
                rates = expected_rates(p_inband[b] * t_sig, det_signal.efficiency, det_idler.efficiency,
                                       ns, ni, t_idl, window)
                if delay_s > 0:
                    mean_rate = (rates.s_signal_hz + ns) * (rates.s_idler_hz + ni) * window.delta_t_s
                else:
                    mean_rate = rates.r_total_hz
                counts[b, r] = mean_rate * scan.dwell_s if scan.noiseless else rng.poisson(
                    mean_rate * scan.dwell_s)
            else:
                counts[b, r] = _event_acquisition(source, profile, det_signal, det_idler, mono.at(lam_m),
                                                  window, scan.dwell_s, after, delay_s, seed, b, r)
    digest_meta = dict(
        fidelity=scan.fidelity, dwell_s=scan.dwell_s, repeats=scan.repeats,
        injected_noise_hz=scan.injected_noise_hz, signal_noise_rate_hz=det_signal.noise_rate_hz,
        noise_floor_counts=0.0, accidentals_subtracted=False, pair_rate_hz=source.pair_rate_hz,
        sample="substrate" if profile is None else "array", delay_s=delay_s,
        sample_after_monochromator=after, units="counts",
        eta_s=det_signal.efficiency, eta_i=det_idler.efficiency, delta_t_s=window.delta_t_s,
        p_inband_center_hz=float(p_inband[centre_bin]),
        idler_uncorrelated_hz=float(idler_uncorrelated[centre_bin]),
    )
    return Spectrum.from_counts(grid, counts, mode=QUANTUM, config_digest=digest, seed=seed, meta=digest_meta)


def _event_acquisition(source, profile, det_signal, det_idler, mono_at, window, dwell, after, delay_s,
                       seed, b, r) -> int:
    pairs = sample_pairs(source, dwell, _child(seed, _PAIRS, b, r))
    surv_s = passband(mono_at, pairs.lambda_signal_nm)
    if after:
        surv_s = surv_s * _t(profile, pairs.lambda_signal_nm)
        surv_i = 1.0
    else:
        surv_i = _t(profile, pairs.lambda_idler_nm)
    sig = detect(pairs.t_s, surv_s, det_signal, dwell, _child(seed, _DET_S, b, r))
    idl = detect(pairs.t_s, surv_i, det_idler, dwell, _child(seed, _DET_I, b, r))
    if delay_s > 0:
        idl = idl.shifted(delay_s)
    return count_coincidences(sig, idl, window)


def lamp_flux_for(det: DetectorSpec, mono: MonochromatorSpec, signal_rate_hz: float) -> float:
    """Flat lamp spectral flux (photons/s/nm) giving `signal_rate_hz` detected counts at T = 1."""
    if det.efficiency <= 0:
        raise EmptyBandError("detector efficiency is zero; lamp cannot be calibrated")
    return signal_rate_hz / (det.efficiency * mono.equivalent_width_nm)


def run_classical_scan(lamp_flux_per_nm: Optional[float], profile: Optional[FanoProfile], det: DetectorSpec,
                       mono: MonochromatorSpec, scan: ScanConfig, seed: int, *, digest: str = "") -> Spectrum:
    """Photocounts versus monochromator wavelength with the sample in the lamp beam."""
    grid = scan.grid()
    if scan.signal_rate_hz is not None:
        lamp_flux_per_nm = lamp_flux_for(det, mono, scan.signal_rate_hz)
    if lamp_flux_per_nm is None:
        raise InvalidInputError("either a lamp flux or a signal-rate calibration target is required")
    det = det.with_extra_noise(scan.injected_noise_hz)
    signal = det.efficiency * lamp_flux_per_nm * mono.equivalent_width_nm * np.asarray(_t(profile, grid))

    counts = np.zeros((grid.size, scan.repeats))
    for b, lam_m in enumerate(grid):
        for r in range(scan.repeats):
            if scan.fidelity == "rate":
                rng = np.random.default_rng(_child(seed, _RATE, b, r))
                if scan.noiseless:
                    counts[b, r] = (signal[b] + det.noise_rate_hz) * scan.dwell_s
                else:
                    noise = acquisition_noise_rate(det, rng)
                    counts[b, r] = rng.poisson((signal[b] + noise) * scan.dwell_s)
            else:
                counts[b, r] = _lamp_acquisition(lamp_flux_per_nm, profile, det, mono.at(lam_m),
                                                 scan.dwell_s, seed, b, r)
    meta = dict(
        fidelity=scan.fidelity, dwell_s=scan.dwell_s, repeats=scan.repeats,
        injected_noise_hz=scan.injected_noise_hz, signal_noise_rate_hz=det.noise_rate_hz,
        noise_floor_counts=det.noise_rate_hz * scan.dwell_s, lamp_flux_per_nm=lamp_flux_per_nm,
        eta_s=det.efficiency,
        sample="substrate" if profile is None else "array", units="counts",
    )
    return Spectrum.from_counts(grid, counts, mode=CLASSICAL, config_digest=digest, seed=seed, meta=meta)


def _lamp_acquisition(flux, profile, det, mono_at, dwell, seed, b, r) -> int:
    rng = np.random.default_rng(_child(seed, _LAMP, b, r))
    if mono_at.shape == "gaussian":
        half = 6.0 * mono_at.fwhm_nm
    else:
        half = mono_at.fwhm_nm / 2.0
    n = rng.poisson(flux * 2.0 * half * dwell)
    lam = rng.uniform(mono_at.center_nm - half, mono_at.center_nm + half, n)
    t = np.sort(rng.uniform(0.0, dwell, n))
    surv = passband(mono_at, lam) * _t(profile, lam)
    return len(detect(t, surv, det, dwell, _child(seed, _DET_S, b, r)))


def run_scan(apparatus: Apparatus, profile: Optional[FanoProfile], scan: ScanConfig, seed: int,
             digest: str = "") -> Spectrum:
    if scan.mode == QUANTUM:
        return run_quantum_scan(apparatus.source, profile, apparatus.det_signal, apparatus.det_idler,
                                apparatus.mono, apparatus.window, scan, seed, digest=digest)
    return run_classical_scan(apparatus.lamp_flux_per_nm, profile, apparatus.det_signal, apparatus.mono,
                              scan, seed, digest=digest)


def normalize(array_spec: Spectrum, substrate_spec: Spectrum) -> Spectrum:
    """Array spectrum divided by substrate spectrum, bin by bin.

    For conventional spectra the known noise floor is subtracted from both
    before dividing; coincidence spectra keep their accidental pedestal.
    Uncertainties are combined to first order.
    """
    if (array_spec.lambda_nm.shape != substrate_spec.lambda_nm.shape
            or not np.allclose(array_spec.lambda_nm, substrate_spec.lambda_nm, rtol=0, atol=1e-9)):
        raise GridMismatchError("array and substrate spectra are on different wavelength grids")
    a = array_spec.mean.copy()
    s = substrate_spec.mean.copy()
    subtracted = array_spec.mode == CLASSICAL
    if subtracted:
        a -= array_spec.meta.get("noise_floor_counts", 0.0)
        s -= substrate_spec.meta.get("noise_floor_counts", 0.0)
    if np.any(s <= 0):
        bad = array_spec.lambda_nm[s <= 0]
        raise NormalizationError(f"substrate has no counts left above the noise floor at {bad.tolist()} nm; "
                                 "a longer dwell or more repeats is needed at this noise level")
    ratio = a / s
    std = np.sqrt((array_spec.std / s) ** 2 + (a * substrate_spec.std / s ** 2) ** 2)
    meta = dict(array_spec.meta)
    meta.update(units="transmission", normalized=True, background_subtracted=subtracted,
                substrate_seed=substrate_spec.seed)
    return Spectrum(array_spec.lambda_nm.copy(), ratio, std, np.minimum(array_spec.n, substrate_spec.n),
                    mode=array_spec.mode, config_digest=array_spec.config_digest, seed=array_spec.seed,
                    meta=meta)


def measure(apparatus: Apparatus, profile: Optional[FanoProfile], scan: ScanConfig, seed: int,
            digest: str = "") -> Spectrum:
    """Array and substrate scans followed by normalization.

    The substrate run uses a seed derived from `seed`, independent of the array run.
    """
    array = run_scan(apparatus, profile, scan, seed, digest)
    substrate = run_scan(apparatus, None, scan, derive_seed(seed, "substrate"), digest)
    return normalize(array, substrate)
