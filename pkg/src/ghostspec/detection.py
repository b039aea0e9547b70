"""Detectors, monochromator and coincidence counting.

Two fidelities are offered: closed-form expected rates for singles, true
coincidences and accidentals, and explicit time-tagged click streams matched
inside a coincidence window.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .exceptions import InvalidInputError, UnsortedInputError
from .source import BiphotonSpectrum, spectral_density


@dataclass(frozen=True)
class DetectorSpec:
    """Single-photon detector.

    `noise_rate_hz` lumps dark counts, stray light and any deliberately
    injected counts. `noise_fluctuation` is the relative standard deviation
    of that rate between acquisitions (an unstable lamp behind the injected
    noise, say); zero means a perfectly stable Poisson background.
    """

    efficiency: float = 0.5
    noise_rate_hz: float = 0.0
    jitter_sigma_s: float = 400e-12
    noise_fluctuation: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise InvalidInputError("efficiency must lie in [0, 1]")
        if self.noise_rate_hz < 0 or self.jitter_sigma_s < 0 or self.noise_fluctuation < 0:
            raise InvalidInputError("noise rate, jitter and fluctuation must be non-negative")

    def with_extra_noise(self, extra_hz: float) -> "DetectorSpec":
        return DetectorSpec(self.efficiency, self.noise_rate_hz + extra_hz,
                            self.jitter_sigma_s, self.noise_fluctuation)


@dataclass(frozen=True)
class MonochromatorSpec:
    center_nm: float = 814.0
    fwhm_nm: float = 1.5
    shape: str = "gaussian"

    def __post_init__(self):
        if not self.fwhm_nm > 0:
            raise InvalidInputError("monochromator FWHM must be positive")
        if self.shape not in ("gaussian", "rectangular"):
            raise InvalidInputError(f"unknown passband shape {self.shape!r}")

    def at(self, center_nm: float) -> "MonochromatorSpec":
        return MonochromatorSpec(center_nm, self.fwhm_nm, self.shape)

    @property
    def equivalent_width_nm(self) -> float:
        """Integral of the passband over wavelength."""
        if self.shape == "gaussian":
            return self.fwhm_nm * np.sqrt(np.pi / (4.0 * np.log(2.0)))
        return self.fwhm_nm


@dataclass(frozen=True)
class CoincidenceWindow:
    delta_t_s: float = 5e-9

    def __post_init__(self):
        if not self.delta_t_s > 0:
            raise InvalidInputError("coincidence window must be positive")


class EventStream:
    """Sorted detector click times in seconds."""

    def __init__(self, timestamps=(), check=True):
        ts = np.asarray(timestamps, dtype=float).ravel()
        if check:
            if ts.size and (np.any(np.diff(ts) < 0)):
                raise UnsortedInputError("event stream timestamps must be non-decreasing")
            if ts.size and ts[0] < 0:
                raise InvalidInputError("event timestamps must be non-negative")
        self.timestamps = ts

    def __len__(self):
        return self.timestamps.size

    def __eq__(self, other):
        return isinstance(other, EventStream) and np.array_equal(self.timestamps, other.timestamps)

    def shifted(self, delay_s: float) -> "EventStream":
        return EventStream(self.timestamps + delay_s, check=False)


@dataclass(frozen=True)
class RateBreakdown:
    s_signal_hz: float
    s_idler_hz: float
    r_true_hz: float
    r_acc_nn_hz: float
    r_acc_sn_hz: float
    r_acc_ns_hz: float
    r_noise_hz: float
    r_total_hz: float


def passband(mono: MonochromatorSpec, lambda_nm):
    """Monochromator transmission, 1 at the centre and 1/2 at +-FWHM/2."""
    x = np.asarray(lambda_nm, dtype=float) - mono.center_nm
    if mono.shape == "gaussian":
        out = np.exp(-4.0 * np.log(2.0) * x * x / mono.fwhm_nm ** 2)
    else:
        half = mono.fwhm_nm / 2.0
        ax = np.abs(x)
        out = np.where(ax < half, 1.0, np.where(np.isclose(ax, half, rtol=0, atol=1e-12), 0.5, 0.0))
    return float(out) if out.ndim == 0 else out


def inband_fraction(source: BiphotonSpectrum, mono: MonochromatorSpec, n: int = 2401) -> float:
    """Fraction of all pairs whose signal photon is transmitted by the monochromator."""
    span = 6.0 * mono.fwhm_nm
    lo = max(mono.center_nm - span, source.pump.wavelength_nm)
    grid = np.linspace(lo, mono.center_nm + span, n)
    if mono.shape == "rectangular":
        half = mono.fwhm_nm / 2.0
        grid = np.linspace(max(mono.center_nm - half, lo), mono.center_nm + half, n)
        return float(trapezoid(spectral_density(source, grid), grid))
    return float(trapezoid(spectral_density(source, grid) * passband(mono, grid), grid))


def _noise_rate_factor(det: DetectorSpec, rng: np.random.Generator) -> float:
    cv = det.noise_fluctuation
    if cv == 0 or det.noise_rate_hz == 0:
        return 1.0
    shape = 1.0 / (cv * cv)
    return float(rng.gamma(shape, 1.0 / shape))


def acquisition_noise_rate(det: DetectorSpec, rng: np.random.Generator) -> float:
    """Noise rate realised during one acquisition (mean `det.noise_rate_hz`)."""
    return det.noise_rate_hz * _noise_rate_factor(det, rng)


def detect(arrival_times_s, survival, det: DetectorSpec, duration_s: float, seed) -> EventStream:
    """Turn photon arrivals into a click stream.

    Each arrival is kept with probability ``det.efficiency * survival``
    (survival covers sample transmission, passband, etc.), kept clicks are
    jittered, and independent Poisson noise over ``[0, duration_s)`` is merged in.
    """
    rng = np.random.default_rng(seed)
    t = np.asarray(arrival_times_s, dtype=float)
    p = det.efficiency * np.broadcast_to(np.asarray(survival, dtype=float), t.shape)
    kept = t[rng.random(t.size) < p]
    if det.jitter_sigma_s > 0 and kept.size:
        kept = np.maximum(kept + rng.normal(0.0, det.jitter_sigma_s, kept.size), 0.0)
    rate = acquisition_noise_rate(det, rng)
    n_noise = rng.poisson(rate * duration_s) if duration_s > 0 else 0
    noise = rng.uniform(0.0, duration_s, n_noise)
    return EventStream(np.sort(np.concatenate((kept, noise))), check=False)


def _check_sorted(stream: EventStream):
    ts = stream.timestamps
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        raise UnsortedInputError("coincidence counting needs time-sorted streams")


def count_coincidences(signal: EventStream, idler: EventStream, w: CoincidenceWindow) -> int:
    """Greedy one-to-one matching of clicks with ``|t_s - t_i| <= dt / 2``.

    Clicks that have no partner inside the window cannot influence the sweep,
    so they are dropped up front and only the candidates are walked.
    """
    _check_sorted(signal)
    _check_sorted(idler)
    a = signal.timestamps
    b = idler.timestamps
    if a.size == 0 or b.size == 0:
        return 0
    h = w.delta_t_s / 2.0
    ia = np.searchsorted(b, a - h, side="left")
    ja = np.searchsorted(b, a + h, side="right")
    a = a[ja > ia]
    ib = np.searchsorted(signal.timestamps, b - h, side="left")
    jb = np.searchsorted(signal.timestamps, b + h, side="right")
    b = b[jb > ib]
    a = a.tolist()
    b = b.tolist()
    i = j = n = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        d = a[i] - b[j]
        if -h <= d <= h:
            n += 1
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return n


def expected_rates(p_inband_hz, eta_s, eta_i, n_s_hz, n_i_hz, transmission, w: CoincidenceWindow) -> RateBreakdown:
    """Singles, true and accidental coincidence rates for one monochromator setting.

    `n_i_hz` is everything the idler detector sees that is not the twin of an
    in-band signal photon.
    """
    for p in (eta_s, eta_i, transmission):
        if not 0.0 <= p <= 1.0:
            raise InvalidInputError("efficiencies and transmission must lie in [0, 1]")
    if min(p_inband_hz, n_s_hz, n_i_hz) < 0:
        raise InvalidInputError("rates must be non-negative")
    dt = w.delta_t_s
    s_s = eta_s * p_inband_hz
    s_i = eta_i * p_inband_hz * transmission
    r = eta_s * eta_i * p_inband_hz * transmission
    nn = n_s_hz * n_i_hz * dt
    sn = s_s * n_i_hz * dt
    ns = n_s_hz * s_i * dt
    noise = nn + sn + ns
    return RateBreakdown(s_s, s_i, r, nn, sn, ns, noise, r + noise)


# time-tag interchange -------------------------------------------------------

def write_timetags(path, streams: dict, wavelengths: dict | None = None):
    """Write click streams as CSV rows ``channel,timestamp_ps[,wavelength_nm]``."""
    wavelengths = wavelengths or {}
    rows = []
    for channel, stream in streams.items():
        lam = wavelengths.get(channel)
        for k, t in enumerate(stream.timestamps):
            rows.append((t, channel, None if lam is None else lam[k]))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["channel", "timestamp_ps", "wavelength_nm"])
        for t, channel, lam in rows:
            out.writerow([channel, repr(round(float(t) * 1e12, 3)), "" if lam is None else repr(float(lam))])


def read_timetags(path) -> dict:
    """Read a time-tag CSV back into ``{channel: EventStream}``."""
    times: dict = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            times.setdefault(row["channel"], []).append(float(row["timestamp_ps"]) * 1e-12)
    return {ch: EventStream(np.sort(ts)) for ch, ts in times.items()}
