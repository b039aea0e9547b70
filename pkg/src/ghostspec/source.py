"""Broadband photon-pair source.

The pair spectrum is a weighted sum of Gaussian lobes over signal wavelength,
truncated to wavelengths longer than the pump and renormalized there. Pair
emission is a homogeneous Poisson process; every pair carries exactly
energy-conjugate signal and idler wavelengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.special import ndtr

from .exceptions import InvalidInputError

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True)
class PumpSpec:
    wavelength_nm: float = 407.0

    def __post_init__(self):
        if not self.wavelength_nm > 0:
            raise InvalidInputError("pump wavelength must be positive")


@dataclass(frozen=True)
class Lobe:
    center_nm: float
    fwhm_nm: float
    weight: float


# Degenerate crystal at 2 * 407 nm plus two detuned crystals; summed FWHM ~250 nm.
DEFAULT_LOBES = (
    Lobe(814.0, 110.0, 0.4),
    Lobe(730.0, 100.0, 0.3),
    Lobe(915.0, 120.0, 0.3),
)


@dataclass(frozen=True)
class BiphotonSpectrum:
    lobes: tuple = DEFAULT_LOBES
    pair_rate_hz: float = 1.0e6
    pump: PumpSpec = field(default_factory=PumpSpec)

    def __post_init__(self):
        lobes = tuple(l if isinstance(l, Lobe) else Lobe(*l) for l in self.lobes)
        object.__setattr__(self, "lobes", lobes)
        if not lobes:
            raise InvalidInputError("at least one spectral lobe is required")
        weights = np.array([l.weight for l in lobes])
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidInputError("lobe weights must be positive and sum to 1")
        for l in lobes:
            if not l.fwhm_nm > 0:
                raise InvalidInputError("lobe FWHM must be positive")
            if not l.center_nm > self.pump.wavelength_nm:
                raise InvalidInputError("lobe centers must lie above the pump wavelength")
        if self.pair_rate_hz < 0:
            raise InvalidInputError("pair rate must be non-negative")

    def with_pair_rate(self, pair_rate_hz: float) -> "BiphotonSpectrum":
        return BiphotonSpectrum(self.lobes, pair_rate_hz, self.pump)

    def support(self, n: int = 20001) -> np.ndarray:
        """Wavelength grid covering essentially all of the spectral weight."""
        lo = self.pump.wavelength_nm
        hi = max(l.center_nm + 12.0 * l.fwhm_nm for l in self.lobes)
        return np.linspace(lo, hi, n)


def conjugate_wavelength(pump: PumpSpec, lambda_signal_nm):
    """Idler wavelength energy-conjugate to `lambda_signal_nm` for the given pump.

    Works elementwise on arrays. The map is its own inverse.
    """
    lam = np.asarray(lambda_signal_nm, dtype=float)
    lp = pump.wavelength_nm
    if np.any(lam <= lp):
        raise InvalidInputError(
            f"signal wavelength must exceed the pump wavelength {lp} nm"
        )
    out = lam * lp / (lam - lp)
    return float(out) if out.ndim == 0 else out


def _lobe_arrays(spec: BiphotonSpectrum):
    c = np.array([l.center_nm for l in spec.lobes])
    s = np.array([l.fwhm_nm for l in spec.lobes]) * FWHM_TO_SIGMA
    w = np.array([l.weight for l in spec.lobes])
    # mass of each lobe above the pump wavelength
    kept = 1.0 - ndtr((spec.pump.wavelength_nm - c) / s)
    return c, s, w, kept


def spectral_density(spec: BiphotonSpectrum, lambda_nm):
    """Pair spectral density over signal wavelength, in 1/nm.

    Zero at and below the pump wavelength; integrates to 1 above it.
    """
    lam = np.asarray(lambda_nm, dtype=float)
    c, s, w, kept = _lobe_arrays(spec)
    z = (lam[..., None] - c) / s
    dens = np.sum(w * np.exp(-0.5 * z * z) / (s * np.sqrt(2.0 * np.pi) * kept), axis=-1)
    dens = np.where(lam > spec.pump.wavelength_nm, dens, 0.0)
    return float(dens) if dens.ndim == 0 else dens


def density_fwhm(spec: BiphotonSpectrum, n: int = 200001) -> float:
    """Full width at half maximum of the summed density, from a dense scan."""
    grid = spec.support(n)
    dens = spectral_density(spec, grid[1:])
    above = grid[1:][dens >= dens.max() / 2.0]
    return float(above[-1] - above[0])


def sample_signal_wavelengths(spec: BiphotonSpectrum, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `n` signal wavelengths from the truncated lobe mixture."""
    c, s, w, kept = _lobe_arrays(spec)
    mass = w  # truncation renormalizes each lobe individually
    idx = rng.choice(len(c), size=n, p=mass / mass.sum())
    lam = rng.normal(c[idx], s[idx])
    lp = spec.pump.wavelength_nm
    bad = lam <= lp
    while np.any(bad):
        lam[bad] = rng.normal(c[idx[bad]], s[idx[bad]])
        bad = lam <= lp
    return lam


@dataclass(frozen=True)
class PairEvent:
    t_s: float
    lambda_signal_nm: float
    lambda_idler_nm: float


class PairBatch(Sequence):
    """Time-ordered photon pairs stored column-wise.

    Behaves as a read-only sequence of `PairEvent`, while the arrays
    `t_s`, `lambda_signal_nm` and `lambda_idler_nm` are available for
    vectorized work.
    """

    def __init__(self, t_s, lambda_signal_nm, lambda_idler_nm):
        self.t_s = np.asarray(t_s, dtype=float)
        self.lambda_signal_nm = np.asarray(lambda_signal_nm, dtype=float)
        self.lambda_idler_nm = np.asarray(lambda_idler_nm, dtype=float)

    def __len__(self):
        return len(self.t_s)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return PairBatch(self.t_s[i], self.lambda_signal_nm[i], self.lambda_idler_nm[i])
        return PairEvent(float(self.t_s[i]), float(self.lambda_signal_nm[i]),
                         float(self.lambda_idler_nm[i]))

    def __iter__(self) -> Iterator[PairEvent]:
        for i in range(len(self)):
            yield self[i]

    def tobytes(self) -> bytes:
        return self.t_s.tobytes() + self.lambda_signal_nm.tobytes() + self.lambda_idler_nm.tobytes()


def sample_pairs(spec: BiphotonSpectrum, duration_s: float, seed) -> PairBatch:
    """Poisson pair emission over ``[0, duration_s)``.

    `seed` is anything accepted by ``numpy.random.default_rng`` (an int or a
    ``SeedSequence``); equal seeds give identical batches.
    """
    if duration_s < 0:
        raise InvalidInputError("duration must be non-negative")
    rng = np.random.default_rng(seed)
    n = rng.poisson(spec.pair_rate_hz * duration_s) if duration_s > 0 else 0
    t = np.sort(rng.uniform(0.0, duration_s, n))
    lam_s = sample_signal_wavelengths(spec, n, rng)
    lam_i = conjugate_wavelength(spec.pump, lam_s) if n else np.empty(0)
    return PairBatch(t, lam_s, lam_i)

