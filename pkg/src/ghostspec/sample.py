"""Phenomenological model of the plasmonic nanoparticle array.

Transmission follows an asymmetric Fano dip

    T(lam) = T0 * (1 - a * (F + eps)**2 / ((1 + F**2) * (1 + eps**2))),
    eps = 2 * (lam - lam_R) / width,

whose resonance wavelength moves linearly with the refractive index of the
medium on top of the array.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DegenerateProfileError, InvalidInputError, OutOfTableError


@dataclass(frozen=True)
class FanoProfile:
    lambda_r_nm: float = 806.0
    width_nm: float = 30.0
    fano_f: float = -16.0
    depth_a: float = 0.5
    baseline_t0: float = 1.0
    # fitted profiles may leave the physical range (e.g. counts instead of transmission)
    checked: bool = field(default=True, repr=False, compare=False, kw_only=True)

    def __post_init__(self):
        if not self.checked:
            return
        if not self.width_nm > 0:
            raise InvalidInputError("resonance width must be positive")
        if not 0.0 <= self.depth_a <= 1.0:
            raise InvalidInputError("depth must lie in [0, 1]")
        if not 0.0 < self.baseline_t0 <= 1.0:
            raise InvalidInputError("baseline must lie in (0, 1]")

    @property
    def q_factor(self) -> float:
        return self.lambda_r_nm / self.width_nm

    def params(self) -> np.ndarray:
        return np.array([self.lambda_r_nm, self.width_nm, self.fano_f, self.depth_a, self.baseline_t0])

    def __call__(self, lambda_nm):
        return transmission(self, lambda_nm)


def fano_model(params, lambda_nm):
    """Fano transmission for a raw parameter vector (lam_R, width, F, a, T0).

    No range checks, so it can be evaluated at any point a fitter visits.
    """
    lam_r, width, f, a, t0 = params
    eps = 2.0 * (np.asarray(lambda_nm, dtype=float) - lam_r) / width
    g = (f + eps) ** 2 / ((1.0 + f * f) * (1.0 + eps * eps))
    return t0 * (1.0 - a * g)


def transmission(profile: FanoProfile, lambda_nm):
    out = fano_model(profile.params(), lambda_nm)
    return float(out) if np.ndim(out) == 0 else out


def resonance_minimum_wavelength(profile: FanoProfile) -> float:
    """Wavelength of the transmission minimum, lam_R + width / (2 F)."""
    return minimum_from_params(profile.lambda_r_nm, profile.width_nm, profile.fano_f, profile.depth_a)


def minimum_from_params(lambda_r_nm, width_nm, fano_f, depth_a=1.0) -> float:
    if fano_f == 0 or depth_a == 0:
        raise DegenerateProfileError("profile has no unique transmission minimum (F = 0 or a = 0)")
    return lambda_r_nm + width_nm / (2.0 * fano_f)


@dataclass(frozen=True)
class Analyte:
    refractive_index: float
    label: str = ""

    def __post_init__(self):
        if self.refractive_index < 1.0:
            raise InvalidInputError("refractive index must be >= 1")

    @classmethod
    def glycerin(cls, percent: float, anchors=None) -> "Analyte":
        return cls(glycerin_index(percent, anchors), label=f"glycerin{percent:g}")


@dataclass(frozen=True)
class SensorModel:
    reference_profile: FanoProfile = field(default_factory=FanoProfile)
    reference_index: float = 1.4
    sensitivity_nm_per_riu: float = 570.0

    def __post_init__(self):
        if self.sensitivity_nm_per_riu < 0:
            raise InvalidInputError("sensitivity must be non-negative")
        if self.reference_index < 1.0:
            raise InvalidInputError("reference index must be >= 1")


def shifted_profile(sensor: SensorModel, analyte: Analyte) -> FanoProfile:
    """Profile of the array immersed in `analyte`; only lam_R moves."""
    if analyte.refractive_index < 1.0:
        raise InvalidInputError("refractive index must be >= 1")
    shift = sensor.sensitivity_nm_per_riu * (analyte.refractive_index - sensor.reference_index)
    ref = sensor.reference_profile
    return replace(ref, lambda_r_nm=ref.lambda_r_nm + shift)


# Glycerin-water solutions at 20 C, mass percent -> refractive index.
GLYCERIN_ANCHORS = ((40.0, 1.384), (50.0, 1.398))


def glycerin_index(mass_fraction_percent: float, anchors=None) -> float:
    """Refractive index of a glycerin-water solution by linear interpolation.

    Raises `OutOfTableError` outside the anchor table; no extrapolation.
    """
    table = sorted(anchors or GLYCERIN_ANCHORS)
    xs = np.array([p for p, _ in table], dtype=float)
    ys = np.array([n for _, n in table], dtype=float)
    x = float(mass_fraction_percent)
    if not 0.0 <= x <= 100.0:
        raise OutOfTableError("mass fraction must lie in [0, 100] percent")
    if x < xs[0] or x > xs[-1]:
        raise OutOfTableError(
            f"{x:g}% glycerin is outside the index table [{xs[0]:g}, {xs[-1]:g}]%"
        )
    return float(np.interp(x, xs, ys))
