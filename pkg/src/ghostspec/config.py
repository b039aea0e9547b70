"""Experiment configuration files.

Configurations are INI-style text files with one section per piece of
apparatus. Lists of lobes and analytes use dotted section names::

    [source.lobe.degenerate]
    center_nm = 814
    ...
    [analyte.glycerin40]
    glycerin_percent = 40

Unknown sections and keys are rejected. The digest of the canonical
serialization is stamped into every output file.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .detection import CoincidenceWindow, DetectorSpec, MonochromatorSpec
from .exceptions import ConfigError, GhostSpecError
from .experiment import CLASSICAL, QUANTUM, Apparatus, ScanConfig
from .sample import Analyte, FanoProfile, SensorModel, glycerin_index
from .source import BiphotonSpectrum, Lobe, PumpSpec

PRESETS = ("figure4", "figure5")


@dataclass(frozen=True)
class AnalyteSpec:
    name: str
    glycerin_percent: Optional[float] = None
    refractive_index: Optional[float] = None

    def resolve(self) -> Analyte:
        if self.refractive_index is not None:
            return Analyte(self.refractive_index, label=self.name)
        return Analyte(glycerin_index(self.glycerin_percent), label=self.name)


@dataclass(frozen=True)
class ExperimentConfig:
    source: BiphotonSpectrum
    sensor: SensorModel
    analytes: tuple
    det_signal: DetectorSpec
    det_idler: DetectorSpec
    monochromator: MonochromatorSpec
    window: CoincidenceWindow
    scan: ScanConfig
    noise_levels: dict = field(default_factory=dict)
    seed: int = 0
    output: str = "run"

    @property
    def modes(self) -> tuple:
        return tuple(m for m in (QUANTUM, CLASSICAL) if self.noise_levels.get(m))

    def apparatus(self) -> Apparatus:
        return Apparatus(self.source, self.det_signal, self.det_idler, self.monochromator, self.window)

    def to_text(self) -> str:
        return dumps(self)

    @property
    def digest(self) -> str:
        """Content hash of the experiment; where the outputs go is not part of it."""
        text = dumps(replace(self, output=""))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, *, seed=None, output=None, fidelity=None, dwell=None, repeats=None,
                       step=None, noiseless=None) -> "ExperimentConfig":
        scan_kw = {k: v for k, v in dict(fidelity=fidelity, dwell_s=dwell, repeats=repeats,
                                          step_nm=step, noiseless=noiseless).items() if v is not None}
        try:
            scan = replace(self.scan, **scan_kw)
        except GhostSpecError as exc:
            raise ConfigError(str(exc)) from exc
        return replace(self, scan=scan,
                       seed=self.seed if seed is None else int(seed),
                       output=self.output if output is None else str(output))


_SCHEMA = {
    "experiment": {"seed": int, "output": str},
    "source": {"pump_nm": float, "pair_rate_hz": float},
    "source.lobe": {"center_nm": float, "fwhm_nm": float, "weight": float},
    "sensor": {"lambda_r_nm": float, "width_nm": float, "fano_f": float, "depth_a": float,
               "baseline_t0": float, "reference_index": float, "sensitivity_nm_per_riu": float},
    "analyte": {"glycerin_percent": float, "refractive_index": float},
    "detector.signal": {"efficiency": float, "noise_rate_hz": float, "jitter_sigma_s": float,
                        "noise_fluctuation": float},
    "monochromator": {"fwhm_nm": float, "shape": str},
    "window": {"delta_t_s": float},
    "scan": {"lambda_start_nm": float, "lambda_stop_nm": float, "step_nm": float, "dwell_s": float,
             "repeats": int, "fidelity": str, "signal_rate_hz": float,
             "sample_after_monochromator": bool, "noiseless": bool},
    "noise": {QUANTUM: list, CLASSICAL: list},
}
_SCHEMA["detector.idler"] = _SCHEMA["detector.signal"]
_REQUIRED = ("source", "sensor", "detector.signal", "detector.idler", "monochromator", "window", "scan",
             "noise")


def _schema_for(section: str):
    if section.startswith("source.lobe."):
        return _SCHEMA["source.lobe"]
    if section.startswith("analyte."):
        return _SCHEMA["analyte"]
    if section in _SCHEMA:
        return _SCHEMA[section]
    raise ConfigError(f"unknown config section [{section}]")


def _convert(section, key, raw, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        if kind is list:
            return [float(v) for v in raw.replace(",", " ").split()]
        if kind is int:
            return int(raw)
        return kind(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _read_sections(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    sections = {}
    for name in parser.sections():
        schema = _schema_for(name)
        values = {}
        for key, raw in parser.items(name):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            values[key] = _convert(name, key, raw, schema[key])
        sections[name] = values
    missing = [s for s in _REQUIRED if s not in sections]
    if missing:
        raise ConfigError(f"missing config sections: {', '.join(missing)}")
    return sections


def _build(kind, section, **kw):
    try:
        return kind(**kw)
    except GhostSpecError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"[{section}] incomplete: {exc}") from exc


def loads(text: str) -> ExperimentConfig:
    sec = _read_sections(text)
    src = sec["source"]
    lobes = []
    for name in sec:
        if name.startswith("source.lobe."):
            lobes.append(_build(Lobe, name, **sec[name]))
    if not lobes:
        raise ConfigError("at least one [source.lobe.*] section is required")
    pump = _build(PumpSpec, "source", wavelength_nm=src.get("pump_nm", 407.0))
    source = _build(BiphotonSpectrum, "source", lobes=tuple(lobes),
                    pair_rate_hz=src.get("pair_rate_hz", 1.0e6), pump=pump)

    s = dict(sec["sensor"])
    ref_index = s.pop("reference_index", 1.4)
    sens = s.pop("sensitivity_nm_per_riu", 570.0)
    profile = _build(FanoProfile, "sensor", **s)
    sensor = _build(SensorModel, "sensor", reference_profile=profile, reference_index=ref_index,
                    sensitivity_nm_per_riu=sens)

    analytes = []
    for name in sec:
        if name.startswith("analyte."):
            vals = sec[name]
            if len(vals) != 1:
                raise ConfigError(f"[{name}] needs exactly one of glycerin_percent, refractive_index")
            spec = AnalyteSpec(name.split(".", 1)[1], **vals)
            try:
                spec.resolve()
            except GhostSpecError as exc:
                raise ConfigError(f"[{name}] {exc}") from exc
            analytes.append(spec)
    if not analytes:
        raise ConfigError("at least one [analyte.*] section is required")

    det_s = _build(DetectorSpec, "detector.signal", **sec["detector.signal"])
    det_i = _build(DetectorSpec, "detector.idler", **sec["detector.idler"])
    mono = _build(MonochromatorSpec, "monochromator", **sec["monochromator"])
    window = _build(CoincidenceWindow, "window", **sec["window"])
    scan = _build(ScanConfig, "scan", **sec["scan"])
    noise = {m: tuple(v) for m, v in sec["noise"].items()}
    for m, levels in noise.items():
        if any(v < 0 for v in levels):
            raise ConfigError(f"[noise] {m}: noise levels must be non-negative")
    if not any(noise.values()):
        raise ConfigError("[noise] must list levels for at least one mode")
    exp = sec.get("experiment", {})
    return ExperimentConfig(source, sensor, tuple(analytes), det_s, det_i, mono, window, scan, noise,
                            int(exp.get("seed", 0)), exp.get("output", "run"))


def load(path) -> ExperimentConfig:
    """Load a config file, or a bundled preset given by name (``figure5``)."""
    p = Path(path)
    if not p.exists() and str(path) in PRESETS:
        return loads(preset_text(str(path)))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def preset_text(name: str) -> str:
    return resources.files("ghostspec").joinpath("presets").joinpath(f"{name}.cfg").read_text()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(float(x)) for x in v)
    return str(v)


def dumps(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``loads(dumps(cfg)) == cfg``."""
    sections = {"experiment": {"seed": cfg.seed, "output": cfg.output},
                "source": {"pump_nm": cfg.source.pump.wavelength_nm,
                           "pair_rate_hz": cfg.source.pair_rate_hz}}
    for k, lobe in enumerate(cfg.source.lobes):
        sections[f"source.lobe.{k}"] = {"center_nm": lobe.center_nm, "fwhm_nm": lobe.fwhm_nm,
                                        "weight": lobe.weight}
    p = cfg.sensor.reference_profile
    sections["sensor"] = {"lambda_r_nm": p.lambda_r_nm, "width_nm": p.width_nm, "fano_f": p.fano_f,
                          "depth_a": p.depth_a, "baseline_t0": p.baseline_t0,
                          "reference_index": cfg.sensor.reference_index,
                          "sensitivity_nm_per_riu": cfg.sensor.sensitivity_nm_per_riu}
    for a in cfg.analytes:
        if a.refractive_index is not None:
            sections[f"analyte.{a.name}"] = {"refractive_index": a.refractive_index}
        else:
            sections[f"analyte.{a.name}"] = {"glycerin_percent": a.glycerin_percent}
    for name, det in (("detector.signal", cfg.det_signal), ("detector.idler", cfg.det_idler)):
        sections[name] = {"efficiency": det.efficiency, "noise_rate_hz": det.noise_rate_hz,
                          "jitter_sigma_s": det.jitter_sigma_s, "noise_fluctuation": det.noise_fluctuation}
    sections["monochromator"] = {"fwhm_nm": cfg.monochromator.fwhm_nm, "shape": cfg.monochromator.shape}
    sections["window"] = {"delta_t_s": cfg.window.delta_t_s}
    sc = cfg.scan
    scan = {"lambda_start_nm": sc.lambda_start_nm, "lambda_stop_nm": sc.lambda_stop_nm,
            "step_nm": sc.step_nm, "dwell_s": sc.dwell_s, "repeats": sc.repeats, "fidelity": sc.fidelity,
            "sample_after_monochromator": sc.sample_after_monochromator, "noiseless": sc.noiseless}
    if sc.signal_rate_hz is not None:
        scan["signal_rate_hz"] = sc.signal_rate_hz
    sections["scan"] = scan
    sections["noise"] = {m: list(v) for m, v in cfg.noise_levels.items()}
    out = io.StringIO()
    for name, values in sections.items():
        out.write(f"[{name}]\n")
        for key, value in values.items():
            out.write(f"{key} = {_fmt(value)}\n")
        out.write("\n")
    return out.getvalue()
