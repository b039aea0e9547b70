"""Spectrum files: a CSV table plus a JSON sidecar with provenance."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .experiment import Spectrum

HEADER = ("lambda_nm", "mean", "std", "n")


def _num(x) -> str:
    return repr(float(x))


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def write_spectrum(path, spectrum: Spectrum, extra: dict | None = None) -> tuple[Path, Path]:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(HEADER)
        for lam, m, s, n in zip(spectrum.lambda_nm, spectrum.mean, spectrum.std, spectrum.n):
            out.writerow([_num(lam), _num(m), _num(s), str(int(n))])
    side = {
        "mode": spectrum.mode,
        "config_digest": spectrum.config_digest,
        "seed": int(spectrum.seed),
        "meta": spectrum.meta,
    }
    if extra:
        side.update(extra)
    dump_json(side, sidecar_path(path))
    return path, sidecar_path(path)


def read_sidecar(csv_path) -> dict:
    p = sidecar_path(csv_path)
    return json.loads(p.read_text()) if p.exists() else {}


def read_spectrum(path) -> Spectrum:
    """Load a spectrum CSV; the sidecar is optional."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != HEADER:
            raise ValueError(f"{path}: expected header {','.join(HEADER)}, got {','.join(header)}")
        rows = [r for r in reader if r]
    data = np.array([[float(v) for v in r] for r in rows]) if rows else np.empty((0, 4))
    side = read_sidecar(path)
    return Spectrum(data[:, 0], data[:, 1], data[:, 2], data[:, 3].astype(int),
                    mode=side.get("mode", "quantum"), config_digest=side.get("config_digest", ""),
                    seed=int(side.get("seed", 0)), meta=side.get("meta", {}))
