"""Command-line front end.

    ghostspec simulate CONFIG        spectra per (mode, analyte, noise level)
    ghostspec fit SPECTRUM...        Fano fits, and the shift for two spectra
    ghostspec report RUN_DIR         summary table, fits and figures for a run
    ghostspec rates ...              expected rates and the SNR comparison

Exit codes: 0 ok, 2 configuration or input error, 3 runtime or fit error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .analysis import detectability, estimate_shift, fit_fano, snr_report
from .config import ExperimentConfig, load
from .detection import CoincidenceWindow, expected_rates
from .exceptions import ConfigError, GhostSpecError
from .experiment import QUANTUM, derive_seed, measure
from .io import dump_json, read_sidecar, read_spectrum, write_spectrum
from .sample import resonance_minimum_wavelength, shifted_profile

log = logging.getLogger("ghostspec")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
MANIFEST = "manifest.json"


class InputError(GhostSpecError):
    """Missing or unreadable input files."""


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def spectrum_name(mode: str, analyte: str, noise_hz: float) -> str:
    return f"{mode}_{analyte}_noise{noise_hz:g}.csv"


# simulate ---------------------------------------------------------------------

def simulate(cfg: ExperimentConfig, out_dir) -> list:
    """Run every (mode, analyte, noise) combination and write the spectra.

    Returns the written CSV paths. On failure any files already written are
    removed again.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    apparatus = cfg.apparatus()
    try:
        (out / "config.cfg").write_text(cfg.to_text())
        written.append(out / "config.cfg")
        entries = []
        for mode in cfg.modes:
            for a_spec in cfg.analytes:
                analyte = a_spec.resolve()
                profile = shifted_profile(cfg.sensor, analyte)
                for noise in cfg.noise_levels[mode]:
                    scan = replace(cfg.scan, mode=mode, injected_noise_hz=noise)
                    seed = derive_seed(cfg.seed, mode, a_spec.name, repr(float(noise)))
                    log.info("simulating %s %s noise=%g", mode, a_spec.name, noise)
                    spec = measure(apparatus, profile, scan, seed, digest=cfg.digest)
                    name = spectrum_name(mode, a_spec.name, noise)
                    extra = {"analyte": a_spec.name, "refractive_index": analyte.refractive_index,
                             "noise_hz": float(noise), "true_lambda_min_nm": resonance_minimum_wavelength(profile),
                             "run_seed": cfg.seed}
                    written.extend(write_spectrum(out / name, spec, extra))
                    entries.append({"file": name, "mode": mode, "analyte": a_spec.name,
                                    "refractive_index": analyte.refractive_index, "noise_hz": float(noise)})
        dump_json({"config_digest": cfg.digest, "seed": cfg.seed, "spectra": entries,
                   "version": __version__}, out / MANIFEST)
        written.append(out / MANIFEST)
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return [p for p in written if p.suffix == ".csv"]


# fit ----------------------------------------------------------------------------

def _load_spectrum(path):
    try:
        return read_spectrum(path)
    except (OSError, ValueError, StopIteration) as exc:
        raise InputError(f"cannot read spectrum {path}: {exc}") from exc


def fit_files(paths, delta_n=None) -> dict:
    fits = []
    report = {"inputs": [], "fits": []}
    for p in paths:
        spec = _load_spectrum(p)
        fit = fit_fano(spec)
        det = detectability(fit, spec)
        fits.append(fit)
        side = read_sidecar(p)
        report["inputs"].append({"path": str(p), "config_digest": side.get("config_digest", ""),
                                 "seed": side.get("seed")})
        entry = fit.to_dict()
        entry.update(detectable=det.detectable, detectability_score=det.score)
        report["fits"].append(entry)
    if len(fits) == 2:
        shift = estimate_shift(fits[0], fits[1], delta_n)
        report["shift"] = {"shift_nm": shift.shift_nm, "sigma_nm": shift.sigma_nm,
                           "delta_n": delta_n, "sensitivity_nm_per_riu": shift.sensitivity_nm_per_riu,
                           "sensitivity_sigma": shift.sensitivity_sigma}
    return report


# report -------------------------------------------------------------------------

REPORT_COLUMNS = (
    "mode", "noise_hz", "analyte_a", "analyte_b", "lambda_min_a_nm", "lambda_min_b_nm", "shift_nm",
    "shift_sigma_nm", "sensitivity_nm_per_riu", "detectable_a", "detectable_b", "score_a", "score_b",
    "snr_ratio_predicted", "snr_ratio_measured",
)


def _try_fit(spec):
    try:
        return fit_fano(spec)
    except GhostSpecError:
        return None


def build_report(run_dir) -> tuple[list, dict, dict]:
    run = Path(run_dir)
    manifest_path = run / MANIFEST
    if not manifest_path.exists():
        found = sorted(p.name for p in run.glob("*.csv")) if run.is_dir() else []
        raise InputError(f"{run}: no {MANIFEST}; found {len(found)} spectrum inputs: {found}")
    manifest = json.loads(manifest_path.read_text())
    missing = [e["file"] for e in manifest["spectra"] if not (run / e["file"]).exists()]
    if missing:
        raise InputError(f"{run}: missing inputs: {', '.join(missing)}")

    groups = {}
    for e in manifest["spectra"]:
        groups.setdefault((e["mode"], e["noise_hz"]), []).append(e)
    rows, fits_out, panels = [], {}, {}
    rank = {}
    for (mode, noise) in sorted(groups, key=lambda k: (k[0] != QUANTUM, k[1])):
        rank[mode] = rank.get(mode, -1) + 1
        entries = sorted(groups[(mode, noise)], key=lambda e: e["refractive_index"])
        curves = []
        results = []
        for e in entries:
            spec = read_spectrum(run / e["file"])
            fit = _try_fit(spec)
            det = detectability(fit, spec) if fit is not None else None
            results.append((e, spec, fit, det))
            fits_out[e["file"]] = None if fit is None else {
                **fit.to_dict(), "detectable": det.detectable, "detectability_score": det.score}
            curves.append((f"n = {e['refractive_index']:.3f}", spec, fit))
        panels[(rank[mode], mode)] = (f"{mode}, noise {noise:g}/s", curves)
        row = {"mode": mode, "noise_hz": noise}
        a = results[0]
        b = results[-1] if len(results) > 1 else None
        row["analyte_a"] = a[0]["analyte"]
        row["analyte_b"] = b[0]["analyte"] if b else ""
        row["lambda_min_a_nm"] = a[2].lambda_min_nm if a[2] is not None else None
        row["lambda_min_b_nm"] = b[2].lambda_min_nm if b and b[2] is not None else None
        row["detectable_a"] = bool(a[3] and a[3].detectable)
        row["detectable_b"] = bool(b and b[3] and b[3].detectable)
        row["score_a"] = a[3].score if a[3] else 0.0
        row["score_b"] = b[3].score if b and b[3] else 0.0
        row["shift_nm"] = row["shift_sigma_nm"] = row["sensitivity_nm_per_riu"] = None
        if b and a[2] is not None and b[2] is not None and a[2].converged and b[2].converged:
            dn = b[0]["refractive_index"] - a[0]["refractive_index"]
            sh = estimate_shift(a[2], b[2], dn if dn else None)
            row.update(shift_nm=sh.shift_nm, shift_sigma_nm=sh.sigma_nm,
                       sensitivity_nm_per_riu=sh.sensitivity_nm_per_riu)
        row["snr_ratio_predicted"] = row["snr_ratio_measured"] = None
        meta = a[1].meta
        if mode == QUANTUM and meta.get("idler_uncorrelated_hz") and meta.get("signal_noise_rate_hz"):
            snr = snr_report(meta["eta_i"], meta["idler_uncorrelated_hz"], meta["signal_noise_rate_hz"],
                             meta["eta_s"], meta["p_inband_center_hz"], CoincidenceWindow(meta["delta_t_s"]))
            row.update(snr_ratio_predicted=snr.ratio_predicted, snr_ratio_measured=snr.ratio_measured)
        rows.append(row)
    return rows, fits_out, panels


def _cell(v):
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def render_csv(rows) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(REPORT_COLUMNS)
    for r in rows:
        out.writerow([_cell(r[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()


def render_text(rows) -> str:
    lines = [f"{'mode':<10}{'noise/s':>10}{'min A (nm)':>12}{'min B (nm)':>12}{'shift (nm)':>18}"
             f"{'nm/RIU':>9}{'det A':>7}{'det B':>7}{'SNR_Q/SNR_T':>13}"]
    for r in rows:
        shift = "-" if r["shift_nm"] is None else f"{r['shift_nm']:.2f} +- {r['shift_sigma_nm']:.2f}"
        sens = "-" if r["sensitivity_nm_per_riu"] is None else f"{r['sensitivity_nm_per_riu']:.0f}"
        la = "-" if r["lambda_min_a_nm"] is None else f"{r['lambda_min_a_nm']:.2f}"
        lb = "-" if r["lambda_min_b_nm"] is None else f"{r['lambda_min_b_nm']:.2f}"
        snr = "-" if r["snr_ratio_predicted"] is None else f"{r['snr_ratio_predicted']:.1f}"
        lines.append(f"{r['mode']:<10}{r['noise_hz']:>10g}{la:>12}{lb:>12}{shift:>18}{sens:>9}"
                     f"{_cell(r['detectable_a']):>7}{_cell(r['detectable_b']):>7}{snr:>13}")
    return "\n".join(lines) + "\n"


def write_report(run_dir, out_dir=None, figures=True) -> dict:
    rows, fits, panels = build_report(run_dir)
    out = Path(out_dir or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "summary.csv", "text": out / "summary.txt", "fits": out / "fits.json"}
    paths["csv"].write_text(render_csv(rows))
    paths["text"].write_text(render_text(rows))
    dump_json(fits, paths["fits"])
    if figures:
        from .plotting import plot_grid

        paths["figure"] = plot_grid(panels, out / "spectra.png")
    return {"rows": rows, "paths": paths}


# rates --------------------------------------------------------------------------

def rates_lines(args) -> list:
    w = CoincidenceWindow(args.dt)
    br = expected_rates(args.p_inband, args.eta_s, args.eta_i, args.n_s, args.n_i, args.transmission, w)
    snr = snr_report(args.eta_i, args.n_i, args.n_s, args.eta_s, args.p_inband, w)
    lines = [f"{k} = {_num(v)}" for k, v in br.__dict__.items()]
    lines += [f"snr_quantum = {_num(snr.snr_quantum)}", f"snr_classical = {_num(snr.snr_classical)}",
              f"snr_ratio_predicted = {_num(snr.ratio_predicted)}",
              f"snr_ratio_measured = {_num(snr.ratio_measured)}"]
    return lines


# argument parsing ---------------------------------------------------------------

def _common(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=d, help="master seed")
    parser.add_argument("--out", default=d, help="output directory (or file for fit)")
    parser.add_argument("--fidelity", choices=("rate", "event"), default=d)
    parser.add_argument("--dwell", type=float, default=d, help="seconds per acquisition")
    parser.add_argument("--repeats", type=int, default=d, help="acquisitions per point")
    parser.add_argument("--step", type=float, default=d, help="scan step in nm")
    parser.add_argument("-v", "--verbose", action="store_true", default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghostspec", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=__version__)
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate spectra for a config or preset")
    p.add_argument("config", help="config file, or preset name (figure4, figure5)")
    p.add_argument("--noiseless", action="store_true", default=None, help="write expected counts, no sampling")
    _common(p, suppress=True)

    p = sub.add_parser("fit", help="fit spectrum files")
    p.add_argument("spectra", nargs="+")
    p.add_argument("--delta-n", type=float, default=None, help="refractive-index change between two spectra")
    _common(p, suppress=True)

    p = sub.add_parser("report", help="summarize a simulated run")
    p.add_argument("run_dir")
    p.add_argument("--no-figures", action="store_true")
    _common(p, suppress=True)

    p = sub.add_parser("rates", help="expected coincidence rates and SNR ratio")
    p.add_argument("--eta-i", type=float, default=0.05)
    p.add_argument("--n-i", type=float, default=1e5, help="idler noise counts/s")
    p.add_argument("--dt", type=float, default=5e-9, help="coincidence window in s")
    p.add_argument("--eta-s", type=float, default=0.1)
    p.add_argument("--n-s", type=float, default=7e4, help="signal noise counts/s")
    p.add_argument("--p-inband", type=float, default=1e4, help="in-band pair rate, pairs/s")
    p.add_argument("--transmission", type=float, default=1.0)
    _common(p, suppress=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            cfg = load(args.config).with_overrides(seed=args.seed, output=args.out, fidelity=args.fidelity,
                                                   dwell=args.dwell, repeats=args.repeats, step=args.step,
                                                   noiseless=args.noiseless)
            paths = simulate(cfg, cfg.output)
            print(f"wrote {len(paths)} spectra to {cfg.output} (config {cfg.digest}, seed {cfg.seed})")
        elif args.command == "fit":
            report = fit_files(args.spectra, args.delta_n)
            text = json.dumps(report, indent=2, sort_keys=True) + "\n"
            if args.out:
                Path(args.out).write_text(text)
            sys.stdout.write(text)
        elif args.command == "report":
            result = write_report(args.run_dir, args.out, figures=not args.no_figures)
            sys.stdout.write(render_text(result["rows"]))
        elif args.command == "rates":
            print("\n".join(rates_lines(args)))
    except (ConfigError, InputError) as exc:
        print(f"ghostspec: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GhostSpecError as exc:
        print(f"ghostspec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
