"""Command-line interface: ``reslab {fit,power-sweep,temp-sweep,synth,stats}``.

Machine-readable results go to stdout or ``--out``/``--out-dir``; logs go to
stderr. Exit codes: 0 success, 2 some spectra rejected or excluded, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from reslab import __version__, physics, synth, sweeps
from reslab.resonance import CIRC_MIN, NRMSE_MAX, FitError, fit_resonance
from reslab.spectra import SpectrumFormatError, load_campaign, load_spectrum

log = logging.getLogger("reslab")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2

MATERIAL_PRESETS = {
    "alpha-ta": physics.alpha_ta_material,
    "nb": physics.nb_material,
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors must map to exit 1, not argparse's 2 (reserved for rejections)
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


# -------------------------------------------------------------- serialization

def clean(obj):
    """Round floats to 12 significant digits and map non-finite values to None."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.12g}") if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [clean(v) for v in obj]
    if hasattr(obj, "value"):
        return obj.value
    return str(obj)


def dumps(doc):
    return json.dumps(clean(doc), indent=2) + "\n"


def _emit(doc, out=None):
    text = dumps(doc)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _resolved(args):
    skip = {"func", "config", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------- commands

def cmd_fit(args):
    delay = (args.delay_ns or 0.0) * 1e-9

    def one(path):
        spec = load_spectrum(path, args.format, delay_s=delay, power_dbm=args.power_dbm,
                             temperature_k=args.temperature_k, label=Path(path).stem)
        try:
            fit = fit_resonance(spec, nrmse_max=args.nrmse_max, circ_min=args.circ_min)
        except FitError as exc:
            if exc.fit is None:
                raise CliError(f"{path}: {exc}") from None
            fit = exc.fit
        rec = fit.to_record()
        rec["source"] = str(path)
        return rec

    paths = list(args.inputs)
    if not paths:
        raise CliError("no input files")
    with ThreadPoolExecutor(max_workers=sweeps._workers(None)) as pool:
        futures = [pool.submit(one, p) for p in paths]
        records = []
        for p, fut in zip(paths, futures):
            try:
                records.append(fut.result())
            except (OSError, SpectrumFormatError, FitError) as exc:
                raise CliError(f"{p}: {exc}") from None
    records.sort(key=lambda r: (r["label"], r["f_c_hz"]))
    for r in records:
        if not r["accepted"]:
            log.warning("%s rejected (nrmse %.3g, circularity %.3g)",
                        r["source"], r["nrmse"], r["circularity"])
    _emit({"config": _resolved(args), "fits": records}, args.out)
    return EXIT_OK if all(r["accepted"] for r in records) else EXIT_REJECTED


def _write_result(out_dir, stem, doc, result):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.json").write_text(dumps(doc), encoding="utf-8")
    result.write_csv(out / f"{stem}.csv")


def cmd_power_sweep(args):
    campaign = load_campaign(args.manifest, args.attenuation_db)
    result = sweeps.fit_power_sweep(campaign, nrmse_max=args.nrmse_max, circ_min=args.circ_min)
    doc = {"config": _resolved(args), "result": result.to_dict()}
    for e in result.excluded:
        log.warning("excluded %s: %s", e["label"], e["reason"])
    if args.out_dir:
        _write_result(args.out_dir, "power_sweep", doc, result)
    _emit(doc)
    return EXIT_REJECTED if result.excluded else EXIT_OK


def _load_fixed(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    params = doc.get("result", doc).get("params", {})
    fixed = {}
    for key in ("f_delta0", "delta_other"):
        value = params.get(key)
        if value is None:
            raise CliError(f"{path}: fixed parameter {key!r} is missing; run power-sweep first")
        fixed[key] = float(value)
    return fixed


def _load_material(spec):
    if spec in MATERIAL_PRESETS:
        return MATERIAL_PRESETS[spec]()
    doc = json.loads(Path(spec).read_text(encoding="utf-8"))
    if "preset" in doc:
        base = MATERIAL_PRESETS[doc.pop("preset")]()
        return base.replace(**doc)
    if "rho_room" in doc:
        doc["rho_n"] = physics.rho_from_rrr(doc.pop("rho_room"), doc.pop("rrr"))
    return physics.MaterialParams(**doc)


def cmd_temp_sweep(args):
    if not args.fixed_from:
        raise CliError("--fixed-from is required: f_delta0 and delta_other come from a power sweep")
    if not args.material:
        raise CliError("--material is required")
    fixed = _load_fixed(args.fixed_from)
    fixed["material"] = _load_material(args.material)
    campaign = load_campaign(args.manifest, args.attenuation_db)
    result = sweeps.fit_temperature_sweep(campaign, fixed, fit_alpha_k=not args.hold_alpha_k,
                                          nrmse_max=args.nrmse_max, circ_min=args.circ_min)
    doc = {"config": _resolved(args), "result": result.to_dict()}
    for e in result.excluded:
        log.warning("excluded %s: %s", e["label"], e["reason"])
    if args.out_dir:
        _write_result(args.out_dir, "temp_sweep", doc, result)
    _emit(doc)
    return EXIT_REJECTED if result.excluded else EXIT_OK


def _synth_setup(doc):
    doc = dict(doc)
    axis = doc.pop("axis", "power")
    grid = doc.pop("grid", None)
    n_ph_grid = doc.pop("n_ph_grid", None)
    repeats = int(doc.pop("repeats", 1))
    schema = doc.pop("schema", "reim")
    cfg = synth.SynthConfig.from_dict(doc)
    if n_ph_grid is not None:
        if axis != "power":
            raise CliError("n_ph_grid applies to power campaigns only")
        grid = [synth.power_for_photon_number(cfg, n) for n in n_ph_grid]
    if not grid:
        raise CliError("synth config needs a non-empty 'grid' or 'n_ph_grid'")
    return cfg, axis, grid, repeats, schema


def cmd_synth(args):
    try:
        doc = json.loads(Path(args.synth_config).read_text(encoding="utf-8"))
        if args.seed is not None:
            doc["seed"] = args.seed
        cfg, axis, grid, repeats, schema = _synth_setup(doc)
    except (TypeError, ValueError, KeyError) as exc:
        raise CliError(f"invalid synth config: {exc}") from None
    campaign = synth.synth_campaign(cfg, axis, grid, repeats)
    manifest = synth.write_campaign(campaign, args.out_dir, schema)
    truth = synth.truth_document(cfg, campaign)
    truth.update(repeats=repeats, schema=schema, manifest=manifest.name)
    text = dumps(truth)
    (Path(args.out_dir) / "truth.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _read_records(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        doc = doc.get("fits", [doc])
    return doc


def cmd_stats(args):
    groups = {}
    skipped = 0
    for path in args.records:
        for rec in _read_records(path):
            value = rec.get(args.field)
            if not rec.get("accepted", True) or value is None:
                skipped += 1
                continue
            key = rec.get(args.group_by) or ""
            groups.setdefault(str(key), []).append(float(value))
    if not groups:
        raise CliError("no usable records")
    summaries = {}
    for key in sorted(groups):
        s = sweeps.summarize_distribution(groups[key])
        summaries[key] = dict(s.to_dict(), n=len(groups[key]))
    doc = {"config": _resolved(args), "field": args.field, "skipped": skipped,
           "summaries": summaries}
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(dumps(doc), encoding="utf-8")
        with open(out / "stats.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "n", "median", "q1", "q3", "iqr", "whisker_lo", "whisker_hi",
                        "n_outliers"])
            for key, s in summaries.items():
                w.writerow([key, s["n"]] + [f"{s[c]:.12g}" for c in
                           ("median", "q1", "q3", "iqr", "whisker_lo", "whisker_hi")]
                           + [len(s["outliers"])])
    _emit(doc)
    return EXIT_REJECTED if skipped else EXIT_OK


# ------------------------------------------------------------------ parser

def _quality_flags(p):
    p.add_argument("--nrmse-max", type=float, default=NRMSE_MAX,
                   help="largest accepted residual norm relative to |S21| (default %(default)s)")
    p.add_argument("--circ-min", type=float, default=CIRC_MIN,
                   help="smallest accepted ellipse axis ratio (default %(default)s)")


def build_parser():
    parser = _Parser(prog="reslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"reslab {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults; flags override it")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit single spectra")
    p.add_argument("inputs", nargs="*", help="Touchstone or CSV spectra")
    p.add_argument("--format", choices=("touchstone", "reim", "magdbphasedeg"),
                   help="input format (default: from suffix / CSV header)")
    p.add_argument("--delay-ns", type=float, default=0.0, help="cable delay to remove")
    p.add_argument("--power-dbm", type=float, help="probe power recorded with the fit")
    p.add_argument("--temperature-k", type=float, help="temperature recorded with the fit")
    p.add_argument("--out", help="write JSON here instead of stdout")
    _quality_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("power-sweep", parents=[common], help="fit the TLS power law")
    p.add_argument("manifest", nargs="?", help="campaign manifest JSON")
    p.add_argument("--attenuation-db", type=float, help="line attenuation (overrides manifest)")
    p.add_argument("--out-dir", help="write power_sweep.json and power_sweep.csv here")
    _quality_flags(p)
    p.set_defaults(func=cmd_power_sweep)

    p = sub.add_parser("temp-sweep", parents=[common], help="fit the temperature law")
    p.add_argument("manifest", nargs="?", help="campaign manifest JSON")
    p.add_argument("--fixed-from", help="power-sweep result JSON supplying f_delta0, delta_other")
    p.add_argument("--material", help="material JSON file or preset (alpha-ta, nb)")
    p.add_argument("--hold-alpha-k", action="store_true",
                   help="hold alpha_k at 0 and report it as N/A")
    p.add_argument("--attenuation-db", type=float, help="line attenuation (overrides manifest)")
    p.add_argument("--out-dir", help="write temp_sweep.json and temp_sweep.csv here")
    _quality_flags(p)
    p.set_defaults(func=cmd_temp_sweep)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic campaign")
    p.add_argument("synth_config", nargs="?", help="synthesis JSON (SynthConfig + axis/grid)")
    p.add_argument("--out-dir", help="directory for spectra, manifest.json and truth.json")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", parents=[common], help="box-whisker summary of fit records")
    p.add_argument("records", nargs="*", help="JSON outputs of 'reslab fit'")
    p.add_argument("--field", default="q_int", help="record field to summarize")
    p.add_argument("--group-by", default="label", help="record field naming the group")
    p.add_argument("--out-dir", help="write stats.json and stats.csv here")
    p.set_defaults(func=cmd_stats)
    return parser


REQUIRED = {"power-sweep": ("manifest",), "temp-sweep": ("manifest",),
            "synth": ("synth_config", "out_dir")}


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read --config {args.config}: {exc}") from None
        if not isinstance(defaults, dict):
            raise CliError("--config must hold a JSON object")
        defaults = {k.replace("-", "_"): v for k, v in defaults.items()}
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(defaults) - known)
        if unknown:
            raise CliError(f"unknown --config keys: {unknown}")
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    for name in REQUIRED.get(args.command, ()):
        if getattr(args, name) in (None, []):
            raise CliError(f"{args.command}: missing required {name.replace('_', '-')}")
    return args


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="reslab: %(levelname)s: %(message)s")
    try:
        args = parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
    except (OSError, ValueError, TypeError, KeyError, json.JSONDecodeError,
            sweeps.SweepError, FitError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
