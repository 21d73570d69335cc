"""Command-line entry point: ``steerqrng <subcommand> ...``.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 security
gate triggered (no certified entropy).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import acquisition, coarse, extract, stattests
from .bits import BitStream
from .certify import VARIANTS, certify_cm, optimize_period
from .config import dump_toml, load_config
from .errors import NumericalError, SecurityGateError, ValidationError
from .gaussian import (MEASURED_CM_VALUES, CovMat, gaussian_steering, load_cm_csv, measured_cm,
                       save_cm_csv, validate_cm)
from .pipeline import run_pipeline, source_cm

log = logging.getLogger("steerqrng")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_GATE = 0, 2, 3, 4


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _out_dir(args) -> Path:
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def read_cm(path) -> CovMat:
    """CSV (4 x 4) or JSON (16 numbers, row-major, or ``{"cm": [...]}``)."""
    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        if isinstance(data, dict):
            data = data["cm"]
        return CovMat(np.asarray(data, dtype=float).reshape(4, 4))
    return load_cm_csv(path)


def _cm_from_args(args, cfg) -> CovMat:
    if getattr(args, "cm", None):
        return read_cm(args.cm)
    length = args.length_km[0] if args.length_km else 0.0
    if getattr(args, "fixture", False):
        return measured_cm(float(length))
    return source_cm(cfg, length)


def _config(args):
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "length_km", None):
        cfg = cfg.override("channel", lengths_km=tuple(float(x) for x in args.length_km))
    if getattr(args, "fixture", False):
        cfg = cfg.override("source", mode="fixtures")
    if getattr(args, "ob", None) is not None:
        cfg = cfg.override("binning", o_b=args.ob)
    if getattr(args, "df", None) is not None:
        cfg = cfg.override("solver", d_f=args.df)
    if getattr(args, "variant", None):
        cfg = cfg.override("certify", variant=args.variant)
    ext = {k: v for k, v in (("m", getattr(args, "m", None)), ("n", getattr(args, "n", None)),
                             ("seed_file", getattr(args, "seed_file", None)))
           if v is not None}
    if ext:
        cfg = cfg.override("extraction", **ext)
    if getattr(args, "workers", None) is not None:
        cfg = cfg.override("parallel", workers=args.workers)
    return cfg


# -- subcommands ---------------------------------------------------------------

def cmd_fixtures(args) -> int:
    out = _out_dir(args)
    listing = {}
    for length in sorted(MEASURED_CM_VALUES):
        cm = measured_cm(length)
        path = out / f"cm_{length:g}km.csv"
        save_cm_csv(cm, path)
        listing[f"{length:g}"] = {"file": path.name, "cm": cm.to_list(),
                                  "G": gaussian_steering(cm)}
    (out / "fixtures.json").write_text(json.dumps(listing, indent=2))
    _emit(listing)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    cm = _cm_from_args(args, cfg)
    out = _out_dir(args)
    sessions = acquisition.default_sessions(cm, args.samples, args.seed, cfg.acquisition.sample_rate)
    files = []
    for s in sessions:
        path = out / f"session_{s.setting[0]}{s.setting[1]}.f8"
        acquisition.save_session(s, path)
        files.append(str(path))
    _emit({"cm": cm.to_list(), "sessions": files})
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    sessions = [acquisition.load_session(p) for p in args.sessions]
    rec = acquisition.reconstruct_cm(sessions, args.blocks)
    if args.out:
        acquisition.save_reconstruction(rec, args.out)
    _emit(rec.to_dict())
    return EXIT_OK


def cmd_steer(args) -> int:
    cfg = _config(args)
    cm = _cm_from_args(args, cfg)
    diag = validate_cm(cm)
    _emit({"G": gaussian_steering(cm), "physical": diag.passed,
           "min_eigenvalue": diag.min_eigenvalue, "cm": cm.to_list()})
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _config(args)
    cm = _cm_from_args(args, cfg)
    b = cfg.binning
    if args.period is not None:
        scheme = coarse.BinningScheme.equal_periods(args.period, b.o_b, b.o_a, b.alice_range)
        res = certify_cm(cm, scheme, cfg.solver.d_f, cfg.certify.variant, cfg.certify.y_star)
        out = {"T_best": args.period, "result": res.to_dict()}
    else:
        t_best, res, scan = optimize_period(cm, b.o_b, cfg.solver.d_f, b.t_grid, cfg.certify.variant,
                                            cfg.certify.y_star, b.o_a, b.alice_range)
        out = {"T_best": t_best, "result": res.to_dict(),
               "scan": [{"T": t, "h_min": r.h_min, "certified": r.certified} for t, r in scan]}
    if args.out_dir:
        (_out_dir(args) / "certification.json").write_text(json.dumps(out, indent=2))
    _emit(out)
    return EXIT_OK


def cmd_extract(args) -> int:
    if args.raw:
        raw = BitStream.load(args.raw, origin="raw")
        width = args.bits_per_sample
    else:
        session = acquisition.load_session(args.samples)
        scheme = coarse.BinningScheme.equal_periods(args.period, args.ob)
        raw = extract.digitize(session.samples[:, 1], scheme, "q", args.allow_padding)
        width = extract.bits_per_symbol(args.ob, args.allow_padding)
    plan = extract.plan_extraction(args.hmin, width, args.m, args.rounding, args.epsilon, args.n)
    seed = extract.load_seed(args.seed_file, plan.seed_length)
    bits = extract.toeplitz_extract(raw, seed, plan, args.method)
    out = _out_dir(args)
    path = out / "extracted.bin"
    bits.save(path)
    _emit({"plan": plan.to_dict(), "raw_bits": raw.length, "extracted_bits": bits.length,
           "file": str(path), "backend": extract.BACKEND})
    return EXIT_OK


def cmd_test(args) -> int:
    bits = BitStream.load(args.bits)
    out = _out_dir(args)
    summary = {"bits": bits.length}
    if bits.length > args.max_lag:
        rho = stattests.autocorrelation(bits.head(min(bits.length, args.autocorrelation_bits)),
                                        args.max_lag)
        stattests.save_autocorrelation(rho, out / "autocorrelation.csv")
        summary["autocorrelation_max_abs"] = float(np.max(np.abs(rho)))
    report = stattests.run_battery(bits, args.seq_len, args.alpha)
    report.save_json(out / "battery.json")
    report.save_csv(out / "battery.csv")
    report.save_histograms(out / "pvalue_histograms.csv")
    summary.update(passed=report.passed, n_sequences=report.n_sequences,
                   tests={k: v.status if v.status != "ok" else v.passed for k, v in report.tests.items()})
    _emit(summary)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    (out / "config.toml").write_text(dump_toml(cfg))
    report = run_pipeline(cfg, out)
    _emit(report.curves())
    return report.exit_code


# -- parser ------------------------------------------------------------------

def _common(p, cm_source=True, pipeline=False):
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--out-dir", default="out", help="output directory")
    p.add_argument("--length-km", type=float, nargs="+", help="fiber length(s) in km")
    if cm_source:
        p.add_argument("--cm", help="CM file (.csv 4x4 or .json 16 numbers)")
        p.add_argument("--fixture", action="store_true", help="use the measured CM for --length-km")
    if pipeline:
        p.add_argument("--ob", type=int, help="Bob's outcomes o_B")
        p.add_argument("--df", type=int, help="Fock truncation d_F")
        p.add_argument("--variant", choices=VARIANTS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steerqrng", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", help="write the four measured CMs as CSV")
    p.add_argument("--out-dir", default="fixtures")
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("simulate", help="simulate (q,q) and (p,p) homodyne sessions")
    _common(p)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="reconstruct a CM from session files")
    p.add_argument("sessions", nargs="+")
    p.add_argument("--blocks", type=int, default=acquisition.JACKKNIFE_BLOCKS)
    p.add_argument("--out", help="write the reconstruction JSON here")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("steer", help="Gaussian steering of a CM")
    _common(p)
    p.set_defaults(func=cmd_steer)

    p = sub.add_parser("certify", help="certify min-entropy for a CM")
    _common(p, pipeline=True)
    p.add_argument("--period", type=float, help="single period T (default: scan the T grid)")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("extract", help="Toeplitz-hash raw bits or session samples")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--raw", help="raw bitstream file")
    src.add_argument("--samples", help="session file; Bob's column is digitized")
    p.add_argument("--hmin", type=float, required=True, help="certified min-entropy per sample")
    p.add_argument("--seed-file", required=True)
    p.add_argument("--m", type=int, default=1024)
    p.add_argument("--n", type=int, help="block length (default: sized from --hmin)")
    p.add_argument("--rounding", type=int, default=100)
    p.add_argument("--epsilon", type=float, help="add the 2 log2(1/epsilon) leftover-hash penalty")
    p.add_argument("--bits-per-sample", type=int, default=5, help="for --raw input")
    p.add_argument("--ob", type=int, default=32, help="for --samples input")
    p.add_argument("--period", type=float, default=4.0, help="for --samples input")
    p.add_argument("--allow-padding", action="store_true")
    p.add_argument("--method", choices=extract.METHODS, default="table")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("test", help="autocorrelation and statistical battery")
    p.add_argument("--bits", required=True)
    p.add_argument("--seq-len", type=int, default=1_000_000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("--autocorrelation-bits", type=int, default=10_000_000)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("run", help="full three-step pipeline")
    _common(p, cm_source=False, pipeline=True)
    p.add_argument("--fixture", action="store_true", help="replay the measured CMs")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed-file")
    p.add_argument("--workers", type=int, help="worker processes across lengths")
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SecurityGateError as exc:
        log.error("%s", exc)
        return EXIT_GATE
    except ValidationError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
