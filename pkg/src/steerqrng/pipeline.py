"""End-to-end protocol run, one branch per channel length.

Step I simulates homodyne sessions, reconstructs the CM and evaluates
steering. Step II certifies Bob's min-entropy on the reconstructed CM,
scanning the binning period. Step III runs only when step II certified
entropy: fresh Bob samples are digitized with the certified scheme, hashed
and tested.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acquisition, coarse, extract, stattests
from .bits import BitStream
from .certify import CERTIFIED_GAP, optimize_period
from .config import PipelineConfig
from .errors import NumericalError, SecurityGateError, SteerQrngError, ValidationError
from .gaussian import (CovMat, apply_fiber_channel, epr_source_cm, gaussian_steering, measured_cm,
                       QUADRATURE_INDEX, steering_log_ratio, validate_cm)
from .sdp import SolverOptions

log = logging.getLogger(__name__)

# entropy below this is beneath the solver's resolution on P_g and is not extracted
H_MIN_FLOOR = CERTIFIED_GAP
# reconstructed steering must exceed this many jackknife standard errors to count
STEERING_SIGMAS = 3.0
CURVE_COLUMNS = ("length_km", "eta", "G", "G_model", "h_min", "p_guess_dual", "T_best",
                 "certified", "extracted_bits", "battery_passed", "status")


def source_cm(cfg: PipelineConfig, length_km: float) -> CovMat:
    """The state actually shared at ``length_km``: model plus channel, or a fixture."""
    if cfg.source.mode == "fixtures":
        return measured_cm(float(length_km))
    s = cfg.source
    src = epr_source_cm(s.sq1_db, s.asq1_db, s.sq2_db, s.asq2_db, s.eta_det)
    return apply_fiber_channel(src, cfg.channel.params(length_km))


def _seeds(cfg: PipelineConfig, index: int) -> dict:
    child = np.random.SeedSequence([cfg.acquisition.seed, index])
    acq, samples, seed_bits = (int(c.generate_state(1)[0]) for c in child.spawn(3))
    return {"acquisition": acq, "samples": samples, "extractor_seed": seed_bits}


def _fmt_length(length_km: float) -> str:
    return f"{float(length_km):g}km"


# -- step I ------------------------------------------------------------------

def step_steering(cfg: PipelineConfig, cm_true: CovMat, seed: int) -> dict:
    out = {"G_model": gaussian_steering(cm_true), "cm_model": cm_true.to_list()}
    if cfg.source.mode == "fixtures":
        out.update(G=out["G_model"], cm=cm_true.to_list(), reconstruction=None)
        return out
    sessions = acquisition.default_sessions(cm_true, cfg.acquisition.n_samples, seed,
                                            cfg.acquisition.sample_rate)
    rec = acquisition.reconstruct_cm(sessions, cfg.acquisition.n_blocks)
    ratio, stderr = rec.jackknife(steering_log_ratio)
    significant = ratio > STEERING_SIGMAS * stderr
    # an estimate within sampling noise of zero is not evidence of steering
    out.update(G=max(0.0, ratio) if significant else 0.0, G_estimate=max(0.0, ratio),
               G_stderr=stderr, steering_significant=bool(significant),
               cm=rec.cm.to_list(), reconstruction=rec.to_dict())
    return out


# -- step II -----------------------------------------------------------------

def step_certify(cfg: PipelineConfig, cm: CovMat) -> dict:
    diag = validate_cm(cm)
    if not diag.passed:
        raise ValidationError(f"reconstructed CM is unphysical (min eigenvalue {diag.min_eigenvalue:.3e});"
                              " it cannot be certified")
    opts = SolverOptions(tol=cfg.solver.tol, feas_tol=cfg.solver.feas_tol, max_iter=cfg.solver.max_iter)
    b = cfg.binning
    t_best, best, scan = optimize_period(cm, b.o_b, cfg.solver.d_f, b.t_grid, cfg.certify.variant,
                                         cfg.certify.y_star, b.o_a, b.alice_range, opts)
    return {"T_best": t_best, "result": best.to_dict(),
            "scan": [{"T": t, "h_min": r.h_min, "p_guess_dual": r.p_guess_dual,
                      "certified": r.certified, "status": r.solver_status} for t, r in scan]}


# -- step III ----------------------------------------------------------------

def make_plan(cfg: PipelineConfig, h_min: float, bits_per_sample: int) -> extract.ExtractionPlan:
    e = cfg.extraction
    return extract.plan_extraction(h_min, bits_per_sample, e.m, e.rounding, e.epsilon or None,
                                   e.n or None)


def extractor_seed(cfg: PipelineConfig, nbits: int, seed: int) -> tuple[BitStream, str]:
    if cfg.extraction.seed_file:
        return extract.load_seed(cfg.extraction.seed_file, nbits), "file"
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, nbits, dtype=np.uint8)
    return BitStream.from_bits(bits, "seed"), "pseudo-random (simulation only)"


def generate_extracted(cm_true: CovMat, scheme: coarse.BinningScheme, y: str,
                       plan: extract.ExtractionPlan, seed_bits: BitStream, output_bits: int,
                       sample_seed: int, method: str = "table", chunk: int = 1 << 22,
                       allow_padding: bool = False, max_raw_bits: int | None = None
                       ) -> tuple[BitStream, dict]:
    """Stream fresh Bob samples through digitization and hashing.

    Exactly enough samples are drawn for ``ceil(output_bits / m)`` blocks,
    or for as many whole blocks as ``max_raw_bits`` allows. Returns the
    extracted stream and digitization statistics.
    """
    width = extract.bits_per_symbol(scheme.o_b, allow_padding)
    wanted = -(-output_bits // plan.m)
    blocks = wanted if max_raw_bits is None else min(wanted, max_raw_bits // plan.n)
    if blocks < 1:
        raise ValidationError(f"one block needs {plan.n} raw bits, above the budget of {max_raw_bits}")
    n_samples = -(-blocks * plan.n // width)
    var = float(cm_true.entries[2 + QUADRATURE_INDEX[y], 2 + QUADRATURE_INDEX[y]])
    rng = np.random.default_rng(sample_seed)
    ex = extract.ToeplitzExtractor(seed_bits, plan, method)
    counts = np.zeros(scheme.o_b, dtype=np.int64)
    chunk -= chunk % 8
    period = scheme.period(y)
    for z in acquisition.sample_quadrature(var, n_samples, rng, chunk):
        sym = coarse.periodic_bin(z, period, scheme.o_b)
        counts += np.bincount(sym, minlength=scheme.o_b)
        data, nbits = extract.pack_symbols(sym, width)
        ex.feed(data, nbits)
    out = ex.finish()
    expected = np.array([coarse.bob_bin_probability(var, period, scheme.o_b, b)
                         for b in range(scheme.o_b)])
    sd = np.sqrt(n_samples * expected * (1 - expected))
    z_scores = (counts - n_samples * expected) / np.where(sd > 0, sd, 1.0)
    stats = {"samples": n_samples, "raw_bits": n_samples * width, "bits_per_sample": width,
             "symbol_counts": counts.tolist(), "expected_probabilities": expected.tolist(),
             "max_abs_z": float(np.max(np.abs(z_scores))), "blocks": ex.blocks_done,
             "blocks_requested": wanted, "truncated_by_budget": blocks < wanted,
             "discarded_bits": ex.discarded_bits}
    return out, stats


def step_extract(cfg: PipelineConfig, cm_true: CovMat, scheme: coarse.BinningScheme, h_min: float,
                 seeds: dict, out_dir: Path | None, tag: str) -> dict:
    if not h_min > H_MIN_FLOOR:
        raise SecurityGateError(f"no certified entropy (h_min = {h_min:.3e} bits per sample); "
                                "refusing to extract")
    width = extract.bits_per_symbol(scheme.o_b, cfg.binning.allow_padding)
    plan = make_plan(cfg, h_min, width)
    seed_bits, provenance = extractor_seed(cfg, plan.seed_length, seeds["extractor_seed"])
    t0 = time.perf_counter()
    bits, stats = generate_extracted(cm_true, scheme, cfg.certify.y_star, plan, seed_bits,
                                     cfg.extraction.output_bits, seeds["samples"],
                                     cfg.extraction.method, cfg.extraction.chunk_samples,
                                     cfg.binning.allow_padding, cfg.extraction.max_raw_bits)
    elapsed = time.perf_counter() - t0
    out = {"plan": plan.to_dict(), "seed_provenance": provenance, "extracted_bits": bits.length,
           "digitization": stats, "seconds": elapsed,
           "rate_bits_per_s": h_min * cfg.acquisition.sample_rate,
           "backend": extract.BACKEND}
    if out_dir is not None and cfg.extraction.save_bits:
        path = out_dir / f"extracted_{tag}.bin"
        BitStream(bits.data, bits.length, "extracted",
                  {"plan": plan.to_dict(), "length_tag": tag}).save(path)
        out["bits_file"] = path.name
    out["tests"] = step_tests(cfg, bits, out_dir, tag)
    return out


def step_tests(cfg: PipelineConfig, bits: BitStream, out_dir: Path | None, tag: str) -> dict:
    t = cfg.tests
    if not t.run:
        return {"status": "skipped"}
    res = {}
    n_ac = min(bits.length, t.autocorrelation_bits)
    if n_ac > t.max_lag:
        rho = stattests.autocorrelation(bits.head(n_ac), t.max_lag)
        res["autocorrelation"] = {"bits": n_ac, "max_abs": float(np.max(np.abs(rho))),
                                  "mean_abs": float(np.mean(np.abs(rho))),
                                  "bound_4_over_sqrt_n": 4.0 / math.sqrt(n_ac)}
        if out_dir is not None:
            stattests.save_autocorrelation(rho, out_dir / f"autocorrelation_{tag}.csv")
    if bits.length < 2 * t.seq_len:
        res["battery"] = {"status": "not-applicable",
                          "reason": f"{bits.length} bits < two sequences of {t.seq_len}"}
        return res
    report = stattests.run_battery(bits, t.seq_len, t.alpha)
    summary = {name: {"status": r.status, "passed": r.passed,
                      "subtests": [{"name": s.name, "p_value_T": s.p_value_t,
                                    "proportion": s.proportion, "passed": s.passed}
                                   for s in r.subtests]}
               for name, r in report.tests.items()}
    res["battery"] = {"passed": report.passed, "n_sequences": report.n_sequences,
                      "seq_len": report.seq_len, "band": list(report.band), "tests": summary}
    if out_dir is not None:
        report.save_json(out_dir / f"battery_{tag}.json")
        report.save_csv(out_dir / f"battery_{tag}.csv")
        report.save_histograms(out_dir / f"pvalue_histograms_{tag}.csv")
    return res


# -- orchestration -------------------------------------------------------------

@dataclass
class PipelineReport:
    config: dict
    lengths: list = field(default_factory=list)
    backend: str = extract.BACKEND

    def to_dict(self) -> dict:
        return {"config": self.config, "backend": self.backend, "lengths": self.lengths}

    def curves(self) -> list[dict]:
        rows = []
        for entry in self.lengths:
            cert = (entry.get("certification") or {}).get("result") or {}
            ext = entry.get("extraction") or {}
            battery = (ext.get("tests") or {}).get("battery") or {}
            rows.append({
                "length_km": entry["length_km"], "eta": entry["eta"],
                "G": entry.get("steering", {}).get("G", ""),
                "G_model": entry.get("steering", {}).get("G_model", ""),
                "h_min": cert.get("h_min", entry.get("h_min", "")),
                "p_guess_dual": cert.get("p_guess_dual", ""),
                "T_best": (entry.get("certification") or {}).get("T_best", ""),
                "certified": cert.get("certified", ""),
                "extracted_bits": ext.get("extracted_bits", 0),
                "battery_passed": battery.get("passed", ""),
                "status": entry["status"],
            })
        return rows

    @property
    def exit_code(self) -> int:
        """3 on any numerical failure, 2 on validation failures, 4 if the gate fired, else 0."""
        kinds = {e["error"]["kind"] for e in self.lengths if e.get("error")}
        if "numerical" in kinds:
            return 3
        if "validation" in kinds:
            return 2
        if any(e["status"] == "gated" for e in self.lengths):
            return 4
        return 0

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(self.to_dict(), indent=2, default=_json_default))
        with open(out_dir / "curves.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, CURVE_COLUMNS)
            w.writeheader()
            w.writerows(self.curves())


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _error_entry(stage: str, exc: Exception) -> dict:
    kind = "numerical" if isinstance(exc, (NumericalError, np.linalg.LinAlgError)) else "validation"
    return {"stage": stage, "kind": kind, "type": type(exc).__name__, "message": str(exc)}


def run_length(cfg: PipelineConfig, index: int, length_km: float, out_dir: Path | None) -> dict:
    seeds = _seeds(cfg, index)
    params = cfg.channel.params(length_km)
    entry = {"length_km": float(length_km), "eta": params.transmission, "seeds": seeds,
             "status": "ok"}
    tag = _fmt_length(length_km)
    stage = "steering"
    try:
        cm_true = source_cm(cfg, length_km)
        entry["steering"] = step_steering(cfg, cm_true, seeds["acquisition"])
        stage = "certification"
        if entry["steering"]["G"] == 0.0:
            entry["certification"] = None
            entry["h_min"] = 0.0
            entry["certification_skipped"] = "no significant Gaussian steering (G = 0)"
            h_min, scheme = 0.0, None
        else:
            cert = step_certify(cfg, CovMat(np.array(entry["steering"]["cm"]).reshape(4, 4)))
            entry["certification"] = cert
            h_min = cert["result"]["h_min"]
            scheme = coarse.BinningScheme.equal_periods(cert["T_best"], cfg.binning.o_b,
                                                        cfg.binning.o_a, cfg.binning.alice_range)
        stage = "extraction"
        try:
            entry["extraction"] = step_extract(cfg, cm_true, scheme, h_min, seeds, out_dir, tag)
        except SecurityGateError as exc:
            entry["extraction"] = {"status": "refused", "reason": str(exc)}
            entry["status"] = "gated"
    except (SteerQrngError, np.linalg.LinAlgError) as exc:
        log.error("length %s km: %s failed: %s", length_km, stage, exc)
        entry["error"] = _error_entry(stage, exc)
        entry["status"] = "error"
    return entry


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> PipelineReport:
    """Execute all three steps for every configured length, in config order."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    report = PipelineReport(cfg.to_dict())
    lengths = list(cfg.channel.lengths_km)
    workers = min(cfg.parallel.workers, len(lengths))
    if workers == 1:
        for i, length in enumerate(lengths):
            log.info("length %g km", length)
            report.lengths.append(run_length(cfg, i, length, out))
    else:
        # per-length seeds depend only on the index, so results match the serial run
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_length, cfg, i, length, out) for i, length in enumerate(lengths)]
            report.lengths.extend(f.result() for f in futures)
    if out is not None:
        report.save(out)
    return report
