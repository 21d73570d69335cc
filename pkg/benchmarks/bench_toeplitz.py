"""Throughput of the Toeplitz extraction kernels.

Compares the compiled table kernel, its numpy twin and the FFT path on the
same random seed and input, checks that they agree, and prints raw-input
throughput in Mbit/s. Single core; run with ``python3 benchmarks/bench_toeplitz.py``.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from steerqrng import _toeplitz_py, extract


def _kernels():
    out = {"numpy-table": _toeplitz_py.table_multiply}
    try:
        from steerqrng import _ctoeplitz
        out["cython-table"] = _ctoeplitz.table_multiply
    except ImportError:
        pass
    return out


def bench(n: int, m: int, raw_bits: int, repeats: int = 3, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    plan = extract.ExtractionPlan(n, m, h_min=1.0, bits_per_sample=1)
    seed_bits = rng.integers(0, 2, plan.seed_length, dtype=np.uint8)
    blocks = max(1, raw_bits // n)
    xs = rng.integers(0, 2, (blocks, n), dtype=np.uint8)
    packed = np.ascontiguousarray(np.packbits(xs, axis=1))
    copies = _toeplitz_py.shifted_copies(seed_bits, n, m)

    results, reference = {}, None
    for name, kernel in _kernels().items():
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            raw = np.asarray(kernel(copies, packed, n, m))
            best = min(best, time.perf_counter() - t0)
        bits = np.unpackbits(raw, axis=1, count=m)
        if reference is None:
            reference = bits
        results[name] = {"seconds": best, "mbit_per_s": blocks * n / best / 1e6,
                         "agrees": bool(np.array_equal(bits, reference))}

    fft = extract._FftKernel(seed_bits, n, m)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        bits = fft(xs)
        best = min(best, time.perf_counter() - t0)
    results["fft"] = {"seconds": best, "mbit_per_s": blocks * n / best / 1e6,
                      "agrees": bool(np.array_equal(bits, reference))}
    return {"n": n, "m": m, "raw_bits": blocks * n, "backend_at_import": extract.BACKEND,
            "kernels": results}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[72_600, 103_400])
    ap.add_argument("--m", type=int, default=1024)
    ap.add_argument("--raw-bits", type=int, default=1 << 26)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    rows = [bench(n, args.m, args.raw_bits, args.repeats) for n in args.n]
    print(f"{'n':>8} {'kernel':>13} {'Mbit/s':>9} {'agrees':>7}")
    for r in rows:
        for name, k in r["kernels"].items():
            print(f"{r['n']:>8} {name:>13} {k['mbit_per_s']:>9.1f} {str(k['agrees']):>7}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
