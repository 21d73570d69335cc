import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steerqrng import extract
from steerqrng.bits import BitStream, BitWriter, concat
from steerqrng.coarse import BinningScheme, bob_bin_probability
from steerqrng.errors import SecurityGateError, ValidationError

PLAN_10M = extract.plan_extraction(0.07057, 5, 1024)


def scheme(period, o_b):
    return BinningScheme.equal_periods(period, o_b)


# -- digitization --------------------------------------------------------------

def test_bits_per_symbol():
    assert extract.bits_per_symbol(32) == 5
    assert extract.bits_per_symbol(2) == 1
    with pytest.raises(ValidationError, match="power of two"):
        extract.bits_per_symbol(3)
    assert extract.bits_per_symbol(3, allow_padding=True) == 2
    with pytest.raises(ValidationError):
        extract.bits_per_symbol(1)


def test_digitize_hand_example():
    out = extract.digitize([-0.5], scheme(4.0, 4))
    assert out.length == 2
    assert out.to_bits().tolist() == [1, 1]
    assert out.meta["bits_per_sample"] == 2


def test_digitize_msb_first():
    # bin width 1 over period 8: sample 5.5 is symbol 5 = 101
    out = extract.digitize([5.5, 0.2, 7.9], scheme(8.0, 8))
    assert out.to_bits().tolist() == [1, 0, 1, 0, 0, 0, 1, 1, 1]


def test_digitize_padding():
    s = scheme(3.0, 3)
    with pytest.raises(ValidationError):
        extract.digitize([0.5], s)
    assert extract.digitize([2.5], s, allow_padding=True).to_bits().tolist() == [1, 0]


def test_digitized_symbols_follow_bin_probabilities():
    var, period, o_b, n = 1.33, 6.0, 32, 1_000_000
    rng = np.random.default_rng(17)
    raw = extract.digitize(np.sqrt(var) * rng.standard_normal(n), scheme(period, o_b))
    assert raw.length == 5 * n
    sym = raw.to_bits().reshape(n, 5) @ (1 << np.arange(4, -1, -1))
    counts = np.bincount(sym, minlength=o_b)
    p = np.array([bob_bin_probability(var, period, o_b, b) for b in range(o_b)])
    assert np.all(np.abs(counts - n * p) <= 3 * np.sqrt(n * p * (1 - p)))


@given(st.lists(st.integers(0, 31), min_size=1, max_size=64), st.sampled_from([1, 2, 4, 5, 8]))
def test_pack_symbols_matches_bits(symbols, width):
    symbols = [s % (1 << width) for s in symbols]
    packed, nbits = extract.pack_symbols(np.array(symbols), width)
    ref = extract.symbols_to_bits(np.array(symbols), width)
    assert nbits == len(symbols) * width
    assert np.array_equal(np.unpackbits(packed, count=nbits), ref)


# -- planning ----------------------------------------------------------------

@pytest.mark.parametrize("h, n", [(0.07057, 72_600), (5.0, 1100), (1.0, 5200)])
def test_plan_examples(h, n):
    plan = extract.plan_extraction(h, 5, 1024)
    assert plan.n == n
    assert plan.seed_length == n + 1023
    assert plan.n >= np.ceil(5 * 1024 / h)


def test_plan_rate_accounting():
    plan = extract.plan_extraction(0.07057, 5, 1024)
    assert plan.bits_per_raw_sample == pytest.approx(0.07052, abs=1e-5)
    assert plan.bits_per_raw_sample <= 0.07057
    assert (0.07057 - plan.bits_per_raw_sample) / 0.07057 < 1e-3


def test_plan_errors_and_options():
    with pytest.raises(SecurityGateError, match="no certified entropy"):
        extract.plan_extraction(0.0, 5)
    with pytest.raises(SecurityGateError):
        extract.plan_extraction(-0.1, 5)
    with pytest.raises(ValidationError):
        extract.plan_extraction(6.0, 5)
    with pytest.raises(ValidationError, match="below the entropy bound"):
        extract.plan_extraction(0.07057, 5, n=72_000)
    assert extract.plan_extraction(0.07057, 5, n=80_000).n == 80_000
    eps = extract.plan_extraction(0.07057, 5, epsilon=2.0 ** -50)
    # the penalty adds 2 * 50 bits to m: ceil(5 * 1124 / 0.07057) = 79_638
    assert eps.n == 79_700


# -- Toeplitz products ---------------------------------------------------------

def test_hand_example():
    plan = extract.ExtractionPlan(3, 2, 1.0, 1)
    seed = [1, 0, 1, 1]
    np.testing.assert_array_equal(extract.toeplitz_matrix(seed, 3, 2), [[1, 0, 1], [1, 1, 0]])
    raw = BitStream.from_bits([1, 1, 0])
    for method in extract.METHODS:
        assert extract.toeplitz_extract(raw, seed, plan, method).to_bits().tolist() == [1, 0]


def test_all_zero_seed():
    plan = extract.ExtractionPlan(100, 16, 1.0, 1)
    raw = BitStream.from_bits(np.random.default_rng(0).integers(0, 2, 1000))
    out = extract.toeplitz_extract(raw, np.zeros(plan.seed_length, np.uint8), plan)
    assert out.length == 160 and not out.to_bits().any()


def test_plan_and_seed_checks():
    with pytest.raises(ValidationError):
        extract.ExtractionPlan(10, 11, 1.0, 1)
    plan = extract.ExtractionPlan(10, 4, 1.0, 1)
    with pytest.raises(ValidationError, match="n \\+ m - 1"):
        extract.ToeplitzExtractor(np.zeros(12, np.uint8), plan)
    with pytest.raises(ValidationError):
        extract.ToeplitzExtractor(np.zeros(13, np.uint8), plan, method="gpu")


def test_ten_megabit_example():
    rng = np.random.default_rng(5)
    raw = BitStream(np.packbits(rng.integers(0, 2, 10_000_000, dtype=np.uint8)), 10_000_000)
    seed = rng.integers(0, 2, PLAN_10M.seed_length, dtype=np.uint8)
    out = extract.toeplitz_extract(raw, seed, PLAN_10M)
    assert out.length == 137 * 1024 == 140_288
    assert out.meta["discarded_bits"] == 10_000_000 - 137 * 72_600
    bits = raw.to_bits()
    for k in range(3):
        block = bits[k * 72_600:(k + 1) * 72_600]
        ref = extract.naive_product(seed, block, 72_600, 1024)
        np.testing.assert_array_equal(out.to_bits()[k * 1024:(k + 1) * 1024], ref)


def test_path_equivalence_thousand_pairs():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        n = int(rng.integers(1, 2049))
        m = int(rng.integers(1, min(n, 256) + 1))
        plan = extract.ExtractionPlan(n, m, 1.0, 1)
        seed = rng.integers(0, 2, plan.seed_length, dtype=np.uint8)
        x = rng.integers(0, 2, (1, n), dtype=np.uint8)
        ref = extract.naive_product(seed, x[0], n, m)
        for method in ("table", "fft"):
            got = extract.ToeplitzExtractor(seed, plan, method).hash_blocks(x)[0]
            assert np.array_equal(got, ref), (n, m, method)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.data())
def test_dense_matrix_oracle(n, data):
    m = data.draw(st.integers(1, n))
    blocks = data.draw(st.integers(0, 4))
    seed_int = data.draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed_int)
    plan = extract.ExtractionPlan(n, m, 1.0, 1)
    seed = rng.integers(0, 2, plan.seed_length, dtype=np.uint8)
    x = rng.integers(0, 2, blocks * n + data.draw(st.integers(0, n - 1)), dtype=np.uint8)
    t = extract.toeplitz_matrix(seed, n, m).astype(np.int64)
    ref = np.concatenate([t @ x[k * n:(k + 1) * n] % 2 for k in range(blocks)] or [np.zeros(0)])
    for method in extract.METHODS:
        out = extract.toeplitz_extract(BitStream.from_bits(x), seed, plan, method)
        assert out.to_bits().tolist() == ref.astype(np.uint8).tolist()


@settings(max_examples=30, deadline=None)
@given(st.integers(8, 2000), st.integers(0, 2 ** 32 - 1))
def test_linearity(n, s):
    rng = np.random.default_rng(s)
    m = int(rng.integers(1, n + 1))
    plan = extract.ExtractionPlan(n, m, 1.0, 1)
    seed = rng.integers(0, 2, plan.seed_length, dtype=np.uint8)
    x = BitStream.from_bits(rng.integers(0, 2, 3 * n))
    y = BitStream.from_bits(rng.integers(0, 2, 3 * n))
    ex = lambda r: extract.toeplitz_extract(r, seed, plan)
    assert ex(x ^ y) == ex(x) ^ ex(y)


@pytest.mark.parametrize("n", [800, 803])
def test_streaming_feed_matches_one_shot(n):
    rng = np.random.default_rng(n)
    plan = extract.ExtractionPlan(n, 64, 1.0, 1)
    seed = rng.integers(0, 2, plan.seed_length, dtype=np.uint8)
    bits = rng.integers(0, 2, 20 * n + 123, dtype=np.uint8)
    whole = extract.toeplitz_extract(BitStream.from_bits(bits), seed, plan)
    ex = extract.ToeplitzExtractor(seed, plan, batch_bits=3 * n)
    pos = 0
    for size in (1, 7, 8, 1000, 5 * n + 5, 333, 64):
        ex.feed(np.packbits(bits[pos:pos + size]), len(bits[pos:pos + size]))
        pos += size
    ex.feed(np.packbits(bits[pos:]), len(bits) - pos)
    out = ex.finish()
    assert out == whole
    assert ex.blocks_done == 20 and ex.discarded_bits == 123


def test_pure_python_backend_matches(tmp_path):
    rng = np.random.default_rng(3)
    plan = extract.ExtractionPlan(1000, 40, 1.0, 1)
    seed = rng.integers(0, 2, plan.seed_length, dtype=np.uint8)
    raw = BitStream.from_bits(rng.integers(0, 2, 10_000))
    seed_path, raw_path = tmp_path / "seed.bin", tmp_path / "raw.bin"
    BitStream.from_bits(seed, "seed").save(seed_path)
    raw.save(raw_path)
    code = (
        "import sys, numpy as np\n"
        "from steerqrng import extract\n"
        "from steerqrng.bits import BitStream\n"
        "plan = extract.ExtractionPlan(1000, 40, 1.0, 1)\n"
        "seed = extract.load_seed(sys.argv[1], plan.seed_length)\n"
        "out = extract.toeplitz_extract(BitStream.load(sys.argv[2]), seed, plan)\n"
        "print(extract.BACKEND, out.data.tobytes().hex())\n"
    )
    env = {**os.environ, "STEERQRNG_PURE_PYTHON": "1"}
    res = subprocess.run([sys.executable, "-c", code, str(seed_path), str(raw_path)],
                         env=env, capture_output=True, text=True, check=True)
    backend, hexdata = res.stdout.split()
    assert backend == "numpy"
    assert hexdata == extract.toeplitz_extract(raw, seed, plan).data.tobytes().hex()


def test_backend_name():
    assert extract.BACKEND in ("cython", "numpy")


# -- seeds and bit streams ---------------------------------------------------

def test_seed_from_file_is_deterministic(tmp_path):
    p = tmp_path / "samples.bin"
    p.write_bytes(bytes(range(256)) * 10)
    a = extract.seed_from_file(p, 73_623)
    b = extract.seed_from_file(p, 73_623)
    assert a == b and a.length == 73_623 and a.origin == "seed"
    p.write_bytes(bytes(range(256)) * 11)
    assert extract.seed_from_file(p, 73_623) != a


def test_load_seed(tmp_path):
    bits = np.random.default_rng(0).integers(0, 2, 500)
    BitStream.from_bits(bits, "seed").save(tmp_path / "s.bin")
    got = extract.load_seed(tmp_path / "s.bin", 300)
    assert got.to_bits().tolist() == bits[:300].tolist()
    with pytest.raises(ValidationError, match="500 bits"):
        extract.load_seed(tmp_path / "s.bin", 501)
    # a bare file without sidecar counts every byte
    (tmp_path / "bare.bin").write_bytes(b"\xff" * 4)
    assert extract.load_seed(tmp_path / "bare.bin", 32).to_bits().all()


def test_bitstream_basics(tmp_path):
    s = BitStream.from_bits([1, 0, 1, 1, 0, 0, 1, 0, 1, 1])
    assert len(s) == 10 and s.data.tolist() == [0b10110010, 0b11000000]
    assert not s.data.flags.writeable
    assert s.head(4).to_bits().tolist() == [1, 0, 1, 1]
    with pytest.raises(ValidationError):
        s.head(11)
    with pytest.raises(ValidationError):
        BitStream.from_bits([0, 2])
    with pytest.raises(ValidationError):
        BitStream(np.zeros(3, np.uint8), 10)
    with pytest.raises(ValidationError):
        BitStream(np.zeros(2, np.uint8), 10, origin="noise")
    # stray bits past the length are cleared
    assert BitStream(np.array([0xFF], np.uint8), 3).data.tolist() == [0xE0]
    s.save(tmp_path / "b.bin")
    side = json.loads((tmp_path / "b.bin.json").read_text())
    assert side["length"] == 10 and side["bit_order"] == "msb-first"
    assert BitStream.load(tmp_path / "b.bin") == s


def test_concat_and_writer():
    parts = [BitStream.from_bits([1, 0, 1]), BitStream.from_bits([1] * 8), BitStream.from_bits([0, 1])]
    joined = concat(parts)
    assert joined.to_bits().tolist() == [1, 0, 1] + [1] * 8 + [0, 1]
    w = BitWriter()
    w.write_bits([1, 0, 1])
    w.write_packed(np.array([0xFF], np.uint8), 8)
    w.write_bits([0, 1])
    assert w.getvalue() == joined
    assert concat([]).length == 0
