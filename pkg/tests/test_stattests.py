import csv
import json
import math

import numpy as np
import pytest
from scipy import stats

import oracles
from steerqrng import stattests as st
from steerqrng.bits import BitStream
from steerqrng.errors import ValidationError

# binary expansion of pi, the 100-bit worked example of SP 800-22
PI100 = ("11001001000011111101101010100010001000010110100011"
         "00001000110100110001001100011001100010100010111000")
LONGEST128 = ("11001100000101010110110001001100111000000000001001"
              "00110101010001000100111101011010000000110101111100"
              "1100111001101101100010110010")


def bits(s):
    return np.array([int(c) for c in s], dtype=np.uint8)


def pvals(test, s, **kw):
    out, _ = test(bits(s), **kw)
    return [p for _, p in out]


# -- worked examples -----------------------------------------------------------

@pytest.mark.parametrize("s, p", [("1011010101", 0.527089), (PI100, 0.109599)])
def test_frequency_examples(s, p):
    assert pvals(st.frequency_test, s)[0] == pytest.approx(p, abs=1e-6)


@pytest.mark.parametrize("s, m, p", [("0110011010", 3, 0.801252), (PI100, 10, 0.706438)])
def test_block_frequency_examples(s, m, p):
    assert pvals(st.block_frequency_test, s, m=m)[0] == pytest.approx(p, abs=1e-6)


@pytest.mark.parametrize("s, p", [("1001101011", 0.147232), (PI100, 0.500798)])
def test_runs_examples(s, p):
    assert pvals(st.runs_test, s)[0] == pytest.approx(p, abs=1e-6)


def test_runs_prerequisite():
    out, params = st.runs_test(bits("1" * 90 + "0" * 10))
    assert out[0][1] == 0.0 and params["prerequisite"] == "failed"


def test_longest_run_example():
    assert len(LONGEST128) == 128
    out, params = st.longest_run_test(bits(LONGEST128))
    assert params == {"M": 8, "K": 3, "N": 16}
    # class probabilities are exact here, the published table rounds them to four digits
    assert out[0][1] == pytest.approx(0.180609, abs=2e-4)


@pytest.mark.parametrize("m, r", [(8, 1), (8, 2), (8, 3), (8, 4), (12, 5), (16, 3)])
def test_longest_run_cdf_brute_force(m, r):
    assert st._longest_run_cdf(m, r) == pytest.approx(oracles.longest_run_brute(m, r), abs=1e-15)


def test_longest_run_class_probabilities_near_table():
    cdf = [st._longest_run_cdf(8, r) for r in (1, 2, 3)]
    probs = np.diff([0.0, *cdf, 1.0])
    np.testing.assert_allclose(probs, [0.2148, 0.3672, 0.2305, 0.1875], atol=1e-4)


def test_cusum_examples():
    fwd, rev = pvals(st.cumulative_sums_test, PI100)
    assert fwd == pytest.approx(0.219194, abs=1e-6)
    assert rev == pytest.approx(0.114866, abs=1e-6)
    # the 10-bit worked example prints 0.4116588; the exact sum gives 0.41158
    assert pvals(st.cumulative_sums_test, "1011010111")[0] == pytest.approx(0.4116588, abs=1e-4)


@pytest.mark.parametrize("s, m, p1, p2", [("0011011101", 3, 0.808792, 0.670320)])
def test_serial_example(s, m, p1, p2):
    got = pvals(st.serial_test, s, m=m)
    assert got == pytest.approx([p1, p2], abs=1e-6)


@pytest.mark.parametrize("s, m, p", [("0100110101", 3, 0.261961), (PI100, 2, 0.235301)])
def test_approximate_entropy_examples(s, m, p):
    assert pvals(st.approximate_entropy_test, s, m=m)[0] == pytest.approx(p, abs=1e-6)


@pytest.mark.parametrize("s", ["1001010011", PI100])
def test_fft_against_direct_dft(s):
    # the worked DFT examples disagree with their own listed moduli; compare with a direct DFT
    assert pvals(st.fft_test, s)[0] == pytest.approx(oracles.dft_test_direct(bits(s)), abs=1e-12)


def test_fft_random_against_direct(rng):
    x = rng.integers(0, 2, 4096, dtype=np.uint8)
    assert st.fft_test(x)[0][0][1] == pytest.approx(oracles.dft_test_direct(x), abs=1e-10)


def test_all_zeros_fail_frequency():
    assert st.frequency_test(np.zeros(1000, np.uint8))[0][0][1] < 1e-100


# -- autocorrelation -----------------------------------------------------------

def test_autocorrelation_hand_example(caplog):
    assert st.autocorrelation([0, 1, 0, 1], 1)[0] == pytest.approx(-0.75)
    assert "poorly resolved" in caplog.text


def test_autocorrelation_period_two():
    rho = st.autocorrelation(np.tile([0, 1], 50_000), 2)
    assert rho[0] == pytest.approx(-1.0, abs=1e-4)
    assert rho[1] == pytest.approx(1.0, abs=1e-4)


def test_autocorrelation_matches_direct_sum(rng):
    x = rng.integers(0, 2, 3000)
    y = 2.0 * x - 1
    y -= y.mean()
    ref = [np.dot(y[:-k], y[k:]) / np.dot(y, y) for k in range(1, 31)]
    np.testing.assert_allclose(st.autocorrelation(x, 30), ref, atol=1e-12)


def test_autocorrelation_null_bound():
    x = np.random.default_rng(8).integers(0, 2, 1_000_000, dtype=np.uint8)
    rho = st.autocorrelation(BitStream.from_bits(x), 1000)
    assert np.mean(np.abs(rho) < 4e-3) >= 0.999


def test_autocorrelation_errors():
    with pytest.raises(ValidationError, match="undefined"):
        st.autocorrelation(np.ones(100, np.uint8), 5)
    with pytest.raises(ValidationError):
        st.autocorrelation([0, 1, 1], 3)
    with pytest.raises(ValidationError):
        st.autocorrelation([0, 2, 1, 0], 1)


def test_save_autocorrelation(tmp_path):
    st.save_autocorrelation([0.5, -0.25], tmp_path / "a.csv")
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == ["lag", "rho"] and float(rows[2][1]) == -0.25


# -- battery ---------------------------------------------------------------------

def test_proportion_band():
    centre, half, lower = st.proportion_band(0.01, 1000)
    assert centre == 0.99
    # 0.00943928 agrees with the published 0.0094392 on every printed digit
    assert math.floor(half * 1e7) / 1e7 == 0.0094392
    assert abs(half - 0.0094392) < 1e-7
    assert st.proportion_band(0.01, 100)[1] == pytest.approx(0.0298, abs=5e-5)
    with pytest.raises(ValidationError):
        st.proportion_band(0.0, 10)


def test_uniformity_pvalue():
    p_t, counts = st.uniformity_pvalue(np.linspace(0.005, 0.995, 100))
    assert counts.tolist() == [10] * 10 and p_t == pytest.approx(1.0)
    p_bad, _ = st.uniformity_pvalue(np.full(100, 0.05))
    assert p_bad < 1e-4
    # chi-square with nine degrees of freedom
    pv = np.random.default_rng(0).random(200)
    _, c = st.uniformity_pvalue(pv)
    chi2 = float(np.sum((c - 20) ** 2 / 20))
    assert st.uniformity_pvalue(pv)[0] == pytest.approx(stats.chi2.sf(chi2, 9))


def test_pvalues_uniform_under_null():
    rng = np.random.default_rng(2718)
    seqs = rng.integers(0, 2, (1000, 2000), dtype=np.uint8)
    for name in ("frequency", "block_frequency", "cumulative_sums", "serial", "approximate_entropy"):
        p = np.array([st.TESTS[name](s)[0][0][1] for s in seqs])
        assert stats.kstest(p, "uniform").statistic < 0.05, name


def test_battery_on_seeded_generator():
    x = np.random.default_rng(1234).integers(0, 2, 100 * 20_000, dtype=np.uint8)
    rep = st.run_battery(x, 20_000)
    assert rep.n_sequences == 100
    assert rep.band[1] == pytest.approx(0.0298, abs=5e-5)
    for name in st.IMPLEMENTED:
        res = rep.tests[name]
        assert res.status == "ok", name
        for sub in res.subtests:
            assert sub.p_value_t > 1e-4 and abs(sub.proportion - 0.99) <= rep.band[1], (name, sub.name)
    assert rep.passed
    for name in st.NOT_IMPLEMENTED:
        assert rep.tests[name].status == "not-implemented"


def test_battery_rejects_zeros():
    rep = st.run_battery(np.zeros(20_000, np.uint8), 1000)
    assert not rep.tests["frequency"].passed
    assert not rep.passed


def test_short_sequences_not_applicable():
    x = np.random.default_rng(0).integers(0, 2, 1000, dtype=np.uint8)
    rep = st.run_battery(x, 100)
    assert rep.tests["fft"].status == "not-applicable"
    assert rep.tests["longest_run"].status == "not-applicable"
    assert not rep.tests["fft"].passed
    assert not rep.passed


def test_battery_input_checks():
    with pytest.raises(ValidationError):
        st.run_battery(np.zeros(150, np.uint8), 100)


def test_battery_is_deterministic_and_saves(tmp_path):
    x = np.random.default_rng(5).integers(0, 2, 20_000, dtype=np.uint8)
    a, b = st.run_battery(x, 2000), st.run_battery(x, 2000)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    a.save_json(tmp_path / "r.json")
    a.save_csv(tmp_path / "r.csv")
    a.save_histograms(tmp_path / "h.csv")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["band"]["half_width"] == pytest.approx(3 * math.sqrt(0.01 * 0.99 / 10))
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert {r["test"] for r in rows} >= set(st.IMPLEMENTED)
    hist = list(csv.DictReader(open(tmp_path / "h.csv")))
    assert sum(int(r["count"]) for r in hist if r["test"] == "frequency") == 10
