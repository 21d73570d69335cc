import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from steerqrng import fock
from steerqrng.errors import InvalidStateError, TruncationError, ValidationError
from steerqrng.quadrature import adaptive_gl, fixed_gl


def test_gauss_legendre_exact_for_polynomials():
    assert fixed_gl(lambda z: z ** 5 + 3 * z ** 2, -1.0, 2.0, order=4) == pytest.approx(
        (2 ** 6 - 1) / 6 + (8 + 1), rel=1e-14)
    val = adaptive_gl(lambda z: np.exp(-z * z), -8.0, 8.0, tol=1e-13)
    assert val == pytest.approx(math.sqrt(math.pi), rel=1e-12)


def test_vacuum_and_coherent_state():
    st0 = fock.gaussian_to_fock(np.eye(2), np.zeros(2), 6)
    expected = np.zeros((6, 6))
    expected[0, 0] = 1
    np.testing.assert_allclose(st0.matrix, expected, atol=1e-12)

    coh = fock.gaussian_to_fock(np.eye(2), np.array([2.0, 0.0]), 20)
    assert coh.matrix[0, 0].real == pytest.approx(math.exp(-1), abs=1e-10)
    np.testing.assert_allclose(coh.matrix, oracles.coherent_state(1.0, 20), atol=1e-10)


def test_displaced_complex_amplitude_matches_oracle():
    alpha = 0.6 - 0.4j
    st_ = fock.gaussian_to_fock(np.eye(2), np.array([2 * alpha.real, 2 * alpha.imag]), 16)
    np.testing.assert_allclose(st_.matrix, oracles.coherent_state(alpha, 16), atol=1e-10)


def test_squeezed_vacuum_is_pure():
    r = 0.3
    st_ = fock.gaussian_to_fock(np.diag([math.exp(-2 * r), math.exp(2 * r)]), np.zeros(2), 20)
    rho = st_.matrix
    assert np.real(np.trace(rho @ rho)) == pytest.approx(1.0, abs=1e-6)
    # only even photon numbers
    assert np.max(np.abs(rho[1::2, :])) < 1e-12
    # q variance e^{-2r}
    q, _ = fock.quadrature_operators(20)
    assert fock.expectation(rho, q @ q) == pytest.approx(math.exp(-2 * r), abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(nbar=st.floats(0.0, 1.5))
def test_thermal_state_matches_oracle(nbar):
    cm = (2 * nbar + 1) * np.eye(2)
    st_ = fock.gaussian_to_fock(cm, np.zeros(2), 40, deficit_tol=1e-5)
    np.testing.assert_allclose(st_.matrix, oracles.thermal_state(nbar, 40), atol=1e-9)


def test_gaussian_to_fock_errors():
    with pytest.raises(InvalidStateError):
        fock.gaussian_to_fock(0.5 * np.eye(2), np.zeros(2), 8)
    with pytest.raises(TruncationError, match="increase d_F"):
        fock.gaussian_to_fock(9 * np.eye(2), np.zeros(2), 4)
    with pytest.raises(ValidationError):
        fock.gaussian_to_fock(np.eye(2), np.zeros(2), 1)


def test_second_moments_reproduce_cm():
    cm = np.array([[1.4, 0.3], [0.3, 1.1]])
    st_ = fock.gaussian_to_fock(cm, np.zeros(2), 30)
    q, p = fock.quadrature_operators(30)
    assert fock.expectation(st_.matrix, q @ q) == pytest.approx(1.4, abs=1e-8)
    assert fock.expectation(st_.matrix, p @ p) == pytest.approx(1.1, abs=1e-8)
    assert fock.expectation(st_.matrix, 0.5 * (q @ p + p @ q)) == pytest.approx(0.3, abs=1e-8)


def test_wavefunction_values():
    assert fock.quadrature_wavefunction(0, 0.0) == pytest.approx((2 * math.pi) ** -0.25)
    assert fock.quadrature_wavefunction(1, 0.0) == 0.0
    z = np.linspace(-6, 6, 41)
    for n in range(12):
        np.testing.assert_allclose(fock.quadrature_wavefunction(n, z), oracles.wavefunction(n, z),
                                   atol=1e-12)
    with pytest.raises(ValidationError):
        fock.quadrature_wavefunction(-1, 0.0)


def test_interval_povm_examples():
    full = fock.quadrature_interval_povm(0.0, -math.inf, math.inf, 8)
    np.testing.assert_allclose(full.matrix, np.eye(8), atol=1e-10)
    half = fock.quadrature_interval_povm(0.0, 0.0, math.inf, 2).matrix
    c = (2 * math.pi) ** -0.5
    np.testing.assert_allclose(half, [[0.5, c], [c, 0.5]], atol=1e-12)
    rot = fock.quadrature_interval_povm(math.pi / 2, 0.0, math.inf, 2).matrix
    np.testing.assert_allclose(np.abs(rot), np.abs(half), atol=1e-12)
    assert rot[0, 1] == pytest.approx(c * np.exp(-1j * math.pi / 2), abs=1e-12)
    with pytest.raises(ValidationError):
        fock.quadrature_interval_povm(0.0, 1.0, 1.0, 2)


@pytest.mark.parametrize("lo,hi", [(-1.0, 0.5), (0.2, 3.0), (-4.0, -2.5)])
def test_overlap_integrals_match_scipy_quad(lo, hi):
    d = 6
    mat = fock.overlap_integrals(lo, hi, d)
    for m in range(d):
        for n in range(d):
            assert mat[m, n] == pytest.approx(oracles.overlap(m, n, lo, hi), abs=1e-10)


def test_binned_povm_is_complete_and_psd():
    elems = fock.binned_quadrature_povm(math.pi / 4, np.linspace(-3, 3, 7), 10)
    total = sum(e.matrix for e in elems)
    np.testing.assert_allclose(total, np.eye(10), atol=1e-12)
    for e in elems:
        assert np.linalg.eigvalsh(e.matrix)[0] > -1e-10


def test_povm_statistics_match_gaussian_marginal():
    # P(q in [a, b]) for a squeezed thermal state through the Fock POVM
    cm = np.array([[0.8, 0.0], [0.0, 1.6]])
    rho = fock.gaussian_to_fock(cm, np.array([0.5, 0.0]), 30).matrix
    e = fock.quadrature_interval_povm(0.0, -0.3, 1.1, 30).matrix
    from scipy.stats import norm
    ref = norm.cdf(1.1, 0.5, math.sqrt(0.8)) - norm.cdf(-0.3, 0.5, math.sqrt(0.8))
    assert fock.expectation(rho, e) == pytest.approx(ref, abs=1e-8)


def test_clip_psd():
    m = np.diag([1.0, -1e-10])
    out = fock.clip_psd(m)
    assert np.linalg.eigvalsh(out)[0] >= 0
    assert np.trace(out) == pytest.approx(np.trace(m))
    with pytest.raises(InvalidStateError):
        fock.clip_psd(np.diag([1.0, -1e-3]))


def test_displaced_family_matches_direct_construction():
    cond = np.array([[0.8, 0.1], [0.1, 1.5]])
    slope = np.array([0.4, -0.2])
    fam = fock.DisplacedFamily(cond, slope, 12, 4.0)
    for z in (-3.0, 0.0, 1.7):
        direct = fock.gaussian_to_fock(cond, slope * z, 12, deficit_tol=1e-3).matrix
        np.testing.assert_allclose(fam.state(z), direct, atol=1e-8)
