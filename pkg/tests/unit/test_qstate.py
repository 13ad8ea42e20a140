"""
Test script for two-qubit states and CHSH

Tests:
1. Bell state with canonical settings reaches 2*sqrt(2)
2. Werner state scaling of S
3. Tsirelson and classical bounds on random states/settings
4. Normalization and zero-norm errors
5. Density matrix validation
6. Partial trace and concurrence
7. Linearity in rho, Werner and mixed-state fidelity
"""

import os
import sys

import numpy as np
import pytest

# Add project root to path for imports
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from afclab.pipeline.entanglement.errors import ValidationError, ZeroNormError
from afclab.pipeline.entanglement.qstate import (
    SIGMA_X,
    SIGMA_Z,
    SX,
    SY,
    SZ,
    TSIRELSON_BOUND,
    DensityMatrix,
    Observable,
    StateVector,
    asymmetric_state,
    bell_state,
    canonical_chsh_settings,
    chsh,
    concurrence,
    expectation,
    fidelity_to,
    maximally_mixed,
    partial_trace,
    product_state,
    random_density,
    random_dichotomic,
    random_product_state,
    to_density,
    werner,
)


def test_bell_state_chsh():
    """Bell state with canonical settings gives 2*sqrt(2)"""
    print("="*60)
    print("TEST 1: Bell state CHSH")
    print("="*60)

    rho = to_density(bell_state())
    S = chsh(rho, canonical_chsh_settings())
    print(f"S = {S:.12f}")

    assert S == pytest.approx(2 * np.sqrt(2), abs=1e-9)
    assert expectation(rho, SZ, SZ) == pytest.approx(1.0)
    assert expectation(rho, SX, SX) == pytest.approx(1.0)
    print("✓ Bell state test passed\n")


def test_werner_scaling():
    """S(Werner V) = 2*sqrt(2)*V"""
    print("="*60)
    print("TEST 2: Werner state")
    print("="*60)

    S = chsh(werner(0.81), canonical_chsh_settings())
    print(f"S(V=0.81) = {S:.6f}")
    assert S == pytest.approx(2.2910, abs=1e-4)
    assert S == pytest.approx(2 * np.sqrt(2) * 0.81, abs=1e-6)

    assert chsh(maximally_mixed(), canonical_chsh_settings()) == pytest.approx(0.0, abs=1e-12)
    assert fidelity_to(werner(0.81), bell_state()) == pytest.approx((1 + 3 * 0.81) / 4)
    # Phi+ correlations: +1 for xx and zz, -1 for yy
    assert expectation(werner(0.81), SY, SY) == pytest.approx(-0.81, abs=1e-12)
    print("✓ Werner test passed\n")


def test_bounds_random():
    """Quantum bound for any state, classical bound for product states"""
    print("="*60)
    print("TEST 3: CHSH bounds")
    print("="*60)

    rng = np.random.default_rng(7)
    for _ in range(200):
        settings = [random_dichotomic(rng) for _ in range(4)]
        assert abs(chsh(random_density(rng), settings)) <= TSIRELSON_BOUND + 1e-9
        assert abs(chsh(to_density(random_product_state(rng)), settings)) <= 2.0 + 1e-9
    print("✓ Bounds test passed\n")


def test_normalization():
    """Sub-normalized states measure like their normalized version"""
    print("="*60)
    print("TEST 4: Normalization")
    print("="*60)

    psi = bell_state(0.3)
    small = psi.scaled(0.1)
    assert small.norm2 == pytest.approx(0.01)
    X, Y = SX, Observable((SIGMA_X + SIGMA_Z) / np.sqrt(2))
    assert expectation(to_density(small), X, Y) == pytest.approx(expectation(to_density(psi), X, Y))

    np.testing.assert_allclose(asymmetric_state(1.0).amplitudes, bell_state().amplitudes)

    zero = StateVector(np.zeros(4))
    with pytest.raises(ZeroNormError):
        zero.normalized()
    with pytest.raises(ZeroNormError):
        to_density(zero)
    with pytest.raises(ValidationError):
        StateVector(np.ones(3))
    print("✓ Normalization test passed\n")


def test_density_validation():
    """Non-Hermitian, non-positive or bad-trace matrices are rejected"""
    print("="*60)
    print("TEST 5: Density matrix validation")
    print("="*60)

    m = np.eye(4) / 4
    m_bad = m.copy()
    m_bad[0, 1] = 0.1
    with pytest.raises(ValidationError):
        DensityMatrix(m_bad)
    with pytest.raises(ValidationError):
        DensityMatrix(np.diag([0.6, 0.6, -0.1, -0.1]))
    with pytest.raises(ValidationError):
        DensityMatrix(np.eye(4))
    with pytest.raises(ValidationError):
        werner(1.2)
    with pytest.raises(ValidationError):
        chsh(werner(0.5), [SX, SZ, SX])
    with pytest.raises(ValidationError):
        chsh(werner(0.5), [SX, SZ, SX, Observable(0.5 * SIGMA_Z)])

    mixed = to_density(bell_state()).mix(maximally_mixed(), 0.81)
    np.testing.assert_allclose(mixed.matrix, werner(0.81).matrix, atol=1e-12)
    print("✓ Density validation test passed\n")


def test_partial_trace_concurrence():
    """Bell marginals are maximally mixed; product states have no concurrence"""
    print("="*60)
    print("TEST 6: Partial trace and concurrence")
    print("="*60)

    rho = to_density(bell_state())
    np.testing.assert_allclose(partial_trace(rho, "idler"), np.eye(2) / 2, atol=1e-12)
    np.testing.assert_allclose(partial_trace(rho, "signal"), np.eye(2) / 2, atol=1e-12)

    prod = to_density(product_state([1, 0], [0, 1]))
    np.testing.assert_allclose(partial_trace(prod, "idler"), np.diag([0, 1]), atol=1e-12)

    assert concurrence(rho) == pytest.approx(1.0, abs=1e-9)
    assert concurrence(prod) == pytest.approx(0.0, abs=1e-9)
    assert concurrence(werner(1 / 3)) == pytest.approx(0.0, abs=1e-9)
    assert concurrence(werner(0.81)) == pytest.approx((3 * 0.81 - 1) / 2, abs=1e-9)
    with pytest.raises(ValidationError):
        partial_trace(rho, "both")
    print("✓ Partial trace test passed\n")


def test_linearity_and_fidelity():
    """S is linear in rho; Werner fidelity (1+3V)/4 at any Bell phase"""
    print("="*60)
    print("TEST 7: Linearity and fidelity")
    print("="*60)

    rng = np.random.default_rng(3)
    for _ in range(20):
        settings = [random_dichotomic(rng) for _ in range(4)]
        rho1, rho2 = random_density(rng), random_density(rng)
        lam = rng.uniform()
        mixed = chsh(rho1.mix(rho2, lam), settings)
        assert mixed == pytest.approx(lam * chsh(rho1, settings) + (1 - lam) * chsh(rho2, settings),
                                      abs=1e-10)

    for phase in (0.0, 0.7, np.pi / 2):
        for V in (0.0, 0.25, 0.5, 0.81, 1.0):
            assert fidelity_to(werner(V, phase), bell_state(phase)) == pytest.approx((1 + 3 * V) / 4,
                                                                                    abs=1e-12)
    assert fidelity_to(maximally_mixed(), bell_state()) == pytest.approx(0.25, abs=1e-12)
    print("✓ Linearity and fidelity test passed\n")


def run_all_tests():
    """Run all tests"""
    print("\n" + "="*60)
    print("QSTATE TEST SUITE")
    print("="*60 + "\n")

    tests = [
        test_bell_state_chsh,
        test_werner_scaling,
        test_bounds_random,
        test_normalization,
        test_density_validation,
        test_partial_trace_concurrence,
        test_linearity_and_fidelity,
    ]

    passed = 0
    failed = 0

    for test in tests:
        try:
            test()
            passed += 1
        except Exception as e:
            print(f"\n✗ Test failed: {test.__name__}")
            print(f"  Error: {e}\n")
            failed += 1

    print("="*60)
    print(f"TEST RESULTS: {passed} passed, {failed} failed")
    print("="*60 + "\n")


if __name__ == "__main__":
    run_all_tests()
