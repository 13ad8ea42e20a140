"""
Test script for coincidence analysis

Tests:
1. Delay histogram offsets and translation covariance
2. g2 of uncorrelated and correlated streams
3. Accidental windows and window errors
4. Fringe fit: exact data, phase offsets, bootstrap error, unbiased V
5. Correlators and CHSH, including measured correlator sets
6. Poisson error bars against resampling
7. Histogram merge and file output
"""

import json
import os
import sys
import tempfile

import numpy as np
import pytest

# Add project root to path for imports
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from afclab.pipeline.entanglement.coincidence import (
    SUMMARY_SCHEMA_VERSION,
    CorrelatorEstimate,
    DelayHistogram,
    WindowCount,
    accidental_offsets,
    chsh_S,
    contrast_dilution,
    correlator,
    fit_visibility,
    g2si,
    histogram,
    merge_histograms,
    resample_counts,
    save_histogram_csv,
    save_summary_json,
    summary_document,
    window_count,
)
from afclab.pipeline.entanglement.errors import ValidationError, WindowError

NS = 1000  # picoseconds


def test_histogram_offsets():
    """Identical tags land in the zero bin, shifted tags move with the shift"""
    print("="*60)
    print("TEST 1: Histogram offsets")
    print("="*60)

    t = np.array([1_000_000, 5_000_000, 9_000_000], dtype=np.int64)
    hist = histogram(t, t, 1e-9, (-50e-9, 50e-9))
    assert hist.total == 3
    assert hist.counts[50] == 3  # bin [0, 1 ns)

    hist = histogram(t + 25 * NS, t, 1e-9, (-50e-9, 50e-9))
    assert hist.counts[75] == 3

    rng = np.random.default_rng(1)
    s = np.sort(rng.integers(0, 10 ** 9, 2000))
    i = np.sort(rng.integers(0, 10 ** 9, 2000))
    base = histogram(s, i, 1e-9, (-500e-9, 500e-9))
    shifted = histogram(s + 7 * NS, i, 1e-9, (-493e-9, 507e-9))
    np.testing.assert_array_equal(base.counts, shifted.counts)

    with pytest.raises(ValidationError):
        histogram(s, i, 0.0, (-1e-9, 1e-9))
    empty = histogram(np.zeros(0, np.int64), i)
    assert empty.total == 0
    print("✓ Histogram offsets test passed\n")


def test_g2():
    """Uncorrelated streams give g2 = 1; a planted peak gives g2 > 2"""
    print("="*60)
    print("TEST 2: g2")
    print("="*60)

    rng = np.random.default_rng(2)
    T = 10 ** 11  # 0.1 s in ps
    s = np.sort(rng.integers(0, T, 50_000))
    i = np.sort(rng.integers(0, T, 50_000))
    hist = histogram(s, i, 1e-9, (-500e-9, 500e-9))
    est = g2si(hist, 0.0, accidental_offsets([0.0], 10e-9, 20, (-500e-9, 500e-9)), 10e-9)
    print(f"uncorrelated g2 = {est.g2:.3f} +- {est.sigma:.3f}")
    assert abs(est.g2 - 1.0) < 4 * est.sigma
    assert not est.non_classical()

    counts = np.full(100, 10)
    counts[50] = 500
    planted = DelayHistogram(bin_width=1e-9, range=(-50e-9, 50e-9), counts=counts)
    est = g2si(planted, 0.0, [-30e-9, -20e-9, 20e-9, 30e-9], 10e-9)
    assert est.n_peak == 590
    assert est.mean_accidental == 100
    assert est.g2 == pytest.approx(5.9)
    assert est.non_classical()

    flat = DelayHistogram(bin_width=1e-9, range=(-50e-9, 50e-9), counts=np.full(100, 10))
    assert g2si(flat, 0.0, [-30e-9, 20e-9, 30e-9], 10e-9).g2 == pytest.approx(1.0)

    zero = np.zeros(100, dtype=int)
    zero[50] = 4
    bound = g2si(DelayHistogram(1e-9, (-50e-9, 50e-9), zero), 0.0, [-30e-9, 20e-9, 30e-9], 10e-9)
    assert bound.lower_bound
    assert bound.g2 == pytest.approx(12.0)
    print("✓ g2 test passed\n")


def test_accidental_windows():
    """Accidental windows keep clear of peaks; invalid windows raise"""
    print("="*60)
    print("TEST 3: Accidental windows")
    print("="*60)

    peaks = [0.0, 25e-9]
    offsets = accidental_offsets(peaks, 10e-9, 20, (-500e-9, 500e-9))
    assert len(offsets) == 20
    for o in offsets:
        assert min(abs(o - p) for p in peaks) >= 20e-9 - 1e-18

    flat = DelayHistogram(bin_width=1e-9, range=(-50e-9, 50e-9), counts=np.full(100, 10))
    with pytest.raises(WindowError):
        g2si(flat, 0.0, [20e-9, 30e-9], 10e-9)
    with pytest.raises(WindowError):
        g2si(flat, 0.0, [5e-9, 20e-9, 30e-9], 10e-9)
    with pytest.raises(WindowError):
        window_count(flat, 200e-9, 10e-9)
    with pytest.raises(WindowError):
        accidental_offsets([0.0], 10e-9, 50, (-100e-9, 100e-9))
    print("✓ Accidental windows test passed\n")


def test_fringe_fit():
    """Noiseless fringes fit exactly, offsets are recovered, bootstrap matches"""
    print("="*60)
    print("TEST 4: Fringe fit")
    print("="*60)

    phases = np.linspace(0, 2 * np.pi, 9, endpoint=False)
    exact = 200.0 * (1 + 0.84 * np.cos(phases + 0.3))
    fit = fit_visibility(phases, exact)
    assert fit.V == pytest.approx(0.84, abs=1e-9)
    assert fit.phase_offset == pytest.approx(0.3, abs=1e-9)
    assert fit.baseline == pytest.approx(200.0, rel=1e-9)

    shifted = fit_visibility(phases, 200.0 * (1 + 0.84 * np.cos(phases + 0.3 + np.radians(75))))
    diff = np.degrees(np.angle(np.exp(1j * (shifted.phase_offset - fit.phase_offset))))
    assert diff == pytest.approx(75.0, abs=1e-6)

    # negative amplitude folds into V >= 0 with a pi offset
    folded = fit_visibility(phases, 200.0 * (1 - 0.5 * np.cos(phases)))
    assert folded.V == pytest.approx(0.5, abs=1e-9)
    assert abs(folded.phase_offset) == pytest.approx(np.pi, abs=1e-9)

    rng = np.random.default_rng(3)
    draws = resample_counts(exact, 2000, rng)
    V = np.array([fit_visibility(phases, d).V for d in draws])
    reported = fit_visibility(phases, draws[0]).V_sigma
    print(f"bootstrap sigma(V) {V.std():.4f}, reported {reported:.4f}")
    assert reported == pytest.approx(V.std(), rel=0.2)
    print(f"mean V over resamples {V[:1000].mean():.4f}")
    assert abs(V[:1000].mean() - 0.84) < 3 * V[:1000].std() / np.sqrt(1000)

    with pytest.raises(ValidationError):
        fit_visibility(phases[:3], exact[:3])
    with pytest.raises(ValidationError):
        fit_visibility(np.linspace(0, 3, 6), exact[:6])

    assert contrast_dilution(0.93, 0.128) == pytest.approx(0.8245, abs=1e-4)
    print("✓ Fringe fit test passed\n")


def test_correlators():
    """E from four runs and the CHSH combination"""
    print("="*60)
    print("TEST 5: Correlators and CHSH")
    print("="*60)

    perfect = correlator([100, 0, 0, 100])
    assert perfect.E == 1.0 and perfect.sigma == 0.0

    flat = correlator([50, 50, 50, 50])
    assert flat.E == 0.0
    assert flat.sigma == pytest.approx(1 / np.sqrt(200))

    scaled = correlator([300, 60, 60, 300])
    assert scaled.E == pytest.approx(correlator([3000, 600, 600, 3000]).E)
    assert scaled.sigma > correlator([3000, 600, 600, 3000]).sigma

    windows = [WindowCount(50e-9, 10e-9, n) for n in (90, 10, 12, 88)]
    assert correlator(windows).E == pytest.approx((178 - 22) / 200)
    with pytest.raises(WindowError):
        correlator(windows[:3] + [WindowCount(50e-9, 5e-9, 88)])
    with pytest.raises(ValidationError):
        correlator([0, 0, 0, 0])
    with pytest.raises(ValidationError):
        correlator([1, 2, 3])

    ones = [correlator([100, 0, 0, 100]) for _ in range(3)] + [correlator([0, 100, 100, 0])]
    result = chsh_S(ones)
    assert result.S == pytest.approx(4.0)
    assert result.unphysical

    typical = [correlator([330, 70, 70, 330]) for _ in range(3)] + [correlator([70, 330, 330, 70])]
    result = chsh_S(typical)
    assert result.S == pytest.approx(4 * 0.65)
    assert not result.unphysical
    assert result.violation_sigmas == pytest.approx((result.S - 2) / result.sigma)
    with pytest.raises(ValidationError):
        chsh_S(typical, signs=(1, 1, 1, 0))

    # measured correlator sets: S and propagated sigma to three decimals
    for E, sigma, S, S_sigma in (((0.68, 0.79, 0.60, -0.57), (0.12, 0.10, 0.10, 0.14), 2.64, 0.232),
                                 ((0.68, 0.71, 0.63, -0.60), (0.05, 0.06, 0.09, 0.09), 2.62, 0.149)):
        result = chsh_S([CorrelatorEstimate(e, s, (0, 0, 0, 0)) for e, s in zip(E, sigma)])
        print(f"S = {result.S:.2f} +- {result.sigma:.3f}")
        assert result.S == pytest.approx(S, abs=1e-9)
        assert result.sigma == pytest.approx(S_sigma, abs=1e-3)

    # E = 0.68 +- 0.12 needs about 37 coincidences
    small = correlator([16, 3, 3, 15])
    assert small.E == pytest.approx(0.68, abs=0.01)
    assert small.sigma == pytest.approx(0.12, abs=0.005)
    assert sum(small.counts) == round((1 - 0.68 ** 2) / 0.12 ** 2) == 37
    print("✓ Correlators test passed\n")


def test_error_bars():
    """Propagated sigma(E) and sigma(S) match Poisson resampling"""
    print("="*60)
    print("TEST 6: Error bars")
    print("="*60)

    rng = np.random.default_rng(4)
    expected = np.array([300.0, 60.0, 60.0, 300.0])
    draws = resample_counts(expected, 10_000, rng)
    plus, minus = draws[:, 0] + draws[:, 3], draws[:, 1] + draws[:, 2]
    E = (plus - minus) / (plus + minus)
    assert correlator(expected.astype(int)).sigma == pytest.approx(E.std(), rel=0.05)

    runs = np.array([[300, 60, 60, 300]] * 3 + [[60, 300, 300, 60]], dtype=float)
    draws = resample_counts(runs, 10_000, rng)
    plus, minus = draws[..., 0] + draws[..., 3], draws[..., 1] + draws[..., 2]
    S = ((plus - minus) / (plus + minus)) @ np.array([1, 1, 1, -1])
    result = chsh_S([correlator(r.astype(int)) for r in runs])
    assert result.sigma == pytest.approx(S.std(), rel=0.05)
    print("✓ Error bars test passed\n")


def test_merge_and_output():
    """Merging is associative; CSV and summary document are written"""
    print("="*60)
    print("TEST 7: Merge and output")
    print("="*60)

    rng = np.random.default_rng(5)
    parts = [DelayHistogram(1e-9, (-10e-9, 10e-9), rng.integers(0, 9, 20)) for _ in range(3)]
    left = merge_histograms(merge_histograms(parts[0], parts[1]), parts[2])
    right = merge_histograms(parts[0], merge_histograms(parts[1], parts[2]))
    np.testing.assert_array_equal(left.counts, right.counts)
    with pytest.raises(ValidationError):
        merge_histograms(parts[0], DelayHistogram(2e-9, (-10e-9, 10e-9), np.zeros(10)))

    flat = DelayHistogram(1e-9, (-50e-9, 50e-9), np.full(100, 10))
    est = g2si(flat, 0.0, [-30e-9, 20e-9, 30e-9], 10e-9)
    summary = summary_document(g2=est, scenario="test", counts=np.array([1, 2]))

    with tempfile.TemporaryDirectory() as tmp:
        save_histogram_csv(os.path.join(tmp, "histogram.csv"), flat)
        data = np.loadtxt(os.path.join(tmp, "histogram.csv"), delimiter=",")
        assert data.shape == (100, 2)
        assert data[:, 1].sum() == 1000

        save_summary_json(os.path.join(tmp, "summary.json"), summary)
        with open(os.path.join(tmp, "summary.json")) as f:
            doc = json.load(f)
        assert doc["schema_version"] == SUMMARY_SCHEMA_VERSION
        assert doc["g2"] == pytest.approx(1.0)
        assert doc["counts"] == [1, 2]
    print("✓ Merge and output test passed\n")


def run_all_tests():
    """Run all tests"""
    print("\n" + "="*60)
    print("COINCIDENCE TEST SUITE")
    print("="*60 + "\n")

    tests = [
        test_histogram_offsets,
        test_g2,
        test_accidental_windows,
        test_fringe_fit,
        test_correlators,
        test_error_bars,
        test_merge_and_output,
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
