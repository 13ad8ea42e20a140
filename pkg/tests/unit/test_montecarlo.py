"""
Test script for the Monte Carlo engines

Tests:
1. Poisson pair generation and seeding
2. Detection limits: darks only, perfect detection
3. Franson coincidence probabilities from the path-amplitude table, simulated phase sweep
4. Analyzer constructors and Franson matching
5. Sliced event engine: determinism and worker independence
6. Tag file round trip
7. Count engine agrees with the event engine
8. Dark counts independent of pair events
"""

import os
import sys
import tempfile

import numpy as np
import pytest

# Add project root to path for imports
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from afclab.pipeline.entanglement.afc import EchoLine, EchoReport
from afclab.pipeline.entanglement.coincidence import histogram, window_count
from afclab.pipeline.entanglement.errors import SimulationError, ValidationError
from afclab.pipeline.entanglement.montecarlo import (
    FILTER_BUDGET_883,
    FILTER_BUDGET_1338,
    IDLER,
    SIGNAL,
    TAG_DTYPE,
    Analyzer,
    ChannelConfig,
    DetectorConfig,
    SourceConfig,
    channel_from_budget,
    detect,
    expected_rates,
    fiber_interferometer,
    generate_pairs,
    hybrid_memory,
    load_tags,
    memory_echo,
    partial_readout,
    pass_through,
    route_pair,
    run_experiment,
    sample_histogram,
    save_tags,
    select_engine,
    simulate_histogram,
)
from afclab.pipeline.entanglement.protocol import HybridBudget, franson_prob

PERFECT = (ChannelConfig(1.0), ChannelConfig(1.0))
IDEAL_DETECTORS = (DetectorConfig(1.0, 0.0), DetectorConfig(1.0, 0.0))


def _at(joint, delay):
    return next(p for d, p in joint.items() if abs(d - delay) < 1e-15)


def test_pair_generation():
    """Pair counts are Poisson and reproducible"""
    print("="*60)
    print("TEST 1: Pair generation")
    print("="*60)

    cfg = SourceConfig(pair_rate=1e6, coherence_time=0.0)
    pairs = generate_pairs(cfg, 1.0, seed=3)
    print(f"{pairs.size} pairs in 1 s")

    assert abs(pairs.size - 1e6) < 5 * np.sqrt(1e6)
    assert np.all(np.diff(pairs) >= 0)
    assert pairs.min() >= 0.0 and pairs.max() < 1.0
    np.testing.assert_array_equal(pairs, generate_pairs(cfg, 1.0, seed=3))
    assert generate_pairs(SourceConfig(0.0), 10.0, seed=1).size == 0

    assert SourceConfig.from_pump_power(3e-3, 5e4).pair_rate == pytest.approx(150.0)
    with pytest.raises(ValidationError):
        SourceConfig(-1.0)
    print("✓ Pair generation test passed\n")


def test_detection_limits():
    """Zero efficiency leaves darks only; ideal detection gives one tag per photon"""
    print("="*60)
    print("TEST 2: Detection limits")
    print("="*60)

    table = route_pair(pass_through(), pass_through())
    pairs = generate_pairs(SourceConfig(1e4, 0.0), 10.0, seed=5)

    dark_only = (DetectorConfig(0.0, 1000.0), DetectorConfig(0.0, 1000.0))
    stream = detect(pairs, table, PERFECT, dark_only, 10.0, seed=6)
    for ch in (SIGNAL, IDLER):
        assert abs(stream.count(ch) - 1e4) < 5 * np.sqrt(1e4)

    pairs = generate_pairs(SourceConfig(100.0, 0.0), 100.0, seed=7)
    stream = detect(pairs, table, PERFECT, IDEAL_DETECTORS, 100.0, seed=8, coherence_time=0.0)
    assert stream.count(SIGNAL) == pairs.size
    assert stream.count(IDLER) == pairs.size
    np.testing.assert_array_equal(stream.times(SIGNAL), stream.times(IDLER))
    print("✓ Detection limits test passed\n")


def test_franson_probabilities():
    """Central peak follows the Franson law, side peaks are equal"""
    print("="*60)
    print("TEST 3: Franson probabilities")
    print("="*60)

    phi_s, phi_i = np.pi / 3, 0.0
    table = route_pair(fiber_interferometer(phi_s), fiber_interferometer(phi_i), V_model=1.0)
    joint = table.joint_probabilities()
    assert _at(joint, 0.0) == pytest.approx(franson_prob(phi_s, phi_i, 1.0) / 4)
    assert _at(joint, 25e-9) == pytest.approx(1 / 16)
    assert _at(joint, -25e-9) == pytest.approx(1 / 16)

    partial = route_pair(fiber_interferometer(phi_s), fiber_interferometer(phi_i), V_model=0.8)
    assert _at(partial.joint_probabilities(), 0.0) == pytest.approx(franson_prob(phi_s, phi_i, 0.8) / 4)

    probs, *_ = table.outcome_table()
    assert probs.sum() == pytest.approx(1.0)
    assert np.all(probs >= 0)

    pairs = generate_pairs(SourceConfig(1e3, 0.0), 100.0, seed=9)
    stream = detect(pairs, table, PERFECT, IDEAL_DETECTORS, 100.0, seed=10, coherence_time=0.0)
    hist = histogram(stream.times(SIGNAL), stream.times(IDLER), 1e-9, (-50e-9, 50e-9))

    n, p = pairs.size, _at(joint, 0.0)
    central = window_count(hist, 0.0, 10e-9).count
    print(f"central {central}, expected {n * p:.0f}")
    assert abs(central - n * p) < 4 * np.sqrt(n * p * (1 - p))

    left = window_count(hist, -25e-9, 10e-9).count
    right = window_count(hist, 25e-9, 10e-9).count
    assert abs(left - right) < 4 * np.sqrt(left + right)

    # simulated central peak tracks the Franson law across the signal phase
    pairs = generate_pairs(SourceConfig(1e3, 0.0), 100.0, seed=11)
    n = pairs.size
    for k, phi in enumerate(np.linspace(0, 2 * np.pi, 6, endpoint=False)):
        table = route_pair(fiber_interferometer(phi), fiber_interferometer(0.0), V_model=0.9)
        stream = detect(pairs, table, PERFECT, IDEAL_DETECTORS, 100.0, seed=20 + k, coherence_time=0.0)
        hist = histogram(stream.times(SIGNAL), stream.times(IDLER), 1e-9, (-50e-9, 50e-9))
        p = franson_prob(phi, 0.0, 0.9) / 4
        central = window_count(hist, 0.0, 10e-9).count
        print(f"  phi_s {np.degrees(phi):5.1f} deg: central {central}, expected {n * p:.0f}")
        assert abs(central - n * p) < 4 * np.sqrt(n * p * (1 - p)) + 1
    print("✓ Franson probabilities test passed\n")


def test_analyzers():
    """Constructors, throughput and the delay-matching check"""
    print("="*60)
    print("TEST 4: Analyzers")
    print("="*60)

    budget = HybridBudget(eta_trans=0.36, eta_echo=0.05)
    for outcome in (1, -1):
        assert hybrid_memory(budget, 0.0, outcome).throughput == pytest.approx(0.41)
    with pytest.raises(ValidationError):
        hybrid_memory(budget, 0.0, 0)

    report = EchoReport(eta_trans=0.15, echoes=(
        EchoLine(delay=50e-9, expected_delay=50e-9, efficiency=0.08, phase=0.2),
        EchoLine(delay=75e-9, expected_delay=75e-9, efficiency=0.06, phase=-0.1),
    ))
    readout = partial_readout(report, phase=0.5)
    np.testing.assert_allclose(readout.delays, [0.0, 50e-9, 75e-9])
    np.testing.assert_allclose(np.abs(readout.amplitudes) ** 2, [0.15, 0.08, 0.06])
    assert np.angle(readout.amplitudes[2]) == pytest.approx(0.4)

    with pytest.raises(ValidationError):
        route_pair(partial_readout(), fiber_interferometer(tau=30e-9))
    route_pair(partial_readout(), fiber_interferometer(tau=25e-9))

    with pytest.raises(ValidationError):
        Analyzer("gain", ((0.0, 0.8), (25e-9, 0.8)))

    # the coherent sum exceeds what the idler alone can deliver
    table = route_pair(Analyzer("s", ((0.0, 0.7), (25e-9, 0.7))), fiber_interferometer())
    with pytest.raises(SimulationError):
        table.outcome_table()

    assert channel_from_budget(FILTER_BUDGET_883).transmission == pytest.approx(0.01792)
    assert channel_from_budget(FILTER_BUDGET_1338).transmission == pytest.approx(0.0189)
    print("✓ Analyzers test passed\n")


def test_event_engine():
    """Same seed, same stream, whatever the number of workers"""
    print("="*60)
    print("TEST 5: Event engine")
    print("="*60)

    source = SourceConfig(2e4)
    table = route_pair(memory_echo(0.3, 0.21, 25e-9), pass_through(), V_model=0.9)
    detectors = (DetectorConfig(0.5, 200.0, 350e-12), DetectorConfig(0.5, 20.0, 150e-12))

    a = run_experiment(source, table, PERFECT, detectors, 10.0, seed=42, workers=1, slice_duration=2.0)
    b = run_experiment(source, table, PERFECT, detectors, 10.0, seed=42, workers=1, slice_duration=2.0)
    c = run_experiment(source, table, PERFECT, detectors, 10.0, seed=42, workers=2, slice_duration=2.0)
    d = run_experiment(source, table, PERFECT, detectors, 10.0, seed=43, workers=1, slice_duration=2.0)

    np.testing.assert_array_equal(a.times_ps, b.times_ps)
    np.testing.assert_array_equal(a.channels, b.channels)
    np.testing.assert_array_equal(a.times_ps, c.times_ps)
    assert not np.array_equal(a.times_ps, d.times_ps)
    assert np.all(np.diff(a.times_ps.astype(np.int64)) >= 0)
    assert a.metadata["n_slices"] == 5

    rates = expected_rates(source, table, PERFECT, detectors)
    assert rates.singles_signal == pytest.approx(2e4 * 0.5 * table.signal.throughput + 200.0)
    assert abs(a.count(SIGNAL) - rates.singles_signal * 10) < 5 * np.sqrt(rates.singles_signal * 10)

    empty = run_experiment(source, table, PERFECT, detectors, 0.0, seed=1, workers=1)
    assert len(empty) == 0
    assert empty.metadata["engine"] == "events"
    print("✓ Event engine test passed\n")


def test_tag_round_trip():
    """Packed tag records plus sidecar reload unchanged"""
    print("="*60)
    print("TEST 6: Tag files")
    print("="*60)

    table = route_pair(pass_through(), pass_through())
    stream = run_experiment(SourceConfig(1e4), table, PERFECT,
                            (DetectorConfig(0.3, 100.0, 350e-12), DetectorConfig(0.1, 10.0)),
                            2.0, seed=7, workers=1)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "tags.bin")
        save_tags(path, stream)
        assert os.path.getsize(path) == len(stream) * TAG_DTYPE.itemsize == len(stream) * 9
        loaded = load_tags(path)

        np.testing.assert_array_equal(loaded.times_ps, stream.times_ps)
        np.testing.assert_array_equal(loaded.channels, stream.channels)
        assert loaded.duration == stream.duration
        assert loaded.metadata["seed"] == 7

        with pytest.raises(ValidationError):
            load_tags(os.path.join(tmp, "missing.bin"))
    print("✓ Tag files test passed\n")


def test_count_engine_agreement():
    """Window counts of both engines agree with the expected rates"""
    print("="*60)
    print("TEST 7: Count engine")
    print("="*60)

    source = SourceConfig(5e4)
    table = route_pair(pass_through(), pass_through())
    detectors = (DetectorConfig(0.3, 100.0, 350e-12), DetectorConfig(0.1, 10.0, 150e-12))
    duration, hist_range = 20.0, (-100e-9, 100e-9)

    rates = expected_rates(source, table, PERFECT, detectors)
    expected = rates.window_rate(0.0, 10e-9) * duration

    events, engine = simulate_histogram(source, table, PERFECT, detectors, duration, 1e-9,
                                        hist_range, seed=11, engine="events", workers=1)
    assert engine == "events"
    counts = sample_histogram(rates, duration, 1e-9, hist_range, seed=12)

    for hist in (events, counts):
        n = window_count(hist, 0.0, 10e-9).count
        print(f"central window {n}, expected {expected:.0f}")
        assert abs(n - expected) < 5 * np.sqrt(expected)

    assert rates.g2(0.0, 10e-9) > 2.0
    assert select_engine(rates, 1e9) == "counts"
    assert select_engine(rates, 1.0) == "events"
    with pytest.raises(ValidationError):
        select_engine(rates, 1.0, engine="fast")
    print("✓ Count engine test passed\n")


def test_dark_count_independence():
    """Dark counts on one side do not follow the pair photons on the other"""
    print("="*60)
    print("TEST 8: Dark count independence")
    print("="*60)

    duration = 1000.0
    pairs = generate_pairs(SourceConfig(1e3, 0.0), duration, seed=12)
    detectors = (DetectorConfig(0.0, 1000.0), DetectorConfig(1.0, 0.0))
    stream = detect(pairs, route_pair(pass_through(), pass_through()), PERFECT, detectors,
                    duration, seed=13)
    assert stream.count(IDLER) == pairs.size

    n_bins = 10 ** 6  # 1 ms bins
    darks = np.bincount(stream.times(SIGNAL) // 10 ** 9, minlength=n_bins)[:n_bins]
    photons = np.bincount(stream.times(IDLER) // 10 ** 9, minlength=n_bins)[:n_bins]
    corr = np.corrcoef(darks, photons)[0, 1]
    print(f"correlation of 1 ms counts: {corr:.2e}")
    assert abs(corr) < 0.01
    print("✓ Dark count independence test passed\n")


def run_all_tests():
    """Run all tests"""
    print("\n" + "="*60)
    print("MONTE CARLO TEST SUITE")
    print("="*60 + "\n")

    tests = [
        test_pair_generation,
        test_detection_limits,
        test_franson_probabilities,
        test_analyzers,
        test_event_engine,
        test_tag_round_trip,
        test_count_engine_agreement,
        test_dark_count_independence,
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
