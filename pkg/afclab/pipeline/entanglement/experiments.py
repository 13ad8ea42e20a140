"""
Scenario runners

A Scenario (YAML file, every quantity written with its unit) fixes the source,
channels, detectors, memory and analysis windows. The runners compose the
Monte Carlo and analytic layers:

- scan_pump_power   g2 versus pump power, without memory or with a 25 ns AFC
- scan_storage_time g2 versus storage time, efficiencies from an EfficiencyTable
- fringe_scan       Franson fringes through the double-readout memory
- bell_test         16-run CHSH test, partial-readout or hybrid variant
- calibrate_rate    pair rate per pump power matching the no-AFC g2

Integration "equivalent to two hours" is mapped to a mean number of central
coincidences per run (coincidence rate x equivalent time).
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from scipy.optimize import brentq

from .afc import (
    AFC_BANDWIDTH,
    EchoLine,
    EchoReport,
    FrequencyGrid,
    balance_double_readout,
    gaussian_pulse,
)
from .coincidence import (
    ChshResult,
    CorrelatorEstimate,
    DelayHistogram,
    VisibilityFit,
    accidental_offsets,
    chsh_S,
    correlator,
    fit_visibility,
    g2si,
    save_histogram_csv,
    save_summary_json,
    summary_document,
    window_count,
)
from .config import get_settings
from .errors import ScenarioError, SimulationError, ValidationError
from .montecarlo import (
    DETECTOR_883,
    DETECTOR_1338,
    DUTY_FACTOR,
    FILTER_BUDGET_883,
    FILTER_BUDGET_1338,
    PHOTON_COHERENCE_TIME,
    Analyzer,
    ChannelConfig,
    DetectorConfig,
    SourceConfig,
    channel_from_budget,
    expected_rates,
    fiber_interferometer,
    hybrid_memory,
    memory_echo,
    partial_readout,
    pass_through,
    route_pair,
    simulate_histogram,
)
from .protocol import (
    HybridBudget,
    franson_prob,
    hybrid_predicted_S,
    hybrid_theta,
    partial_readout_predicted_S,
    partial_readout_settings,
)
from .units import parse_quantity
from .utils import banner, hashcode_sha256, to_plain

logger = logging.getLogger(__name__)

KINDS = ("pump_scan", "storage_scan", "fringes", "bell")
MEMORY_MODES = ("none", "afc", "double_readout", "hybrid")
VARIANTS = ("partial_readout", "hybrid")
PROVENANCES = ("measured", "interpolated", "calibrated")
SCENARIO_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "../../../data/scenarios"))

FILTER_BUDGETS = {"883": FILTER_BUDGET_883, "1338": FILTER_BUDGET_1338}


@dataclass(frozen=True)
class EfficiencyEntry:
    storage_time: float
    efficiency: float
    provenance: str


class EfficiencyTable:
    """
    Storage time -> echo efficiency, each entry tagged with its provenance.
    Efficiencies lie in (0, 1] and do not increase with storage time.
    """

    def __init__(self, entries: Sequence[EfficiencyEntry]):
        entries = sorted(entries, key=lambda e: e.storage_time)
        for e in entries:
            if not 0.0 < e.efficiency <= 1.0:
                raise ValidationError(f"efficiency {e.efficiency} at {e.storage_time} outside (0, 1]")
            if e.provenance not in PROVENANCES:
                raise ValidationError(f"unknown provenance {e.provenance!r}")
        eff = np.array([e.efficiency for e in entries])
        if np.any(np.diff(eff) > 1e-12):
            raise ValidationError("efficiency must be non-increasing in storage time")
        self.entries = tuple(entries)

    @classmethod
    def default(cls) -> "EfficiencyTable":
        rows = [(25e-9, 0.21, "measured"), (50e-9, 0.17, "interpolated"),
                (75e-9, 0.145, "interpolated"), (100e-9, 0.12, "measured"),
                (150e-9, 0.07, "interpolated"), (200e-9, 0.04, "interpolated")]
        return cls([EfficiencyEntry(t, e, p) for t, e, p in rows])

    @property
    def storage_times(self) -> List[float]:
        return [e.storage_time for e in self.entries]

    def lookup(self, storage_time: float) -> EfficiencyEntry:
        for e in self.entries:
            if abs(e.storage_time - storage_time) < 1e-12:
                return e
        t = np.array(self.storage_times)
        if not t[0] <= storage_time <= t[-1]:
            raise ValidationError(f"storage time {storage_time:.3e} s outside the table")
        eff = float(np.interp(storage_time, t, [e.efficiency for e in self.entries]))
        return EfficiencyEntry(storage_time, eff, "interpolated")

    def with_entry(self, storage_time: float, efficiency: float,
                   provenance: str = "calibrated") -> "EfficiencyTable":
        kept = []
        for e in self.entries:
            if abs(e.storage_time - storage_time) < 1e-12:
                if e.provenance == "measured":
                    raise ValidationError(f"entry at {storage_time:.3e} s is a measured value")
                continue
            kept.append(e)
        return EfficiencyTable(kept + [EfficiencyEntry(storage_time, efficiency, provenance)])

    def to_rows(self):
        return [(e.storage_time, e.efficiency, e.provenance) for e in self.entries]


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    seed: int = 0
    rate_per_W: float = 5e4
    power: float = 3e-3
    coherence_time: float = PHOTON_COHERENCE_TIME
    V_model: float = 0.93
    signal_channel: ChannelConfig = channel_from_budget(FILTER_BUDGET_883)
    idler_channel: ChannelConfig = channel_from_budget(FILTER_BUDGET_1338)
    signal_detector: DetectorConfig = DETECTOR_883
    idler_detector: DetectorConfig = DETECTOR_1338
    memory_mode: str = "none"
    storage_time: float = 25e-9
    eta_echo: float = 0.21
    eta_trans: float = 0.30
    # None: echoes of a balanced double-readout comb
    readout_efficiencies: Optional[Tuple[float, float]] = None
    readout_delays: Tuple[float, float] = (50e-9, 75e-9)
    comb_depth: float = 4.0
    comb_finesse: float = 3.0
    comb_bandwidth: float = AFC_BANDWIDTH
    tau: float = 25e-9
    hybrid_eta_trans: float = 0.36
    hybrid_eta_echo: float = 0.05
    hybrid_eta_abs: float = 0.5
    integration_time: float = 1e6
    duty_factor: float = DUTY_FACTOR
    window: float = 10e-9
    bin_width: float = 1e-9
    hist_range: Tuple[float, float] = (-500e-9, 500e-9)
    n_accidental: int = 20
    powers: Tuple[float, ...] = (0.3e-3, 1e-3, 3e-3, 10e-3, 30e-3, 100e-3, 230e-3, 1.0, 3.0)
    storage_times: Tuple[float, ...] = (25e-9, 50e-9, 75e-9, 100e-9, 150e-9, 200e-9)
    phase_points: int = 9
    idler_phases: Tuple[float, ...] = (0.0, np.deg2rad(75.0))
    variant: str = "partial_readout"
    coincidence_rate: float = 3.0 / 60.0
    equivalent_time: float = 7200.0
    counts_per_run: Optional[float] = None
    engine: str = "auto"
    noiseless: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"scenario kind {self.kind!r} not in {KINDS}")
        if self.memory_mode not in MEMORY_MODES:
            raise ScenarioError(f"memory mode {self.memory_mode!r} not in {MEMORY_MODES}")
        if self.variant not in VARIANTS:
            raise ScenarioError(f"variant {self.variant!r} not in {VARIANTS}")
        if self.integration_time <= 0:
            raise ScenarioError("integration_time must be > 0")
        if not 0.0 < self.duty_factor <= 1.0:
            raise ScenarioError("duty_factor must be in (0, 1]")
        if not 0.0 <= self.V_model <= 1.0:
            raise ScenarioError("V_model must be in [0, 1]")

    @classmethod
    def from_yaml(cls, full_path: str) -> "Scenario":
        try:
            with open(full_path) as f:
                doc = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ScenarioError(f"cannot read scenario {full_path}: {e}") from e
        if not isinstance(doc, dict):
            raise ScenarioError(f"scenario {full_path} is not a mapping")
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: Dict) -> "Scenario":
        kwargs = {"name": doc.get("name", "scenario"), "kind": doc.get("kind", "pump_scan")}
        for key in ("seed", "n_accidental", "phase_points"):
            if key in doc:
                kwargs[key] = int(doc[key])
        for key in ("engine", "variant"):
            if key in doc:
                kwargs[key] = str(doc[key])
        if "noiseless" in doc:
            kwargs["noiseless"] = bool(doc["noiseless"])

        def q(section, key, dim, target=None):
            block = doc.get(section) or {}
            if key in block:
                kwargs[target or key] = parse_quantity(block[key], dim, key=f"{section}.{key}")

        q("source", "rate_per_mW", "rate_per_W", "rate_per_W")
        q("source", "power", "W")
        q("source", "coherence_time", "s")
        q("source", "V_model", "1")

        for side in ("signal", "idler"):
            ch = (doc.get("channels") or {}).get(side)
            if ch:
                kwargs[f"{side}_channel"] = _channel(ch, side)
            det = (doc.get("detectors") or {}).get(side)
            if det:
                kwargs[f"{side}_detector"] = DetectorConfig(
                    efficiency=parse_quantity(det["efficiency"], "1", key=f"{side}.efficiency"),
                    dark_rate=parse_quantity(det["dark_rate"], "rate", key=f"{side}.dark_rate"),
                    jitter_sigma=parse_quantity(det.get("jitter", "0 ps"), "s", key=f"{side}.jitter"),
                )

        memory = doc.get("memory") or {}
        if "mode" in memory:
            kwargs["memory_mode"] = str(memory["mode"])
        q("memory", "storage_time", "s")
        q("memory", "eta_echo", "1")
        q("memory", "eta_trans", "1")
        q("memory", "tau", "s")
        q("memory", "hybrid_eta_trans", "1")
        q("memory", "hybrid_eta_echo", "1")
        q("memory", "hybrid_eta_abs", "1")
        if "readout_efficiencies" in memory:
            kwargs["readout_efficiencies"] = _pair(memory["readout_efficiencies"], "1", "readout_efficiencies")
        if "readout_delays" in memory:
            kwargs["readout_delays"] = _pair(memory["readout_delays"], "s", "readout_delays")
        comb = memory.get("comb") or {}
        for key, dim in (("depth", "1"), ("finesse", "1"), ("bandwidth", "Hz")):
            if key in comb:
                kwargs[f"comb_{key}"] = parse_quantity(comb[key], dim, key=f"memory.comb.{key}")

        q("analysis", "window", "s")
        q("analysis", "bin_width", "s")
        analysis = doc.get("analysis") or {}
        if "range" in analysis:
            kwargs["hist_range"] = _pair(analysis["range"], "s", "analysis.range")
        if "accidental_windows" in analysis:
            kwargs["n_accidental"] = int(analysis["accidental_windows"])

        q("integration", "time", "s", "integration_time")
        q("integration", "duty_factor", "1")
        q("integration", "coincidences_per_min", "rate", "coincidence_rate")
        q("integration", "equivalent_to", "s", "equivalent_time")
        integration = doc.get("integration") or {}
        if "counts_per_run" in integration:
            kwargs["counts_per_run"] = float(integration["counts_per_run"])

        scan = doc.get("scan") or {}
        for key, dim in (("powers", "W"), ("storage_times", "s"), ("idler_phases", "rad")):
            if key in scan:
                kwargs[key] = tuple(parse_quantity(v, dim, key=f"scan.{key}") for v in scan[key])
        if "phase_points" in scan:
            kwargs["phase_points"] = int(scan["phase_points"])

        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise ScenarioError(str(e)) from e

    def to_dict(self) -> Dict:
        return to_plain(asdict(self))

    @property
    def source(self) -> SourceConfig:
        return SourceConfig.from_pump_power(self.power, self.rate_per_W, self.coherence_time)

    def source_at(self, power: float) -> SourceConfig:
        return SourceConfig.from_pump_power(power, self.rate_per_W, self.coherence_time)

    @property
    def channels(self) -> Tuple[ChannelConfig, ChannelConfig]:
        return self.signal_channel, self.idler_channel

    @property
    def detectors(self) -> Tuple[DetectorConfig, DetectorConfig]:
        return self.signal_detector, self.idler_detector

    @property
    def effective_time(self) -> float:
        """Integration time with the preparation/measurement duty cycle applied"""
        return self.integration_time * self.duty_factor

    @property
    def target_counts(self) -> float:
        if self.counts_per_run is not None:
            return self.counts_per_run
        return self.coincidence_rate * self.equivalent_time

    @property
    def budget(self) -> HybridBudget:
        return HybridBudget.from_measured(self.hybrid_eta_trans, self.hybrid_eta_echo,
                                          eta_abs=self.hybrid_eta_abs)


def _channel(block: Dict, side: str) -> ChannelConfig:
    delay = parse_quantity(block.get("delay", "0 ns"), "s", key=f"{side}.delay")
    if "filter_budget" in block:
        name = str(block["filter_budget"])
        if name not in FILTER_BUDGETS:
            raise ScenarioError(f"unknown filter budget {name!r}, use one of {list(FILTER_BUDGETS)}")
        return channel_from_budget(FILTER_BUDGETS[name], delay=delay)
    return ChannelConfig(parse_quantity(block["transmission"], "1", key=f"{side}.transmission"), delay)


def _pair(values, dim: str, key: str) -> Tuple[float, float]:
    if not isinstance(values, (list, tuple)) or len(values) != 2:
        raise ScenarioError(f"{key} must be a list of two quantities")
    return tuple(parse_quantity(v, dim, key=key) for v in values)


def scenario_hash(scenario: Scenario) -> str:
    text = json.dumps(scenario.to_dict(), sort_keys=True)
    return hashcode_sha256(text.encode("utf-8"))


def load_default_scenario(name: str) -> Scenario:
    return Scenario.from_yaml(os.path.join(SCENARIO_DIR, f"{name}.yaml"))


def _seeds(seed: int, n: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def equivalent_integration(target_counts: float, window_rate: float) -> float:
    """Integration time giving target_counts mean coincidences at window_rate"""
    if window_rate <= 0:
        raise SimulationError("central window rate is zero; nothing to integrate")
    return target_counts / window_rate


# g2 scans

@dataclass
class G2Point:
    power: float
    storage_time: Optional[float]
    efficiency: Optional[float]
    provenance: Optional[str]
    g2: float
    sigma: float
    expected_g2: float
    n_peak: int
    peak_delay: float
    engine: str
    lower_bound: bool = False


@dataclass
class ScanResult:
    name: str
    points: List[G2Point]
    histograms: Dict[str, DelayHistogram] = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {"name": self.name, "points": [asdict(p) for p in self.points]}


def _signal_for_storage(scenario: Scenario, storage_time: Optional[float],
                        efficiency: Optional[float]) -> Analyzer:
    if storage_time is None:
        return pass_through()
    return memory_echo(scenario.eta_trans, efficiency, storage_time)


def _measure_g2(scenario: Scenario, source: SourceConfig, signal: Analyzer,
                peak: float, seed: int, workers: Optional[int]):
    table = route_pair(signal, pass_through(), V_model=scenario.V_model)
    rates = expected_rates(source, table, scenario.channels, scenario.detectors)
    hist, engine = simulate_histogram(source, table, scenario.channels, scenario.detectors,
                                      scenario.effective_time, scenario.bin_width,
                                      scenario.hist_range, seed=seed, engine=scenario.engine,
                                      workers=workers)
    peaks = sorted({0.0, peak})
    offsets = accidental_offsets(peaks, scenario.window, scenario.n_accidental, scenario.hist_range)
    est = g2si(hist, peak, offsets, scenario.window)
    return est, rates.g2(peak, scenario.window), hist, engine


def scan_pump_power(scenario: Scenario, powers: Optional[Sequence[float]] = None,
                    memory: str = "none", table: Optional[EfficiencyTable] = None,
                    workers: Optional[int] = None) -> ScanResult:
    """g2 at each pump power, without memory or with a 25 ns AFC echo"""
    if memory not in ("none", "afc"):
        raise ValidationError(f"memory must be 'none' or 'afc', got {memory!r}")
    powers = list(powers or scenario.powers)
    banner(f"pump-power scan: {len(powers)} points, memory={memory}")

    storage, efficiency, provenance = None, None, None
    if memory == "afc":
        entry = (table or EfficiencyTable.default()).lookup(scenario.storage_time)
        storage, efficiency, provenance = entry.storage_time, entry.efficiency, entry.provenance
    signal = _signal_for_storage(scenario, storage, efficiency)
    peak = storage or 0.0

    points, hists = [], {}
    for power, seed in zip(powers, _seeds(scenario.seed, len(powers))):
        est, expected, hist, engine = _measure_g2(scenario, scenario.source_at(power), signal,
                                                  peak, seed, workers)
        logger.info(f"P={power * 1e3:.3g} mW: g2={est.g2:.2f} +- {est.sigma:.2f} "
                    f"(expected {expected:.2f}, {engine})")
        points.append(G2Point(power=power, storage_time=storage, efficiency=efficiency,
                              provenance=provenance, g2=est.g2, sigma=est.sigma,
                              expected_g2=expected, n_peak=est.n_peak,
                              peak_delay=hist.peak_delay(smooth=scenario.window), engine=engine,
                              lower_bound=est.lower_bound))
        hists[f"{power * 1e3:.4g}mW"] = hist
    return ScanResult(name=f"{scenario.name}_pump_{memory}", points=points, histograms=hists)


def scan_storage_time(scenario: Scenario, times: Optional[Sequence[float]] = None,
                      table: Optional[EfficiencyTable] = None,
                      workers: Optional[int] = None) -> ScanResult:
    """g2 at the echo delay for each storage time, at the scenario's pump power"""
    table = table or EfficiencyTable.default()
    times = list(times or scenario.storage_times)
    banner(f"storage-time scan: {len(times)} points")

    points, hists = [], {}
    for t_s, seed in zip(times, _seeds(scenario.seed, len(times))):
        entry = table.lookup(t_s)
        signal = _signal_for_storage(scenario, t_s, entry.efficiency)
        est, expected, hist, engine = _measure_g2(scenario, scenario.source, signal, t_s,
                                                  seed, workers)
        peak_delay = hist.peak_delay(min_delay=scenario.window, smooth=scenario.window)
        logger.info(f"t_s={t_s * 1e9:.0f} ns ({entry.provenance} eff {entry.efficiency:.3f}): "
                    f"g2={est.g2:.2f} +- {est.sigma:.2f}, peak at {peak_delay * 1e9:.1f} ns")
        points.append(G2Point(power=scenario.power, storage_time=t_s, efficiency=entry.efficiency,
                              provenance=entry.provenance, g2=est.g2, sigma=est.sigma,
                              expected_g2=expected, n_peak=est.n_peak, peak_delay=peak_delay,
                              engine=engine, lower_bound=est.lower_bound))
        hists[f"{t_s * 1e9:.0f}ns"] = hist
    return ScanResult(name=f"{scenario.name}_storage", points=points, histograms=hists)


@dataclass
class RateCalibration:
    rate_per_W: float
    power: float
    target_g2: float
    g2_no_afc: float
    g2_afc: float
    afc_efficiency: float
    within_tolerance: bool

    def to_dict(self):
        return asdict(self)


def _expected_g2(scenario: Scenario, rate_per_W: float, power: float,
                 signal: Analyzer, peak: float) -> float:
    source = SourceConfig.from_pump_power(power, rate_per_W, scenario.coherence_time)
    table = route_pair(signal, pass_through(), V_model=scenario.V_model)
    return expected_rates(source, table, scenario.channels, scenario.detectors).g2(peak, scenario.window)


def calibrate_rate(scenario: Scenario, target_g2: float = 115.0, power: float = 3e-3,
                   afc_target: float = 30.0, tolerance: float = 0.3,
                   table: Optional[EfficiencyTable] = None) -> RateCalibration:
    """
    Pair rate per watt putting the expected no-AFC g2 at target_g2, on the
    dark-count-limited side of the g2 maximum; reports the 25 ns AFC g2 at
    the same rate
    """
    eff_s = scenario.signal_channel.transmission * scenario.signal_detector.efficiency
    eff_i = scenario.idler_channel.transmission * scenario.idler_detector.efficiency
    dark = scenario.signal_detector.dark_rate * scenario.idler_detector.dark_rate
    if eff_s <= 0 or eff_i <= 0 or dark <= 0:
        raise ValidationError("calibration needs non-zero efficiencies and dark rates")
    # g2 maximum sits near R = sqrt(dark_s dark_i / (eff_s eff_i))
    r_peak = np.sqrt(dark / (eff_s * eff_i)) / power

    f = lambda r: _expected_g2(scenario, r, power, pass_through(), 0.0) - target_g2
    if f(r_peak) <= 0:
        raise SimulationError(f"g2 never reaches {target_g2} with these efficiencies")
    rate = brentq(f, r_peak * 1e-9, r_peak, xtol=1e-9 * r_peak)

    entry = (table or EfficiencyTable.default()).lookup(scenario.storage_time)
    g2_afc = _expected_g2(scenario, rate, power,
                          memory_echo(scenario.eta_trans, entry.efficiency, entry.storage_time),
                          entry.storage_time)
    ok = abs(g2_afc - afc_target) <= tolerance * afc_target
    logger.info(f"calibrated rate {rate * 1e-3:.2f} pairs/s/mW: g2(no AFC)={target_g2:.1f}, "
                f"g2(AFC {entry.storage_time * 1e9:.0f} ns)={g2_afc:.1f}")
    return RateCalibration(rate_per_W=float(rate), power=power, target_g2=target_g2,
                           g2_no_afc=float(f(rate) + target_g2), g2_afc=float(g2_afc),
                           afc_efficiency=entry.efficiency, within_tolerance=bool(ok))


# Franson fringes

@dataclass
class FringeData:
    idler_phase: float
    phases: np.ndarray
    counts: np.ndarray
    fit: VisibilityFit


@dataclass
class FringeScan:
    datasets: List[FringeData]
    phase_difference: float
    phase_difference_sigma: float
    B_over_S: float
    V_expected: float
    integration_time: float
    noiseless: bool

    def to_dict(self):
        return {
            "noiseless": self.noiseless,
            "integration_time_s": self.integration_time,
            "B_over_S": self.B_over_S,
            "V_expected": self.V_expected,
            "phase_difference": self.phase_difference,
            "phase_difference_sigma": self.phase_difference_sigma,
            "datasets": [{"idler_phase": d.idler_phase, "phases": d.phases, "counts": d.counts,
                          "V": d.fit.V, "V_sigma": d.fit.V_sigma,
                          "phase_offset": d.fit.phase_offset, "phase_sigma": d.fit.phase_sigma,
                          "baseline": d.fit.baseline} for d in self.datasets],
        }


@lru_cache(maxsize=8)
def _balanced_readout(t_short: float, t_long: float, depth: float, finesse: float,
                      bandwidth: float, coherence_time: float, n_points: int,
                      span: float) -> Tuple[float, EchoReport]:
    grid = FrequencyGrid(n_points=n_points, span=span)
    pulse = gaussian_pulse(grid, fwhm=coherence_time)
    weight, _, report = balance_double_readout(pulse, grid, t_short=t_short, t_long=t_long,
                                               depth=depth, finesse=finesse, bandwidth=bandwidth)
    return weight, report


def readout_report(scenario: Scenario) -> EchoReport:
    """
    Echo efficiencies and phases of the double-readout memory. Built from a
    comb balanced for equal echoes unless the scenario fixes the efficiencies.
    """
    t_short, t_long = scenario.readout_delays
    if scenario.readout_efficiencies is not None:
        e_short, e_long = scenario.readout_efficiencies
        return EchoReport(eta_trans=scenario.eta_trans, echoes=(
            EchoLine(delay=t_short, expected_delay=t_short, efficiency=e_short, phase=0.0),
            EchoLine(delay=t_long, expected_delay=t_long, efficiency=e_long, phase=0.0)))

    settings = get_settings()
    weight, report = _balanced_readout(t_short, t_long, scenario.comb_depth, scenario.comb_finesse,
                                       scenario.comb_bandwidth, scenario.coherence_time,
                                       settings.grid_points, settings.grid_span)
    logger.info(f"double-readout comb: weight {weight:.4f}, echoes "
                f"{report.echoes[0].efficiency:.4f} / {report.echoes[1].efficiency:.4f}, "
                f"transmission {report.eta_trans:.4f}")
    return report


def _signal_readout(report: EchoReport, phase: float):
    """Partial-readout analyzer with phase measured from the comb's own echo phase offset"""
    short, long = report.echoes
    return partial_readout(report, phase=phase - (long.phase - short.phase))


def _readout_table(scenario: Scenario, report: EchoReport, phi_s: float, phi_i: float):
    return route_pair(_signal_readout(report, phi_s), fiber_interferometer(phi_i, scenario.tau),
                      V_model=scenario.V_model)


def _narrow_range(scenario: Scenario, centers: Sequence[float]) -> Tuple[float, float]:
    lo = min(centers) - 5 * scenario.window
    hi = max(centers) + 5 * scenario.window
    lo = np.floor(lo / scenario.bin_width) * scenario.bin_width
    hi = np.ceil(hi / scenario.bin_width) * scenario.bin_width
    return float(lo), float(hi)


def fringe_scan(scenario: Scenario, phases: Optional[Sequence[float]] = None,
                idler_phases: Optional[Sequence[float]] = None, noiseless: Optional[bool] = None,
                workers: Optional[int] = None) -> FringeScan:
    """
    Central-peak coincidences against the memory phase, one scan per idler
    phase, each fitted with fit_visibility
    """
    phases = np.asarray(phases if phases is not None else
                        np.linspace(0, 2 * np.pi, scenario.phase_points, endpoint=False))
    idler_phases = list(idler_phases if idler_phases is not None else scenario.idler_phases)
    noiseless = scenario.noiseless if noiseless is None else noiseless
    center = scenario.readout_delays[0]
    target = scenario.target_counts
    banner(f"fringe scan: {len(phases)} phases x {len(idler_phases)} idler settings")
    report = readout_report(scenario)

    def rates_for(phi_s, phi_i):
        table = _readout_table(scenario, report, phi_s, phi_i)
        return table, expected_rates(scenario.source, table, scenario.channels, scenario.detectors)

    mean_rate = np.mean([rates_for(p, idler_phases[0])[1].window_rate(center, scenario.window)
                         for p in phases])
    T = equivalent_integration(target, mean_rate)
    r0 = rates_for(0.0, idler_phases[0])[1]
    true_avg = np.mean([rates_for(p, idler_phases[0])[1].true_rate(center, scenario.window)
                        for p in phases])
    B_over_S = r0.accidental_density * scenario.window / true_avg
    hi = rates_for(0.0, 0.0)[1].window_rate(center, scenario.window)
    lo = rates_for(np.pi, 0.0)[1].window_rate(center, scenario.window)
    V_expected = (hi - lo) / (hi + lo)

    window_range = _narrow_range(scenario, [center])
    datasets = []
    for phi_i, seed in zip(idler_phases, _seeds(scenario.seed, len(idler_phases))):
        if noiseless:
            counts = np.array([2 * target * franson_prob(p, phi_i, scenario.V_model) for p in phases])
        else:
            counts = []
            for phi_s, s in zip(phases, _seeds(seed, len(phases))):
                table, _ = rates_for(phi_s, phi_i)
                hist, _ = simulate_histogram(scenario.source, table, scenario.channels,
                                             scenario.detectors, T, scenario.bin_width,
                                             window_range, seed=s, engine=scenario.engine,
                                             workers=workers)
                counts.append(window_count(hist, center, scenario.window).count)
            counts = np.array(counts)
        fit = fit_visibility(phases, counts)
        logger.info(f"idler phase {np.rad2deg(phi_i):.1f} deg: V={fit.V:.3f} +- {fit.V_sigma:.3f}, "
                    f"offset {np.rad2deg(fit.phase_offset):.1f} deg")
        datasets.append(FringeData(idler_phase=phi_i, phases=phases, counts=counts, fit=fit))

    diff, diff_sigma = 0.0, 0.0
    if len(datasets) >= 2:
        a, b = datasets[0].fit, datasets[1].fit
        diff = float(np.angle(np.exp(1j * (b.phase_offset - a.phase_offset))))
        diff_sigma = float(np.hypot(a.phase_sigma, b.phase_sigma))

    return FringeScan(datasets=datasets, phase_difference=diff, phase_difference_sigma=diff_sigma,
                      B_over_S=float(B_over_S), V_expected=float(V_expected),
                      integration_time=float(T), noiseless=noiseless)


# Bell tests

@dataclass
class RunCount:
    label: str
    signal_setting: float
    idler_setting: float
    outcome: int
    window_center: float
    count: int
    expected: float


@dataclass
class BellResult:
    variant: str
    runs: List[RunCount]
    correlators: List[CorrelatorEstimate]
    chsh: ChshResult
    predicted_S: float
    ideal_S: float
    integration_time: float
    engine: str

    def to_dict(self):
        return {
            "variant": self.variant,
            "S": self.chsh.S,
            "S_sigma": self.chsh.sigma,
            "unphysical": self.chsh.unphysical,
            "predicted_S": self.predicted_S,
            "ideal_S": self.ideal_S,
            "integration_time_s": self.integration_time,
            "engine": self.engine,
            "correlators": [{"E": c.E, "sigma": c.sigma, "counts": list(c.counts)}
                            for c in self.correlators],
            "runs": [asdict(r) for r in self.runs],
        }


@dataclass(frozen=True)
class _RunSpec:
    label: str
    signal: Analyzer
    idler: Analyzer
    signal_setting: float
    idler_setting: float
    outcome: int
    center: float


def ideal_scenario(scenario: Scenario, post_selected: float = 1e5) -> Scenario:
    """
    Lossless, noiseless version: unit efficiencies, no dark counts or jitter,
    V_model = 1, 1000 pairs/s, post_selected central coincidences in total
    """
    return replace(
        scenario, power=1.0, rate_per_W=1e3, V_model=1.0,
        signal_channel=ChannelConfig(1.0), idler_channel=ChannelConfig(1.0),
        signal_detector=DetectorConfig(1.0, 0.0, 0.0), idler_detector=DetectorConfig(1.0, 0.0, 0.0),
        readout_efficiencies=(0.25, 0.25), eta_trans=0.0,
        counts_per_run=post_selected / 16.0, noiseless=True,
    )


def _partial_readout_runs(scenario: Scenario) -> List[List[_RunSpec]]:
    (a1, a2), (b1, b2) = partial_readout_settings()
    center = scenario.readout_delays[0]
    report = readout_report(scenario)
    groups = []
    for name, a, b in (("X1Y1", a1, b1), ("X2Y1", a2, b1), ("X1Y2", a1, b2), ("X2Y2", a2, b2)):
        runs = []
        for label, da, db, outcome in (("++", 0, 0, 1), ("+-", 0, np.pi, -1),
                                       ("-+", np.pi, 0, -1), ("--", np.pi, np.pi, 1)):
            signal = _signal_readout(report, a + da)
            runs.append(_RunSpec(f"{name}{label}", signal, fiber_interferometer(b + db, scenario.tau),
                                 a + da, b + db, outcome, center))
        groups.append(runs)
    return groups


def _hybrid_runs(scenario: Scenario) -> List[List[_RunSpec]]:
    budget = scenario.budget
    tau = scenario.tau
    groups = []
    # Y = sigma_z: transmitted (L) arrives at delay 0, echo (E) at tau
    for name, phi_s in (("X1Z", 0.0), ("X2Z", np.pi)):
        runs = []
        for label, outcome, center, sign in (("++", 1, 0.0, 1), ("+-", 1, tau, -1),
                                             ("-+", -1, 0.0, -1), ("--", -1, tau, 1)):
            runs.append(_RunSpec(f"{name}{label}", hybrid_memory(budget, phi_s, outcome, tau),
                                 pass_through(), phi_s, 0.0, sign, center))
        groups.append(runs)
    # Y = sigma_x: idler interferometer at 0 / pi, central window
    for name, phi_s in (("X1X", 0.0), ("X2X", np.pi)):
        runs = []
        for label, outcome, phi_i, sign in (("++", 1, 0.0, 1), ("+-", 1, np.pi, -1),
                                            ("-+", -1, 0.0, -1), ("--", -1, np.pi, 1)):
            runs.append(_RunSpec(f"{name}{label}", hybrid_memory(budget, phi_s, outcome, tau),
                                 fiber_interferometer(phi_i, tau), phi_s, phi_i, sign, 0.0))
        groups.append(runs)
    return groups


def _expected_E(n: Sequence[float]) -> float:
    n_pp, n_pm, n_mp, n_mm = n
    return (n_pp + n_mm - n_pm - n_mp) / (n_pp + n_pm + n_mp + n_mm)


def bell_test(scenario: Scenario, variant: Optional[str] = None, noiseless: Optional[bool] = None,
              workers: Optional[int] = None) -> BellResult:
    """
    Four correlators from four runs each, one detector per side: the
    second outcome of each analyzer is reached by a pi phase shift (or by the
    other hybrid projection). S uses signs (+, +, +, -).
    """
    variant = variant or scenario.variant
    if variant not in VARIANTS:
        raise ValidationError(f"variant {variant!r} not in {VARIANTS}")
    noiseless = scenario.noiseless if noiseless is None else noiseless
    if noiseless:
        scenario = ideal_scenario(scenario)
    banner(f"Bell test ({variant}{', noiseless' if noiseless else ''})")

    if variant == "partial_readout":
        groups = _partial_readout_runs(scenario)
        ideal_S = partial_readout_predicted_S(scenario.V_model)
    else:
        groups = _hybrid_runs(scenario)
        ideal_S = hybrid_predicted_S(hybrid_theta(scenario.budget))

    specs = [r for g in groups for r in g]
    tables = [route_pair(r.signal, r.idler, V_model=scenario.V_model) for r in specs]
    rates = [expected_rates(scenario.source, t, scenario.channels, scenario.detectors) for t in tables]
    window_rates = [rt.window_rate(r.center, scenario.window) for r, rt in zip(specs, rates)]
    T = equivalent_integration(scenario.target_counts, float(np.mean(window_rates)))
    window_range = _narrow_range(scenario, [0.0] + [r.center for r in specs])

    runs, engines = [], set()
    for spec, table, w_rate, seed in zip(specs, tables, window_rates, _seeds(scenario.seed, len(specs))):
        hist, engine = simulate_histogram(scenario.source, table, scenario.channels,
                                          scenario.detectors, T, scenario.bin_width, window_range,
                                          seed=seed, engine=scenario.engine, workers=workers)
        engines.add(engine)
        n = window_count(hist, spec.center, scenario.window).count
        runs.append(RunCount(label=spec.label, signal_setting=spec.signal_setting,
                             idler_setting=spec.idler_setting, outcome=spec.outcome,
                             window_center=spec.center, count=n, expected=w_rate * T))

    correlators, expected_E = [], []
    for k in range(4):
        block = runs[4 * k:4 * k + 4]
        correlators.append(correlator([r.count for r in block]))
        expected_E.append(_expected_E([r.expected for r in block]))
    result = chsh_S(correlators)
    predicted = float(expected_E[0] + expected_E[1] + expected_E[2] - expected_E[3])

    logger.info(f"S = {result.S:.3f} +- {result.sigma:.3f} (predicted {predicted:.3f}, "
                f"ideal {ideal_S:.3f}, {result.violation_sigmas:.1f} sigma above 2)")
    return BellResult(variant=variant, runs=runs, correlators=correlators, chsh=result,
                      predicted_S=predicted, ideal_S=float(ideal_S), integration_time=float(T),
                      engine="+".join(sorted(engines)))


# Reports

def _save_rows(full_path: str, columns: Sequence[str], rows):
    np.savetxt(full_path, np.asarray(rows, dtype=float), delimiter=",",
               header=",".join(columns), fmt="%.10g")


def check_finite(summary) -> None:
    """Raise SimulationError if any number in a report is NaN"""
    def walk(obj, path):
        if isinstance(obj, dict):
            for k, v in obj.items():
                walk(v, f"{path}.{k}")
        elif isinstance(obj, (list, tuple)):
            for k, v in enumerate(obj):
                walk(v, f"{path}[{k}]")
        elif isinstance(obj, float) and np.isnan(obj):
            raise SimulationError(f"NaN in report at {path}")
    walk(to_plain(summary), "summary")


def write_scan(result: ScanResult, output_dir: str) -> List[str]:
    files = []
    path = os.path.join(output_dir, f"{result.name}.csv")
    _save_rows(path, ["power_W", "storage_time_s", "efficiency", "g2", "sigma", "expected_g2",
                      "peak_delay_s"],
               [(p.power, p.storage_time or 0.0, p.efficiency or 0.0, p.g2, p.sigma,
                 p.expected_g2, p.peak_delay) for p in result.points])
    files.append(path)
    for key, hist in result.histograms.items():
        h_path = os.path.join(output_dir, f"{result.name}_hist_{key}.csv")
        save_histogram_csv(h_path, hist)
        files.append(h_path)
    return files


def write_fringes(result: FringeScan, output_dir: str) -> List[str]:
    path = os.path.join(output_dir, "fringes.csv")
    rows = [(d.idler_phase, p, c) for d in result.datasets for p, c in zip(d.phases, d.counts)]
    _save_rows(path, ["idler_phase_rad", "signal_phase_rad", "counts"], rows)
    return [path]


def write_bell(result: BellResult, output_dir: str) -> List[str]:
    path = os.path.join(output_dir, f"bell_{result.variant}_runs.csv")
    _save_rows(path, ["signal_setting_rad", "idler_setting_rad", "outcome", "window_center_s",
                      "count", "expected"],
               [(r.signal_setting, r.idler_setting, r.outcome, r.window_center, r.count, r.expected)
                for r in result.runs])
    return [path]


def run_scenario(scenario: Scenario, output_dir: str, workers: Optional[int] = None):
    """Run a scenario by kind; writes CSVs and summary.json, returns (summary, files)"""
    if scenario.kind == "pump_scan":
        memory = "afc" if scenario.memory_mode == "afc" else "none"
        result = scan_pump_power(scenario, memory=memory, workers=workers)
        files = write_scan(result, output_dir)
        summary = summary_document(scan=result.to_dict())
    elif scenario.kind == "storage_scan":
        result = scan_storage_time(scenario, workers=workers)
        files = write_scan(result, output_dir)
        summary = summary_document(scan=result.to_dict())
    elif scenario.kind == "fringes":
        result = fringe_scan(scenario, workers=workers)
        files = write_fringes(result, output_dir)
        fit = result.datasets[0].fit
        summary = summary_document(fit=fit, fringes=result.to_dict())
    else:
        result = bell_test(scenario, workers=workers)
        files = write_bell(result, output_dir)
        summary = summary_document(chsh=result.chsh, bell=result.to_dict())

    summary["scenario"] = scenario.name
    check_finite(summary)
    summary_path = os.path.join(output_dir, "summary.json")
    save_summary_json(summary_path, summary)
    return summary, files + [summary_path]
