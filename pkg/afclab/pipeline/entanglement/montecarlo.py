"""
Event-level Monte Carlo of the storage experiment

Pairs are created as a Poisson process (CW pump). Each pair is routed through
the signal and idler analyzers (lists of delayed, complex-weighted paths:
memory echoes, fiber interferometers, pass-through), one outcome is drawn per
pair from the path-amplitude table, photons survive channel and detector
losses independently, get timing jitter, and dark counts are added.

Two engines produce the same statistics:
- events: explicit timestamps (TagStream), sliced in time and run with joblib
- counts: a delay histogram drawn bin by bin from the expected rates, used
  for long integrations where dark-count tags would not fit in memory
"""

import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from joblib import Parallel, delayed
from scipy.special import erf

from .afc import PHOTON_COHERENCE_TIME
from .coincidence import DelayHistogram, histogram
from .config import get_settings
from .errors import SimulationError, ValidationError
from .protocol import HybridBudget
from .utils import to_plain

logger = logging.getLogger(__name__)

PS = 1e-12
SIGNAL, IDLER = 0, 1
TAG_DTYPE = np.dtype([("channel", "u1"), ("time_ps", "<u8")])
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
DELAY_TOLERANCE = 100e-12
DUTY_FACTOR = 0.5
ENGINES = ("auto", "events", "counts")

# peak transmission of the filtering elements (detector excluded)
FILTER_BUDGET_883 = {
    "grating": 0.70,
    "solid_etalon": 0.80,
    "air_spaced_etalon": 0.80,
    "fiber_coupling_and_optics": 0.04,
}
FILTER_BUDGET_1338 = {
    "grating": 0.90,
    "filter_cavity": 0.30,
    "fiber_bragg_grating": 0.50,
    "fiber_coupling_and_optics": 0.14,
}


@dataclass(frozen=True)
class SourceConfig:
    pair_rate: float
    coherence_time: float = PHOTON_COHERENCE_TIME

    def __post_init__(self):
        if self.pair_rate < 0:
            raise ValidationError(f"pair_rate must be >= 0, got {self.pair_rate}")
        if self.coherence_time < 0:
            raise ValidationError("coherence_time must be >= 0")

    @classmethod
    def from_pump_power(cls, power: float, rate_per_W: float,
                        coherence_time: float = PHOTON_COHERENCE_TIME) -> "SourceConfig":
        """Linear pump-power map: pair_rate = rate_per_W * power"""
        if power < 0 or rate_per_W < 0:
            raise ValidationError("pump power and rate_per_W must be >= 0")
        return cls(pair_rate=rate_per_W * power, coherence_time=coherence_time)


@dataclass(frozen=True)
class ChannelConfig:
    transmission: float
    delay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.transmission <= 1.0:
            raise ValidationError(f"transmission {self.transmission} outside [0, 1]")


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float
    dark_rate: float
    jitter_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValidationError(f"detector efficiency {self.efficiency} outside [0, 1]")
        if self.dark_rate < 0 or self.jitter_sigma < 0:
            raise ValidationError("dark_rate and jitter_sigma must be >= 0")


DETECTOR_883 = DetectorConfig(efficiency=0.30, dark_rate=100.0, jitter_sigma=350e-12)
DETECTOR_1338 = DetectorConfig(efficiency=0.08, dark_rate=10.0, jitter_sigma=150e-12)


def channel_from_budget(budget: Dict[str, float], delay: float = 0.0) -> ChannelConfig:
    return ChannelConfig(transmission=float(np.prod(list(budget.values()))), delay=delay)


@dataclass(frozen=True)
class Analyzer:
    """
    One output port of an analyzer as a set of (delay, complex amplitude)
    paths; sum |amplitude|^2 <= 1
    """
    name: str
    paths: Tuple[Tuple[float, complex], ...]

    def __post_init__(self):
        paths = tuple((float(d), complex(a)) for d, a in self.paths)
        if not paths:
            raise ValidationError("analyzer needs at least one path")
        if any(d < 0 for d, _ in paths):
            raise ValidationError("path delays must be >= 0")
        if sum(abs(a) ** 2 for _, a in paths) > 1.0 + 1e-12:
            raise ValidationError(f"analyzer {self.name} transmits more than it receives")
        object.__setattr__(self, "paths", paths)

    @property
    def delays(self) -> np.ndarray:
        return np.array([d for d, _ in self.paths])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for _, a in self.paths], dtype=complex)

    @property
    def throughput(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    @property
    def separations(self) -> List[float]:
        d = self.delays
        return [abs(x - y) for k, x in enumerate(d) for y in d[k + 1:]]


def pass_through() -> Analyzer:
    return Analyzer("pass_through", ((0.0, 1.0),))


def fiber_interferometer(phase: float = 0.0, tau: float = 25e-9) -> Analyzer:
    """Unbalanced Mach-Zehnder, one output port"""
    return Analyzer("fiber_interferometer", ((0.0, 0.5), (tau, 0.5 * np.exp(1j * phase))))


def partial_readout(efficiencies=(0.08, 0.08), phase: float = 0.0,
                    delays: Sequence[float] = (50e-9, 75e-9),
                    eta_trans: float = 0.0) -> Analyzer:
    """
    Memory with two echoes; efficiencies is a pair or an EchoReport of a
    double-readout comb. phase is added to the later echo.
    """
    if hasattr(efficiencies, "echoes"):
        report = efficiencies
        if len(report.echoes) != 2:
            raise ValidationError("partial readout needs a report with two echoes")
        (e1, e2) = report.echoes
        eta = (e1.efficiency, e2.efficiency)
        phases = (e1.phase, e2.phase)
        delays = (e1.expected_delay, e2.expected_delay)
        eta_trans = report.eta_trans
    else:
        eta = tuple(efficiencies)
        phases = (0.0, 0.0)

    paths = [(delays[0], np.sqrt(eta[0]) * np.exp(1j * phases[0])),
             (delays[1], np.sqrt(eta[1]) * np.exp(1j * (phases[1] + phase)))]
    if eta_trans > 0:
        paths.insert(0, (0.0, np.sqrt(eta_trans)))
    return Analyzer("partial_readout", tuple(paths))


def memory_echo(eta_trans: float, eta_echo: float, storage_time: float,
                phase: float = 0.0) -> Analyzer:
    return Analyzer("memory_echo", ((0.0, np.sqrt(eta_trans)),
                                    (storage_time, np.sqrt(eta_echo) * np.exp(1j * phase))))


def hybrid_memory(budget: HybridBudget, phi_s: float, outcome: int,
                  tau: float = 25e-9) -> Analyzer:
    """
    Conclusive outcome +1 or -1 of the hybrid measurement: transmitted (L)
    and echo (E) paths with the weights of the two projection elements
    """
    t, e = np.sqrt(budget.eta_trans), np.sqrt(budget.eta_echo)
    if outcome == 1:
        paths = ((0.0, t), (tau, e * np.exp(1j * phi_s)))
    elif outcome == -1:
        paths = ((0.0, -np.exp(1j * phi_s) * e), (tau, t))
    else:
        raise ValidationError(f"outcome must be +1 or -1, got {outcome}")
    return Analyzer(f"hybrid_memory{outcome:+d}", paths)


@dataclass(frozen=True)
class PathAmplitudeTable:
    """
    All (signal path, idler path) combinations of one setting. Combinations
    with the same delay difference are indistinguishable and add coherently,
    with weight V_model; the rest of the weight adds incoherently.
    """
    signal: Analyzer
    idler: Analyzer
    V_model: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.V_model <= 1.0:
            raise ValidationError(f"V_model={self.V_model} outside [0, 1]")

    @cached_property
    def signal_delays(self) -> np.ndarray:
        return np.repeat(self.signal.delays, len(self.idler.paths))

    @cached_property
    def idler_delays(self) -> np.ndarray:
        return np.tile(self.idler.delays, len(self.signal.paths))

    @cached_property
    def amplitudes(self) -> np.ndarray:
        return np.outer(self.signal.amplitudes, self.idler.amplitudes).ravel()

    @cached_property
    def group_keys(self) -> np.ndarray:
        return np.rint((self.signal_delays - self.idler_delays) / PS).astype(np.int64)

    def joint_probabilities(self) -> Dict[float, float]:
        """Delay difference -> probability that both photons leave their analyzers"""
        out = {}
        for key in np.unique(self.group_keys):
            a = self.amplitudes[self.group_keys == key]
            coherent = abs(a.sum()) ** 2
            incoherent = float(np.sum(np.abs(a) ** 2))
            out[float(key * PS)] = float(self.V_model * coherent + (1 - self.V_model) * incoherent)
        return out

    @property
    def p_both(self) -> float:
        return float(sum(self.joint_probabilities().values()))

    def arrival_times(self, t_pair: float) -> List[Tuple[float, float, complex]]:
        """(signal time, idler time, amplitude) of every combination"""
        return [(t_pair + ds, t_pair + di, a)
                for ds, di, a in zip(self.signal_delays, self.idler_delays, self.amplitudes)]

    def outcome_table(self):
        """
        Flat list of per-pair outcomes: every combination (both photons out),
        every signal path alone, every idler path alone, nothing.
        Returns (probabilities, has_signal, signal_delay, has_idler, idler_delay).
        """
        m_s, m_i = self.signal.throughput, self.idler.throughput
        joint = self.joint_probabilities()
        p_both = sum(joint.values())
        if p_both > min(m_s, m_i) + 1e-12:
            raise SimulationError(
                f"joint probability {p_both:.4f} exceeds a marginal ({m_s:.4f}, {m_i:.4f})")

        weights = np.abs(self.amplitudes) ** 2
        combo_p = np.zeros_like(weights)
        for key, p in joint.items():
            mask = self.group_keys == np.rint(key / PS)
            total = weights[mask].sum()
            if total > 0:
                combo_p[mask] = p * weights[mask] / total

        ws, wi = np.abs(self.signal.amplitudes) ** 2, np.abs(self.idler.amplitudes) ** 2
        s_only = (m_s - p_both) * ws / m_s if m_s > 0 else np.zeros_like(ws)
        i_only = (m_i - p_both) * wi / m_i if m_i > 0 else np.zeros_like(wi)

        probs = np.concatenate([combo_p, np.clip(s_only, 0, None), np.clip(i_only, 0, None)])
        none = 1.0 - probs.sum()
        if none < -1e-12:
            raise SimulationError(f"outcome probabilities sum to {probs.sum():.6f} > 1")
        probs = np.append(probs, max(none, 0.0))

        n_c, n_s, n_i = combo_p.size, ws.size, wi.size
        has_s = np.concatenate([np.ones(n_c + n_s, bool), np.zeros(n_i + 1, bool)])
        has_i = np.concatenate([np.ones(n_c, bool), np.zeros(n_s, bool),
                                np.ones(n_i, bool), np.zeros(1, bool)])
        ds = np.concatenate([self.signal_delays, self.signal.delays, np.zeros(n_i + 1)])
        di = np.concatenate([self.idler_delays, np.zeros(n_s), self.idler.delays, np.zeros(1)])
        return probs / probs.sum(), has_s, ds, has_i, di


def route_pair(signal: Analyzer, idler: Analyzer, V_model: float = 1.0,
               tolerance: float = DELAY_TOLERANCE) -> PathAmplitudeTable:
    """
    Path-amplitude table for one analyzer setting. Two-path analyzers on both
    sides must share their imbalance (Franson condition).
    """
    if len(signal.paths) > 1 and len(idler.paths) > 1:
        for sep in idler.separations:
            if not any(abs(sep - s) <= tolerance for s in signal.separations):
                raise ValidationError(
                    f"idler imbalance {sep:.3e} s matches no signal path separation "
                    f"{signal.separations}")
    return PathAmplitudeTable(signal=signal, idler=idler, V_model=V_model)


@dataclass(frozen=True)
class TagStream:
    """
    Time-ordered detection tags: channel 0 = signal, 1 = idler, integer
    picosecond timestamps in [0, duration]
    """
    channels: np.ndarray
    times_ps: np.ndarray
    duration: float
    metadata: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.uint8)
        t = np.asarray(self.times_ps, dtype=np.uint64)
        if ch.shape != t.shape:
            raise ValidationError("channels and timestamps differ in length")
        if t.size and (np.any(np.diff(t.astype(np.int64)) < 0)
                       or t[-1] > np.uint64(round(self.duration / PS))):
            raise ValidationError("tags must be sorted and within [0, duration]")
        ch.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "times_ps", t)

    @classmethod
    def from_seconds(cls, channels, times, duration: float, metadata=None) -> "TagStream":
        channels = np.asarray(channels)
        times = np.asarray(times, dtype=float)
        keep = (times >= 0) & (times <= duration)
        t_ps = np.rint(times[keep] / PS).astype(np.uint64)
        order = np.argsort(t_ps, kind="stable")
        return cls(channels=channels[keep][order], times_ps=t_ps[order],
                   duration=duration, metadata=metadata or {})

    @classmethod
    def merge(cls, streams: Sequence["TagStream"], duration: float, metadata=None) -> "TagStream":
        if not streams:
            return cls(np.zeros(0, np.uint8), np.zeros(0, np.uint64), duration, metadata or {})
        ch = np.concatenate([s.channels for s in streams])
        t = np.concatenate([s.times_ps for s in streams])
        order = np.argsort(t, kind="stable")
        return cls(channels=ch[order], times_ps=t[order], duration=duration,
                   metadata=metadata or {})

    def __len__(self):
        return int(self.times_ps.size)

    def times(self, channel: int) -> np.ndarray:
        return self.times_ps[self.channels == channel].astype(np.int64)

    def count(self, channel: int) -> int:
        return int(np.count_nonzero(self.channels == channel))

    def singles_rate(self, channel: int) -> float:
        return self.count(channel) / self.duration if self.duration > 0 else 0.0

    def to_records(self) -> np.ndarray:
        rec = np.empty(len(self), dtype=TAG_DTYPE)
        rec["channel"] = self.channels
        rec["time_ps"] = self.times_ps
        return rec


def save_tags(full_path: str, stream: TagStream):
    """Packed little-endian records (u1 channel, u8 ps) plus a YAML sidecar"""
    stream.to_records().tofile(full_path)
    sidecar = {"format": "afclab-tags", "record": "channel:u1,time_ps:<u8",
               "n_tags": len(stream), "duration_s": stream.duration,
               "metadata": to_plain(stream.metadata)}
    with open(full_path + ".yaml", "w") as f:
        yaml.safe_dump(sidecar, f, sort_keys=True)


def load_tags(full_path: str) -> TagStream:
    if not os.path.exists(full_path):
        raise ValidationError(f"tag file {full_path} not found")
    rec = np.fromfile(full_path, dtype=TAG_DTYPE)
    sidecar_path = full_path + ".yaml"
    if os.path.exists(sidecar_path):
        with open(sidecar_path) as f:
            sidecar = yaml.safe_load(f) or {}
    else:
        logger.warning(f"no sidecar for {full_path}; duration taken from the last tag")
        sidecar = {"duration_s": float(rec["time_ps"][-1]) * PS if rec.size else 0.0}
    return TagStream(channels=rec["channel"], times_ps=rec["time_ps"],
                     duration=float(sidecar["duration_s"]), metadata=sidecar.get("metadata", {}))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def generate_pairs(cfg: SourceConfig, duration: float, seed=None, t_start: float = 0.0) -> np.ndarray:
    """Sorted pair-creation times of a Poisson process on [t_start, t_start + duration)"""
    if duration < 0:
        raise ValidationError("duration must be >= 0")
    rng = _rng(seed)
    n = rng.poisson(cfg.pair_rate * duration)
    return np.sort(rng.uniform(t_start, t_start + duration, n))


def detect(pair_times: np.ndarray, table: PathAmplitudeTable,
           channels: Tuple[ChannelConfig, ChannelConfig],
           detectors: Tuple[DetectorConfig, DetectorConfig],
           duration: float, seed=None, coherence_time: float = PHOTON_COHERENCE_TIME,
           t_start: float = 0.0, t_stop: Optional[float] = None) -> TagStream:
    """
    One outcome per pair from the table, independent channel x detector
    losses per photon, wavepacket and jitter spread, Poisson dark counts on
    [t_start, t_stop)
    """
    rng = _rng(seed)
    t_stop = duration if t_stop is None else t_stop
    pair_times = np.asarray(pair_times, dtype=float)
    n = pair_times.size

    probs, has_s, ds, has_i, di = table.outcome_table()
    outcome = rng.choice(probs.size, size=n, p=probs)
    eff_s = channels[SIGNAL].transmission * detectors[SIGNAL].efficiency
    eff_i = channels[IDLER].transmission * detectors[IDLER].efficiency
    keep_s = has_s[outcome] & (rng.random(n) < eff_s)
    keep_i = has_i[outcome] & (rng.random(n) < eff_i)

    t_s = (pair_times + ds[outcome] + channels[SIGNAL].delay
           + rng.normal(0.0, coherence_time * FWHM_TO_SIGMA, n)
           + rng.normal(0.0, detectors[SIGNAL].jitter_sigma, n))
    t_i = (pair_times + di[outcome] + channels[IDLER].delay
           + rng.normal(0.0, detectors[IDLER].jitter_sigma, n))

    span = max(t_stop - t_start, 0.0)
    dark_s = rng.uniform(t_start, t_stop, rng.poisson(detectors[SIGNAL].dark_rate * span))
    dark_i = rng.uniform(t_start, t_stop, rng.poisson(detectors[IDLER].dark_rate * span))

    times = np.concatenate([t_s[keep_s], dark_s, t_i[keep_i], dark_i])
    chans = np.concatenate([
        np.full(keep_s.sum() + dark_s.size, SIGNAL, np.uint8),
        np.full(keep_i.sum() + dark_i.size, IDLER, np.uint8),
    ])
    return TagStream.from_seconds(chans, times, duration)


def _simulate_slice(seed_seq, t_start, t_stop, duration, source, table, channels, detectors):
    pair_seed, detect_seed = seed_seq.spawn(2)
    pairs = generate_pairs(source, t_stop - t_start, pair_seed, t_start=t_start)
    return detect(pairs, table, channels, detectors, duration, seed=detect_seed,
                  coherence_time=source.coherence_time, t_start=t_start, t_stop=t_stop)


@dataclass(frozen=True)
class ExpectedRates:
    """Singles and coincidence rates implied by a configuration"""
    pair_rate: float
    singles_signal: float
    singles_idler: float
    coincidences: Dict[float, float]
    timing_sigma: float
    offset: float = 0.0

    @property
    def accidental_density(self) -> float:
        """Accidental coincidences per second per second of window"""
        return self.singles_signal * self.singles_idler

    def _fraction(self, lo: float, hi: float, delay: float) -> float:
        s = max(self.timing_sigma, 1e-15) * np.sqrt(2.0)
        mu = delay + self.offset
        return 0.5 * (erf((hi - mu) / s) - erf((lo - mu) / s))

    def true_rate(self, center: float, width: float) -> float:
        lo, hi = center - width / 2, center + width / 2
        return float(sum(r * self._fraction(lo, hi, d) for d, r in self.coincidences.items()))

    def window_rate(self, center: float, width: float) -> float:
        return self.true_rate(center, width) + self.accidental_density * width

    def g2(self, center: float, width: float) -> float:
        return self.window_rate(center, width) / (self.accidental_density * width)

    def expected_tags(self, duration: float) -> float:
        return (self.singles_signal + self.singles_idler) * duration

    def bin_expectation(self, edges: np.ndarray, duration: float) -> np.ndarray:
        widths = np.diff(edges)
        lam = self.accidental_density * widths
        s = max(self.timing_sigma, 1e-15) * np.sqrt(2.0)
        for d, r in self.coincidences.items():
            cdf = 0.5 * erf((edges - d - self.offset) / s)
            lam = lam + r * np.diff(cdf)
        return lam * duration

    def to_dict(self):
        return {"pair_rate": self.pair_rate, "singles_signal": self.singles_signal,
                "singles_idler": self.singles_idler, "timing_sigma": self.timing_sigma,
                "coincidences": {f"{d:.3e}": r for d, r in self.coincidences.items()}}


def expected_rates(source: SourceConfig, table: PathAmplitudeTable,
                   channels: Tuple[ChannelConfig, ChannelConfig],
                   detectors: Tuple[DetectorConfig, DetectorConfig]) -> ExpectedRates:
    eff_s = channels[SIGNAL].transmission * detectors[SIGNAL].efficiency
    eff_i = channels[IDLER].transmission * detectors[IDLER].efficiency
    R = source.pair_rate
    sigma = np.sqrt((source.coherence_time * FWHM_TO_SIGMA) ** 2
                    + detectors[SIGNAL].jitter_sigma ** 2 + detectors[IDLER].jitter_sigma ** 2)
    return ExpectedRates(
        pair_rate=R,
        singles_signal=R * eff_s * table.signal.throughput + detectors[SIGNAL].dark_rate,
        singles_idler=R * eff_i * table.idler.throughput + detectors[IDLER].dark_rate,
        coincidences={d: R * eff_s * eff_i * p for d, p in table.joint_probabilities().items()},
        timing_sigma=float(sigma),
        offset=channels[SIGNAL].delay - channels[IDLER].delay,
    )


def sample_histogram(rates: ExpectedRates, duration: float, bin_width: float,
                     hist_range: Tuple[float, float], seed=None) -> DelayHistogram:
    """Delay histogram drawn bin by bin (Poisson) from expected rates"""
    rng = _rng(seed)
    n_bins = int(round((hist_range[1] - hist_range[0]) / bin_width))
    edges = hist_range[0] + np.arange(n_bins + 1) * bin_width
    counts = rng.poisson(rates.bin_expectation(edges, duration))
    n_start = rng.poisson(rates.singles_signal * duration)
    n_stop = rng.poisson(rates.singles_idler * duration)
    return DelayHistogram(bin_width=bin_width, range=tuple(hist_range), counts=counts,
                          n_start_tags=int(n_start), n_stop_tags=int(n_stop))


def select_engine(rates: ExpectedRates, duration: float, engine: str = "auto") -> str:
    if engine not in ENGINES:
        raise ValidationError(f"engine {engine!r} not in {ENGINES}")
    if engine != "auto":
        return engine
    expected = rates.expected_tags(duration)
    return "counts" if expected > get_settings().max_event_tags else "events"


def run_experiment(source: SourceConfig, table: PathAmplitudeTable,
                   channels: Tuple[ChannelConfig, ChannelConfig],
                   detectors: Tuple[DetectorConfig, DetectorConfig],
                   duration: float, seed: int = 0, workers: Optional[int] = None,
                   slice_duration: Optional[float] = None) -> TagStream:
    """
    Event engine over [0, duration]: independent time slices with spawned
    seeds, merged by timestamp (stable, slice order)
    """
    if duration < 0:
        raise ValidationError("duration must be >= 0")
    settings = get_settings()
    workers = settings.workers if workers is None else workers
    slice_duration = slice_duration or settings.slice_duration

    rates = expected_rates(source, table, channels, detectors)
    n_slices = int(np.ceil(duration / slice_duration)) if duration > 0 else 0
    metadata = {
        "engine": "events", "seed": seed, "duration_s": duration, "n_slices": n_slices,
        "signal_analyzer": table.signal.name, "idler_analyzer": table.idler.name,
        "V_model": table.V_model,
        "transmission": [c.transmission for c in channels],
        "detector_efficiency": [d.efficiency for d in detectors],
        "dark_rate": [d.dark_rate for d in detectors],
        "expected": rates.to_dict(),
    }
    if n_slices == 0:
        return TagStream.merge([], duration, metadata)

    seeds = np.random.SeedSequence(seed).spawn(n_slices)
    bounds = [(k * slice_duration, min((k + 1) * slice_duration, duration)) for k in range(n_slices)]
    logger.info(f"event engine: {n_slices} slices, ~{rates.expected_tags(duration):.3g} tags")

    parts = Parallel(n_jobs=workers)(
        delayed(_simulate_slice)(seeds[k], lo, hi, duration, source, table, channels, detectors)
        for k, (lo, hi) in enumerate(bounds))
    stream = TagStream.merge(parts, duration, metadata)
    logger.debug(f"merged {len(stream)} tags")
    return stream


def simulate_histogram(source: SourceConfig, table: PathAmplitudeTable,
                       channels: Tuple[ChannelConfig, ChannelConfig],
                       detectors: Tuple[DetectorConfig, DetectorConfig],
                       duration: float, bin_width: float, hist_range: Tuple[float, float],
                       seed: int = 0, engine: str = "auto", workers: Optional[int] = None):
    """Delay histogram from whichever engine fits; returns (histogram, engine)"""
    rates = expected_rates(source, table, channels, detectors)
    chosen = select_engine(rates, duration, engine)
    if chosen == "counts":
        return sample_histogram(rates, duration, bin_width, hist_range, seed=seed), chosen
    stream = run_experiment(source, table, channels, detectors, duration, seed=seed,
                            workers=workers)
    return histogram(stream.times(SIGNAL), stream.times(IDLER), bin_width, hist_range), chosen
