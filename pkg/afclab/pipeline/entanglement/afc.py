"""
Atomic frequency comb memory as a linear spectral filter

An absorption profile d(nu) made of periodic teeth (period Delta) inside a
bandwidth window is turned into a transfer function H = exp(-d/2 + i phi),
phi being the minimum (causal) phase of ln|H|. Propagating a wavepacket
through H yields a transmitted pulse and echoes at multiples of 1/Delta;
shifting the teeth by delta rotates the first echo by 2 pi delta / Delta.

Supports:
- square and gaussian teeth, background absorption, double pass
- double-readout combs (two superposed periods) for the partial-readout analyzer
- echo reports (efficiency, arrival centroid, phase) and efficiency calibration
- columnar text export of spectra, envelopes and echo reports
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft
from scipy.optimize import brentq, minimize_scalar
from scipy.special import erf

from .config import get_settings
from .errors import GridError, ValidationError, WindowError

logger = logging.getLogger(__name__)

SHAPES = ("square", "gaussian")
AFC_BANDWIDTH = 120e6
PHOTON_COHERENCE_TIME = 5e-9
# erf edge of a square tooth, as a fraction of the tooth width
TOOTH_EDGE_FRACTION = 0.05


def _readonly(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FrequencyGrid:
    """
    Detuning grid in FFT order; the paired time grid has dt = 1/span
    """
    n_points: int
    span: float
    center_offset: float = 0.0

    def __post_init__(self):
        n = int(self.n_points)
        if n < 2 or n & (n - 1):
            raise GridError(f"n_points must be a power of two, got {self.n_points}")
        if self.span <= 0:
            raise GridError(f"span must be > 0, got {self.span}")
        object.__setattr__(self, "n_points", n)

    @classmethod
    def default(cls) -> "FrequencyGrid":
        settings = get_settings()
        return cls(n_points=settings.grid_points, span=settings.grid_span)

    @property
    def resolution(self) -> float:
        return self.span / self.n_points

    @property
    def dt(self) -> float:
        return 1.0 / self.span

    @property
    def frequencies(self) -> np.ndarray:
        return sfft.fftfreq(self.n_points, d=self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dt


@dataclass(frozen=True)
class CombSpectrum:
    grid: FrequencyGrid
    depth: np.ndarray
    period: Optional[float]
    finesse: float
    peak_shape: str
    bandwidth: float
    comb_shift: float = 0.0
    background_depth: float = 0.0
    peak_depth: float = 0.0
    passes: int = 1
    window: Optional[np.ndarray] = field(default=None, repr=False)
    periods: Tuple[float, ...] = ()
    clipped: bool = False
    bulk_depth: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=float)
        if depth.shape != (self.grid.n_points,):
            raise GridError("depth profile does not match the grid")
        if np.any(depth < 0) or not np.all(np.isfinite(depth)):
            raise ValidationError("optical depth must be finite and >= 0")
        object.__setattr__(self, "depth", _readonly(depth))
        window = np.ones_like(depth) if self.window is None else self.window
        object.__setattr__(self, "window", _readonly(np.asarray(window, dtype=float)))
        # tooth-averaged depth; without teeth the whole profile is bulk
        bulk = depth if self.bulk_depth is None else np.asarray(self.bulk_depth, dtype=float)
        if bulk.shape != depth.shape:
            raise GridError("bulk depth profile does not match the grid")
        object.__setattr__(self, "bulk_depth", _readonly(bulk))

    @property
    def storage_time(self) -> Optional[float]:
        return 1.0 / self.period if self.period else None

    @property
    def peak_part(self) -> np.ndarray:
        """Depth carried by the comb teeth, background between peaks removed"""
        return np.clip(self.depth - self.passes * self.background_depth * self.window, 0.0, None)


@dataclass(frozen=True)
class TimeEnvelope:
    """
    Complex amplitude on a uniform time axis. Envelopes returned by
    propagate() keep their input (source) and the transfer function of the
    tooth-averaged absorption (dispersion) for echo timing.
    """
    samples: np.ndarray
    dt: float
    t0: float = 0.0
    source: Optional["TimeEnvelope"] = field(default=None, repr=False, compare=False)
    dispersion: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 1:
            raise ValidationError("envelope samples must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ValidationError("envelope has non-finite samples")
        object.__setattr__(self, "samples", _readonly(s))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) * self.dt

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    @property
    def energy(self) -> float:
        return float(np.sum(self.intensity) * self.dt)

    @property
    def centroid(self) -> float:
        w = self.intensity
        return float(np.sum(self.times * w) / np.sum(w))

    def fwhm(self) -> float:
        w = self.intensity
        above = np.nonzero(w >= 0.5 * w.max())[0]
        return float((above[-1] - above[0] + 1) * self.dt)


@dataclass(frozen=True)
class EchoLine:
    delay: float
    expected_delay: float
    efficiency: float
    phase: float


@dataclass(frozen=True)
class EchoReport:
    eta_trans: float
    echoes: Tuple[EchoLine, ...]
    trans_phase: float = 0.0

    @property
    def eta_echo(self) -> List[Tuple[float, float, float]]:
        return [(e.delay, e.efficiency, e.phase) for e in self.echoes]

    @property
    def total(self) -> float:
        return self.eta_trans + sum(e.efficiency for e in self.echoes)

    def to_dict(self):
        return {
            "eta_trans": self.eta_trans,
            "trans_phase": self.trans_phase,
            "echoes": [e.__dict__.copy() for e in self.echoes],
        }


@dataclass
class CalibrationResult:
    finesse: float
    peak_depth: float
    efficiency: float
    report: EchoReport
    evaluated: int = 0


def _check_comb_grid(grid: FrequencyGrid, period: float, bandwidth: float):
    if grid.resolution > period / 50.0:
        raise GridError(
            f"grid resolution {grid.resolution:.3e} Hz coarser than period/50 "
            f"({period / 50.0:.3e} Hz); raise n_points")
    if bandwidth > grid.span / 4.0:
        raise GridError(
            f"bandwidth {bandwidth:.3e} Hz exceeds span/4 ({grid.span / 4.0:.3e} Hz)")


def _window(nu: np.ndarray, bandwidth: float, edge: float) -> np.ndarray:
    """Flat top of width bandwidth with gaussian (erf) edges"""
    s = np.sqrt(2.0) * edge
    return 0.5 * (erf((nu + bandwidth / 2) / s) - erf((nu - bandwidth / 2) / s))


def _teeth(nu: np.ndarray, period: float, finesse: float, shape: str, shift: float) -> np.ndarray:
    """Unit-height periodic tooth profile, tooth FWHM = period/finesse"""
    width = period / finesse
    x = np.mod(nu - shift + period / 2, period) - period / 2
    profile = np.zeros_like(nu)

    if shape == "square":
        s = np.sqrt(2.0) * TOOTH_EDGE_FRACTION * width
        for k in (-1, 0, 1):
            xk = x - k * period
            profile += 0.5 * (erf((xk + width / 2) / s) - erf((xk - width / 2) / s))
    elif shape == "gaussian":
        sigma = width / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        peak = sum(np.exp(-(k * period) ** 2 / (2 * sigma ** 2)) for k in (-1, 0, 1))
        for k in (-1, 0, 1):
            profile += np.exp(-(x - k * period) ** 2 / (2 * sigma ** 2))
        profile /= peak
    else:
        raise ValidationError(f"peak shape {shape!r} not in {SHAPES}")

    return profile


def _tooth_mean(period: float, finesse: float, shape: str) -> float:
    """Average of the unit tooth profile over one period"""
    nu = np.arange(4096) * (period / 4096)
    return float(np.mean(_teeth(nu, period, finesse, shape, 0.0)))


def build_comb(
    period: float,
    finesse: float,
    peak_depth: float,
    background_depth: float = 0.0,
    bandwidth: float = AFC_BANDWIDTH,
    shape: str = "square",
    comb_shift: float = 0.0,
    grid: Optional[FrequencyGrid] = None,
    passes: int = 1,
    edge_width: Optional[float] = None,
) -> CombSpectrum:
    """
    Periodic comb; storage time 1/period.

    Args:
        period: tooth spacing Delta (Hz)
        finesse: Delta / tooth FWHM, >= 1 (1 gives a flat plateau for square teeth)
        peak_depth: optical depth at the tooth maxima
        background_depth: residual depth between teeth
        bandwidth: width of the prepared region (Hz)
        shape: "square" or "gaussian"
        comb_shift: tooth offset from the window center (Hz)
        passes: 2 models the double-pass geometry (depth doubled)
        edge_width: gaussian roll-off of the window (default period/2)
    """
    grid = grid or FrequencyGrid.default()
    if period <= 0:
        raise ValidationError(f"period must be > 0, got {period}")
    if finesse < 1:
        raise ValidationError(f"finesse must be >= 1, got {finesse}")
    if not peak_depth >= background_depth >= 0:
        raise ValidationError("need peak_depth >= background_depth >= 0")
    if passes < 1:
        raise ValidationError("passes must be >= 1")
    _check_comb_grid(grid, period, bandwidth)

    nu = grid.frequencies - grid.center_offset
    window = _window(nu, bandwidth, edge_width or period / 2.0)
    teeth = _teeth(nu, period, finesse, shape, comb_shift)
    depth = passes * window * (background_depth + (peak_depth - background_depth) * teeth)
    bulk = passes * window * (background_depth + (peak_depth - background_depth)
                              * _tooth_mean(period, finesse, shape))

    logger.debug(f"comb: period={period:.4g} Hz finesse={finesse:.3g} "
                 f"peak_depth={peak_depth:.3g} shape={shape} shift={comb_shift:.4g} Hz")

    return CombSpectrum(
        grid=grid, depth=depth, period=period, finesse=finesse, peak_shape=shape,
        bandwidth=bandwidth, comb_shift=comb_shift, background_depth=background_depth,
        peak_depth=peak_depth, passes=passes, window=window, periods=(period,),
        bulk_depth=bulk,
    )


def flat_comb(depth: float, grid: Optional[FrequencyGrid] = None) -> CombSpectrum:
    """Uniform absorber over the whole grid (no teeth, no echo)"""
    grid = grid or FrequencyGrid.default()
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    return CombSpectrum(
        grid=grid, depth=np.full(grid.n_points, float(depth)), period=None, finesse=1.0,
        peak_shape="square", bandwidth=grid.span, peak_depth=depth,
    )


def double_readout_comb(
    t_short: float = 50e-9,
    t_long: float = 75e-9,
    weight: float = 0.5,
    phases: Sequence[float] = (0.0, 0.0),
    depth: float = 4.0,
    finesse: float = 3.0,
    bandwidth: float = AFC_BANDWIDTH,
    shape: str = "square",
    grid: Optional[FrequencyGrid] = None,
    max_depth: Optional[float] = None,
    background_depth: float = 0.0,
    passes: int = 1,
) -> CombSpectrum:
    """
    Superposition of two combs with periods 1/t_short and 1/t_long: the
    memory re-emits at both delays, acting as an unbalanced interferometer.
    The structures carry weight and 1-weight of the depth; phases[k] sets the
    k-th echo phase through a tooth shift phase*period/(2 pi). Depths above
    max_depth are clipped and the spectrum is flagged.
    """
    grid = grid or FrequencyGrid.default()
    if not 0 < t_short < t_long:
        raise ValidationError("need 0 < t_short < t_long")
    if not 0.0 < weight < 1.0:
        raise ValidationError(f"weight must be in (0, 1), got {weight}")
    if len(phases) != 2:
        raise ValidationError("phases must be a pair")
    if finesse < 1 or depth < background_depth or background_depth < 0:
        raise ValidationError("invalid finesse or depths")

    p_short, p_long = 1.0 / t_short, 1.0 / t_long
    _check_comb_grid(grid, p_long, bandwidth)

    nu = grid.frequencies - grid.center_offset
    window = _window(nu, bandwidth, p_short / 2.0)
    shifts = (phases[0] * p_short / (2 * np.pi), phases[1] * p_long / (2 * np.pi))
    teeth = (weight * _teeth(nu, p_short, finesse, shape, shifts[0])
             + (1.0 - weight) * _teeth(nu, p_long, finesse, shape, shifts[1]))
    d = passes * window * (background_depth + (depth - background_depth) * teeth)
    mean = (weight * _tooth_mean(p_short, finesse, shape)
            + (1.0 - weight) * _tooth_mean(p_long, finesse, shape))
    bulk = passes * window * (background_depth + (depth - background_depth) * mean)

    cap = passes * (depth if max_depth is None else max_depth)
    clipped = bool(np.any(d > cap + 1e-12))
    if clipped:
        logger.warning(f"double-readout comb exceeds the depth cap {cap:.3g}; clipping")
        d = np.minimum(d, cap)

    return CombSpectrum(
        grid=grid, depth=d, period=p_short, finesse=finesse, peak_shape=shape,
        bandwidth=bandwidth, comb_shift=shifts[0], background_depth=background_depth,
        peak_depth=depth, passes=passes, window=window, periods=(p_short, p_long),
        clipped=clipped, bulk_depth=bulk,
    )


def transfer_function(comb: CombSpectrum, causal: Optional[bool] = None) -> np.ndarray:
    """
    H = exp(-d/2 + i phi). With causal=True phi is the minimum phase obtained
    by folding the cepstrum of ln|H| onto positive times; causal=False is the
    amplitude-only (non-physical) mode.
    """
    return _filter(comb.depth, causal)


def bulk_transfer(comb: CombSpectrum, causal: Optional[bool] = None) -> np.ndarray:
    """
    Transfer function of the tooth-averaged absorption alone. Inside a finite
    band it advances every pulse (and every echo) by the same group delay.
    """
    return _filter(comb.bulk_depth, causal)


def _filter(depth: np.ndarray, causal: Optional[bool]) -> np.ndarray:
    if causal is None:
        causal = get_settings().causal_filter

    log_mag = -0.5 * np.asarray(depth, dtype=float)
    if not causal:
        return np.exp(log_mag).astype(complex)

    n = log_mag.size
    cepstrum = sfft.ifft(log_mag)
    fold = np.zeros(n)
    fold[0] = 1.0
    fold[1:n // 2] = 2.0
    fold[n // 2] = 1.0
    return np.exp(sfft.fft(cepstrum * fold))


def propagate(envelope: TimeEnvelope, comb: CombSpectrum,
              causal: Optional[bool] = None) -> TimeEnvelope:
    """output = IFFT(H * FFT(input))"""
    grid = comb.grid
    if envelope.samples.size != grid.n_points:
        raise GridError(
            f"envelope has {envelope.samples.size} samples, grid has {grid.n_points}")
    if abs(envelope.dt * grid.span - 1.0) > 1e-9:
        raise GridError(f"envelope dt {envelope.dt:.3e} s != 1/span {grid.dt:.3e} s")
    if envelope.energy > 1.0 + 1e-9:
        raise ValidationError(f"input energy {envelope.energy:.6f} exceeds 1")

    H = transfer_function(comb, causal=causal)
    out = sfft.ifft(H * sfft.fft(envelope.samples))
    dispersion = bulk_transfer(comb, causal=causal) if comb.period else None
    return TimeEnvelope(samples=out, dt=envelope.dt, t0=envelope.t0,
                        source=envelope, dispersion=dispersion)


def gaussian_pulse(grid: FrequencyGrid, fwhm: float = PHOTON_COHERENCE_TIME,
                   center: float = 50e-9, energy: float = 1.0) -> TimeEnvelope:
    """Transform-limited gaussian wavepacket, fwhm of the intensity"""
    t = grid.times
    amp = np.exp(-2.0 * np.log(2.0) * (t - center) ** 2 / fwhm ** 2).astype(complex)
    amp *= np.sqrt(energy / (np.sum(np.abs(amp) ** 2) * grid.dt))
    return TimeEnvelope(samples=amp, dt=grid.dt)


def _window_mask(times: np.ndarray, center: float, width: float) -> np.ndarray:
    return (times >= center - width / 2) & (times < center + width / 2)


def echo_report(out: TimeEnvelope, expected_delays: Sequence[float], window: float,
                reference: Optional[TimeEnvelope] = None) -> EchoReport:
    """
    Energy ratio, centroid delay and phase in windows at the reference
    centroid (transmitted pulse) and at each expected delay after it.
    Phases are args of the overlap with the delayed reference.

    The reference defaults to the input that produced out. Centroids are
    taken after dividing out the tooth-averaged absorption, so a delay is
    the storage time of the teeth and not the band's fast-light advance.
    """
    reference = reference if reference is not None else out.source
    if reference is None:
        raise ValidationError("no reference envelope: pass one or use an output of propagate()")
    if reference.samples.size != out.samples.size or reference.dt != out.dt:
        raise GridError("reference and output envelopes differ in sampling")
    fwhm = reference.fwhm()
    if window < 3.0 * fwhm * (1 - 1e-9):
        raise WindowError(f"window {window:.3e} s shorter than 3x input FWHM ({fwhm:.3e} s)")

    delays = [float(d) for d in expected_delays]
    if any(d <= 0 for d in delays):
        raise WindowError("expected delays must be > 0")
    centers = sorted([0.0] + delays)
    if np.any(np.diff(centers) < window):
        raise WindowError("analysis windows overlap")

    e_in = reference.energy
    t_in = reference.centroid
    t = out.times
    y = out.samples
    x = reference.samples
    timing = y if out.dispersion is None else sfft.ifft(sfft.fft(y) / out.dispersion)

    def measure(delay: float):
        mask = _window_mask(t, t_in + delay, window)
        w = np.abs(y[mask]) ** 2
        energy = float(np.sum(w) * out.dt)
        if energy <= 0:
            return delay, 0.0, 0.0
        wt = np.abs(timing[mask]) ** 2
        centroid = float(np.sum(t[mask] * wt) / np.sum(wt)) - t_in
        shifted = np.roll(x, int(round(delay / out.dt)))
        phase = float(np.angle(np.sum(y[mask] * np.conj(shifted[mask]))))
        return centroid, energy / e_in, phase

    _, eta_trans, trans_phase = measure(0.0)
    lines = []
    for d in delays:
        centroid, eta, phase = measure(d)
        lines.append(EchoLine(delay=centroid, expected_delay=d, efficiency=eta, phase=phase))

    report = EchoReport(eta_trans=eta_trans, echoes=tuple(lines), trans_phase=trans_phase)
    if report.total > 1.0 + 1e-9:
        raise ValidationError(f"echo report violates passivity: total {report.total}")
    return report


def absorption_efficiency(comb: CombSpectrum, envelope: TimeEnvelope) -> float:
    """
    1 - exp(-mean tooth depth) with the mean weighted by the input spectrum;
    absorption by the background between teeth is not counted
    """
    weights = np.abs(sfft.fft(envelope.samples)) ** 2
    mean_depth = float(np.sum(weights * comb.peak_part) / np.sum(weights))
    return 1.0 - np.exp(-mean_depth)


def theoretical_efficiency(peak_depth: float, finesse: float,
                           background_depth: float = 0.0) -> float:
    """Forward echo efficiency of an ideal square comb"""
    d_eff = (peak_depth - background_depth) / finesse
    return float(d_eff ** 2 * np.exp(-d_eff) * np.sinc(1.0 / finesse) ** 2
                 * np.exp(-background_depth))


def first_echo_efficiency(comb: CombSpectrum, envelope: TimeEnvelope,
                          window: Optional[float] = None) -> EchoReport:
    window = window or 3.0 * envelope.fwhm()
    out = propagate(envelope, comb)
    return echo_report(out, [comb.storage_time], window, envelope)


def calibrate_efficiency(
    envelope: TimeEnvelope,
    grid: FrequencyGrid,
    period: float = 40e6,
    max_depth: float = 4.0,
    bandwidth: float = AFC_BANDWIDTH,
    finesses: Optional[Sequence[float]] = None,
    depths: Optional[Sequence[float]] = None,
    window: Optional[float] = None,
) -> CalibrationResult:
    """
    Best first-echo efficiency of square combs with peak depth <= max_depth:
    coarse grid over (finesse, depth), then a bounded refinement in finesse
    """
    finesses = np.linspace(1.5, 8.0, 14) if finesses is None else finesses
    depths = np.linspace(1.0, max_depth, 7) if depths is None else depths

    def evaluate(finesse, depth):
        comb = build_comb(period, finesse, depth, bandwidth=bandwidth, grid=grid)
        return first_echo_efficiency(comb, envelope, window)

    best = None
    count = 0
    for depth in depths:
        for finesse in finesses:
            rep = evaluate(finesse, depth)
            count += 1
            eta = rep.echoes[0].efficiency
            if best is None or eta > best[2]:
                best = (finesse, depth, eta, rep)

    finesse0, depth0 = best[0], best[1]
    lo, hi = max(1.0, finesse0 - 0.5), finesse0 + 0.5
    res = minimize_scalar(lambda f: -evaluate(f, depth0).echoes[0].efficiency,
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-3})
    count += res.nfev
    if -res.fun > best[2]:
        best = (float(res.x), depth0, float(-res.fun), evaluate(res.x, depth0))

    logger.info(f"calibrated comb: finesse={best[0]:.3f} depth={best[1]:.2f} "
                f"efficiency={best[2]:.4f} ({count} propagations)")
    return CalibrationResult(finesse=best[0], peak_depth=best[1], efficiency=best[2],
                             report=best[3], evaluated=count)


def balance_double_readout(envelope: TimeEnvelope, grid: FrequencyGrid,
                           window: Optional[float] = None, **kwargs):
    """
    Weight at which the two echoes of a double-readout comb carry equal energy.
    Returns (weight, comb, report).
    """
    window = window or 3.0 * envelope.fwhm()
    t_short = kwargs.get("t_short", 50e-9)
    t_long = kwargs.get("t_long", 75e-9)

    def report_for(weight):
        comb = double_readout_comb(weight=weight, grid=grid, **kwargs)
        out = propagate(envelope, comb)
        return comb, echo_report(out, [t_short, t_long], window, envelope)

    def imbalance(weight):
        _, rep = report_for(weight)
        return np.log(rep.echoes[0].efficiency / rep.echoes[1].efficiency)

    weight = brentq(imbalance, 0.2, 0.8, xtol=1e-6)
    comb, rep = report_for(weight)
    return weight, comb, rep


# Columnar text I/O

def save_comb(full_path: str, comb: CombSpectrum, max_detuning: Optional[float] = None):
    """Columns frequency_Hz, depth, sorted by frequency"""
    if max_detuning is None:
        max_detuning = comb.bandwidth / 2 + 4 * (comb.period or 0.0)
    nu = comb.grid.frequencies
    order = np.argsort(nu)
    keep = order[np.abs(nu[order] - comb.grid.center_offset) <= max_detuning]
    header = (f"frequency_Hz,depth\n"
              f"period_Hz={comb.period} finesse={comb.finesse} shape={comb.peak_shape} "
              f"peak_depth={comb.peak_depth} clipped={comb.clipped}")
    np.savetxt(full_path, np.column_stack([nu[keep], comb.depth[keep]]),
               delimiter=",", header=header, fmt="%.12g")


def load_comb(full_path: str) -> Tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(full_path, delimiter=",", ndmin=2)
    return data[:, 0], data[:, 1]


def save_envelope(full_path: str, envelope: TimeEnvelope, t_max: float = 1e-6):
    """Columns time_s, re, im over the first t_max seconds"""
    t = envelope.times
    keep = t < envelope.t0 + t_max
    s = envelope.samples[keep]
    np.savetxt(full_path, np.column_stack([t[keep], s.real, s.imag]),
               delimiter=",", header="time_s,re,im", fmt="%.12g")


def load_envelope(full_path: str) -> TimeEnvelope:
    data = np.loadtxt(full_path, delimiter=",", ndmin=2)
    dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 1.0
    return TimeEnvelope(samples=data[:, 1] + 1j * data[:, 2], dt=dt, t0=float(data[0, 0]))


def save_echo_report(full_path: str, report: EchoReport):
    """Columns delay_s, expected_delay_s, efficiency, phase_rad; first row is the transmitted pulse"""
    rows = [(0.0, 0.0, report.eta_trans, report.trans_phase)]
    rows += [(e.delay, e.expected_delay, e.efficiency, e.phase) for e in report.echoes]
    np.savetxt(full_path, np.array(rows), delimiter=",",
               header="delay_s,expected_delay_s,efficiency,phase_rad", fmt="%.12g")
