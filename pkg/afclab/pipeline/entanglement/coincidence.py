"""
Coincidence analysis of time-tag streams

Delay histograms (t_signal - t_idler), windowed counts, the g2 cross-correlation
with accidental windows, Franson fringe fits and CHSH correlators. Every error
bar is Poissonian.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit

from .errors import SimulationError, ValidationError, WindowError
from .qstate import TSIRELSON_BOUND
from .utils import save_data_json, to_plain

logger = logging.getLogger(__name__)

CLASSICAL_G2_BOUND = 2.0
DEFAULT_BIN_WIDTH = 1e-9
DEFAULT_WINDOW = 10e-9
SUMMARY_SCHEMA_VERSION = "1.0"
PS = 1e-12


def _to_ps(value: float) -> int:
    return int(round(value / PS))


@dataclass(frozen=True)
class DelayHistogram:
    bin_width: float
    range: Tuple[float, float]
    counts: np.ndarray
    n_start_tags: int = 0
    n_stop_tags: int = 0

    def __post_init__(self):
        lo, hi = self.range
        if self.bin_width <= 0 or hi <= lo:
            raise ValidationError(f"invalid histogram binning {self.bin_width}, {self.range}")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (self.n_bins,):
            raise ValidationError(f"expected {self.n_bins} bins, got {counts.shape}")
        if np.any(counts < 0):
            raise ValidationError("histogram counts must be >= 0")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return int(round((self.range[1] - self.range[0]) / self.bin_width))

    @property
    def edges(self) -> np.ndarray:
        return self.range[0] + np.arange(self.n_bins + 1) * self.bin_width

    @property
    def centers(self) -> np.ndarray:
        return self.range[0] + (np.arange(self.n_bins) + 0.5) * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def peak_delay(self, min_delay: Optional[float] = None, smooth: float = 0.0) -> float:
        """
        Center of the fullest bin, optionally among delays >= min_delay; with
        smooth > 0 counts are first summed over a sliding window of that width
        """
        centers = self.centers
        mask = np.ones_like(centers, dtype=bool) if min_delay is None else centers >= min_delay
        if not np.any(mask):
            raise WindowError("no histogram bins above min_delay")
        counts = self.counts
        k = int(round(smooth / self.bin_width))
        if k > 1:
            counts = np.convolve(counts, np.ones(k), mode="same")
        idx = np.flatnonzero(mask)[np.argmax(counts[mask])]
        return float(centers[idx])


@dataclass(frozen=True)
class WindowCount:
    center: float
    width: float
    count: int

    def __post_init__(self):
        if self.width <= 0:
            raise ValidationError("window width must be > 0")
        if self.count < 0:
            raise ValidationError("window count must be >= 0")


@dataclass(frozen=True)
class G2Estimate:
    g2: float
    sigma: float
    n_peak: int
    mean_accidental: float
    n_windows: int
    lower_bound: bool = False

    def non_classical(self, n_sigma: float = 2.0) -> bool:
        return self.g2 - n_sigma * self.sigma > CLASSICAL_G2_BOUND


@dataclass(frozen=True)
class CorrelatorEstimate:
    E: float
    sigma: float
    counts: Tuple[int, int, int, int]


@dataclass(frozen=True)
class ChshResult:
    S: float
    sigma: float
    correlators: Tuple[CorrelatorEstimate, ...] = ()
    signs: Tuple[int, ...] = (1, 1, 1, -1)
    unphysical: bool = False

    @property
    def violation_sigmas(self) -> float:
        return (abs(self.S) - 2.0) / self.sigma if self.sigma > 0 else np.inf


@dataclass(frozen=True)
class VisibilityFit:
    V: float
    V_sigma: float
    phase_offset: float
    phase_sigma: float
    baseline: float
    residuals: np.ndarray = field(default=None, repr=False, compare=False)


def histogram(signal_ps, idler_ps, bin_width: float = DEFAULT_BIN_WIDTH,
              range: Tuple[float, float] = (-500e-9, 500e-9)) -> DelayHistogram:
    """
    Counts of t_signal - t_idler over all tag pairs with delay in [range).
    Inputs are sorted integer picosecond timestamps (TagStream.times); the
    sweep uses two binary searches per signal tag.
    """
    lo, hi = range
    if bin_width <= 0 or hi <= lo:
        raise ValidationError(f"invalid histogram binning {bin_width}, {range}")
    s = np.asarray(signal_ps, dtype=np.int64)
    i = np.asarray(idler_ps, dtype=np.int64)
    n_bins = int(round((hi - lo) / bin_width))
    counts = np.zeros(n_bins, dtype=np.int64)

    if s.size and i.size:
        lo_ps, hi_ps, bw_ps = _to_ps(lo), _to_ps(hi), _to_ps(bin_width)
        # idler tags with s - hi < t_i <= s - lo
        first = np.searchsorted(i, s - hi_ps, side="right")
        last = np.searchsorted(i, s - lo_ps, side="right")
        n_match = last - first
        if n_match.sum():
            owner = np.repeat(np.arange(s.size), n_match)
            offsets = np.arange(n_match.sum()) - np.repeat(np.cumsum(n_match) - n_match, n_match)
            delays = s[owner] - i[np.repeat(first, n_match) + offsets]
            idx = (delays - lo_ps) // bw_ps
            idx = idx[(idx >= 0) & (idx < n_bins)]
            counts += np.bincount(idx, minlength=n_bins)

    return DelayHistogram(bin_width=bin_width, range=(lo, hi), counts=counts,
                          n_start_tags=int(s.size), n_stop_tags=int(i.size))


def stream_histogram(stream, bin_width: float = DEFAULT_BIN_WIDTH,
                     range: Tuple[float, float] = (-500e-9, 500e-9)) -> DelayHistogram:
    """histogram() of channel 0 (signal) against channel 1 (idler) of a TagStream"""
    return histogram(stream.times(0), stream.times(1), bin_width=bin_width, range=range)


def window_count(hist: DelayHistogram, center: float, width: float = DEFAULT_WINDOW) -> WindowCount:
    """Sum of bins whose centers fall in [center - width/2, center + width/2)"""
    c = hist.centers
    mask = (c >= center - width / 2) & (c < center + width / 2)
    if not np.any(mask):
        raise WindowError(f"window at {center:.3e} s lies outside the histogram range")
    return WindowCount(center=center, width=width, count=int(hist.counts[mask].sum()))


def merge_histograms(a: DelayHistogram, b: DelayHistogram) -> DelayHistogram:
    if a.bin_width != b.bin_width or tuple(a.range) != tuple(b.range):
        raise ValidationError("histograms have different binning")
    return DelayHistogram(bin_width=a.bin_width, range=a.range, counts=a.counts + b.counts,
                          n_start_tags=a.n_start_tags + b.n_start_tags,
                          n_stop_tags=a.n_stop_tags + b.n_stop_tags)


def accidental_offsets(peaks: Sequence[float], window: float, n: int,
                       range: Tuple[float, float]) -> List[float]:
    """
    n window centers spread over range, each at least two windows away from
    every correlation peak
    """
    lo, hi = range
    candidates = np.arange(lo + window / 2, hi - window / 2 + 1e-15, window)
    peaks = np.asarray(list(peaks), dtype=float)
    if peaks.size:
        far = np.min(np.abs(candidates[:, None] - peaks[None, :]), axis=1) >= 2 * window
        candidates = candidates[far]
    if candidates.size < n:
        raise WindowError(f"only {candidates.size} accidental windows fit in {range}, need {n}")
    idx = np.round(np.linspace(0, candidates.size - 1, n)).astype(int)
    return [float(c) for c in candidates[idx]]


def g2si(hist: DelayHistogram, peak: float, accidentals: Sequence[float],
         width: float = DEFAULT_WINDOW) -> G2Estimate:
    """
    g2 = N_peak / mean(N_accidental). With no accidental count at all the
    estimate uses one count in total and is flagged as a lower bound.
    """
    accidentals = list(accidentals)
    if len(accidentals) < 3:
        raise WindowError("g2si needs at least 3 accidental windows")
    for a in accidentals:
        if abs(a - peak) < width:
            raise WindowError(f"accidental window at {a:.3e} s overlaps the peak")

    n_peak = window_count(hist, peak, width).count
    n_acc = np.array([window_count(hist, a, width).count for a in accidentals], dtype=float)
    total_acc = n_acc.sum()
    n = len(accidentals)

    if total_acc == 0:
        logger.warning("no accidental coincidences; g2 reported as a lower bound")
        g2 = n_peak * n
        return G2Estimate(g2=float(g2), sigma=float(g2), n_peak=n_peak, mean_accidental=0.0,
                          n_windows=n, lower_bound=True)

    mean_acc = total_acc / n
    g2 = n_peak / mean_acc
    rel = np.sqrt((1.0 / n_peak if n_peak else 0.0) + 1.0 / total_acc)
    sigma = g2 * rel if n_peak else 1.0 / mean_acc
    return G2Estimate(g2=float(g2), sigma=float(sigma), n_peak=n_peak,
                      mean_accidental=float(mean_acc), n_windows=n)


def _fringe(phi, A, V, phi0):
    return A * (1.0 + V * np.cos(phi + phi0))


def fit_visibility(phases: Sequence[float], counts: Sequence[float]) -> VisibilityFit:
    """
    Weighted least squares of counts against A (1 + V cos(phi + phi0)).
    Weights are Poissonian, taken from the fitted model on a second pass.
    """
    phi = np.asarray(phases, dtype=float)
    y = np.asarray(counts, dtype=float)
    if phi.shape != y.shape:
        raise ValidationError("phases and counts differ in length")
    if np.unique(np.round(np.mod(phi, 2 * np.pi), 12)).size < 4:
        raise ValidationError("fit_visibility needs at least 4 distinct phases")
    if np.ptp(phi) <= np.pi:
        raise ValidationError("phases must span more than pi")

    # linear start: y = a + b cos(phi) + c sin(phi)
    design = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    w = 1.0 / np.sqrt(np.maximum(y, 1.0))
    coef, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    a, b, c = coef
    if a <= 0:
        raise SimulationError("fringe baseline is not positive")
    p0 = [a, np.hypot(b, c) / a, np.arctan2(-c, b)]

    params, cov = p0, None
    for _ in range(2):
        model = _fringe(phi, *params)
        sigma = np.sqrt(np.maximum(model if cov is not None else y, 1.0))
        try:
            params, cov = curve_fit(_fringe, phi, y, p0=params, sigma=sigma,
                                    absolute_sigma=True, maxfev=10000)
        except RuntimeError as e:
            raise SimulationError(f"fringe fit did not converge: {e}") from e

    A, V, phi0 = params
    if V < 0:
        V, phi0 = -V, phi0 + np.pi
    phi0 = float(np.angle(np.exp(1j * phi0)))
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    return VisibilityFit(V=float(V), V_sigma=float(errs[1]), phase_offset=phi0,
                         phase_sigma=float(errs[2]), baseline=float(A),
                         residuals=y - _fringe(phi, A, V, phi0))


def contrast_dilution(V: float, B_over_S: float) -> float:
    """Visibility left after adding a flat background B to a signal S"""
    if B_over_S < 0:
        raise ValidationError("B/S must be >= 0")
    return V / (1.0 + B_over_S)


def correlator(counts: Sequence) -> CorrelatorEstimate:
    """
    E = (N++ + N-- - N+- - N-+)/N from four runs, sigma = 2 sqrt(N+ N- / N^3).
    Accepts four WindowCounts (equal widths) or four integers.
    """
    if len(counts) != 4:
        raise ValidationError("correlator needs four counts (N++, N+-, N-+, N--)")
    if all(isinstance(c, WindowCount) for c in counts):
        if len({c.width for c in counts}) != 1:
            raise WindowError("correlator windows must have equal widths")
        n = [c.count for c in counts]
    else:
        n = [int(c) for c in counts]
    if any(v < 0 for v in n):
        raise ValidationError("counts must be >= 0")

    n_pp, n_pm, n_mp, n_mm = n
    n_plus, n_minus = n_pp + n_mm, n_pm + n_mp
    total = n_plus + n_minus
    if total == 0:
        raise ValidationError("all four counts are zero")

    E = (n_plus - n_minus) / total
    sigma = 2.0 * np.sqrt(n_plus * n_minus / total ** 3)
    return CorrelatorEstimate(E=float(E), sigma=float(sigma), counts=tuple(n))


def chsh_S(correlators: Sequence[CorrelatorEstimate],
           signs: Sequence[int] = (1, 1, 1, -1)) -> ChshResult:
    if len(correlators) != 4 or len(signs) != 4:
        raise ValidationError("chsh_S needs exactly 4 correlators and 4 signs")
    if any(s not in (1, -1) for s in signs):
        raise ValidationError("signs must be +1 or -1")

    S = float(sum(s * c.E for s, c in zip(signs, correlators)))
    sigma = float(np.sqrt(sum(c.sigma ** 2 for c in correlators)))
    unphysical = abs(S) > TSIRELSON_BOUND + 1e-9
    if unphysical:
        logger.warning(f"S={S:.3f} exceeds the quantum bound 2*sqrt(2)")
    return ChshResult(S=S, sigma=sigma, correlators=tuple(correlators),
                      signs=tuple(signs), unphysical=unphysical)


def resample_counts(expected, size: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Poisson draws around expected counts, shape (size, *expected.shape)"""
    rng = rng or np.random.default_rng()
    lam = np.asarray(expected, dtype=float)
    return rng.poisson(lam, size=(size,) + lam.shape)


def save_histogram_csv(full_path: str, hist: DelayHistogram):
    np.savetxt(full_path, np.column_stack([hist.centers, hist.counts]),
               delimiter=",", header="delay_s,counts", fmt=["%.6e", "%d"])


def summary_document(g2: Optional[G2Estimate] = None, fit: Optional[VisibilityFit] = None,
                     chsh: Optional[ChshResult] = None, **extra) -> Dict:
    doc = {"schema_version": SUMMARY_SCHEMA_VERSION}
    if g2 is not None:
        doc.update(g2=g2.g2, g2_sigma=g2.sigma, g2_lower_bound=g2.lower_bound)
    if fit is not None:
        doc.update(V=fit.V, V_sigma=fit.V_sigma, phase_offset=fit.phase_offset,
                   phase_sigma=fit.phase_sigma)
    if chsh is not None:
        doc.update(S=chsh.S, S_sigma=chsh.sigma,
                   correlators=[{"E": c.E, "sigma": c.sigma, "counts": list(c.counts)}
                                for c in chsh.correlators])
    doc.update(extra)
    return to_plain(doc)


def save_summary_json(full_path: str, summary: Dict):
    summary = dict(summary)
    summary.setdefault("schema_version", SUMMARY_SCHEMA_VERSION)
    save_data_json(full_path, to_plain(summary))
