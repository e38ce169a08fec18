"""Cell search: NPSS timing/CFO acquisition, CFO refinement and NSSS detection."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.fft as sfft

from nbiot.numerology import (SAMPLE_RATE_HZ, SAMPLES_PER_FRAME, SAMPLES_PER_SUBFRAME,
                              useful_starts)
from nbiot.sequences import NPSS_CODE_COVER, generate_npss, nsss_codebook
from nbiot.waveform import DL_BINS, FFT_SIZE, Waveform, ofdm_demodulate

NPSS_SUBFRAME = 5
NSSS_SUBFRAME = 9
NPSS_FIRST_SYMBOL = 3
CFO_STEP_HZ = 7500.0
CFO_HYPOTHESES = tuple(CFO_STEP_HZ * h for h in range(-4, 5))
DEFAULT_WEIGHT = 0.9
DEFAULT_NSSS_OCCASIONS = 8
LOOKAHEAD = SAMPLES_PER_SUBFRAME
_FFT_LEN = 23040   # 83.3 Hz bins: the 7.5 kHz hypothesis step is 90 bins
DECIMATION = 4
BUFFER_LEN = SAMPLES_PER_FRAME // DECIMATION

# NPSS useful-part offsets relative to the first NPSS symbol, and the pair weights
# of the differential combiner (products of neighbouring code-cover chips).
_STARTS = np.array(useful_starts()[NPSS_FIRST_SYMBOL:], dtype=int)
NPSS_OFFSETS = _STARTS - _STARTS[0]
_PAIR_WEIGHTS = (NPSS_CODE_COVER[:-1] * NPSS_CODE_COVER[1:]).astype(float)
_MEAN_LAG = float(NPSS_OFFSETS[-1]) / (len(NPSS_OFFSETS) - 1)
# sample index (within a frame) of the first NPSS useful sample
NPSS_FRAME_OFFSET = NPSS_SUBFRAME * SAMPLES_PER_SUBFRAME + int(_STARTS[0])

# Per-accumulation-count detection thresholds on the peak/mean metric for
# weight 0.9, from thresholds_from_trajectories(noise_metric_trajectories(
# 2000, 64, 0.9, seed=20261019), 0.005). The 0.5 % design rate leaves margin
# under a 1 % sequential false-alarm target for the 64-segment search.
_THRESHOLDS_09 = np.array([7.93, 7.8, 7.73, 6.96, 6.27] + [5.8] * 52 + [5.64] + [5.47] * 6)


class SyncError(RuntimeError):
    """Raised when a detection step cannot produce a trustworthy answer."""


@dataclass
class SyncResult:
    detected: bool = False
    sample_timing: Optional[int] = None      # first sample of a radio frame (mod 19200)
    cfo_hz_estimate: Optional[float] = None
    nb_pcid: Optional[int] = None
    frame_position_80ms: Optional[int] = None  # frame number mod 8 of the frame at sample_timing
    metric_peak: float = 0.0
    accumulation_count: int = 0


@dataclass
class AccumulatorState:
    """Weighted accumulation of the per-segment NPSS correlation.

    ``correlation_buffer`` holds one 10 ms segment of lags (at 480 ksps) for
    each CFO hypothesis, shape (..., hypotheses, 4800); leading axes batch
    independent receivers.
    """
    weight: float = DEFAULT_WEIGHT
    correlation_buffer: Optional[np.ndarray] = None
    segments_accumulated: int = 0
    metric_history: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.weight <= 1:
            raise ValueError("weight must lie in (0, 1]")

    def update(self, segment_correlation: np.ndarray) -> None:
        if self.correlation_buffer is None:
            self.correlation_buffer = np.array(segment_correlation, dtype=complex)
        else:
            self.correlation_buffer = self.weight * self.correlation_buffer + segment_correlation
        self.segments_accumulated += 1


@lru_cache(maxsize=1)
def npss_reference() -> np.ndarray:
    """Time-domain useful part of one NPSS symbol before its code-cover chip."""
    spec = np.zeros(FFT_SIZE, complex)
    spec[DL_BINS[:11]] = generate_npss().base.values
    return np.fft.ifft(spec) * FFT_SIZE / np.sqrt(12)


@lru_cache(maxsize=1)
def _filter_bank() -> np.ndarray:
    """Matched filters per (CFO hypothesis, lag phase) on the decimated band.

    Filter (h, r) correlates with the NPSS reference shifted by hypothesis h
    and advances the lag by r full-rate samples, so its inverse FFT is the
    correlation at full-rate lags 4m + r.
    """
    n = np.arange(FFT_SIZE)
    refs = npss_reference()[None, :] * np.exp(
        2j * np.pi * np.array(CFO_HYPOTHESES)[:, None] * n / SAMPLE_RATE_HZ)
    full = np.conj(sfft.fft(refs, _FFT_LEN, axis=-1))
    k = _band_bins()
    ramps = np.exp(2j * np.pi * k[None, :] * np.arange(DECIMATION)[:, None] / _FFT_LEN)
    bank = (full[:, None, k % _FFT_LEN] * ramps[None, :, :]).astype(np.complex64)
    bank.setflags(write=False)
    return bank


def _band_bins() -> np.ndarray:
    """Signed full-rate FFT bins kept after decimation, in decimated FFT order."""
    m = _FFT_LEN // DECIMATION
    return np.fft.fftfreq(m, 1.0 / m).astype(int)


def _segments(samples: np.ndarray) -> np.ndarray:
    """Split (..., N) samples into (..., S, 19200 + lookahead) with zero padding."""
    n = samples.shape[-1]
    count = n // SAMPLES_PER_FRAME
    if count < 1:
        raise ValueError("at least one full 10 ms segment is required")
    short = max(count * SAMPLES_PER_FRAME + LOOKAHEAD - n, 0)
    x = np.concatenate([samples, np.zeros(samples.shape[:-1] + (short,), complex)], axis=-1)
    idx = np.arange(count)[:, None] * SAMPLES_PER_FRAME + np.arange(SAMPLES_PER_FRAME + LOOKAHEAD)
    return x[..., idx]


def segment_correlation(segment: np.ndarray) -> np.ndarray:
    """Differential NPSS correlation D[h, m] of one segment on the decimated lag grid.

    Adjacent per-symbol correlations are multiplied with the code-cover
    sign of the pair and summed; the phase of D tracks the CFO.
    """
    spec = sfft.fft(segment, _FFT_LEN, axis=-1)[..., _band_bins() % _FFT_LEN]
    y = sfft.ifft(spec.astype(np.complex64)[..., None, None, :] * _filter_bank(), axis=-1)
    sym = [y[..., u % DECIMATION, u // DECIMATION:u // DECIMATION + BUFFER_LEN]
           for u in NPSS_OFFSETS]
    out = np.zeros(y.shape[:-2] + (BUFFER_LEN,), np.complex64)
    for i, w in enumerate(_PAIR_WEIGHTS):
        out += w * sym[i + 1] * np.conj(sym[i])
    return out.astype(complex)


def upsample_lags(buffer: np.ndarray) -> np.ndarray:
    """Band-limited interpolation of a decimated lag buffer back to 1.92 Msps."""
    spec = np.fft.fft(buffer, axis=-1)
    n = buffer.shape[-1]
    padded = np.zeros(buffer.shape[:-1] + (n * DECIMATION,), complex)
    half = n // 2
    padded[..., :half] = spec[..., :half]
    padded[..., -half:] = spec[..., -half:]
    return np.fft.ifft(padded, axis=-1) * DECIMATION


def peak_to_mean(buffer: np.ndarray) -> np.ndarray:
    mag = np.abs(buffer).reshape(buffer.shape[:-2] + (-1,))
    return mag.max(axis=-1) / mag.mean(axis=-1)


def detection_threshold(count: int, weight: float = DEFAULT_WEIGHT) -> float:
    """Peak/mean threshold after ``count`` accumulated segments."""
    if weight == DEFAULT_WEIGHT and _THRESHOLDS_09 is not None:
        return _THRESHOLDS_09[min(count, len(_THRESHOLDS_09)) - 1]
    return 8.0


def _timing_from_peak(buffer: np.ndarray):
    buffer = upsample_lags(buffer)
    mag = np.abs(buffer)
    flat = mag.reshape(mag.shape[:-2] + (-1,)).argmax(axis=-1)
    h, tau = np.unravel_index(flat, mag.shape[-2:])
    peak = np.take_along_axis(buffer.reshape(buffer.shape[:-2] + (-1,)),
                              np.asarray(flat)[..., None], axis=-1)[..., 0]
    # the lag phase measures the total CFO modulo fs/lag; unwrap it around the hypothesis
    period = SAMPLE_RATE_HZ / _MEAN_LAG
    hyp = np.array(CFO_HYPOTHESES)[h]
    measured = np.angle(peak) / (2 * np.pi) * period
    cfo = hyp + (measured - hyp + period / 2) % period - period / 2
    timing = (tau - NPSS_FRAME_OFFSET) % SAMPLES_PER_FRAME
    return timing, cfo


def npss_search(samples, state: Optional[AccumulatorState] = None,
                stop_on_detect: bool = True, thresholds=None, confirm: int = 1):
    """Accumulate every full 10 ms segment of ``samples`` and test for the NPSS.

    Returns ``(state, result)``. ``samples`` may be a Waveform, a 1-D array or
    a 2-D (trials, samples) array; for batches ``result`` is a list.  With
    ``stop_on_detect`` a trial is declared detected at its first threshold
    crossing and freezes ``confirm`` segments later; the extra segments only
    sharpen the timing and CFO read from the peak. A single marginal segment
    can peak on a neighbouring CFO hypothesis at a shifted lag.
    """
    x = samples.samples if isinstance(samples, Waveform) else np.asarray(samples)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    batch = x.shape[0]
    state = state or AccumulatorState()
    segs = _segments(x)
    done = np.zeros(batch, bool)
    crossed = np.full(batch, -1)
    metric = np.zeros(batch)
    counts = np.zeros(batch, int)
    for s in range(segs.shape[1]):
        active = ~done
        if not active.any():
            break
        d = segment_correlation(segs[active, s])
        if state.correlation_buffer is None or state.correlation_buffer.shape[0] != batch:
            prev = (np.zeros((batch,) + d.shape[1:], complex) if state.correlation_buffer is None
                    else np.broadcast_to(state.correlation_buffer, (batch,) + d.shape[1:]).copy())
            state.correlation_buffer = prev
        buf = state.correlation_buffer
        buf[active] = state.weight * buf[active] + d
        counts[active] = state.segments_accumulated + s + 1
        m = peak_to_mean(buf[active])
        metric[active] = m
        thr = np.array([(thresholds[c - 1] if thresholds is not None
                         else detection_threshold(c, state.weight)) for c in counts[active]])
        hit = m >= thr
        idx = np.flatnonzero(active)
        first = idx[hit & (crossed[idx] < 0)]
        crossed[first] = s
        if stop_on_detect:
            done[(crossed >= 0) & (s - crossed >= confirm)] = True
    state.segments_accumulated += segs.shape[1] if not stop_on_detect else int(counts.max())
    state.metric_history.append(metric.copy())
    timing, cfo = _timing_from_peak(state.correlation_buffer)
    results = []
    for b in range(batch):
        c = int(counts[b])
        if stop_on_detect:
            detected = bool(crossed[b] >= 0)
        else:
            detected = bool(metric[b] >= (thresholds[c - 1] if thresholds is not None
                                          else detection_threshold(c, state.weight)))
        results.append(SyncResult(detected, int(timing[b]) if detected else None,
                                  float(cfo[b]) if detected else None, None, None,
                                  float(metric[b]), c))
    if single:
        state.correlation_buffer = state.correlation_buffer[0]
        return state, results[0]
    return state, results


def noise_metric_trajectories(trials: int, segments: int = 64, weight: float = DEFAULT_WEIGHT,
                              seed=None, batch: int = 16) -> np.ndarray:
    """Peak/mean metric after each accumulated segment for noise-only input."""
    rng = np.random.default_rng(seed)
    out = np.empty((trials, segments))
    for lo in range(0, trials, batch):
        b = min(batch, trials - lo)
        buf = 0
        for s in range(segments):
            seg = (rng.standard_normal((b, SAMPLES_PER_FRAME + LOOKAHEAD))
                   + 1j * rng.standard_normal((b, SAMPLES_PER_FRAME + LOOKAHEAD)))
            buf = weight * buf + segment_correlation(seg)
            out[lo:lo + b, s] = peak_to_mean(buf)
    return out


def thresholds_from_trajectories(metrics: np.ndarray, false_alarm: float = 0.01,
                                 window: int = 2) -> np.ndarray:
    """Per-count thresholds whose sequential false-alarm rate is ``false_alarm``.

    Quantiles are pooled over neighbouring counts and made non-increasing in
    the count; the common tail level is found by bisection on the joint
    (any-crossing) rate of the supplied trajectories.
    """
    trials, counts = metrics.shape

    def table(alpha):
        thr = np.array([np.quantile(metrics[:, max(0, k - window):k + window + 1], 1 - alpha)
                        for k in range(counts)])
        return np.maximum.accumulate(thr[::-1])[::-1]

    lo, hi = 1e-6, false_alarm
    for _ in range(40):
        mid = np.sqrt(lo * hi)
        rate = np.mean((metrics >= table(mid)).any(axis=1))
        lo, hi = (mid, hi) if rate <= false_alarm else (lo, mid)
    return np.ceil(table(lo) * 100) / 100


def calibrate_threshold(false_alarm: float = 0.01, trials: int = 1000, segments: int = 64,
                        weight: float = DEFAULT_WEIGHT, seed=None) -> np.ndarray:
    """Monte Carlo constant-false-alarm calibration of the detection thresholds."""
    metrics = noise_metric_trajectories(trials, segments, weight, seed)
    return thresholds_from_trajectories(metrics, false_alarm)


# -- CFO refinement -----------------------------------------------------------

def _npss_symbol_correlations(x: np.ndarray, timing: int, cfo: float) -> np.ndarray:
    """Code-cover-stripped NPSS symbol correlations a[frame, symbol] after derotation."""
    n_frames = (x.size - timing - NPSS_FRAME_OFFSET - NPSS_OFFSETS[-1] - FFT_SIZE) // SAMPLES_PER_FRAME + 1
    if n_frames < 1:
        raise SyncError("no complete NPSS after the coarse timing")
    starts = (timing + NPSS_FRAME_OFFSET + np.arange(n_frames)[:, None] * SAMPLES_PER_FRAME
              + NPSS_OFFSETS[None, :])
    idx = starts[..., None] + np.arange(FFT_SIZE)
    blocks = x[idx] * np.exp(-2j * np.pi * cfo * idx / SAMPLE_RATE_HZ)
    return (blocks @ np.conj(npss_reference())) * NPSS_CODE_COVER


def _lag_estimate(a: np.ndarray, lag: int) -> float:
    prod = a[:, lag:] * np.conj(a[:, :-lag])
    span = np.mean(NPSS_OFFSETS[lag:] - NPSS_OFFSETS[:-lag])
    return float(np.angle(prod.sum()) * SAMPLE_RATE_HZ / (2 * np.pi * span))


def estimate_cfo(samples, coarse_timing: int, coarse_cfo: Optional[float] = None,
                 lags=(1, 5, 10)) -> float:
    """Refine the CFO from the phase progression across the NPSS symbols.

    Without ``coarse_cfo`` the integer 7.5 kHz step is chosen by searching
    the hypothesis grid; the fractional part then comes from successively
    longer symbol lags, each within the unambiguous range of the previous.
    """
    x = samples.samples if isinstance(samples, Waveform) else np.asarray(samples)
    if coarse_cfo is None:
        powers = [abs(np.sum(_npss_symbol_correlations(x, coarse_timing, h)[:, 1:]
                             * np.conj(_npss_symbol_correlations(x, coarse_timing, h)[:, :-1])))
                  for h in CFO_HYPOTHESES]
        coarse_cfo = CFO_HYPOTHESES[int(np.argmax(powers))]
    cfo = float(coarse_cfo)
    for lag in lags:
        cfo += _lag_estimate(_npss_symbol_correlations(x, coarse_timing, cfo), lag)
    return cfo


# -- NSSS ---------------------------------------------------------------------

def _derotate(x: np.ndarray, cfo: float) -> np.ndarray:
    return x * np.exp(-2j * np.pi * cfo * np.arange(x.size) / SAMPLE_RATE_HZ)


def nsss_observations(samples, timing: int, cfo: float, frames: int) -> np.ndarray:
    """The 132 NSSS-position values of subframe 9 of ``frames`` consecutive frames."""
    x = _derotate(samples.samples if isinstance(samples, Waveform) else np.asarray(samples), cfo)
    out = []
    for f in range(frames):
        start = timing + f * SAMPLES_PER_FRAME + NSSS_SUBFRAME * SAMPLES_PER_SUBFRAME
        if start + SAMPLES_PER_SUBFRAME > x.size:
            break
        grid = ofdm_demodulate(x, 1, start)[0]
        n = np.arange(132)
        out.append(grid[n % 12, NPSS_FIRST_SYMBOL + n // 12])
    if len(out) < 2:
        raise SyncError("NSSS detection needs at least two frames after the timing")
    return np.array(out)


@lru_cache(maxsize=16)
def nsss_threshold(occasions: int, false_alarm: float = 0.01) -> float:
    """Normalized-metric threshold for ``occasions`` combined NSSS observations."""
    from scipy.stats import gamma
    cells = 504 * 4 * 2
    return float(gamma.isf(false_alarm / cells, occasions) / occasions)


def nsss_detect(samples, timing: int, cfo: float,
                occasions: int = DEFAULT_NSSS_OCCASIONS, false_alarm: float = 0.01):
    """ML search over NB-PCID, 80 ms shift and frame parity.

    Occasions are combined non-coherently. The normalized metric equals the
    NSSS length for a noiseless match. Returns ``(nb_pcid, frame_position)``
    where the position is the frame number mod 8 of the frame at ``timing``.
    """
    obs = nsss_observations(samples, timing, cfo, 2 * occasions)
    book = nsss_codebook().reshape(-1, 132)
    energy = np.sum(np.abs(obs) ** 2, axis=1)
    energy[energy == 0] = np.inf
    g = np.abs(obs @ np.conj(book).T) ** 2 / energy[:, None]
    g = g.reshape(len(obs), 504, 4)
    best = (-np.inf, 0, 0, 0)
    for parity in (0, 1):
        frames = np.arange(parity, len(obs), 2)
        if frames.size == 0:
            continue
        for theta in range(4):
            m = sum(g[f, :, (theta + j) % 4] for j, f in enumerate(frames)) / frames.size
            p = int(np.argmax(m))
            if m[p] > best[0]:
                best = (float(m[p]), p, theta, parity)
    metric, pcid, theta, parity = best
    used = len(range(best[3], len(obs), 2))
    if metric < nsss_threshold(used, false_alarm):
        raise SyncError(f"NSSS metric {metric:.2f} below threshold")
    return pcid, (2 * theta - parity) % 8


def cell_search(samples, state: Optional[AccumulatorState] = None,
                occasions: int = DEFAULT_NSSS_OCCASIONS) -> SyncResult:
    """NPSS acquisition followed by CFO refinement and NSSS detection."""
    x = samples.samples if isinstance(samples, Waveform) else np.asarray(samples)
    state, result = npss_search(x, state)
    if not result.detected:
        return result
    timing = result.sample_timing
    result.cfo_hz_estimate = estimate_cfo(x, timing, result.cfo_hz_estimate)
    try:
        result.nb_pcid, result.frame_position_80ms = nsss_detect(
            x, timing, result.cfo_hz_estimate, occasions)
    except SyncError:
        result.detected = False
    return result
