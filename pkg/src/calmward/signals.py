"""Biosignal processing and synthesis.

Covers the raw-signal side of the engine: moving-average smoothing of the
optical pulse stream, beat extraction with an adaptive threshold, HR/SDNN
vitals over sliding windows, skin-conductance fluctuation flags, and seeded
generators that produce realistic pulse and conductance streams for tests
and agent-driven sessions.

Every stage is chunk-oriented: it accepts samples in arbitrary batches and
keeps its own carry state, so the same code path serves batch helpers, the
fixed-step simulation loop, and live wire ingestion. All stochastic output
is driven by an explicit seed and is bit-reproducible.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, InsufficientDataError, StreamOrderError

PPG_SAMPLE_RATE_HZ = 125.0
PPG_SAMPLE_SPACING_MS = 1000.0 / PPG_SAMPLE_RATE_HZ  # 8 ms
GSR_SAMPLE_RATE_HZ = 25.0

# Physiological plausibility gate for inter-beat intervals. The lower bound
# doubles as the detector refractory period; intervals at or above the upper
# bound (a dropped beat at 30 bpm) are treated as artifacts and rejected.
NN_MIN_MS = 250.0
NN_MAX_MS = 2000.0

DEFAULT_VITALS_WINDOW_MS = 10_000.0
DEFAULT_VITALS_HOP_MS = 1_000.0


@dataclass(frozen=True)
class PpgSample:
    """One optical pulse sample (dimensionless amplitude)."""

    t_ms: float
    value: float


@dataclass(frozen=True)
class GsrSample:
    """One skin-conductance sample in microsiemens."""

    t_ms: float
    conductance: float

    def __post_init__(self):
        if not math.isfinite(self.conductance) or self.conductance < 0:
            raise ConfigError(f"conductance must be finite and >= 0, got {self.conductance}")


@dataclass(frozen=True)
class NnSeries:
    """Ordered inter-beat intervals in milliseconds, already plausibility-gated."""

    intervals_ms: Tuple[float, ...]

    def __post_init__(self):
        for iv in self.intervals_ms:
            if not (NN_MIN_MS <= iv <= NN_MAX_MS):
                raise ConfigError(f"NN interval {iv} ms outside [{NN_MIN_MS}, {NN_MAX_MS}]")

    def __len__(self) -> int:
        return len(self.intervals_ms)


@dataclass(frozen=True)
class VitalsEstimate:
    """HR and SDNN measured over one sliding window."""

    hr_bpm: float
    sdnn_ms: float
    window_start_ms: float
    window_end_ms: float


class MovingAverageFilter:
    """Centered moving average with shrunken symmetric windows at the edges.

    Output timestamps equal input timestamps and output length equals input
    length once the stream is flushed; a constant stream passes through
    unchanged. Timestamps must be strictly increasing.
    """

    def __init__(self, window_len: int):
        if window_len < 1 or window_len % 2 == 0:
            raise ConfigError(f"window_len must be odd and >= 1, got {window_len}")
        self.window_len = window_len
        self.half = window_len // 2
        self._t = np.empty(0, dtype=float)
        self._v = np.empty(0, dtype=float)
        self._buf_start = 0   # global index of _t[0] / _v[0]
        self._emit_next = 0   # global index of next sample to emit
        self._seen = 0        # total samples accepted
        self._last_t: Optional[float] = None

    def _check_order(self, t_ms: np.ndarray):
        if len(t_ms) == 0:
            return
        if self._last_t is not None and t_ms[0] <= self._last_t:
            raise StreamOrderError(f"timestamp {t_ms[0]} not after {self._last_t}")
        if len(t_ms) > 1 and not np.all(np.diff(t_ms) > 0):
            raise StreamOrderError("timestamps within chunk are not strictly increasing")

    def feed(self, t_ms, values) -> Tuple[np.ndarray, np.ndarray]:
        """Accept a chunk, return the (timestamps, filtered) now determined."""
        t_ms = np.asarray(t_ms, dtype=float)
        values = np.asarray(values, dtype=float)
        if t_ms.shape != values.shape:
            raise ConfigError("timestamp and value arrays must have the same shape")
        self._check_order(t_ms)
        if len(t_ms):
            self._last_t = float(t_ms[-1])
        self._t = np.concatenate([self._t, t_ms])
        self._v = np.concatenate([self._v, values])
        self._seen += len(t_ms)

        out_t: List[np.ndarray] = []
        out_v: List[np.ndarray] = []
        last = self._seen - 1
        # Left-edge samples use a window shrunk to stay symmetric.
        while self._emit_next < self.half and self._emit_next + self._emit_next <= last:
            i = self._emit_next - self._buf_start
            h = self._emit_next
            seg = self._v[i - h:i + h + 1]
            out_t.append(self._t[i:i + 1])
            out_v.append(np.array([seg.sum() / len(seg)]))
            self._emit_next += 1
        # Interior samples: full window, vectorized.
        if self._emit_next >= self.half and self._emit_next + self.half <= last:
            first = self._emit_next
            final = last - self.half
            lo = first - self.half - self._buf_start
            hi = final + self.half - self._buf_start
            seg = self._v[lo:hi + 1]
            smoothed = np.convolve(seg, np.ones(self.window_len), mode="valid") / self.window_len
            out_t.append(self._t[first - self._buf_start:final - self._buf_start + 1])
            out_v.append(smoothed)
            self._emit_next = final + 1
        # Trim everything no longer reachable by a future window.
        keep_from = max(self._emit_next - self.half, 0)
        if keep_from > self._buf_start:
            cut = keep_from - self._buf_start
            self._t = self._t[cut:]
            self._v = self._v[cut:]
            self._buf_start = keep_from
        if not out_t:
            return np.empty(0), np.empty(0)
        return np.concatenate(out_t), np.concatenate(out_v)

    def flush(self) -> Tuple[np.ndarray, np.ndarray]:
        """Emit the right-edge samples with shrunken symmetric windows."""
        out_t: List[float] = []
        out_v: List[float] = []
        last = self._seen - 1
        while self._emit_next <= last:
            i = self._emit_next - self._buf_start
            h = min(self.half, self._emit_next, last - self._emit_next)
            seg = self._v[i - h:i + h + 1]
            out_t.append(float(self._t[i]))
            out_v.append(float(seg.sum() / len(seg)))
            self._emit_next += 1
        return np.array(out_t), np.array(out_v)


def moving_average(samples: Iterable[PpgSample], window_len: int) -> List[PpgSample]:
    """Batch wrapper around :class:`MovingAverageFilter`."""
    samples = list(samples)
    filt = MovingAverageFilter(window_len)
    t, v = filt.feed([s.t_ms for s in samples], [s.value for s in samples])
    t2, v2 = filt.flush()
    tt = np.concatenate([t, t2])
    vv = np.concatenate([v, v2])
    return [PpgSample(float(a), float(b)) for a, b in zip(tt, vv)]


class PeakDetector:
    """Beat extraction via local maxima over an adaptive rolling threshold.

    A sample is a beat candidate when it is a strict local maximum and
    exceeds the trailing-window mean by ``threshold_sigma`` standard
    deviations. Candidates inside the refractory period of the previous
    beat are suppressed, and nothing is reported until ``warmup_ms`` of
    signal has been observed. A flat stream yields no beats.
    """

    def __init__(self, stat_window: int = 375, threshold_sigma: float = 0.5,
                 refractory_ms: float = NN_MIN_MS, warmup_ms: float = 3000.0):
        self.stat_window = stat_window
        self.threshold_sigma = threshold_sigma
        self.refractory_ms = refractory_ms
        self.warmup_ms = warmup_ms
        self._tail_t = np.empty(0, dtype=float)
        self._tail_v = np.empty(0, dtype=float)
        self._t0: Optional[float] = None
        self._last_beat: Optional[float] = None
        self._last_t: Optional[float] = None

    def feed(self, t_ms, values) -> List[float]:
        t_ms = np.asarray(t_ms, dtype=float)
        values = np.asarray(values, dtype=float)
        if len(t_ms) == 0:
            return []
        if self._last_t is not None and t_ms[0] <= self._last_t:
            raise StreamOrderError(f"timestamp {t_ms[0]} not after {self._last_t}")
        if len(t_ms) > 1 and not np.all(np.diff(t_ms) > 0):
            raise StreamOrderError("timestamps within chunk are not strictly increasing")
        self._last_t = float(t_ms[-1])
        if self._t0 is None:
            self._t0 = float(t_ms[0])

        tail_len = len(self._tail_t)
        t = np.concatenate([self._tail_t, t_ms])
        v = np.concatenate([self._tail_v, values])
        n = len(v)

        beats: List[float] = []
        # Evaluate positions [tail_len-1, n-2] (new samples and the one held
        # back last time), skipping anything without both neighbours.
        lo = max(tail_len - 1, 1)
        hi = n - 2
        if hi >= lo:
            idx = np.arange(lo, hi + 1)
            local_max = (v[idx] > v[idx - 1]) & (v[idx] >= v[idx + 1])
            cand = idx[local_max]
            if len(cand):
                c1 = np.concatenate([[0.0], np.cumsum(v)])
                c2 = np.concatenate([[0.0], np.cumsum(v * v)])
                for j in cand:
                    k = min(self.stat_window, j + 1)
                    s1 = c1[j + 1] - c1[j + 1 - k]
                    s2 = c2[j + 1] - c2[j + 1 - k]
                    mean = s1 / k
                    var = max(s2 / k - mean * mean, 0.0)
                    if v[j] <= mean + self.threshold_sigma * math.sqrt(var):
                        continue
                    bt = float(t[j])
                    if bt - self._t0 < self.warmup_ms:
                        continue
                    if self._last_beat is not None and bt - self._last_beat < self.refractory_ms:
                        continue
                    self._last_beat = bt
                    beats.append(bt)
        keep = min(n, self.stat_window + 1)
        self._tail_t = t[n - keep:]
        self._tail_v = v[n - keep:]
        return beats


def detect_peaks(filtered: Iterable[PpgSample]) -> List[float]:
    """Batch wrapper around :class:`PeakDetector`; returns beat timestamps."""
    samples = list(filtered)
    det = PeakDetector()
    return det.feed([s.t_ms for s in samples], [s.value for s in samples])


def nn_intervals(beat_ts: Sequence[float]) -> NnSeries:
    """Successive beat differences, keeping only plausible intervals.

    The gate accepts intervals in [NN_MIN_MS, NN_MAX_MS); a gap produced by
    a dropped beat (>= 2000 ms) never enters the series.
    """
    kept = []
    for a, b in zip(beat_ts, beat_ts[1:]):
        iv = b - a
        if NN_MIN_MS <= iv < NN_MAX_MS:
            kept.append(iv)
    return NnSeries(tuple(kept))


def compute_hr(nn: NnSeries) -> float:
    """Heart rate in bpm: 60000 / mean interval."""
    if len(nn) == 0:
        raise InsufficientDataError("HR requires at least one NN interval")
    return 60_000.0 / (sum(nn.intervals_ms) / len(nn))


def compute_sdnn(nn: NnSeries) -> float:
    """Population standard deviation of the NN intervals in milliseconds."""
    if len(nn) < 2:
        raise InsufficientDataError("SDNN requires at least two NN intervals")
    ivs = nn.intervals_ms
    mean = sum(ivs) / len(ivs)
    var = sum((x - mean) ** 2 for x in ivs) / len(ivs)
    return math.sqrt(var)


class VitalsTracker:
    """Sliding-window HR/SDNN over extracted beats.

    Windows are ``window_ms`` long and advance by ``hop_ms``; an estimate is
    produced for a hop only when the window holds at least two plausible
    intervals.
    """

    def __init__(self, window_ms: float = DEFAULT_VITALS_WINDOW_MS,
                 hop_ms: float = DEFAULT_VITALS_HOP_MS):
        self.window_ms = window_ms
        self.hop_ms = hop_ms
        self._beats: List[float] = []

    def add_beats(self, beats: Iterable[float]):
        self._beats.extend(beats)

    def estimate_at(self, window_end_ms: float) -> Optional[VitalsEstimate]:
        start = window_end_ms - self.window_ms
        lo = bisect_left(self._beats, start)
        hi = bisect_right(self._beats, window_end_ms)
        nn = nn_intervals(self._beats[lo:hi])
        if len(nn) < 2:
            return None
        return VitalsEstimate(
            hr_bpm=compute_hr(nn),
            sdnn_ms=compute_sdnn(nn),
            window_start_ms=start,
            window_end_ms=window_end_ms,
        )

    def drop_before(self, t_ms: float):
        lo = bisect_left(self._beats, t_ms)
        if lo:
            self._beats = self._beats[lo:]


class GsrMonitor:
    """Rise detector for skin conductance.

    Flags when the trailing ``trailing_ms`` mean conductance exceeds the
    rolling ``reference_ms`` mean by more than ``rise_fraction``. This
    stands in for the opaque fluctuation detector shipped with commodity
    GSR sensors and is deliberately simple and configurable.
    """

    def __init__(self, reference_ms: float = 5000.0, trailing_ms: float = 1000.0,
                 rise_fraction: float = 0.10):
        if trailing_ms > reference_ms:
            raise ConfigError("trailing window must not exceed the reference window")
        self.reference_ms = reference_ms
        self.trailing_ms = trailing_ms
        self.rise_fraction = rise_fraction
        self._t: List[float] = []
        self._v: List[float] = []
        self._last_t: Optional[float] = None

    def feed(self, t_ms: Iterable[float], conductance: Iterable[float]):
        for t, c in zip(t_ms, conductance):
            if self._last_t is not None and t <= self._last_t:
                raise StreamOrderError(f"timestamp {t} not after {self._last_t}")
            self._last_t = float(t)
            self._t.append(float(t))
            self._v.append(float(c))
        # Keep only what the reference window can reach.
        if self._t and self._t[-1] - self._t[0] > 4 * self.reference_ms:
            cut = bisect_left(self._t, self._t[-1] - 2 * self.reference_ms)
            self._t = self._t[cut:]
            self._v = self._v[cut:]

    def span_ms(self) -> float:
        if not self._t:
            return 0.0
        return self._t[-1] - self._t[0]

    def evaluate(self) -> bool:
        if self.span_ms() < self.reference_ms:
            raise InsufficientDataError(
                f"need {self.reference_ms} ms of conductance, have {self.span_ms()}"
            )
        end = self._t[-1]
        ref_lo = bisect_left(self._t, end - self.reference_ms)
        tr_lo = bisect_left(self._t, end - self.trailing_ms)
        ref = self._v[ref_lo:]
        tr = self._v[tr_lo:]
        ref_mean = sum(ref) / len(ref)
        tr_mean = sum(tr) / len(tr)
        if ref_mean <= 0:
            return False
        return tr_mean > ref_mean * (1.0 + self.rise_fraction)


def gsr_fluctuation(window: Iterable[GsrSample], reference_ms: float = 5000.0,
                    trailing_ms: float = 1000.0, rise_fraction: float = 0.10) -> bool:
    """Batch wrapper around :class:`GsrMonitor`."""
    mon = GsrMonitor(reference_ms=reference_ms, trailing_ms=trailing_ms,
                     rise_fraction=rise_fraction)
    samples = list(window)
    mon.feed([s.t_ms for s in samples], [s.conductance for s in samples])
    return mon.evaluate()


class PpgSynthesizer:
    """Seeded pulse-stream generator with controllable HR and SDNN targets.

    Beats are scheduled from the current HR target with Gaussian interval
    jitter scaled to the SDNN target; each beat contributes a Gaussian pulse
    so the waveform peaks exactly at the scheduled beat time. Output is
    bit-reproducible for a fixed seed.
    """

    MIN_INTERVAL_MS = 300.0

    def __init__(self, seed: int, sample_rate_hz: float = PPG_SAMPLE_RATE_HZ,
                 pulse_sigma_ms: float = 45.0, noise_sigma: float = 0.0):
        self._rng = np.random.default_rng(seed)
        self.spacing_ms = 1000.0 / sample_rate_hz
        self.pulse_sigma_ms = pulse_sigma_ms
        self.noise_sigma = noise_sigma
        self._hr_bpm = 70.0
        self._sdnn_ms = 40.0
        self._next_sample = 0          # index of the next sample to emit
        self._beats: List[float] = []  # scheduled beat times
        self._beat_cursor = 0.0        # time of the last scheduled beat

    def set_targets(self, hr_bpm: float, sdnn_ms: float):
        if hr_bpm <= 0:
            raise ConfigError(f"HR target must be positive, got {hr_bpm}")
        if sdnn_ms < 0:
            raise ConfigError(f"SDNN target must be >= 0, got {sdnn_ms}")
        self._hr_bpm = float(hr_bpm)
        self._sdnn_ms = float(sdnn_ms)

    def true_beats(self) -> List[float]:
        """Ground-truth beat schedule generated so far (for oracle tests)."""
        return list(self._beats)

    def _schedule_beats(self, until_ms: float):
        margin = 6 * self.pulse_sigma_ms
        while self._beat_cursor < until_ms + margin:
            interval = 60_000.0 / self._hr_bpm + self._rng.normal(0.0, self._sdnn_ms)
            interval = max(interval, self.MIN_INTERVAL_MS)
            self._beat_cursor += interval
            self._beats.append(self._beat_cursor)

    def generate_until(self, t_ms: float) -> Tuple[np.ndarray, np.ndarray]:
        """Emit all samples with timestamp < ``t_ms`` not yet produced."""
        last_index = int(math.ceil(t_ms / self.spacing_ms)) - 1
        if last_index < self._next_sample:
            return np.empty(0), np.empty(0)
        idx = np.arange(self._next_sample, last_index + 1)
        ts = idx * self.spacing_ms
        self._schedule_beats(float(ts[-1]))
        values = np.zeros(len(ts))
        sig = self.pulse_sigma_ms
        reach = 5 * sig
        lo = bisect_left(self._beats, float(ts[0]) - reach)
        hi = bisect_right(self._beats, float(ts[-1]) + reach)
        for b in self._beats[lo:hi]:
            d = (ts - b) / sig
            values += np.exp(-0.5 * d * d)
        if self.noise_sigma > 0:
            values = values + self._rng.normal(0.0, self.noise_sigma, len(ts))
        self._next_sample = last_index + 1
        # Old beats are unreachable once the waveform has moved past them.
        cutoff = bisect_left(self._beats, float(ts[0]) - 4 * reach)
        if cutoff > 2048:
            del self._beats[:cutoff]
        return ts, values


class GsrSynthesizer:
    """Seeded conductance generator driven by an arousal level in [0, 1].

    Conductance relaxes toward ``base * (1 + gain * arousal)`` with a short
    time constant, so a step in arousal produces a detectable rise within a
    couple of seconds.
    """

    def __init__(self, seed: int, sample_rate_hz: float = GSR_SAMPLE_RATE_HZ,
                 base_us: float = 2.0, gain: float = 0.5, tau_ms: float = 500.0,
                 noise_sigma: float = 0.004):
        self._rng = np.random.default_rng(seed)
        self.spacing_ms = 1000.0 / sample_rate_hz
        self.base_us = base_us
        self.gain = gain
        self.tau_ms = tau_ms
        self.noise_sigma = noise_sigma
        self._arousal = 0.0
        self._level = base_us
        self._next_sample = 0

    def set_arousal(self, arousal: float):
        self._arousal = min(max(float(arousal), 0.0), 1.0)

    def generate_until(self, t_ms: float) -> Tuple[np.ndarray, np.ndarray]:
        last_index = int(math.ceil(t_ms / self.spacing_ms)) - 1
        if last_index < self._next_sample:
            return np.empty(0), np.empty(0)
        idx = np.arange(self._next_sample, last_index + 1)
        ts = idx * self.spacing_ms
        target = self.base_us * (1.0 + self.gain * self._arousal)
        alpha = 1.0 - math.exp(-self.spacing_ms / self.tau_ms)
        values = np.empty(len(ts))
        level = self._level
        for i in range(len(ts)):
            level += (target - level) * alpha
            values[i] = level
        self._level = level
        if self.noise_sigma > 0:
            values = values + self._rng.normal(0.0, self.noise_sigma, len(ts))
        values = np.maximum(values, 0.0)
        self._next_sample = last_index + 1
        return ts, values


def synthesize_ppg(hr_profile: Callable[[float], float], duration_ms: float,
                   sdnn_target_ms: float, seed: int,
                   noise_sigma: float = 0.0) -> List[PpgSample]:
    """Generate a pulse stream whose HR follows ``hr_profile`` (t_ms -> bpm)."""
    synth = PpgSynthesizer(seed, noise_sigma=noise_sigma)
    out_t: List[np.ndarray] = []
    out_v: List[np.ndarray] = []
    step = 1000.0
    t = 0.0
    while t < duration_ms:
        synth.set_targets(hr_profile(t), sdnn_target_ms)
        tt, vv = synth.generate_until(min(t + step, duration_ms))
        out_t.append(tt)
        out_v.append(vv)
        t += step
    ts = np.concatenate(out_t)
    vs = np.concatenate(out_v)
    return [PpgSample(float(a), float(b)) for a, b in zip(ts, vs)]


def synthesize_gsr(arousal_profile: Callable[[float], float], duration_ms: float,
                   seed: int, **kwargs) -> List[GsrSample]:
    """Generate a conductance stream following ``arousal_profile`` (t_ms -> [0,1])."""
    synth = GsrSynthesizer(seed, **kwargs)
    out_t: List[np.ndarray] = []
    out_v: List[np.ndarray] = []
    step = 1000.0
    t = 0.0
    while t < duration_ms:
        synth.set_arousal(arousal_profile(t))
        tt, vv = synth.generate_until(min(t + step, duration_ms))
        out_t.append(tt)
        out_v.append(vv)
        t += step
    ts = np.concatenate(out_t)
    vs = np.concatenate(out_v)
    return [GsrSample(float(a), float(b)) for a, b in zip(ts, vs)]


class PpgPipeline:
    """Filter -> beat extraction -> windowed vitals, as one chunked unit."""

    def __init__(self, filter_window: int = 9, window_ms: float = DEFAULT_VITALS_WINDOW_MS,
                 hop_ms: float = DEFAULT_VITALS_HOP_MS):
        self.filter = MovingAverageFilter(filter_window)
        self.detector = PeakDetector()
        self.tracker = VitalsTracker(window_ms=window_ms, hop_ms=hop_ms)

    def feed(self, t_ms, values):
        ft, fv = self.filter.feed(t_ms, values)
        if len(ft):
            self.tracker.add_beats(self.detector.feed(ft, fv))

    def estimate_at(self, window_end_ms: float) -> Optional[VitalsEstimate]:
        return self.tracker.estimate_at(window_end_ms)
