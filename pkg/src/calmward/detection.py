"""Stress detection: baseline acquisition, indicator thresholds, quorum voting,
the task-duration override, and stress-episode bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from .errors import InsufficientDataError
from .signals import VitalsEstimate

BASELINE_SPAN_MS = 60_000.0


@dataclass(frozen=True)
class Baseline:
    """Resting-state means from the one-minute acquisition."""

    hr_mean_bpm: float
    sdnn_mean_ms: float
    acquisition_span_ms: float = BASELINE_SPAN_MS

    def __post_init__(self):
        if self.hr_mean_bpm <= 0 or self.sdnn_mean_ms <= 0:
            raise InsufficientDataError(
                f"baseline means must be positive, got HR {self.hr_mean_bpm}, "
                f"SDNN {self.sdnn_mean_ms}"
            )


@dataclass(frozen=True)
class DetectionThresholds:
    """Indicator thresholds, strict at the boundary.

    HR is abnormal when it rises strictly above ``(1 + hr_rise_fraction)`` of
    baseline; SDNN when it falls strictly below ``(1 - sdnn_drop_fraction)``
    of baseline. Defaults: +30% HR rise, -35% SDNN drop, 2-of-3 quorum.
    """

    hr_rise_fraction: float = 0.30
    sdnn_drop_fraction: float = 0.35
    quorum: int = 2


@dataclass(frozen=True)
class IndicatorFlags:
    hr_abnormal: bool
    sdnn_abnormal: bool
    gsr_abnormal: bool
    t_ms: float = 0.0

    def count(self) -> int:
        return int(self.hr_abnormal) + int(self.sdnn_abnormal) + int(self.gsr_abnormal)


@dataclass
class StressEpisode:
    onset_ms: float
    offset_ms: Optional[float] = None

    @property
    def recovery_time_ms(self) -> Optional[float]:
        if self.offset_ms is None:
            return None
        return self.offset_ms - self.onset_ms


@dataclass(frozen=True)
class Assessment:
    """One detector tick: indicator flags, the duration override, the verdict."""

    t_ms: float
    flags: IndicatorFlags
    latency_flag: bool
    stressed: bool


def acquire_baseline(vitals: Sequence[VitalsEstimate]) -> Baseline:
    """Arithmetic HR/SDNN means over one minute of resting estimates."""
    if not vitals:
        raise InsufficientDataError("no vitals estimates for baseline acquisition")
    span = vitals[-1].window_end_ms - vitals[0].window_start_ms
    if span < BASELINE_SPAN_MS:
        raise InsufficientDataError(
            f"baseline needs {BASELINE_SPAN_MS} ms of vitals, got {span}"
        )
    hr = sum(v.hr_bpm for v in vitals) / len(vitals)
    sdnn = sum(v.sdnn_ms for v in vitals) / len(vitals)
    return Baseline(hr_mean_bpm=hr, sdnn_mean_ms=sdnn)


def evaluate_indicators(current: VitalsEstimate, gsr_flag: bool, base: Baseline,
                        thresholds: DetectionThresholds = DetectionThresholds(),
                        t_ms: float = 0.0) -> IndicatorFlags:
    """Compare one vitals estimate against the baseline. Ties are normal."""
    hr_abnormal = current.hr_bpm > (1.0 + thresholds.hr_rise_fraction) * base.hr_mean_bpm
    sdnn_abnormal = current.sdnn_ms < (1.0 - thresholds.sdnn_drop_fraction) * base.sdnn_mean_ms
    return IndicatorFlags(
        hr_abnormal=hr_abnormal,
        sdnn_abnormal=sdnn_abnormal,
        gsr_abnormal=gsr_flag,
        t_ms=t_ms,
    )


def assess(flags: IndicatorFlags, quorum: int = 2) -> bool:
    """Stressed when at least ``quorum`` of the three indicators agree."""
    return flags.count() >= quorum


def latency_monitor(phase_elapsed_ms: float, threshold_ms: Optional[float]) -> bool:
    """Task-duration override: strictly exceeding the threshold forces stress.

    A ``None`` threshold means guidance is disabled and the monitor never
    fires.
    """
    if threshold_ms is None:
        return False
    return phase_elapsed_ms > threshold_ms


class EpisodeTracker:
    """Turns a time-ordered assessment stream into non-overlapping episodes."""

    def __init__(self):
        self.episodes: List[StressEpisode] = []
        self._open: Optional[StressEpisode] = None

    def observe(self, t_ms: float, stressed: bool):
        if stressed and self._open is None:
            self._open = StressEpisode(onset_ms=t_ms)
        elif not stressed and self._open is not None:
            self._open.offset_ms = t_ms
            self.episodes.append(self._open)
            self._open = None

    def finalize(self, t_ms: float):
        """Close any episode still open at session end (zero-length dropped)."""
        if self._open is not None:
            if t_ms > self._open.onset_ms:
                self._open.offset_ms = t_ms
                self.episodes.append(self._open)
            self._open = None

    def recovery_times_ms(self) -> List[float]:
        return [e.recovery_time_ms for e in self.episodes if e.recovery_time_ms is not None]


def track_episodes(assessments: Iterable[Tuple[float, bool]]) -> List[StressEpisode]:
    """Batch wrapper over :class:`EpisodeTracker` for (t_ms, stressed) pairs."""
    tracker = EpisodeTracker()
    for t_ms, stressed in assessments:
        tracker.observe(t_ms, stressed)
    return tracker.episodes


@dataclass
class StressDetector:
    """Per-session detector combining indicators, quorum, and the override."""

    baseline: Baseline
    thresholds: DetectionThresholds = field(default_factory=DetectionThresholds)

    def tick(self, t_ms: float, vitals: Optional[VitalsEstimate], gsr_flag: bool,
             phase_elapsed_ms: float, latency_threshold_ms: Optional[float]) -> Assessment:
        if vitals is not None:
            flags = evaluate_indicators(vitals, gsr_flag, self.baseline,
                                        self.thresholds, t_ms=t_ms)
        else:
            # No estimate this hop: physiological indicators stay quiet.
            flags = IndicatorFlags(False, False, gsr_flag, t_ms=t_ms)
        latency = latency_monitor(phase_elapsed_ms, latency_threshold_ms)
        stressed = assess(flags, self.thresholds.quorum) or latency
        return Assessment(t_ms=t_ms, flags=flags, latency_flag=latency, stressed=stressed)
