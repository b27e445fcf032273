"""Deterministic discrete-event harness.

Wires agent, signal synthesis, the vitals pipeline, stress detection, the
intervention policy, and the scenario into one fixed-step loop; runs
two-arm experiments; and replays logs for audit.

Loop order within a tick: the agent decides, the previous second of signal
is synthesized and analysed on hop boundaries (vitals windows advance every
hop), the detector and policy run, and finally the scenario consumes the
agent's action and the wall clock. Every stochastic draw is event-indexed
and all seeds are derived from the session seed, so a session's log is
byte-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .agent import TraineeAgent
from .config import SessionConfig
from .detection import (
    Baseline,
    EpisodeTracker,
    IndicatorFlags,
    StressDetector,
    acquire_baseline,
    assess,
    latency_monitor,
)
from .errors import ConfigError, ReplayError, ValidationError
from .policy import InterventionPolicy, PolicyContext
from .questionnaire import InterventionProfile, QuestionnaireResponse, score
from .scenario import (
    CRITICAL_CHANNELS,
    NOISE_CHANNELS,
    ActionEvent,
    Outcome,
    ScenarioEngine,
    TaskPhase,
)
from .signals import GsrMonitor, GsrSynthesizer, PpgPipeline, PpgSynthesizer

ARMS = ("intervention", "control")

LOG_SCHEMA = 1

RECORD_KINDS = (
    "sample-summary", "assessment", "intervention", "action",
    "trigger", "phase-change", "countdown",
)

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 step; the documented seed-derivation primitive."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(root: int, *indices: int) -> int:
    """Per-purpose seeds: fold each index through splitmix64."""
    state = root & _MASK64
    for index in indices:
        state = splitmix64(state ^ ((index + 1) * 0x9E3779B97F4A7C15 & _MASK64))
    return state


SUBSEED_PURPOSES = ("agent", "ppg", "gsr", "policy", "scenario")


def session_subseeds(seed: int) -> Dict[str, int]:
    return {name: derive_seed(seed, i) for i, name in enumerate(SUBSEED_PURPOSES)}


def _json_default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def dumps_canonical(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


@dataclass
class SessionLog:
    header: dict
    records: List[dict] = field(default_factory=list)

    def append(self, t_ms: float, kind: str, **payload):
        if kind not in RECORD_KINDS:
            raise ValidationError(f"unknown record kind {kind!r}")
        self.records.append({"t_ms": t_ms, "kind": kind, **payload})

    def of_kind(self, kind: str) -> List[dict]:
        return [r for r in self.records if r["kind"] == kind]

    def to_ndjson(self) -> str:
        lines = [dumps_canonical({"calmward_log": LOG_SCHEMA, **self.header})]
        lines += [dumps_canonical(r) for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_ndjson(cls, text: str) -> "SessionLog":
        lines = text.splitlines()
        if not lines:
            raise ValidationError("empty log")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise ValidationError(f"log line 1 is not valid JSON: {exc}")
        if header.get("calmward_log") != LOG_SCHEMA:
            raise ValidationError("log line 1 is not a session-log header")
        header.pop("calmward_log")
        records = []
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"log line {i} is not valid JSON: {exc}")
            if "kind" not in record or record["kind"] not in RECORD_KINDS:
                raise ValidationError(f"log line {i} has no valid record kind")
            records.append(record)
        return cls(header=header, records=records)


@dataclass
class SessionMetrics:
    completed: bool
    duration_s: float
    critical_errors: int
    recovery_times_ms: List[float]

    @property
    def mean_recovery_ms(self) -> Optional[float]:
        if not self.recovery_times_ms:
            return None
        return sum(self.recovery_times_ms) / len(self.recovery_times_ms)

    def to_dict(self) -> dict:
        return {
            "completed": self.completed,
            "duration_s": self.duration_s,
            "critical_errors": self.critical_errors,
            "recovery_times_ms": self.recovery_times_ms,
            "mean_recovery_ms": self.mean_recovery_ms,
        }


class SessionCore:
    """Session state shared by the batch runner and the live server.

    The caller owns time: it feeds signal chunks, applies actions, and calls
    ``assessment_tick`` on hop boundaries. The core keeps the log's record
    order contract: per tick, assessment-derived records come first, then
    action records, then time-trigger records.
    """

    def __init__(self, config: SessionConfig, profile: InterventionProfile,
                 arm: str, seed: int, baseline: Baseline, header_extra: Optional[dict] = None):
        if arm not in ARMS:
            raise ConfigError(f"arm must be one of {ARMS}")
        self.config = config
        self.profile = profile
        self.arm = arm
        self.seed = seed
        self.subseeds = session_subseeds(seed)
        self.baseline = baseline
        self.scenario = ScenarioEngine(config.scenario, seed=self.subseeds["scenario"])
        self.detector = StressDetector(baseline=baseline, thresholds=config.detection)
        self.tracker = EpisodeTracker()
        self.pipeline = PpgPipeline(filter_window=config.signals.filter_window)
        self.gsr_monitor = GsrMonitor(rise_fraction=config.gsr_rise_fraction)
        self.policy = None
        if arm == "intervention":
            self.policy = InterventionPolicy(
                profile, seed=self.subseeds["policy"],
                visual_multiplier=config.policy.visual_multiplier,
                utterance_gap_ms=config.policy.utterance_gap_ms,
            )
        self.last_progress_ms = 0.0
        self._prev_step_id = self._current_step_id()
        self._last_summary: Optional[dict] = None
        header = {
            "schema": LOG_SCHEMA,
            "config": config.to_dict(),
            "arm": arm,
            "seed": seed,
            "subseeds": self.subseeds,
            "profile": profile.to_dict(),
            "baseline": {
                "hr_mean_bpm": baseline.hr_mean_bpm,
                "sdnn_mean_ms": baseline.sdnn_mean_ms,
            },
        }
        if header_extra:
            header.update(header_extra)
        self.log = SessionLog(header=header)
        self.log.append(0.0, "countdown", event="start",
                        remaining_ms=self.scenario.remaining_ms(0.0))

    # -- helpers -------------------------------------------------------------

    def _current_step_id(self) -> Optional[str]:
        step = self.scenario.current_step()
        return None if step is None else step.step_id

    def latency_threshold_ms(self) -> Optional[float]:
        if self.profile.procedure_guidance:
            return self.profile.guidance_threshold_s * 1000.0
        return None

    def inactivity_ms(self, t_ms: float) -> float:
        return t_ms - self.last_progress_ms

    def done(self) -> bool:
        return self.scenario.phase == TaskPhase.DONE

    # -- signal ingestion ----------------------------------------------------

    def ingest_ppg(self, t_arr, v_arr):
        self.pipeline.feed(t_arr, v_arr)

    def ingest_gsr(self, t_arr, v_arr):
        self.gsr_monitor.feed(t_arr, v_arr)

    # -- per-tick stages ----------------------------------------------------

    def assessment_tick(self, t_ms: float, sample_summary: Optional[dict] = None):
        """Vitals window, detector verdict, policy output for one hop."""
        vitals = self.pipeline.estimate_at(t_ms)
        gsr_flag = False
        if self.gsr_monitor.span_ms() >= self.gsr_monitor.reference_ms:
            gsr_flag = self.gsr_monitor.evaluate()
        assessment = self.detector.tick(
            t_ms, vitals, gsr_flag,
            phase_elapsed_ms=self.inactivity_ms(t_ms),
            latency_threshold_ms=self.latency_threshold_ms(),
        )
        if sample_summary is not None:
            summary = dict(sample_summary)
            if vitals is not None:
                summary["hr_bpm"] = vitals.hr_bpm
                summary["sdnn_ms"] = vitals.sdnn_ms
            summary["gsr_flag"] = gsr_flag
            self.log.append(t_ms, "sample-summary", **summary)
            self._last_summary = self.log.records[-1]
        self.log.append(
            t_ms, "assessment",
            hr_abnormal=assessment.flags.hr_abnormal,
            sdnn_abnormal=assessment.flags.sdnn_abnormal,
            gsr_abnormal=assessment.flags.gsr_abnormal,
            latency_flag=assessment.latency_flag,
            stressed=assessment.stressed,
        )
        self.tracker.observe(t_ms, assessment.stressed)

        events = []
        if self.policy is not None:
            step = self.scenario.current_step()
            step_id = None if step is None else step.step_id
            ctx = PolicyContext(
                step=step,
                inactivity_ms=self.inactivity_ms(t_ms),
                step_changed=step_id != self._prev_step_id,
                task_completed=self.done(),
                noise_channels=NOISE_CHANNELS,
                critical_channels=CRITICAL_CHANNELS,
            )
            self._prev_step_id = step_id
            events = self.policy.on_assessment(t_ms, assessment.stressed,
                                               assessment.flags, ctx)
            for event in events:
                self.log.append(t_ms, "intervention",
                                event=event.kind.value, **event.payload)
        else:
            self._prev_step_id = self._current_step_id()
        return assessment, events

    def annotate_last_summary(self, **fields):
        """Attach synth-target fields to the hop's sample-summary record."""
        if self._last_summary is not None:
            self._last_summary.update(fields)

    def apply_action(self, action: ActionEvent):
        """Scenario transition for one trainee action, with logging."""
        result = self.scenario.advance(action)
        self.log.append(
            action.t_ms, "action",
            action=action.action, layer=action.layer, tool=action.tool,
            outcome=result.outcome.value, reason=result.reason,
        )
        for firing in result.fired:
            self.log.append(firing.t_ms, "trigger",
                            category=firing.category, **firing.detail)
        if result.phase_changed:
            self.log.append(action.t_ms, "phase-change",
                            phase=self.scenario.phase.value,
                            patient_hr=self.scenario.vitals.hr_bpm,
                            patient_spo2=self.scenario.vitals.spo2_percent)
        if result.outcome == Outcome.ACCEPTED:
            self.last_progress_ms = action.t_ms
        return result

    def scenario_time_tick(self, t_ms: float):
        """Time-scheduled trigger stage; returns firings for agent coupling."""
        firings = self.scenario.tick(t_ms)
        for firing in firings:
            self.log.append(firing.t_ms, "trigger",
                            category=firing.category, **firing.detail)
            if firing.category == "t2":
                self.log.append(firing.t_ms, "countdown", event="deduction",
                                deducted_ms=self.config.scenario.t2_deduction_ms,
                                remaining_ms=self.scenario.remaining_ms(t_ms))
        return firings

    # -- finish ------------------------------------------------------------------

    def finalize(self, end_ms: float) -> SessionMetrics:
        self.tracker.finalize(end_ms)
        self.log.append(end_ms, "countdown", event="end",
                        remaining_ms=self.scenario.remaining_ms(end_ms))
        duration_ms = self.scenario.done_at_ms if self.scenario.done_at_ms is not None else end_ms
        errors = sum(1 for r in self.log.of_kind("action")
                     if r["outcome"] == Outcome.CRITICAL_ERROR.value)
        return SessionMetrics(
            completed=self.scenario.completion_check() == "completed",
            duration_s=duration_ms / 1000.0,
            critical_errors=errors,
            recovery_times_ms=self.tracker.recovery_times_ms(),
        )


def _resting_baseline(config: SessionConfig, agent: TraineeAgent,
                      ppg_seed: int) -> Baseline:
    """Acquire the one-minute resting baseline through the real pipeline."""
    preroll_ms = config.harness.baseline_preroll_ms
    hop = config.harness.hop_ms
    ppg = PpgSynthesizer(ppg_seed, noise_sigma=config.signals.ppg_noise_sigma)
    pipeline = PpgPipeline(filter_window=config.signals.filter_window)
    hr, sdnn, _ = agent.drive_targets(0.0)
    ppg.set_targets(hr, sdnn)
    estimates = []
    t = 0.0
    while t < preroll_ms:
        t += hop
        ts, vs = ppg.generate_until(t)
        pipeline.feed(ts, vs)
        est = pipeline.estimate_at(t)
        if est is not None:
            estimates.append(est)
    return acquire_baseline(estimates)


def resolve_profile(config: SessionConfig,
                    profile_or_questionnaire) -> InterventionProfile:
    if isinstance(profile_or_questionnaire, InterventionProfile):
        return profile_or_questionnaire
    if isinstance(profile_or_questionnaire, QuestionnaireResponse):
        return score(profile_or_questionnaire)
    if profile_or_questionnaire is None:
        if config.default_questionnaire is None:
            raise ConfigError("no questionnaire given and the config has no default")
        return score(config.default_questionnaire)
    raise ConfigError(
        f"expected a profile or questionnaire, got {type(profile_or_questionnaire)}"
    )


def run_session(config: SessionConfig, profile_or_questionnaire=None,
                arm: str = "intervention", seed: int = 0) -> Tuple[SessionLog, SessionMetrics]:
    """One full agent-driven session; deterministic given (config, arm, seed)."""
    if arm not in ARMS:
        raise ConfigError(f"arm must be one of {ARMS}")
    profile = resolve_profile(config, profile_or_questionnaire)
    subseeds = session_subseeds(seed)

    guidance_threshold = None
    if (arm == "intervention" and profile.procedure_guidance
            and config.agent.guidance_caps_enabled):
        guidance_threshold = float(profile.guidance_threshold_s)
    agent = TraineeAgent(config.agent, seed=subseeds["agent"],
                         guidance_threshold_s=guidance_threshold)

    baseline = _resting_baseline(config, agent, ppg_seed=subseeds["ppg"])
    core = SessionCore(config, profile, arm, seed, baseline)

    ppg = PpgSynthesizer(derive_seed(seed, 10), noise_sigma=config.signals.ppg_noise_sigma)
    gsr = GsrSynthesizer(derive_seed(seed, 11), base_us=config.signals.gsr_base_us,
                         gain=config.signals.gsr_gain)
    hr0, sdnn0, arousal0 = agent.drive_targets(0.0)
    ppg.set_targets(hr0, sdnn0)
    gsr.set_arousal(arousal0)

    tick = config.harness.tick_ms
    ticks_per_hop = int(round(config.harness.hop_ms / tick))
    max_ticks = int(config.harness.max_session_ms / tick)
    end_ms = config.harness.max_session_ms

    k = 0
    while k < max_ticks:
        k += 1
        t = k * tick
        hop_boundary = k % ticks_per_hop == 0
        was_done = core.done()

        # 1. agent decides (pre-assessment, pre-trigger world)
        action = agent.on_tick(t, core.scenario)

        # 2-5. signals for the hop just ended, vitals, detection, policy
        if hop_boundary:
            ts, vs = ppg.generate_until(t)
            core.ingest_ppg(ts, vs)
            gts, gvs = gsr.generate_until(t)
            core.ingest_gsr(gts, gvs)
            d_hr, d_sdnn, d_arousal = agent.drive_targets(t)
            _, events = core.assessment_tick(t, sample_summary={
                "drive_hr_bpm": d_hr, "drive_sdnn_ms": d_sdnn, "stress": d_arousal,
            })
            if core.policy is not None:
                agent.set_regulated(t, bool(core.policy.active_regulation_kinds()))

        # 6. scenario consumes the action, then the clock
        if action is not None:
            core.apply_action(action)
        for firing in core.scenario_time_tick(t):
            agent.apply_trigger(firing.t_ms, firing.category)

        # targets for the next hop reflect everything that happened this tick
        if hop_boundary:
            hr_t, sdnn_t, arousal_t = agent.drive_targets(t)
            ppg.set_targets(hr_t, sdnn_t)
            gsr.set_arousal(arousal_t)
            core.annotate_last_summary(synth_hr_bpm=hr_t, synth_sdnn_ms=sdnn_t,
                                       synth_arousal=arousal_t)

        # Stop on the first hop boundary after completion, so the closing
        # assessment (and any deactivations) are in the log.
        if was_done and hop_boundary:
            end_ms = t
            break

    metrics = core.finalize(end_ms)
    return core.log, metrics


# ---------------------------------------------------------------------------
# Welch's t and its approximate p-value
# ---------------------------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 200):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-14:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) via the continued fraction."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(1.0 - x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t_stat: float, df: float) -> float:
    """Two-sided p for a t statistic; series/continued-fraction approximation."""
    if df <= 0 or math.isnan(t_stat):
        return float("nan")
    if math.isinf(t_stat):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t_stat * t_stat))


@dataclass(frozen=True)
class WelchResult:
    t_stat: float
    df: float
    p_approx: float


def welch_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> WelchResult:
    """Welch's unequal-variance t test statistic with an approximate p."""
    a = list(sample_a)
    b = list(sample_b)
    if len(a) < 2 or len(b) < 2:
        return WelchResult(float("nan"), 0.0, float("nan"))
    ma = sum(a) / len(a)
    mb = sum(b) / len(b)
    va = sum((x - ma) ** 2 for x in a) / (len(a) - 1)
    vb = sum((x - mb) ** 2 for x in b) / (len(b) - 1)
    sa, sb = va / len(a), vb / len(b)
    se2 = sa + sb
    if se2 == 0.0:
        t_stat = 0.0 if ma == mb else math.copysign(float("inf"), ma - mb)
        return WelchResult(t_stat, float(len(a) + len(b) - 2),
                           1.0 if ma == mb else 0.0)
    t_stat = (ma - mb) / math.sqrt(se2)
    df = se2 * se2 / (sa * sa / (len(a) - 1) + sb * sb / (len(b) - 1))
    return WelchResult(t_stat, df, t_two_sided_p(t_stat, df))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _mean_sd(values: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    vals = list(values)
    if not vals:
        return None, None
    mean = sum(vals) / len(vals)
    if len(vals) < 2:
        return mean, 0.0
    sd = math.sqrt(sum((v - mean) ** 2 for v in vals) / (len(vals) - 1))
    return mean, sd


@dataclass
class ArmStats:
    n: int
    completion_rate: float
    duration_mean_s: float
    duration_sd_s: float
    errors_mean: float
    recovery_mean_s: Optional[float]
    recovery_sd_s: Optional[float]
    n_with_episodes: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class ExperimentReport:
    n_per_arm: int
    experiment_seed: int
    arms: Dict[str, ArmStats]
    session_seeds: Dict[str, List[int]]
    welch_duration: WelchResult
    welch_recovery: WelchResult

    CSV_COLUMNS = ("metric", "intervention_mean", "intervention_sd",
                   "control_mean", "control_sd", "welch_t", "p_approx")

    # Synthetic trainees are calibrated against aggregate outcome targets,
    # not fitted to any individual's behavioral traces; reports say so.
    CALIBRATION_NOTE = (
        "synthetic-trainee cohort; agent constants calibrated to aggregate "
        "outcome statistics only, not to individual behavioral traces"
    )

    def to_dict(self) -> dict:
        return {
            "n_per_arm": self.n_per_arm,
            "experiment_seed": self.experiment_seed,
            "note": self.CALIBRATION_NOTE,
            "arms": {k: v.to_dict() for k, v in self.arms.items()},
            "session_seeds": self.session_seeds,
            "welch_duration": self.welch_duration.__dict__,
            "welch_recovery": self.welch_recovery.__dict__,
        }

    def to_csv(self) -> str:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float) and (math.isnan(x) or math.isinf(x)):
                return ""
            if isinstance(x, float):
                return f"{x:.6g}"
            return str(x)

        i, c = self.arms["intervention"], self.arms["control"]
        rows = [
            ("completion_rate", i.completion_rate, None, c.completion_rate, None,
             None, None),
            ("mean_duration_s", i.duration_mean_s, i.duration_sd_s,
             c.duration_mean_s, c.duration_sd_s,
             self.welch_duration.t_stat, self.welch_duration.p_approx),
            ("mean_critical_errors", i.errors_mean, None, c.errors_mean, None,
             None, None),
            ("mean_recovery_s", i.recovery_mean_s, i.recovery_sd_s,
             c.recovery_mean_s, c.recovery_sd_s,
             self.welch_recovery.t_stat, self.welch_recovery.p_approx),
        ]
        lines = [",".join(self.CSV_COLUMNS)]
        lines += [",".join(fmt(v) for v in row) for row in rows]
        return "\n".join(lines) + "\n"


def run_experiment(config: SessionConfig, n_per_arm: int, seed: int,
                   profile_or_questionnaire=None) -> ExperimentReport:
    """n sessions per arm with derived per-session seeds; aggregate metrics."""
    if n_per_arm < 1:
        raise ConfigError("n_per_arm must be >= 1")
    per_arm_metrics: Dict[str, List[SessionMetrics]] = {a: [] for a in ARMS}
    session_seeds: Dict[str, List[int]] = {a: [] for a in ARMS}
    for arm_index, arm in enumerate(ARMS):
        for i in range(n_per_arm):
            s = derive_seed(seed, arm_index, i)
            session_seeds[arm].append(s)
            _, metrics = run_session(config, profile_or_questionnaire, arm=arm, seed=s)
            per_arm_metrics[arm].append(metrics)

    arms: Dict[str, ArmStats] = {}
    recoveries: Dict[str, List[float]] = {}
    durations: Dict[str, List[float]] = {}
    for arm in ARMS:
        ms = per_arm_metrics[arm]
        durations[arm] = [m.duration_s for m in ms]
        recoveries[arm] = [m.mean_recovery_ms / 1000.0 for m in ms
                           if m.mean_recovery_ms is not None]
        d_mean, d_sd = _mean_sd(durations[arm])
        r_mean, r_sd = _mean_sd(recoveries[arm])
        arms[arm] = ArmStats(
            n=len(ms),
            completion_rate=sum(1 for m in ms if m.completed) / len(ms),
            duration_mean_s=d_mean,
            duration_sd_s=d_sd,
            errors_mean=sum(m.critical_errors for m in ms) / len(ms),
            recovery_mean_s=r_mean,
            recovery_sd_s=r_sd,
            n_with_episodes=len(recoveries[arm]),
        )
    return ExperimentReport(
        n_per_arm=n_per_arm,
        experiment_seed=seed,
        arms=arms,
        session_seeds=session_seeds,
        welch_duration=welch_t(durations["intervention"], durations["control"]),
        welch_recovery=welch_t(recoveries["intervention"], recoveries["control"]),
    )


# ---------------------------------------------------------------------------
# replay verification
# ---------------------------------------------------------------------------

_DERIVED_KINDS = ("assessment", "intervention", "action", "trigger",
                  "phase-change", "countdown")


def _rebuild_config(header: dict) -> SessionConfig:
    from .config import parse_config

    return parse_config(header["config"])


def replay(log: Union[SessionLog, str]) -> None:
    """Re-derive the decision records of a log and fail on the first divergence.

    Interventions are recomputed from the logged assessments and profile;
    phase changes, triggers, and outcomes from the logged actions. Raises
    :class:`ReplayError` on mismatch, :class:`ValidationError` on malformed
    input.
    """
    if isinstance(log, str):
        log = SessionLog.from_ndjson(log)

    header = log.header
    for key in ("config", "arm", "seed", "profile", "subseeds"):
        if key not in header:
            raise ValidationError(f"log header missing {key!r}")
    config = _rebuild_config(header)
    profile = InterventionProfile.from_dict(header["profile"])
    arm = header["arm"]

    scenario = ScenarioEngine(config.scenario, seed=int(header["subseeds"]["scenario"]))
    policy = None
    if arm == "intervention":
        policy = InterventionPolicy(
            profile, seed=int(header["subseeds"]["policy"]),
            visual_multiplier=config.policy.visual_multiplier,
            utterance_gap_ms=config.policy.utterance_gap_ms,
        )

    latency_threshold = (profile.guidance_threshold_s * 1000.0
                         if profile.procedure_guidance else None)
    last_progress = 0.0
    step = scenario.current_step()
    prev_step_id = None if step is None else step.step_id

    derivable = [r for r in log.records if r["kind"] in _DERIVED_KINDS]
    prev_t = None
    for r in log.records:
        if prev_t is not None and r["t_ms"] < prev_t:
            raise ValidationError(f"records not time-ordered at t={r['t_ms']}")
        prev_t = r["t_ms"]

    pos = 0

    def fail(t_ms, expected, found):
        raise ReplayError(
            f"replay diverged at t={t_ms} ms: expected {expected}, found {found}",
            t_ms=t_ms,
        )

    def take(t_ms, expected: dict):
        nonlocal pos
        if pos >= len(derivable):
            fail(t_ms, expected, "end of log")
        found = derivable[pos]
        pos += 1
        for key, value in expected.items():
            if found.get(key) != value:
                fail(t_ms, expected, found)
        return found

    while pos < len(derivable):
        record = derivable[pos]
        t = record["t_ms"]
        kind = record["kind"]

        if kind == "countdown":
            event = record.get("event")
            if event == "start":
                take(t, {"kind": "countdown", "event": "start",
                         "remaining_ms": scenario.remaining_ms(t)})
            elif event == "deduction":
                take(t, {"kind": "countdown", "event": "deduction",
                         "remaining_ms": scenario.remaining_ms(t)})
            elif event == "end":
                take(t, {"kind": "countdown", "event": "end",
                         "remaining_ms": scenario.remaining_ms(t)})
            else:
                fail(t, "countdown with a known event", record)
            continue

        if kind == "assessment":
            flags = IndicatorFlags(
                hr_abnormal=bool(record["hr_abnormal"]),
                sdnn_abnormal=bool(record["sdnn_abnormal"]),
                gsr_abnormal=bool(record["gsr_abnormal"]),
                t_ms=t,
            )
            expected_latency = latency_monitor(t - last_progress, latency_threshold)
            expected_stressed = assess(flags, config.detection.quorum) or expected_latency
            if bool(record["latency_flag"]) != expected_latency or \
                    bool(record["stressed"]) != expected_stressed:
                fail(t, {"latency_flag": expected_latency, "stressed": expected_stressed},
                     record)
            pos += 1
            if policy is not None:
                step = scenario.current_step()
                step_id = None if step is None else step.step_id
                ctx = PolicyContext(
                    step=step,
                    inactivity_ms=t - last_progress,
                    step_changed=step_id != prev_step_id,
                    task_completed=scenario.phase == TaskPhase.DONE,
                    noise_channels=NOISE_CHANNELS,
                    critical_channels=CRITICAL_CHANNELS,
                )
                prev_step_id = step_id
                events = policy.on_assessment(t, expected_stressed, flags, ctx)
                for event in events:
                    take(t, {"kind": "intervention", "t_ms": t,
                             "event": event.kind.value,
                             **{k: _plain(v) for k, v in event.payload.items()}})
            else:
                step = scenario.current_step()
                prev_step_id = None if step is None else step.step_id
            continue

        if kind == "intervention":
            fail(t, "no intervention here (policy produced none)", record)

        if kind == "action":
            action = ActionEvent(t, record["action"], layer=record.get("layer"),
                                 tool=record.get("tool"))
            result = scenario.advance(action)
            take(t, {"kind": "action", "outcome": result.outcome.value,
                     "reason": result.reason})
            for firing in result.fired:
                take(t, {"kind": "trigger", "category": firing.category})
            if result.phase_changed:
                take(t, {"kind": "phase-change", "phase": scenario.phase.value,
                         "patient_hr": scenario.vitals.hr_bpm,
                         "patient_spo2": scenario.vitals.spo2_percent})
            if result.outcome == Outcome.ACCEPTED:
                last_progress = t
            continue

        if kind == "trigger":
            firings = scenario.tick(t)
            if not firings:
                fail(t, "a time-scheduled trigger", record)
            for firing in firings:
                take(t, {"kind": "trigger", "category": firing.category})
            continue

        if kind == "phase-change":
            fail(t, "no phase change here", record)

    # Trailing check: the scenario must agree time-triggers are exhausted.
    return None


def _plain(value):
    if isinstance(value, tuple):
        return list(value)
    return value
