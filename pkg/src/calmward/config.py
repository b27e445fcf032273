"""Configuration loading.

All config files share one JSON schema with a versioned ``schema_version``
field. Validation is fail-fast: unknown fields are errors, as are missing
required sections. Named presets ship inside the package; ``load_config``
accepts either a filesystem path or a preset name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

from .agent import AgentParams
from .detection import DetectionThresholds
from .errors import ConfigError
from .questionnaire import QuestionnaireResponse
from .scenario import ScenarioConfig

SCHEMA_VERSION = 1

_SCHEMA = {
    "schema_version": None,
    "name": None,
    "harness": {
        "tick_ms": None,
        "hop_ms": None,
        "max_session_ms": None,
        "baseline_preroll_ms": None,
    },
    "scenario": {
        "initial_countdown_s": None,
        "t2_deduction_s": None,
        "t2_time_s": None,
        "t2_window_s": None,
        "triggers": None,
        "hard_stop_on_expiry": None,
    },
    "detection": {
        "hr_rise_fraction": None,
        "sdnn_drop_fraction": None,
        "quorum": None,
        "gsr_rise_fraction": None,
    },
    "policy": {
        "visual_multiplier": None,
        "utterance_gap_s": None,
    },
    "agent": {
        "base_action_latency_s": None,
        "latency_stress_gain": None,
        "stress_decay_per_s": None,
        "intervention_recovery_gain": None,
        "trigger_impulse": None,
        "error_base": None,
        "error_stress_gain": None,
        "hr_stress_gain": None,
        "sdnn_stress_loss": None,
        "resting_hr_bpm": None,
        "resting_sdnn_ms": None,
        "latency_jitter_sigma": None,
        "forceps_preference": None,
        "alt_light_probability": None,
        "guidance_caps_enabled": None,
    },
    "signals": {
        "ppg_noise_sigma": None,
        "gsr_base_us": None,
        "gsr_gain": None,
        "filter_window": None,
    },
    "questionnaire": None,
}


@dataclass(frozen=True)
class HarnessConfig:
    tick_ms: float = 100.0
    hop_ms: float = 1000.0
    max_session_ms: float = 900_000.0
    baseline_preroll_ms: float = 73_000.0

    def __post_init__(self):
        if self.hop_ms % self.tick_ms != 0:
            raise ConfigError("hop_ms must be a multiple of tick_ms")


@dataclass(frozen=True)
class SignalConfig:
    ppg_noise_sigma: float = 0.02
    gsr_base_us: float = 2.0
    gsr_gain: float = 0.5
    filter_window: int = 9


@dataclass(frozen=True)
class PolicyConfig:
    visual_multiplier: float = 2.0
    utterance_gap_ms: float = 15_000.0


@dataclass(frozen=True)
class SessionConfig:
    name: str = "default"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    detection: DetectionThresholds = field(default_factory=DetectionThresholds)
    gsr_rise_fraction: float = 0.10
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    agent: AgentParams = field(default_factory=AgentParams)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    signals: SignalConfig = field(default_factory=SignalConfig)
    default_questionnaire: Optional[QuestionnaireResponse] = None

    def to_dict(self) -> dict:
        sc = self.scenario
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "harness": {
                "tick_ms": self.harness.tick_ms,
                "hop_ms": self.harness.hop_ms,
                "max_session_ms": self.harness.max_session_ms,
                "baseline_preroll_ms": self.harness.baseline_preroll_ms,
            },
            "scenario": {
                "initial_countdown_s": sc.initial_countdown_ms / 1000.0,
                "t2_deduction_s": sc.t2_deduction_ms / 1000.0,
                "t2_time_s": None if sc.t2_time_ms is None else sc.t2_time_ms / 1000.0,
                "t2_window_s": None if sc.t2_window_ms is None else
                    [sc.t2_window_ms[0] / 1000.0, sc.t2_window_ms[1] / 1000.0],
                "triggers": list(sc.triggers),
                "hard_stop_on_expiry": sc.hard_stop_on_expiry,
            },
            "detection": {
                "hr_rise_fraction": self.detection.hr_rise_fraction,
                "sdnn_drop_fraction": self.detection.sdnn_drop_fraction,
                "quorum": self.detection.quorum,
                "gsr_rise_fraction": self.gsr_rise_fraction,
            },
            "policy": {
                "visual_multiplier": self.policy.visual_multiplier,
                "utterance_gap_s": self.policy.utterance_gap_ms / 1000.0,
            },
            "agent": {
                "base_action_latency_s": self.agent.base_action_latency_s,
                "latency_stress_gain": self.agent.latency_stress_gain,
                "stress_decay_per_s": self.agent.stress_decay_per_s,
                "intervention_recovery_gain": self.agent.intervention_recovery_gain,
                "trigger_impulse": dict(self.agent.trigger_impulse),
                "error_base": self.agent.error_base,
                "error_stress_gain": self.agent.error_stress_gain,
                "hr_stress_gain": self.agent.hr_stress_gain,
                "sdnn_stress_loss": self.agent.sdnn_stress_loss,
                "resting_hr_bpm": self.agent.resting_hr_bpm,
                "resting_sdnn_ms": self.agent.resting_sdnn_ms,
                "latency_jitter_sigma": self.agent.latency_jitter_sigma,
                "forceps_preference": self.agent.forceps_preference,
                "alt_light_probability": self.agent.alt_light_probability,
                "guidance_caps_enabled": self.agent.guidance_caps_enabled,
            },
            "signals": {
                "ppg_noise_sigma": self.signals.ppg_noise_sigma,
                "gsr_base_us": self.signals.gsr_base_us,
                "gsr_gain": self.signals.gsr_gain,
                "filter_window": self.signals.filter_window,
            },
            "questionnaire": (None if self.default_questionnaire is None
                              else list(self.default_questionnaire.items)),
        }


def _check_unknown(data: dict, schema: dict, path: str = ""):
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"unknown config field {path}{key!r}")
        sub = schema[key]
        if isinstance(sub, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config field {path}{key!r} must be an object")
            _check_unknown(value, sub, path=f"{path}{key}.")


def parse_config(data: dict) -> SessionConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}"
        )
    _check_unknown(data, _SCHEMA)

    def section(name) -> dict:
        value = data.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        return value

    h = section("harness")
    s = section("scenario")
    d = section("detection")
    p = section("policy")
    a = section("agent")
    g = section("signals")

    try:
        harness = HarnessConfig(
            tick_ms=float(h.get("tick_ms", 100.0)),
            hop_ms=float(h.get("hop_ms", 1000.0)),
            max_session_ms=float(h.get("max_session_ms", 900_000.0)),
            baseline_preroll_ms=float(h.get("baseline_preroll_ms", 73_000.0)),
        )
        t2_time_s = s.get("t2_time_s", 60.0)
        t2_window_s = s.get("t2_window_s")
        scenario = ScenarioConfig(
            initial_countdown_ms=float(s.get("initial_countdown_s", 360.0)) * 1000.0,
            t2_deduction_ms=float(s.get("t2_deduction_s", 120.0)) * 1000.0,
            t2_time_ms=None if t2_time_s is None else float(t2_time_s) * 1000.0,
            t2_window_ms=None if t2_window_s is None else (
                float(t2_window_s[0]) * 1000.0, float(t2_window_s[1]) * 1000.0),
            triggers=tuple(s.get("triggers", list("")) or ()),
            hard_stop_on_expiry=bool(s.get("hard_stop_on_expiry", False)),
        )
        detection = DetectionThresholds(
            hr_rise_fraction=float(d.get("hr_rise_fraction", 0.30)),
            sdnn_drop_fraction=float(d.get("sdnn_drop_fraction", 0.35)),
            quorum=int(d.get("quorum", 2)),
        )
        policy = PolicyConfig(
            visual_multiplier=float(p.get("visual_multiplier", 2.0)),
            utterance_gap_ms=float(p.get("utterance_gap_s", 15.0)) * 1000.0,
        )
        agent_kwargs = dict(a)
        if "trigger_impulse" in agent_kwargs:
            agent_kwargs["trigger_impulse"] = {
                str(k): float(v) for k, v in agent_kwargs["trigger_impulse"].items()
            }
        agent = AgentParams(**agent_kwargs)
        signals = SignalConfig(
            ppg_noise_sigma=float(g.get("ppg_noise_sigma", 0.02)),
            gsr_base_us=float(g.get("gsr_base_us", 2.0)),
            gsr_gain=float(g.get("gsr_gain", 0.5)),
            filter_window=int(g.get("filter_window", 9)),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc

    questionnaire = None
    if data.get("questionnaire") is not None:
        items = data["questionnaire"]
        if not isinstance(items, list):
            raise ConfigError("questionnaire must be a list of 19 integers")
        questionnaire = QuestionnaireResponse(tuple(int(v) for v in items))

    return SessionConfig(
        name=str(data.get("name", "default")),
        scenario=scenario,
        detection=detection,
        gsr_rise_fraction=float(d.get("gsr_rise_fraction", 0.10)),
        policy=policy,
        agent=agent,
        harness=harness,
        signals=signals,
        default_questionnaire=questionnaire,
    )


def preset_names() -> Tuple[str, ...]:
    files = resources.files("calmward").joinpath("presets")
    return tuple(sorted(
        p.name[:-5] for p in files.iterdir() if p.name.endswith(".json")
    ))


def load_config(path_or_name: str) -> SessionConfig:
    """Load a config from a file path or a bundled preset name."""
    path = Path(path_or_name)
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return parse_config(data)
    candidate = resources.files("calmward").joinpath("presets", f"{path_or_name}.json")
    if candidate.is_file():
        return parse_config(json.loads(candidate.read_text()))
    raise ConfigError(
        f"config {path_or_name!r} is neither a readable file nor a preset "
        f"(presets: {', '.join(preset_names())})"
    )
