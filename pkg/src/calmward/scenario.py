"""The timed clinical-emergency scenario as a deterministic state machine.

Five ordered phases (preparation, wound opening, clot removal, status
monitoring, and a conditional emergency response), a visible countdown,
patient vitals, and five individually enableable acute stress triggers:

  t1a  scissors vanish from the instrument table once the wound is exposed
  t1b  the forceps drop and are contaminated at first use
  t1c  the surgical lamp degrades when wound opening starts
  t2   sudden deterioration: monitor alarms, vitals jump to 130 bpm / 80%
       SpO2, and the countdown loses two minutes
  t3   no improvement after clot removal, forcing the emergency branch

Actions are validated against the current phase; wrong-order or wrong-tool
actions are critical errors and never advance progress. Suture layers must
be cut subcuticular -> subcutaneous -> platysma.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .errors import ConfigError
from .policy import StepContext


class TaskPhase(str, Enum):
    PREPARATION = "preparation"
    WOUND_OPENING = "wound_opening"
    CLOT_REMOVING = "clot_removing"
    STATUS_MONITORING = "status_monitoring"
    EMERGENCY_RESPONSE = "emergency_response"
    DONE = "done"


PHASE_ORDER = {
    TaskPhase.PREPARATION: 0,
    TaskPhase.WOUND_OPENING: 1,
    TaskPhase.CLOT_REMOVING: 2,
    TaskPhase.STATUS_MONITORING: 3,
    TaskPhase.EMERGENCY_RESPONSE: 4,
    TaskPhase.DONE: 5,
}

SUTURE_LAYERS = ("subcuticular", "subcutaneous", "platysma")
CLOT_TOOLS = ("forceps", "manual")

ACTIONS = (
    "press_call_bell",
    "arrange_drapes",
    "remove_steri_strips",
    "cut_sutures",
    "fetch_scissors_from_supply",
    "fetch_sterile_forceps",
    "remove_clot",
    "activate_alt_light",
    "check_monitor",
    "request_anesthesia",
    "prepare_intubation_kit",
    "brief_team",
)

TRIGGER_CATEGORIES = ("t1a", "t1b", "t1c", "t2", "t3")

NOISE_CHANNELS = ("monitor_alarm", "phone_ring", "corridor_conversation")
CRITICAL_CHANNELS = ("monitor_alarm",)


class Outcome(str, Enum):
    ACCEPTED = "accepted"
    CRITICAL_ERROR = "critical_error"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ActionEvent:
    t_ms: float
    action: str
    layer: Optional[str] = None
    tool: Optional[str] = None

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ConfigError(f"unknown action {self.action!r}")
        if self.action == "cut_sutures" and self.layer not in SUTURE_LAYERS:
            raise ConfigError(f"cut_sutures requires layer in {SUTURE_LAYERS}")
        if self.action == "remove_clot" and self.tool not in CLOT_TOOLS:
            raise ConfigError(f"remove_clot requires tool in {CLOT_TOOLS}")

    def key(self) -> Tuple[str, Optional[str], Optional[str]]:
        return (self.action, self.layer, self.tool)


@dataclass(frozen=True)
class PatientVitals:
    hr_bpm: float
    spo2_percent: float

    @property
    def stable(self) -> bool:
        return self.spo2_percent >= 94.0 and self.hr_bpm <= 100.0


@dataclass(frozen=True)
class TriggerFiring:
    t_ms: float
    category: str
    detail: dict


@dataclass(frozen=True)
class AdvanceResult:
    outcome: Outcome
    reason: str
    phase_changed: bool
    fired: Tuple[TriggerFiring, ...] = ()


@dataclass(frozen=True)
class ScenarioConfig:
    initial_countdown_ms: float = 360_000.0
    t2_deduction_ms: float = 120_000.0
    t2_time_ms: Optional[float] = 60_000.0       # fixed firing time (study mode)
    t2_window_ms: Optional[Tuple[float, float]] = None  # else a seeded draw
    triggers: Tuple[str, ...] = TRIGGER_CATEGORIES
    hard_stop_on_expiry: bool = False
    normal_vitals: Tuple[float, float] = (85.0, 97.0)
    deteriorated_vitals: Tuple[float, float] = (130.0, 80.0)

    def __post_init__(self):
        for t in self.triggers:
            if t not in TRIGGER_CATEGORIES:
                raise ConfigError(f"unknown trigger category {t!r}")
        if self.t2_time_ms is None and self.t2_window_ms is None and "t2" in self.triggers:
            raise ConfigError("t2 enabled but neither a fixed time nor a window is set")

    @classmethod
    def study(cls) -> "ScenarioConfig":
        """All triggers on, deterioration at exactly one minute."""
        return cls()


# Step guidance texts, keyed by (action, layer, tool). The instruction
# strings are what the step-instruction tier shows verbatim.
STEP_TEXTS: Dict[Tuple[str, Optional[str], Optional[str]], Tuple[str, str, str]] = {
    ("press_call_bell", None, None): (
        "Call to report the situation",
        "Press the call button at the patient's bedside",
        "call_bell",
    ),
    ("arrange_drapes", None, None): (
        "Prepare the sterile field",
        "Collect the sterile drapes and lay them around the wound",
        "drape_pack",
    ),
    ("remove_steri_strips", None, None): (
        "Expose the wound",
        "Please remove the Steri-strips covering the wound",
        "steri_strips",
    ),
    ("fetch_scissors_from_supply", None, None): (
        "Find the suture scissors",
        "Fetch sterile scissors from the supply table",
        "supply_table",
    ),
    ("cut_sutures", "subcuticular", None): (
        "Open the sutured layers",
        "Cut the subcuticular sutures with the sterile scissors",
        "suture_subcuticular",
    ),
    ("cut_sutures", "subcutaneous", None): (
        "Open the sutured layers",
        "Cut the subcutaneous sutures with the sterile scissors",
        "suture_subcutaneous",
    ),
    ("cut_sutures", "platysma", None): (
        "Open the sutured layers",
        "Cut the platysma sutures with the sterile scissors",
        "suture_platysma",
    ),
    ("fetch_sterile_forceps", None, None): (
        "Replace the contaminated forceps",
        "Fetch sterile forceps from the supply table",
        "supply_table",
    ),
    ("remove_clot", None, "forceps"): (
        "Remove the blood clot",
        "Extract the clot from the wound with sterile forceps",
        "wound",
    ),
    ("remove_clot", None, "manual"): (
        "Remove the blood clot",
        "Extract the clot from the wound by hand",
        "wound",
    ),
    ("check_monitor", None, None): (
        "Check the patient's status",
        "Read the vital signs on the bedside monitor",
        "monitor",
    ),
    ("report_stable", None, None): (  # second call-bell use, different text
        "Report that the patient is stable",
        "Press the call button at the patient's bedside",
        "call_bell",
    ),
    ("request_anesthesia", None, None): (
        "Escalate to the anesthesia team",
        "Call the anesthesia team for airway support",
        "call_bell",
    ),
    ("prepare_intubation_kit", None, None): (
        "Prepare for intubation",
        "Prepare the intubation kit for the anesthesia team",
        "intubation_kit",
    ),
    ("brief_team", None, None): (
        "Hand over to the team",
        "Brief the arriving team on the patient's status",
        "team",
    ),
}

EMERGENCY_SEQUENCE = ("request_anesthesia", "prepare_intubation_kit", "brief_team")


class ScenarioEngine:
    """Single-owner scenario state machine, deterministic given config+seed."""

    def __init__(self, config: ScenarioConfig, seed: int = 0):
        self.config = config
        self.phase = TaskPhase.PREPARATION
        self.vitals = PatientVitals(*config.normal_vitals)
        self.lighting = "normal"
        self.scissors_available = True
        self.forceps_contaminated = False
        self.forceps_replaced = False
        self.bell_pressed = False
        self.drapes_arranged = False
        self.steri_removed = False
        self.layers_cut = 0
        self.clot_removed = False
        self.monitor_checked = False
        self.emergency_progress = 0
        self.done_at_ms: Optional[float] = None
        self.deductions: List[Tuple[float, float]] = []  # (t_ms, amount_ms)
        self.fired: Dict[str, float] = {}                # category -> t_ms
        if "t2" in config.triggers:
            if config.t2_time_ms is not None:
                self._t2_at = float(config.t2_time_ms)
            else:
                lo, hi = config.t2_window_ms
                self._t2_at = random.Random(seed).uniform(lo, hi)
        else:
            self._t2_at = None

    # -- countdown -----------------------------------------------------------

    def remaining_ms(self, t_ms: float) -> float:
        total_deducted = sum(a for _, a in self.deductions)
        return max(self.config.initial_countdown_ms - t_ms - total_deducted, 0.0)

    def expired(self, t_ms: float) -> bool:
        return self.remaining_ms(t_ms) <= 0.0

    # -- triggers --------------------------------------------------------------

    def _enabled(self, category: str) -> bool:
        return category in self.config.triggers

    def _fire(self, category: str, t_ms: float, detail: dict) -> TriggerFiring:
        self.fired[category] = t_ms
        return TriggerFiring(t_ms=t_ms, category=category, detail=detail)

    def tick(self, t_ms: float) -> List[TriggerFiring]:
        """Advance scenario time; fires the time-scheduled deterioration."""
        firings: List[TriggerFiring] = []
        if (self._t2_at is not None and "t2" not in self.fired
                and t_ms >= self._t2_at and self.phase != TaskPhase.DONE):
            self.vitals = PatientVitals(*self.config.deteriorated_vitals)
            self.deductions.append((t_ms, self.config.t2_deduction_ms))
            firings.append(self._fire("t2", t_ms, {
                "vitals": [self.vitals.hr_bpm, self.vitals.spo2_percent],
                "countdown_deducted_ms": self.config.t2_deduction_ms,
            }))
        return firings

    # -- phase helpers -----------------------------------------------------------

    def _enter_wound_opening(self, t_ms: float, firings: List[TriggerFiring]):
        self.phase = TaskPhase.WOUND_OPENING
        if self._enabled("t1c") and "t1c" not in self.fired:
            self.lighting = "degraded"
            firings.append(self._fire("t1c", t_ms, {"lighting": "degraded"}))

    def _after_steri_removed(self, t_ms: float, firings: List[TriggerFiring]):
        if self._enabled("t1a") and "t1a" not in self.fired:
            self.scissors_available = False
            firings.append(self._fire("t1a", t_ms, {"scissors_available": False}))

    def _after_clot_removed(self, t_ms: float, firings: List[TriggerFiring]):
        self.clot_removed = True
        self.phase = TaskPhase.STATUS_MONITORING
        if self._enabled("t3") and "t3" not in self.fired:
            self.vitals = PatientVitals(*self.config.deteriorated_vitals)
            firings.append(self._fire("t3", t_ms, {
                "vitals": [self.vitals.hr_bpm, self.vitals.spo2_percent],
            }))
        else:
            self.vitals = PatientVitals(*self.config.normal_vitals)

    def _finish(self, t_ms: float):
        self.phase = TaskPhase.DONE
        self.done_at_ms = t_ms

    # -- the main transition -------------------------------------------------

    def advance(self, action: ActionEvent) -> AdvanceResult:
        t = action.t_ms
        if self.phase == TaskPhase.DONE:
            return AdvanceResult(Outcome.REJECTED, "session-over", False)
        if self.config.hard_stop_on_expiry and self.expired(t):
            return AdvanceResult(Outcome.REJECTED, "session-expired", False)

        firings: List[TriggerFiring] = []
        phase_before = self.phase
        outcome, reason = self._apply(action, firings)
        return AdvanceResult(
            outcome=outcome,
            reason=reason,
            phase_changed=self.phase != phase_before,
            fired=tuple(firings),
        )

    def _apply(self, action: ActionEvent, firings: List[TriggerFiring]) -> Tuple[Outcome, str]:
        a = action.action
        t = action.t_ms

        # Lamp recovery is legal in any active phase while degraded.
        if a == "activate_alt_light":
            if self.lighting == "degraded":
                self.lighting = "restored"
                return Outcome.ACCEPTED, "alt-light-on"
            return Outcome.CRITICAL_ERROR, "alt-light-not-needed"

        if self.phase == TaskPhase.PREPARATION:
            if a == "press_call_bell" and not self.bell_pressed:
                self.bell_pressed = True
                return Outcome.ACCEPTED, "crash-team-called"
            if a == "arrange_drapes" and self.bell_pressed and not self.drapes_arranged:
                self.drapes_arranged = True
                self._enter_wound_opening(t, firings)
                return Outcome.ACCEPTED, "sterile-field-ready"
            return Outcome.CRITICAL_ERROR, f"out-of-order:{a}"

        if self.phase == TaskPhase.WOUND_OPENING:
            if a == "remove_steri_strips" and not self.steri_removed:
                self.steri_removed = True
                self._after_steri_removed(t, firings)
                return Outcome.ACCEPTED, "wound-exposed"
            if a == "fetch_scissors_from_supply":
                if not self.scissors_available:
                    self.scissors_available = True
                    return Outcome.ACCEPTED, "scissors-fetched"
                return Outcome.CRITICAL_ERROR, "scissors-already-present"
            if a == "cut_sutures":
                if not self.steri_removed:
                    return Outcome.CRITICAL_ERROR, "steri-strips-still-on"
                if not self.scissors_available:
                    # Environment fault, not a trainee error: no progress.
                    return Outcome.REJECTED, "scissors-missing"
                expected = SUTURE_LAYERS[self.layers_cut] if self.layers_cut < 3 else None
                if action.layer != expected:
                    return Outcome.CRITICAL_ERROR, f"wrong-layer:{action.layer}"
                self.layers_cut += 1
                if self.layers_cut == len(SUTURE_LAYERS):
                    self.phase = TaskPhase.CLOT_REMOVING
                return Outcome.ACCEPTED, f"layer-cut:{action.layer}"
            return Outcome.CRITICAL_ERROR, f"out-of-order:{a}"

        if self.phase == TaskPhase.CLOT_REMOVING:
            if a == "remove_clot":
                if action.tool == "forceps":
                    if self._enabled("t1b") and "t1b" not in self.fired:
                        self.forceps_contaminated = True
                        firings.append(self._fire("t1b", t, {"forceps": "contaminated"}))
                        return Outcome.REJECTED, "forceps-dropped"
                    if self.forceps_contaminated and not self.forceps_replaced:
                        return Outcome.CRITICAL_ERROR, "contaminated-forceps-used"
                self._after_clot_removed(t, firings)
                return Outcome.ACCEPTED, f"clot-removed:{action.tool}"
            if a == "fetch_sterile_forceps":
                if self.forceps_contaminated and not self.forceps_replaced:
                    self.forceps_replaced = True
                    return Outcome.ACCEPTED, "forceps-replaced"
                return Outcome.CRITICAL_ERROR, "forceps-replacement-not-needed"
            return Outcome.CRITICAL_ERROR, f"out-of-order:{a}"

        if self.phase == TaskPhase.STATUS_MONITORING:
            if a == "check_monitor" and not self.monitor_checked:
                self.monitor_checked = True
                if not self.vitals.stable:
                    self.phase = TaskPhase.EMERGENCY_RESPONSE
                return Outcome.ACCEPTED, "monitor-checked"
            if a == "press_call_bell":
                if self.monitor_checked and self.vitals.stable:
                    self._finish(t)
                    return Outcome.ACCEPTED, "stable-reported"
                return Outcome.CRITICAL_ERROR, "report-before-checking-monitor"
            return Outcome.CRITICAL_ERROR, f"out-of-order:{a}"

        # EMERGENCY_RESPONSE
        expected = EMERGENCY_SEQUENCE[self.emergency_progress]
        if a == expected:
            self.emergency_progress += 1
            if self.emergency_progress == len(EMERGENCY_SEQUENCE):
                self._finish(t)
            return Outcome.ACCEPTED, f"emergency-step:{a}"
        return Outcome.CRITICAL_ERROR, f"out-of-order:{a}"

    # -- introspection ---------------------------------------------------------

    def expected_actions(self) -> List[ActionEvent]:
        """Valid next progressing actions (templates with t_ms = 0)."""
        mk = lambda a, layer=None, tool=None: ActionEvent(0.0, a, layer=layer, tool=tool)
        if self.phase == TaskPhase.PREPARATION:
            if not self.bell_pressed:
                return [mk("press_call_bell")]
            return [mk("arrange_drapes")]
        if self.phase == TaskPhase.WOUND_OPENING:
            if not self.steri_removed:
                return [mk("remove_steri_strips")]
            if not self.scissors_available:
                return [mk("fetch_scissors_from_supply")]
            return [mk("cut_sutures", layer=SUTURE_LAYERS[self.layers_cut])]
        if self.phase == TaskPhase.CLOT_REMOVING:
            if self.forceps_contaminated and not self.forceps_replaced:
                return [mk("fetch_sterile_forceps"), mk("remove_clot", tool="manual")]
            return [mk("remove_clot", tool="forceps"), mk("remove_clot", tool="manual")]
        if self.phase == TaskPhase.STATUS_MONITORING:
            if not self.monitor_checked:
                return [mk("check_monitor")]
            return [mk("press_call_bell")]
        if self.phase == TaskPhase.EMERGENCY_RESPONSE:
            return [mk(EMERGENCY_SEQUENCE[self.emergency_progress])]
        return []

    def current_step(self) -> Optional[StepContext]:
        expected = self.expected_actions()
        if not expected:
            return None
        first = expected[0]
        key = first.key()
        if (self.phase == TaskPhase.STATUS_MONITORING
                and first.action == "press_call_bell"):
            key = ("report_stable", None, None)
        goal, instruction, target = STEP_TEXTS[key]
        step_id = ":".join(str(p) for p in key if p is not None)
        return StepContext(
            phase=self.phase.value,
            step_id=step_id,
            goal_text=goal,
            instruction_text=instruction,
            target=target,
        )

    def completion_check(self) -> str:
        """'completed' iff every required phase finished before expiry."""
        if self.phase == TaskPhase.DONE and self.done_at_ms is not None \
                and self.remaining_ms(self.done_at_ms) > 0.0:
            return "completed"
        return "incomplete"

    def state_key(self) -> tuple:
        return (
            self.phase.value,
            self.bell_pressed, self.drapes_arranged, self.steri_removed,
            self.layers_cut, self.scissors_available, self.lighting,
            self.forceps_contaminated, self.forceps_replaced, self.clot_removed,
            self.monitor_checked, self.emergency_progress,
            tuple(sorted(self.fired)),
            (self.vitals.hr_bpm, self.vitals.spo2_percent),
        )

    def probe_outcome(self, action: ActionEvent) -> Outcome:
        """Dry-run classification of an action; the engine is left untouched."""
        import copy

        return copy.deepcopy(self).advance(action).outcome

    def snapshot(self) -> dict:
        return {
            "phase": self.phase.value,
            "lighting": self.lighting,
            "vitals": [self.vitals.hr_bpm, self.vitals.spo2_percent],
            "fired": dict(self.fired),
        }
