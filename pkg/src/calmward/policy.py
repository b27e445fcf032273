"""The adaptive intervention engine.

On each assessment tick the policy decides which support modalities to turn
on or off for the trainee's current state: stress onset activates every
enabled modality, recovery or completion of the current step deactivates
them, and step guidance escalates through three tiers while the trainee is
inactive. Everything is gated by the per-trainee profile: a modality whose
flag is off never emits an event.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import List, Optional, Set, Tuple

from .detection import IndicatorFlags
from .questionnaire import InterventionProfile


class GuidanceTier(IntEnum):
    NONE = 0
    GOAL_PROMPT = 1
    STEP_INSTRUCTION = 2
    VISUAL_GUIDANCE = 3


class StressLight(str, Enum):
    GREEN = "green"
    YELLOW = "yellow"
    RED = "red"


class EventKind(str, Enum):
    BREATHING_CUE_ON = "breathing_cue_on"
    BREATHING_CUE_OFF = "breathing_cue_off"
    STRESS_LIGHT_CHANGE = "stress_light_change"
    GUIDANCE_TIER_CHANGE = "guidance_tier_change"
    NOISE_SUPPRESS_ON = "noise_suppress_on"
    NOISE_SUPPRESS_OFF = "noise_suppress_off"
    COMPANION_UTTERANCE = "companion_utterance"


@dataclass(frozen=True)
class InterventionEvent:
    t_ms: float
    kind: EventKind
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t_ms": self.t_ms, "kind": self.kind.value, **self.payload}


# Fixed non-instructional encouragement pool; never references task steps.
UTTERANCE_POOL: Tuple[str, ...] = (
    "Stay calm, you can handle this",
    "Focus on the next critical step",
    "Take a slow breath, you are doing fine",
    "You have trained for this, keep going",
    "One thing at a time, you are in control",
    "I am right here with you",
    "Steady hands, steady mind",
    "You are making progress, keep at it",
)

# Breathing cue rendering metadata; clients own the actual animation.
BREATHING_CUE_PAYLOAD = {"pattern": "box", "expand_s": 4.0, "contract_s": 4.0}

UTTERANCE_MIN_GAP_MS = 15_000.0

# Modalities that aid regulation or emotion; guidance works on a
# separate channel (decision latency) and is excluded on purpose.
REGULATION_KINDS = frozenset(
    {"breathing_guidance", "stress_feedback", "noise_reduction", "companion_support"}
)


def stress_light(flags: IndicatorFlags) -> StressLight:
    """Indicator count to light color: 0 safe, 1 alert, >= 2 overload."""
    n = flags.count()
    if n == 0:
        return StressLight.GREEN
    if n == 1:
        return StressLight.YELLOW
    return StressLight.RED


def escalate(inactivity_ms: float, threshold_s: float, current: GuidanceTier,
             visual_multiplier: float = 2.0) -> GuidanceTier:
    """One escalation decision; never skips a level, never de-escalates.

    The step instruction appears once inactivity strictly exceeds the
    personalized threshold, the visual layer once it exceeds
    ``visual_multiplier`` times the threshold. De-escalation happens only
    through the reset that a valid trainee action triggers.
    """
    threshold_ms = threshold_s * 1000.0
    if inactivity_ms > visual_multiplier * threshold_ms:
        target = GuidanceTier.VISUAL_GUIDANCE
    elif inactivity_ms > threshold_ms:
        target = GuidanceTier.STEP_INSTRUCTION
    else:
        target = GuidanceTier.GOAL_PROMPT
    if target <= current:
        return current
    return GuidanceTier(current + 1)


@dataclass(frozen=True)
class StepContext:
    """What the scenario says about the step the trainee should do next."""

    phase: str
    step_id: str
    goal_text: str
    instruction_text: str
    target: str


@dataclass(frozen=True)
class PolicyContext:
    """Scenario-side inputs for one assessment tick."""

    step: Optional[StepContext]        # None once the scenario is done
    inactivity_ms: float               # time since the last accepted action
    step_changed: bool                 # a new step became current since last tick
    task_completed: bool               # the scenario reached its final state
    noise_channels: Tuple[str, ...] = ()
    critical_channels: Tuple[str, ...] = ()


class InterventionPolicy:
    """Per-session intervention state machine.

    ``on_assessment`` consumes one detector verdict plus the scenario
    context and returns the intervention events for that tick, in order.
    """

    def __init__(self, profile: InterventionProfile, seed: int = 0,
                 visual_multiplier: float = 2.0,
                 utterance_gap_ms: float = UTTERANCE_MIN_GAP_MS):
        self.profile = profile
        self.visual_multiplier = visual_multiplier
        self.utterance_gap_ms = utterance_gap_ms
        self._rng = random.Random(seed)
        self._episode_active = False
        self._light: Optional[StressLight] = None
        self._tier = GuidanceTier.NONE
        self._step_id: Optional[str] = None
        self._last_utterance_ms: Optional[float] = None
        self._done_handled = False

    # -- helpers -----------------------------------------------------------

    def active_regulation_kinds(self) -> Set[str]:
        """Regulation/emotional modalities currently delivering support."""
        if not self._episode_active:
            return set()
        active = set()
        if self.profile.breathing_guidance:
            active.add("breathing_guidance")
        if self.profile.stress_feedback:
            active.add("stress_feedback")
        if self.profile.noise_reduction:
            active.add("noise_reduction")
        if self.profile.companion_support:
            active.add("companion_support")
        return active

    def guidance_tier(self) -> GuidanceTier:
        return self._tier

    def _suppressible(self, ctx: PolicyContext) -> List[str]:
        return [c for c in ctx.noise_channels if c not in ctx.critical_channels]

    def _activation_events(self, t_ms: float, ctx: PolicyContext) -> List[InterventionEvent]:
        events: List[InterventionEvent] = []
        if self.profile.breathing_guidance:
            events.append(InterventionEvent(t_ms, EventKind.BREATHING_CUE_ON,
                                            dict(BREATHING_CUE_PAYLOAD)))
        if self.profile.noise_reduction:
            events.append(InterventionEvent(
                t_ms, EventKind.NOISE_SUPPRESS_ON,
                {"suppressed": self._suppressible(ctx)},
            ))
        if self.profile.companion_support:
            if (self._last_utterance_ms is None
                    or t_ms - self._last_utterance_ms >= self.utterance_gap_ms):
                text = self._rng.choice(UTTERANCE_POOL)
                self._last_utterance_ms = t_ms
                events.append(InterventionEvent(
                    t_ms, EventKind.COMPANION_UTTERANCE, {"text": text},
                ))
        return events

    def _deactivation_events(self, t_ms: float) -> List[InterventionEvent]:
        events: List[InterventionEvent] = []
        if self.profile.breathing_guidance:
            events.append(InterventionEvent(t_ms, EventKind.BREATHING_CUE_OFF))
        if self.profile.noise_reduction:
            events.append(InterventionEvent(t_ms, EventKind.NOISE_SUPPRESS_OFF))
        return events

    def _tier_event(self, t_ms: float, tier: GuidanceTier,
                    step: Optional[StepContext]) -> InterventionEvent:
        payload: dict = {"tier": tier.name}
        if step is not None:
            if tier == GuidanceTier.GOAL_PROMPT:
                payload["text"] = step.goal_text
            elif tier == GuidanceTier.STEP_INSTRUCTION:
                payload["text"] = step.instruction_text
            elif tier == GuidanceTier.VISUAL_GUIDANCE:
                payload["text"] = step.instruction_text
                payload["target"] = step.target
        return InterventionEvent(t_ms, EventKind.GUIDANCE_TIER_CHANGE, payload)

    # -- main entry ----------------------------------------------------------

    def on_assessment(self, t_ms: float, stressed: bool, flags: IndicatorFlags,
                      ctx: PolicyContext) -> List[InterventionEvent]:
        events: List[InterventionEvent] = []

        # Stress feedback light tracks the indicator count whenever enabled.
        if self.profile.stress_feedback and not ctx.task_completed:
            light = stress_light(flags)
            if light != self._light:
                self._light = light
                events.append(InterventionEvent(
                    t_ms, EventKind.STRESS_LIGHT_CHANGE, {"color": light.value},
                ))

        # Episode loop: deactivate first (recovery or step completion), so a
        # still-stressed trainee re-activates cleanly on the next tick.
        if self._episode_active and (not stressed or ctx.step_changed or ctx.task_completed):
            events.extend(self._deactivation_events(t_ms))
            self._episode_active = False
        elif not self._episode_active and stressed and not ctx.task_completed:
            events.extend(self._activation_events(t_ms, ctx))
            self._episode_active = True

        # Step guidance runs whenever enabled, stressed or not: the goal
        # prompt greets every new step, escalation follows inactivity.
        if self.profile.procedure_guidance:
            if ctx.task_completed:
                if self._tier != GuidanceTier.NONE and not self._done_handled:
                    self._tier = GuidanceTier.NONE
                    self._done_handled = True
                    events.append(self._tier_event(t_ms, GuidanceTier.NONE, None))
            elif ctx.step is not None:
                if ctx.step.step_id != self._step_id or ctx.step_changed:
                    self._step_id = ctx.step.step_id
                    self._tier = GuidanceTier.GOAL_PROMPT
                    events.append(self._tier_event(t_ms, self._tier, ctx.step))
                else:
                    new_tier = escalate(ctx.inactivity_ms, self.profile.guidance_threshold_s,
                                        self._tier, self.visual_multiplier)
                    if new_tier != self._tier:
                        self._tier = new_tier
                        events.append(self._tier_event(t_ms, self._tier, ctx.step))

        return events
