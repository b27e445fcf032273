"""Synthetic trainee.

The agent carries a scalar stress level in [0, 1] that jumps when scenario
triggers fire and decays exponentially, faster while a regulation or
emotional intervention is delivering support. Stress feeds three couplings:

  latency   the next correct action lands after
            base * (1 + gain * stress) * lighting penalty, trimmed by the
            active guidance tier's cap;
  errors    with probability p0 + p1 * stress the agent performs a
            wrong/out-of-order action first (a critical error);
  signals   drive targets for the biosignal synthesizers rise with stress
            so that the detector's thresholds fire at high stress.

All stochastic draws are event-indexed (one per plan), so behaviour is
independent of the simulation tick size; stress is evaluated analytically
in continuous time for the same reason.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from .errors import ConfigError
from .scenario import (
    SUTURE_LAYERS,
    ActionEvent,
    Outcome,
    ScenarioEngine,
    TaskPhase,
)

DEFAULT_TRIGGER_IMPULSES: Dict[str, float] = {
    "t1a": 0.4, "t1b": 0.4, "t1c": 0.4, "t2": 0.8, "t3": 0.5,
}

LIGHTING_LATENCY_MULTIPLIER = 1.5

# How long the agent takes to comply once a guidance tier surfaces. The
# step instruction appears when inactivity exceeds the personalized
# threshold; the visual layer, at twice that, bounds compliance by half a
# threshold.
STEP_RESPONSE_MS = 3000.0


@dataclass(frozen=True)
class AgentParams:
    base_action_latency_s: float = 11.0
    latency_stress_gain: float = 2.0        # gamma
    stress_decay_per_s: float = 0.012       # lambda
    intervention_recovery_gain: float = 2.8  # beta, > 1
    trigger_impulse: Dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_TRIGGER_IMPULSES))
    error_base: float = 0.01                # p0
    error_stress_gain: float = 0.10         # p1
    hr_stress_gain: float = 0.6
    sdnn_stress_loss: float = 0.5
    resting_hr_bpm: float = 70.0
    resting_sdnn_ms: float = 50.0
    latency_jitter_sigma: float = 0.18      # lognormal sigma on each draw
    forceps_preference: float = 0.85
    alt_light_probability: float = 0.8
    guidance_caps_enabled: bool = True

    def __post_init__(self):
        if self.stress_decay_per_s <= 0:
            raise ConfigError("stress decay must be positive")
        if self.intervention_recovery_gain < 1.0:
            raise ConfigError("intervention recovery gain must be >= 1")
        for name in ("latency_stress_gain", "error_base", "error_stress_gain",
                     "hr_stress_gain", "sdnn_stress_loss"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


class StressState:
    """Closed-form exponential stress: s(t) = s(t0) * exp(-rate * (t - t0))."""

    def __init__(self, decay_per_s: float, t_ms: float = 0.0):
        self._value = 0.0
        self._t_ms = t_ms
        self._rate = decay_per_s

    def at(self, t_ms: float) -> float:
        dt_s = max(t_ms - self._t_ms, 0.0) / 1000.0
        return self._value * math.exp(-self._rate * dt_s)

    def _rebase(self, t_ms: float):
        self._value = self.at(t_ms)
        self._t_ms = t_ms

    def set_rate(self, t_ms: float, decay_per_s: float):
        if decay_per_s != self._rate:
            self._rebase(t_ms)
            self._rate = decay_per_s

    def impulse(self, t_ms: float, amount: float):
        self._rebase(t_ms)
        self._value = min(self._value + amount, 1.0)


@dataclass
class _Plan:
    action: ActionEvent          # template; t_ms filled at emission
    act_at_ms: float
    is_error: bool


class TraineeAgent:
    """Single-owner synthetic trainee, deterministic for a fixed seed."""

    def __init__(self, params: AgentParams, seed: int,
                 guidance_threshold_s: Optional[float] = None):
        self.params = params
        self._rng = random.Random(seed)
        self.stress = StressState(params.stress_decay_per_s)
        self._guidance_threshold_s = guidance_threshold_s
        self._plan: Optional[_Plan] = None
        self._plan_signature: Optional[tuple] = None
        self._last_act_ms = 0.0      # continuous-time chain anchor
        self._alt_light_decision: Optional[bool] = None
        self._boosted = False

    # -- stress dynamics ---------------------------------------------------

    def stress_at(self, t_ms: float) -> float:
        return self.stress.at(t_ms)

    def set_regulated(self, t_ms: float, regulated: bool):
        """Regulation/emotional support multiplies the decay rate by beta."""
        if regulated != self._boosted:
            self._boosted = regulated
            rate = self.params.stress_decay_per_s
            if regulated:
                rate *= self.params.intervention_recovery_gain
            self.stress.set_rate(t_ms, rate)

    def apply_trigger(self, t_ms: float, category: str):
        impulse = self.params.trigger_impulse.get(category, 0.0)
        self.stress.impulse(t_ms, impulse)
        # An acute event interrupts whatever the agent was about to do.
        self._plan = None
        self._plan_signature = None
        self._last_act_ms = max(self._last_act_ms, t_ms)

    # -- signal coupling ------------------------------------------------------

    def drive_targets(self, t_ms: float) -> Tuple[float, float, float]:
        """(hr_bpm, sdnn_ms, gsr_arousal) targets for the synthesizers."""
        s = self.stress_at(t_ms)
        hr = self.params.resting_hr_bpm * (1.0 + self.params.hr_stress_gain * s)
        sdnn = self.params.resting_sdnn_ms * (1.0 - self.params.sdnn_stress_loss * s)
        return hr, sdnn, s

    # -- action planning -----------------------------------------------------

    def _choose_intent(self, scenario: ScenarioEngine) -> ActionEvent:
        expected = scenario.expected_actions()
        if (scenario.lighting == "degraded"
                and scenario.phase == TaskPhase.WOUND_OPENING):
            if self._alt_light_decision is None:
                self._alt_light_decision = (
                    self._rng.random() < self.params.alt_light_probability)
            if self._alt_light_decision:
                self._alt_light_decision = False  # one attempt only
                return ActionEvent(0.0, "activate_alt_light")
        if scenario.phase == TaskPhase.CLOT_REMOVING and len(expected) == 2:
            if scenario.forceps_contaminated and not scenario.forceps_replaced:
                pick = 0 if self._rng.random() < 0.5 else 1
            else:
                pick = 0 if self._rng.random() < self.params.forceps_preference else 1
            return expected[pick]
        return expected[0]

    def _wrong_action(self, scenario: ScenarioEngine) -> Optional[ActionEvent]:
        """A seeded pick among actions the scenario will score as critical."""
        templates = (
            [ActionEvent(0.0, a) for a in (
                "press_call_bell", "arrange_drapes", "remove_steri_strips",
                "fetch_scissors_from_supply", "fetch_sterile_forceps",
                "check_monitor", "request_anesthesia",
                "prepare_intubation_kit", "brief_team")]
            + [ActionEvent(0.0, "cut_sutures", layer=l) for l in SUTURE_LAYERS]
            + [ActionEvent(0.0, "remove_clot", tool=t) for t in ("forceps", "manual")]
        )
        order = list(range(len(templates)))
        self._rng.shuffle(order)
        for i in order:
            if scenario.probe_outcome(templates[i]) == Outcome.CRITICAL_ERROR:
                return templates[i]
        return None

    def _draw_latency_ms(self, t_ms: float, scenario: ScenarioEngine) -> float:
        s = self.stress_at(t_ms)
        latency = self.params.base_action_latency_s * 1000.0
        latency *= 1.0 + self.params.latency_stress_gain * s
        if scenario.lighting == "degraded":
            latency *= LIGHTING_LATENCY_MULTIPLIER
        if self.params.latency_jitter_sigma > 0:
            latency *= self._rng.lognormvariate(0.0, self.params.latency_jitter_sigma)
        if self.params.guidance_caps_enabled and self._guidance_threshold_s is not None:
            theta_ms = self._guidance_threshold_s * 1000.0
            if latency > theta_ms:
                # The step instruction surfaces at theta and caps hesitation
                # there (plus a short compliance delay); the visual layer at
                # 2*theta caps the remainder at half a threshold.
                latency = min(latency, theta_ms + STEP_RESPONSE_MS,
                              2.0 * theta_ms + 0.5 * theta_ms)
        return latency

    def _make_plan(self, t_ms: float, scenario: ScenarioEngine):
        plan_t = max(self._last_act_ms, 0.0)
        intent = self._choose_intent(scenario)
        latency = self._draw_latency_ms(plan_t, scenario)
        s = self.stress_at(plan_t)
        p_err = min(self.params.error_base + self.params.error_stress_gain * s, 0.9)
        is_error = self._rng.random() < p_err
        action = intent
        if is_error:
            wrong = self._wrong_action(scenario)
            if wrong is None:
                is_error = False
            else:
                action = wrong
        self._plan = _Plan(action=action, act_at_ms=plan_t + latency, is_error=is_error)
        self._plan_signature = self._signature(scenario)

    @staticmethod
    def _signature(scenario: ScenarioEngine) -> tuple:
        return scenario.state_key()

    def on_tick(self, t_ms: float, scenario: ScenarioEngine) -> Optional[ActionEvent]:
        """Maybe emit one action this tick; replans when the world changed."""
        if scenario.phase == TaskPhase.DONE:
            return None
        if self._plan is None or self._plan_signature != self._signature(scenario):
            self._make_plan(t_ms, scenario)
        if t_ms + 1e-9 >= self._plan.act_at_ms:
            plan = self._plan
            self._plan = None
            self._plan_signature = None
            self._last_act_ms = plan.act_at_ms
            tpl = plan.action
            return ActionEvent(t_ms, tpl.action, layer=tpl.layer, tool=tpl.tool)
        return None
