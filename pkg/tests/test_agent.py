"""Synthetic trainee tests: stress dynamics, couplings, determinism."""

import math

import pytest

from calmward.agent import (
    LIGHTING_LATENCY_MULTIPLIER,
    AgentParams,
    StressState,
    TraineeAgent,
)
from calmward.errors import ConfigError
from calmward.scenario import Outcome, ScenarioConfig, ScenarioEngine, TaskPhase


def quiet_scenario(**kw):
    base = dict(triggers=(), t2_time_ms=None)
    base.update(kw)
    return ScenarioEngine(ScenarioConfig(**base))


def run_to_completion(agent, scenario, tick_ms=100.0, max_ms=900_000.0):
    t = 0.0
    actions = []
    while scenario.phase != TaskPhase.DONE and t < max_ms:
        t += tick_ms
        scenario.tick(t)
        action = agent.on_tick(t, scenario)
        if action is not None:
            result = scenario.advance(action)
            actions.append((action, result))
    return actions


# ---------------------------------------------------------------------------
# stress dynamics
# ---------------------------------------------------------------------------

def test_stress_decays_exponentially():
    s = StressState(decay_per_s=0.05)
    s.impulse(0.0, 0.8)
    assert s.at(0.0) == pytest.approx(0.8)
    assert s.at(10_000.0) == pytest.approx(0.8 * math.exp(-0.5), rel=1e-12)


def test_intervention_speeds_exit_by_beta():
    """Closed form: time to fall below the exit level scales as 1/beta."""
    lam, beta, s0, exit_level = 0.05, 3.0, 0.8, 0.4

    plain = StressState(decay_per_s=lam)
    plain.impulse(0.0, s0)
    boosted = StressState(decay_per_s=lam)
    boosted.impulse(0.0, s0)
    boosted._rate = lam * beta  # what set_regulated does via the agent

    t_plain = math.log(s0 / exit_level) / lam * 1000.0
    t_boosted = math.log(s0 / exit_level) / (lam * beta) * 1000.0
    assert plain.at(t_plain) == pytest.approx(exit_level, rel=1e-9)
    assert boosted.at(t_boosted) == pytest.approx(exit_level, rel=1e-9)
    assert t_plain / t_boosted == pytest.approx(beta, rel=1e-12)


def test_set_regulated_switches_decay_rate():
    params = AgentParams(stress_decay_per_s=0.05, intervention_recovery_gain=3.0)
    agent = TraineeAgent(params, seed=1)
    agent.apply_trigger(0.0, "t2")
    agent.set_regulated(0.0, True)
    # After 10 s at the boosted rate: s = 0.8 * exp(-0.15 * 10).
    assert agent.stress_at(10_000.0) == pytest.approx(0.8 * math.exp(-1.5), rel=1e-9)
    agent.set_regulated(10_000.0, False)
    assert agent.stress_at(20_000.0) == pytest.approx(
        0.8 * math.exp(-1.5) * math.exp(-0.5), rel=1e-9)


def test_apply_trigger_additive_clamped():
    agent = TraineeAgent(AgentParams(), seed=1)
    agent.stress.impulse(0.0, 0.3)
    agent.apply_trigger(0.0, "t1a")  # +0.4
    assert agent.stress_at(0.0) == pytest.approx(0.7)
    agent2 = TraineeAgent(AgentParams(), seed=1)
    agent2.stress.impulse(0.0, 0.9)
    agent2.apply_trigger(0.0, "t2")  # +0.8, clamped
    assert agent2.stress_at(0.0) == pytest.approx(1.0)


def test_unfired_triggers_leave_state_unchanged():
    agent = TraineeAgent(AgentParams(), seed=1)
    before = agent.stress_at(5_000.0)
    # No trigger fired; nothing calls apply_trigger.
    assert agent.stress_at(5_000.0) == before == 0.0


# ---------------------------------------------------------------------------
# signal coupling
# ---------------------------------------------------------------------------

def test_drive_targets_identity_at_zero_stress():
    agent = TraineeAgent(AgentParams(resting_hr_bpm=70.0, resting_sdnn_ms=50.0), seed=1)
    hr, sdnn, arousal = agent.drive_targets(0.0)
    assert hr == 70.0
    assert sdnn == 50.0
    assert arousal == 0.0


def test_drive_targets_at_gate_crossings():
    params = AgentParams(resting_hr_bpm=70.0, resting_sdnn_ms=50.0,
                         stress_decay_per_s=1e-9)
    agent = TraineeAgent(params, seed=1)
    agent.stress.impulse(0.0, 0.5)
    hr, _, _ = agent.drive_targets(0.0)
    assert hr == pytest.approx(91.0)  # exactly the +30% boundary
    agent2 = TraineeAgent(params, seed=1)
    agent2.stress.impulse(0.0, 0.7)
    _, sdnn, _ = agent2.drive_targets(0.0)
    assert sdnn == pytest.approx(32.5)  # exactly the -35% boundary


# ---------------------------------------------------------------------------
# action behaviour
# ---------------------------------------------------------------------------

def test_unstressed_agent_acts_at_base_latency_with_zero_errors():
    params = AgentParams(base_action_latency_s=5.0, latency_jitter_sigma=0.0,
                         error_base=0.0)
    agent = TraineeAgent(params, seed=3)
    scenario = quiet_scenario()
    actions = run_to_completion(agent, scenario)
    assert scenario.phase == TaskPhase.DONE
    assert all(r.outcome == Outcome.ACCEPTED for _, r in actions)
    times = [a.t_ms for a, _ in actions]
    gaps = [b - a for a, b in zip(times, times[1:])]
    for gap in gaps:
        assert gap == pytest.approx(5_000.0, abs=100.0 + 1e-6)


def test_lighting_penalty_applied():
    params = AgentParams(base_action_latency_s=5.0, latency_jitter_sigma=0.0,
                         error_base=0.0, alt_light_probability=0.0,
                         trigger_impulse={"t1c": 0.0})
    agent = TraineeAgent(params, seed=3)
    scenario = ScenarioEngine(ScenarioConfig(triggers=("t1c",), t2_time_ms=None))
    actions = run_to_completion(agent, scenario)
    by_action = {a.action: a.t_ms for a, _ in actions}
    # Steri-strip removal happens under degraded light: 5 s * 1.5 = 7.5 s
    # after the drape arrangement that triggered the lamp failure.
    gap = by_action["remove_steri_strips"] - by_action["arrange_drapes"]
    assert gap == pytest.approx(5_000.0 * LIGHTING_LATENCY_MULTIPLIER, abs=100.0 + 1e-6)


def test_agent_recovers_from_environment_faults():
    params = AgentParams(base_action_latency_s=2.0, latency_jitter_sigma=0.0,
                         error_base=0.0, trigger_impulse={})
    agent = TraineeAgent(params, seed=5)
    scenario = ScenarioEngine(ScenarioConfig(triggers=("t1a", "t1b"), t2_time_ms=None))
    actions = run_to_completion(agent, scenario)
    assert scenario.phase == TaskPhase.DONE
    outcomes = [r.outcome for _, r in actions]
    assert Outcome.CRITICAL_ERROR not in outcomes
    played = [a.action for a, _ in actions]
    assert "fetch_scissors_from_supply" in played


def test_error_injection_produces_critical_errors():
    params = AgentParams(base_action_latency_s=1.0, latency_jitter_sigma=0.0,
                         error_base=0.5, error_stress_gain=0.0)
    agent = TraineeAgent(params, seed=11)
    scenario = quiet_scenario()
    actions = run_to_completion(agent, scenario)
    outcomes = [r.outcome for _, r in actions]
    assert Outcome.CRITICAL_ERROR in outcomes
    assert scenario.phase == TaskPhase.DONE


def test_guidance_caps_bound_latency():
    """With a 10 s threshold, the step instruction at 10 s bounds the agent's
    hesitation: it complies within the response delay instead of waiting out
    its drawn 30 s latency."""
    from calmward.agent import STEP_RESPONSE_MS

    params = AgentParams(base_action_latency_s=30.0, latency_jitter_sigma=0.0,
                         error_base=0.0, guidance_caps_enabled=True)
    capped = TraineeAgent(params, seed=3, guidance_threshold_s=10.0)
    scenario = quiet_scenario()
    action = None
    t = 0.0
    while action is None:
        t += 100.0
        action = capped.on_tick(t, scenario)
    assert action.t_ms == pytest.approx(10_000.0 + STEP_RESPONSE_MS, abs=100.0 + 1e-6)

    uncapped = TraineeAgent(params, seed=3, guidance_threshold_s=None)
    scenario2 = quiet_scenario()
    action2 = None
    t = 0.0
    while action2 is None:
        t += 100.0
        action2 = uncapped.on_tick(t, scenario2)
    assert action2.t_ms == pytest.approx(30_000.0, abs=100.0 + 1e-6)


def test_agent_determinism():
    traces = []
    for _ in range(2):
        agent = TraineeAgent(AgentParams(error_base=0.1), seed=21)
        scenario = ScenarioEngine(ScenarioConfig.study(), seed=21)
        actions = run_to_completion(agent, scenario)
        traces.append([(a.t_ms, a.action, a.layer, a.tool, r.outcome)
                       for a, r in actions])
    assert traces[0] == traces[1]


def test_params_validation():
    with pytest.raises(ConfigError):
        AgentParams(stress_decay_per_s=0.0)
    with pytest.raises(ConfigError):
        AgentParams(intervention_recovery_gain=0.5)
    with pytest.raises(ConfigError):
        AgentParams(error_base=-0.1)
