"""Scenario state-machine tests: phase flow, triggers, countdown, completion."""

import pytest

from calmward.errors import ConfigError
from calmward.scenario import (
    EMERGENCY_SEQUENCE,
    PHASE_ORDER,
    SUTURE_LAYERS,
    ActionEvent,
    Outcome,
    ScenarioConfig,
    ScenarioEngine,
    TaskPhase,
)


def act(engine, action, t=0.0, layer=None, tool=None):
    return engine.advance(ActionEvent(t, action, layer=layer, tool=tool))


def quiet_config(**kw):
    base = dict(triggers=(), t2_time_ms=None)
    base.update(kw)
    return ScenarioConfig(**base)


def drive_to_phase(engine, phase, t=0.0):
    """Play correct actions until the engine reaches the requested phase.

    Environment faults (a dropped instrument) come back as REJECTED; the
    driver then retries with the freshly suggested action.
    """
    guard = 0
    while engine.phase != phase and engine.phase != TaskPhase.DONE:
        template = engine.expected_actions()[0]
        result = act(engine, template.action, t=t, layer=template.layer, tool=template.tool)
        assert result.outcome in (Outcome.ACCEPTED, Outcome.REJECTED)
        guard += 1
        assert guard < 30
    assert engine.phase == phase


# ---------------------------------------------------------------------------
# phase flow
# ---------------------------------------------------------------------------

def test_preparation_to_wound_opening():
    engine = ScenarioEngine(quiet_config())
    assert act(engine, "press_call_bell").outcome == Outcome.ACCEPTED
    result = act(engine, "arrange_drapes")
    assert result.outcome == Outcome.ACCEPTED
    assert result.phase_changed
    assert engine.phase == TaskPhase.WOUND_OPENING


def test_drapes_before_bell_is_critical_error():
    engine = ScenarioEngine(quiet_config())
    result = act(engine, "arrange_drapes")
    assert result.outcome == Outcome.CRITICAL_ERROR
    assert engine.phase == TaskPhase.PREPARATION


def test_suture_layer_order_enforced():
    engine = ScenarioEngine(quiet_config())
    drive_to_phase(engine, TaskPhase.WOUND_OPENING)
    act(engine, "remove_steri_strips")
    bad = act(engine, "cut_sutures", layer="platysma")
    assert bad.outcome == Outcome.CRITICAL_ERROR
    assert engine.layers_cut == 0
    for layer in SUTURE_LAYERS:
        assert act(engine, "cut_sutures", layer=layer).outcome == Outcome.ACCEPTED
    assert engine.phase == TaskPhase.CLOT_REMOVING


def test_cut_before_steri_removal_is_critical_error():
    engine = ScenarioEngine(quiet_config())
    drive_to_phase(engine, TaskPhase.WOUND_OPENING)
    assert act(engine, "cut_sutures", layer="subcuticular").outcome == Outcome.CRITICAL_ERROR


def test_full_stable_run_completes():
    engine = ScenarioEngine(quiet_config())
    drive_to_phase(engine, TaskPhase.STATUS_MONITORING, t=100_000.0)
    assert act(engine, "check_monitor", t=110_000.0).outcome == Outcome.ACCEPTED
    assert engine.phase == TaskPhase.STATUS_MONITORING  # vitals are stable
    result = act(engine, "press_call_bell", t=115_000.0)
    assert result.outcome == Outcome.ACCEPTED
    assert engine.phase == TaskPhase.DONE
    assert engine.completion_check() == "completed"


def test_emergency_branch_sequence():
    engine = ScenarioEngine(quiet_config(triggers=("t3",)))
    drive_to_phase(engine, TaskPhase.STATUS_MONITORING, t=100_000.0)
    assert "t3" in engine.fired
    act(engine, "check_monitor", t=110_000.0)
    assert engine.phase == TaskPhase.EMERGENCY_RESPONSE
    assert act(engine, "prepare_intubation_kit", t=111_000.0).outcome == Outcome.CRITICAL_ERROR
    for i, step in enumerate(EMERGENCY_SEQUENCE):
        assert act(engine, step, t=112_000.0 + i).outcome == Outcome.ACCEPTED
    assert engine.phase == TaskPhase.DONE


def test_action_after_done_rejected():
    engine = ScenarioEngine(quiet_config())
    drive_to_phase(engine, TaskPhase.STATUS_MONITORING)
    act(engine, "check_monitor")
    act(engine, "press_call_bell")
    result = act(engine, "press_call_bell")
    assert result.outcome == Outcome.REJECTED
    assert result.reason == "session-over"


# ---------------------------------------------------------------------------
# triggers
# ---------------------------------------------------------------------------

def test_t2_fires_at_exactly_60s_in_study_mode():
    engine = ScenarioEngine(ScenarioConfig.study())
    assert engine.tick(59_900.0) == []
    firings = engine.tick(60_000.0)
    assert len(firings) == 1
    assert firings[0].category == "t2"
    assert firings[0].t_ms == 60_000.0
    assert engine.vitals.hr_bpm == 130.0
    assert engine.vitals.spo2_percent == 80.0
    # Fires once only.
    assert engine.tick(61_000.0) == []


def test_t2_deducts_exactly_120s():
    engine = ScenarioEngine(ScenarioConfig.study())
    before = engine.remaining_ms(60_000.0)
    engine.tick(60_000.0)
    after = engine.remaining_ms(60_000.0)
    assert before - after == 120_000.0
    # Worked example: 300 s remaining becomes 180 s.
    assert before == 300_000.0
    assert after == 180_000.0


def test_t2_random_window_is_seeded():
    cfg = quiet_config(triggers=("t2",), t2_time_ms=None, t2_window_ms=(60_000.0, 120_000.0))
    times = []
    for _ in range(2):
        engine = ScenarioEngine(cfg, seed=5)
        t = 0.0
        while "t2" not in engine.fired:
            t += 100.0
            engine.tick(t)
        times.append(engine.fired["t2"])
    assert times[0] == times[1]
    assert 60_000.0 <= times[0] <= 120_100.0


def test_t1a_scissors_vanish_when_wound_exposed():
    engine = ScenarioEngine(quiet_config(triggers=("t1a",)))
    drive_to_phase(engine, TaskPhase.WOUND_OPENING)
    result = act(engine, "remove_steri_strips")
    assert any(f.category == "t1a" for f in result.fired)
    assert engine.scissors_available is False
    blocked = act(engine, "cut_sutures", layer="subcuticular")
    assert blocked.outcome == Outcome.REJECTED
    assert blocked.reason == "scissors-missing"
    assert engine.layers_cut == 0
    assert act(engine, "fetch_scissors_from_supply").outcome == Outcome.ACCEPTED
    assert act(engine, "cut_sutures", layer="subcuticular").outcome == Outcome.ACCEPTED


def test_t1b_forceps_drop_then_contaminated_use_is_critical():
    engine = ScenarioEngine(quiet_config(triggers=("t1b",)))
    drive_to_phase(engine, TaskPhase.CLOT_REMOVING)
    first = act(engine, "remove_clot", tool="forceps")
    assert first.outcome == Outcome.REJECTED
    assert first.reason == "forceps-dropped"
    assert any(f.category == "t1b" for f in first.fired)
    second = act(engine, "remove_clot", tool="forceps")
    assert second.outcome == Outcome.CRITICAL_ERROR
    assert second.reason == "contaminated-forceps-used"
    assert engine.clot_removed is False
    assert act(engine, "fetch_sterile_forceps").outcome == Outcome.ACCEPTED
    assert act(engine, "remove_clot", tool="forceps").outcome == Outcome.ACCEPTED


def test_t1b_manual_removal_bypasses_contamination():
    engine = ScenarioEngine(quiet_config(triggers=("t1b",)))
    drive_to_phase(engine, TaskPhase.CLOT_REMOVING)
    act(engine, "remove_clot", tool="forceps")
    assert act(engine, "remove_clot", tool="manual").outcome == Outcome.ACCEPTED
    assert engine.phase == TaskPhase.STATUS_MONITORING


def test_t1c_lighting_degrades_and_alt_light_clears():
    engine = ScenarioEngine(quiet_config(triggers=("t1c",)))
    drive_to_phase(engine, TaskPhase.WOUND_OPENING)
    assert engine.lighting == "degraded"
    assert act(engine, "activate_alt_light").outcome == Outcome.ACCEPTED
    assert engine.lighting == "restored"
    assert act(engine, "activate_alt_light").outcome == Outcome.CRITICAL_ERROR


def test_t3_routes_to_emergency_response():
    engine = ScenarioEngine(quiet_config(triggers=("t3",)))
    drive_to_phase(engine, TaskPhase.CLOT_REMOVING)
    result = act(engine, "remove_clot", tool="manual")
    assert any(f.category == "t3" for f in result.fired)
    assert engine.vitals.spo2_percent == 80.0
    act(engine, "check_monitor")
    assert engine.phase == TaskPhase.EMERGENCY_RESPONSE


def test_disabled_triggers_leave_no_effects():
    engine = ScenarioEngine(quiet_config())
    drive_to_phase(engine, TaskPhase.STATUS_MONITORING, t=50_000.0)
    assert engine.fired == {}
    assert engine.scissors_available is True
    assert engine.lighting == "normal"
    assert engine.vitals.stable


def test_triggers_fire_at_most_once():
    engine = ScenarioEngine(ScenarioConfig.study())
    engine.tick(60_000.0)
    drive_to_phase(engine, TaskPhase.WOUND_OPENING, t=61_000.0)
    act(engine, "remove_steri_strips", t=62_000.0)
    for category, t_fired in engine.fired.items():
        assert t_fired is not None
    # Re-running the same stimulus does not re-fire.
    assert engine.tick(70_000.0) == []
    fired_before = dict(engine.fired)
    act(engine, "fetch_scissors_from_supply", t=63_000.0)
    assert engine.fired == fired_before


# ---------------------------------------------------------------------------
# countdown and completion
# ---------------------------------------------------------------------------

def test_countdown_conservation():
    engine = ScenarioEngine(ScenarioConfig.study())
    for t in range(0, 240_000, 7_000):
        expected = 360_000.0 - t - (120_000.0 if "t2" in engine.fired else 0.0)
        assert engine.remaining_ms(float(t)) == max(expected, 0.0)
        engine.tick(float(t))


def test_completion_after_expiry_is_incomplete():
    engine = ScenarioEngine(quiet_config(initial_countdown_ms=100_000.0))
    drive_to_phase(engine, TaskPhase.STATUS_MONITORING, t=150_000.0)
    act(engine, "check_monitor", t=151_000.0)
    act(engine, "press_call_bell", t=152_000.0)
    assert engine.phase == TaskPhase.DONE
    assert engine.done_at_ms == 152_000.0  # duration still recorded
    assert engine.completion_check() == "incomplete"


def test_incomplete_when_not_done():
    engine = ScenarioEngine(quiet_config())
    drive_to_phase(engine, TaskPhase.CLOT_REMOVING)
    assert engine.completion_check() == "incomplete"


def test_completed_within_allotment():
    engine = ScenarioEngine(ScenarioConfig.study())
    engine.tick(60_000.0)
    drive_to_phase(engine, TaskPhase.STATUS_MONITORING, t=120_000.0)
    act(engine, "check_monitor", t=150_000.0)
    for i, step in enumerate(EMERGENCY_SEQUENCE):
        act(engine, step, t=160_000.0 + i * 1_000.0)
    assert engine.phase == TaskPhase.DONE
    # 240 s total allotment after the deduction; done at 162 s.
    assert engine.completion_check() == "completed"


def test_hard_stop_rejects_after_expiry():
    engine = ScenarioEngine(quiet_config(initial_countdown_ms=10_000.0,
                                         hard_stop_on_expiry=True))
    result = act(engine, "press_call_bell", t=10_000.0)
    assert result.outcome == Outcome.REJECTED
    assert result.reason == "session-expired"


def test_invalid_actions_rejected_at_construction():
    with pytest.raises(ConfigError):
        ActionEvent(0.0, "defibrillate")
    with pytest.raises(ConfigError):
        ActionEvent(0.0, "cut_sutures", layer="fascia")
    with pytest.raises(ConfigError):
        ActionEvent(0.0, "remove_clot", tool="suction")


# ---------------------------------------------------------------------------
# exhaustive small-trace model check
# ---------------------------------------------------------------------------

ALL_ACTION_TEMPLATES = (
    [("press_call_bell", None, None), ("arrange_drapes", None, None),
     ("remove_steri_strips", None, None), ("fetch_scissors_from_supply", None, None),
     ("fetch_sterile_forceps", None, None), ("activate_alt_light", None, None),
     ("check_monitor", None, None), ("request_anesthesia", None, None),
     ("prepare_intubation_kit", None, None), ("brief_team", None, None)]
    + [("cut_sutures", layer, None) for layer in SUTURE_LAYERS]
    + [("remove_clot", None, tool) for tool in ("forceps", "manual")]
)


def legal_phase_step(before, after, vitals_stable):
    """Allowed phase transitions: stay, advance one, or skip the conditional
    emergency phase when the patient is stable."""

    b, a = PHASE_ORDER[before], PHASE_ORDER[after]
    if a == b or a == b + 1:
        return True
    if before == TaskPhase.STATUS_MONITORING and after == TaskPhase.DONE and vitals_stable:
        return True
    return False


@pytest.mark.parametrize("triggers", [(), ("t1a", "t1b", "t1c", "t3")])
def test_phase_order_safety_exhaustive(triggers):
    """Walk every action sequence up to length 8 over the deduplicated
    reachable state graph; phase order must never be violated and only
    accepted actions may change state."""
    import copy

    cfg = quiet_config(triggers=triggers)
    initial = ScenarioEngine(cfg)
    frontier = {initial.state_key(): initial}
    seen = set(frontier)
    transitions = 0
    for depth in range(8):
        next_frontier = {}
        for engine in frontier.values():
            for action, layer, tool in ALL_ACTION_TEMPLATES:
                probe = copy.deepcopy(engine)
                before_phase = probe.phase
                before_key = probe.state_key()
                result = probe.advance(ActionEvent(0.0, action, layer=layer, tool=tool))
                transitions += 1
                assert legal_phase_step(before_phase, probe.phase, probe.vitals.stable), (
                    before_phase, probe.phase, action,
                )
                if result.outcome != Outcome.ACCEPTED:
                    # Errors and rejections never advance progress or phase,
                    # though t1b's drop may mark the forceps contaminated.
                    assert probe.phase == before_phase
                    if result.outcome == Outcome.CRITICAL_ERROR:
                        assert probe.state_key() == before_key
                key = probe.state_key()
                if key not in seen:
                    seen.add(key)
                    next_frontier[key] = probe
        frontier = next_frontier
    assert transitions > 0
    assert len(seen) < 200  # the reachable space is intentionally tiny
