"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with ``pytest tests/test_acceptance.py -s`` to see them
live). Tolerances are pinned here and nowhere else."""

import copy
import itertools
import math
import random
import time
from pathlib import Path

from calmward.config import load_config
from calmward.detection import Baseline, IndicatorFlags, assess, evaluate_indicators
from calmward.harness import replay, run_experiment, run_session
from calmward.policy import GuidanceTier, InterventionPolicy, PolicyContext, StepContext
from calmward.questionnaire import (
    InterventionProfile,
    QuestionnaireResponse,
    score,
)
from calmward.scenario import (
    PHASE_ORDER,
    SUTURE_LAYERS,
    ActionEvent,
    Outcome,
    ScenarioConfig,
    ScenarioEngine,
    TaskPhase,
)
from calmward.signals import (
    NnSeries,
    VitalsEstimate,
    compute_hr,
    compute_sdnn,
    detect_peaks,
    moving_average,
    nn_intervals,
    synthesize_ppg,
)

DATA = Path(__file__).parent / "data"


def report(name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {status}{suffix}")
    assert ok, f"{name} failed{suffix}"


# ---------------------------------------------------------------------------
# 1. Signal pipeline
# ---------------------------------------------------------------------------

def test_acceptance_signal_pipeline():
    t0 = time.perf_counter()
    ok = True
    detail = []
    for f in (55.0, 75.0, 100.0, 130.0):
        samples = synthesize_ppg(lambda t: f, 30_000.0, 20.0, seed=int(f))
        beats = detect_peaks(moving_average(samples, 9))
        hr = compute_hr(nn_intervals(beats))
        detail.append(f"{f:.0f}->{hr:.2f}")
        ok = ok and abs(hr - f) <= 2.0
    sdnn = compute_sdnn(NnSeries((800.0, 810.0, 790.0, 805.0, 795.0)))
    ok = ok and abs(sdnn - 7.0711) <= 1e-4  # stated value rounded to 4 dp
    ok = ok and abs(sdnn - math.sqrt(250.0 / 5.0)) <= 1e-6  # exact oracle
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 5.0
    report("signal-pipeline", ok, f"{', '.join(detail)}; sdnn={sdnn:.6f}; {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. Detection constants
# ---------------------------------------------------------------------------

def test_acceptance_detection_constants():
    base = Baseline(hr_mean_bpm=70.0, sdnn_mean_ms=50.0)

    def flags(hr, sdnn):
        return evaluate_indicators(
            VitalsEstimate(hr, sdnn, 0.0, 10_000.0), False, base)

    boundary = flags(70.0 * 1.30, 50.0 * 0.65)
    above = flags(70.0 * 1.30 + 1e-9, 50.0 * 0.65 - 1e-9)
    ok = (not boundary.hr_abnormal and not boundary.sdnn_abnormal
          and above.hr_abnormal and above.sdnn_abnormal)

    for hr, sdnn, gsr in itertools.product([False, True], repeat=3):
        expected = (int(hr) + int(sdnn) + int(gsr)) >= 2
        ok = ok and assess(IndicatorFlags(hr, sdnn, gsr)) is expected
    report("detection-constants", ok)


# ---------------------------------------------------------------------------
# 3. Questionnaire scoring
# ---------------------------------------------------------------------------

def test_acceptance_questionnaire_scoring():
    ok = True

    def scored(pairs):
        items = [3] * 19
        for n, v in pairs.items():
            items[n - 1] = v
        return score(QuestionnaireResponse(tuple(items)))

    # control-attribution off-switch and tie rule
    ok = ok and scored({1: 2, 2: 5, 3: 2, 4: 5, 5: 2, 6: 5}).self_regulation is False
    ok = ok and scored({1: 4, 2: 4, 3: 4, 4: 4, 5: 4, 6: 4}).self_regulation is True
    # items 7/8 "below 3" gates
    ok = ok and scored({7: 2}).breathing_guidance is False
    ok = ok and scored({7: 3}).breathing_guidance is True
    ok = ok and scored({8: 2}).stress_feedback is False
    ok = ok and scored({8: 3}).stress_feedback is True
    # structure bands over every reachable total (5..25)
    for total in range(5, 26):
        values = []
        rest = total
        for i in range(5):
            v = min(5, max(1, rest - (4 - i)))
            values.append(v)
            rest -= v
        assert sum(values) == total
        profile = scored(dict(zip(range(9, 14), values)))
        if total < 15:
            expected = None
        elif total >= 22:
            expected = 10
        elif total >= 18:
            expected = 15
        else:
            expected = 30
        ok = ok and profile.guidance_threshold_s == expected
        ok = ok and profile.procedure_guidance is (expected is not None)

    # 10000-case random-response property run
    rng = random.Random(0)
    for _ in range(10_000):
        items = tuple(rng.randint(1, 5) for _ in range(19))
        profile = score(QuestionnaireResponse(items))  # validates invariants
        if profile.breathing_guidance or profile.stress_feedback:
            ok = ok and profile.self_regulation
        ok = ok and (profile.procedure_guidance
                     == (profile.guidance_threshold_s is not None))
    report("questionnaire-scoring", ok)


# ---------------------------------------------------------------------------
# 4. Escalation timing (three golden traces)
# ---------------------------------------------------------------------------

def run_escalation_trace(action_ticks, n_ticks=25):
    """1 s assessment ticks; inactivity grows 1 s per tick, an action at
    tick k resets it. Returns the tier after each tick."""
    profile = InterventionProfile(
        self_regulation=True, breathing_guidance=False, stress_feedback=False,
        procedure_guidance=True, guidance_threshold_s=10,
        companion_support=False, noise_reduction=False)
    policy = InterventionPolicy(profile, seed=1)
    step = StepContext("wound_opening", "step", "Expose the wound",
                       "Please remove the Steri-strips covering the wound",
                       "steri_strips")
    tiers = []
    inactivity = 0.0
    flags = IndicatorFlags(False, False, False)
    for k in range(1, n_ticks + 1):
        if k in action_ticks:
            inactivity = 0.0
        else:
            inactivity += 1000.0
        policy.on_assessment(k * 1000.0, False, flags, PolicyContext(
            step=step, inactivity_ms=inactivity,
            step_changed=k in action_ticks, task_completed=False))
        tiers.append(policy.guidance_tier())
    return tiers


def test_acceptance_escalation_timing():
    ok = True
    # Trace 1: no action. Tier changes at the first tick after 10 s and 20 s.
    t1 = run_escalation_trace(set())
    ok = ok and t1[9] == GuidanceTier.GOAL_PROMPT          # inactivity 10 s
    ok = ok and t1[10] == GuidanceTier.STEP_INSTRUCTION    # 11 s: first > 10
    ok = ok and t1[19] == GuidanceTier.STEP_INSTRUCTION    # 20 s
    ok = ok and t1[20] == GuidanceTier.VISUAL_GUIDANCE     # 21 s: first > 20
    # Trace 2: an action at tick 15 resets to the goal prompt.
    t2 = run_escalation_trace({15}, n_ticks=30)
    ok = ok and t2[13] == GuidanceTier.STEP_INSTRUCTION
    ok = ok and t2[14] == GuidanceTier.GOAL_PROMPT
    ok = ok and t2[24] == GuidanceTier.GOAL_PROMPT         # inactivity back to 10 s
    ok = ok and t2[25] == GuidanceTier.STEP_INSTRUCTION    # first tick past it
    # Trace 3: frequent actions hold the goal prompt.
    t3 = run_escalation_trace({5, 10, 15, 20, 25})
    ok = ok and all(tier == GuidanceTier.GOAL_PROMPT for tier in t3)
    report("escalation-timing", ok)


# ---------------------------------------------------------------------------
# 5. Scenario: study preset and phase-order safety
# ---------------------------------------------------------------------------

def test_acceptance_scenario_study_preset():
    engine = ScenarioEngine(ScenarioConfig.study())
    before = engine.remaining_ms(60_000.0)
    firings = engine.tick(60_000.0)
    after = engine.remaining_ms(60_000.0)
    ok = (len(firings) == 1 and firings[0].category == "t2"
          and firings[0].t_ms == 60_000.0
          and before - after == 120_000.0
          and engine.vitals.hr_bpm == 130.0
          and engine.vitals.spo2_percent == 80.0)
    ok = ok and engine.tick(60_100.0) == []  # fires exactly once
    report("scenario-study-preset", ok,
           f"t2@60000ms, deduction {before - after:.0f}ms, "
           f"vitals ({engine.vitals.hr_bpm:.0f}, {engine.vitals.spo2_percent:.0f}%)")


ALL_TEMPLATES = (
    [("press_call_bell", None, None), ("arrange_drapes", None, None),
     ("remove_steri_strips", None, None), ("fetch_scissors_from_supply", None, None),
     ("fetch_sterile_forceps", None, None), ("activate_alt_light", None, None),
     ("check_monitor", None, None), ("request_anesthesia", None, None),
     ("prepare_intubation_kit", None, None), ("brief_team", None, None)]
    + [("cut_sutures", layer, None) for layer in SUTURE_LAYERS]
    + [("remove_clot", None, tool) for tool in ("forceps", "manual")]
)


def test_acceptance_phase_order_safety():
    """Exhaustive model check over every action sequence up to length 8.

    Sequences are explored over the deduplicated reachable-state graph,
    which covers every transition any sequence of length <= 8 can make."""
    cfg = ScenarioConfig(triggers=("t1a", "t1b", "t1c", "t3"), t2_time_ms=None)
    initial = ScenarioEngine(cfg)
    frontier = {initial.state_key(): initial}
    seen = {initial.state_key()}
    ok = True
    transitions = 0
    for _ in range(8):
        nxt = {}
        for engine in frontier.values():
            for action, layer, tool in ALL_TEMPLATES:
                probe = copy.deepcopy(engine)
                before = probe.phase
                result = probe.advance(ActionEvent(0.0, action, layer=layer, tool=tool))
                transitions += 1
                b, a = PHASE_ORDER[before], PHASE_ORDER[probe.phase]
                legal = (a == b or a == b + 1
                         or (before == TaskPhase.STATUS_MONITORING
                             and probe.phase == TaskPhase.DONE
                             and probe.vitals.stable))
                ok = ok and legal
                if result.outcome != Outcome.ACCEPTED:
                    ok = ok and probe.phase == before
                key = probe.state_key()
                if key not in seen:
                    seen.add(key)
                    nxt[key] = probe
        frontier = nxt
    report("phase-order-safety", ok,
           f"{transitions} transitions over {len(seen)} states")


# ---------------------------------------------------------------------------
# 6. Two-arm experiment, 20 seeds
# ---------------------------------------------------------------------------

def test_acceptance_two_arm_experiment():
    cfg = load_config("study")
    t0 = time.perf_counter()
    wins = 0
    recovery_i, recovery_c = [], []
    for seed in range(1, 21):
        rep = run_experiment(cfg, 13, seed)
        i, c = rep.arms["intervention"], rep.arms["control"]
        if (i.completion_rate > c.completion_rate
                and i.duration_mean_s < c.duration_mean_s
                and i.recovery_mean_s < c.recovery_mean_s):
            wins += 1
        recovery_i.append(i.recovery_mean_s)
        recovery_c.append(c.recovery_mean_s)
    elapsed = time.perf_counter() - t0
    mean_i = sum(recovery_i) / len(recovery_i)
    mean_c = sum(recovery_c) / len(recovery_c)
    ok = (wins >= 19
          and 3.0 <= mean_i <= 8.0
          and 8.0 <= mean_c <= 15.0
          and elapsed < 60.0)
    report("two-arm-experiment", ok,
           f"{wins}/20 directional; recovery {mean_i:.2f}s vs {mean_c:.2f}s; "
           f"{elapsed:.1f}s wall")


# ---------------------------------------------------------------------------
# 7. Determinism and golden replay
# ---------------------------------------------------------------------------

def test_acceptance_determinism():
    cfg = load_config("quick")
    a, _ = run_session(cfg, arm="intervention", seed=31)
    b, _ = run_session(cfg, arm="intervention", seed=31)
    ok = a.to_ndjson() == b.to_ndjson()
    goldens = sorted(DATA.glob("golden_*.log"))
    ok = ok and len(goldens) >= 2
    for golden in goldens:
        replay(golden.read_text())
    report("determinism-and-replay", ok,
           f"byte-identical; {len(goldens)} golden log(s) replay-verified")


# ---------------------------------------------------------------------------
# 8. Null intervention
# ---------------------------------------------------------------------------

def test_acceptance_null_intervention():
    import dataclasses

    cfg = load_config("quick")
    agent = dataclasses.replace(cfg.agent, intervention_recovery_gain=1.0,
                                guidance_caps_enabled=False)
    cfg = dataclasses.replace(cfg, agent=agent)
    profile = InterventionProfile.all_off()
    metrics = {}
    for arm in ("intervention", "control"):
        _, m = run_session(cfg, profile, arm=arm, seed=17)
        metrics[arm] = m.to_dict()
    ok = metrics["intervention"] == metrics["control"]
    report("null-intervention", ok)
