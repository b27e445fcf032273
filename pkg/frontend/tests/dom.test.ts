// @vitest-environment jsdom
// DOM rendering: every inbound message changes exactly the element it owns,
// and the document is a pure function of the view state.

import { beforeEach, describe, expect, it, vi } from "vitest";

import { render, RenderCallbacks } from "../src/render.js";
import { applyMessage, initialState, ViewState } from "../src/state.js";

function callbacks(overrides: Partial<RenderCallbacks> = {}): RenderCallbacks {
    return {
        onStart: vi.fn(),
        onQuestionnaire: vi.fn(),
        onAction: vi.fn(),
        onArousal: vi.fn(),
        onReconnect: vi.fn(),
        ...overrides,
    };
}

function runningState(extra: Partial<ViewState> = {}): ViewState {
    return {
        ...initialState(),
        stage: "running",
        mode: "live-signals",
        ...extra,
    };
}

let root: HTMLElement;

beforeEach(() => {
    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById("app")!;
});

describe("intervention rendering", () => {
    it("a red stress-light message turns the corner indicator red", () => {
        const state = applyMessage(runningState(), {
            type: "intervention", t_ms: 61000,
            event: "stress_light_change", color: "red",
        });
        render(state, root, callbacks());
        const light = document.getElementById("stress-light")!;
        expect(light.getAttribute("data-color")).toBe("red");
        expect(light.className).toContain("light-red");
    });

    it("a step instruction renders its exact text", () => {
        const state = applyMessage(runningState(), {
            type: "intervention", t_ms: 12000, event: "guidance_tier_change",
            tier: "STEP_INSTRUCTION",
            text: "Please remove the Steri-strips covering the wound",
        });
        render(state, root, callbacks());
        expect(document.getElementById("guidance-text")!.textContent)
            .toBe("Please remove the Steri-strips covering the wound");
        expect(document.getElementById("guidance")!.getAttribute("data-tier"))
            .toBe("STEP_INSTRUCTION");
    });

    it("visual guidance highlights its target object", () => {
        const state = applyMessage(runningState(), {
            type: "intervention", t_ms: 22000, event: "guidance_tier_change",
            tier: "VISUAL_GUIDANCE",
            text: "Press the call button at the patient's bedside",
            target: "call_bell",
        });
        render(state, root, callbacks());
        expect(document.getElementById("guidance-target")!.getAttribute("data-target"))
            .toBe("call_bell");
    });

    it("the breathing ring toggles with the cue", () => {
        const on = applyMessage(runningState(), {
            type: "intervention", t_ms: 1, event: "breathing_cue_on",
        });
        render(on, root, callbacks());
        expect(document.getElementById("breathing-ring")!.className)
            .toContain("active");
        const off = applyMessage(on, {
            type: "intervention", t_ms: 2, event: "breathing_cue_off",
        });
        render(off, root, callbacks());
        expect(document.getElementById("breathing-ring")!.className)
            .not.toContain("active");
    });
});

describe("scenario rendering", () => {
    it("phase checklist marks done/current/pending", () => {
        const state = applyMessage(runningState(), {
            type: "scenario", event: "phase-change", t_ms: 5,
            phase: "clot_removing", patient_hr: 85, patient_spo2: 97,
        });
        render(state, root, callbacks());
        const statuses = Array.from(document.querySelectorAll("#checklist li"))
            .map((li) => li.getAttribute("data-status"));
        expect(statuses).toEqual(["done", "done", "current", "pending", "pending"]);
    });

    it("vitals readout and countdown show the latest values", () => {
        let state = runningState();
        state = applyMessage(state, {
            type: "vitals", t_ms: 1, hr_bpm: 130, spo2_percent: 80,
        });
        state = applyMessage(state, {
            type: "countdown", t_ms: 1, remaining_ms: 125000,
        });
        render(state, root, callbacks());
        expect(document.getElementById("patient-vitals")!.textContent)
            .toContain("130");
        expect(document.getElementById("countdown")!.textContent).toBe("2:05");
    });

    it("action buttons follow the phase and report clicks", () => {
        const cb = callbacks();
        render(runningState({ phase: "clot_removing" }), root, cb);
        const button = document.getElementById("act-remove_clot-forceps")!;
        button.dispatchEvent(new MouseEvent("click", { bubbles: true }));
        expect(cb.onAction).toHaveBeenCalledWith(expect.objectContaining({
            action: "remove_clot", tool: "forceps",
        }));
        expect(document.getElementById("act-press_call_bell")).toBeNull();
    });
});

describe("questionnaire form", () => {
    it("submits all nineteen items", () => {
        const cb = callbacks();
        render({ ...initialState(), stage: "questionnaire" }, root, cb);
        const input7 = document.getElementById("q-item-7") as HTMLInputElement;
        input7.value = "5";
        document.getElementById("q-submit")!
            .dispatchEvent(new MouseEvent("click", { bubbles: true }));
        document.getElementById("questionnaire-form")!
            .dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
        expect(cb.onQuestionnaire).toHaveBeenCalled();
        const items = (cb.onQuestionnaire as ReturnType<typeof vi.fn>)
            .mock.calls[0][0] as number[];
        expect(items).toHaveLength(19);
        expect(items[6]).toBe(5);
    });
});

describe("render determinism", () => {
    it("the same state renders the same document", () => {
        const state = applyMessage(runningState(), {
            type: "intervention", t_ms: 1, event: "stress_light_change",
            color: "yellow",
        });
        render(state, root, callbacks());
        const first = root.innerHTML;
        render(state, root, callbacks());
        expect(root.innerHTML).toBe(first);
    });

    it("session end shows the metrics summary", () => {
        const state = applyMessage(runningState(), {
            type: "end", status: "ok",
            metrics: {
                completed: true, duration_s: 48.2, critical_errors: 1,
                recovery_times_ms: [3000, 5000], mean_recovery_ms: 4000,
            },
        });
        render(state, root, callbacks());
        expect(document.getElementById("metric-completed")!.textContent)
            .toContain("yes");
        expect(document.getElementById("metric-recovery")!.textContent)
            .toContain("4.00");
    });

    it("errors surface verbatim with a reconnect control", () => {
        const state = applyMessage(initialState(), {
            type: "end", status: "error", reason: "protocol-order violation",
        });
        render(state, root, callbacks());
        expect(document.getElementById("error-banner")!.textContent)
            .toContain("protocol-order violation");
        expect(document.getElementById("reconnect")).not.toBeNull();
    });
});
