// DOM rendering: the view is rebuilt from ViewState alone, so replaying a
// recorded message stream always produces the same final document.

import { PHASE_LABELS, PHASE_ORDER, ViewState, phaseStatus } from "./state.js";

export interface ActionSpec {
    action: string;
    layer?: string;
    tool?: string;
    label: string;
}

// Buttons shown per phase; validity is the server's call, this is layout.
export const PHASE_ACTIONS: Record<string, ActionSpec[]> = {
    preparation: [
        { action: "press_call_bell", label: "Press call bell" },
        { action: "arrange_drapes", label: "Arrange sterile drapes" },
    ],
    wound_opening: [
        { action: "remove_steri_strips", label: "Remove Steri-strips" },
        { action: "fetch_scissors_from_supply", label: "Fetch scissors (supply table)" },
        { action: "cut_sutures", layer: "subcuticular", label: "Cut subcuticular sutures" },
        { action: "cut_sutures", layer: "subcutaneous", label: "Cut subcutaneous sutures" },
        { action: "cut_sutures", layer: "platysma", label: "Cut platysma sutures" },
        { action: "activate_alt_light", label: "Activate alternative light" },
    ],
    clot_removing: [
        { action: "remove_clot", tool: "forceps", label: "Remove clot (forceps)" },
        { action: "remove_clot", tool: "manual", label: "Remove clot (manual)" },
        { action: "fetch_sterile_forceps", label: "Fetch sterile forceps" },
    ],
    status_monitoring: [
        { action: "check_monitor", label: "Check the monitor" },
        { action: "press_call_bell", label: "Report via call bell" },
    ],
    emergency_response: [
        { action: "request_anesthesia", label: "Request anesthesia team" },
        { action: "prepare_intubation_kit", label: "Prepare intubation kit" },
        { action: "brief_team", label: "Brief the team" },
    ],
    done: [],
};

export interface RenderCallbacks {
    onStart: () => void;
    onQuestionnaire: (items: number[]) => void;
    onAction: (spec: ActionSpec) => void;
    onArousal: (value: number) => void;
    onReconnect: () => void;
}

function el(tag: string, attrs: Record<string, string> = {}, text = ""): HTMLElement {
    const node = document.createElement(tag);
    for (const [key, value] of Object.entries(attrs)) {
        node.setAttribute(key, value);
    }
    if (text) node.textContent = text;
    return node;
}

function renderQuestionnaire(cb: RenderCallbacks): HTMLElement {
    const panel = el("section", { id: "questionnaire", class: "panel" });
    panel.appendChild(el("h2", {}, "Preference questionnaire"));
    panel.appendChild(el("p", {},
        "19 statements, answered 1 (strongly disagree) to 5 (strongly agree)."));
    const form = el("form", { id: "questionnaire-form" }) as HTMLFormElement;
    for (let i = 1; i <= 19; i++) {
        const row = el("label", { class: "q-row" }, `Item ${i} `);
        const input = el("input", {
            type: "number", min: "1", max: "5", value: "3",
            "data-item": String(i), id: `q-item-${i}`,
        });
        row.appendChild(input);
        form.appendChild(row);
    }
    const submit = el("button", { type: "submit", id: "q-submit" }, "Submit answers");
    form.appendChild(submit);
    form.addEventListener("submit", (event) => {
        event.preventDefault();
        const items: number[] = [];
        for (let i = 1; i <= 19; i++) {
            const input = form.querySelector<HTMLInputElement>(`[data-item="${i}"]`);
            items.push(Number(input?.value ?? 3));
        }
        cb.onQuestionnaire(items);
    });
    panel.appendChild(form);
    return panel;
}

function renderChecklist(state: ViewState): HTMLElement {
    const panel = el("section", { id: "checklist", class: "panel" });
    panel.appendChild(el("h2", {}, "Task phases"));
    const list = el("ol");
    for (const phase of PHASE_ORDER) {
        if (phase === "done") continue;
        const status = phaseStatus(state, phase);
        const item = el("li", {
            "data-phase": phase,
            "data-status": status,
            class: `phase-${status}`,
        }, PHASE_LABELS[phase]);
        list.appendChild(item);
    }
    panel.appendChild(list);
    const doneActions = el("ul", { id: "accepted-actions" });
    for (const label of state.acceptedActions) {
        doneActions.appendChild(el("li", { class: "accepted" }, label));
    }
    panel.appendChild(doneActions);
    return panel;
}

function renderStatus(state: ViewState): HTMLElement {
    const panel = el("section", { id: "status", class: "panel" });
    const vitals = state.patientVitals;
    const vitalsText = vitals
        ? `HR ${vitals.hr.toFixed(0)} bpm  SpO2 ${vitals.spo2.toFixed(0)}%`
        : "HR --  SpO2 --";
    panel.appendChild(el("div", { id: "patient-vitals" }, vitalsText));
    const countdown = state.countdownMs;
    const countdownText = countdown == null
        ? "--:--"
        : `${Math.floor(countdown / 60000)}:${String(
            Math.floor((Math.max(countdown, 0) % 60000) / 1000)).padStart(2, "0")}`;
    panel.appendChild(el("div", { id: "countdown", class: "countdown" }, countdownText));
    if (state.lastOutcome) {
        const { action, outcome, reason } = state.lastOutcome;
        panel.appendChild(el("div", {
            id: "last-outcome",
            "data-outcome": outcome,
        }, `${action}: ${outcome} (${reason})`));
    }
    panel.appendChild(el("div", { id: "critical-errors" },
        `Critical errors: ${state.criticalErrors}`));
    return panel;
}

function renderInterventions(state: ViewState): HTMLElement {
    const panel = el("section", { id: "interventions", class: "panel" });
    panel.appendChild(el("h2", {}, "Active support"));

    const ring = el("div", {
        id: "breathing-ring",
        class: state.breathing ? "breathing-ring active" : "breathing-ring",
        "data-active": String(state.breathing),
    });
    panel.appendChild(ring);

    const light = el("div", {
        id: "stress-light",
        class: `stress-light light-${state.light ?? "off"}`,
        "data-color": state.light ?? "off",
    });
    panel.appendChild(light);

    const guidance = el("div", { id: "guidance" });
    if (state.guidance) {
        guidance.setAttribute("data-tier", state.guidance.tier);
        guidance.appendChild(el("div", { id: "guidance-text" }, state.guidance.text));
        if (state.guidance.target) {
            guidance.appendChild(el("div", {
                id: "guidance-target",
                "data-target": state.guidance.target,
            }, `Look at: ${state.guidance.target}`));
        }
    }
    panel.appendChild(guidance);

    const noise = el("div", {
        id: "noise-state",
        "data-suppressed": String(state.noiseSuppressed !== null),
    }, state.noiseSuppressed
        ? `Noise suppressed: ${state.noiseSuppressed.join(", ")}`
        : "Ambient noise normal");
    panel.appendChild(noise);

    const companion = el("ul", { id: "companion-messages" });
    for (const text of state.companionMessages.slice(-3)) {
        companion.appendChild(el("li", {}, text));
    }
    panel.appendChild(companion);
    return panel;
}

function renderActions(state: ViewState, cb: RenderCallbacks): HTMLElement {
    const panel = el("section", { id: "actions", class: "panel" });
    panel.appendChild(el("h2", {}, "Actions"));
    const specs = PHASE_ACTIONS[state.phase] ?? [];
    for (const spec of specs) {
        const id = ["act", spec.action, spec.layer, spec.tool]
            .filter(Boolean).join("-");
        const button = el("button", {
            id,
            class: "action",
            "data-action": spec.action,
            ...(spec.layer ? { "data-layer": spec.layer } : {}),
            ...(spec.tool ? { "data-tool": spec.tool } : {}),
        }, spec.label);
        button.addEventListener("click", () => cb.onAction(spec));
        panel.appendChild(button);
    }
    return panel;
}

function renderStressSource(state: ViewState, cb: RenderCallbacks): HTMLElement {
    const panel = el("section", { id: "stress-source", class: "panel" });
    panel.appendChild(el("h2", {}, "Virtual sensor (no-sensor mode)"));
    const slider = el("input", {
        type: "range", min: "0", max: "100", value: "0",
        id: "arousal-slider",
    }) as HTMLInputElement;
    slider.addEventListener("input", () => cb.onArousal(Number(slider.value) / 100));
    panel.appendChild(slider);
    const flags = state.assessment;
    const flagText = flags
        ? `HR ${flags.hr ? "!" : "ok"} | SDNN ${flags.sdnn ? "!" : "ok"} | ` +
          `GSR ${flags.gsr ? "!" : "ok"} | latency ${flags.latency ? "!" : "ok"} | ` +
          (flags.stressed ? "STRESSED" : "calm")
        : "no assessment yet";
    panel.appendChild(el("div", {
        id: "assessment-flags",
        "data-stressed": String(flags?.stressed ?? false),
    }, flagText));
    return panel;
}

function renderEnd(state: ViewState): HTMLElement {
    const panel = el("section", { id: "session-end", class: "panel" });
    panel.appendChild(el("h2", {}, "Session complete"));
    const metrics = state.metrics;
    if (metrics) {
        const list = el("ul", { id: "metrics" });
        list.appendChild(el("li", { id: "metric-completed" },
            `Completed: ${metrics.completed ? "yes" : "no"}`));
        list.appendChild(el("li", { id: "metric-duration" },
            `Duration: ${metrics.duration_s.toFixed(1)} s`));
        list.appendChild(el("li", { id: "metric-errors" },
            `Critical errors: ${metrics.critical_errors}`));
        const recovery = metrics.mean_recovery_ms;
        list.appendChild(el("li", { id: "metric-recovery" },
            recovery == null ? "Mean recovery: n/a"
                : `Mean recovery: ${(recovery / 1000).toFixed(2)} s`));
        panel.appendChild(list);
    }
    return panel;
}

export function render(state: ViewState, root: HTMLElement, cb: RenderCallbacks): void {
    root.textContent = "";
    root.setAttribute("data-stage", state.stage);

    if (state.stage === "error") {
        const banner = el("div", { id: "error-banner", class: "banner error" },
            `Session error: ${state.errorReason ?? "connection lost"}`);
        const retry = el("button", { id: "reconnect" }, "Reconnect");
        retry.addEventListener("click", () => cb.onReconnect());
        banner.appendChild(retry);
        root.appendChild(banner);
        return;
    }
    if (state.stage === "idle") {
        const start = el("button", { id: "start-session" }, "Start session");
        start.addEventListener("click", () => cb.onStart());
        root.appendChild(start);
        return;
    }
    if (state.stage === "questionnaire") {
        root.appendChild(renderQuestionnaire(cb));
        return;
    }
    if (state.stage === "baseline") {
        root.appendChild(el("div", { id: "baseline-wait", class: "banner" },
            "Acquiring resting baseline; keep still for one minute."));
        root.appendChild(renderStressSource(state, cb));
        return;
    }
    if (state.stage === "ended") {
        root.appendChild(renderEnd(state));
        return;
    }
    // running
    root.appendChild(renderStatus(state));
    root.appendChild(renderChecklist(state));
    root.appendChild(renderActions(state, cb));
    root.appendChild(renderInterventions(state));
    root.appendChild(renderStressSource(state, cb));
    for (const warning of state.warnings.slice(-2)) {
        root.appendChild(el("div", { class: "banner warning" }, warning));
    }
}
