// View state as a pure fold over the received message history. The console
// holds no game logic: every field below is a direct restatement of what the
// server said, and replaying the same messages always rebuilds the same state.

import type { Metrics, Profile, WireMessage } from "./protocol.js";

export type Stage =
    | "idle" | "questionnaire" | "baseline" | "running" | "ended" | "error";

export interface GuidanceView {
    tier: string;
    text: string;
    target: string | null;
}

export interface ViewState {
    stage: Stage;
    mode: string | null;
    errorReason: string | null;
    profile: Profile | null;
    baseline: { hrMean: number; sdnnMean: number } | null;
    scenarioT0Ms: number | null;
    phase: string;
    countdownMs: number | null;
    patientVitals: { hr: number; spo2: number } | null;
    assessment: {
        hr: boolean; sdnn: boolean; gsr: boolean;
        latency: boolean; stressed: boolean;
    } | null;
    breathing: boolean;
    light: "green" | "yellow" | "red" | null;
    guidance: GuidanceView | null;
    noiseSuppressed: string[] | null;
    companionMessages: string[];
    acceptedActions: string[];
    lastOutcome: { action: string; outcome: string; reason: string } | null;
    criticalErrors: number;
    firedTriggers: string[];
    warnings: string[];
    metrics: Metrics | null;
    ackCounts: { ppg: number; gsr: number };
}

export const PHASE_ORDER = [
    "preparation", "wound_opening", "clot_removing",
    "status_monitoring", "emergency_response", "done",
] as const;

export const PHASE_LABELS: Record<string, string> = {
    preparation: "Preparation",
    wound_opening: "Wound Opening",
    clot_removing: "Clot Removing",
    status_monitoring: "Status Monitoring",
    emergency_response: "Emergency Response",
    done: "Done",
};

export function initialState(): ViewState {
    return {
        stage: "idle",
        mode: null,
        errorReason: null,
        profile: null,
        baseline: null,
        scenarioT0Ms: null,
        phase: "preparation",
        countdownMs: null,
        patientVitals: null,
        assessment: null,
        breathing: false,
        light: null,
        guidance: null,
        noiseSuppressed: null,
        companionMessages: [],
        acceptedActions: [],
        lastOutcome: null,
        criticalErrors: 0,
        firedTriggers: [],
        warnings: [],
        metrics: null,
        ackCounts: { ppg: 0, gsr: 0 },
    };
}

function applyScenario(state: ViewState, msg: WireMessage): ViewState {
    const event = msg.event as string;
    if (event === "ack") {
        const of = msg.of as string;
        if (of === "start") {
            return { ...state, stage: "questionnaire", mode: msg.mode as string };
        }
        if (of === "questionnaire") {
            const stage: Stage = state.mode === "live-signals" ? "baseline" : "running";
            return { ...state, stage, profile: msg.profile as Profile };
        }
        if (of === "ppg" || of === "gsr") {
            return {
                ...state,
                ackCounts: { ...state.ackCounts, [of]: msg.n as number },
            };
        }
        return state;
    }
    if (event === "warning") {
        return { ...state, warnings: [...state.warnings, String(msg.reason)] };
    }
    if (event === "baseline-ready") {
        return {
            ...state,
            stage: "running",
            baseline: {
                hrMean: msg.hr_mean_bpm as number,
                sdnnMean: msg.sdnn_mean_ms as number,
            },
            scenarioT0Ms: msg.scenario_t0_ms as number,
        };
    }
    if (event === "action-outcome") {
        const outcome = {
            action: String(msg.action),
            outcome: String(msg.outcome),
            reason: String(msg.reason),
        };
        let accepted = state.acceptedActions;
        let errors = state.criticalErrors;
        if (outcome.outcome === "accepted") {
            const label = [msg.action, msg.layer, msg.tool]
                .filter((part) => part != null).join(" ");
            accepted = [...accepted, label];
        } else if (outcome.outcome === "critical_error") {
            errors += 1;
        }
        return {
            ...state, lastOutcome: outcome,
            acceptedActions: accepted, criticalErrors: errors,
        };
    }
    if (event === "phase-change") {
        let vitals = state.patientVitals;
        if (typeof msg.patient_hr === "number") {
            vitals = { hr: msg.patient_hr, spo2: msg.patient_spo2 as number };
        }
        return { ...state, phase: String(msg.phase), patientVitals: vitals };
    }
    if (event === "trigger") {
        return {
            ...state,
            firedTriggers: [...state.firedTriggers, String(msg.category)],
        };
    }
    return state;
}

function applyIntervention(state: ViewState, msg: WireMessage): ViewState {
    const event = msg.event as string;
    switch (event) {
        case "breathing_cue_on":
            return { ...state, breathing: true };
        case "breathing_cue_off":
            return { ...state, breathing: false };
        case "stress_light_change":
            return { ...state, light: msg.color as ViewState["light"] };
        case "guidance_tier_change": {
            const tier = String(msg.tier);
            if (tier === "NONE") {
                return { ...state, guidance: null };
            }
            return {
                ...state,
                guidance: {
                    tier,
                    text: String(msg.text ?? ""),
                    target: (msg.target as string | undefined) ?? null,
                },
            };
        }
        case "noise_suppress_on":
            return { ...state, noiseSuppressed: (msg.suppressed as string[]) ?? [] };
        case "noise_suppress_off":
            return { ...state, noiseSuppressed: null };
        case "companion_utterance":
            return {
                ...state,
                companionMessages: [...state.companionMessages, String(msg.text)],
            };
        default:
            return state;
    }
}

export function applyMessage(state: ViewState, msg: WireMessage): ViewState {
    switch (msg.type) {
        case "scenario":
            return applyScenario(state, msg);
        case "intervention":
            return applyIntervention(state, msg);
        case "assessment":
            return {
                ...state,
                assessment: {
                    hr: Boolean(msg.hr_abnormal),
                    sdnn: Boolean(msg.sdnn_abnormal),
                    gsr: Boolean(msg.gsr_abnormal),
                    latency: Boolean(msg.latency_flag),
                    stressed: Boolean(msg.stressed),
                },
            };
        case "vitals":
            return {
                ...state,
                patientVitals: {
                    hr: msg.hr_bpm as number,
                    spo2: msg.spo2_percent as number,
                },
            };
        case "countdown":
            return { ...state, countdownMs: msg.remaining_ms as number };
        case "end":
            if (msg.status === "ok") {
                return {
                    ...state, stage: "ended",
                    metrics: (msg.metrics as Metrics | null) ?? null,
                };
            }
            return { ...state, stage: "error", errorReason: String(msg.reason) };
        default:
            return state;
    }
}

export function replayMessages(messages: WireMessage[]): ViewState {
    return messages.reduce(applyMessage, initialState());
}

export function phaseStatus(state: ViewState, phase: string): "done" | "current" | "pending" {
    const current = PHASE_ORDER.indexOf(state.phase as typeof PHASE_ORDER[number]);
    const asked = PHASE_ORDER.indexOf(phase as typeof PHASE_ORDER[number]);
    if (asked < current || state.phase === "done") return "done";
    if (asked === current) return "current";
    return "pending";
}
