// Wire protocol shared with the engine: one JSON object per line, a closed
// set of message types, timestamps in session-relative milliseconds.

export type MessageType =
    | "ppg" | "gsr" | "action" | "questionnaire" | "start"
    | "assessment" | "intervention" | "scenario" | "vitals" | "countdown" | "end";

export interface WireMessage {
    type: MessageType;
    [field: string]: unknown;
}

export interface Profile {
    self_regulation: boolean;
    breathing_guidance: boolean;
    stress_feedback: boolean;
    procedure_guidance: boolean;
    guidance_threshold_s: number | null;
    companion_support: boolean;
    noise_reduction: boolean;
}

export interface Metrics {
    completed: boolean;
    duration_s: number;
    critical_errors: number;
    recovery_times_ms: number[];
    mean_recovery_ms: number | null;
}

export type StartMode = "live-signals" | "agent-signals";

export function parseLine(line: string): WireMessage | null {
    try {
        const msg = JSON.parse(line);
        if (msg && typeof msg === "object" && typeof msg.type === "string") {
            return msg as WireMessage;
        }
    } catch {
        // fall through
    }
    return null;
}

export function startMessage(mode: StartMode, arm: string, seed: number,
                             config: string): WireMessage {
    return { type: "start", mode, arm, seed, config };
}

export function questionnaireMessage(items: number[]): WireMessage {
    return { type: "questionnaire", items };
}

export function actionMessage(tMs: number, action: string,
                              layer?: string, tool?: string): WireMessage {
    const msg: WireMessage = { type: "action", t_ms: tMs, action };
    if (layer) msg.layer = layer;
    if (tool) msg.tool = tool;
    return msg;
}
