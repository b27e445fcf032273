// Controller: wires the transport, the pure state fold, the virtual sensor,
// and the DOM together. The browser entry point supplies a WebSocket
// transport and a wall clock; tests supply their own.

import {
    actionMessage, parseLine, questionnaireMessage, startMessage,
    StartMode, WireMessage,
} from "./protocol.js";
import { ActionSpec, render, RenderCallbacks } from "./render.js";
import { VirtualSensor } from "./signals.js";
import { applyMessage, initialState, ViewState } from "./state.js";
import { LineTransport } from "./transport.js";

export interface Clock {
    nowMs(): number;
}

export interface AppOptions {
    mode?: StartMode;
    arm?: string;
    seed?: number;
    config?: string;
    noSensor?: boolean;
}

export class ConsoleApp {
    state: ViewState = initialState();
    history: WireMessage[] = [];
    sensor: VirtualSensor | null = null;

    private started = false;
    private sentUpTo = 0;

    constructor(
        private readonly root: HTMLElement | null,
        private readonly transport: LineTransport,
        private readonly clock: Clock,
        private readonly options: AppOptions = {},
    ) {
        if (options.noSensor !== false) {
            this.sensor = new VirtualSensor(options.seed ?? 1);
        }
        transport.onLine((line) => this.handleLine(line));
        transport.onClose(() => {
            if (this.state.stage !== "ended" && this.state.stage !== "error") {
                this.state = { ...this.state, stage: "error", errorReason: "disconnected" };
                this.renderNow();
            }
        });
        this.renderNow();
    }

    private callbacks(): RenderCallbacks {
        return {
            onStart: () => this.start(),
            onQuestionnaire: (items) => this.submitQuestionnaire(items),
            onAction: (spec) => this.sendAction(spec),
            onArousal: (value) => this.setArousal(value),
            onReconnect: () => window.location.reload(),
        };
    }

    renderNow() {
        if (this.root) {
            render(this.state, this.root, this.callbacks());
        }
    }

    private sendMessage(msg: WireMessage) {
        this.transport.send(JSON.stringify(msg));
    }

    handleLine(line: string) {
        const msg = parseLine(line);
        if (!msg) return;
        this.history.push(msg);
        this.state = applyMessage(this.state, msg);
        // Sample acks arrive at 150/s; redrawing for them adds nothing.
        const isSampleAck = msg.type === "scenario" && msg.event === "ack"
            && (msg.of === "ppg" || msg.of === "gsr");
        if (!isSampleAck) this.renderNow();
    }

    start() {
        if (this.started) return;
        this.started = true;
        this.sendMessage(startMessage(
            this.options.mode ?? "live-signals",
            this.options.arm ?? "intervention",
            this.options.seed ?? 1,
            this.options.config ?? "study",
        ));
    }

    submitQuestionnaire(items: number[]) {
        this.sendMessage(questionnaireMessage(items));
    }

    sendAction(spec: ActionSpec) {
        this.sendMessage(actionMessage(
            this.clock.nowMs(), spec.action, spec.layer, spec.tool));
    }

    setArousal(value: number) {
        this.sensor?.setArousal(value);
    }

    // Emit virtual-sensor samples covering [sentUpTo, now); the browser calls
    // this on a timer, tests call it after advancing their manual clock.
    pumpSignals() {
        if (!this.sensor) return;
        if (this.state.stage !== "baseline" && this.state.stage !== "running") return;
        const now = this.clock.nowMs();
        if (now <= this.sentUpTo) return;
        for (const sample of this.sensor.ppgUntil(now)) {
            this.sendMessage({ type: "ppg", t_ms: sample.tMs, value: sample.value });
        }
        for (const sample of this.sensor.gsrUntil(now)) {
            this.sendMessage({ type: "gsr", t_ms: sample.tMs, conductance: sample.value });
        }
        this.sentUpTo = now;
    }
}
