// Browser bootstrap: connect through the dev server's WebSocket bridge and
// pump the virtual sensor on a timer.

import { ConsoleApp } from "./app.js";
import { WebSocketTransport } from "./transport.js";

const params = new URLSearchParams(window.location.search);
const wsUrl = params.get("ws")
    ?? `ws://${window.location.host}/ws`;

async function boot() {
    const root = document.getElementById("app");
    if (!root) throw new Error("missing #app element");
    const transport = new WebSocketTransport(wsUrl);
    await transport.ready();
    const epoch = performance.now();
    const app = new ConsoleApp(root, transport, {
        nowMs: () => performance.now() - epoch,
    }, {
        mode: (params.get("mode") as "live-signals" | "agent-signals") ?? "live-signals",
        arm: params.get("arm") ?? "intervention",
        seed: Number(params.get("seed") ?? 1),
        config: params.get("config") ?? "study",
    });
    window.setInterval(() => app.pumpSignals(), 200);
}

boot().catch((err) => {
    const root = document.getElementById("app");
    if (root) root.textContent = `Failed to connect: ${err}`;
});
