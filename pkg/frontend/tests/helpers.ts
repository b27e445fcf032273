// Test plumbing: a TCP line transport, a manual clock, and a fixture that
// runs the real engine server as a subprocess.

import { ChildProcess, execFile, spawn } from "node:child_process";
import net from "node:net";
import { promisify } from "node:util";

import type { LineTransport } from "../src/transport.js";

const execFileAsync = promisify(execFile);

export class ManualClock {
    t = 0;

    nowMs(): number {
        return this.t;
    }

    advance(ms: number) {
        this.t += ms;
    }
}

export class TcpTransport implements LineTransport {
    private buffer = "";
    private lineHandler: ((line: string) => void) | null = null;
    private closeHandler: (() => void) | null = null;

    private constructor(private readonly socket: net.Socket) {
        socket.on("data", (chunk) => {
            this.buffer += chunk.toString("utf-8");
            let index = this.buffer.indexOf("\n");
            while (index >= 0) {
                const line = this.buffer.slice(0, index);
                this.buffer = this.buffer.slice(index + 1);
                if (line.trim() && this.lineHandler) this.lineHandler(line);
                index = this.buffer.indexOf("\n");
            }
        });
        socket.on("close", () => this.closeHandler?.());
        socket.on("error", () => this.closeHandler?.());
    }

    static connect(host: string, port: number): Promise<TcpTransport> {
        return new Promise((resolve, reject) => {
            const socket = net.createConnection({ host, port }, () =>
                resolve(new TcpTransport(socket)));
            socket.on("error", reject);
        });
    }

    send(line: string) {
        this.socket.write(line + "\n");
    }

    onLine(handler: (line: string) => void) {
        this.lineHandler = handler;
    }

    onClose(handler: () => void) {
        this.closeHandler = handler;
    }

    close() {
        this.socket.end();
    }
}

export interface EngineServer {
    port: number;
    process: ChildProcess;
    stop: () => void;
}

export async function startEngineServer(args: string[]): Promise<EngineServer> {
    const child = spawn("python3", ["-m", "calmward.cli", "serve", ...args],
                        { stdio: ["ignore", "pipe", "pipe"] });
    const port = await new Promise<number>((resolve, reject) => {
        let out = "";
        const fail = (reason: string) => {
            child.kill();
            reject(new Error(reason));
        };
        // Generous: interpreter start can be slow right after heavy suites.
        const timer = setTimeout(
            () => fail(`engine server did not start: ${out}`), 60000);
        child.stdout!.on("data", (chunk) => {
            out += chunk.toString();
            const match = out.match(/listening on [\d.]+:(\d+)/);
            if (match) {
                clearTimeout(timer);
                resolve(Number(match[1]));
            }
        });
        child.stderr!.on("data", (chunk) => { out += chunk.toString(); });
        child.on("exit", (code) => fail(`server exited ${code}: ${out}`));
    });
    return { port, process: child, stop: () => child.kill() };
}

export async function replayLogWithEngine(path: string): Promise<string> {
    const { stdout } = await execFileAsync(
        "python3", ["-m", "calmward.cli", "replay", path]);
    return stdout;
}

export function waitFor(predicate: () => boolean, timeoutMs = 20000,
                        what = "condition"): Promise<void> {
    const start = Date.now();
    return new Promise((resolve, reject) => {
        const poll = () => {
            if (predicate()) {
                resolve();
            } else if (Date.now() - start > timeoutMs) {
                reject(new Error(`timed out waiting for ${what}`));
            } else {
                setTimeout(poll, 4);
            }
        };
        poll();
    });
}
