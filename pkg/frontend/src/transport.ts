// Line-oriented transports. The browser speaks newline-delimited JSON over a
// WebSocket to the console's dev-server bridge, which pipes raw lines to the
// engine's TCP port; tests plug in their own transports.

export interface LineTransport {
    send(line: string): void;
    onLine(handler: (line: string) => void): void;
    onClose(handler: () => void): void;
    close(): void;
}

export class WebSocketTransport implements LineTransport {
    private readonly socket: WebSocket;
    private lineHandler: ((line: string) => void) | null = null;
    private closeHandler: (() => void) | null = null;
    private buffer = "";

    constructor(url: string) {
        this.socket = new WebSocket(url);
        this.socket.onmessage = (event) => {
            this.buffer += String(event.data);
            let index = this.buffer.indexOf("\n");
            while (index >= 0) {
                const line = this.buffer.slice(0, index);
                this.buffer = this.buffer.slice(index + 1);
                if (line.trim() && this.lineHandler) this.lineHandler(line);
                index = this.buffer.indexOf("\n");
            }
        };
        this.socket.onclose = () => this.closeHandler?.();
    }

    ready(): Promise<void> {
        if (this.socket.readyState === WebSocket.OPEN) return Promise.resolve();
        return new Promise((resolve, reject) => {
            this.socket.onopen = () => resolve();
            this.socket.onerror = () => reject(new Error("websocket error"));
        });
    }

    send(line: string) {
        this.socket.send(line + "\n");
    }

    onLine(handler: (line: string) => void) {
        this.lineHandler = handler;
    }

    onClose(handler: () => void) {
        this.closeHandler = handler;
    }

    close() {
        this.socket.close();
    }
}
