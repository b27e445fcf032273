"""Live session server.

One session per connection, over TCP or stdio. The protocol state machine
is synchronous (`WireSession`) so it can be driven directly in tests; the
asyncio layer only shuttles lines.

Two modes. ``agent-signals``: the server runs the full simulated session
for the given seed and streams every resulting message — byte-for-byte the
same log the batch runner would produce. ``live-signals``: the client
streams its own pulse/conductance samples; the first 60+ seconds form the
resting baseline, after which the scenario clock starts at zero and the
server emits assessments, interventions, scenario events, patient vitals,
and countdown updates as the streamed timestamps advance.
"""

from __future__ import annotations

import asyncio
import logging
import math
import sys
from typing import List, Optional, Tuple

from . import wire
from .config import SessionConfig, load_config, parse_config
from .detection import acquire_baseline
from .errors import CalmwardError, ValidationError
from .harness import SessionCore, run_session
from .questionnaire import QuestionnaireResponse, score
from .scenario import ActionEvent
from .signals import PpgPipeline

logger = logging.getLogger(__name__)

AWAIT_START, AWAIT_QUESTIONNAIRE, BASELINE, RUNNING, ENDED = range(5)


class WireSession:
    """Protocol state machine for one client connection."""

    def __init__(self, default_config: SessionConfig, log_dir: Optional[str] = None):
        self.default_config = default_config
        self.log_dir = log_dir
        self.config: Optional[SessionConfig] = None
        self.state = AWAIT_START
        self.mode: Optional[str] = None
        self.arm = "intervention"
        self.seed = 0
        self.profile = None
        self.core: Optional[SessionCore] = None
        self.last_log = None            # agent mode: the full session log
        self.metrics = None
        # live-mode plumbing
        self._baseline_pipeline: Optional[PpgPipeline] = None
        self._baseline_estimates: List = []
        self._baseline_hop = 0.0
        self._t0: Optional[float] = None
        self._counts = {"ppg": 0, "gsr": 0}
        self._last_sample_t = {"ppg": None, "gsr": None}
        self._processed_tick = 0
        self._emitted_records = 0

    # -- helpers --------------------------------------------------------------

    def _fatal(self, reason: str) -> Tuple[List[dict], bool]:
        self.state = ENDED
        return [wire.error_end(reason)], True

    def _flush_records(self) -> List[dict]:
        out: List[dict] = []
        for record in self.core.log.records[self._emitted_records:]:
            out.extend(wire.record_to_messages(record))
        self._emitted_records = len(self.core.log.records)
        return out

    def _tick_ms(self) -> float:
        return self.config.harness.tick_ms

    def _hop_ms(self) -> float:
        return self.config.harness.hop_ms

    def _advance_to(self, scenario_t: float) -> List[dict]:
        """Run tick/hop stages for every boundary the stream time crossed."""
        out: List[dict] = []
        tick = self._tick_ms()
        ticks_per_hop = int(round(self._hop_ms() / tick))
        target_tick = int(math.floor(scenario_t / tick))
        while self._processed_tick < target_tick:
            self._processed_tick += 1
            t = self._processed_tick * tick
            if self._processed_tick % ticks_per_hop == 0:
                self.core.assessment_tick(t)
                out.append({"type": "countdown", "t_ms": t,
                            "remaining_ms": self.core.scenario.remaining_ms(t)})
            self.core.scenario_time_tick(t)
        out = self._flush_records() + out
        return out

    # -- message dispatch -----------------------------------------------------

    def handle_line(self, line: str) -> Tuple[List[dict], bool]:
        """Returns (outbound messages, close?)."""
        try:
            msg = wire.parse_line(line)
        except ValidationError as exc:
            return self._fatal(f"bad message: {exc}")
        try:
            return self._dispatch(msg)
        except ValidationError as exc:
            return self._fatal(f"bad {msg.get('type')} message: {exc}")
        except CalmwardError as exc:
            return self._fatal(f"session error: {exc}")

    def _dispatch(self, msg: dict) -> Tuple[List[dict], bool]:
        mtype = msg["type"]
        if mtype == "end":
            return self._handle_end()
        if self.state == AWAIT_START:
            if mtype != "start":
                return self._fatal(f"expected start, got {mtype}")
            return self._handle_start(msg)
        if self.state == AWAIT_QUESTIONNAIRE:
            if mtype != "questionnaire":
                return self._fatal(f"expected questionnaire, got {mtype}")
            return self._handle_questionnaire(msg)
        if self.state == BASELINE:
            if mtype in ("ppg", "gsr"):
                return self._handle_baseline_sample(msg)
            return self._fatal(f"baseline stage accepts only samples, got {mtype}")
        if self.state == RUNNING:
            if mtype in ("ppg", "gsr"):
                return self._handle_running_sample(msg)
            if mtype == "action":
                return self._handle_action(msg)
            return self._fatal(f"unexpected {mtype} while running")
        return self._fatal(f"session is over; {mtype} rejected")

    def _handle_start(self, msg: dict) -> Tuple[List[dict], bool]:
        fields = wire.validate_start(msg)
        self.mode = fields["mode"]
        self.arm = fields["arm"]
        self.seed = fields["seed"]
        if isinstance(fields["config"], dict):
            self.config = parse_config(fields["config"])
        elif msg.get("config") is None or "config" not in msg:
            self.config = self.default_config
        else:
            self.config = load_config(fields["config"])
        self.state = AWAIT_QUESTIONNAIRE
        return [wire.ack("start", mode=self.mode, arm=self.arm, seed=self.seed,
                         config=self.config.name)], False

    def _handle_questionnaire(self, msg: dict) -> Tuple[List[dict], bool]:
        items = wire.validate_questionnaire(msg)
        response = QuestionnaireResponse(tuple(int(v) for v in items))
        self.profile = score(response)
        out = [wire.ack("questionnaire", profile=self.profile.to_dict())]
        if self.mode == "agent-signals":
            log, metrics = run_session(self.config, self.profile,
                                       arm=self.arm, seed=self.seed)
            self.last_log = log
            self.metrics = metrics
            self._write_log(log)
            for record in log.records:
                out.extend(wire.record_to_messages(record))
            out.append({"type": "end", "status": "ok",
                        "metrics": metrics.to_dict()})
            self.state = ENDED
            return out, True
        self._baseline_pipeline = PpgPipeline(
            filter_window=self.config.signals.filter_window)
        self.state = BASELINE
        return out, False

    def _handle_baseline_sample(self, msg: dict) -> Tuple[List[dict], bool]:
        fields = wire.validate_sample(msg)
        kind = msg["type"]
        out: List[dict] = []
        if not self._accept_sample_time(kind, fields["t_ms"], out):
            return out, False
        self._counts[kind] += 1
        if kind == "ppg":
            self._baseline_pipeline.feed([fields["t_ms"]], [fields["value"]])
            while fields["t_ms"] >= self._baseline_hop + self._hop_ms():
                self._baseline_hop += self._hop_ms()
                est = self._baseline_pipeline.estimate_at(self._baseline_hop)
                if est is not None:
                    self._baseline_estimates.append(est)
        out.append(wire.ack(kind, n=self._counts[kind]))
        ests = self._baseline_estimates
        if ests and ests[-1].window_end_ms - ests[0].window_start_ms >= 60_000.0:
            baseline = acquire_baseline(ests)
            self._t0 = self._baseline_hop
            self.core = SessionCore(self.config, self.profile, self.arm,
                                    self.seed, baseline,
                                    header_extra={"transport": "live"})
            self._emitted_records = 0
            out.append({"type": "scenario", "event": "baseline-ready",
                        "hr_mean_bpm": baseline.hr_mean_bpm,
                        "sdnn_mean_ms": baseline.sdnn_mean_ms,
                        "scenario_t0_ms": self._t0})
            out.extend(self._flush_records())
            self._last_sample_t = {"ppg": None, "gsr": None}
            self.state = RUNNING
        return out, False

    def _accept_sample_time(self, kind: str, t_ms: float, out: List[dict]) -> bool:
        last = self._last_sample_t[kind]
        if last is not None and t_ms <= last:
            out.append(wire.warning("stale-timestamp", of=kind, t_ms=t_ms))
            return False
        self._last_sample_t[kind] = t_ms
        return True

    def _handle_running_sample(self, msg: dict) -> Tuple[List[dict], bool]:
        fields = wire.validate_sample(msg)
        kind = msg["type"]
        out: List[dict] = []
        if not self._accept_sample_time(kind, fields["t_ms"], out):
            return out, False
        self._counts[kind] += 1
        t = fields["t_ms"] - self._t0
        if t > 0:
            if kind == "ppg":
                self.core.ingest_ppg([t], [fields["value"]])
            else:
                self.core.ingest_gsr([t], [fields["conductance"]])
        out.append(wire.ack(kind, n=self._counts[kind]))
        latest = max(v - self._t0 for v in self._last_sample_t.values()
                     if v is not None)
        out.extend(self._advance_to(latest))
        if self.core.done():
            out.extend(self._finish())
            return out, True
        return out, False

    def _handle_action(self, msg: dict) -> Tuple[List[dict], bool]:
        fields = wire.validate_action(msg)
        t = fields["t_ms"] - self._t0
        if t < self._processed_tick * self._tick_ms():
            return [wire.warning("stale-timestamp", of="action",
                                 t_ms=fields["t_ms"])], False
        out = self._advance_to(t)
        action = ActionEvent(t, fields["action"], layer=fields["layer"],
                             tool=fields["tool"])
        self.core.apply_action(action)
        out.extend(self._flush_records())
        if self.core.done():
            out.extend(self._finish())
            return out, True
        return out, False

    def _write_log(self, log) -> None:
        if self.log_dir is None or log is None:
            return
        import pathlib
        import uuid

        path = pathlib.Path(self.log_dir)
        path.mkdir(parents=True, exist_ok=True)
        name = f"session-{self.mode}-{self.arm}-{self.seed}-{uuid.uuid4().hex[:8]}.log"
        self.log_path = path / name
        self.log_path.write_text(log.to_ndjson())

    def _finish(self) -> List[dict]:
        end_t = max(self._processed_tick * self._tick_ms(),
                    self.core.scenario.done_at_ms or 0.0)
        self.metrics = self.core.finalize(end_t)
        self._write_log(self.core.log)
        out = self._flush_records()
        out.append({"type": "end", "status": "ok", "metrics": self.metrics.to_dict()})
        self.state = ENDED
        return out

    def _handle_end(self) -> Tuple[List[dict], bool]:
        if self.state == RUNNING:
            return self._finish(), True
        self.state = ENDED
        return [{"type": "end", "status": "ok",
                 "metrics": None if self.metrics is None else self.metrics.to_dict()}], True


async def _serve_stream(session: WireSession, reader: asyncio.StreamReader,
                        writer: asyncio.StreamWriter):
    try:
        while True:
            line = await reader.readline()
            if not line:
                break
            text = line.decode("utf-8").strip()
            if not text:
                continue
            outbound, close = session.handle_line(text)
            for msg in outbound:
                writer.write((wire.dumps(msg) + "\n").encode("utf-8"))
            await writer.drain()
            if close:
                break
    finally:
        writer.close()
        try:
            await writer.wait_closed()
        except Exception:
            pass


class SessionServer:
    """TCP server; one independent session per connection."""

    def __init__(self, config: SessionConfig, host: str = "127.0.0.1", port: int = 0,
                 log_dir: Optional[str] = None):
        self.config = config
        self.host = host
        self.port = port
        self.log_dir = log_dir
        self._server: Optional[asyncio.AbstractServer] = None
        self.sessions: List[WireSession] = []

    async def _on_connect(self, reader, writer):
        session = WireSession(self.config, log_dir=self.log_dir)
        self.sessions.append(session)
        logger.info("client connected; %d session(s) served", len(self.sessions))
        await _serve_stream(session, reader, writer)

    async def start(self):
        self._server = await asyncio.start_server(self._on_connect, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info("listening on %s:%d", self.host, self.port)
        return self

    async def serve_forever(self):
        async with self._server:
            await self._server.serve_forever()

    async def stop(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()


async def serve_stdio(config: SessionConfig, log_dir: Optional[str] = None):
    """One session over stdin/stdout."""
    loop = asyncio.get_event_loop()
    reader = asyncio.StreamReader()
    await loop.connect_read_pipe(lambda: asyncio.StreamReaderProtocol(reader), sys.stdin)
    transport, protocol = await loop.connect_write_pipe(
        asyncio.streams.FlowControlMixin, sys.stdout)
    writer = asyncio.StreamWriter(transport, protocol, reader, loop)
    await _serve_stream(WireSession(config, log_dir=log_dir), reader, writer)


def run_server(config: SessionConfig, listen: str, log_dir: Optional[str] = None):
    """Entry point for the CLI: `host:port` or `stdio`."""
    if listen == "stdio":
        asyncio.run(serve_stdio(config, log_dir=log_dir))
        return
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        raise ValidationError(f"listen address must be host:port or 'stdio', got {listen!r}")

    async def main():
        server = SessionServer(config, host=host, port=int(port), log_dir=log_dir)
        await server.start()
        print(f"listening on {server.host}:{server.port}", flush=True)
        await server.serve_forever()

    asyncio.run(main())
