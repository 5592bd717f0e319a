"""Closed-loop command service and robot client.

Robot protocol (default port 7071): newline-delimited ASCII frames,
space-separated fields:

    JUNCTION <id> <open_mask>
    POLL <id>
    PENDING <id>
    CMD <id> <command> <confidence 4dp>
    ERR <code> <text...>

Console/status protocol (default port 7072): newline-delimited JSON.  The
listener accepts either a raw byte stream or an HTTP WebSocket upgrade
(detected from the first bytes), so both scripts and browsers can attach.
Server -> console: {"type": "state", maze, pose, phase, countdown_ms,
probs}.  Console -> server: {"type": "select", "target": 0|1|2} and
{"type": "deselect"}.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import dsp, mazebot, ssvepnet, synth
from .eegio import DEFAULT_CLASS_FREQS

DEFAULT_ROBOT_PORT = 7071
DEFAULT_CONSOLE_PORT = 7072

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class FrameDecodeError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Junction:
    junction_id: int
    open_dirs: int


@dataclass(frozen=True)
class Poll:
    junction_id: int


@dataclass(frozen=True)
class Pending:
    junction_id: int


@dataclass(frozen=True)
class Cmd:
    junction_id: int
    command: int
    confidence: float


@dataclass(frozen=True)
class Err:
    code: str
    text: str


Frame = Junction | Poll | Pending | Cmd | Err


def encode_frame(f: Frame) -> bytes:
    if isinstance(f, Junction):
        line = f"JUNCTION {f.junction_id} {f.open_dirs}"
    elif isinstance(f, Poll):
        line = f"POLL {f.junction_id}"
    elif isinstance(f, Pending):
        line = f"PENDING {f.junction_id}"
    elif isinstance(f, Cmd):
        line = f"CMD {f.junction_id} {f.command} {f.confidence:.4f}"
    elif isinstance(f, Err):
        line = f"ERR {f.code} {f.text}"
    else:
        raise TypeError(f"not a frame: {f!r}")
    return (line + "\n").encode("ascii")


def _parse_uint(token: str, what: str) -> int:
    if not token.isdigit():
        raise FrameDecodeError("bad_field", f"{what} must be a non-negative integer")
    return int(token)


def decode_frame(raw: bytes) -> Frame:
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise FrameDecodeError("bad_encoding", "frame is not ASCII") from None
    parts = text.strip("\r\n").split(" ")
    verb = parts[0]
    if verb == "JUNCTION":
        if len(parts) != 3:
            raise FrameDecodeError("bad_arity", "JUNCTION takes 2 fields")
        jid = _parse_uint(parts[1], "junction id")
        mask = _parse_uint(parts[2], "open mask")
        if not 0 <= mask <= 7:
            raise FrameDecodeError("bad_mask", "open mask out of range")
        return Junction(jid, mask)
    if verb == "POLL":
        if len(parts) != 2:
            raise FrameDecodeError("bad_arity", "POLL takes 1 field")
        return Poll(_parse_uint(parts[1], "junction id"))
    if verb == "PENDING":
        if len(parts) != 2:
            raise FrameDecodeError("bad_arity", "PENDING takes 1 field")
        return Pending(_parse_uint(parts[1], "junction id"))
    if verb == "CMD":
        if len(parts) != 4:
            raise FrameDecodeError("bad_arity", "CMD takes 3 fields")
        jid = _parse_uint(parts[1], "junction id")
        cmd = _parse_uint(parts[2], "command")
        if cmd > 2:
            raise FrameDecodeError("bad_command", "command out of range")
        try:
            conf = float(parts[3])
        except ValueError:
            raise FrameDecodeError("bad_confidence", "confidence not a number") from None
        if not 0.0 <= conf <= 1.0:
            raise FrameDecodeError("bad_confidence", "confidence out of [0,1]")
        return Cmd(jid, cmd, conf)
    if verb == "ERR":
        if len(parts) < 3:
            raise FrameDecodeError("bad_arity", "ERR takes a code and text")
        return Err(parts[1], " ".join(parts[2:]))
    raise FrameDecodeError("bad_verb", f"unknown verb {verb!r}")


# --------------------------------------------------------------------------
# signal sources


class SourceError(RuntimeError):
    pass


class SynthSource:
    """Operator-driven synthetic source.

    ``select(i)`` pins the stimulus to class i; with no selection the source
    emits noise only.  Each acquisition uses a fresh sub-seed so repeated
    stimulus windows differ while the session stays deterministic per seed.
    """

    def __init__(self, class_freqs=DEFAULT_CLASS_FREQS, snr_db: float = 0.0,
                 fs_hz: int = 256, seed: int = 0):
        self.class_freqs = sorted(class_freqs)
        self.snr_db = snr_db
        self.fs_hz = fs_hz
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._target: int | None = None
        self._lock = threading.Lock()

    def select(self, target: int | None):
        if target is not None and target not in (0, 1, 2):
            raise ValueError(f"bad target {target}")
        with self._lock:
            self._target = target

    def acquire(self, n_samples: int) -> np.ndarray:
        with self._lock:
            target = self._target
            seed = int(self._rng.integers(0, 2**63 - 1))
            phase = float(self._rng.uniform(0, 2 * np.pi))
        duration = n_samples / self.fs_hz
        if target is None:
            cfg = synth.SynthConfig(
                stim_freq_hz=self.class_freqs[0], fs_hz=self.fs_hz,
                duration_s=duration, base_amp_uv=0.0, snr_db=-math.inf,
                seed=seed,
            )
        else:
            cfg = synth.SynthConfig(
                stim_freq_hz=self.class_freqs[target], fs_hz=self.fs_hz,
                duration_s=duration, phase_rad=phase, snr_db=self.snr_db,
                seed=seed,
            )
        return synth.generate_trial(cfg)[:n_samples]


class ReplaySource:
    """Serves successive trial windows from a canonical recording."""

    def __init__(self, recording):
        self.recording = recording
        self._next = 0

    def acquire(self, n_samples: int) -> np.ndarray:
        if self._next >= len(self.recording.trials):
            raise SourceError("replay recording exhausted")
        t = self.recording.trials[self._next]
        self._next += 1
        if t.length_samples < n_samples:
            raise SourceError("replay trial shorter than stimulus window")
        seg = self.recording.data[t.onset_sample : t.onset_sample + n_samples, 0]
        return np.asarray(seg, dtype=np.float64)


# --------------------------------------------------------------------------
# command service


@dataclass
class ServeConfig:
    robot_port: int = DEFAULT_ROBOT_PORT
    console_port: int = DEFAULT_CONSOLE_PORT
    host: str = "127.0.0.1"
    fs_hz: int = 256
    window_seconds: float = 3.0
    n_fft: int = dsp.DEFAULT_NFFT
    band: tuple[float, float] = dsp.DEFAULT_BAND
    class_freqs: tuple = DEFAULT_CLASS_FREQS
    mask_blocked: bool = True
    time_scale: float = 1.0  # wall-clock stimulus = window_seconds * time_scale
    filter_order: int = 4


@dataclass
class SessionSnapshot:
    phase: str  # "idle" | "stimulus" | "decided"
    junction_id: int | None = None
    open_dirs: int | None = None
    deadline: float | None = None  # monotonic
    decided_at: float | None = None  # monotonic
    command: int | None = None
    confidence: float | None = None
    probs: list | None = None


class CommandService:
    """Stimulus/classify/mailbox service with a status stream for observers."""

    def __init__(self, params: ssvepnet.CnnParams, net_config: ssvepnet.CnnConfig,
                 source, config: ServeConfig | None = None, world=None):
        self.config = config or ServeConfig()
        self.params = params
        self.net_config = net_config
        self.source = source
        self.world = world  # optional (maze, RobotSim) for console display
        self.filter = dsp.design_bandpass(
            self.config.fs_hz, self.config.band[0], self.config.band[1],
            self.config.filter_order,
        )
        self._lock = threading.Lock()
        self._session = SessionSnapshot(phase="idle")
        self._last_junction = -1
        self._consoles: list = []
        self._threads: list[threading.Thread] = []
        self._robot_server = None
        self._console_server = None
        self._stop = threading.Event()

    # -- lifecycle ---------------------------------------------------------

    def start(self):
        svc = self

        class RobotHandler(socketserver.StreamRequestHandler):
            def handle(self):
                while not svc._stop.is_set():
                    line = self.rfile.readline()
                    if not line:
                        return
                    try:
                        frame = decode_frame(line)
                        reply = svc.handle_frame(frame)
                    except FrameDecodeError as exc:
                        reply = Err(exc.code, str(exc))
                    if reply is not None:
                        self.wfile.write(encode_frame(reply))
                        self.wfile.flush()

        class ConsoleHandler(socketserver.BaseRequestHandler):
            def handle(self):
                svc._handle_console(self.request)

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._robot_server = Server(
            (self.config.host, self.config.robot_port), RobotHandler
        )
        self._console_server = Server(
            (self.config.host, self.config.console_port), ConsoleHandler
        )
        for srv in (self._robot_server, self._console_server):
            t = threading.Thread(target=srv.serve_forever, daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self):
        self._stop.set()
        for srv in (self._robot_server, self._console_server):
            if srv is not None:
                srv.shutdown()
                srv.server_close()

    @property
    def robot_port(self) -> int:
        return self._robot_server.server_address[1]

    @property
    def console_port(self) -> int:
        return self._console_server.server_address[1]

    # -- protocol ----------------------------------------------------------

    def snapshot(self) -> SessionSnapshot:
        with self._lock:
            return SessionSnapshot(**vars(self._session))

    def handle_frame(self, frame: Frame) -> Frame | None:
        if isinstance(frame, Junction):
            return self._handle_junction(frame)
        if isinstance(frame, Poll):
            return self._handle_poll(frame)
        return Err("bad_verb", "robot may only send JUNCTION or POLL")

    def _handle_junction(self, frame: Junction) -> Frame:
        with self._lock:
            if frame.junction_id <= self._last_junction:
                return Err("stale_id", "junction ids must be strictly increasing")
            if self._session.phase == "stimulus":
                return Err("busy", "stimulus already in progress")
            self._last_junction = frame.junction_id
            deadline = (time.monotonic()
                        + self.config.window_seconds * self.config.time_scale)
            self._session = SessionSnapshot(
                phase="stimulus", junction_id=frame.junction_id,
                open_dirs=frame.open_dirs, deadline=deadline,
            )
        self._broadcast_state()
        worker = threading.Thread(
            target=self._run_stimulus, args=(frame.junction_id, frame.open_dirs),
            daemon=True,
        )
        worker.start()
        return Pending(frame.junction_id)

    def _handle_poll(self, frame: Poll) -> Frame:
        with self._lock:
            s = self._session
            if s.phase == "idle" or s.junction_id is None:
                return Err("no_session", "no junction announced yet")
            if frame.junction_id != s.junction_id:
                return Err("stale_id", f"current junction is {s.junction_id}")
            if s.phase == "stimulus":
                return Pending(frame.junction_id)
            return Cmd(s.junction_id, s.command, s.confidence)

    def classify(self, signal: np.ndarray) -> np.ndarray:
        """Run the feature pipeline + model; returns class probabilities."""
        y = dsp.filter_apply(self.filter, signal)
        mag = dsp.fft_magnitude(y, self.config.n_fft)
        fv = dsp.extract_features(
            mag, self.config.fs_hz, self.config.n_fft,
            self.config.band[0], self.config.band[1],
        )
        logits = ssvepnet.predict_logits(
            self.params, self.net_config, fv.values[None, :]
        )
        return ssvepnet.softmax(logits)[0]

    def _run_stimulus(self, junction_id: int, open_dirs: int):
        with self._lock:
            deadline = self._session.deadline
        # wait out the stimulus window, then acquire + classify, so operator
        # selections made during the window are honored
        remaining = deadline - time.monotonic()
        if remaining > 0:
            time.sleep(remaining)
        n_samples = int(round(self.config.window_seconds * self.config.fs_hz))
        try:
            signal = self.source.acquire(n_samples)
            probs = self.classify(signal)
        except Exception as exc:  # noqa: BLE001 - any source/pipeline failure
            with self._lock:
                self._session = SessionSnapshot(phase="idle")
            self._err_to_console(f"signal source failed: {exc}")
            return
        masked = probs.copy()
        if self.config.mask_blocked:
            for c in range(3):
                if not open_dirs & (1 << c):
                    masked[c] = -np.inf
        command = int(np.argmax(masked))
        confidence = round(float(probs[command]), 4)
        with self._lock:
            self._session = SessionSnapshot(
                phase="decided", junction_id=junction_id, open_dirs=open_dirs,
                deadline=deadline, decided_at=time.monotonic(),
                command=command, confidence=confidence,
                probs=[round(float(p), 6) for p in probs],
            )
        self._broadcast_state()

    # -- console stream ----------------------------------------------------

    def _state_message(self) -> dict:
        s = self.snapshot()
        countdown = None
        if s.phase == "stimulus" and s.deadline is not None:
            countdown = max(0, int(1000 * (s.deadline - time.monotonic())))
        msg = {
            "type": "state",
            "phase": s.phase,
            "junction_id": s.junction_id,
            "open_dirs": s.open_dirs,
            "countdown_ms": countdown,
            "probs": s.probs,
            "command": s.command,
            "confidence": s.confidence,
            "class_freqs": list(self.config.class_freqs),
        }
        if self.world is not None:
            maze, sim = self.world
            msg["maze"] = mazebot.render_maze(maze)
            msg["pose"] = {
                "col": sim.pose.cell[0],
                "row": sim.pose.cell[1],
                "heading": mazebot.HEADING_NAMES[sim.pose.heading],
            }
            if sim.finished:
                msg["robot_finished"] = True
        return msg

    def _broadcast_state(self):
        self._broadcast(self._state_message())

    def _err_to_console(self, text: str):
        self._broadcast({"type": "error", "text": text})

    def _broadcast(self, obj: dict):
        payload = (json.dumps(obj) + "\n").encode()
        with self._lock:
            consoles = list(self._consoles)
        for sink in consoles:
            try:
                sink(payload)
            except OSError:
                with self._lock:
                    if sink in self._consoles:
                        self._consoles.remove(sink)

    def _handle_console(self, conn: socket.socket):
        conn.settimeout(0.2)
        first = b""
        try:
            first = conn.recv(4, socket.MSG_PEEK)
        except socket.timeout:
            pass
        conn.settimeout(None)
        if first.startswith(b"GET "):
            self._console_websocket(conn)
        else:
            self._console_raw(conn)

    def _register_console(self, sink):
        with self._lock:
            self._consoles.append(sink)
        sink((json.dumps(self._state_message()) + "\n").encode())

    def _unregister_console(self, sink):
        with self._lock:
            if sink in self._consoles:
                self._consoles.remove(sink)

    def _handle_console_message(self, obj: dict):
        kind = obj.get("type")
        if kind == "select":
            target = obj.get("target")
            if hasattr(self.source, "select") and target in (0, 1, 2):
                self.source.select(target)
        elif kind == "deselect":
            if hasattr(self.source, "select"):
                self.source.select(None)

    def _console_raw(self, conn: socket.socket):
        fh = conn.makefile("rwb")

        def sink(payload: bytes):
            fh.write(payload)
            fh.flush()

        self._register_console(sink)
        try:
            while not self._stop.is_set():
                line = fh.readline()
                if not line:
                    return
                try:
                    self._handle_console_message(json.loads(line))
                except (json.JSONDecodeError, TypeError):
                    continue  # malformed console input is ignored
        finally:
            self._unregister_console(sink)

    def _console_websocket(self, conn: socket.socket):
        fh = conn.makefile("rwb")
        request = fh.readline().decode("latin-1")
        headers = {}
        while True:
            line = fh.readline().decode("latin-1").strip()
            if not line:
                break
            key, _, value = line.partition(":")
            headers[key.strip().lower()] = value.strip()
        key = headers.get("sec-websocket-key", "")
        if "GET" not in request or not key:
            fh.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            fh.flush()
            return
        accept = base64.b64encode(
            hashlib.sha1((key + _WS_GUID).encode()).digest()
        ).decode()
        fh.write(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode()
        )
        fh.flush()
        send_lock = threading.Lock()

        def sink(payload: bytes):
            with send_lock:
                fh.write(_ws_encode_text(payload.rstrip(b"\n")))
                fh.flush()

        self._register_console(sink)
        try:
            while not self._stop.is_set():
                msg = _ws_read_message(fh)
                if msg is None:
                    return
                try:
                    self._handle_console_message(json.loads(msg))
                except (json.JSONDecodeError, TypeError):
                    continue
        finally:
            self._unregister_console(sink)


def _ws_encode_text(payload: bytes) -> bytes:
    header = bytearray([0x81])  # FIN + text opcode
    n = len(payload)
    if n < 126:
        header.append(n)
    elif n < 1 << 16:
        header.append(126)
        header += n.to_bytes(2, "big")
    else:
        header.append(127)
        header += n.to_bytes(8, "big")
    return bytes(header) + payload


def _ws_read_message(fh) -> bytes | None:
    """Read one client->server message; None on close/EOF."""
    while True:
        head = fh.read(2)
        if len(head) < 2:
            return None
        opcode = head[0] & 0x0F
        masked = head[1] & 0x80
        length = head[1] & 0x7F
        if length == 126:
            length = int.from_bytes(fh.read(2), "big")
        elif length == 127:
            length = int.from_bytes(fh.read(8), "big")
        mask = fh.read(4) if masked else b"\x00" * 4
        data = fh.read(length)
        if len(data) < length:
            return None
        if masked:
            data = bytes(b ^ mask[i % 4] for i, b in enumerate(data))
        if opcode == 0x8:  # close
            return None
        if opcode == 0x9:  # ping -> pong
            fh.write(bytes([0x8A, len(data)]) + data)
            fh.flush()
            continue
        if opcode in (0x1, 0x2):
            return data
        # ignore pongs/continuations we never solicit


# --------------------------------------------------------------------------
# robot client


@dataclass
class ClientConfig:
    host: str = "127.0.0.1"
    port: int = DEFAULT_ROBOT_PORT
    poll_interval_s: float = 0.25
    step_limit: int = 4000
    retries: int = 3
    retry_delay_s: float = 0.5


@dataclass
class TraceEntry:
    t: float
    event: str
    data: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"t": self.t, "event": self.event, **self.data}


class RobotClient:
    """Drives a RobotSim against a CommandService over the robot protocol."""

    def __init__(self, maze: mazebot.Maze, config: ClientConfig,
                 intent_hook=None, sim: mazebot.RobotSim | None = None):
        self.maze = maze
        self.config = config
        self.sim = sim if sim is not None else mazebot.RobotSim(maze)
        # called with (pose, open_dirs) before each junction; lets a scripted
        # operator arm the signal source and returns the intended command
        self.intent_hook = intent_hook
        self.trace: list[TraceEntry] = []
        self.commands: list[tuple[int, int, int | None]] = []  # (jid, cmd, intent)
        self._announce_id = 0  # wire junction ids, strictly increasing

    def _log(self, event: str, **data):
        self.trace.append(TraceEntry(time.time(), event, data))

    def _connect(self):
        last = None
        for attempt in range(self.config.retries + 1):
            try:
                sock = socket.create_connection(
                    (self.config.host, self.config.port), timeout=10
                )
                return sock
            except OSError as exc:
                last = exc
                self._log("connect_failed", attempt=attempt, error=str(exc))
                time.sleep(self.config.retry_delay_s)
        raise ConnectionError(f"could not reach command service: {last}")

    def _roundtrip(self, fh, frame: Frame) -> Frame:
        fh.write(encode_frame(frame))
        fh.flush()
        line = fh.readline()
        if not line:
            raise ConnectionError("server closed connection")
        return decode_frame(line)

    def run(self) -> list[TraceEntry]:
        sock = self._connect()
        fh = sock.makefile("rwb")
        try:
            steps = 0
            while not self.sim.finished:
                if steps >= self.config.step_limit:
                    self._log("step_limit", steps=steps)
                    raise RuntimeError(f"step limit {steps} exceeded")
                steps += 1
                if self.sim.awaiting:
                    self._announce_id += 1
                    jid = self._announce_id
                    mask = self.sim.state.open_dirs
                    intent = None
                    if self.intent_hook is not None:
                        intent = self.intent_hook(self.sim.pose, mask)
                    self._log("junction", junction_id=jid, open_dirs=mask,
                              intent=intent)
                    reply = self._roundtrip(fh, Junction(jid, mask))
                    while isinstance(reply, Pending):
                        time.sleep(self.config.poll_interval_s)
                        reply = self._roundtrip(fh, Poll(jid))
                    if isinstance(reply, Err):
                        self._log("server_error", code=reply.code, text=reply.text)
                        raise RuntimeError(f"server error: {reply.code} {reply.text}")
                    assert isinstance(reply, Cmd)
                    self._log("command", junction_id=jid, command=reply.command,
                              confidence=reply.confidence)
                    self.commands.append((jid, reply.command, intent))
                    events = self.sim.advance(reply.command)
                    for ev in events:
                        self._log(ev[0], detail=list(ev[1:]))
                else:
                    for ev in self.sim.advance():
                        self._log(ev[0], detail=list(ev[1:]))
            self._log("finished", moves=self.sim.moves,
                      junctions=self.sim.junction_count)
            return self.trace
        finally:
            fh.close()
            sock.close()


def write_trace(trace: list[TraceEntry], path) -> None:
    with open(path, "w") as fh:
        for entry in trace:
            fh.write(json.dumps(entry.as_dict()) + "\n")
