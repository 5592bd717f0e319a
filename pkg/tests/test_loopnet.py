import json
import math
import socket
import time

import numpy as np
import pytest

from ssvepmaze import dsp, loopnet, mazebot, ssvepnet, synth
from ssvepmaze.eegio import DEFAULT_CLASS_FREQS, LabeledExample
from ssvepmaze.loopnet import (
    Cmd,
    CommandService,
    Err,
    FrameDecodeError,
    Junction,
    Pending,
    Poll,
    ReplaySource,
    ServeConfig,
    SynthSource,
    decode_frame,
    encode_frame,
)


class TestFrameCodec:
    def test_cmd_wire_format(self):
        assert encode_frame(Cmd(7, 2, 0.91)) == b"CMD 7 2 0.9100\n"

    def test_poll_decode(self):
        assert decode_frame(b"POLL 7\n") == Poll(7)

    def test_junction_roundtrip(self):
        f = Junction(3, 0b101)
        assert decode_frame(encode_frame(f)) == f

    def test_command_out_of_range(self):
        with pytest.raises(FrameDecodeError) as e:
            decode_frame(b"CMD 7 5 0.9\n")
        assert e.value.code == "bad_command"

    def test_unknown_verb(self):
        with pytest.raises(FrameDecodeError) as e:
            decode_frame(b"BOGUS 1\n")
        assert e.value.code == "bad_verb"

    def test_bad_arity(self):
        with pytest.raises(FrameDecodeError) as e:
            decode_frame(b"POLL\n")
        assert e.value.code == "bad_arity"

    def test_bad_mask(self):
        with pytest.raises(FrameDecodeError) as e:
            decode_frame(b"JUNCTION 1 9\n")
        assert e.value.code == "bad_mask"

    def test_bad_confidence(self):
        with pytest.raises(FrameDecodeError) as e:
            decode_frame(b"CMD 1 1 1.5\n")
        assert e.value.code == "bad_confidence"

    def test_negative_id(self):
        with pytest.raises(FrameDecodeError) as e:
            decode_frame(b"POLL -3\n")
        assert e.value.code == "bad_field"

    def test_err_roundtrip(self):
        f = Err("stale_id", "current junction is 4")
        assert decode_frame(encode_frame(f)) == f

    def test_roundtrip_property_10k(self):
        rng = np.random.default_rng(99)
        for _ in range(10_000):
            kind = rng.integers(5)
            if kind == 0:
                f = Junction(int(rng.integers(1 << 20)), int(rng.integers(8)))
            elif kind == 1:
                f = Poll(int(rng.integers(1 << 20)))
            elif kind == 2:
                f = Pending(int(rng.integers(1 << 20)))
            elif kind == 3:
                f = Cmd(int(rng.integers(1 << 20)), int(rng.integers(3)),
                        round(float(rng.integers(10001)) / 10000, 4))
            else:
                f = Err("code_%d" % rng.integers(10), "some error text")
            assert decode_frame(encode_frame(f)) == f


class TestSynthSource:
    def test_selected_target_dominates_band(self):
        src = SynthSource(snr_db=math.inf, seed=0)
        src.select(2)
        x = src.acquire(768)
        mag = np.abs(np.fft.rfft(x, 1024))
        assert np.argmax(mag[1:]) + 1 == 53  # 13.25 Hz

    def test_no_selection_gives_noise(self):
        src = SynthSource(seed=0)
        x = src.acquire(768)
        assert synth.measure_band_snr(x, 256, 11.25) < 0

    def test_bad_target(self):
        src = SynthSource()
        with pytest.raises(ValueError):
            src.select(5)


class TestReplaySource:
    def test_serves_trials_in_order(self):
        template = synth.SynthConfig(stim_freq_hz=9.25, duration_s=4.0,
                                     snr_db=math.inf, seed=0)
        rec = synth.generate_dataset(DEFAULT_CLASS_FREQS, 1, template)
        src = ReplaySource(rec)
        for trial in rec.trials:
            x = src.acquire(768)
            expected = rec.data[trial.onset_sample:trial.onset_sample + 768, 0]
            assert np.array_equal(x, expected)

    def test_exhausted(self):
        template = synth.SynthConfig(stim_freq_hz=9.25, duration_s=4.0,
                                     snr_db=math.inf, seed=0)
        rec = synth.generate_dataset(DEFAULT_CLASS_FREQS, 1, template)
        src = ReplaySource(rec)
        for _ in rec.trials:
            src.acquire(768)
        with pytest.raises(loopnet.SourceError, match="exhausted"):
            src.acquire(768)

    def test_empty_recording(self):
        from ssvepmaze.eegio import EegRecording
        rec = EegRecording(fs_hz=256, channel_labels=["Oz"],
                           data=np.zeros((16, 1)), trials=[])
        with pytest.raises(loopnet.SourceError):
            ReplaySource(rec).acquire(8)


# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained_model():
    """Quick model trained on noiseless synthetic data."""
    template = synth.SynthConfig(stim_freq_hz=9.25, duration_s=4.0,
                                 snr_db=math.inf, seed=0)
    rec = synth.generate_dataset(DEFAULT_CLASS_FREQS, 10, template)
    filt = dsp.design_bandpass(256, 8, 16, 4)
    examples = dsp.preprocess_recording(
        rec, "Oz", dsp.WindowSpec(768, 16), filt, 1024, (8, 16),
        DEFAULT_CLASS_FREQS,
    )
    net = ssvepnet.CnnConfig()
    params, _ = ssvepnet.train(examples, ssvepnet.TrainConfig(epochs=20, seed=0),
                               net)
    return params, net


def start_service(trained_model, source, **overrides):
    params, net = trained_model
    config = ServeConfig(robot_port=0, console_port=0, **overrides)
    svc = CommandService(params, net, source, config)
    svc.start()
    return svc


def robot_conn(svc):
    sock = socket.create_connection(("127.0.0.1", svc.robot_port), timeout=10)
    return sock, sock.makefile("rwb")


def roundtrip(fh, frame):
    fh.write(encode_frame(frame))
    fh.flush()
    return decode_frame(fh.readline())


class TestCommandService:
    def test_poll_before_junction(self, trained_model):
        svc = start_service(trained_model, SynthSource(seed=0),
                            window_seconds=0.5)
        try:
            sock, fh = robot_conn(svc)
            reply = roundtrip(fh, Poll(1))
            assert isinstance(reply, Err) and reply.code == "no_session"
            sock.close()
        finally:
            svc.stop()

    def test_pending_then_cmd_and_timing(self, trained_model):
        src = SynthSource(snr_db=math.inf, seed=0)
        src.select(1)
        svc = start_service(trained_model, src, window_seconds=3.0,
                            time_scale=0.2)  # 0.6 s wall-clock stimulus
        try:
            sock, fh = robot_conn(svc)
            t0 = time.monotonic()
            reply = roundtrip(fh, Junction(1, 0b111))
            assert isinstance(reply, Pending)
            reply = roundtrip(fh, Poll(1))
            assert isinstance(reply, Pending)  # still inside the stimulus
            while isinstance(reply, Pending):
                time.sleep(0.02)
                reply = roundtrip(fh, Poll(1))
            t_done = time.monotonic()
            assert isinstance(reply, Cmd)
            assert reply.command == 1
            assert reply.confidence > 0.99
            snap = svc.snapshot()
            assert snap.decided_at >= snap.deadline
            assert snap.decided_at <= snap.deadline + 0.2
            assert t_done - t0 >= 0.6
            sock.close()
        finally:
            svc.stop()

    def test_stale_junction_id(self, trained_model):
        src = SynthSource(snr_db=math.inf, seed=0)
        src.select(0)
        svc = start_service(trained_model, src, window_seconds=0.5,
                            time_scale=0.05)
        try:
            sock, fh = robot_conn(svc)
            reply = roundtrip(fh, Junction(5, 0b111))
            while isinstance(reply, Pending):
                time.sleep(0.02)
                reply = roundtrip(fh, Poll(5))
            assert isinstance(reply, Cmd)
            reply = roundtrip(fh, Junction(5, 0b111))
            assert isinstance(reply, Err) and reply.code == "stale_id"
            reply = roundtrip(fh, Poll(4))
            assert isinstance(reply, Err) and reply.code == "stale_id"
            sock.close()
        finally:
            svc.stop()

    def test_masking_blocked_directions(self, trained_model):
        src = SynthSource(snr_db=math.inf, seed=0)
        src.select(1)  # classifier will want "forward"
        svc = start_service(trained_model, src, window_seconds=0.5,
                            time_scale=0.05, mask_blocked=True)
        try:
            sock, fh = robot_conn(svc)
            # forward is blocked: only left and right open
            reply = roundtrip(fh, Junction(1, 0b101))
            while isinstance(reply, Pending):
                time.sleep(0.02)
                reply = roundtrip(fh, Poll(1))
            assert isinstance(reply, Cmd)
            assert reply.command in (0, 2)
            sock.close()
        finally:
            svc.stop()

    def test_source_failure_resets_idle(self, trained_model):
        class FailingSource:
            def acquire(self, n):
                raise loopnet.SourceError("boom")

        svc = start_service(trained_model, FailingSource(),
                            window_seconds=0.2, time_scale=0.1)
        try:
            sock, fh = robot_conn(svc)
            reply = roundtrip(fh, Junction(1, 0b111))
            assert isinstance(reply, Pending)
            deadline = time.monotonic() + 5
            while svc.snapshot().phase != "idle":
                assert time.monotonic() < deadline
                time.sleep(0.02)
            sock.close()
        finally:
            svc.stop()


class TestConsoleStream:
    def test_raw_stream_state_and_select(self, trained_model):
        src = SynthSource(snr_db=math.inf, seed=0)
        svc = start_service(trained_model, src, window_seconds=3.0,
                            time_scale=0.2)
        try:
            console = socket.create_connection(
                ("127.0.0.1", svc.console_port), timeout=10)
            cfh = console.makefile("rwb")
            first = json.loads(cfh.readline())
            assert first["type"] == "state"
            assert first["phase"] == "idle"
            # operator selects target 2, then a junction arrives
            cfh.write((json.dumps({"type": "select", "target": 2}) + "\n")
                      .encode())
            cfh.flush()
            time.sleep(0.1)
            sock, fh = robot_conn(svc)
            reply = roundtrip(fh, Junction(1, 0b111))
            msg = json.loads(cfh.readline())
            assert msg["phase"] == "stimulus"
            assert msg["countdown_ms"] is not None
            while isinstance(reply, Pending):
                time.sleep(0.02)
                reply = roundtrip(fh, Poll(1))
            assert isinstance(reply, Cmd)
            assert reply.command == 2
            msg = json.loads(cfh.readline())
            assert msg["phase"] == "decided"
            assert msg["probs"] is not None
            assert abs(sum(msg["probs"]) - 1.0) < 1e-3
            sock.close()
            console.close()
        finally:
            svc.stop()

    def test_malformed_console_message_ignored(self, trained_model):
        svc = start_service(trained_model, SynthSource(seed=0),
                            window_seconds=0.5)
        try:
            console = socket.create_connection(
                ("127.0.0.1", svc.console_port), timeout=10)
            cfh = console.makefile("rwb")
            cfh.readline()
            cfh.write(b"this is not json\n")
            cfh.flush()
            time.sleep(0.1)
            # connection still alive: a state broadcast still arrives
            svc._broadcast_state()
            msg = json.loads(cfh.readline())
            assert msg["type"] == "state"
            console.close()
        finally:
            svc.stop()

    def test_websocket_upgrade_and_select(self, trained_model):
        import base64
        import hashlib

        src = SynthSource(snr_db=math.inf, seed=0)
        svc = start_service(trained_model, src, window_seconds=0.5,
                            time_scale=0.1)
        try:
            conn = socket.create_connection(
                ("127.0.0.1", svc.console_port), timeout=10)
            key = base64.b64encode(b"0123456789abcdef").decode()
            conn.sendall(
                (
                    f"GET / HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\n"
                    f"Connection: Upgrade\r\nSec-WebSocket-Key: {key}\r\n"
                    f"Sec-WebSocket-Version: 13\r\n\r\n"
                ).encode()
            )
            fh = conn.makefile("rwb")
            status = fh.readline()
            assert b"101" in status
            accept = None
            while True:
                line = fh.readline().strip()
                if not line:
                    break
                if line.lower().startswith(b"sec-websocket-accept:"):
                    accept = line.split(b":", 1)[1].strip().decode()
            expected = base64.b64encode(
                hashlib.sha1(
                    (key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11").encode()
                ).digest()
            ).decode()
            assert accept == expected
            # first frame: the state snapshot as a text frame
            head = fh.read(2)
            assert head[0] == 0x81
            length = head[1] & 0x7F
            if length == 126:
                length = int.from_bytes(fh.read(2), "big")
            payload = fh.read(length)
            msg = json.loads(payload)
            assert msg["type"] == "state"
            # masked client frame selecting target 1
            body = json.dumps({"type": "select", "target": 1}).encode()
            mask = b"\x01\x02\x03\x04"
            masked = bytes(b ^ mask[i % 4] for i, b in enumerate(body))
            fh.write(bytes([0x81, 0x80 | len(body)]) + mask + masked)
            fh.flush()
            time.sleep(0.2)
            assert src._target == 1
            conn.close()
        finally:
            svc.stop()


class TestRobotClientEndToEnd:
    def test_full_maze_run_noiseless(self, trained_model):
        maze = mazebot.generate_maze(8, 8, 3)
        src = SynthSource(snr_db=math.inf, seed=0)
        svc = start_service(trained_model, src, window_seconds=3.0,
                            time_scale=0.02)
        try:
            operator = mazebot.make_bfs_operator(maze)

            def intent_hook(pose, open_dirs):
                intent = operator(pose, open_dirs)
                src.select(intent)
                return intent

            client = loopnet.RobotClient(
                maze,
                loopnet.ClientConfig(port=svc.robot_port,
                                     poll_interval_s=0.02),
                intent_hook=intent_hook,
            )
            client.run()
            assert client.sim.finished
            assert all(cmd == intent for _, cmd, intent in client.commands)
            assert client.sim.moves == mazebot.bfs_shortest_len(maze)
            jids = [jid for jid, _, _ in client.commands]
            assert jids == sorted(set(jids))  # strictly increasing
        finally:
            svc.stop()

    def test_replay_source_decisions(self, trained_model):
        # trials labeled 1, 0, 2 (by frequency) drive three junctions
        template = synth.SynthConfig(stim_freq_hz=9.25, duration_s=3.0,
                                     snr_db=math.inf, seed=0)
        from ssvepmaze.eegio import EegRecording, TrialMarker
        chunks, trials = [], []
        for i, f in enumerate([11.25, 9.25, 13.25]):
            cfg = synth.SynthConfig(stim_freq_hz=f, duration_s=3.0,
                                    snr_db=math.inf, seed=i)
            chunks.append(synth.generate_trial(cfg))
            trials.append(TrialMarker(i * 768, 768, f))
        rec = EegRecording(fs_hz=256, channel_labels=["Oz"],
                           data=np.concatenate(chunks)[:, None], trials=trials)
        svc = start_service(trained_model, ReplaySource(rec),
                            window_seconds=3.0, time_scale=0.02)
        try:
            sock, fh = robot_conn(svc)
            decided = []
            for jid in (1, 2, 3):
                reply = roundtrip(fh, Junction(jid, 0b111))
                while isinstance(reply, Pending):
                    time.sleep(0.02)
                    reply = roundtrip(fh, Poll(jid))
                assert isinstance(reply, Cmd)
                decided.append(reply.command)
            assert decided == [1, 0, 2]
            sock.close()
        finally:
            svc.stop()

    def test_server_down_aborts_after_retries(self):
        maze = mazebot.generate_maze(4, 4, 0)
        client = loopnet.RobotClient(
            maze,
            loopnet.ClientConfig(port=1, retries=2, retry_delay_s=0.01),
        )
        with pytest.raises(ConnectionError):
            client.run()
        assert sum(1 for t in client.trace if t.event == "connect_failed") == 3
