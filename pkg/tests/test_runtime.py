import socket
import threading

import pytest

from conftest import toy_spec
from vitsplit.errors import SessionError
from vitsplit.profiling import LatencyModel, fit_latency_model
from vitsplit.runtime import lzw
from vitsplit.runtime.cloud import CloudServer, default_port
from vitsplit.runtime.device import DeviceSession, measure_loopback_bandwidth
from vitsplit.runtime.executor import SyntheticExecutor, pseudo_tensor
from vitsplit.runtime.wire import ConfigPayload, MsgType, read_message, send_message
from vitsplit.scheduler import Decision

SPEC = toy_spec(4, 20, embed_dim=8)
FAST = LatencyModel(0.05, 0.0)


def decision(alpha, s):
    return Decision(alpha, s, 0.0, 0.0, 0.0, 0.0, True)


@pytest.fixture
def server():
    srv = CloudServer(("127.0.0.1", 0), {SPEC.name: SPEC}, FAST)
    th = threading.Thread(target=srv.serve_forever, daemon=True)
    th.start()
    yield srv
    srv.shutdown()
    srv.server_close()


def session(srv, **kw):
    return DeviceSession(SPEC, SyntheticExecutor(FAST), "127.0.0.1", srv.port, timeout=5, **kw)


def test_default_port(monkeypatch):
    monkeypatch.delenv("VITSPLIT_PORT", raising=False)
    assert default_port() == 7431
    monkeypatch.setenv("VITSPLIT_PORT", "9001")
    assert default_port() == 9001


def test_split_frames_round_trip(server):
    with session(server) as dev:
        r = dev.run_frame(decision(0.0, 2))
        assert r.payload_bytes == 20 * SPEC.token_bytes
        assert [x.tokens for x in r.device_samples] == [20, 20]
        assert [x.tokens for x in r.cloud_samples] == [20, 20]
        assert r.wire_bytes < r.payload_bytes
        assert r.codec_ms > 0
        assert r.e2e_ms == pytest.approx(r.device_ms + r.codec_ms + r.comm_ms + r.cloud_ms)
        r = dev.run_frame(decision(0.5, 1))
        assert [x.tokens for x in r.cloud_samples] == [16, 15, 14]
    assert server.frames_served == 2 and server.violations == []


def test_device_only_sends_no_tensor(server):
    with session(server) as dev:
        r = dev.run_frame(decision(0.0, SPEC.num_layers + 1))
        assert r.wire_bytes == 0 and r.cloud_samples == [] and len(r.device_samples) == 4
    assert server.frames_served == 0


def test_cloud_only_sends_raw_input(server):
    with session(server, raw_input_bytes=1234, compress=False) as dev:
        r = dev.run_frame(decision(0.0, 0))
        assert r.payload_bytes == r.wire_bytes == 1234
        assert r.device_samples == [] and len(r.cloud_samples) == 4
    assert server.frames_served == 1


def _raw_client(srv):
    sock = socket.create_connection(("127.0.0.1", srv.port), timeout=5)
    return sock


def _closed(sock):
    try:
        return sock.recv(1) == b""
    except ConnectionResetError:
        return True


def test_tensor_after_device_only_config_is_violation(server):
    sock = _raw_client(server)
    send_message(sock, MsgType.CONFIG, ConfigPayload.for_decision(SPEC.name, 5, 0.0).encode())
    assert read_message(sock).msg_type is MsgType.ACK
    send_message(sock, MsgType.TENSOR, lzw.compress(b"x"))
    assert _closed(sock)
    sock.close()
    assert any("device-only" in v for v in server.violations)
    # the server keeps serving other connections
    with session(server) as dev:
        dev.run_frame(decision(0.0, 2))


@pytest.mark.parametrize("raw", [b"XXXX\x05\x00\x00\x00\x00", b"JNS1\x02\x00\x00\x00\x00"])
def test_malformed_or_premature_messages_close_connection(server, raw):
    sock = _raw_client(server)
    sock.sendall(raw)
    assert _closed(sock)
    sock.close()
    assert len(server.violations) == 1


@pytest.mark.parametrize("cfg", [ConfigPayload("nope", 1, 0), ConfigPayload(SPEC.name, 9, 0),
                                 ConfigPayload(SPEC.name, 1, 5000)])
def test_bad_config_rejected(server, cfg):
    sock = _raw_client(server)
    send_message(sock, MsgType.CONFIG, cfg.encode())
    assert _closed(sock)
    sock.close()


def test_wrong_tensor_size_rejected(server):
    sock = _raw_client(server)
    send_message(sock, MsgType.CONFIG, ConfigPayload.for_decision(SPEC.name, 2, 0.0, False).encode())
    read_message(sock)
    send_message(sock, MsgType.TENSOR, bytes(10))
    assert _closed(sock)
    sock.close()
    assert "expected" in server.violations[0]


def test_sequential_sessions_with_different_alpha(server):
    for alpha, tokens in [(0.0, [20, 20]), (0.5, [15, 14])]:
        with session(server) as dev:
            r = dev.run_frame(decision(alpha, 2))
            assert [x.tokens for x in r.cloud_samples] == tokens[:2]
    assert server.frames_served == 2


def test_profile_recovers_cloud_slope():
    model = LatencyModel(0.5, 0.0)
    spec = toy_spec(4, 40, embed_dim=2)
    srv = CloudServer(("127.0.0.1", 0), {spec.name: spec}, model)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    try:
        samples = []
        with DeviceSession(spec, SyntheticExecutor(FAST), "127.0.0.1", srv.port) as dev:
            for m in (0, 50, 100, 114):
                samples += dev.run_frame(decision(m / 100, 0)).cloud_samples
        fit = fit_latency_model(samples)
        assert abs(fit.slope_ms_per_token - 0.5) / 0.5 < 0.10
    finally:
        srv.shutdown()
        srv.server_close()


def test_unreachable_cloud():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(SessionError):
        DeviceSession(SPEC, SyntheticExecutor(FAST), "127.0.0.1", port, timeout=1).connect()


def test_executor_jitter_bounds_with_fake_sleep():
    slept = []
    ex = SyntheticExecutor(LatencyModel(1.0, 0.0), jitter_frac=0.1, seed=1,
                           sleep=slept.append, clock=lambda: 0.0)
    for _ in range(200):
        ex.run_layer(100)
    assert all(0.09 <= s <= 0.11 for s in slept)
    assert max(slept) - min(slept) > 0.01
    again = []
    ex2 = SyntheticExecutor(LatencyModel(1.0, 0.0), jitter_frac=0.1, seed=1, sleep=again.append)
    for _ in range(200):
        ex2.run_layer(100)
    assert again == slept


def test_pseudo_tensor_is_deterministic():
    assert pseudo_tensor(103, 4) == pseudo_tensor(103, 4)
    assert len(pseudo_tensor(103, 4)) == 103 and pseudo_tensor(0) == b""


def test_loopback_bandwidth_is_positive():
    assert measure_loopback_bandwidth(nbytes=1 << 18) > 0
