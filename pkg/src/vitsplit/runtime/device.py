"""Device half of the split runtime."""
from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass, field

from ..errors import ProtocolError, SessionError
from ..model import ModelSpec
from ..profiling import LatencySample
from ..pruning import PruningPolicy, PruningSchedule, build_schedule
from ..scheduler import Decision
from . import lzw
from .cloud import default_port
from .executor import SyntheticExecutor, pseudo_tensor
from .wire import (ConfigPayload, MsgType, decode_profile, decode_result, read_message,
                   send_message)


@dataclass
class FrameResult:
    frame: int
    e2e_ms: float
    device_ms: float
    cloud_ms: float
    comm_ms: float  # wall time not spent computing or compressing
    payload_bytes: int
    wire_bytes: int
    codec_ms: float = 0.0
    device_samples: list[LatencySample] = field(default_factory=list)
    cloud_samples: list[LatencySample] = field(default_factory=list)


class DeviceSession:
    def __init__(self, spec: ModelSpec, executor: SyntheticExecutor, host: str = "127.0.0.1",
                 port: int | None = None, *, timeout: float = 30.0, compress: bool = True,
                 raw_input_bytes: int | None = None, grid_step: float = 0.01, seed: int = 0):
        self.spec = spec
        self.executor = executor
        self.address = (host, default_port() if port is None else port)
        self.timeout = timeout
        self.compress = compress
        self.raw_input_bytes = raw_input_bytes
        self.grid_step = grid_step
        self.seed = seed
        self.frames = 0
        self._sock: socket.socket | None = None
        self._config: tuple[float, int] | None = None
        self._schedule: PruningSchedule | None = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, *exc):
        self.close()

    def connect(self) -> None:
        try:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
        except OSError as exc:
            raise SessionError(f"cannot reach cloud at {self.address}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None
            self._config = None

    def configure(self, alpha: float, split_point: int) -> None:
        if self._config == (alpha, split_point):
            return
        self._schedule = build_schedule(self.spec, PruningPolicy(alpha, self.grid_step))
        cfg = ConfigPayload.for_decision(self.spec.name, split_point, alpha, self.compress)
        try:
            send_message(self._require_sock(), MsgType.CONFIG, cfg.encode())
            reply = read_message(self._sock)
        except (OSError, ProtocolError) as exc:
            raise SessionError(f"CONFIG failed: {exc}", self.frames) from exc
        if reply.msg_type is not MsgType.ACK:
            raise SessionError(f"expected ACK, got {reply.msg_type.name}", self.frames)
        self._config = (alpha, split_point)

    def _require_sock(self) -> socket.socket:
        if self._sock is None:
            raise SessionError("not connected", self.frames)
        return self._sock

    def input_payload(self) -> bytes:
        n = self.raw_input_bytes
        if n is None:
            n = self.spec.initial_tokens * self.spec.token_bytes
        return pseudo_tensor(n, self.seed)

    def run_frame(self, decision: Decision) -> FrameResult:
        s = decision.split_point
        n = self.spec.num_layers
        self.configure(decision.alpha, s)
        sched = self._schedule
        frame = self.frames
        t0 = time.perf_counter()
        device_samples = self.executor.run_layers([sched.tokens_at(l) for l in range(1, min(s, n) + 1)])
        if s >= 1:
            self.executor.pause(self.spec.device_overhead_ms)
        device_ms = (time.perf_counter() - t0) * 1000
        if s == n + 1:
            self.frames += 1
            e2e = (time.perf_counter() - t0) * 1000
            return FrameResult(frame, e2e, device_ms, 0.0, e2e - device_ms, 0, 0, 0.0, device_samples)

        if s == 0:
            payload = self.input_payload()
        else:
            payload = pseudo_tensor(sched.tokens_at(s) * self.spec.token_bytes, self.seed + s)
        c0 = time.perf_counter()
        wire = lzw.compress(payload) if self.compress else payload
        codec_ms = (time.perf_counter() - c0) * 1000
        try:
            sock = self._require_sock()
            send_message(sock, MsgType.TENSOR, wire)
            profile = read_message(sock)
            result = read_message(sock)
        except (OSError, ProtocolError) as exc:
            self.close()
            raise SessionError(f"transfer failed: {exc}", frame) from exc
        if profile.msg_type is not MsgType.PROFILE or result.msg_type is not MsgType.RESULT:
            raise SessionError(f"expected PROFILE+RESULT, got {profile.msg_type.name}+{result.msg_type.name}", frame)
        e2e = (time.perf_counter() - t0) * 1000
        cloud_ms, _ = decode_result(result.payload)
        cloud_samples = [LatencySample(t, ms) for t, ms in decode_profile(profile.payload)]
        self.frames += 1
        return FrameResult(frame, e2e, device_ms, cloud_ms, e2e - device_ms - cloud_ms - codec_ms,
                           len(payload), len(wire), codec_ms, device_samples, cloud_samples)


def device_run_frame(session: DeviceSession, decision: Decision) -> FrameResult:
    return session.run_frame(decision)


def measure_loopback_bandwidth(host: str = "127.0.0.1", nbytes: int = 4 << 20) -> float:
    """Rough TCP throughput in bits/s to a throwaway sink on ``host``."""
    srv = socket.create_server((host, 0))
    port = srv.getsockname()[1]

    def sink():
        conn, _ = srv.accept()
        with conn:
            got = 0
            while got < nbytes:
                chunk = conn.recv(1 << 20)
                if not chunk:
                    break
                got += len(chunk)
            conn.sendall(b"k")

    th = threading.Thread(target=sink, daemon=True)
    th.start()
    data = bytes(nbytes)
    with socket.create_connection((host, port)) as c:
        t0 = time.perf_counter()
        c.sendall(data)
        c.recv(1)
        dt = time.perf_counter() - t0
    th.join()
    srv.close()
    return nbytes * 8 / dt
