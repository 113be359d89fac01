"""Cloud half of the split runtime: a threaded TCP server.

Per connection the sequence is CONFIG -> ACK, then any number of TENSOR
frames (each answered with PROFILE + RESULT) and optional re-CONFIGs.
A protocol violation closes only the offending connection.
"""
from __future__ import annotations

import logging
import os
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import Mapping

from ..errors import CodecError, ProtocolError, ScheduleError
from ..model import ModelSpec
from ..profiling import LatencyModel
from ..pruning import PruningPolicy, PruningSchedule, build_schedule
from . import lzw
from .executor import SyntheticExecutor
from .wire import (ConfigPayload, MsgType, encode_profile, encode_result, read_message,
                   send_message)

log = logging.getLogger(__name__)

DEFAULT_PORT = 7431
PORT_ENV = "VITSPLIT_PORT"


def default_port() -> int:
    return int(os.environ.get(PORT_ENV, DEFAULT_PORT))


@dataclass
class _Session:
    spec: ModelSpec
    config: ConfigPayload
    schedule: PruningSchedule


class _Handler(socketserver.BaseRequestHandler):
    server: "CloudServer"

    def handle(self):
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        peer = self.client_address
        executor = self.server.new_executor()
        session = None
        frames = 0
        while True:
            try:
                msg = read_message(sock)
            except ConnectionError:
                return
            except ProtocolError as exc:
                self.server.record_violation(peer, str(exc))
                return
            try:
                if msg.msg_type is MsgType.CONFIG:
                    session = self.server.open_session(ConfigPayload.decode(msg.payload))
                    send_message(sock, MsgType.ACK)
                elif msg.msg_type is MsgType.TENSOR:
                    if session is None:
                        raise ProtocolError("TENSOR before CONFIG")
                    self._serve_tensor(sock, session, msg.payload, executor)
                    frames += 1
                else:
                    raise ProtocolError(f"unexpected {msg.msg_type.name} from device")
            except ProtocolError as exc:
                self.server.record_violation(peer, f"after {frames} frames: {exc}")
                return
            except OSError:
                return

    def _serve_tensor(self, sock, session: _Session, payload: bytes, executor: SyntheticExecutor):
        spec, cfg = session.spec, session.config
        n = spec.num_layers
        s = cfg.split_point
        if s == n + 1:
            raise ProtocolError("TENSOR received for a device-only split")
        t0 = time.perf_counter()  # decompression counts as cloud time
        if cfg.compressed:
            try:
                payload = lzw.decompress(payload)
            except CodecError as exc:
                raise ProtocolError(f"bad TENSOR payload: {exc}") from None
        if s >= 1:
            expected = session.schedule.tokens_at(s) * spec.token_bytes
            if len(payload) != expected:
                raise ProtocolError(f"TENSOR carries {len(payload)} bytes, expected {expected}")
        samples = executor.run_layers([session.schedule.tokens_at(l) for l in range(s + 1, n + 1)])
        executor.pause(spec.cloud_overhead_ms)
        cloud_ms = (time.perf_counter() - t0) * 1000
        with self.server._lock:
            self.server.frames_served += 1
        send_message(sock, MsgType.PROFILE, encode_profile((x.tokens, x.latency_ms) for x in samples))
        send_message(sock, MsgType.RESULT, encode_result(cloud_ms, bytes(spec.result_payload_bytes)))


class CloudServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, registry: Mapping[str, ModelSpec], model: LatencyModel,
                 jitter_frac: float = 0.0, seed: int = 0, grid_step: float = 0.01):
        super().__init__(address, _Handler)
        self.registry = dict(registry)
        self.model = model
        self.jitter_frac = jitter_frac
        self.seed = seed
        self.grid_step = grid_step
        self.violations: list[str] = []
        self.frames_served = 0
        self._lock = threading.Lock()
        self._sessions = 0

    @property
    def port(self) -> int:
        return self.server_address[1]

    def new_executor(self) -> SyntheticExecutor:
        with self._lock:
            self._sessions += 1
            seed = self.seed + self._sessions
        return SyntheticExecutor(self.model, self.jitter_frac, seed)

    def record_violation(self, peer, reason: str) -> None:
        log.warning("closing %s: %s", peer, reason)
        with self._lock:
            self.violations.append(reason)

    def open_session(self, cfg: ConfigPayload) -> _Session:
        spec = self.registry.get(cfg.model_id)
        if spec is None:
            raise ProtocolError(f"unknown model {cfg.model_id!r}")
        if cfg.split_point > spec.num_layers + 1:
            raise ProtocolError(f"split {cfg.split_point} beyond {spec.num_layers + 1}")
        try:
            sched = build_schedule(spec, PruningPolicy(cfg.alpha, self.grid_step))
        except (ValueError, ScheduleError) as exc:
            raise ProtocolError(f"bad declining rate {cfg.alpha}: {exc}") from None
        return _Session(spec, cfg, sched)


def cloud_serve(registry: Mapping[str, ModelSpec], model: LatencyModel, host: str = "0.0.0.0",
                port: int | None = None, jitter_frac: float = 0.0, seed: int = 0) -> None:
    """Serve until interrupted."""
    port = default_port() if port is None else port
    with CloudServer((host, port), registry, model, jitter_frac, seed) as server:
        log.info("cloud server listening on %s:%d", host, server.port)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            log.info("shutting down")
