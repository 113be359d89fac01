"""Length-prefixed binary framing between the device agent and cloud server.

Frame: ``b"JNS1"`` | type (u8) | payload length (u32, big-endian) | payload.
Payload layouts for each message type are in docs/wire-format.md.
"""
from __future__ import annotations

import enum
import socket
import struct
from dataclasses import dataclass

from ..errors import ProtocolError

MAGIC = b"JNS1"
HEADER = struct.Struct(">4sBI")
HEADER_SIZE = HEADER.size  # 9
MAX_PAYLOAD = 256 * 1024 * 1024

FLAG_COMPRESSED = 0x01


class MsgType(enum.IntEnum):
    CONFIG = 1
    TENSOR = 2
    RESULT = 3
    PROFILE = 4
    ACK = 5


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    payload: bytes = b""


def encode_message(msg: WireMessage) -> bytes:
    return HEADER.pack(MAGIC, int(msg.msg_type), len(msg.payload)) + msg.payload


def _parse_header(header: bytes) -> tuple[MsgType, int]:
    if len(header) < HEADER_SIZE:
        raise ProtocolError(f"truncated header ({len(header)} of {HEADER_SIZE} bytes)")
    magic, mtype, length = HEADER.unpack(header[:HEADER_SIZE])
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    try:
        mtype = MsgType(mtype)
    except ValueError:
        raise ProtocolError(f"unknown message type {mtype}") from None
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload too large ({length} bytes)")
    return mtype, length


def decode_message(data: bytes) -> WireMessage:
    mtype, length = _parse_header(data)
    payload = data[HEADER_SIZE:]
    if len(payload) != length:
        raise ProtocolError(f"length mismatch: header says {length}, got {len(payload)}")
    return WireMessage(mtype, bytes(payload))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            raise ConnectionError(f"peer closed after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


def read_message(sock: socket.socket) -> WireMessage:
    mtype, length = _parse_header(_recv_exact(sock, HEADER_SIZE))
    return WireMessage(mtype, _recv_exact(sock, length))


def send_message(sock: socket.socket, msg_type: MsgType, payload: bytes = b"") -> None:
    sock.sendall(encode_message(WireMessage(msg_type, payload)))


# CONFIG: model_id (u16 length + utf-8) | split (u16) | alpha_milli (u16) | flags (u8)
_CONFIG_TAIL = struct.Struct(">HHB")


@dataclass(frozen=True)
class ConfigPayload:
    model_id: str
    split_point: int
    alpha_milli: int
    flags: int = 0

    @property
    def alpha(self) -> float:
        return self.alpha_milli / 1000

    @property
    def compressed(self) -> bool:
        return bool(self.flags & FLAG_COMPRESSED)

    @classmethod
    def for_decision(cls, model_id: str, split_point: int, alpha: float, compressed: bool = True):
        return cls(model_id, split_point, int(round(alpha * 1000)), FLAG_COMPRESSED if compressed else 0)

    def encode(self) -> bytes:
        name = self.model_id.encode("utf-8")
        if len(name) > 0xFFFF:
            raise ProtocolError("model_id too long")
        return struct.pack(">H", len(name)) + name + _CONFIG_TAIL.pack(
            self.split_point, self.alpha_milli, self.flags)

    @classmethod
    def decode(cls, payload: bytes) -> "ConfigPayload":
        if len(payload) < 2:
            raise ProtocolError("CONFIG payload truncated")
        (n,) = struct.unpack_from(">H", payload)
        if len(payload) != 2 + n + _CONFIG_TAIL.size:
            raise ProtocolError("CONFIG payload length mismatch")
        try:
            name = payload[2:2 + n].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"CONFIG model_id not utf-8: {exc}") from None
        split, alpha_milli, flags = _CONFIG_TAIL.unpack_from(payload, 2 + n)
        return cls(name, split, alpha_milli, flags)


# RESULT: cloud compute ms (f64) | placeholder inference output
def encode_result(cloud_ms: float, output: bytes) -> bytes:
    return struct.pack(">d", cloud_ms) + output


def decode_result(payload: bytes) -> tuple[float, bytes]:
    if len(payload) < 8:
        raise ProtocolError("RESULT payload truncated")
    return struct.unpack_from(">d", payload)[0], payload[8:]


# PROFILE: count (u32) | count x (tokens u32, latency_ms f64)
_SAMPLE = struct.Struct(">Id")


def encode_profile(samples) -> bytes:
    samples = list(samples)
    return struct.pack(">I", len(samples)) + b"".join(
        _SAMPLE.pack(int(t), float(ms)) for t, ms in samples)


def decode_profile(payload: bytes) -> list[tuple[int, float]]:
    if len(payload) < 4:
        raise ProtocolError("PROFILE payload truncated")
    (count,) = struct.unpack_from(">I", payload)
    if len(payload) != 4 + count * _SAMPLE.size:
        raise ProtocolError("PROFILE payload length mismatch")
    return [_SAMPLE.unpack_from(payload, 4 + i * _SAMPLE.size) for i in range(count)]
