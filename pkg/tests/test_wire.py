import struct

import pytest
from hypothesis import given, strategies as st

from vitsplit.errors import ProtocolError
from vitsplit.runtime.wire import (HEADER_SIZE, ConfigPayload, MsgType, WireMessage, decode_message,
                                   decode_profile, decode_result, encode_message, encode_profile,
                                   encode_result)


def test_ack_is_bare_header():
    assert encode_message(WireMessage(MsgType.ACK)) == b"JNS1\x05\x00\x00\x00\x00"
    assert HEADER_SIZE == 9


@given(st.sampled_from(list(MsgType)), st.binary(max_size=2048))
def test_message_round_trip(mtype, payload):
    raw = encode_message(WireMessage(mtype, payload))
    assert len(raw) == HEADER_SIZE + len(payload)
    assert decode_message(raw) == WireMessage(mtype, payload)


@pytest.mark.parametrize("raw, match", [
    (b"JNS1\x05\x00", "truncated header"),
    (b"XXXX\x05\x00\x00\x00\x00", "bad magic"),
    (b"JNS1\x09\x00\x00\x00\x00", "unknown message type"),
    (b"JNS1\x02\x00\x00\x00\x04ab", "length mismatch"),
    (b"JNS1\x02\x00\x00\x00\x01ab", "length mismatch"),
])
def test_malformed_frames(raw, match):
    with pytest.raises(ProtocolError, match=match):
        decode_message(raw)


def test_config_layout():
    cfg = ConfigPayload.for_decision("vit-b", 5, 0.27)
    raw = cfg.encode()
    assert raw == b"\x00\x05vit-b" + struct.pack(">HHB", 5, 270, 1)
    back = ConfigPayload.decode(raw)
    assert back == cfg and back.alpha == 0.27 and back.compressed
    assert not ConfigPayload.for_decision("m", 0, 0.0, compressed=False).compressed


@pytest.mark.parametrize("raw", [b"\x00", b"\x00\x05vit", b"\x00\x02\xff\xfe\x00\x00\x00\x00\x00"])
def test_config_rejects_bad_payloads(raw):
    with pytest.raises(ProtocolError):
        ConfigPayload.decode(raw)


@given(st.text(max_size=40), st.integers(0, 0xFFFF), st.integers(0, 0xFFFF), st.integers(0, 255))
def test_config_round_trip(name, split, alpha, flags):
    cfg = ConfigPayload(name, split, alpha, flags)
    assert ConfigPayload.decode(cfg.encode()) == cfg


def test_result_and_profile_codecs():
    assert decode_result(encode_result(12.5, b"out")) == (12.5, b"out")
    with pytest.raises(ProtocolError):
        decode_result(b"1234")
    samples = [(577, 3.25), (292, 1.0)]
    raw = encode_profile(samples)
    assert len(raw) == 4 + 2 * 12
    assert decode_profile(raw) == samples
    with pytest.raises(ProtocolError):
        decode_profile(raw[:-1])
