import random

import pytest
from hypothesis import given, settings, strategies as st

from vitsplit.errors import CodecError
from vitsplit.runtime.executor import pseudo_tensor
from vitsplit.runtime.lzw import CLEAR, STOP, compress, decompress, width_for


def pack(codes_and_widths):
    acc, n = 0, 0
    for code, w in codes_and_widths:
        acc = (acc << w) | code
        n += w
    pad = -n % 8
    return (acc << pad).to_bytes((n + pad) // 8, "big")


def test_empty_input_is_stop_only():
    assert compress(b"") == bytes.fromhex("8080")
    assert decompress(compress(b"")) == b""


def test_single_byte_vector():
    # 'A' at 9 bits, then STOP at 9 bits
    assert compress(b"A") == pack([(65, 9), (STOP, 9)])


@pytest.mark.parametrize("data", [b"a", b"aa", b"aaa", b"aaaa", b"abababab", b"ABABABA",
                                  b"TOBEORNOTTOBEORTOBEORNOT", bytes(range(256)) * 3])
def test_round_trip_vectors(data):
    assert decompress(compress(data)) == data


def test_kwkwk_code_is_emitted_and_decoded():
    # "aaa" makes the encoder emit code 258 before the decoder has defined it
    stream = compress(b"aaa")
    assert stream == pack([(97, 9), (258, 9), (STOP, 9)])
    assert decompress(stream) == b"aaa"


@pytest.mark.parametrize("code, expected", [(258, 9), (512, 9), (513, 10), (1025, 11),
                                            (65536, 16), (70000, 16)])
def test_width_for(code, expected):
    assert width_for(code) == expected


def test_repeated_bytes_compress_well():
    data = bytes(64 * 1024)
    out = compress(data)
    assert len(out) / len(data) < 0.05
    assert decompress(out) == data


def test_table_reset_on_large_random_input():
    rng = random.Random(5)
    data = rng.randbytes(160_000)  # far more than 65278 new entries
    assert decompress(compress(data)) == data


def test_explicit_clear_in_stream():
    assert decompress(pack([(65, 9), (CLEAR, 9), (66, 9), (STOP, 9)])) == b"AB"


def test_pseudo_tensor_round_trip_and_shrinks():
    data = pseudo_tensor(577 * 4096, seed=3)
    out = compress(data)
    assert len(out) < len(data)
    assert decompress(out) == data


@pytest.mark.parametrize("stream", [
    b"",                                  # no STOP
    compress(b"hello")[:-2],              # truncated
    pack([(300, 9), (STOP, 9)]),          # non-literal first code
    pack([(65, 9), (400, 9), (STOP, 9)]),  # code beyond the table
])
def test_corrupt_streams_raise(stream):
    with pytest.raises(CodecError):
        decompress(stream)


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=4096))
def test_round_trip_property(data):
    assert decompress(compress(data)) == data


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([b"ab", b"abc", b"\x00", b"\xff\xfe"]), max_size=800))
def test_round_trip_low_entropy(parts):
    data = b"".join(parts)
    assert decompress(compress(data)) == data


@pytest.mark.parametrize("data, hexed", [(b"", "8080"), (b"A", "20c040"), (b"aaa", "30c0a020")])
def test_documented_vectors(data, hexed):
    assert compress(data).hex() == hexed
