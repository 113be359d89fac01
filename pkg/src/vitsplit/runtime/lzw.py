"""Byte-oriented LZW with variable-width codes.

Format (see docs/lzw-format.md):

* codes 0-255 are literal bytes, 256 is CLEAR, 257 is STOP, new entries
  start at 258;
* codes are packed most-significant-bit first, zero-padded to a byte;
* the width is the smallest of 9..16 bits that can hold every code the
  decoder might see next, i.e. ``width_for(next_code)``;
* when the table reaches 65536 entries the encoder emits CLEAR and both
  sides restart from 258 at 9 bits;
* the stream always ends with STOP. Before STOP the encoder counts one
  phantom entry, mirroring the decoder which is one entry ahead at that
  point.
"""
from __future__ import annotations

from ..errors import CodecError

CLEAR = 256
STOP = 257
FIRST_CODE = 258
MIN_WIDTH = 9
MAX_WIDTH = 16
TABLE_LIMIT = 1 << MAX_WIDTH


def width_for(next_code: int) -> int:
    return min(MAX_WIDTH, max(MIN_WIDTH, (next_code - 1).bit_length()))


def compress(data: bytes) -> bytes:
    out = bytearray()
    acc = 0
    nacc = 0
    width = MIN_WIDTH
    next_code = FIRST_CODE
    table: dict[int, int] = {}
    w = -1
    for c in data:
        if w < 0:
            w = c
            continue
        key = (w << 8) | c
        code = table.get(key)
        if code is not None:
            w = code
            continue
        acc = (acc << width) | w
        nacc += width
        while nacc >= 8:
            nacc -= 8
            out.append((acc >> nacc) & 0xFF)
        acc &= (1 << nacc) - 1
        table[key] = next_code
        next_code += 1
        if next_code == TABLE_LIMIT:
            acc = (acc << width) | CLEAR
            nacc += width
            while nacc >= 8:
                nacc -= 8
                out.append((acc >> nacc) & 0xFF)
            acc &= (1 << nacc) - 1
            table.clear()
            next_code = FIRST_CODE
            width = MIN_WIDTH
        elif next_code > (1 << width):
            width += 1
        w = c

    tail = []
    if w >= 0:
        tail.append((w, width))
        next_code += 1
        width = width_for(next_code)
    tail.append((STOP, width))
    for code, bits in tail:
        acc = (acc << bits) | code
        nacc += bits
        while nacc >= 8:
            nacc -= 8
            out.append((acc >> nacc) & 0xFF)
        acc &= (1 << nacc) - 1
    if nacc:
        out.append((acc << (8 - nacc)) & 0xFF)
    return bytes(out)


def _fresh_table() -> list:
    return [bytes((i,)) for i in range(256)] + [b"", b""]


def decompress(data: bytes) -> bytes:
    out = bytearray()
    table = _fresh_table()
    prev = None
    acc = 0
    nacc = 0
    idx = 0
    end = len(data)
    while True:
        width = width_for(len(table) + (prev is not None))
        while nacc < width:
            if idx >= end:
                raise CodecError(f"truncated stream at byte {idx}: no STOP code")
            acc = (acc << 8) | data[idx]
            idx += 1
            nacc += 8
        nacc -= width
        code = acc >> nacc
        acc &= (1 << nacc) - 1

        if code == CLEAR:
            table = _fresh_table()
            prev = None
            continue
        if code == STOP:
            return bytes(out)
        size = len(table)
        if prev is None:
            if code > 255:
                raise CodecError(f"code {code} cannot start a block")
            entry = table[code]
        else:
            if code < size:
                entry = table[code]
            elif code == size:
                entry = prev + prev[:1]
            else:
                raise CodecError(f"code {code} beyond table size {size}")
            if size >= TABLE_LIMIT:
                raise CodecError("table overflow without CLEAR")
            table.append(prev + entry[:1])
        out += entry
        prev = entry
