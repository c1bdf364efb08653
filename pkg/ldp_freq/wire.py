"""Little-endian wire forms of every client message.

pg          u32 point
hpg         u16 block, u32 point
pirappor    t+1 x u16: the digits of a, then b
ss          u32 count, then count x u32 item
pg-pub      u16 field element
hpg-pub     u16 block, u16 field element
"""

import struct
from typing import List, Sequence, Tuple

from .errors import IndexOutOfRange, MalformedMessage
from .mechanisms.hpg import HpgMessage
from .mechanisms.pirappor import PiRapporMessage

U16 = struct.Struct("<H")
U32 = struct.Struct("<I")
HPG = struct.Struct("<HI")
HPG_PUB = struct.Struct("<HH")


def _check(value: int, bound: int, what: str):
    if not 0 <= value < bound:
        raise IndexOutOfRange(f"{what} {value} outside [0, {bound})")


def _unpack(layout: struct.Struct, data: bytes) -> Tuple[int, ...]:
    if len(data) != layout.size:
        raise MalformedMessage(f"Expected {layout.size} bytes, got {len(data)}")
    return layout.unpack(data)


def pack_point(point: int, universe: int) -> bytes:
    if universe > 2**32:
        raise IndexOutOfRange(f"Universe of {universe} points does not fit in 32 bits")
    _check(point, universe, "Point")
    return U32.pack(point)


def unpack_point(data: bytes, universe: int) -> int:
    (point,) = _unpack(U32, data)
    _check(point, universe, "Point")
    return point


def pack_hpg(message: HpgMessage, h: int, b: int) -> bytes:
    _check(message.block, min(h, 2**16), "Block")
    _check(message.point, min(b, 2**32), "Point")
    return HPG.pack(message.block, message.point)


def unpack_hpg(data: bytes, h: int, b: int) -> HpgMessage:
    block, point = _unpack(HPG, data)
    _check(block, h, "Block")
    _check(point, b, "Point")
    return HpgMessage(block, point)


def pack_pirappor(message: PiRapporMessage, q: int) -> bytes:
    for x in (*message.a, message.b):
        _check(x, min(q, 2**16), "Field element")
    return struct.pack(f"<{len(message.a) + 1}H", *message.a, message.b)


def unpack_pirappor(data: bytes, q: int, t: int) -> PiRapporMessage:
    if len(data) != 2 * (t + 1):
        raise MalformedMessage(f"Expected {2 * (t + 1)} bytes, got {len(data)}")
    values = struct.unpack(f"<{t + 1}H", data)
    for x in values:
        _check(x, q, "Field element")
    return PiRapporMessage(tuple(values[:-1]), values[-1])


def pack_subset(items: Sequence[int], k: int) -> bytes:
    for item in items:
        _check(item, min(k, 2**32), "Item")
    return U32.pack(len(items)) + struct.pack(f"<{len(items)}I", *items)


def unpack_subset(data: bytes, k: int) -> List[int]:
    if len(data) < U32.size:
        raise MalformedMessage("Missing item count")
    (count,) = U32.unpack_from(data)
    if len(data) != U32.size * (count + 1):
        raise MalformedMessage(f"Expected {count} items, got {len(data) - U32.size} bytes")
    items = list(struct.unpack_from(f"<{count}I", data, U32.size))
    for item in items:
        _check(item, k, "Item")
    return items


def pack_field_element(a: int, q: int) -> bytes:
    _check(a, min(q, 2**16), "Field element")
    return U16.pack(a)


def unpack_field_element(data: bytes, q: int) -> int:
    (a,) = _unpack(U16, data)
    _check(a, q, "Field element")
    return a


def pack_hpg_pub(j: int, a: int, h: int, q: int) -> bytes:
    _check(j, min(h, 2**16), "Block")
    _check(a, min(q, 2**16), "Field element")
    return HPG_PUB.pack(j, a)


def unpack_hpg_pub(data: bytes, h: int, q: int) -> Tuple[int, int]:
    j, a = _unpack(HPG_PUB, data)
    _check(j, h, "Block")
    _check(a, q, "Field element")
    return j, a
