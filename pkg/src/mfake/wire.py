"""Binary wire format for the four key-exchange messages.

Framing is 1 byte of message type plus a 2-byte big-endian payload length;
payload fields appear in protocol order with group elements compressed,
scalars 32-byte big-endian, identifiers 8-byte big-endian. The byte-size
accounting functions cover payloads only (framing is transport overhead).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import groups
from .errors import DecodeError
from .pki import ID_SIZE, SIGNATURE_SIZE

__all__ = [
    "Mu1",
    "Ms1",
    "Mu2",
    "Ms2",
    "WireMessage",
    "encode",
    "decode",
    "payload_sizes",
    "mutual_auth_bytes",
    "unilateral_auth_bytes",
]

TYPE_MU1 = 0x01
TYPE_MS1 = 0x02
TYPE_MU2 = 0x03
TYPE_MS2 = 0x04

HEADER_SIZE = 3


@dataclass(frozen=True)
class Mu1:
    """User hello: credential only, so it carries no per-session randomness."""

    uid: int
    com_u: object
    sigma_ru: bytes


@dataclass(frozen=True)
class Ms1:
    """Provider reply: credential plus the masked nonce commitment S."""

    sid: int
    com_s: object
    h_gamma: object
    sigma_rs: bytes
    s_elem: object


@dataclass(frozen=True)
class Mu2:
    """User response: masked nonce commitment U and the user's auth tag."""

    u_elem: object
    auth_u: int


@dataclass(frozen=True)
class Ms2:
    """Provider confirmation tag."""

    auth_s: int


WireMessage = Mu1 | Ms1 | Mu2 | Ms2

_TYPE_OF = {Mu1: TYPE_MU1, Ms1: TYPE_MS1, Mu2: TYPE_MU2, Ms2: TYPE_MS2}


def _scalar_field(value: int, q: int) -> bytes:
    if not 0 <= value < q:
        raise DecodeError(f"scalar {value} outside [0, q)")
    return groups.scalar_to_bytes(value)


def _parse_scalar(data: bytes, q: int) -> int:
    value = groups.scalar_from_bytes(data)
    if value >= q:
        raise DecodeError("non-canonical scalar encoding")
    return value


def encode(msg: WireMessage, group: groups.PrimeOrderGroup) -> bytes:
    """Serialize a message with its transport header."""
    q = group.order
    if isinstance(msg, Mu1):
        payload = msg.uid.to_bytes(ID_SIZE, "big") + group.encode(msg.com_u) + msg.sigma_ru
    elif isinstance(msg, Ms1):
        payload = (
            msg.sid.to_bytes(ID_SIZE, "big")
            + group.encode(msg.com_s)
            + group.encode(msg.h_gamma)
            + msg.sigma_rs
            + group.encode(msg.s_elem)
        )
    elif isinstance(msg, Mu2):
        payload = group.encode(msg.u_elem) + _scalar_field(msg.auth_u, q)
    elif isinstance(msg, Ms2):
        payload = _scalar_field(msg.auth_s, q)
    else:
        raise DecodeError(f"not a wire message: {type(msg).__name__}")
    return struct.pack(">BH", _TYPE_OF[type(msg)], len(payload)) + payload


def payload_sizes(group: groups.PrimeOrderGroup) -> dict:
    """Exact payload byte counts per message type for this group's encoding."""
    e = group.element_size
    return {
        TYPE_MU1: ID_SIZE + e + SIGNATURE_SIZE,
        TYPE_MS1: ID_SIZE + 3 * e + SIGNATURE_SIZE,
        TYPE_MU2: e + groups.SCALAR_BYTES,
        TYPE_MS2: groups.SCALAR_BYTES,
    }


def decode(data: bytes, group: groups.PrimeOrderGroup) -> WireMessage:
    """Parse one framed message; any structural defect raises DecodeError."""
    if len(data) < HEADER_SIZE:
        raise DecodeError("message shorter than header")
    mtype, plen = struct.unpack(">BH", data[:HEADER_SIZE])
    payload = data[HEADER_SIZE:]
    if len(payload) != plen:
        raise DecodeError(f"length field says {plen}, payload has {len(payload)} bytes")
    sizes = payload_sizes(group)
    if mtype not in sizes:
        raise DecodeError(f"unknown message type 0x{mtype:02x}")
    if plen != sizes[mtype]:
        raise DecodeError(
            f"message type 0x{mtype:02x} must have {sizes[mtype]} payload bytes, got {plen}"
        )
    e = group.element_size
    q = group.order
    if mtype == TYPE_MU1:
        uid = int.from_bytes(payload[:ID_SIZE], "big")
        com_u = group.decode(payload[ID_SIZE:ID_SIZE + e])
        return Mu1(uid=uid, com_u=com_u, sigma_ru=payload[ID_SIZE + e:])
    if mtype == TYPE_MS1:
        sid = int.from_bytes(payload[:ID_SIZE], "big")
        off = ID_SIZE
        com_s = group.decode(payload[off:off + e])
        h_gamma = group.decode(payload[off + e:off + 2 * e])
        off += 2 * e
        sigma = payload[off:off + SIGNATURE_SIZE]
        s_elem = group.decode(payload[off + SIGNATURE_SIZE:])
        return Ms1(sid=sid, com_s=com_s, h_gamma=h_gamma, sigma_rs=sigma, s_elem=s_elem)
    if mtype == TYPE_MU2:
        u_elem = group.decode(payload[:e])
        return Mu2(u_elem=u_elem, auth_u=_parse_scalar(payload[e:], q))
    return Ms2(auth_s=_parse_scalar(payload, q))


def mutual_auth_bytes(
    element_bits: int = 384,
    scalar_bits: int = 256,
    signature_bits: int = 512,
    id_bits: int = 64,
) -> int:
    """Total payload bytes of the four-message mutual exchange:
    five group elements, two scalars, two signatures, two identifiers."""
    return (5 * element_bits + 2 * scalar_bits + 2 * signature_bits + 2 * id_bits) // 8


def unilateral_auth_bytes(
    element_bits: int = 384,
    scalar_bits: int = 256,
    signature_bits: int = 512,
    id_bits: int = 64,
) -> int:
    """Accounting for the client-only-authentication variant (one signature,
    tag, and identifier saved); the variant is not executed, only sized."""
    return (5 * element_bits + scalar_bits + signature_bits + id_bits) // 8
