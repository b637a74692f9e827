"""Registration center: system setup, credential issuance, revocation.

The center signs identity commitments for users (com_u = z * h^beta, binding
the secret exponent and the biometric-derived key) and for service providers
(com_s = g^gamma together with H = h^gamma). It keeps no per-user state
beyond its signing key and the public revocation list, so a compromised
center cannot impersonate registered users.
"""

from __future__ import annotations

import os
import random
import struct
import threading
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import groups
from .errors import DecodeError, ParameterError, StorageError
from .mffe import (
    MffePublicParams,
    SketchPackage,
    mffe_gen,
    mffe_setup,
    sketch_from_bytes,
    sketch_to_bytes,
)

__all__ = [
    "SIGNATURE_SIZE",
    "ID_SIZE",
    "SystemParams",
    "RcState",
    "UserCredential",
    "UserDeviceRecord",
    "SpCredential",
    "RevocationList",
    "rc_setup",
    "register_user",
    "register_sp",
    "sign_blob",
    "verify_blob",
    "user_credential_message",
    "sp_credential_message",
    "params_to_bytes",
    "params_from_bytes",
    "user_credential_to_bytes",
    "user_credential_from_bytes",
    "sp_credential_to_bytes",
    "sp_credential_from_bytes",
    "device_record_to_bytes",
    "device_record_from_bytes",
    "rc_secret_to_bytes",
    "rc_secret_from_bytes",
    "sp_record_to_bytes",
    "sp_record_from_bytes",
]

SIGNATURE_SIZE = 64  # raw ECDSA (r, s), 32 bytes each
ID_SIZE = 8
_CURVE = ec.SECP256R1()
_CURVE_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_SIGHASH = ec.ECDSA(hashes.SHA256())
_FORMAT_VERSION = 1

# Domain-separation tags for the deterministic auxiliary generators.
H_TAG = b"mfake/h/v1"
A_TAG = b"mfake/a/v1"
B_TAG = b"mfake/b/v1"


@dataclass(frozen=True)
class SystemParams:
    """Public system parameters shared by every party.

    Carries the extractor parameters, the signature verification key, and
    the auxiliary generators: h for identity commitments, a and b for the
    nonce masking in the key exchange. h, a, b come from hashing fixed
    domain tags to the group, so no one knows their discrete logs.
    """

    group_id: str
    mffe_pp: MffePublicParams
    vk_bytes: bytes
    h: object
    a: object
    b: object

    @property
    def group(self) -> groups.PrimeOrderGroup:
        return self.mffe_pp.group

    @property
    def n(self) -> int:
        return self.mffe_pp.n

    @property
    def d(self) -> float:
        return self.mffe_pp.basis.d

    def verifying_key(self):
        return ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, self.vk_bytes)


@dataclass
class RcState:
    """Registration-center state: signing key plus an issuance counter.

    The counter is the only mutable piece; it is lock-protected so multiple
    registrations may run against one center concurrently.
    """

    signing_key: ec.EllipticCurvePrivateKey
    params: SystemParams
    issued: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def next_id(self) -> int:
        with self._lock:
            self.issued += 1
            return self.issued


@dataclass(frozen=True)
class UserCredential:
    uid: int
    com_u: object
    sigma_ru: bytes


@dataclass(frozen=True)
class UserDeviceRecord:
    """Everything stored on the user's device after registration."""

    alpha: int
    uid: int
    sketch: SketchPackage
    credential: UserCredential


@dataclass(frozen=True)
class SpCredential:
    sid: int
    com_s: object
    h_gamma: object
    sigma_rs: bytes


def sign_blob(signing_key: ec.EllipticCurvePrivateKey, message: bytes) -> bytes:
    r, s = decode_dss_signature(signing_key.sign(message, _SIGHASH))
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def verify_blob(vk_bytes: bytes, message: bytes, signature: bytes) -> bool:
    if len(signature) != SIGNATURE_SIZE:
        return False
    r = int.from_bytes(signature[:32], "big")
    s = int.from_bytes(signature[32:], "big")
    try:
        vk = ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, vk_bytes)
        vk.verify(encode_dss_signature(r, s), message, _SIGHASH)
        return True
    except (InvalidSignature, ValueError):
        return False


def user_credential_message(group: groups.PrimeOrderGroup, uid: int, com_u) -> bytes:
    return uid.to_bytes(ID_SIZE, "big") + group.encode(com_u)


def sp_credential_message(group: groups.PrimeOrderGroup, sid: int, com_s, h_gamma) -> bytes:
    return sid.to_bytes(ID_SIZE, "big") + group.encode(com_s) + group.encode(h_gamma)


def rc_setup(
    n: int,
    d: float,
    group_id: str = "bls12-381",
    rng: random.Random | None = None,
) -> RcState:
    """Generate a fresh center: signing keypair plus public parameters."""
    rng = rng or random.SystemRandom()
    mffe_pp = mffe_setup(n, d, group_id)
    group = mffe_pp.group

    h = group.hash_to_group(H_TAG)
    a = group.hash_to_group(A_TAG)
    b = group.hash_to_group(B_TAG)
    for elem in (h, a, b):
        group.precompute(elem)

    secret = 1 + groups.sample_scalar(_CURVE_ORDER - 1, rng)
    signing_key = ec.derive_private_key(secret, _CURVE)
    vk_bytes = signing_key.public_key().public_bytes(
        Encoding.X962, PublicFormat.CompressedPoint
    )
    params = SystemParams(
        group_id=group_id, mffe_pp=mffe_pp, vk_bytes=vk_bytes, h=h, a=a, b=b
    )
    return RcState(signing_key=signing_key, params=params)


def register_user(
    rc: RcState,
    identity: str,
    z,
    x0,
    rng: random.Random,
) -> tuple[UserCredential, SketchPackage]:
    """Issue a user credential; the real-world identity check and biometric
    capture are modeled as trusted inputs.

    Runs the extractor on (x0, z), commits com_u = z * h^beta, signs
    uid || com_u, and returns only what goes back to the user. The center
    retains nothing: the extracted key and sketch are dropped from scope.
    """
    params = rc.params
    group = params.group
    if not group.is_valid(z):
        raise ParameterError("invalid secret binding element")
    key, sketch = mffe_gen(params.mffe_pp, x0, z, rng)
    com_u = group.multiply(z, group.power(params.h, key.beta))
    uid = rc.next_id()
    sigma = sign_blob(rc.signing_key, user_credential_message(group, uid, com_u))
    return UserCredential(uid=uid, com_u=com_u, sigma_ru=sigma), sketch


def register_sp(rc: RcState, identity: str, com_s, h_gamma) -> SpCredential:
    """Issue a service-provider credential over the submitted pair; whether
    the two elements share an exponent is not checked (a malformed pair only
    breaks that provider's own sessions)."""
    group = rc.params.group
    if not (group.is_valid(com_s) and group.is_valid(h_gamma)):
        raise ParameterError("invalid service-provider elements")
    sid = rc.next_id()
    sigma = sign_blob(
        rc.signing_key, sp_credential_message(group, sid, com_s, h_gamma)
    )
    return SpCredential(sid=sid, com_s=com_s, h_gamma=h_gamma, sigma_rs=sigma)


class RevocationList:
    """Set of revoked commitment encodings, persisted as newline-delimited hex.

    Concurrent reads may share the instance; each revoke rewrites the file
    atomically (temp file + rename).
    """

    def __init__(self, path: str | os.PathLike | None = None, entries=()):
        self.path = os.fspath(path) if path is not None else None
        self.entries: set[bytes] = set(entries)

    @classmethod
    def load(cls, path) -> "RevocationList":
        entries = set()
        try:
            with open(path, "r", encoding="ascii") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        entries.add(bytes.fromhex(line))
        except FileNotFoundError:
            pass
        except OSError as exc:
            raise StorageError(f"cannot read revocation list: {exc}") from exc
        except ValueError as exc:
            raise DecodeError(f"corrupt revocation list: {exc}") from exc
        return cls(path=path, entries=entries)

    def revoke(self, com_u_bytes: bytes) -> None:
        self.entries.add(bytes(com_u_bytes))
        if self.path is not None:
            self._persist()

    def is_revoked(self, com_u_bytes: bytes) -> bool:
        return bytes(com_u_bytes) in self.entries

    def _persist(self) -> None:
        tmp = f"{self.path}.tmp"
        try:
            with open(tmp, "w", encoding="ascii") as fh:
                for entry in sorted(self.entries):
                    fh.write(entry.hex() + "\n")
            os.replace(tmp, self.path)
        except OSError as exc:
            raise StorageError(f"cannot persist revocation list: {exc}") from exc


# ---------------------------------------------------------------------------
# Serialization of public parameters, credentials, device records
# ---------------------------------------------------------------------------


def _header(kind: bytes) -> bytes:
    return kind + bytes([_FORMAT_VERSION])


def _check_header(data: bytes, kind: bytes, what: str) -> bytes:
    if len(data) < 5 or data[:4] != kind or data[4] != _FORMAT_VERSION:
        raise DecodeError(f"bad {what} header")
    return data[5:]


def params_to_bytes(params: SystemParams) -> bytes:
    gid = params.group_id.encode("ascii")
    group = params.group
    return b"".join([
        _header(b"MFPP"),
        bytes([len(gid)]), gid,
        struct.pack(">I", params.n),
        struct.pack("<d", params.d),
        bytes([len(params.vk_bytes)]), params.vk_bytes,
        group.encode(params.h),
        group.encode(params.a),
        group.encode(params.b),
    ])


def params_from_bytes(data: bytes) -> SystemParams:
    body = _check_header(data, b"MFPP", "system parameters")
    try:
        glen = body[0]
        gid = body[1:1 + glen].decode("ascii")
        offset = 1 + glen
        n = struct.unpack(">I", body[offset:offset + 4])[0]
        d = struct.unpack("<d", body[offset + 4:offset + 12])[0]
        offset += 12
        vklen = body[offset]
        offset += 1
        vk = body[offset:offset + vklen]
        offset += vklen
        group = groups.get_group(gid)
        esz = group.element_size
        h = group.decode(body[offset:offset + esz])
        a = group.decode(body[offset + esz:offset + 2 * esz])
        b = group.decode(body[offset + 2 * esz:offset + 3 * esz])
        if len(body) != offset + 3 * esz:
            raise DecodeError("trailing bytes in system parameters")
    except (IndexError, struct.error) as exc:
        raise DecodeError(f"truncated system parameters: {exc}") from exc
    mffe_pp = mffe_setup(n, d, gid)
    for elem in (h, a, b):
        group.precompute(elem)
    return SystemParams(group_id=gid, mffe_pp=mffe_pp, vk_bytes=vk, h=h, a=a, b=b)


def user_credential_to_bytes(cred: UserCredential, group) -> bytes:
    return b"".join([
        _header(b"MFUC"),
        cred.uid.to_bytes(ID_SIZE, "big"),
        group.encode(cred.com_u),
        cred.sigma_ru,
    ])


def user_credential_from_bytes(data: bytes, group) -> UserCredential:
    body = _check_header(data, b"MFUC", "user credential")
    esz = group.element_size
    if len(body) != ID_SIZE + esz + SIGNATURE_SIZE:
        raise DecodeError("user credential has wrong length")
    uid = int.from_bytes(body[:ID_SIZE], "big")
    com_u = group.decode(body[ID_SIZE:ID_SIZE + esz])
    return UserCredential(uid=uid, com_u=com_u, sigma_ru=body[ID_SIZE + esz:])


def sp_credential_to_bytes(cred: SpCredential, group) -> bytes:
    return b"".join([
        _header(b"MFSC"),
        cred.sid.to_bytes(ID_SIZE, "big"),
        group.encode(cred.com_s),
        group.encode(cred.h_gamma),
        cred.sigma_rs,
    ])


def sp_credential_from_bytes(data: bytes, group) -> SpCredential:
    body = _check_header(data, b"MFSC", "service-provider credential")
    esz = group.element_size
    if len(body) != ID_SIZE + 2 * esz + SIGNATURE_SIZE:
        raise DecodeError("service-provider credential has wrong length")
    sid = int.from_bytes(body[:ID_SIZE], "big")
    com_s = group.decode(body[ID_SIZE:ID_SIZE + esz])
    h_gamma = group.decode(body[ID_SIZE + esz:ID_SIZE + 2 * esz])
    return SpCredential(
        sid=sid, com_s=com_s, h_gamma=h_gamma, sigma_rs=body[ID_SIZE + 2 * esz:]
    )


def rc_secret_to_bytes(rc: RcState) -> bytes:
    secret = rc.signing_key.private_numbers().private_value
    return b"".join([
        _header(b"MFRS"),
        secret.to_bytes(32, "big"),
        struct.pack(">Q", rc.issued),
    ])


def rc_secret_from_bytes(data: bytes, params: SystemParams) -> RcState:
    body = _check_header(data, b"MFRS", "center secret")
    if len(body) != 40:
        raise DecodeError("center secret has wrong length")
    secret = int.from_bytes(body[:32], "big")
    issued = struct.unpack(">Q", body[32:])[0]
    signing_key = ec.derive_private_key(secret, _CURVE)
    vk = signing_key.public_key().public_bytes(Encoding.X962, PublicFormat.CompressedPoint)
    if vk != params.vk_bytes:
        raise DecodeError("center secret does not match the public parameters")
    return RcState(signing_key=signing_key, params=params, issued=issued)


def sp_record_to_bytes(gamma: int, cred: SpCredential, group) -> bytes:
    return b"".join([
        _header(b"MFSR"),
        groups.scalar_to_bytes(gamma),
        sp_credential_to_bytes(cred, group),
    ])


def sp_record_from_bytes(data: bytes, group) -> tuple[int, SpCredential]:
    body = _check_header(data, b"MFSR", "service-provider record")
    gamma = groups.scalar_from_bytes(body[:32])
    return gamma, sp_credential_from_bytes(body[32:], group)


def device_record_to_bytes(record: UserDeviceRecord, group) -> bytes:
    sketch_blob = sketch_to_bytes(record.sketch, group)
    cred_blob = user_credential_to_bytes(record.credential, group)
    return b"".join([
        _header(b"MFUD"),
        groups.scalar_to_bytes(record.alpha),
        record.uid.to_bytes(ID_SIZE, "big"),
        struct.pack(">I", len(sketch_blob)), sketch_blob,
        cred_blob,
    ])


def device_record_from_bytes(data: bytes, group) -> UserDeviceRecord:
    body = _check_header(data, b"MFUD", "device record")
    try:
        alpha = groups.scalar_from_bytes(body[:32])
        uid = int.from_bytes(body[32:40], "big")
        slen = struct.unpack(">I", body[40:44])[0]
        sketch = sketch_from_bytes(body[44:44 + slen], group)
        credential = user_credential_from_bytes(body[44 + slen:], group)
    except (IndexError, struct.error) as exc:
        raise DecodeError(f"truncated device record: {exc}") from exc
    return UserDeviceRecord(alpha=alpha, uid=uid, sketch=sketch, credential=credential)
