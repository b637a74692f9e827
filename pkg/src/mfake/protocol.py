"""Four-message mutually-authenticated key exchange, one state machine per role.

Both parties first derive the long-term secret Z from their credentials
(user: hash of com_s^alpha * H^beta; provider: hash of com_u^gamma — equal
for honest parties by the commitment algebra). Z then masks fresh
Diffie-Hellman nonce commitments S and U against the public constants a and
b, and authenticator tags over the shared transcript confirm both sides
before either accepts the session key.

State transitions:

    user:  init -> awaiting-peer --ms1--> confirmed --ms2--> accepted
    sp:    (fresh) --mu1--> awaiting-peer --mu2--> accepted

Any verification failure lands in the terminal aborted phase, which zeroizes
nonce, Z, and Diffie-Hellman material and never exposes a session key.
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass

from . import groups
from .errors import ParameterError, ProtocolStateError
from .mffe import SketchPackage, mffe_rep
from .pki import (
    RevocationList,
    SpCredential,
    SystemParams,
    UserDeviceRecord,
    sp_credential_message,
    user_credential_message,
    verify_blob,
)
from .wire import Ms1, Ms2, Mu1, Mu2

__all__ = [
    "Phase",
    "Role",
    "LongTermSecret",
    "AkeConstants",
    "SessionState",
    "ake_constants",
    "derive_z_user",
    "derive_z_sp",
    "user_init",
    "user_on_ms1",
    "sp_on_mu1",
    "sp_on_mu2",
    "user_on_ms2",
]

SESSION_KEY_SIZE = 32

DOMAIN_USER_TAG = b"\x01"
DOMAIN_SP_TAG = b"\x02"


class Phase(enum.Enum):
    INIT = "init"
    AWAITING_PEER = "awaiting-peer"
    CONFIRMED = "confirmed"
    ACCEPTED = "accepted"
    ABORTED = "aborted"


class Role(enum.Enum):
    USER = "user"
    SP = "service-provider"


@dataclass(frozen=True)
class LongTermSecret:
    """Hash of the credential Diffie-Hellman value, shared by both roles."""

    z_value: int


@dataclass(frozen=True)
class AkeConstants:
    """The two public masking elements; fixed by the system parameters."""

    a: object
    b: object


def ake_constants(params: SystemParams) -> AkeConstants:
    return AkeConstants(a=params.a, b=params.b)


@dataclass
class SessionState:
    """Per-party session record; key material present only when accepted."""

    role: Role
    phase: Phase = Phase.INIT
    own_nonce: int | None = None
    sid: int | None = None
    uid: int | None = None
    s_elem: object = None
    u_elem: object = None
    z: LongTermSecret | None = None
    dh: object = None
    session_key: bytes | None = None
    abort_reason: str | None = None

    def abort(self, reason: str) -> "SessionState":
        self.phase = Phase.ABORTED
        self.abort_reason = reason
        self.own_nonce = None
        self.z = None
        self.dh = None
        self.session_key = None
        return self

    def _require(self, phase: Phase, op: str) -> None:
        if self.phase is not phase:
            raise ProtocolStateError(
                f"{op} requires phase {phase.value}, session is {self.phase.value}"
            )


def derive_z_user(group, alpha: int, beta: int, com_s, h_gamma) -> LongTermSecret:
    """User-side long-term secret: hash of com_s^alpha * H^beta."""
    if not (group.is_valid(com_s) and group.is_valid(h_gamma)):
        raise ParameterError("invalid group element")
    value = group.multiply(group.power(com_s, alpha), group.power(h_gamma, beta))
    return LongTermSecret(z_value=group.hash_element_to_scalar(value))


def derive_z_sp(group, gamma: int, com_u) -> LongTermSecret:
    """Provider-side long-term secret: hash of com_u^gamma."""
    if not group.is_valid(com_u):
        raise ParameterError("invalid group element")
    return LongTermSecret(z_value=group.hash_element_to_scalar(group.power(com_u, gamma)))


def _transcript(group, sid: int, uid: int, s_elem, u_elem, dh) -> bytes:
    return (
        sid.to_bytes(8, "big")
        + uid.to_bytes(8, "big")
        + group.encode(s_elem)
        + group.encode(u_elem)
        + group.encode(dh)
    )


def _auth_tag(group, transcript: bytes, z: LongTermSecret, domain: bytes) -> int:
    data = transcript + groups.scalar_to_bytes(z.z_value) + domain
    return groups.hash_to_scalar(data, group.order)


def _session_key(transcript: bytes) -> bytes:
    return hashlib.sha3_256(transcript).digest()


def user_init(params: SystemParams, device: UserDeviceRecord) -> tuple[SessionState, Mu1]:
    """Start a user session by presenting the signed credential."""
    cred = device.credential
    state = SessionState(role=Role.USER, phase=Phase.AWAITING_PEER, uid=cred.uid)
    return state, Mu1(uid=cred.uid, com_u=cred.com_u, sigma_ru=cred.sigma_ru)


def user_on_ms1(
    params: SystemParams,
    state: SessionState,
    msg: Ms1,
    x1,
    alpha: int,
    sketch: SketchPackage,
    revocations: RevocationList,
    rng: random.Random,
) -> tuple[SessionState, Mu2 | None]:
    """Verify the provider credential, re-extract beta from the fresh reading,
    and answer with the masked nonce commitment and the user auth tag."""
    state._require(Phase.AWAITING_PEER, "user_on_ms1")
    group = params.group

    if not (
        group.is_valid(msg.com_s) and group.is_valid(msg.h_gamma) and group.is_valid(msg.s_elem)
    ):
        return state.abort("invalid group element in ms1"), None
    if revocations is not None and revocations.is_revoked(group.encode(msg.com_s)):
        return state.abort("peer credential revoked"), None
    signed = sp_credential_message(group, msg.sid, msg.com_s, msg.h_gamma)
    if not verify_blob(params.vk_bytes, signed, msg.sigma_rs):
        return state.abort("provider signature invalid"), None

    beta = mffe_rep(params.mffe_pp, x1, alpha, sketch).beta
    z = derive_z_user(group, alpha, beta, msg.com_s, msg.h_gamma)

    r_u = group.sample_scalar(rng)
    masked = group.multiply(msg.s_elem, group.inverse(group.power(params.a, z.z_value)))
    dh = group.power(masked, r_u)
    u_elem = group.multiply(
        group.power(group.generator(), r_u), group.power(params.b, z.z_value)
    )

    transcript = _transcript(group, msg.sid, state.uid, msg.s_elem, u_elem, dh)
    auth_u = _auth_tag(group, transcript, z, DOMAIN_USER_TAG)

    state.phase = Phase.CONFIRMED
    state.own_nonce = r_u
    state.sid = msg.sid
    state.s_elem = msg.s_elem
    state.u_elem = u_elem
    state.z = z
    state.dh = dh
    return state, Mu2(u_elem=u_elem, auth_u=auth_u)


def sp_on_mu1(
    params: SystemParams,
    gamma: int,
    sp_cred: SpCredential,
    msg: Mu1,
    revocations: RevocationList,
    rng: random.Random,
) -> tuple[SessionState, Ms1 | None]:
    """Check the user credential against the revocation list and signature,
    then reply with the provider credential and masked nonce commitment."""
    group = params.group
    state = SessionState(role=Role.SP, uid=msg.uid, sid=sp_cred.sid)

    # revocation is a plain set lookup and runs before any exponentiation
    # (including the subgroup validity check)
    try:
        encoding = group.encode(msg.com_u)
    except (TypeError, ValueError, AttributeError, OverflowError):
        return state.abort("invalid group element in mu1"), None
    if revocations is not None and revocations.is_revoked(encoding):
        return state.abort("user credential revoked"), None
    if not group.is_valid(msg.com_u):
        return state.abort("invalid group element in mu1"), None
    signed = user_credential_message(group, msg.uid, msg.com_u)
    if not verify_blob(params.vk_bytes, signed, msg.sigma_ru):
        return state.abort("user signature invalid"), None

    z = derive_z_sp(group, gamma, msg.com_u)
    r_s = group.sample_scalar(rng)
    s_elem = group.multiply(
        group.power(params.a, z.z_value), group.power(group.generator(), r_s)
    )

    state.phase = Phase.AWAITING_PEER
    state.own_nonce = r_s
    state.s_elem = s_elem
    state.z = z
    reply = Ms1(
        sid=sp_cred.sid,
        com_s=sp_cred.com_s,
        h_gamma=sp_cred.h_gamma,
        sigma_rs=sp_cred.sigma_rs,
        s_elem=s_elem,
    )
    return state, reply


def sp_on_mu2(
    params: SystemParams, state: SessionState, msg: Mu2
) -> tuple[SessionState, Ms2 | None]:
    """Unmask the user's commitment, check the user tag, and either accept
    (emitting the provider tag) or abort."""
    state._require(Phase.AWAITING_PEER, "sp_on_mu2")
    group = params.group

    if not group.is_valid(msg.u_elem):
        return state.abort("invalid group element in mu2"), None

    z = state.z
    masked = group.multiply(msg.u_elem, group.inverse(group.power(params.b, z.z_value)))
    dh = group.power(masked, state.own_nonce)
    transcript = _transcript(group, state.sid, state.uid, state.s_elem, msg.u_elem, dh)
    if msg.auth_u != _auth_tag(group, transcript, z, DOMAIN_USER_TAG):
        return state.abort("user auth tag mismatch"), None

    auth_s = _auth_tag(group, transcript, z, DOMAIN_SP_TAG)
    state.phase = Phase.ACCEPTED
    state.u_elem = msg.u_elem
    state.dh = dh
    state.session_key = _session_key(transcript)
    return state, Ms2(auth_s=auth_s)


def user_on_ms2(params: SystemParams, state: SessionState, msg: Ms2) -> SessionState:
    """Check the provider tag and accept, deriving the session key from the
    transcript the user already holds."""
    state._require(Phase.CONFIRMED, "user_on_ms2")
    group = params.group
    transcript = _transcript(
        group, state.sid, state.uid, state.s_elem, state.u_elem, state.dh
    )
    if msg.auth_s != _auth_tag(group, transcript, state.z, DOMAIN_SP_TAG):
        return state.abort("provider auth tag mismatch")
    state.phase = Phase.ACCEPTED
    state.session_key = _session_key(transcript)
    return state
