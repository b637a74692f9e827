"""Session runner: drives the four-message exchange over a byte transport,
optionally through an adversarial interceptor.

The interceptor owns the wire between the parties; it can pass, drop, flip,
replace, or replay any of the four messages by index. Outcomes report both
parties' terminal phases and keys so tests can assert that tampering never
leaves two accepted parties (or any exposed key) behind.
"""

from __future__ import annotations

import random
import socket
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import DecodeError, MfakeError
from .pki import RevocationList, SpCredential, SystemParams, UserDeviceRecord
from .protocol import (
    Phase,
    Role,
    SessionState,
    sp_on_mu1,
    sp_on_mu2,
    user_init,
    user_on_ms1,
    user_on_ms2,
)
from .wire import HEADER_SIZE, Ms1, Ms2, Mu1, Mu2, decode, encode

__all__ = [
    "UserInputs",
    "SpInputs",
    "SessionOutcome",
    "Drop",
    "FlipByte",
    "Replace",
    "Replay",
    "Interceptor",
    "UserAgent",
    "SpAgent",
    "run_session",
    "serve_session",
    "connect_session",
    "TamperRecord",
    "tamper_all_bytes",
    "tamper_random_flips",
    "fingerprint",
]

SOCKET_TIMEOUT = 5.0


@dataclass
class UserInputs:
    device: UserDeviceRecord
    reading: np.ndarray
    rng: random.Random
    revocations: RevocationList | None = None


@dataclass
class SpInputs:
    gamma: int
    credential: SpCredential
    revocations: RevocationList
    rng: random.Random


@dataclass(frozen=True)
class SessionOutcome:
    """Terminal picture of one run; keys are present only for accepted sides."""

    user_phase: Phase | None
    sp_phase: Phase | None
    user_key: bytes | None
    sp_key: bytes | None
    user_abort_reason: str | None = None
    sp_abort_reason: str | None = None
    error: str | None = None

    @property
    def accepted(self) -> bool:
        return (
            self.user_phase is Phase.ACCEPTED
            and self.sp_phase is Phase.ACCEPTED
            and self.user_key is not None
            and self.user_key == self.sp_key
        )

    @property
    def key_exposed(self) -> bool:
        return self.user_key is not None or self.sp_key is not None

    @property
    def aborted_parties(self) -> tuple:
        out = []
        if self.user_phase is Phase.ABORTED:
            out.append("user")
        if self.sp_phase is Phase.ABORTED:
            out.append("sp")
        return tuple(out)


def fingerprint(key: bytes | None) -> str:
    """Short non-sensitive identifier for log output (first 8 bytes, hex)."""
    return key[:8].hex() if key else "-"


# ---------------------------------------------------------------------------
# Interceptor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class FlipByte:
    """XOR one payload byte (offset counts from the start of the payload)."""

    offset: int
    mask: int = 0x01


@dataclass(frozen=True)
class Replace:
    data: bytes


@dataclass(frozen=True)
class Replay:
    """Substitute the message observed earlier at ``index``."""

    index: int


@dataclass
class Interceptor:
    """Deterministic per-message-index actions; untouched indices pass."""

    actions: dict = field(default_factory=dict)

    def apply(self, index: int, data: bytes, seen: list) -> bytes | None:
        action = self.actions.get(index)
        if action is None:
            return data
        if isinstance(action, Drop):
            return None
        if isinstance(action, FlipByte):
            out = bytearray(data)
            pos = HEADER_SIZE + action.offset
            if not HEADER_SIZE <= pos < len(out):
                raise MfakeError(f"flip offset {action.offset} outside payload")
            out[pos] ^= action.mask
            return bytes(out)
        if isinstance(action, Replace):
            return action.data
        if isinstance(action, Replay):
            return seen[action.index]
        raise MfakeError(f"unknown interceptor action {action!r}")


# ---------------------------------------------------------------------------
# Per-role byte-level agents
# ---------------------------------------------------------------------------


class UserAgent:
    """Wraps the user state machine behind a bytes-in/bytes-out interface;
    malformed peer bytes become an aborted state, not an exception."""

    def __init__(self, params: SystemParams, inputs: UserInputs):
        self.params = params
        self.inputs = inputs
        self.state: SessionState | None = None

    def start(self) -> bytes:
        self.state, mu1 = user_init(self.params, self.inputs.device)
        return encode(mu1, self.params.group)

    def on_ms1(self, data: bytes) -> bytes | None:
        try:
            msg = decode(data, self.params.group)
        except DecodeError as exc:
            self.state.abort(f"ms1 undecodable: {exc}")
            return None
        if not isinstance(msg, Ms1):
            self.state.abort(f"expected ms1, got {type(msg).__name__}")
            return None
        device = self.inputs.device
        self.state, reply = user_on_ms1(
            self.params,
            self.state,
            msg,
            self.inputs.reading,
            device.alpha,
            device.sketch,
            self.inputs.revocations,
            self.inputs.rng,
        )
        return encode(reply, self.params.group) if reply is not None else None

    def on_ms2(self, data: bytes) -> None:
        try:
            msg = decode(data, self.params.group)
        except DecodeError as exc:
            self.state.abort(f"ms2 undecodable: {exc}")
            return
        if not isinstance(msg, Ms2):
            self.state.abort(f"expected ms2, got {type(msg).__name__}")
            return
        self.state = user_on_ms2(self.params, self.state, msg)


class SpAgent:
    def __init__(self, params: SystemParams, inputs: SpInputs):
        self.params = params
        self.inputs = inputs
        self.state: SessionState | None = None

    def on_mu1(self, data: bytes) -> bytes | None:
        try:
            msg = decode(data, self.params.group)
        except DecodeError as exc:
            self.state = SessionState(role=Role.SP).abort(f"mu1 undecodable: {exc}")
            return None
        if not isinstance(msg, Mu1):
            self.state = SessionState(role=Role.SP).abort(
                f"expected mu1, got {type(msg).__name__}"
            )
            return None
        self.state, reply = sp_on_mu1(
            self.params,
            self.inputs.gamma,
            self.inputs.credential,
            msg,
            self.inputs.revocations,
            self.inputs.rng,
        )
        return encode(reply, self.params.group) if reply is not None else None

    def on_mu2(self, data: bytes) -> bytes | None:
        try:
            msg = decode(data, self.params.group)
        except DecodeError as exc:
            self.state.abort(f"mu2 undecodable: {exc}")
            return None
        if not isinstance(msg, Mu2):
            self.state.abort(f"expected mu2, got {type(msg).__name__}")
            return None
        self.state, reply = sp_on_mu2(self.params, self.state, msg)
        return encode(reply, self.params.group) if reply is not None else None


def _outcome(user_state, sp_state, error=None) -> SessionOutcome:
    return SessionOutcome(
        user_phase=user_state.phase if user_state else None,
        sp_phase=sp_state.phase if sp_state else None,
        user_key=user_state.session_key if user_state else None,
        sp_key=sp_state.session_key if sp_state else None,
        user_abort_reason=user_state.abort_reason if user_state else None,
        sp_abort_reason=sp_state.abort_reason if sp_state else None,
        error=error,
    )


# ---------------------------------------------------------------------------
# Session runners
# ---------------------------------------------------------------------------


def run_session(
    params: SystemParams,
    user_inputs: UserInputs,
    sp_inputs: SpInputs,
    transport: str = "mem",
    interceptor: Interceptor | None = None,
) -> SessionOutcome:
    """Run one full exchange and report both terminal states.

    ``transport`` is "mem" (in-process) or "tcp" (loopback socket with the
    provider served from a thread). The interceptor, when given, sits on the
    user side of the wire and sees all four messages in order.
    """
    if transport == "mem":
        return _run_memory(params, user_inputs, sp_inputs, interceptor)
    if transport == "tcp":
        return _run_tcp(params, user_inputs, sp_inputs, interceptor)
    raise MfakeError(f"unknown transport {transport!r}")


def _run_memory(params, user_inputs, sp_inputs, interceptor) -> SessionOutcome:
    interceptor = interceptor or Interceptor()
    user = UserAgent(params, user_inputs)
    sp = SpAgent(params, sp_inputs)
    seen: list = []

    def step(index, data):
        seen.append(data)
        return interceptor.apply(index, data, seen)

    mu1 = step(0, user.start())
    if mu1 is None:
        return _outcome(user.state, sp.state, error="message 0 dropped")
    ms1 = sp.on_mu1(mu1)
    if ms1 is None:
        return _outcome(user.state, sp.state)
    ms1 = step(1, ms1)
    if ms1 is None:
        return _outcome(user.state, sp.state, error="message 1 dropped")
    mu2 = user.on_ms1(ms1)
    if mu2 is None:
        return _outcome(user.state, sp.state)
    mu2 = step(2, mu2)
    if mu2 is None:
        return _outcome(user.state, sp.state, error="message 2 dropped")
    ms2 = sp.on_mu2(mu2)
    if ms2 is None:
        return _outcome(user.state, sp.state)
    ms2 = step(3, ms2)
    if ms2 is None:
        return _outcome(user.state, sp.state, error="message 3 dropped")
    user.on_ms2(ms2)
    return _outcome(user.state, sp.state)


def _send_frame(sock: socket.socket, data: bytes) -> None:
    sock.sendall(data)


def _recv_frame(sock: socket.socket) -> bytes | None:
    try:
        header = _recv_exact(sock, HEADER_SIZE)
        if header is None:
            return None
        (_, length) = struct.unpack(">BH", header)
        body = _recv_exact(sock, length)
        if body is None:
            return None
        return header + body
    except socket.timeout:
        return None


def _recv_exact(sock: socket.socket, count: int) -> bytes | None:
    buf = b""
    while len(buf) < count:
        chunk = sock.recv(count - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _sp_serve_connection(conn: socket.socket, agent: SpAgent) -> None:
    """One session per connection: MU1 in, MS1 out, MU2 in, MS2 out."""
    conn.settimeout(SOCKET_TIMEOUT)
    try:
        mu1 = _recv_frame(conn)
        if mu1 is None:
            return
        ms1 = agent.on_mu1(mu1)
        if ms1 is None:
            return
        _send_frame(conn, ms1)
        mu2 = _recv_frame(conn)
        if mu2 is None:
            return
        ms2 = agent.on_mu2(mu2)
        if ms2 is None:
            return
        _send_frame(conn, ms2)
    except OSError:
        pass
    finally:
        conn.close()


def _run_tcp(params, user_inputs, sp_inputs, interceptor) -> SessionOutcome:
    interceptor = interceptor or Interceptor()
    user = UserAgent(params, user_inputs)
    sp = SpAgent(params, sp_inputs)

    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.bind(("127.0.0.1", 0))
    server.listen(1)
    server.settimeout(SOCKET_TIMEOUT)
    port = server.getsockname()[1]

    def serve():
        try:
            conn, _ = server.accept()
        except socket.timeout:
            return
        _sp_serve_connection(conn, sp)

    thread = threading.Thread(target=serve, daemon=True)
    thread.start()

    seen: list = []
    error = None
    client = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    client.settimeout(SOCKET_TIMEOUT)
    try:
        client.connect(("127.0.0.1", port))

        def step(index, data):
            seen.append(data)
            return interceptor.apply(index, data, seen)

        mu1 = step(0, user.start())
        if mu1 is None:
            error = "message 0 dropped"
        else:
            _send_frame(client, mu1)
            ms1 = _recv_frame(client)
            if ms1 is not None:
                ms1 = step(1, ms1)
                if ms1 is None:
                    error = "message 1 dropped"
                else:
                    mu2 = user.on_ms1(ms1)
                    if mu2 is not None:
                        mu2 = step(2, mu2)
                        if mu2 is None:
                            error = "message 2 dropped"
                        else:
                            _send_frame(client, mu2)
                            ms2 = _recv_frame(client)
                            if ms2 is not None:
                                ms2 = step(3, ms2)
                                if ms2 is None:
                                    error = "message 3 dropped"
                                else:
                                    user.on_ms2(ms2)
    except OSError as exc:
        error = f"transport failure: {exc}"
    finally:
        client.close()
        thread.join(timeout=SOCKET_TIMEOUT + 1)
        server.close()

    return _outcome(user.state, sp.state, error=error)


def serve_session(params: SystemParams, sp_inputs: SpInputs, host: str, port: int):
    """Blocking single-session server used by the CLI; returns the terminal
    provider state."""
    agent = SpAgent(params, sp_inputs)
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host, port))
    server.listen(1)
    try:
        conn, _ = server.accept()
        _sp_serve_connection(conn, agent)
    finally:
        server.close()
    return agent.state


def connect_session(params: SystemParams, user_inputs: UserInputs, host: str, port: int):
    """Client side of a cross-process session; returns the terminal user state."""
    agent = UserAgent(params, user_inputs)
    client = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    client.settimeout(SOCKET_TIMEOUT)
    try:
        client.connect((host, port))
        _send_frame(client, agent.start())
        ms1 = _recv_frame(client)
        if ms1 is None:
            agent.state.abort("peer closed before ms1")
            return agent.state
        mu2 = agent.on_ms1(ms1)
        if mu2 is None:
            return agent.state
        _send_frame(client, mu2)
        ms2 = _recv_frame(client)
        if ms2 is None:
            agent.state.abort("peer closed before ms2")
            return agent.state
        agent.on_ms2(ms2)
        return agent.state
    finally:
        client.close()


# ---------------------------------------------------------------------------
# Tamper campaigns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TamperRecord:
    message_index: int
    offset: int
    outcome: SessionOutcome

    @property
    def defeated(self) -> bool:
        """The tamper was caught: someone aborted and no mutually accepted
        session (hence no agreed key) exists.

        Flips of the final confirmation tag can only abort the user: its
        sender accepted the moment it emitted that tag, as in any four-message
        exchange. For the first three messages tampering must leave no key
        held by either side, which is asserted as the stricter condition.
        """
        out = self.outcome
        if not out.aborted_parties or out.accepted:
            return False
        if self.message_index < 3:
            return not out.key_exposed
        return True


def _fresh_inputs(deployment_inputs, seed: int):
    user_inputs, sp_inputs = deployment_inputs
    return (
        UserInputs(
            device=user_inputs.device,
            reading=user_inputs.reading,
            rng=random.Random(seed),
            revocations=user_inputs.revocations,
        ),
        SpInputs(
            gamma=sp_inputs.gamma,
            credential=sp_inputs.credential,
            revocations=sp_inputs.revocations,
            rng=random.Random(seed + 1),
        ),
    )


def honest_message_sizes(params, user_inputs, sp_inputs, seed: int) -> list:
    """Payload sizes of the four messages of one honest run."""
    sizes = []

    class _Recorder(Interceptor):
        def apply(self, index, data, seen):
            sizes.append(len(data) - HEADER_SIZE)
            return data

    u, s = _fresh_inputs((user_inputs, sp_inputs), seed)
    outcome = run_session(params, u, s, interceptor=_Recorder())
    if not outcome.accepted:
        raise MfakeError(f"honest baseline did not accept: {outcome}")
    return sizes


def tamper_all_bytes(params, user_inputs, sp_inputs, seed: int = 0) -> list:
    """Flip every payload byte of every message of one fixed session, one
    re-run per position."""
    sizes = honest_message_sizes(params, user_inputs, sp_inputs, seed)
    records = []
    for index, size in enumerate(sizes):
        for offset in range(size):
            u, s = _fresh_inputs((user_inputs, sp_inputs), seed)
            outcome = run_session(
                params, u, s,
                interceptor=Interceptor({index: FlipByte(offset)}),
            )
            records.append(TamperRecord(message_index=index, offset=offset, outcome=outcome))
    return records


def tamper_random_flips(params, user_inputs, sp_inputs, count: int, seed: int = 0) -> list:
    """Random single-byte flips across fresh sessions (fresh nonces each run)."""
    rng = random.Random(seed)
    sizes = honest_message_sizes(params, user_inputs, sp_inputs, seed)
    records = []
    for k in range(count):
        index = rng.randrange(4)
        offset = rng.randrange(sizes[index])
        mask = 1 << rng.randrange(8)
        u, s = _fresh_inputs((user_inputs, sp_inputs), seed + 1000 + k)
        outcome = run_session(
            params, u, s,
            interceptor=Interceptor({index: FlipByte(offset, mask)}),
        )
        records.append(TamperRecord(message_index=index, offset=offset, outcome=outcome))
    return records
