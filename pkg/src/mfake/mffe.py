"""Multi-factor fuzzy extractor: a biometric vector plus a secret exponent
bind to one group scalar key.

Gen floors the template in basis coordinates, universal-hashes those centers
together with a digest of the secret's public binding, and hides the centers
inside the public sketch under a keystream that only the secret holder can
re-derive. Rep decodes a nearby reading back to the encrypted centers via
the lattice and reverses the steps. A wrong secret or a far-away reading
silently yields a different key; detection belongs to the protocol layer.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from . import groups
from .errors import DecodeError, ParameterError
from .lattice import BasisCoords, LatticeBasis, build_triangular_basis, closest_vector

__all__ = [
    "MffePublicParams",
    "UhSeed",
    "SketchPackage",
    "ExtractedKey",
    "SecretBinding",
    "mffe_setup",
    "universal_hash",
    "sample_uh_seed",
    "encode_centers",
    "decode_center",
    "stream_encrypt_ints",
    "stream_decrypt_ints",
    "mffe_gen",
    "mffe_rep",
    "sketch_to_bytes",
    "sketch_from_bytes",
]

CENTER_BOUND = 2**31
SKETCH_VERSION = 1


@dataclass(frozen=True)
class MffePublicParams:
    """Public extractor parameters: lattice basis plus group description."""

    basis: LatticeBasis
    group: groups.PrimeOrderGroup
    group_id: str
    hash_to_scalar_id: str = "sha3-256-mod-q"

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def order(self) -> int:
        return self.group.order


@dataclass(frozen=True)
class UhSeed:
    """Inner-product hash instance: n+1 uniform scalars mod q."""

    seed: tuple
    q: int


@dataclass(frozen=True)
class SketchPackage:
    """Public per-user helper data.

    delta: sketch vector in basis coordinates (centers hidden by keystream).
    w: key-transport group element (generator raised to a fresh exponent).
    uh: the universal-hash seed drawn for this user. All three are public.
    """

    delta: np.ndarray
    w: object
    uh: UhSeed

    def __post_init__(self):
        self.delta.setflags(write=False)


@dataclass(frozen=True)
class ExtractedKey:
    beta: int


@dataclass(frozen=True)
class SecretBinding:
    """User secret exponent alpha and its public binding g^alpha."""

    alpha: int
    z: object

    @classmethod
    def generate(cls, group: groups.PrimeOrderGroup, rng: random.Random) -> "SecretBinding":
        alpha = group.sample_scalar(rng)
        return cls(alpha=alpha, z=group.power(group.generator(), alpha))


def mffe_setup(n: int, d: float, group_id: str = "bls12-381") -> MffePublicParams:
    """Deterministic parameter generation for dimension n and basis length d."""
    group = groups.get_group(group_id)
    basis = build_triangular_basis(n, d)
    return MffePublicParams(basis=basis, group=group, group_id=group_id)


def sample_uh_seed(n: int, q: int, rng: random.Random) -> UhSeed:
    return UhSeed(seed=tuple(groups.sample_scalar(q, rng) for _ in range(n + 1)), q=q)


def universal_hash(uh: UhSeed, values) -> int:
    """Inner product of ``values`` with the seed, mod q."""
    if len(values) != len(uh.seed):
        raise ParameterError(
            f"universal hash expects {len(uh.seed)} values, got {len(values)}"
        )
    total = 0
    for s, v in zip(uh.seed, values):
        total += s * v
    return total % uh.q


def encode_centers(v, q: int) -> list:
    """Map signed center integers into Z_q (negatives wrap mod q)."""
    out = []
    for value in v:
        value = int(value)
        if not -CENTER_BOUND < value < CENTER_BOUND:
            raise ParameterError(f"center magnitude overflow: {value}")
        out.append(value % q)
    return out


def decode_center(u: int, q: int) -> int:
    """Lift a mod-q residue back to the symmetric range (inverse of
    encode_centers for magnitudes below q/2)."""
    return u - q if u > q // 2 else u


def _keystream(key: bytes, n: int) -> np.ndarray:
    """n signed 32-bit words from AES-256-CTR with an all-zero initial counter.

    The key is single-use (derived from a fresh exponent at Gen time) so the
    fixed counter start is safe, and determinism given the key is exactly
    what decryption needs.
    """
    if len(key) != 32:
        raise ParameterError(f"symmetric key must be 32 bytes, got {len(key)}")
    enc = Cipher(algorithms.AES(key), modes.CTR(bytes(16))).encryptor()
    raw = enc.update(bytes(4 * n)) + enc.finalize()
    return np.frombuffer(raw, dtype="<i4").astype(np.int64)


def stream_encrypt_ints(key: bytes, v) -> np.ndarray:
    """Additive keystream over the integers: output stays an integer vector so
    lattice decoding commutes with it, and decryption is exact."""
    v = np.asarray(v, dtype=np.int64)
    return v + _keystream(key, v.shape[0])


def stream_decrypt_ints(key: bytes, e) -> np.ndarray:
    e = np.asarray(e, dtype=np.int64)
    return e - _keystream(key, e.shape[0])


def _sketch_key(group: groups.PrimeOrderGroup, w, shared) -> bytes:
    """Symmetric key binding the helper element and the shared secret point."""
    return hashlib.sha3_256(group.encode(w) + group.encode(shared)).digest()


def _centers_of(pp: MffePublicParams, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.shape != (pp.n,):
        raise ParameterError(f"feature vector must have length {pp.n}, got shape {x.shape}")
    xb = pp.basis.inverse @ x
    return xb, np.floor(xb).astype(np.int64)


def mffe_gen(pp: MffePublicParams, x, z, rng: random.Random):
    """Extract a key from template x and secret binding z.

    Returns (key, sketch). The sketch (delta, w, uh seed) is public; the key
    is the secret output and is not recoverable from the sketch without both
    a close reading and the secret exponent behind z.
    """
    group = pp.group
    if not group.is_valid(z):
        raise ParameterError("invalid group element for secret binding")
    xb, centers = _centers_of(pp, x)
    if np.abs(centers).max(initial=0) >= CENTER_BOUND:
        raise ParameterError("feature vector too large: center magnitude overflow")

    r = group.sample_scalar(rng)
    w = group.power(group.generator(), r)
    key = _sketch_key(group, w, group.power(z, r))
    encrypted = stream_encrypt_ints(key, centers)
    delta = xb - encrypted.astype(float)

    uh = sample_uh_seed(pp.n, pp.order, rng)
    digest = group.hash_element_to_scalar(z)
    beta = universal_hash(uh, encode_centers(centers, pp.order) + [digest])
    return ExtractedKey(beta=beta), SketchPackage(delta=delta, w=w, uh=uh)


def mffe_rep(pp: MffePublicParams, x1, alpha: int, sketch: SketchPackage) -> ExtractedKey:
    """Recover the key from a reading, the secret exponent, and the sketch.

    Always returns a key; a mismatched factor just produces a different one.
    (Decrypted centers are reduced mod q without the Gen-side magnitude
    guard, since garbage decryptions may exceed it.)
    """
    group = pp.group
    x1 = np.asarray(x1, dtype=float)
    if x1.shape != (pp.n,):
        raise ParameterError(f"feature vector must have length {pp.n}, got shape {x1.shape}")
    if sketch.delta.shape != (pp.n,):
        raise ParameterError("sketch dimension does not match parameters")

    key = _sketch_key(group, sketch.w, group.power(sketch.w, alpha))
    xb1 = pp.basis.inverse @ x1
    recovered = closest_vector(pp.basis, BasisCoords(xb1 - sketch.delta))
    centers = stream_decrypt_ints(key, recovered.coords)

    z = group.power(group.generator(), alpha)
    digest = group.hash_element_to_scalar(z)
    reduced = [int(v) % pp.order for v in centers]
    return ExtractedKey(beta=universal_hash(sketch.uh, reduced + [digest]))


def sketch_to_bytes(sketch: SketchPackage, group: groups.PrimeOrderGroup) -> bytes:
    """Versioned binary form: header, n, delta as little-endian float64,
    compressed helper element, then the hash seed as 32-byte scalars."""
    n = sketch.delta.shape[0]
    parts = [
        bytes([SKETCH_VERSION]),
        struct.pack(">I", n),
        np.asarray(sketch.delta, dtype="<f8").tobytes(),
        group.encode(sketch.w),
    ]
    parts.extend(groups.scalar_to_bytes(s) for s in sketch.uh.seed)
    return b"".join(parts)


def sketch_from_bytes(data: bytes, group: groups.PrimeOrderGroup) -> SketchPackage:
    if len(data) < 5:
        raise DecodeError("sketch blob truncated")
    if data[0] != SKETCH_VERSION:
        raise DecodeError(f"unsupported sketch version {data[0]}")
    n = struct.unpack(">I", data[1:5])[0]
    expected = 5 + 8 * n + group.element_size + 32 * (n + 1)
    if len(data) != expected:
        raise DecodeError(f"sketch blob has {len(data)} bytes, expected {expected}")
    offset = 5
    delta = np.frombuffer(data[offset:offset + 8 * n], dtype="<f8").astype(float)
    offset += 8 * n
    w = group.decode(data[offset:offset + group.element_size])
    offset += group.element_size
    seed = tuple(
        groups.scalar_from_bytes(data[offset + 32 * i: offset + 32 * (i + 1)])
        for i in range(n + 1)
    )
    return SketchPackage(delta=delta, w=w, uh=UhSeed(seed=seed, q=group.order))
