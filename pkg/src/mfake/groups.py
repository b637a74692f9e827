"""Prime-order groups used for key binding and the key exchange.

Two implementations sit behind the same interface: the order-q subgroup of
BLS12-381 G1 (the production group, 48-byte compressed points) and a small
multiplicative subgroup of prime order 101 used for statistical tests where
the key space must be enumerable.

Group elements are plain values (an affine point tuple or an integer
residue); all operations live on the group object so callers never touch
curve internals.
"""

from __future__ import annotations

import hashlib
import random

from .errors import ParameterError, DecodeError

__all__ = [
    "UnsupportedGroupError",
    "InvalidElementError",
    "PrimeOrderGroup",
    "Bls12381G1",
    "ToyGroup",
    "get_group",
    "hash_to_scalar",
    "sample_scalar",
    "scalar_to_bytes",
    "scalar_from_bytes",
]

SCALAR_BYTES = 32


class UnsupportedGroupError(ParameterError):
    """Raised for group identifiers not in the registry."""


class InvalidElementError(DecodeError):
    """Raised when bytes or values do not decode to a valid group element."""


def hash_to_scalar(data: bytes, q: int) -> int:
    """SHA3-256 digest of ``data`` reduced modulo the group order."""
    return int.from_bytes(hashlib.sha3_256(data).digest(), "big") % q


def sample_scalar(q: int, rng: random.Random) -> int:
    """Uniform scalar in [0, q) by rejection from whole-byte random strings."""
    nbits = 8 * ((q.bit_length() + 7) // 8)
    while True:
        value = rng.getrandbits(nbits)
        if value < q:
            return value


def scalar_to_bytes(value: int) -> bytes:
    return value.to_bytes(SCALAR_BYTES, "big")


def scalar_from_bytes(data: bytes) -> int:
    if len(data) != SCALAR_BYTES:
        raise InvalidElementError(f"scalar must be {SCALAR_BYTES} bytes, got {len(data)}")
    return int.from_bytes(data, "big")


class PrimeOrderGroup:
    """Interface shared by all group implementations.

    Attributes:
        name: registry identifier.
        order: the prime group order q.
        element_size: length in bytes of an encoded element.
    """

    name: str
    order: int
    element_size: int

    def generator(self):
        raise NotImplementedError

    def identity(self):
        raise NotImplementedError

    def multiply(self, a, b):
        """Group operation."""
        raise NotImplementedError

    def power(self, base, exponent: int):
        """Repeated group operation (written multiplicatively: base**exponent)."""
        raise NotImplementedError

    def inverse(self, a):
        raise NotImplementedError

    def encode(self, a) -> bytes:
        """Canonical fixed-size encoding."""
        raise NotImplementedError

    def decode(self, data: bytes):
        """Inverse of encode; rejects off-group inputs with InvalidElementError."""
        raise NotImplementedError

    def is_valid(self, a) -> bool:
        raise NotImplementedError

    def hash_to_group(self, tag: bytes):
        """Deterministic element with unknown discrete log relative to g."""
        raise NotImplementedError

    def hash_element_to_scalar(self, a) -> int:
        return hash_to_scalar(self.encode(a), self.order)

    def sample_scalar(self, rng: random.Random) -> int:
        return sample_scalar(self.order, rng)

    def precompute(self, a) -> None:
        """Optional hint that ``a`` will be used as a fixed exponentiation base."""


# ---------------------------------------------------------------------------
# BLS12-381 G1
# ---------------------------------------------------------------------------

_P = 0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB
_Q = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001
_B = 4
_GX = 0x17F1D3A73197D7942695638C4FA9AC0FC3688C4F9774B905A14E3A3F171BAC586C55E83FF97A1AEFFB3AF00ADB22C6BB
_GY = 0x08B3F481E3AAA0F1A09E30ED741D8AE4FCF5E095D5D00AF600DB18CB2C04B3EDD03CC744A2888AE40CAA232946C5E7E1
_COFACTOR = 0x396C8C005555E1568C00AAAB0000AAAB

_JINF = (0, 1, 0)

# Compressed-encoding flag bits (most significant byte).
_FLAG_COMPRESSED = 0x80
_FLAG_INFINITY = 0x40
_FLAG_Y_LARGE = 0x20


def _jdouble(pt):
    x1, y1, z1 = pt
    if z1 == 0 or y1 == 0:
        return _JINF
    a = x1 * x1 % _P
    b = y1 * y1 % _P
    c = b * b % _P
    d = 2 * ((x1 + b) * (x1 + b) - a - c) % _P
    e = 3 * a % _P
    f = e * e % _P
    x3 = (f - 2 * d) % _P
    y3 = (e * (d - x3) - 8 * c) % _P
    z3 = 2 * y1 * z1 % _P
    return (x3, y3, z3)


def _jadd(p1, p2):
    x1, y1, z1 = p1
    x2, y2, z2 = p2
    if z1 == 0:
        return p2
    if z2 == 0:
        return p1
    z1z1 = z1 * z1 % _P
    z2z2 = z2 * z2 % _P
    u1 = x1 * z2z2 % _P
    u2 = x2 * z1z1 % _P
    s1 = y1 * z2 * z2z2 % _P
    s2 = y2 * z1 * z1z1 % _P
    if u1 == u2:
        if s1 != s2:
            return _JINF
        return _jdouble(p1)
    h = (u2 - u1) % _P
    i = 4 * h * h % _P
    j = h * i % _P
    r = 2 * (s2 - s1) % _P
    v = u1 * i % _P
    x3 = (r * r - j - 2 * v) % _P
    y3 = (r * (v - x3) - 2 * s1 * j) % _P
    z3 = 2 * z1 * z2 * h % _P
    return (x3, y3, z3)


def _jmadd(p1, a2):
    """Mixed addition: jacobian p1 plus affine a2 (z2 = 1)."""
    x1, y1, z1 = p1
    x2, y2 = a2
    if z1 == 0:
        return (x2, y2, 1)
    z1z1 = z1 * z1 % _P
    u2 = x2 * z1z1 % _P
    s2 = y2 * z1 * z1z1 % _P
    if x1 == u2:
        if y1 != s2:
            return _JINF
        return _jdouble(p1)
    h = (u2 - x1) % _P
    i = 4 * h * h % _P
    j = h * i % _P
    r = 2 * (s2 - y1) % _P
    v = x1 * i % _P
    x3 = (r * r - j - 2 * v) % _P
    y3 = (r * (v - x3) - 2 * y1 * j) % _P
    z3 = 2 * z1 * h % _P
    return (x3, y3, z3)


def _jmul(pt, k):
    """Scalar multiplication with a fixed 4-bit window."""
    if k == 0 or pt[2] == 0:
        return _JINF
    table = [None] * 16
    table[1] = pt
    for i in range(2, 16):
        table[i] = _jadd(table[i - 1], pt)
    acc = _JINF
    nwin = (k.bit_length() + 3) // 4
    for i in range(nwin - 1, -1, -1):
        if acc[2] != 0:
            acc = _jdouble(_jdouble(_jdouble(_jdouble(acc))))
        digit = (k >> (4 * i)) & 0xF
        if digit:
            acc = _jadd(acc, table[digit])
    return acc


def _to_affine(pt):
    x, y, z = pt
    if z == 0:
        return None
    zinv = pow(z, _P - 2, _P)
    zinv2 = zinv * zinv % _P
    return (x * zinv2 % _P, y * zinv2 * zinv % _P)


def _batch_to_affine(points):
    """Normalize many jacobian points with a single field inversion."""
    zs = [pt[2] for pt in points]
    prefix = [1] * (len(zs) + 1)
    for i, z in enumerate(zs):
        prefix[i + 1] = prefix[i] * z % _P
    inv_all = pow(prefix[-1], _P - 2, _P)
    out = [None] * len(points)
    for i in range(len(points) - 1, -1, -1):
        zinv = inv_all * prefix[i] % _P
        inv_all = inv_all * zs[i] % _P
        x, y, _ = points[i]
        zinv2 = zinv * zinv % _P
        out[i] = (x * zinv2 % _P, y * zinv2 * zinv % _P)
    return out


def _sqrt_fp(value):
    """Square root mod p (p = 3 mod 4), or None if value is not a square."""
    root = pow(value, (_P + 1) // 4, _P)
    if root * root % _P != value:
        return None
    return root


class Bls12381G1(PrimeOrderGroup):
    """Order-q subgroup of the BLS12-381 G1 curve (y^2 = x^3 + 4 over F_p).

    Elements are affine (x, y) int tuples, or None for the identity.
    Encoding follows the common 48-byte compressed form: big-endian x with
    compression / infinity / y-sign flags in the top three bits.
    """

    name = "bls12-381"
    order = _Q
    element_size = 48

    _WINDOW = 4

    def __init__(self):
        self._fixed_tables: dict = {}
        self.precompute((_GX, _GY))

    def generator(self):
        return (_GX, _GY)

    def identity(self):
        return None

    def is_valid(self, a) -> bool:
        if a is None:
            return True
        x, y = a
        if not (0 <= x < _P and 0 <= y < _P):
            return False
        if (y * y - (x * x * x + _B)) % _P != 0:
            return False
        return _jmul((x, y, 1), _Q)[2] == 0

    def multiply(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return _to_affine(_jmadd((a[0], a[1], 1), b))

    def inverse(self, a):
        if a is None:
            return None
        return (a[0], (_P - a[1]) % _P)

    def power(self, base, exponent: int):
        exponent %= _Q
        if base is None or exponent == 0:
            return None
        table = self._fixed_tables.get(base)
        if table is not None:
            return _to_affine(self._fixed_power(table, exponent))
        return _to_affine(_jmul((base[0], base[1], 1), exponent))

    def precompute(self, a) -> None:
        if a is None or a in self._fixed_tables:
            return
        # table[w][d] = (d * 16**w) * a in affine form, d in 1..15
        windows = (_Q.bit_length() + self._WINDOW - 1) // self._WINDOW
        jac = []
        current = (a[0], a[1], 1)
        for _ in range(windows):
            entry = current
            row = [entry]
            for _ in range(14):
                entry = _jadd(entry, current)
                row.append(entry)
            jac.extend(row)
            for _ in range(self._WINDOW):
                current = _jdouble(current)
        flat = _batch_to_affine(jac)
        self._fixed_tables[a] = [flat[i * 15:(i + 1) * 15] for i in range(windows)]

    @staticmethod
    def _fixed_power(table, exponent):
        acc = _JINF
        w = 0
        while exponent:
            digit = exponent & 0xF
            if digit:
                acc = _jmadd(acc, table[w][digit - 1])
            exponent >>= 4
            w += 1
        return acc

    def encode(self, a) -> bytes:
        if a is None:
            return bytes([_FLAG_COMPRESSED | _FLAG_INFINITY]) + bytes(47)
        x, y = a
        flags = _FLAG_COMPRESSED
        if y > (_P - 1) // 2:
            flags |= _FLAG_Y_LARGE
        data = bytearray(x.to_bytes(48, "big"))
        data[0] |= flags
        return bytes(data)

    def decode(self, data: bytes):
        if len(data) != 48:
            raise InvalidElementError(f"expected 48 bytes, got {len(data)}")
        flags = data[0]
        if not flags & _FLAG_COMPRESSED:
            raise InvalidElementError("uncompressed encodings not accepted")
        if flags & _FLAG_INFINITY:
            if flags != (_FLAG_COMPRESSED | _FLAG_INFINITY) or any(data[1:]):
                raise InvalidElementError("malformed identity encoding")
            return None
        x = int.from_bytes(bytes([data[0] & 0x1F]) + data[1:], "big")
        if x >= _P:
            raise InvalidElementError("x coordinate out of field range")
        y = _sqrt_fp((x * x * x + _B) % _P)
        if y is None:
            raise InvalidElementError("x is not on the curve")
        if bool(flags & _FLAG_Y_LARGE) != (y > (_P - 1) // 2):
            y = _P - y
        point = (x, y)
        if _jmul((x, y, 1), _Q)[2] != 0:
            raise InvalidElementError("point not in the prime-order subgroup")
        return point

    def hash_to_group(self, tag: bytes):
        for counter in range(256):
            digest = hashlib.shake_256(tag + bytes([counter])).digest(48)
            x = int.from_bytes(digest, "big") % _P
            y = _sqrt_fp((x * x * x + _B) % _P)
            if y is None:
                continue
            if y > (_P - 1) // 2:
                y = _P - y
            cleared = _to_affine(_jmul((x, y, 1), _COFACTOR))
            if cleared is not None:
                return cleared
        raise RuntimeError("hash_to_group failed to find a point")


# ---------------------------------------------------------------------------
# Small test group
# ---------------------------------------------------------------------------


class ToyGroup(PrimeOrderGroup):
    """Order-101 subgroup of the multiplicative group mod 607.

    Intended for statistical tests: the key space Z_101 is small enough to
    histogram exhaustively. Elements are int residues, encoded as 2 bytes.
    """

    name = "toy-101"
    order = 101
    element_size = 2

    _MOD = 607  # 607 - 1 = 2 * 3 * 101

    def __init__(self):
        g = pow(3, (self._MOD - 1) // self.order, self._MOD)
        assert g != 1 and pow(g, self.order, self._MOD) == 1
        self._g = g

    def generator(self):
        return self._g

    def identity(self):
        return 1

    def is_valid(self, a) -> bool:
        return isinstance(a, int) and 1 <= a < self._MOD and pow(a, self.order, self._MOD) == 1

    def multiply(self, a, b):
        return a * b % self._MOD

    def inverse(self, a):
        return pow(a, self._MOD - 2, self._MOD)

    def power(self, base, exponent: int):
        return pow(base, exponent % self.order, self._MOD)

    def encode(self, a) -> bytes:
        return a.to_bytes(2, "big")

    def decode(self, data: bytes):
        if len(data) != 2:
            raise InvalidElementError(f"expected 2 bytes, got {len(data)}")
        value = int.from_bytes(data, "big")
        if not self.is_valid(value):
            raise InvalidElementError("residue not in the order-101 subgroup")
        return value

    def hash_to_group(self, tag: bytes):
        for counter in range(256):
            digest = hashlib.shake_256(tag + bytes([counter])).digest(4)
            t = int.from_bytes(digest, "big") % self._MOD
            if t == 0:
                continue
            candidate = pow(t, (self._MOD - 1) // self.order, self._MOD)
            if candidate != 1:
                return candidate
        raise RuntimeError("hash_to_group failed to find a subgroup element")


_REGISTRY = {
    "bls12-381": Bls12381G1,
    "toy-101": ToyGroup,
}

_INSTANCES: dict = {}


def get_group(group_id: str) -> PrimeOrderGroup:
    """Look up a group by identifier; instances are shared (they are immutable
    apart from internal precomputation caches)."""
    try:
        cls = _REGISTRY[group_id]
    except KeyError:
        raise UnsupportedGroupError(
            f"unknown group {group_id!r}; available: {sorted(_REGISTRY)}"
        ) from None
    if group_id not in _INSTANCES:
        _INSTANCES[group_id] = cls()
    return _INSTANCES[group_id]
