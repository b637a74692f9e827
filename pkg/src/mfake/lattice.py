"""Triangular lattices: construction, coordinate changes, closest vectors.

The lattice family used here has all basis vectors of equal length d with
pairwise inner products d^2 / 2. Its Voronoi cells act as the acceptance
region for noisy vector matching: a reading matches a template when their
difference decodes to the zero lattice point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "LatticeBasis",
    "BasisCoords",
    "LatticePoint",
    "build_triangular_basis",
    "to_basis_coords",
    "from_basis_coords",
    "closest_vector",
    "closest_vector_batch",
    "in_acceptance_region",
]


@dataclass(frozen=True)
class LatticeBasis:
    """Immutable basis of a triangular lattice.

    Attributes:
        n: dimension.
        d: common length of the basis vectors.
        columns: n x n matrix whose k-th column is the basis vector b_k.
        inverse: precomputed inverse of ``columns``.
    """

    n: int
    d: float
    columns: np.ndarray
    inverse: np.ndarray

    def __post_init__(self):
        self.columns.setflags(write=False)
        self.inverse.setflags(write=False)


@dataclass(frozen=True)
class BasisCoords:
    """A real vector expressed in basis coordinates (the vector is
    ``basis.columns @ coords`` in standard coordinates)."""

    coords: np.ndarray

    def __post_init__(self):
        self.coords.setflags(write=False)


@dataclass(frozen=True)
class LatticePoint:
    """Integer coordinate vector of a lattice point, in basis coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        if not np.issubdtype(self.coords.dtype, np.integer):
            raise ParameterError("lattice point coordinates must be integers")
        self.coords.setflags(write=False)

    def is_zero(self) -> bool:
        return not self.coords.any()


def build_triangular_basis(n: int, d: float) -> LatticeBasis:
    """Construct the equal-length / equal-angle basis for dimension n.

    Column k is (w_1, ..., w_{k-1}, r_k, 0, ..., 0) with
    r_k = sqrt(d^2 - sum w_i^2) and w_k = (d^2/2 - sum w_i^2) / r_k,
    the running sums taken over i < k.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"dimension must be a positive integer, got {n!r}")
    if not d > 0:
        raise ParameterError(f"basis length must be positive, got {d!r}")
    d = float(d)

    w = np.zeros(n)
    r = np.zeros(n)
    sq = 0.0  # sum of w_i^2 for i < k
    for k in range(n):
        r[k] = np.sqrt(d * d - sq)
        w[k] = (d * d / 2 - sq) / r[k]
        sq += w[k] * w[k]

    cols = np.zeros((n, n))
    for k in range(n):
        cols[:k, k] = w[:k]
        cols[k, k] = r[k]

    inverse = _invert_upper_triangular(cols)
    return LatticeBasis(n=n, d=d, columns=cols, inverse=inverse)


def _invert_upper_triangular(m: np.ndarray) -> np.ndarray:
    """Inverse by back-substitution, one row at a time from the bottom; the
    basis matrix is triangular by construction so no general-purpose
    inversion is needed."""
    n = m.shape[0]
    inv = np.zeros_like(m)
    for i in range(n - 1, -1, -1):
        row = np.zeros(n - i)
        row[0] = 1.0
        if i + 1 < n:
            row -= m[i, i + 1:] @ inv[i + 1:, i:]
        inv[i, i:] = row / m[i, i]
    return inv


def _check_dim(basis: LatticeBasis, vec: np.ndarray, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.ndim != 1 or vec.shape[0] != basis.n:
        raise ParameterError(
            f"{what} must be a vector of length {basis.n}, got shape {vec.shape}"
        )
    return vec


def to_basis_coords(basis: LatticeBasis, x) -> BasisCoords:
    """Express a standard-coordinates vector with respect to the basis."""
    x = _check_dim(basis, x, "input vector")
    return BasisCoords(coords=basis.inverse @ x)


def from_basis_coords(basis: LatticeBasis, v: BasisCoords) -> np.ndarray:
    """Inverse of to_basis_coords."""
    coords = _check_dim(basis, v.coords, "basis coordinates")
    return basis.columns @ coords


def closest_vector(basis: LatticeBasis, x: BasisCoords) -> LatticePoint:
    """Nearest lattice point to x, both in basis coordinates.

    Works on the fractional part: after sorting its coordinates ascending,
    the only candidates are the n+1 zero/one vectors that are constant on
    the sorted prefix/suffix split (the nearest point's coordinates preserve
    the ordering of the input's). Candidate distances are evaluated in
    standard coordinates, updating one basis column at a time, so the whole
    search costs O(n^2) plus the sort. Ties keep the earliest candidate.
    """
    coords = _check_dim(basis, x.coords, "basis coordinates")
    frac = coords - np.floor(coords)
    candidate = _nearest_fractional(basis, frac)
    return LatticePoint(coords=candidate + np.floor(coords).astype(np.int64))


def _nearest_fractional(basis: LatticeBasis, frac: np.ndarray) -> np.ndarray:
    n = basis.n
    order = np.argsort(frac, kind="stable")
    # candidate k zeroes the k smallest coordinates, k = 0 .. n
    diff = basis.columns @ (frac - 1.0)
    best_k = 0
    best_dist = float(diff @ diff)
    for k in range(1, n + 1):
        diff = diff + basis.columns[:, order[k - 1]]
        dist = float(diff @ diff)
        if dist < best_dist:
            best_dist = dist
            best_k = k
    candidate = np.ones(n, dtype=np.int64)
    candidate[order[:best_k]] = 0
    return candidate


def closest_vector_batch(basis: LatticeBasis, xs: np.ndarray) -> np.ndarray:
    """Vectorized closest_vector over the rows of an (m, n) array.

    Matches closest_vector row for row; used by the rate sweeps where many
    difference vectors are decoded against the same basis.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != basis.n:
        raise ParameterError(
            f"expected an (m, {basis.n}) array, got shape {xs.shape}"
        )
    m, n = xs.shape
    floors = np.floor(xs)
    frac = xs - floors
    order = np.argsort(frac, kind="stable", axis=1)

    diff = (frac - 1.0) @ basis.columns.T  # row i: B (frac_i - 1)
    best_dist = np.einsum("ij,ij->i", diff, diff)
    best_k = np.zeros(m, dtype=np.int64)
    cols = basis.columns.T  # cols[j] is basis column j as a row
    for k in range(1, n + 1):
        diff += cols[order[:, k - 1]]
        dist = np.einsum("ij,ij->i", diff, diff)
        better = dist < best_dist
        best_dist[better] = dist[better]
        best_k[better] = k

    candidates = np.ones((m, n), dtype=np.int64)
    rows = np.arange(m)[:, None]
    mask = np.arange(n)[None, :] < best_k[:, None]
    # scatter zeros at the positions of the best_k smallest fractional coords
    flat = candidates[rows, order]
    flat[mask] = 0
    candidates[rows, order] = flat
    return candidates + floors.astype(np.int64)


def in_acceptance_region(basis: LatticeBasis, x0, x1) -> bool:
    """True when x1 lies in the Voronoi cell of the lattice translated to x0,
    i.e. the difference x0 - x1 decodes to the zero lattice point."""
    x0 = _check_dim(basis, x0, "x0")
    x1 = _check_dim(basis, x1, "x1")
    return closest_vector(basis, to_basis_coords(basis, x0 - x1)).is_zero()
