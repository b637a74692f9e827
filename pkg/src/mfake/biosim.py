"""Synthetic biometric source and matching-rate evaluation.

Stands in for a real feature extractor: identities are Gaussian template
vectors, readings add isotropic Gaussian noise. The evaluation sweeps
measure the false-match / false-non-match tradeoff as the lattice basis
length d grows (larger cells accept more impostors and reject fewer genuine
readings), and locate the equal-error crossing by linear interpolation.

A CSV ingestion path accepts externally computed feature vectors in rows of
``label,v1,...,vn`` so the same sweeps can run on real data.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import DecodeError, ParameterError
from .lattice import build_triangular_basis, closest_vector_batch

__all__ = [
    "SyntheticPopulation",
    "RateReport",
    "EerEstimate",
    "sample_population",
    "sample_reading",
    "evaluate_rates",
    "sweep_eer",
    "reports_to_csv",
    "reports_from_csv",
    "load_features_csv",
    "save_features_csv",
]

SWEEP_CSV_FIELDS = ("d", "fmr", "fnmr", "genuine_pairs", "impostor_pairs")


@dataclass(frozen=True)
class SyntheticPopulation:
    n: int
    num_identities: int
    templates: np.ndarray
    genuine_noise_sigma: float
    inter_identity_sigma: float

    def __post_init__(self):
        self.templates.setflags(write=False)


@dataclass(frozen=True)
class RateReport:
    """Match rates at one basis length: fmr counts accepted impostor pairs,
    fnmr counts rejected genuine pairs."""

    d: float
    fmr: float
    fnmr: float
    genuine_pairs: int
    impostor_pairs: int


@dataclass(frozen=True)
class EerEstimate:
    """Crossing of the interpolated fmr / fnmr curves."""

    eer: float
    d: float


def sample_population(
    n: int,
    num_identities: int,
    inter_sigma: float,
    noise_sigma: float,
    rng: np.random.Generator,
) -> SyntheticPopulation:
    if n < 1 or num_identities < 1:
        raise ParameterError("population needs n >= 1 and at least one identity")
    if inter_sigma <= 0 or noise_sigma < 0:
        raise ParameterError("sigmas must be positive (noise may be zero)")
    templates = rng.normal(scale=inter_sigma, size=(num_identities, n))
    return SyntheticPopulation(
        n=n,
        num_identities=num_identities,
        templates=templates,
        genuine_noise_sigma=noise_sigma,
        inter_identity_sigma=inter_sigma,
    )


def sample_reading(pop: SyntheticPopulation, identity_index: int, rng: np.random.Generator):
    """One noisy reading of the given identity."""
    if not 0 <= identity_index < pop.num_identities:
        raise ParameterError(f"identity index {identity_index} out of range")
    template = pop.templates[identity_index]
    if pop.genuine_noise_sigma == 0:
        return template.copy()
    return template + rng.normal(scale=pop.genuine_noise_sigma, size=pop.n)


def _accept_mask(basis, diffs: np.ndarray) -> np.ndarray:
    coords = diffs @ basis.inverse.T
    points = closest_vector_batch(basis, coords)
    return ~points.any(axis=1)


def evaluate_rates(
    pop: SyntheticPopulation,
    d: float,
    num_genuine_pairs: int,
    num_impostor_pairs: int,
    rng: np.random.Generator,
) -> RateReport:
    """Monte Carlo FMR/FNMR at basis length d.

    A genuine pair is (template, fresh reading of the same identity); an
    impostor pair is (template_i, reading of some j != i). Acceptance is
    membership of the difference in the zero cell of the lattice at d.
    """
    if num_genuine_pairs < 1 or num_impostor_pairs < 1:
        raise ParameterError("need at least one pair of each type")
    basis = build_triangular_basis(pop.n, d)

    ids = rng.integers(0, pop.num_identities, size=num_genuine_pairs)
    noise = rng.normal(scale=pop.genuine_noise_sigma, size=(num_genuine_pairs, pop.n))
    readings = pop.templates[ids] + noise
    genuine_accept = _accept_mask(basis, pop.templates[ids] - readings)

    left = rng.integers(0, pop.num_identities, size=num_impostor_pairs)
    if pop.num_identities > 1:
        shift = rng.integers(1, pop.num_identities, size=num_impostor_pairs)
        right = (left + shift) % pop.num_identities
    else:
        raise ParameterError("impostor pairs need at least two identities")
    noise = rng.normal(scale=pop.genuine_noise_sigma, size=(num_impostor_pairs, pop.n))
    readings = pop.templates[right] + noise
    impostor_accept = _accept_mask(basis, pop.templates[left] - readings)

    return RateReport(
        d=float(d),
        fmr=float(impostor_accept.mean()),
        fnmr=float(1.0 - genuine_accept.mean()),
        genuine_pairs=num_genuine_pairs,
        impostor_pairs=num_impostor_pairs,
    )


def sweep_eer(
    pop: SyntheticPopulation,
    d_grid,
    pairs_per_point: int,
    rng: np.random.Generator,
) -> tuple[list[RateReport], EerEstimate | None]:
    """Rates per grid point plus the interpolated equal-error crossing.

    Returns None for the estimate when the fnmr and fmr curves do not cross
    anywhere on the grid (including the degenerate one-point grid).
    """
    reports = [evaluate_rates(pop, d, pairs_per_point, pairs_per_point, rng) for d in d_grid]
    return reports, _crossing(reports)


def _crossing(reports) -> EerEstimate | None:
    if len(reports) < 2:
        return None
    gaps = [r.fnmr - r.fmr for r in reports]
    for i in range(len(reports) - 1):
        if gaps[i] > 0 >= gaps[i + 1]:
            t = gaps[i] / (gaps[i] - gaps[i + 1])
            eer = reports[i].fnmr + t * (reports[i + 1].fnmr - reports[i].fnmr)
            d = reports[i].d + t * (reports[i + 1].d - reports[i].d)
            return EerEstimate(eer=eer, d=d)
    return None


def reports_to_csv(reports, dest) -> None:
    """Write sweep rows; ``dest`` is a path or text file object."""
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="") if own else dest
    try:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_FIELDS)
        for r in reports:
            writer.writerow([repr(r.d), repr(r.fmr), repr(r.fnmr), r.genuine_pairs, r.impostor_pairs])
    finally:
        if own:
            fh.close()


def reports_from_csv(src) -> list[RateReport]:
    own = isinstance(src, (str, os.PathLike))
    fh = open(src, "r", newline="") if own else src
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and tuple(header) != SWEEP_CSV_FIELDS:
            raise DecodeError(f"unexpected sweep header {header}")
        out = []
        for row in reader:
            if len(row) != 5:
                raise DecodeError(f"sweep row has {len(row)} fields: {row}")
            out.append(
                RateReport(
                    d=float(row[0]),
                    fmr=float(row[1]),
                    fnmr=float(row[2]),
                    genuine_pairs=int(row[3]),
                    impostor_pairs=int(row[4]),
                )
            )
        return out
    finally:
        if own:
            fh.close()


def load_features_csv(path) -> list[tuple[str, np.ndarray]]:
    """Rows of ``label,v1,...,vn``; every row must have the same width."""
    rows: list[tuple[str, np.ndarray]] = []
    width = None
    with open(path, "r", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) < 2:
                raise DecodeError(f"line {lineno}: need a label and at least one value")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DecodeError(
                    f"line {lineno}: ragged row ({len(row)} fields, expected {width})"
                )
            try:
                vec = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DecodeError(f"line {lineno}: {exc}") from exc
            rows.append((row[0], vec))
    return rows


def save_features_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for label, vec in rows:
            writer.writerow([label] + [repr(float(v)) for v in vec])
