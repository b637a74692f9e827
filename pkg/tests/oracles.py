"""Independent reference computations used to validate the fast paths.

Everything here is deliberately naive (exhaustive search, scalar math) and
shares no code with the implementation under test.
"""

import itertools

import numpy as np


def cv_bruteforce(columns: np.ndarray, coords: np.ndarray, window: int = 2):
    """Exhaustive nearest-lattice-point search.

    Scans every integer vector within +-window of floor(coords) and returns
    (minimal squared distance, list of minimizing integer vectors). Distances
    are measured in standard coordinates via the basis columns.
    """
    n = len(coords)
    base = np.floor(coords).astype(np.int64)
    best = None
    winners = []
    for offsets in itertools.product(range(-window, window + 1), repeat=n):
        z = base + np.array(offsets, dtype=np.int64)
        diff = columns @ (coords - z)
        dist = float(diff @ diff)
        if best is None or dist < best - 1e-12:
            best = dist
            winners = [z]
        elif abs(dist - best) <= 1e-12:
            winners.append(z)
    return best, winners


def cv_bruteforce_point_distance(columns: np.ndarray, coords: np.ndarray, point: np.ndarray) -> float:
    """Squared distance between coords and one integer point, standard metric."""
    diff = columns @ (coords - point)
    return float(diff @ diff)
