"""Dense linear algebra over exact rationals and over float64."""
from fractions import Fraction
import math
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg

from pocan.errors import SingularSystemError

_PIVOT_TOL = 1e-14


def frac_array(values) -> np.ndarray:
    """Converts a nested sequence into a numpy object array of Fractions."""
    arr = np.array(values, dtype=object)
    flat = arr.reshape(-1)
    for i, v in enumerate(flat):
        flat[i] = Fraction(v)
    return arr


def identity(n: int) -> np.ndarray:
    return np.array([[Fraction(int(i == j)) for j in range(n)] for i in range(n)], dtype=object)


def _eliminate(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray, list]:
    """Gauss-Jordan elimination in place on copies of a and b; returns (a, b, pivot_columns)."""
    a = a.copy()
    b = b.copy()
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        pivot = next((j for j in range(r, rows) if a[j, c] != 0), None)
        if pivot is None:
            continue
        if pivot != r:
            a[[r, pivot]] = a[[pivot, r]]
            b[[r, pivot]] = b[[pivot, r]]
        inv = 1 / a[r, c]
        a[r, :] = a[r, :] * inv
        b[r] = b[r] * inv
        for j in range(rows):
            if j != r and a[j, c] != 0:
                factor = a[j, c]
                a[j, :] = a[j, :] - factor * a[r, :]
                b[j] = b[j] - factor * b[r]
        pivots.append(c)
        r += 1
    return a, b, pivots


def rank_exact(a: np.ndarray) -> int:
    rhs = np.array([Fraction(0)] * a.shape[0], dtype=object)
    _, _, pivots = _eliminate(a, rhs)
    return len(pivots)


def solve_exact(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Solves the square system a x = b exactly.

    Args:
        a: n x n object array of Fractions.
        b: length-n (or n x k) object array of Fractions.

    Returns:
        The unique solution as an object array of Fractions.

    Raises:
        SingularSystemError: If a is singular.
    """
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"Expected a square matrix, got shape {a.shape}")
    if n == 0:
        return np.array([], dtype=object)
    reduced, x, pivots = _eliminate(a, b)
    if len(pivots) < n:
        raise SingularSystemError(f"Singular {n}x{n} system (rank {len(pivots)})")
    return x


def inverse_exact(a: np.ndarray) -> np.ndarray:
    return solve_exact(a, identity(a.shape[0]))


def solve_float(a: np.ndarray, b: np.ndarray, refine: int = 1) -> np.ndarray:
    """
    Solves a x = b in float64 by LU factorisation followed by iterative refinement.

    Raises:
        SingularSystemError: If a pivot of the factorisation vanishes.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return np.zeros_like(b)
    lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    diag = np.abs(np.diag(lu))
    scale = max(1.0, float(np.max(np.abs(a))))
    if not np.all(np.isfinite(diag)) or np.min(diag) <= _PIVOT_TOL * scale:
        raise SingularSystemError(f"Numerically singular {a.shape[0]}x{a.shape[0]} system")
    x = scipy.linalg.lu_solve((lu, piv), b)
    for _ in range(refine):
        r = b - a @ x
        x = x + scipy.linalg.lu_solve((lu, piv), r)
    return x


def as_float(values: Sequence) -> np.ndarray:
    return np.array([float(v) for v in values], dtype=float)


def min_singular_value(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return math.inf
    return float(scipy.linalg.svdvals(a, check_finite=False)[-1])
