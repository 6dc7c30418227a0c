"""Small dense numerical kernels.

Gaussian elimination with partial pivoting, power iteration for the
dominant eigenpair of a nonnegative matrix, and bisection root finding.
Matrices here are at most a few hundred square, so plain algorithms are
fast enough and easy to audit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class NumericalError(RuntimeError):
    """Base class for failures of the numerical kernels."""


class SingularMatrixError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class BracketError(NumericalError, ValueError):
    pass


@dataclass(frozen=True)
class EigenPair:
    """Dominant eigenvalue with left and right eigenvectors.

    Both vectors are nonnegative and scaled to unit max-norm.
    """

    value: float
    left: np.ndarray
    right: np.ndarray
    iterations: int
    residual: float


def _as_square(A) -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    Raises
    ------
    SingularMatrixError
        If a pivot falls below ``1e-13 * ||A||_inf``.
    """
    A = _as_square(A)
    x = np.array(b, dtype=float).reshape(-1)
    n = A.shape[0]
    if x.shape[0] != n:
        raise ValueError(f"dimension mismatch: A is {n}x{n}, b has {x.shape[0]}")
    if n == 0:
        return x
    scale = np.abs(A).sum(axis=1).max()
    threshold = 1e-13 * scale
    for k in range(n):
        piv = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[piv, k]) <= threshold:
            raise SingularMatrixError(f"singular system (pivot {A[piv, k]:.3e} at column {k})")
        if piv != k:
            A[[k, piv]] = A[[piv, k]]
            x[[k, piv]] = x[[piv, k]]
        factors = A[k + 1 :, k] / A[k, k]
        A[k + 1 :, k:] -= np.outer(factors, A[k, k:])
        x[k + 1 :] -= factors * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - A[k, k + 1 :] @ x[k + 1 :]) / A[k, k]
    return x


def _iterate(A: np.ndarray, tol: float, max_iter: int, vec_tol: float):
    n = A.shape[0]
    x = np.ones(n)
    value = 0.0
    for it in range(1, max_iter + 1):
        y = A @ x
        norm = np.abs(y).max()
        if norm == 0.0:
            # nilpotent direction; the dominant eigenvalue is zero
            return 0.0, x, it
        y /= norm
        if abs(norm - value) < tol and np.abs(y - x).max() < vec_tol:
            return norm, y, it
        x, value = y, norm
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        residual=float(np.abs(A @ x - value * x).max()),
    )


def power_iteration(A, tol: float = 1e-12, max_iter: int = 1_000_000) -> EigenPair:
    """Dominant eigenpair of a nonnegative matrix by power iteration.

    The right vector comes from iterating ``A`` and the left vector from
    iterating ``A.T``, both from the all-ones start vector. Iteration stops
    when successive eigenvalue estimates differ by less than `tol` and the
    max-norm-normalised vector moves by less than ``1e-10``.
    """
    A = _as_square(A)
    if np.any(A < 0):
        raise ValueError("power_iteration requires a nonnegative matrix")
    vec_tol = 1e-10
    value, right, it_r = _iterate(A, tol, max_iter, vec_tol)
    value_l, left, it_l = _iterate(A.T, tol, max_iter, vec_tol)
    residual = max(
        float(np.abs(A @ right - value * right).max()),
        float(np.abs(left @ A - value * left).max()),
    )
    if residual > 1e-10:
        raise ConvergenceError(f"eigen residual {residual:.3e} exceeds 1e-10", residual)
    return EigenPair(
        value=float(value),
        left=np.clip(left, 0.0, None),
        right=np.clip(right, 0.0, None),
        iterations=max(it_r, it_l),
        residual=residual,
    )


def find_root_bracketed(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Bisection on ``[lo, hi]``; requires ``f(lo) * f(hi) < 0``."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if math.copysign(1.0, flo) == math.copysign(1.0, fhi):
        raise BracketError(f"invalid bracket: f({lo})={flo}, f({hi})={fhi}")
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if math.copysign(1.0, fmid) == math.copysign(1.0, flo):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)
