"""Expected replicative lifespan from the absorbing-chain linear system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_model import MAlphaParams, ModelParams, as_model, transition_kernel
from .numerics import SingularMatrixError, solve_linear


class NonAbsorbingChainError(ArithmeticError):
    """Absorption at the senescence age is not almost sure."""


@dataclass(frozen=True)
class LifespanResult:
    lam: np.ndarray
    beta: np.ndarray
    truncated: bool

    @property
    def lambda0(self) -> float:
        return float(self.lam[0])


def expected_division_prob(params: ModelParams) -> np.ndarray:
    """``beta_i = E b_{i + tau}`` for ``i = 0..n-1``."""
    n = params.n
    beta = np.zeros(n)
    for k in np.flatnonzero(params.inflow_pmf):
        beta += params.inflow_pmf[k] * params.b_vector(n + int(k))[int(k) :]
    return beta


def _solve(P0: np.ndarray, beta: np.ndarray) -> np.ndarray:
    A = np.eye(P0.shape[0]) - P0
    try:
        lam = solve_linear(A, beta)
    except SingularMatrixError as exc:
        raise NonAbsorbingChainError(f"non-absorbing chain: {exc}") from exc
    if not np.all(np.isfinite(lam)) or np.any(lam < -1e-9):
        raise NonAbsorbingChainError("non-absorbing chain: lifespan solve gave negative or non-finite values")
    return np.clip(lam, 0.0, None)


def expected_lifespan(params: ModelParams | MAlphaParams, truncated: bool | None = None) -> LifespanResult:
    """Solve ``(I - P0) lambda = beta`` for the expected number of divisions.

    For (m, alpha) inputs the smaller ``(n - m)``-square system is solved by
    default, since ages ``n - m .. n - 1`` reach senescence in one step
    without dividing. Pass ``truncated=False`` to force the full system.
    """
    model = as_model(params)
    n = model.n
    beta = expected_division_prob(model)
    P = transition_kernel(model).P
    use_truncated = model.malpha is not None if truncated is None else truncated
    if use_truncated and model.malpha is None:
        raise ValueError("the truncated solve needs (m, alpha) parameters")
    lam = np.zeros(n + 1)
    if use_truncated:
        size = n - model.malpha.m
        lam[:size] = _solve(P[:size, :size], model.b_vector(n)[model.malpha.m :])
    else:
        lam[:n] = _solve(P[:n, :n], beta)
    return LifespanResult(lam=lam, beta=beta, truncated=use_truncated)


def lifespan_recursion_residual(params: ModelParams | MAlphaParams, lam) -> float:
    """``max_i |lambda_i - beta_i - sum_j p_ij lambda_j|`` over ``i < n``."""
    model = as_model(params)
    n = model.n
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (n + 1,):
        raise ValueError(f"lambda must have length n + 1 = {n + 1}")
    P = transition_kernel(model).P
    beta = expected_division_prob(model)
    return float(np.abs(lam[:n] - beta - P[:n, :n] @ lam[:n]).max())
