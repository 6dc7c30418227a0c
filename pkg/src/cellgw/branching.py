"""Mean offspring matrix, Perron-Frobenius growth and stable age distribution."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core_model import (
    MAlphaParams,
    ModelParams,
    as_model,
    binomial_pmf,
    division_split,
    rejuvenation_interval_malpha,
    transition_kernel,
)
from .lifespan import expected_lifespan
from .numerics import power_iteration

log = logging.getLogger(__name__)

CRITICAL_BAND = 1e-9


@dataclass(frozen=True)
class MeanMatrix:
    """``M[i, j]``: expected type-``j`` offspring (mother included) of a type-``i`` cell.

    ``M_hat`` and ``M_star`` are the blocks of columns ``< n - m`` and
    ``>= n - m`` over rows ``< n - m``; set only for (m, alpha) inputs.
    """

    M: np.ndarray
    M_hat: np.ndarray | None = None
    M_star: np.ndarray | None = None


def mean_matrix_malpha(params: MAlphaParams) -> np.ndarray:
    """Closed-form mean matrix of the (m, alpha) case."""
    n, m, p, alpha = params.n, params.m, params.p, params.alpha
    M = np.zeros((n, n))
    for i in range(n - m):
        s = i + m
        stay = (s / n) ** alpha
        M[i, s] += stay
        # s < n, so the whole binomial support fits
        M[i, : s + 1] += (1.0 - stay) * (binomial_pmf(s, p) + binomial_pmf(s, 1.0 - p))
    return M


def mean_matrix(params: ModelParams | MAlphaParams) -> MeanMatrix:
    model = as_model(params)
    n = model.n
    kernel = transition_kernel(model)
    daughters = division_split(model, 1.0 - model.p)
    M = (kernel.Q + kernel.R + daughters)[:n, :n]
    M.flags.writeable = False
    if model.malpha is None:
        return MeanMatrix(M=M)
    k = n - model.malpha.m
    return MeanMatrix(M=M, M_hat=M[:k, :k], M_star=M[:k, k:])


def classify(r: float) -> str:
    if abs(r - 1.0) < CRITICAL_BAND:
        return "critical"
    return "supercritical" if r > 1.0 else "subcritical"


@dataclass(frozen=True)
class SpectralResult:
    r: float
    v: np.ndarray
    u: np.ndarray
    a: float
    criticality: str
    iterations: int
    residual: float


def _finish(r: float, v: np.ndarray, u: np.ndarray, iterations: int, residual: float) -> SpectralResult:
    v = v / v.sum()
    u = u / (v @ u)
    a = float(np.arange(v.size) @ v)
    return SpectralResult(r=r, v=v, u=u, a=a, criticality=classify(r), iterations=iterations, residual=residual)


def spectral_full(params: ModelParams | MAlphaParams) -> SpectralResult:
    """Power iteration on the whole ``n x n`` mean matrix."""
    pair = power_iteration(mean_matrix(params).M)
    return _finish(pair.value, pair.left.copy(), pair.right.copy(), pair.iterations, pair.residual)


def spectral(params: ModelParams | MAlphaParams) -> SpectralResult:
    """Growth rate ``r``, stable distribution ``v`` (sums to 1), ``u`` with ``v.u = 1``.

    For (m, alpha) inputs with ``0 < p < 1`` only the irreducible block of
    ages ``< n - m`` is iterated; the tail of ``v`` follows from one step
    of the mean matrix. Otherwise the full mean matrix is iterated.
    """
    model = as_model(params)
    ma = model.malpha
    if ma is None:
        return spectral_full(model)
    if not 0.0 < ma.p < 1.0:
        warnings.warn(
            f"p={ma.p} makes the leading block of the mean matrix lose positivity; "
            "using the full-matrix power iteration",
            RuntimeWarning,
            stacklevel=2,
        )
        return spectral_full(model)
    mm = mean_matrix(model)
    pair = power_iteration(mm.M_hat)
    r = pair.value
    v = np.concatenate([pair.left, pair.left @ mm.M_star / r])
    u = np.concatenate([pair.right, np.zeros(ma.m)])
    return _finish(r, v, u, pair.iterations, pair.residual)


@dataclass(frozen=True)
class SweepRow:
    sweep_var: str
    value: float
    r: float | None = None
    a: float | None = None
    criticality: str | None = None
    i1: int | None = None
    i2: int | None = None
    lambda_0: float | None = None
    error: str | None = None


SWEEP_VARS = ("p", "m", "alpha")


def _sweep_point(base: MAlphaParams, vary: str, value) -> SweepRow:
    try:
        if vary == "m":
            if float(value) != int(value):
                raise ValueError(f"m must be an integer, got {value}")
            value = int(value)
        params = base.replace(**{vary: value})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            spec = spectral(params)
        interval = rejuvenation_interval_malpha(params)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        log.warning("sweep point %s=%s failed: %s", vary, value, exc)
        return SweepRow(sweep_var=vary, value=value, error=f"{type(exc).__name__}: {exc}")
    row = SweepRow(
        sweep_var=vary,
        value=value,
        r=spec.r,
        a=spec.a,
        criticality=spec.criticality,
        i1=interval.i1,
        i2=interval.i2,
    )
    # an ill-conditioned lifespan solve loses only its own column
    try:
        return replace(row, lambda_0=expected_lifespan(params).lambda0)
    except ArithmeticError as exc:
        log.warning("lifespan at %s=%s failed: %s", vary, value, exc)
        return replace(row, error=f"{type(exc).__name__}: {exc}")


def growth_rate_sweep(base: MAlphaParams, vary: str, values, threads: int = 1) -> list[SweepRow]:
    """Evaluate growth rate, average age and friends along one parameter.

    Rows come back in input order; failing points carry an ``error``
    string instead of aborting the sweep.
    """
    if vary not in SWEEP_VARS:
        raise ValueError(f"sweep variable must be one of {SWEEP_VARS}, got {vary!r}")
    values = list(values)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda x: _sweep_point(base, vary, x), values))
    return [_sweep_point(base, vary, x) for x in values]
