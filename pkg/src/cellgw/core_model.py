"""Model parameters and the biological-age Markov chain.

A cell holding ``i`` harmful proteins receives ``k`` more with probability
``q[k]``, then divides with probability ``b[i + k]``. On division each
protein stays with the mother with probability ``p``; the rest go to the
daughter. Ages are capped at the absorbing senescence age ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np
from scipy.special import gammaln

from .numerics import find_root_bracketed

PMF_TOLERANCE = 1e-9
LOG_SPACE_CUTOFF = 50
SNAP_TOLERANCE = 1e-9
# |d_i| at or below this is treated as a zero jump (not rejuvenating)
JUMP_ZERO_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MAlphaParams:
    """The constant-inflow, power-law division special case.

    Inflow is always ``m`` and ``b_i = 1 - (i/n)**alpha`` for ``i <= n``.
    """

    n: int
    m: int
    p: float
    alpha: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2 in the (m, alpha) case, got {self.n}")
        if int(self.m) != self.m or not 1 <= self.m <= self.n - 1:
            raise ValueError(f"m must be an integer in 1..n-1, got {self.m}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not self.alpha >= 1.0 or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "alpha", float(self.alpha))

    def division_probs(self) -> np.ndarray:
        i = np.arange(self.n + 1)
        return 1.0 - (i / self.n) ** self.alpha

    def to_model(self) -> "ModelParams":
        pmf = np.zeros(self.m + 1)
        pmf[self.m] = 1.0
        return ModelParams(self.n, pmf, self.p, self.division_probs(), malpha=self)

    def replace(self, **changes) -> "MAlphaParams":
        fields = {"n": self.n, "m": self.m, "p": self.p, "alpha": self.alpha}
        fields.update(changes)
        return MAlphaParams(**fields)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """General model: senescence age, inflow pmf, retention, division probs.

    ``division_probs[i]`` is the division probability of a cell holding
    ``i`` proteins after inflow; indices past the end are taken as 0.
    """

    n: int
    inflow_pmf: np.ndarray
    p: float
    division_probs: np.ndarray
    malpha: MAlphaParams | None = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        q = np.array(self.inflow_pmf, dtype=float).reshape(-1)
        b = np.array(self.division_probs, dtype=float).reshape(-1)
        if q.size == 0:
            raise ValueError("inflow_pmf must be non-empty")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise ValueError("inflow_pmf entries must be finite and nonnegative")
        total = q.sum()
        if abs(total - 1.0) > PMF_TOLERANCE:
            raise ValueError(f"inflow_pmf sums to {total!r}, not 1")
        q = q / total
        if not np.all(np.isfinite(b)) or np.any(b < 0) or np.any(b > 1):
            raise ValueError("division_probs entries must lie in [0, 1]")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        q.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "inflow_pmf", q)
        object.__setattr__(self, "division_probs", b)

    @property
    def max_inflow(self) -> int:
        """K, the largest inflow value in the pmf's support vector."""
        return self.inflow_pmf.size - 1

    def b(self, i: int) -> float:
        return float(self.division_probs[i]) if i < self.division_probs.size else 0.0

    def b_vector(self, length: int) -> np.ndarray:
        """``b_0 .. b_{length-1}`` with zero padding."""
        out = np.zeros(length)
        k = min(length, self.division_probs.size)
        out[:k] = self.division_probs[:k]
        return out

    def with_p(self, p: float) -> "ModelParams":
        malpha = self.malpha.replace(p=p) if self.malpha is not None else None
        return ModelParams(self.n, self.inflow_pmf, p, self.division_probs, malpha=malpha)

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            self.n == other.n
            and self.p == other.p
            and np.array_equal(self.inflow_pmf, other.inflow_pmf)
            and np.array_equal(self.division_probs, other.division_probs)
            and self.malpha == other.malpha
        )

    __hash__ = None


def as_model(params: ModelParams | MAlphaParams) -> ModelParams:
    return params.to_model() if isinstance(params, MAlphaParams) else params


def binomial_weight(k: int, j: int, p: float) -> float:
    """``C(k, j) p^j (1-p)^(k-j)``, zero outside ``0 <= j <= k``."""
    if j < 0 or j > k:
        return 0.0
    return float(binomial_pmf(k, p)[j])


def binomial_pmf(k: int, p: float) -> np.ndarray:
    """All weights ``g_k0 .. g_kk`` of Bin(k, p).

    Computed in log space for ``k > 50`` so large coefficients never
    overflow.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    out = np.zeros(k + 1)
    if p == 0.0:
        out[0] = 1.0
        return out
    if p == 1.0:
        out[k] = 1.0
        return out
    j = np.arange(k + 1)
    if k <= LOG_SPACE_CUTOFF:
        coef = np.array([math.comb(k, int(x)) for x in j], dtype=float)
        return coef * p**j * (1.0 - p) ** (k - j)
    log_coef = gammaln(k + 1) - gammaln(j + 1) - gammaln(k - j + 1)
    return np.exp(log_coef + j * math.log(p) + (k - j) * math.log1p(-p))


@dataclass(frozen=True)
class TransitionKernel:
    """Transition matrix ``P = Q + R`` on states ``0..n``.

    ``Q`` carries the no-division mass and ``R`` the division mass.
    """

    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    @property
    def n(self) -> int:
        return self.P.shape[0] - 1


def _capped_binomial_row(s: int, p: float, n: int) -> np.ndarray:
    """Distribution of ``min(Bin(s, p), n)`` on ``0..n``."""
    g = binomial_pmf(s, p)
    row = np.zeros(n + 1)
    if s < n:
        row[: s + 1] = g
    else:
        row[:n] = g[:n]
        row[n] = g[n:].sum()
    return row


def division_split(params: ModelParams, p: float | None = None) -> np.ndarray:
    """Matrix ``R(p)`` of the division part, rows ``0..n``.

    ``R[i, j]`` is the probability that a cell of age ``i`` divides and
    the protein count ending up on the side that keeps each protein with
    probability `p` is ``min(j, n)``. ``R(params.p)`` is the mother's
    division kernel; ``R(1 - params.p)`` is the daughter's birth law.
    """
    p = params.p if p is None else p
    n = params.n
    R = np.zeros((n + 1, n + 1))
    q = params.inflow_pmf
    for i in range(n):
        for k in np.flatnonzero(q):
            s = i + int(k)
            bs = params.b(s)
            if bs > 0.0:
                R[i] += q[k] * bs * _capped_binomial_row(s, p, n)
    return R


def transition_kernel(params: ModelParams | MAlphaParams) -> TransitionKernel:
    """Build ``P``, ``Q`` and ``R`` by summing over the finite inflow support."""
    params = as_model(params)
    n = params.n
    q = params.inflow_pmf
    Q = np.zeros((n + 1, n + 1))
    for i in range(n):
        for k in np.flatnonzero(q):
            s = i + int(k)
            Q[i, min(s, n)] += q[k] * (1.0 - params.b(s))
    Q[n, n] = 1.0
    R = division_split(params)
    P = Q + R
    for A in (P, Q, R):
        A.flags.writeable = False
    return TransitionKernel(P=P, Q=Q, R=R)


@dataclass(frozen=True)
class JumpProfile:
    """Expected next state ``h`` and expected jump ``d = h - i``."""

    h: np.ndarray
    d: np.ndarray


def jump_profile(kernel: TransitionKernel) -> JumpProfile:
    states = np.arange(kernel.P.shape[0], dtype=float)
    h = kernel.P @ states
    return JumpProfile(h=h, d=h - states)


def expected_next_state_closed_form(params: ModelParams | MAlphaParams) -> np.ndarray:
    """``E[min(i + tau, n) - (1 - p)(i + tau) b_{i+tau}]`` for ``i < n``.

    Equals ``h_i`` only when ``b_i = 0`` for every ``i >= n``.
    """
    params = as_model(params)
    n, p = params.n, params.p
    h = np.zeros(n)
    for i in range(n):
        for k in np.flatnonzero(params.inflow_pmf):
            s = i + int(k)
            h[i] += params.inflow_pmf[k] * (min(s, n) - (1.0 - p) * s * params.b(s))
    return h


def division_vanishes_beyond_n(params: ModelParams) -> bool:
    return not np.any(params.division_probs[params.n :] > 0)


def rejuvenation_states(kernel: TransitionKernel) -> list[int]:
    """States ``1..n-1`` whose expected jump is negative.

    Jumps within ``JUMP_ZERO_TOLERANCE`` of zero count as zero, so a state
    whose exact jump is 0 is not reported because of rounding noise.
    """
    d = jump_profile(kernel).d
    n = kernel.n
    return [i for i in range(1, n) if d[i] < -JUMP_ZERO_TOLERANCE]


@dataclass(frozen=True)
class RejuvenationInterval:
    empty: bool
    i1: int | None = None
    i2: int | None = None
    y1: float | None = None
    y2: float | None = None

    def states(self) -> list[int]:
        return [] if self.empty else list(range(self.i1, self.i2 + 1))


def _snap(x: float) -> float:
    r = round(x)
    return float(r) if abs(x - r) < SNAP_TOLERANCE else x


def rejuvenation_interval_malpha(params: MAlphaParams) -> RejuvenationInterval:
    """Rejuvenation interval of the (m, alpha) case via root finding.

    Rejuvenation at ``i`` holds iff ``y - y**(1 + alpha) > c`` at
    ``y = (i + m) / n``, with ``c = m / ((1 - p) n)``. The two roots of
    ``y - y**(1 + alpha) = c`` bracket the interval. A root that lands on
    a lattice point (within 1e-9) gives a zero jump there, so that point
    is excluded.
    """
    n, m, p, alpha = params.n, params.m, params.p, params.alpha
    if p >= 1.0:
        return RejuvenationInterval(empty=True)
    c = m / ((1.0 - p) * n)
    y_star = (1.0 + alpha) ** (-1.0 / alpha)

    def g(y: float) -> float:
        return y - y ** (1.0 + alpha) - c

    if g(y_star) <= 0.0:
        return RejuvenationInterval(empty=True)
    y1 = find_root_bracketed(g, 0.0, y_star, tol=1e-12)
    y2 = find_root_bracketed(g, y_star, 1.0, tol=1e-12)
    ny1, ny2 = _snap(n * y1), _snap(n * y2)
    lo = math.ceil(ny1) + (1 if ny1 == int(ny1) else 0)
    hi = math.floor(ny2) - (1 if ny2 == int(ny2) else 0)
    i1, i2 = lo - m, hi - m
    # i + m <= n - 1 always holds for rejuvenation, and i >= 1
    i1 = max(i1, 1)
    i2 = min(i2, n - m - 1)
    if i1 > i2:
        return RejuvenationInterval(empty=True, y1=y1, y2=y2)
    return RejuvenationInterval(empty=False, i1=i1, i2=i2, y1=y1, y2=y2)
