"""Seeded Monte Carlo simulation of the cell population.

Randomness is counter based: every uniform is a hash of
``(seed, cell_id, generation, stream)``. A cell's fate therefore does not
depend on which other cells exist or in what order they are processed,
so chunked multi-threaded stepping reproduces the sequential run bit for
bit.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core_model import MAlphaParams, ModelParams, as_model, binomial_pmf

log = logging.getLogger(__name__)

DEFAULT_CAP = 1_000_000
DEFAULT_STEP_CAP = 10_000_000

_STREAM_INFLOW = 0
_STREAM_DIVIDE = 1
_STREAM_SPLIT = 2
_STREAM_THIN = 3

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


class PopulationCapError(RuntimeError):
    def __init__(self, message: str, t: int, states: list):
        super().__init__(message)
        self.t = t
        self.states = states


class ExtinctError(ValueError):
    pass


class StepCapError(RuntimeError):
    pass


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def cell_seed(seed: int, cell_id) -> np.ndarray:
    """Per-cell stream seed, a 64-bit mix of the run seed and cell id."""
    ids = np.asarray(cell_id, dtype=np.uint64)
    return _splitmix(_splitmix(np.full(ids.shape, seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64)) ^ ids)


def uniforms(seed: int, cell_id, generation: int, stream: int) -> np.ndarray:
    """Uniforms in ``[0, 1)`` for the given cells at one generation."""
    with np.errstate(over="ignore"):
        base = cell_seed(seed, cell_id)
        counter = np.uint64((generation * 8 + stream) & 0xFFFFFFFFFFFFFFFF)
        h = _splitmix(base ^ _splitmix(np.full(base.shape, counter, dtype=np.uint64)))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


class _Tables:
    """Precomputed cumulative tables for inverse-CDF sampling."""

    def __init__(self, params: ModelParams):
        self.n = params.n
        self.p = params.p
        self.inflow_values = np.flatnonzero(params.inflow_pmf)
        probs = params.inflow_pmf[self.inflow_values]
        self.inflow_cdf = np.cumsum(probs)
        self.inflow_cdf[-1] = 1.0
        smax = params.n - 1 + params.max_inflow
        self.b = params.b_vector(smax + 1)
        self.binom_cdf = []
        for s in range(smax + 1):
            c = np.cumsum(binomial_pmf(s, params.p))
            c[-1] = 1.0
            self.binom_cdf.append(c)

    def sample_inflow(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.inflow_cdf, u, side="right")
        return self.inflow_values[idx]

    def sample_binomial(self, s: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Exact Bin(s, p) draws by inversion, grouped by ``s``."""
        out = np.empty(s.shape, dtype=np.int64)
        if s.size == 0:
            return out
        order = np.argsort(s, kind="stable")
        s_sorted = s[order]
        cuts = np.flatnonzero(np.diff(s_sorted)) + 1
        for group in np.split(order, cuts):
            k = int(s[group[0]])
            out[group] = np.searchsorted(self.binom_cdf[k], u[group], side="right")
        return out

    def transition(self, ages: np.ndarray, u_inflow, u_div, u_split):
        """Vectorised transition rule for non-senescent ``ages``.

        Returns ``(new_age, daughter, divided)``; ``daughter`` is ``n + 1``
        where no division happened.
        """
        n = self.n
        s = ages + self.sample_inflow(u_inflow)
        divided = u_div < self.b[s]
        new_age = np.minimum(s, n)
        daughter = np.full(ages.shape, n + 1, dtype=np.int64)
        if divided.any():
            sd = s[divided]
            kept = self.sample_binomial(sd, u_split[divided])
            new_age[divided] = np.minimum(kept, n)
            daughter[divided] = np.minimum(sd - kept, n)
        return new_age, daughter, divided


_TABLE_CACHE: dict[int, tuple[ModelParams, _Tables]] = {}


def _tables(params: ModelParams) -> _Tables:
    hit = _TABLE_CACHE.get(id(params))
    if hit is not None and hit[0] is params:
        return hit[1]
    tables = _Tables(params)
    _TABLE_CACHE.clear()
    _TABLE_CACHE[id(params)] = (params, tables)
    return tables


def step_cell(params: ModelParams | MAlphaParams, age: int, rng: np.random.Generator):
    """One time step of a single cell.

    Returns ``(new_age, daughter_age_or_None, divided)``.
    """
    model = as_model(params)
    if not 0 <= age <= model.n:
        raise ValueError(f"age must lie in 0..{model.n}, got {age}")
    if age == model.n:
        return model.n, None, False
    u = rng.random(3)
    new_age, daughter, divided = _tables(model).transition(np.array([age]), u[:1], u[1:2], u[2:])
    if divided[0]:
        return int(new_age[0]), int(daughter[0]), True
    return int(new_age[0]), None, False


def step_cells(params: ModelParams | MAlphaParams, ages, seed: int, generation: int = 0, ids=None):
    """Vectorised `step_cell` for many cells at one generation.

    Cell ``k`` uses id ``ids[k]`` (default ``k``). Absorbed cells stay at
    ``n``. Returns ``(new_age, daughter, divided)`` arrays with
    ``daughter = n + 1`` where no division happened.
    """
    model = as_model(params)
    ages = np.asarray(ages, dtype=np.int64)
    if np.any((ages < 0) | (ages > model.n)):
        raise ValueError(f"ages must lie in 0..{model.n}")
    ids = np.arange(ages.size, dtype=np.uint64) if ids is None else np.asarray(ids, dtype=np.uint64)
    new_age = np.full(ages.shape, model.n, dtype=np.int64)
    daughter = np.full(ages.shape, model.n + 1, dtype=np.int64)
    divided = np.zeros(ages.shape, dtype=bool)
    live = ages < model.n
    if live.any():
        a, d, dv = _step_chunk(_tables(model), seed, ids[live], ages[live], generation)
        new_age[live], daughter[live], divided[live] = a, d, dv
    return new_age, daughter, divided


def _step_chunk(tables: _Tables, seed: int, ids: np.ndarray, ages: np.ndarray, t: int):
    return tables.transition(
        ages,
        uniforms(seed, ids, t, _STREAM_INFLOW),
        uniforms(seed, ids, t, _STREAM_DIVIDE),
        uniforms(seed, ids, t, _STREAM_SPLIT),
    )


def _step_all(tables, seed, ids, ages, t, pool: ThreadPoolExecutor | None, threads: int):
    if pool is None or ids.size < 2 * threads:
        return _step_chunk(tables, seed, ids, ages, t)
    bounds = np.linspace(0, ids.size, threads + 1).astype(int)
    parts = list(
        pool.map(
            lambda k: _step_chunk(tables, seed, ids[bounds[k] : bounds[k + 1]], ages[bounds[k] : bounds[k + 1]], t),
            range(threads),
        )
    )
    return tuple(np.concatenate([part[i] for part in parts]) for i in range(3))


@dataclass(frozen=True)
class LifespanSamples:
    samples: np.ndarray
    mean: float
    stderr: float


def simulate_lifespan(
    params: ModelParams | MAlphaParams,
    start_age: int,
    n_samples: int,
    seed: int,
    step_cap: int = DEFAULT_STEP_CAP,
) -> LifespanSamples:
    """Count divisions of independent mother lineages until senescence.

    Daughters are discarded. Lineage ``k`` uses cell id ``k``.
    """
    model = as_model(params)
    n = model.n
    if not 0 <= start_age < n:
        raise ValueError(f"start_age must lie in 0..{n - 1}")
    tables = _tables(model)
    ids = np.arange(n_samples, dtype=np.uint64)
    ages = np.full(n_samples, start_age, dtype=np.int64)
    counts = np.zeros(n_samples, dtype=np.int64)
    alive = np.arange(n_samples)
    t = 0
    while alive.size:
        if t >= step_cap:
            raise StepCapError(f"lineage {int(alive[0])} not absorbed after {step_cap} steps")
        new_age, _, divided = _step_chunk(tables, seed, ids[alive], ages[alive], t)
        ages[alive] = new_age
        counts[alive] += divided
        alive = alive[new_age < n]
        t += 1
    samples = counts.astype(float)
    stderr = float(samples.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("nan")
    return LifespanSamples(samples=samples, mean=float(samples.mean()), stderr=stderr)


@dataclass(frozen=True)
class PopulationState:
    """Type counts ``Z_t`` over ages ``0..n-1`` plus senescent cells.

    When thinning is active each simulated cell stands for ``scale`` cells.
    """

    t: int
    counts: np.ndarray
    senescent_count: int
    scale: float = 1.0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def initial(cls, n: int, types: dict[int, int] | Sequence[int]) -> "PopulationState":
        counts = np.zeros(n, dtype=np.int64)
        if isinstance(types, dict):
            for i, c in types.items():
                if not 0 <= int(i) < n or int(c) < 0:
                    raise ValueError(f"invalid initial entry {i}: {c}")
                counts[int(i)] += int(c)
        else:
            counts[:] = np.asarray(types, dtype=np.int64)
            if np.any(counts < 0):
                raise ValueError("initial counts must be nonnegative")
        return cls(t=0, counts=counts, senescent_count=0)


@dataclass
class Cell:
    id: int
    parent_id: int | None
    birth_time: int
    age_trajectory: list[int] = field(default_factory=list)
    division_flags: list[bool] = field(default_factory=list)
    daughter_types_at_birth: list[int] = field(default_factory=list)
    senescent: bool = False


@dataclass
class LineageTree:
    """All cells of a run keyed by id. Several roots are allowed."""

    cells: dict[int, Cell]
    horizon: int
    seed: int
    params: ModelParams

    @property
    def roots(self) -> list[Cell]:
        return [c for c in self.cells.values() if c.parent_id is None]

    @property
    def root(self) -> Cell:
        return self.roots[0]

    def children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {i: [] for i in self.cells}
        for c in self.cells.values():
            if c.parent_id is not None:
                out[c.parent_id].append(c.id)
        return out


@dataclass
class SimulationResult:
    states: list[PopulationState]
    tree: LineageTree | None
    cells_created: int
    divisions: int


def simulate_population(
    params: ModelParams | MAlphaParams,
    initial: PopulationState,
    horizon: int,
    seed: int,
    cap: int = DEFAULT_CAP,
    record_tree: bool = False,
    thin_above: int | None = None,
    threads: int = 1,
) -> SimulationResult:
    """Synchronous generations of the branching population.

    Every living cell steps once per time unit; daughters join at ``t + 1``.
    Cells reaching age ``n`` leave the counts for ``senescent_count``.
    Initial cells get ids ``0..N-1`` in order of type; each daughter gets
    the next free id, in order of its mother's id.

    If ``thin_above`` is set, whenever more than that many cells are alive
    each cell (senescent tally included) is kept with probability 1/2 and
    ``scale`` doubles. Otherwise exceeding ``cap`` raises
    `PopulationCapError` carrying the states reached so far.
    """
    model = as_model(params)
    n = model.n
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if initial.counts.shape != (n,):
        raise ValueError(f"initial counts must have length {n}")
    if initial.total > cap:
        raise ValueError(f"cap {cap} is below the initial population {initial.total}")
    if record_tree and thin_above is not None:
        raise ValueError("tree recording and thinning cannot be combined")
    tables = _tables(model)

    ages = np.repeat(np.arange(n, dtype=np.int64), initial.counts)
    ids = np.arange(ages.size, dtype=np.uint64)
    next_id = ages.size
    senescent = int(initial.senescent_count)
    scale = float(initial.scale)
    divisions = 0
    t0 = initial.t
    states = [PopulationState(t0, initial.counts.copy(), senescent, scale)]

    cells: dict[int, Cell] = {}
    if record_tree:
        for cid, age in zip(ids.tolist(), ages.tolist()):
            cells[cid] = Cell(cid, None, t0, [age])

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for step in range(horizon):
            t = t0 + step
            new_age, daughter, divided = _step_all(tables, seed, ids, ages, t, pool, threads)
            n_div = int(divided.sum())
            divisions += n_div
            mothers = ids[divided]
            d_ids = np.arange(next_id, next_id + n_div, dtype=np.uint64)
            d_ages = daughter[divided]
            next_id += n_div

            if record_tree:
                for cid, a, dv, eta in zip(ids.tolist(), new_age.tolist(), divided.tolist(), daughter.tolist()):
                    c = cells[cid]
                    c.age_trajectory.append(a)
                    c.division_flags.append(dv)
                    c.daughter_types_at_birth.append(eta)
                    c.senescent = a == n
                for cid, mid, a in zip(d_ids.tolist(), mothers.tolist(), d_ages.tolist()):
                    cells[cid] = Cell(cid, mid, t + 1, [a], senescent=a == n)

            all_ids = np.concatenate([ids, d_ids])
            all_ages = np.concatenate([new_age, d_ages])
            alive = all_ages < n
            senescent += int((~alive).sum())
            ids, ages = all_ids[alive], all_ages[alive]

            if thin_above is not None:
                round_ = 0
                while ids.size > thin_above:
                    keep = uniforms(seed, ids, t * 64 + round_, _STREAM_THIN) < 0.5
                    ids, ages = ids[keep], ages[keep]
                    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, t, round_, 0x7417])
                    senescent = int(rng.binomial(senescent, 0.5))
                    scale *= 2.0
                    round_ += 1

            counts = np.bincount(ages, minlength=n).astype(np.int64)
            states.append(PopulationState(t + 1, counts, senescent, scale))
            if ids.size > cap:
                raise PopulationCapError(
                    f"population {ids.size} exceeds cap {cap} at t={t + 1}", t=t + 1, states=states
                )
    finally:
        if pool is not None:
            pool.shutdown()

    tree = LineageTree(cells=cells, horizon=horizon, seed=seed, params=model) if record_tree else None
    return SimulationResult(states=states, tree=tree, cells_created=next_id, divisions=divisions)


def empirical_type_distribution(states: Sequence[PopulationState], t: int) -> np.ndarray:
    for state in states:
        if state.t == t:
            total = state.total
            if total == 0:
                raise ExtinctError(f"population extinct at t={t}")
            return state.counts / total
    raise KeyError(f"no state recorded at t={t}")


def fitted_growth_rate(states: Sequence[PopulationState], t_from: int = 0) -> float:
    """``exp`` of the least-squares slope of ``log(scale * total)`` against ``t``."""
    pts = [(s.t, np.log(s.total * s.scale)) for s in states if s.t >= t_from and s.total > 0]
    if len(pts) < 2:
        raise ValueError("need at least two non-extinct states to fit growth")
    t, y = np.array(pts).T
    return float(np.exp(np.polyfit(t, y, 1)[0]))


def is_extinct(state: PopulationState) -> bool:
    return state.total == 0


# --- tree serialisation ---------------------------------------------------


def params_to_dict(params: ModelParams) -> dict:
    if params.malpha is not None:
        ma = params.malpha
        return {"n": ma.n, "m": ma.m, "p": ma.p, "alpha": ma.alpha}
    return {
        "n": params.n,
        "inflow_pmf": params.inflow_pmf.tolist(),
        "p": params.p,
        "division_probs": params.division_probs.tolist(),
    }


def params_from_dict(d: dict) -> ModelParams:
    keys = set(d)
    if keys == {"n", "m", "p", "alpha"}:
        return MAlphaParams(d["n"], d["m"], d["p"], d["alpha"]).to_model()
    if keys == {"n", "inflow_pmf", "p", "division_probs"}:
        return ModelParams(d["n"], d["inflow_pmf"], d["p"], d["division_probs"])
    raise ValueError(f"unrecognised model keys {sorted(keys)}")


def tree_to_dict(tree: LineageTree) -> dict:
    return {
        "params": params_to_dict(tree.params),
        "seed": int(tree.seed),
        "horizon": int(tree.horizon),
        "cells": [
            {
                "id": c.id,
                "parent": c.parent_id,
                "birth_time": c.birth_time,
                "ages": list(c.age_trajectory),
                "divided": list(c.division_flags),
                "senescent": c.senescent,
            }
            for c in sorted(tree.cells.values(), key=lambda c: c.id)
        ],
    }


def tree_from_dict(d: dict) -> LineageTree:
    params = params_from_dict(d["params"])
    n = params.n
    cells = {
        int(c["id"]): Cell(
            id=int(c["id"]),
            parent_id=None if c["parent"] is None else int(c["parent"]),
            birth_time=int(c["birth_time"]),
            age_trajectory=[int(a) for a in c["ages"]],
            division_flags=[bool(x) for x in c["divided"]],
            senescent=bool(c["senescent"]),
        )
        for c in d["cells"]
    }
    # daughter types are the birth ages of the children, matched by birth time
    born = {(c.parent_id, c.birth_time): c.age_trajectory[0] for c in cells.values() if c.parent_id is not None}
    for c in cells.values():
        c.daughter_types_at_birth = [
            born[(c.id, c.birth_time + k + 1)] if flag else n + 1 for k, flag in enumerate(c.division_flags)
        ]
    return LineageTree(cells=cells, horizon=int(d["horizon"]), seed=int(d["seed"]), params=params)


def export_tree(tree: LineageTree, format: str = "json") -> bytes:
    """Serialise a lineage tree as JSON or Graphviz dot."""
    if not tree.cells:
        raise ValueError("cannot export an empty tree")
    if format == "json":
        return json.dumps(tree_to_dict(tree), separators=(",", ":")).encode()
    if format == "dot":
        lines = ["digraph lineage {"]
        for c in sorted(tree.cells.values(), key=lambda c: c.id):
            lines.append(f'  c{c.id} [label="{c.id}:{c.age_trajectory[0]}@{c.birth_time}"];')
        for c in sorted(tree.cells.values(), key=lambda c: c.id):
            if c.parent_id is not None:
                lines.append(f"  c{c.parent_id} -> c{c.id};")
        lines.append("}")
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown tree format {format!r}")


def parse_tree(data: bytes | str) -> LineageTree:
    return tree_from_dict(json.loads(data))
