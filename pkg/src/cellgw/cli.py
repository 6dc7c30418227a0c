"""Command-line front end.

Subcommands ``analyze``, ``sweep``, ``simulate`` and ``lifespan``. Model
parameters come from flags and/or a JSON config file; flags win.

Exit codes: 0 ok, 2 config error, 3 numerical error, 4 population cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from .branching import SWEEP_VARS, growth_rate_sweep, spectral
from .core_model import (
    MAlphaParams,
    ModelParams,
    jump_profile,
    rejuvenation_interval_malpha,
    rejuvenation_states,
    transition_kernel,
)
from .lifespan import expected_lifespan
from .numerics import NumericalError
from .simulator import (
    PopulationCapError,
    PopulationState,
    export_tree,
    params_from_dict,
    params_to_dict,
    simulate_lifespan,
    simulate_population,
)

log = logging.getLogger("cellgw")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4

MALPHA_KEYS = ("n", "m", "p", "alpha")
GENERAL_KEYS = ("n", "inflow_pmf", "p", "division_probs")
COMMON_OPTIONS = {"out", "format", "threads"}
COMMAND_OPTIONS = {
    "analyze": COMMON_OPTIONS,
    "sweep": COMMON_OPTIONS | {"vary", "values"},
    "simulate": COMMON_OPTIONS | {"seed", "horizon", "initial", "cap", "thin_above", "tree", "tree_format"},
    "lifespan": COMMON_OPTIONS | {"seed", "samples"},
}
DEFAULT_FORMAT = {"analyze": "json", "sweep": "csv", "simulate": "csv", "lifespan": "csv"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated model dict plus command options, as found in a config file."""

    command: str
    model: dict
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, command: str, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        allowed = COMMAND_OPTIONS[command] | {"model"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        if "model" not in d:
            raise ConfigError("config needs a 'model' object")
        cfg = cls(command, dict(d["model"]), {k: v for k, v in d.items() if k != "model"})
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {"model": dict(self.model), **self.options}

    def params(self) -> ModelParams:
        try:
            return params_from_dict(self.model)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid model: {exc}") from exc

    def validate(self) -> None:
        self.params()
        o = self.options
        fmt = o.get("format", DEFAULT_FORMAT[self.command])
        if fmt not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {fmt!r}")
        if "threads" in o and (not isinstance(o["threads"], int) or o["threads"] < 1):
            raise ConfigError("threads must be a positive integer")
        for key in ("seed", "horizon", "samples", "cap", "thin_above"):
            if key in o and o[key] is not None and (not isinstance(o[key], int) or isinstance(o[key], bool) or o[key] < 0):
                raise ConfigError(f"{key} must be a nonnegative integer")
        if self.command == "sweep":
            if self.model.keys() != set(MALPHA_KEYS):
                raise ConfigError("sweep needs an (n, m, p, alpha) model")
            if o.get("vary") not in SWEEP_VARS:
                raise ConfigError(f"vary must be one of {SWEEP_VARS}")
            values = o.get("values")
            if not isinstance(values, list) or not values or not all(isinstance(x, (int, float)) for x in values):
                raise ConfigError("values must be a non-empty list of numbers")
        if self.command == "simulate":
            if "seed" not in o:
                raise ConfigError("simulate requires a seed")
            if "horizon" not in o:
                raise ConfigError("simulate requires a horizon")
            initial = o.get("initial", {"0": 1})
            if not isinstance(initial, dict) or not initial:
                raise ConfigError("initial must map types to counts")
            n = self.model["n"]
            for t, c in initial.items():
                if not str(t).isdigit() or not 0 <= int(t) < n or not isinstance(c, int) or c < 0:
                    raise ConfigError(f"invalid initial entry {t!r}: {c!r}")
            if o.get("tree_format", "json") not in ("json", "dot"):
                raise ConfigError("tree_format must be json or dot")
        if self.command == "lifespan" and o.get("samples", 0) > 0 and "seed" not in o:
            raise ConfigError("lifespan Monte Carlo requires a seed")


def _parse_list(text: str) -> list[float]:
    """Comma list, or ``start:stop:step`` with inclusive stop."""
    text = text.strip()
    if text.count(":") == 2:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("range step must be positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


def _number(x: float):
    return int(x) if float(x).is_integer() else x


def _parse_initial(text: str) -> dict:
    out = {}
    for item in text.split(","):
        t, _, c = item.partition(":")
        out[str(int(t))] = int(c)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--n", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--inflow-pmf", help="comma-separated q_0,...,q_K (general model)")
    g.add_argument("--division-probs", help="comma-separated b_0,b_1,... (general model)")
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cellgw", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="rejuvenation, lifespan and growth report")
    sw = sub.add_parser("sweep", parents=[common], help="growth rate and average age along one parameter")
    sw.add_argument("--vary", choices=SWEEP_VARS)
    sw.add_argument("--values", help="comma list or start:stop:step")
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo population trajectory")
    sim.add_argument("--horizon", type=int)
    sim.add_argument("--initial", help="type:count pairs, e.g. 0:10000 (default 0:1)")
    sim.add_argument("--cap", type=int)
    sim.add_argument("--thin-above", type=int, help="halve the population whenever it exceeds this")
    sim.add_argument("--tree", help="write the lineage tree to this path")
    sim.add_argument("--tree-format", choices=["json", "dot"])
    ls = sub.add_parser("lifespan", parents=[common], help="expected replicative lifespan per age")
    ls.add_argument("--samples", type=int, help="Monte Carlo lineages per start age (0 = analytic only)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    model = dict(base.get("model", {}))
    flag_model = {
        "n": args.n,
        "m": args.m,
        "p": args.p,
        "alpha": args.alpha,
    }
    try:
        if args.inflow_pmf is not None:
            flag_model["inflow_pmf"] = _parse_list(args.inflow_pmf)
        if args.division_probs is not None:
            flag_model["division_probs"] = _parse_list(args.division_probs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for k, v in flag_model.items():
        if v is not None:
            model[k] = v
    # a general-model flag drops the (m, alpha) keys and vice versa
    if args.inflow_pmf is not None or args.division_probs is not None:
        model = {k: v for k, v in model.items() if k in GENERAL_KEYS}
    elif args.m is not None or args.alpha is not None:
        model = {k: v for k, v in model.items() if k in MALPHA_KEYS}

    d = {k: v for k, v in base.items() if k != "model"}
    d["model"] = model
    flags = {
        "out": args.out,
        "format": args.format,
        "threads": args.threads,
        "seed": args.seed,
    }
    try:
        if args.command == "sweep":
            flags["vary"] = args.vary
            flags["values"] = [_number(x) for x in _parse_list(args.values)] if args.values else None
        if args.command == "simulate":
            flags.update(horizon=args.horizon, cap=args.cap, thin_above=args.thin_above, tree=args.tree, tree_format=args.tree_format)
            flags["initial"] = _parse_initial(args.initial) if args.initial else None
        if args.command == "lifespan":
            flags["samples"] = args.samples
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    allowed = COMMAND_OPTIONS[args.command]
    for k, v in flags.items():
        if v is not None and (k in allowed):
            d[k] = v
    if args.seed is not None and "seed" not in allowed:
        log.info("--seed ignored by %s", args.command)
    return RunConfig.from_dict(args.command, d)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x))


def analyze_report(params: ModelParams) -> dict:
    kernel = transition_kernel(params)
    jumps = jump_profile(kernel)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        spec = spectral(params)
    for w in caught:
        log.warning("%s", w.message)
    lam = expected_lifespan(params)
    report = {
        "params": params_to_dict(params),
        "rejuvenation_states": rejuvenation_states(kernel),
        "rejuvenation_interval": None,
        "b": params.b_vector(params.n + 1),
        "d": jumps.d,
        "lambda": lam.lam,
        "r": spec.r,
        "v": spec.v,
        "u": spec.u,
        "a": spec.a,
        "criticality": spec.criticality,
    }
    if params.malpha is not None:
        iv = rejuvenation_interval_malpha(params.malpha)
        report["rejuvenation_interval"] = None if iv.empty else [iv.i1, iv.i2]
    return report


def cmd_analyze(cfg: RunConfig) -> int:
    params = cfg.params()
    report = analyze_report(params)
    if cfg.options.get("format", "json") == "json":
        text = json.dumps(report, default=_jsonable, indent=2) + "\n"
    else:
        n = params.n
        v = np.append(report["v"], 0.0)
        rows = ((i, report["b"][i], report["d"][i], report["lambda"][i], v[i]) for i in range(n + 1))
        text = _csv(["i", "b", "d", "lambda", "v"], rows)
    _emit(text, cfg.options.get("out"))
    return EXIT_OK


SWEEP_HEADER = ["sweep_var", "value", "r", "a", "criticality", "i1", "i2", "lambda_0", "error"]


def cmd_sweep(cfg: RunConfig) -> int:
    base = cfg.params().malpha
    rows = growth_rate_sweep(base, cfg.options["vary"], cfg.options["values"], threads=cfg.options.get("threads", 1))
    if cfg.options.get("format", "csv") == "json":
        text = json.dumps([r.__dict__ for r in rows], indent=2) + "\n"
    else:
        text = _csv(SWEEP_HEADER, ([getattr(r, h) for h in SWEEP_HEADER] for r in rows))
    _emit(text, cfg.options.get("out"))
    return EXIT_OK if any(r.r is not None for r in rows) else EXIT_NUMERIC


def _trajectory_text(states, n: int, fmt: str, truncated_at: int | None, thin: bool = False) -> str:
    if fmt == "json":
        doc = {
            "states": [
                {"t": s.t, "total": s.total, "senescent": s.senescent_count, "scale": s.scale, "counts": s.counts.tolist()}
                for s in states
            ],
            "truncated_at": truncated_at,
        }
        return json.dumps(doc) + "\n"
    thinned = any(s.scale != 1.0 for s in states) or thin
    header = ["t", "total", "senescent"] + (["scale"] if thinned else []) + [f"count_{i}" for i in range(n)]
    rows = [[s.t, s.total, s.senescent_count] + ([s.scale] if thinned else []) + s.counts.tolist() for s in states]
    if truncated_at is not None:
        rows.append(["TRUNCATED", truncated_at] + [None] * (len(header) - 2))
    return _csv(header, rows)


def cmd_simulate(cfg: RunConfig) -> int:
    params = cfg.params()
    o = cfg.options
    initial = PopulationState.initial(params.n, {int(k): v for k, v in o.get("initial", {"0": 1}).items()})
    kwargs = dict(
        horizon=o["horizon"],
        seed=o["seed"],
        record_tree=bool(o.get("tree")),
        thin_above=o.get("thin_above"),
        threads=o.get("threads", 1),
    )
    if o.get("cap") is not None:
        kwargs["cap"] = o["cap"]
    fmt = o.get("format", "csv")
    thin = o.get("thin_above") is not None
    try:
        res = simulate_population(params, initial, **kwargs)
    except PopulationCapError as exc:
        _emit(_trajectory_text(exc.states, params.n, fmt, exc.t, thin), o.get("out"))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    _emit(_trajectory_text(res.states, params.n, fmt, None, thin), o.get("out"))
    if res.tree is not None:
        with open(o["tree"], "wb") as fh:
            fh.write(export_tree(res.tree, o.get("tree_format", "json")))
    return EXIT_OK


def cmd_lifespan(cfg: RunConfig) -> int:
    params = cfg.params()
    o = cfg.options
    lam = expected_lifespan(params).lam
    samples = o.get("samples", 0)
    header = ["i", "lambda_analytic"]
    rows = []
    for i, value in enumerate(lam):
        row = [i, value]
        if samples > 0:
            if i < params.n:
                mc = simulate_lifespan(params, i, samples, seed=o["seed"])
                row += [mc.mean, mc.stderr]
            else:
                row += [0.0, 0.0]
        rows.append(row)
    if samples > 0:
        header += ["lambda_mc_mean", "lambda_mc_stderr"]
    if o.get("format", "csv") == "json":
        text = json.dumps([dict(zip(header, r)) for r in rows], default=_jsonable) + "\n"
    else:
        text = _csv(header, rows)
    _emit(text, o.get("out"))
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "sweep": cmd_sweep, "simulate": cmd_simulate, "lifespan": cmd_lifespan}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
