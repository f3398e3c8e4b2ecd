"""Command-line front end.

Commands: ``solve``, ``value``, ``sweep`` and ``simulate``. Model parameters
come from flags and/or a JSON config file with the same keys (flags win).
Floats are written with 12 significant digits.

Exit codes: 0 success, 2 bad arguments, 3 solver failure, 4 too many
censored simulation paths.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .boundary import solve_boundary, sweep_epsilon
from .core_model import DomainError, interval_index, make_params, params_from_gamma
from .errors import OutOfLadderError, QuickDetectError, SimulationQualityError
from .simulator import SimConfig, analytic_detection_time, monte_carlo, simulate_path
from .specfun import expected_hitting_time
from .value import value

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ARGS, EXIT_SOLVER, EXIT_SIM = 0, 2, 3, 4
THREADS_ENV = "QUICKDETECT_THREADS"

MODEL_KEYS = ("lambda", "mu", "sigma", "gamma", "beta", "eps")
COMMAND_KEYS = {
    "solve": (),
    "value": ("grid",),
    "sweep": ("betas", "eps_grid", "pi0"),
    "simulate": ("paths", "dt", "seed", "pi0", "horizon", "workers", "trace", "threshold"),
}
DEFAULTS = {
    "grid": "0:0.01:1",
    "betas": "0.1,1,10,100",
    "eps_grid": "0:0.1:0.9",
    "pi0": 0.0,
    "paths": 100_000,
    "dt": 1e-3,
    "seed": 0,
    "horizon": None,
    "workers": None,
    "trace": False,
    "threshold": None,
}

VALUE_COLUMNS = ("pi", "value", "region", "interval_index")
SWEEP_COLUMNS = (
    "beta", "eps", "a_star", "g_a_star", "gap", "C", "expected_n_tests",
    "wait_between_tests", "expected_detection_time", "error",
)
TRACE_COLUMNS = ("t", "pi", "event", "z")

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
SCHEMAS = {
    "solve": {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "type": "object",
        "required": ["a_star", "C", "residual", "g_a_star", "expected_n_tests", "params"],
        "properties": {
            "a_star": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "C": _NUM,
            "residual": {"type": "number", "minimum": 0},
            "g_a_star": {"type": "number", "minimum": 0, "maximum": 1},
            "expected_n_tests": {"type": "number", "minimum": 1},
            "params": {"type": "object"},
        },
    },
    "value": {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "type": "array",
        "items": {
            "type": "object",
            "required": list(VALUE_COLUMNS),
            "properties": {
                "pi": {"type": "number", "minimum": 0, "maximum": 1},
                "value": _NUM,
                "region": {"enum": ["continue", "stop"]},
                "interval_index": {"type": "integer", "minimum": -1},
            },
        },
    },
    "sweep": {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "type": "array",
        "items": {
            "type": "object",
            "required": list(SWEEP_COLUMNS),
            "properties": {
                "beta": _NUM,
                "eps": _NUM,
                "a_star": _NUM_OR_NULL,
                "g_a_star": _NUM_OR_NULL,
                "gap": _NUM_OR_NULL,
                "C": _NUM_OR_NULL,
                "expected_n_tests": _NUM_OR_NULL,
                "wait_between_tests": _NUM_OR_NULL,
                "expected_detection_time": _NUM_OR_NULL,
                "error": {"type": "string"},
            },
        },
    },
    "simulate": {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "type": "object",
        "required": [
            "mean_cost", "stderr_cost", "mean_n_tests", "stderr_n_tests", "mean_tau_detect",
            "stderr_tau_detect", "n_paths", "censored", "n_tests_hist", "threshold",
        ],
        "properties": {
            "mean_cost": _NUM,
            "stderr_cost": _NUM,
            "mean_n_tests": _NUM,
            "stderr_n_tests": _NUM,
            "mean_tau_detect": _NUM,
            "stderr_tau_detect": _NUM,
            "n_paths": {"type": "integer", "minimum": 1},
            "censored": {"type": "integer", "minimum": 0},
            "n_tests_hist": {"type": "object", "additionalProperties": {"type": "integer"}},
            "tests_after_change": {"type": "integer"},
            "negatives_after_change": {"type": "integer"},
            "threshold": _NUM,
        },
    },
}


class ArgumentError(QuickDetectError):
    pass


@dataclass
class RunConfig:
    """Everything one command needs: model flags, command options, output target."""

    command: str
    model: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output: str | None = None
    format: str | None = None

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def as_config_file(self):
        """Flat mapping accepted by ``--config``; parsing it reproduces this bundle."""
        flat = {k: v for k, v in self.model.items() if v is not None}
        flat.update({k: v for k, v in self.options.items()})
        if self.output is not None:
            flat["output"] = self.output
        if self.format is not None:
            flat["format"] = self.format
        return flat


def _fmt(x):
    return float(f"{x:.12g}")


def _fmt_cell(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else f"{x:.12g}"
    return str(x)


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) else _fmt(obj)
    return obj


def parse_grid(text):
    """``start:step:stop`` (inclusive) or a comma-separated list."""
    text = str(text).strip()
    try:
        if ":" in text:
            start, step, stop = (float(s) for s in text.split(":"))
            if step <= 0 or stop < start:
                raise ArgumentError(f"bad grid {text!r}")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(n)]
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ArgumentError(f"bad grid {text!r}: {exc}") from None


def _add_model_flags(p):
    p.add_argument("--config", help="JSON file with the same keys as the flags")
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--gamma", type=float, help="signal-to-noise rate; replaces --mu/--sigma")
    p.add_argument("--beta", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--output", "-o", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))


def build_parser():
    parser = argparse.ArgumentParser(prog="quickdetect", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal threshold and constant")
    _add_model_flags(p)

    p = sub.add_parser("value", help="tabulate the value function")
    _add_model_flags(p)
    p.add_argument("--grid", help="start:step:stop or comma list (default 0:0.01:1)")

    p = sub.add_parser("sweep", help="threshold and timing over eps and beta")
    _add_model_flags(p)
    p.add_argument("--betas", help="comma list (default 0.1,1,10,100)")
    p.add_argument("--eps-grid", dest="eps_grid", help="start:step:stop or comma list (default 0:0.1:0.9)")
    p.add_argument("--pi0", type=float, help="start for the detection time (default 0)")

    p = sub.add_parser("simulate", help="Monte Carlo under the threshold policy")
    _add_model_flags(p)
    p.add_argument("--paths", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--pi0", type=float)
    p.add_argument("--horizon", type=float, help="time cap per path (default 1000/lambda)")
    p.add_argument("--workers", type=int, help=f"threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--threshold", type=float, help="test threshold (default: the optimal a*)")
    p.add_argument("--trace", action="store_true", default=None, help="CSV trajectory of one path")
    return parser


def build_run_config(argv):
    """Parse ``argv`` into a :class:`RunConfig`; flags override the config file."""
    ns = build_parser().parse_args(argv)
    flags = vars(ns)
    file_cfg = {}
    if flags.get("config"):
        try:
            with open(flags["config"]) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ArgumentError(f"cannot read config file: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ArgumentError("config file must hold a JSON object")
        known = set(MODEL_KEYS) | set(COMMAND_KEYS[ns.command]) | {"output", "format"}
        unknown = set(file_cfg) - known
        if unknown:
            raise ArgumentError(f"unknown config keys for {ns.command}: {sorted(unknown)}")

    def pick(key):
        v = flags.get(key)
        return v if v is not None else file_cfg.get(key)

    model = {k: pick(k) for k in MODEL_KEYS}
    options = {}
    for k in COMMAND_KEYS[ns.command]:
        v = pick(k)
        options[k] = DEFAULTS[k] if v is None else v
    return RunConfig(ns.command, model, options, pick("output"), pick("format"))


def params_from_model(model):
    lam, beta, eps = model.get("lambda"), model.get("beta"), model.get("eps")
    missing = [k for k, v in (("lambda", lam), ("beta", beta), ("eps", eps)) if v is None]
    if missing:
        raise ArgumentError(f"missing parameters: {', '.join(missing)}")
    if model.get("gamma") is not None:
        if model.get("mu") is not None or model.get("sigma") is not None:
            raise ArgumentError("give either --gamma or --mu/--sigma, not both")
        return params_from_gamma(float(lam), float(model["gamma"]), float(beta), float(eps))
    if model.get("mu") is None or model.get("sigma") is None:
        raise ArgumentError("need --mu and --sigma, or --gamma")
    return make_params(float(lam), float(model["mu"]), float(model["sigma"]), float(beta), float(eps))


def _write_text(text, output):
    if output:
        with open(output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt_cell(row[c]) for c in columns])
    return buf.getvalue()


def _emit_rows(columns, rows, cfg, default="csv"):
    fmt = cfg.format or default
    if fmt == "json":
        text = json.dumps(_json_clean(rows), indent=2) + "\n"
    else:
        text = _csv_text(columns, rows)
    _write_text(text, cfg.output)


def _emit_object(obj, cfg):
    if cfg.format == "csv":
        flat = {k: v for k, v in obj.items() if not isinstance(v, dict)}
        _write_text(_csv_text(tuple(flat), [flat]), cfg.output)
    else:
        _write_text(json.dumps(_json_clean(obj), indent=2, sort_keys=True) + "\n", cfg.output)


def cmd_solve(cfg):
    params = params_from_model(cfg.model)
    sol = solve_boundary(params)
    _emit_object(
        {
            "a_star": sol.a_star,
            "C": sol.C,
            "residual": sol.residual,
            "g_a_star": sol.g_a_star,
            "expected_n_tests": sol.expected_n_tests,
            "params": params.as_dict(),
        },
        cfg,
    )
    return EXIT_OK


def _interval_label(p, sol):
    if p >= 1.0:
        return -1
    try:
        return int(interval_index(p, sol.decomp))
    except OutOfLadderError:
        return -1


def cmd_value(cfg):
    params = params_from_model(cfg.model)
    grid = parse_grid(cfg.options["grid"])
    if any(not 0.0 <= p <= 1.0 for p in grid):
        raise ArgumentError("grid points must lie in [0, 1]")
    sol = solve_boundary(params)
    vals = np.atleast_1d(value(np.array(grid), sol))
    rows = [
        {
            "pi": p,
            "value": float(v),
            "region": "continue" if p < sol.a_star else "stop",
            "interval_index": _interval_label(p, sol),
        }
        for p, v in zip(grid, vals)
    ]
    _emit_rows(VALUE_COLUMNS, rows, cfg)
    return EXIT_OK


def _sweep_row(beta, row, pi0):
    out = {c: None for c in SWEEP_COLUMNS}
    out.update(beta=beta, eps=row.epsilon, error=row.error)
    if row.solution is None:
        return out
    sol = row.solution
    out.update(a_star=row.a_star, g_a_star=row.g_a_star, gap=row.gap, C=row.C, expected_n_tests=sol.expected_n_tests)
    try:
        out["wait_between_tests"] = float(expected_hitting_time(sol.g_a_star, sol.a_star, sol.params, sol.quad))
        if pi0 <= sol.a_star:
            out["expected_detection_time"] = float(analytic_detection_time(pi0, sol)[0])
    except QuickDetectError as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def cmd_sweep(cfg):
    model = dict(cfg.model)
    if model.get("beta") is not None:
        raise ArgumentError("sweep takes --betas, not --beta")
    betas = parse_grid(cfg.options["betas"])
    eps_grid = parse_grid(cfg.options["eps_grid"])
    pi0 = float(cfg.options["pi0"])
    rows = []
    for beta in betas:
        base = params_from_model({**model, "beta": beta, "eps": 0.0})
        for r in sweep_epsilon(base, eps_grid):
            rows.append(_sweep_row(beta, r, pi0))
    _emit_rows(SWEEP_COLUMNS, rows, cfg)
    return EXIT_OK if any(not r["error"] for r in rows) else EXIT_SOLVER


def _workers(opt):
    if opt is not None:
        return int(opt)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ArgumentError(f"{THREADS_ENV} must be an integer") from None
    return 1


def _trace_rows(params, config, index=0):
    steps = int(math.ceil(config.cap(params.lam) / config.dt)) + 2
    out = simulate_path(params, config, index, trace_steps=steps)
    n_grid = int(round(out.tau_detect / config.dt)) + 1
    rows = []
    tests = iter(out.inspections)
    pending = next(tests, None)
    eps = params.epsilon
    for k in range(n_grid):
        t = k * config.dt
        rows.append({"t": t, "pi": float(out.trace[k]), "event": "path", "z": None})
        while pending is not None and pending[0] <= t + 0.5 * config.dt:
            tt, pi_before, z = pending
            rows.append({"t": tt, "pi": pi_before, "event": "test", "z": z})
            if not z:
                rows.append({"t": tt, "pi": eps * pi_before / (1.0 - (1.0 - eps) * pi_before), "event": "reset", "z": None})
            pending = next(tests, None)
    return rows, out


def cmd_simulate(cfg):
    params = params_from_model(cfg.model)
    o = cfg.options
    threshold = o["threshold"]
    sol = None
    if threshold is None:
        sol = solve_boundary(params)
        threshold = sol.a_star
    config = SimConfig(
        pi0=float(o["pi0"]),
        threshold=float(threshold),
        n_paths=int(o["paths"]),
        dt=float(o["dt"]),
        seed=int(o["seed"]),
        horizon_cap=None if o["horizon"] is None else float(o["horizon"]),
        workers=_workers(o["workers"]),
    )
    if o["trace"]:
        rows, _ = _trace_rows(params, config)
        _write_text(_csv_text(TRACE_COLUMNS, rows), cfg.output)
        return EXIT_OK
    s = monte_carlo(params, sol, config)
    _emit_object(
        {
            "mean_cost": s.mean_cost,
            "stderr_cost": s.stderr_cost,
            "mean_n_tests": s.mean_n_tests,
            "stderr_n_tests": s.stderr_n_tests,
            "mean_tau_detect": s.mean_tau_detect,
            "stderr_tau_detect": s.stderr_tau_detect,
            "n_paths": s.n_paths,
            "censored": s.censored,
            "n_tests_hist": s.n_tests_hist,
            "tests_after_change": s.tests_after_change,
            "negatives_after_change": s.negatives_after_change,
            "threshold": threshold,
        },
        cfg,
    )
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "value": cmd_value, "sweep": cmd_sweep, "simulate": cmd_simulate}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = build_run_config(argv)
    except SystemExit as exc:
        return EXIT_ARGS if exc.code else EXIT_OK
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    if "-v" in argv or "--verbose" in argv:
        logging.basicConfig(level=logging.DEBUG)
    try:
        return COMMANDS[cfg.command](cfg)
    except (ArgumentError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except SimulationQualityError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except QuickDetectError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
