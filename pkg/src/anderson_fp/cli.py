"""Command-line experiments: ``run``, ``sweep`` and ``audit``.

Exit codes: 0 success, 1 usage/config error or missing history,
2 solver did not converge, 3 an audit failed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis
from .analysis import AUDITS, InsufficientHistoryError, NotContractiveError
from .core import (
    AndersonConfig,
    DampingSchedule,
    HistoryPolicy,
    SolveReport,
    Status,
    StepReport,
    solve,
)
from .linalg import EUCLIDEAN
from .problems import QuasilinearSpec, ScalarProblemKind, make_affine, quasilinear_problem, scalar_problem

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_AUDIT = 0, 1, 2, 3
CSV_HEADER = "# aa-trace v1"
JSON_FORMAT = "aa-trace-json"
JSON_VERSION = 1


class ConfigError(ValueError):
    pass


class MissingHistoryError(InsufficientHistoryError):
    pass


_number = {"type": "number"}
_posint = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["problem"],
    "additionalProperties": False,
    "properties": {
        "problem": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["kind", "name"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "scalar"},
                        "name": {"enum": [k.value for k in ScalarProblemKind]},
                    },
                },
                {
                    "type": "object",
                    "required": ["kind", "dimension", "kappa"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "affine"},
                        "dimension": _posint,
                        "kappa": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
                {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "quasilinear"},
                        "mesh_n": {"type": "integer", "minimum": 2},
                        "k_coef": _number,
                        "u0_coef": _number,
                        "epsilon": _number,
                        "exact_amp": _number,
                        "weighted": {"type": "boolean"},
                    },
                },
            ]
        },
        "anderson": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "depth_m": {"type": "integer", "minimum": 0},
                "beta": {"oneOf": [
                    {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    {"const": "adaptive"},
                ]},
                "residual_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": _posint,
                "divergence_guard": {"type": "number", "exclusiveMinimum": 0},
                "history_policy": {"enum": [p.value for p in HistoryPolicy]},
                "rank_drop_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "x0": {"oneOf": [
            {"type": "null"},
            _number,
            {"type": "array", "items": _number, "minItems": 1},
        ]},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trace": {"type": "string", "minLength": 1},
                "format": {"enum": ["csv", "json"]},
            },
        },
        "audits": {"type": "array", "items": {"enum": list(AUDITS)}, "uniqueItems": True},
        "kappa": {"type": "number", "exclusiveMinimum": 0},
        "grid": {
            "type": "object",
            "minProperties": 1,
            "patternProperties": {
                r"^(depth_m|beta|problem\.[a-z_]+)$": {"type": "array", "minItems": 1},
            },
            "additionalProperties": False,
        },
    },
}


# --------------------------------------------------------------------------
# configuration


def _anderson_from_dict(d: dict) -> AndersonConfig:
    beta = d.get("beta", 1.0)
    damping = DampingSchedule.make_adaptive() if beta == "adaptive" else DampingSchedule.constant(beta)
    kw = {k: d[k] for k in ("depth_m", "residual_tol", "max_iters", "divergence_guard",
                            "rank_drop_tol") if k in d}
    if "history_policy" in d:
        kw["history_policy"] = HistoryPolicy(d["history_policy"])
    return AndersonConfig(damping=damping, **kw)


def _anderson_to_dict(c: AndersonConfig) -> dict:
    return {
        "depth_m": c.depth_m,
        "beta": "adaptive" if c.damping.adaptive else c.damping.beta,
        "residual_tol": c.residual_tol,
        "max_iters": c.max_iters,
        "divergence_guard": c.divergence_guard,
        "history_policy": c.history_policy.value,
        "rank_drop_tol": c.rank_drop_tol,
    }


@dataclass
class ExperimentConfig:
    problem: dict
    anderson: AndersonConfig = field(default_factory=AndersonConfig)
    x0: float | list | None = None
    trace: str | None = None
    format: str = "csv"
    audits: list = field(default_factory=list)
    kappa: float | None = None
    grid: dict | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{path}: {exc.message}") from None
        try:
            anderson = _anderson_from_dict(d.get("anderson", {}))
        except ValueError as exc:
            raise ConfigError(f"anderson: {exc}") from None
        out = d.get("output", {})
        cfg = cls(
            problem=dict(d["problem"]),
            anderson=anderson,
            x0=copy.deepcopy(d.get("x0")),
            trace=out.get("trace"),
            format=out.get("format", "csv"),
            audits=list(d.get("audits", [])),
            kappa=d.get("kappa"),
            grid=copy.deepcopy(d.get("grid")),
        )
        build_problem(cfg)  # surfaces invalid problem parameters now
        return cfg

    def to_dict(self) -> dict:
        d = {"problem": dict(self.problem), "anderson": _anderson_to_dict(self.anderson)}
        if self.x0 is not None:
            d["x0"] = copy.deepcopy(self.x0)
        out = {"format": self.format}
        if self.trace is not None:
            out["trace"] = self.trace
        d["output"] = out
        if self.audits:
            d["audits"] = list(self.audits)
        if self.kappa is not None:
            d["kappa"] = self.kappa
        if self.grid is not None:
            d["grid"] = copy.deepcopy(self.grid)
        return d

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)


def build_problem(cfg: ExperimentConfig):
    """``(problem, x0, kappa)`` for a configuration; ``kappa`` may be ``None``."""
    p = cfg.problem
    try:
        if p["kind"] == "scalar":
            kind = ScalarProblemKind(p["name"])
            prob = scalar_problem(kind)
            default = [kind.default_x0]
        elif p["kind"] == "affine":
            aff = make_affine(p["dimension"], p["kappa"], p.get("seed", 0))
            prob = aff.as_problem()
            default = np.zeros(aff.dimension)
        else:
            fields = {k: v for k, v in p.items() if k not in ("kind", "weighted")}
            spec = QuasilinearSpec(**fields)
            prob = quasilinear_problem(spec, weighted=p.get("weighted", False))
            default = np.zeros(spec.n_interior)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"problem: {exc}") from None
    if cfg.x0 is None:
        x0 = np.asarray(default, dtype=float)
    elif isinstance(cfg.x0, list):
        x0 = np.asarray(cfg.x0, dtype=float)
        if x0.size != prob.dimension:
            raise ConfigError(f"x0 has {x0.size} entries, problem dimension is {prob.dimension}")
    else:
        x0 = np.full(prob.dimension, float(cfg.x0))
    kappa = cfg.kappa if cfg.kappa is not None else prob.kappa
    return prob, x0, kappa


# --------------------------------------------------------------------------
# trace I/O


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_csv(report: SolveReport) -> str:
    width = report.config.depth_m + 1
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "residual_norm", "theta", "beta"] + [f"alpha_{j}" for j in range(width)])
    for s in report.steps:
        alpha = [_fmt(a) for a in s.alpha] + [""] * (width - len(s.alpha))
        w.writerow([s.k, _fmt(s.residual_norm), _fmt(s.theta), _fmt(s.beta)] + alpha)
    return buf.getvalue()


def _arr(v):
    return [float(x) for x in np.asarray(v).reshape(-1)]


def trace_json(report: SolveReport, cfg: ExperimentConfig) -> str:
    steps = [{
        "k": s.k, "residual_norm": s.residual_norm, "theta": s.theta, "theta_raw": s.theta_raw,
        "beta": s.beta, "alpha": _arr(s.alpha), "gamma": _arr(s.gamma),
        "mixed_residual_norm": s.mixed_residual_norm, "depth": s.depth,
        "window_start": s.window_start, "stop": s.stop,
    } for s in report.steps]
    doc = {
        "format": JSON_FORMAT,
        "version": JSON_VERSION,
        "config": cfg.to_dict(),
        "problem_name": report.problem_name,
        "status": report.status.value,
        "message": report.message,
        "steps": steps,
        "iterates": [_arr(x) for x in report.iterates],
        "g_values": [_arr(g) for g in report.g_values],
    }
    return json.dumps(doc, indent=1) + "\n"


def summarize(report: SolveReport) -> dict:
    est = report.classification()
    return {
        "problem": report.problem_name,
        "status": report.status.value,
        "iterations": report.iterations,
        "final_residual": report.final_residual,
        "classification": est.classification.value if est else None,
        "fitted_rate": est.fitted_rate if est else None,
    }


def write_trace(report: SolveReport, cfg: ExperimentConfig, path: Path, fmt: str) -> dict:
    """Write the trace and its ``.meta.json`` sidecar; returns the summary."""
    text = trace_csv(report) if fmt == "csv" else trace_json(report, cfg)
    _atomic_write(path, text)
    meta = summarize(report)
    meta["config"] = cfg.to_dict()
    meta["message"] = report.message
    _atomic_write(Path(str(path) + ".meta.json"), json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return meta


def _float(s):
    return float(s) if s != "" else float("nan")


def load_trace(path) -> tuple[SolveReport, ExperimentConfig | None]:
    """Read a JSON or CSV trace. CSV traces carry no iterate history."""
    path = Path(path)
    text = path.read_text()
    if text.startswith(CSV_HEADER):
        return _load_csv(path, text)
    doc = json.loads(text)
    if doc.get("format") != JSON_FORMAT:
        raise ConfigError(f"{path} is not a trace")
    cfg = ExperimentConfig.from_dict(doc["config"])
    iterates = [np.asarray(x) for x in doc["iterates"]]
    g_values = [np.asarray(g) for g in doc["g_values"]]
    steps = []
    for d in doc["steps"]:
        k = d["k"]
        x_next = iterates[k + 1] if d["stop"] is None and k + 1 < len(iterates) else iterates[k]
        steps.append(StepReport(
            k=k, residual_norm=d["residual_norm"], theta=d["theta"], theta_raw=d["theta_raw"],
            beta=d["beta"], alpha=np.asarray(d["alpha"]), gamma=np.asarray(d["gamma"]),
            mixed_residual_norm=d["mixed_residual_norm"], depth=d["depth"],
            window_start=d["window_start"], stop=d["stop"], x_next=x_next, g_value=g_values[k],
        ))
    prob, _, _ = build_problem(cfg)
    report = SolveReport(doc["problem_name"], cfg.anderson, Status(doc["status"]), steps,
                         iterates, g_values, doc.get("message", ""), prob.inner_product)
    return report, cfg


def _load_csv(path: Path, text: str):
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    cfg = ExperimentConfig.from_dict(meta["config"]) if "config" in meta else None
    rows = list(csv.reader(io.StringIO(text.split("\n", 1)[1])))
    header, rows = rows[0], [r for r in rows[1:] if r]
    if header[:4] != ["k", "residual_norm", "theta", "beta"]:
        raise ConfigError(f"{path}: unexpected CSV columns {header[:4]}")
    steps = []
    for r in rows:
        alpha = np.asarray([float(a) for a in r[4:] if a != ""])
        k = int(r[0])
        theta = _float(r[2])
        steps.append(StepReport(
            k=k, residual_norm=_float(r[1]), theta=theta, theta_raw=theta, beta=_float(r[3]),
            alpha=alpha, x_next=np.zeros(0), depth=len(alpha) - 1, window_start=k - len(alpha) + 1,
        ))
    status = Status(meta.get("status", Status.MAX_ITERS.value))
    anderson = cfg.anderson if cfg else AndersonConfig(depth_m=max(len(header) - 5, 0))
    name = meta.get("problem", path.stem)
    return SolveReport(name, anderson, status, steps, [], [], meta.get("message", ""), EUCLIDEAN), cfg


# --------------------------------------------------------------------------
# commands


def _trace_path(cfg: ExperimentConfig, out: str | None, fmt: str, default_stem: str) -> Path:
    name = cfg.trace or f"{default_stem}.{fmt}"
    p = Path(name)
    return Path(out) / p if out and not p.is_absolute() else p


def _status_exit(report: SolveReport) -> int:
    return EXIT_OK if report.converged else EXIT_SOLVER


def _say(quiet, *args):
    if not quiet:
        print(*args)


def _summary_line(s: dict) -> str:
    cls = s["classification"] or "n/a"
    return (f"{s['problem']}: {s['status']} after {s['iterations']} iterations, "
            f"final residual {s['final_residual']:.3e}, classification {cls}")


def _default_checks(report: SolveReport, kappa) -> list[str]:
    checks = ["gain_bound"]
    if not report.iterates:
        return checks
    m = report.config.depth_m
    if m >= 1 and any(s.accelerated for s in report.steps):
        checks.insert(0, "update_identity")
    if kappa is not None and kappa < 1.0:
        if m == 1:
            checks.append("lemma_m1")
        checks.append("rate_envelope")
    return checks


def _run_checks(report, checks, kappa, quiet) -> int:
    try:
        results = []
        for name in checks:
            kap = kappa
            if name in ("lemma_m1", "rate_envelope") and kap is None:
                kap = analysis.estimate_kappa(report)
            results.extend(analysis.run_audits(report, [name], kappa=kap))
    except InsufficientHistoryError as exc:
        print(f"error: missing history: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotContractiveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for r in results:
        _say(quiet, r.line())
        for note in r.notes:
            _say(quiet, f"  note: {note}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_AUDIT


def cmd_run(config_path, out=None, fmt=None, quiet=False) -> int:
    try:
        cfg = ExperimentConfig.load(config_path)
        if cfg.grid is not None:
            raise ConfigError("config has a grid; use the sweep command")
        prob, x0, kappa = build_problem(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    fmt = fmt or cfg.format
    path = _trace_path(cfg, out, fmt, Path(config_path).stem)
    if path.resolve() == Path(config_path).resolve():
        print("config error: trace path would overwrite the config file", file=sys.stderr)
        return EXIT_USAGE
    report = solve(prob, x0, cfg.anderson)
    try:
        summary = write_trace(report, cfg, path, fmt)
    except OSError as exc:
        print(f"error: cannot write trace: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _say(quiet, _summary_line(summary))
    code = _status_exit(report)
    if cfg.audits:
        audit_code = _run_checks(report, cfg.audits, kappa, quiet)
        if code == EXIT_OK:
            code = audit_code
    return code


def _set_path(d: dict, key: str, value):
    if key.startswith("problem."):
        d["problem"][key.split(".", 1)[1]] = value
    else:
        d.setdefault("anderson", {})[key] = value


def expand_grid(cfg: ExperimentConfig) -> list[tuple[dict, ExperimentConfig]]:
    """Cells in row-major order over the grid axes as listed."""
    axes = list(cfg.grid.items())
    base = cfg.to_dict()
    base.pop("grid")
    base.get("output", {}).pop("trace", None)
    cells = []
    for values in itertools.product(*(v for _, v in axes)):
        d = copy.deepcopy(base)
        params = {}
        for (key, _), val in zip(axes, values):
            _set_path(d, key, val)
            params[key] = val
        cells.append((params, ExperimentConfig.from_dict(d)))
    return cells


def _run_cell(job):
    idx, cfg_dict, out_dir, fmt = job
    cfg = ExperimentConfig.from_dict(cfg_dict)
    prob, x0, _ = build_problem(cfg)
    report = solve(prob, x0, cfg.anderson)
    path = Path(out_dir) / f"cell_{idx:03d}.{fmt}"
    summary = write_trace(report, cfg, path, fmt)
    summary["trace"] = path.name
    return idx, summary


def cmd_sweep(config_path, out=None, fmt=None, workers=1, quiet=False) -> int:
    try:
        cfg = ExperimentConfig.load(config_path)
        if cfg.grid is None:
            raise ConfigError("sweep config needs a 'grid' section")
        cells = expand_grid(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    fmt = fmt or cfg.format
    out_dir = Path(out) if out else Path(config_path).with_suffix("")
    jobs = [(i, c.to_dict(), str(out_dir), fmt) for i, (_, c) in enumerate(cells)]
    try:
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = dict(ex.map(_run_cell, jobs))
        else:
            results = dict(map(_run_cell, jobs))
    except OSError as exc:
        print(f"error: cannot write traces: {exc}", file=sys.stderr)
        return EXIT_USAGE

    keys = list(cfg.grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell"] + keys + ["result", "status", "iterations", "final_residual", "trace"])
    lines = []
    for i, (params, _) in enumerate(cells):
        s = results[i]
        result = str(s["iterations"]) if s["status"] == Status.CONVERGED.value else "F"
        w.writerow([i] + [params[k] for k in keys]
                   + [result, s["status"], s["iterations"], _fmt(s["final_residual"]), s["trace"]])
        lines.append("  ".join(f"{k}={params[k]}" for k in keys) + f"  ->  {result}")
    _atomic_write(out_dir / "summary.csv", buf.getvalue())
    for line in lines:
        _say(quiet, line)
    all_ok = all(s["status"] == Status.CONVERGED.value for s in results.values())
    return EXIT_OK if all_ok else EXIT_SOLVER


def cmd_audit(path, checks=None, out=None, quiet=False) -> int:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    try:
        is_trace = text.startswith(CSV_HEADER) or json.loads(text).get("format") == JSON_FORMAT
        if is_trace:
            report, cfg = load_trace(path)
        else:
            cfg = ExperimentConfig.load(path)
            prob, x0, _ = build_problem(cfg)
            report = solve(prob, x0, cfg.anderson)
    except (ConfigError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    kappa = None
    if cfg is not None:
        kappa = build_problem(cfg)[2]
    if checks is None:
        checks = (cfg.audits if cfg is not None and cfg.audits else None) or _default_checks(report, kappa)
    try:
        if not report.iterates and any(c != "gain_bound" for c in checks):
            raise MissingHistoryError("trace has no iterates; use a JSON trace")
    except MissingHistoryError as exc:
        print(f"error: missing history: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return _run_checks(report, checks, kappa, quiet)


def _parse_checks(s: str) -> list[str]:
    names = [c.strip() for c in s.split(",") if c.strip()]
    if names == ["all"]:
        return list(AUDITS)
    bad = [c for c in names if c not in AUDITS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown checks {bad}; choose from {', '.join(AUDITS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="directory for traces and summaries")
    common.add_argument("--quiet", action="store_true", help="suppress summary output")
    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=["csv", "json"], help="trace format (overrides config)")

    ap = argparse.ArgumentParser(prog="anderson-fp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common, fmt], help="run one experiment")
    p.add_argument("config")
    p = sub.add_parser("sweep", parents=[common, fmt], help="run a parameter grid")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=1, metavar="N")
    p = sub.add_parser("audit", parents=[common], help="audit a trace or a config's run")
    p.add_argument("path")
    p.add_argument("--checks", type=_parse_checks, default=None,
                   help=f"comma-separated subset of {','.join(AUDITS)} or 'all'")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command == "run":
        return cmd_run(args.config, args.out, args.format, args.quiet)
    if args.command == "sweep":
        if args.workers < 1:
            print("error: --workers must be positive", file=sys.stderr)
            return EXIT_USAGE
        return cmd_sweep(args.config, args.out, args.format, args.workers, args.quiet)
    return cmd_audit(args.path, args.checks, args.out, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
