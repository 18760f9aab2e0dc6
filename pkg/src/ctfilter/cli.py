"""Command-line entry point: ``ctfilter <subcommand> --config run.json``.

Exit codes: 0 success, 1 validation failure, 2 config error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import experiments as ex
from .oracle import GridSpec
from .svg import render_heatmap_svg, render_lines_svg
from .validation import CheckResult, run_all

SUBCOMMANDS = ("sweep", "innovation", "example", "validate")

SWEEP_COLUMNS = ("rho", "r", "filter", "mean_js", "pct_change_vs_enkf", "p_value", "n_trials")
INNOVATION_COLUMNS = ("bin_lo", "bin_hi", "filter", "metric", "median", "iqr_lo", "iqr_hi")
ENSEMBLE_COLUMNS = ("filter", "member", "z1", "z2")
MARGINAL_COLUMNS = ("axis", "node", "prior_mass", "posterior_mass")
SUMMARY_COLUMNS = ("filter", "js", "me_mean", "me_std", "bounds_violation_pct", "y", "innovation")
VALIDATE_COLUMNS = ("check", "passed", "error", "tolerance", "detail")

SIGNIFICANCE = 0.05


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InnovationConfig:
    rho: float = 0.99
    r: float = 0.01
    y_min: float = 0.5
    y_max: float = 20.0
    n_y: int = 20
    n_bins: int = 15
    mc_rep: int = 20


@dataclass(frozen=True)
class ExampleConfig:
    rho: float = 0.99
    r: float = 0.05
    y: float = 0.5
    mu: tuple[float, float] = ex.EXAMPLE_MU
    sigma: tuple[float, float] = ex.EXAMPLE_SIGMA


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    seed: int = 0
    n_trials: int = 100
    n_members: int = 20000
    threads: int | None = None
    out_dir: str = "results"
    rhos: tuple[float, ...] = ex.DEFAULT_RHOS
    rs: tuple[float, ...] = ex.DEFAULT_RS
    grid: GridSpec = field(default_factory=GridSpec)
    innovation: InnovationConfig = field(default_factory=InnovationConfig)
    example: ExampleConfig = field(default_factory=ExampleConfig)

    def to_dict(self) -> dict:
        return asdict(self)


# --- parsing -----------------------------------------------------------------

def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _number(name: str, v, lo=None, hi=None, positive=False) -> float:
    if not _is_num(v):
        raise ConfigError(f"{name}: expected a finite number, got {v!r}")
    v = float(v)
    if positive and not v > 0:
        raise ConfigError(f"{name}: must be positive, got {v}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"{name}: {v} outside [{lo}, {hi}]")
    return v


def _count(name: str, v, minimum=1) -> int:
    if not (isinstance(v, int) and not isinstance(v, bool)):
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {v}")
    return v


def _seed(name: str, v) -> int:
    if not (isinstance(v, int) and not isinstance(v, bool)) or not 0 <= v < 2**64:
        raise ConfigError(f"{name}: expected an unsigned 64-bit integer, got {v!r}")
    return v


def _number_list(name: str, v, **kw) -> tuple[float, ...]:
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{name}: expected a nonempty list of numbers")
    return tuple(_number(f"{name}[{i}]", x, **kw) for i, x in enumerate(v))


def _check_keys(name: str, d, cls) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{name}: expected an object")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - allowed)
    if unknown:
        where = f"{name}." if name else ""
        raise ConfigError(f"unknown key {where}{unknown[0]}")


def _grid(d) -> GridSpec:
    _check_keys("grid", d, GridSpec)
    kw: dict[str, Any] = {}
    for k, v in d.items():
        if k in ("n_z1", "n_z2"):
            kw[k] = _count(f"grid.{k}", v, minimum=2)
        elif k == "z1_spacing":
            if v not in ("uniform", "log"):
                raise ConfigError("grid.z1_spacing: must be 'uniform' or 'log'")
            kw[k] = v
        else:
            kw[k] = _number(f"grid.{k}", v)
    try:
        return GridSpec(**kw)
    except ValueError as e:
        raise ConfigError(f"grid: {e}") from None


def _innovation(d) -> InnovationConfig:
    _check_keys("innovation", d, InnovationConfig)
    kw: dict[str, Any] = {}
    for k, v in d.items():
        name = f"innovation.{k}"
        if k == "rho":
            kw[k] = _number(name, v, lo=-1.0, hi=1.0)
        elif k in ("r", "y_min", "y_max"):
            kw[k] = _number(name, v, positive=True)
        else:
            kw[k] = _count(name, v)
    cfg = InnovationConfig(**kw)
    if cfg.y_max < cfg.y_min:
        raise ConfigError("innovation.y_max: must be >= innovation.y_min")
    return cfg


def _pair(name: str, v, positive=False) -> tuple[float, float]:
    if not isinstance(v, list) or len(v) != 2:
        raise ConfigError(f"{name}: expected a list of two numbers")
    return tuple(_number(f"{name}[{i}]", x, positive=positive) for i, x in enumerate(v))


def _example(d) -> ExampleConfig:
    _check_keys("example", d, ExampleConfig)
    kw: dict[str, Any] = {}
    for k, v in d.items():
        name = f"example.{k}"
        if k == "rho":
            kw[k] = _number(name, v, lo=-1.0, hi=1.0)
        elif k in ("r", "y"):
            kw[k] = _number(name, v, positive=True)
        else:
            kw[k] = _pair(name, v, positive=(k == "sigma"))
    return ExampleConfig(**kw)


def config_from_dict(d: dict) -> RunConfig:
    _check_keys("", d, RunConfig)
    if "subcommand" not in d:
        raise ConfigError("subcommand: missing required field")
    if d["subcommand"] not in SUBCOMMANDS:
        raise ConfigError(f"subcommand: must be one of {', '.join(SUBCOMMANDS)}")
    kw: dict[str, Any] = {"subcommand": d["subcommand"]}
    for k, v in d.items():
        if k == "seed":
            kw[k] = _seed(k, v)
        elif k in ("n_trials", "n_members"):
            kw[k] = _count(k, v, minimum=2 if k == "n_members" else 1)
        elif k == "threads":
            kw[k] = None if v is None else _count(k, v)
        elif k == "out_dir":
            if not isinstance(v, str) or not v:
                raise ConfigError("out_dir: expected a nonempty string")
            kw[k] = v
        elif k == "rhos":
            kw[k] = _number_list(k, v, lo=-1.0, hi=1.0)
        elif k == "rs":
            kw[k] = _number_list(k, v, positive=True)
        elif k == "grid":
            kw[k] = _grid(v)
        elif k == "innovation":
            kw[k] = _innovation(v)
        elif k == "example":
            kw[k] = _example(v)
    return RunConfig(**kw)


def parse_config(path) -> RunConfig:
    """Read and validate a JSON run configuration; missing optional fields take defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    try:
        d = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    return config_from_dict(d)


# --- output ------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])
    return path


def _example_rows(res: ex.ExampleResult):
    ens = []
    for name, e in res.outcome.ensembles.items():
        for i in range(e.shape[1]):
            ens.append({"filter": name, "member": i, "z1": e[0, i], "z2": e[1, i]})
    marg = []
    grid = res.prior_grid.grid
    for axis, nodes in ((0, grid.z1_nodes()), (1, grid.z2_nodes())):
        pm, qm = res.prior_grid.marginal(axis), res.posterior_grid.marginal(axis)
        for k in range(nodes.size):
            marg.append({"axis": f"z{axis + 1}", "node": nodes[k], "prior_mass": pm[k], "posterior_mass": qm[k]})
    summary = [
        {"filter": name, **asdict(rep), "y": res.outcome.y, "innovation": res.outcome.innovation}
        for name, rep in res.outcome.reports.items()
    ]
    return ens, marg, summary


def write_results(result, out_dir) -> list[Path]:
    """Write the CSV tables for any experiment result (or a list of validation checks)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(result, ex.SweepResult):
        return [write_csv(out / "sweep.csv", SWEEP_COLUMNS, result.rows())]
    if isinstance(result, ex.InnovationResult):
        return [write_csv(out / "innovation.csv", INNOVATION_COLUMNS, result.rows())]
    if isinstance(result, ex.ExampleResult):
        ens, marg, summary = _example_rows(result)
        return [
            write_csv(out / "example_ensembles.csv", ENSEMBLE_COLUMNS, ens),
            write_csv(out / "example_marginals.csv", MARGINAL_COLUMNS, marg),
            write_csv(out / "example_summary.csv", SUMMARY_COLUMNS, summary),
        ]
    if isinstance(result, list) and all(isinstance(c, CheckResult) for c in result):
        rows = [{"check": c.name, "passed": c.passed, "error": c.error, "tolerance": c.tolerance,
                 "detail": c.detail} for c in result]
        return [write_csv(out / "validate.csv", VALIDATE_COLUMNS, rows)]
    raise TypeError(f"no writer for {type(result).__name__}")


def render_figures(result, out_dir) -> list[Path]:
    out = Path(out_dir)
    paths = []
    if isinstance(result, ex.SweepResult) and result.rhos and result.rs:
        kw = dict(row_labels=result.rhos, col_labels=result.rs)
        for name in ex.FILTERS:
            paths.append(render_heatmap_svg(result.table(name, "mean_js"), out / f"sweep_js_{name}.svg",
                                            title=f"mean JS: {name}", diverging=False, **kw))
        for name in ("qcef_lr", "ectf"):
            pct = result.table(name, "pct_change_vs_enkf")
            pct = np.where(result.table(name, "p_value") < SIGNIFICANCE, pct, np.nan)
            paths.append(render_heatmap_svg(pct, out / f"sweep_pct_{name}.svg",
                                            title=f"% change in JS vs enkf: {name}", **kw))
    elif isinstance(result, ex.InnovationResult):
        rows = result.rows()
        centres = 0.5 * (result.edges[1:] + result.edges[:-1])
        for metric in ex.METRICS:
            series = {}
            for name in ex.FILTERS:
                sel = [r for r in rows if r["filter"] == name and r["metric"] == metric]
                series[name] = tuple(np.array([r[c] for r in sel]) for c in ("median", "iqr_lo", "iqr_hi"))
            paths.append(render_lines_svg(centres, series, out / f"innovation_{metric}.svg",
                                          title=metric, x_name="innovation d", y_name=metric))
    return paths


# --- dispatch ----------------------------------------------------------------

def run(cfg: RunConfig):
    if cfg.subcommand == "sweep":
        return ex.sweep(cfg.rhos, cfg.rs, cfg.n_trials, cfg.n_members, cfg.grid, seed=cfg.seed, threads=cfg.threads)
    if cfg.subcommand == "innovation":
        ic = cfg.innovation
        ys = np.linspace(ic.y_min, ic.y_max, ic.n_y)
        return ex.innovation_study(ys, cfg.n_trials, cfg.n_members, cfg.grid, rho=ic.rho, r=ic.r,
                                   seed=cfg.seed, n_bins=ic.n_bins, mc_rep=ic.mc_rep, threads=cfg.threads)
    if cfg.subcommand == "example":
        ec = cfg.example
        return ex.example_case(cfg.n_members, cfg.grid, rho=ec.rho, r=ec.r, y=ec.y,
                               mu=ec.mu, sigma=ec.sigma, seed=cfg.seed)
    return run_all(cfg.seed)


def _ensure_writable(out_dir: str) -> None:
    p = Path(out_dir)
    try:
        p.mkdir(parents=True, exist_ok=True)
        probe = p / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ConfigError(f"out_dir: {p} is not writable ({e.strerror})") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctfilter", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    ap.add_argument("--seed", type=int, help="master seed (overrides seed)")
    ap.add_argument("--threads", type=int, help="worker processes; falls back to $CTF_THREADS")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if cfg.subcommand != args.subcommand:
            raise ConfigError(f"subcommand: config says {cfg.subcommand!r}, command line says {args.subcommand!r}")
        over: dict[str, Any] = {}
        if args.out is not None:
            over["out_dir"] = args.out
        if args.seed is not None:
            over["seed"] = _seed("--seed", args.seed)
        if args.threads is not None:
            over["threads"] = _count("--threads", args.threads)
        cfg = replace(cfg, **over)
        _ensure_writable(cfg.out_dir)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        result = run(cfg)
        paths = write_results(result, cfg.out_dir)
        paths += render_figures(result, cfg.out_dir)
    except Exception as e:  # noqa: BLE001 - report any failure as a runtime error
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    for p in paths:
        print(p)
    if cfg.subcommand == "validate":
        failed = [c for c in result if not c.passed]
        for c in result:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: error {c.error:.3g} (tol {c.tolerance:g}) {c.detail}")
        if failed:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
