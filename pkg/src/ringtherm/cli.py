"""Command-line front end: batch scans to CSV/JSON for external plotting.

Subcommands map one-to-one onto the experiment operations.  A run is
described by a flat JSON config file (scalar or flat-list values, no
nesting); every resolved setting is echoed into the output header so a
result file suffices to reproduce the run.  Output bytes are independent
of the worker count; wall time is reported on stdout only.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .dynamics import IntegratorOptions
from .errors import ConfigError, RingthermError
from .experiments import (
    ScanGrid,
    ScanTable,
    SearchOptions,
    dynamic_scan,
    equilibration_time,
    equilibrium_scan,
    optimal_measurement_time,
    optimize_phi,
    scaling_fit,
    time_optimized_qfi,
)
from .qfi import cramer_rao_bound
from .spectrum import all_decay_weights, all_gaps, level_energies, levels, validate_params

__all__ = ["main", "run", "load_config", "write_table", "read_table"]

_SUBCOMMANDS = ("spectrum", "eq-scan", "dyn-scan", "time-opt", "t-e", "t-opt", "phi-opt", "crb")

_KEY_TYPES = {
    "n_atoms": int,
    "coupling": float,
    "transition_freq": float,
    "phi": float,
    "temperature": float,
    "temperatures": list,
    "temp_min": float,
    "temp_max": float,
    "temp_step": float,
    "times": list,
    "t_min": float,
    "t_max": float,
    "t_step": float,
    "phis": list,
    "phi_min": float,
    "phi_max": float,
    "phi_step": float,
    "n_list": list,
    "criterion_eps": float,
    "rel_tol": float,
    "abs_tol": float,
    "coarse_points": int,
    "plateau_rel": float,
    "time_tol_rel": float,
    "temp_tol_rel": float,
    "max_horizon": float,
    "repetitions": int,
    "qfi_table": str,
    "seed": int,
    "workers": int,
    "out": str,
    "format": str,
}

_COMMON = {"seed", "workers", "out", "format"}
_PROBE = {"n_atoms", "coupling", "transition_freq"}
_TGRID = {"temperatures", "temp_min", "temp_max", "temp_step"}
_SEARCH = {"coarse_points", "plateau_rel", "time_tol_rel", "temp_tol_rel", "max_horizon",
           "rel_tol", "abs_tol"}

_ALLOWED = {
    "spectrum": _COMMON | _PROBE,
    "eq-scan": _COMMON | _PROBE | _TGRID,
    "dyn-scan": _COMMON | _PROBE | _TGRID | _SEARCH | {"phi", "times", "t_min", "t_max", "t_step"},
    "time-opt": _COMMON | _PROBE | _TGRID | _SEARCH | {"phi"},
    "t-e": _COMMON | _PROBE | _TGRID | _SEARCH | {"phi", "n_list", "temperature", "criterion_eps"},
    "t-opt": _COMMON | _PROBE | _TGRID | _SEARCH | {"phi", "n_list"},
    "phi-opt": _COMMON | _PROBE | _TGRID | _SEARCH | {"phis", "phi_min", "phi_max", "phi_step"},
    "crb": _COMMON | {"qfi_table", "repetitions"},
}

_REQUIRED = {
    "spectrum": {"n_atoms", "coupling"},
    "eq-scan": {"n_atoms", "coupling"},
    "dyn-scan": {"n_atoms", "coupling"},
    "time-opt": {"n_atoms", "coupling"},
    "t-e": {"coupling", "n_list"},
    "t-opt": {"coupling", "n_list"},
    "phi-opt": {"n_atoms", "coupling"},
    "crb": {"qfi_table", "repetitions"},
}


def load_config(path: str) -> dict:
    """Parse and type-check a flat JSON config file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in raw.items():
        if key not in _KEY_TYPES:
            raise ConfigError(f"unknown key: {key}")
        want = _KEY_TYPES[key]
        if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            raw[key] = float(value)
        elif want is int and isinstance(value, int) and not isinstance(value, bool):
            pass
        elif want is list and isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raw[key] = [float(v) for v in value]
        elif want is str and isinstance(value, str):
            pass
        else:
            raise ConfigError(f"key {key}: expected {want.__name__}")
    return raw


def _check_keys(subcommand: str, cfg: dict) -> None:
    for key in cfg:
        if key not in _ALLOWED[subcommand]:
            raise ConfigError(f"key {key} is not valid for subcommand {subcommand}")
    for key in _REQUIRED[subcommand]:
        if key not in cfg:
            raise ConfigError(f"missing required key: {key}")


def _resolve(subcommand: str, cfg: dict) -> dict:
    """Fill defaults; every value the run depends on ends up here."""
    out = dict(cfg)
    out.setdefault("format", "csv")
    if out["format"] not in ("csv", "json"):
        raise ConfigError("key format: must be 'csv' or 'json'")
    out.setdefault("workers", 0)
    out.setdefault("out", f"{subcommand}.{out['format']}")
    if subcommand in ("eq-scan", "dyn-scan", "time-opt", "t-e", "t-opt", "phi-opt"):
        if "temperatures" not in out:
            out.setdefault("temp_min", 0.01)
            out.setdefault("temp_max", 3.0)
            out.setdefault("temp_step", 0.005)
    if subcommand in ("dyn-scan", "time-opt", "t-opt"):
        out.setdefault("phi", math.pi / 4)
    if subcommand == "t-e":
        out.setdefault("phi", 0.0)
        out.setdefault("criterion_eps", 1e-12)
    if subcommand == "phi-opt" and "phis" not in out:
        out.setdefault("phi_min", 0.0)
        out.setdefault("phi_max", math.pi / 2)
        out.setdefault("phi_step", math.pi / 16)
    if subcommand in ("dyn-scan", "time-opt", "t-e", "t-opt", "phi-opt"):
        out.setdefault("coarse_points", 48)
        out.setdefault("plateau_rel", 1e-6)
        out.setdefault("time_tol_rel", 1e-3)
        out.setdefault("temp_tol_rel", 1e-2)
        out.setdefault("max_horizon", 1e6)
    return out


def _grid_from(cfg: dict, prefix: str, list_key: str) -> np.ndarray:
    if list_key in cfg:
        values = np.asarray(cfg[list_key], float)
    else:
        try:
            lo, hi, step = cfg[f"{prefix}_min"], cfg[f"{prefix}_max"], cfg[f"{prefix}_step"]
        except KeyError as exc:
            raise ConfigError(f"missing required key: {exc.args[0]}")
        if step <= 0 or hi < lo:
            raise ConfigError(f"key {prefix}_step/{prefix}_max: empty or descending range")
        values = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
        values = values[values <= hi + 1e-12 * max(abs(hi), 1.0)]
    if values.size == 0:
        raise ConfigError(f"key {list_key}: empty grid")
    return values


def _params_from(cfg: dict, n_atoms: int | None = None):
    try:
        return validate_params(
            n_atoms if n_atoms is not None else cfg["n_atoms"],
            cfg["coupling"],
            cfg.get("transition_freq", 1.0),
        )
    except RingthermError as exc:
        raise ConfigError(f"key n_atoms/coupling/transition_freq: {exc}")


def _search_from(cfg: dict) -> SearchOptions:
    integrator_keys = {}
    if "rel_tol" in cfg:
        integrator_keys["rel_tol"] = cfg["rel_tol"]
    if "abs_tol" in cfg:
        integrator_keys["abs_tol"] = cfg["abs_tol"]
    kwargs = {}
    for key in ("coarse_points", "plateau_rel", "time_tol_rel", "temp_tol_rel", "max_horizon"):
        if key in cfg:
            kwargs[key] = cfg[key]
    if integrator_keys:
        kwargs["integrator"] = IntegratorOptions(**integrator_keys)
    try:
        return SearchOptions(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"search options: {exc}")


# ---------------------------------------------------------------------------
# subcommand implementations


def _run_spectrum(cfg: dict, workers: int) -> ScanTable:
    params = _params_from(cfg)
    rows: list[tuple] = []
    for m, energy in zip(levels(params), level_energies(params)):
        rows.append(("level", float(m), float(energy), None))
    gaps = all_gaps(params)
    weights = all_decay_weights(params)
    for k, (g, w) in enumerate(zip(gaps, weights), start=1):
        rows.append(("gap", float(k - params.j), float(g), float(w)))
    return ScanTable(("kind", "m", "value", "decay_weight"), rows, [""] * len(rows), {})


def _run_eq_scan(cfg: dict, workers: int) -> ScanTable:
    return equilibrium_scan(_params_from(cfg), _grid_from(cfg, "temp", "temperatures"))


def _run_dyn_scan(cfg: dict, workers: int) -> ScanTable:
    params = _params_from(cfg)
    temps = _grid_from(cfg, "temp", "temperatures")
    if "times" in cfg or "t_min" in cfg:
        times = _grid_from(cfg, "t", "times")
    else:
        # default horizon: a few multiples of the slowest channel time
        t_end = 8.0 / float(all_decay_weights(params).min())
        times = np.linspace(0.0, t_end, cfg["coarse_points"] + 1)
    try:
        grid = ScanGrid(params, temps, times, cfg["phi"])
    except (ValueError, RingthermError) as exc:
        raise ConfigError(f"key times/temperatures/phi: {exc}")
    return dynamic_scan(grid, _search_from(cfg).integrator, workers)


def _run_time_opt(cfg: dict, workers: int) -> ScanTable:
    return time_optimized_qfi(
        _params_from(cfg),
        cfg["phi"],
        _grid_from(cfg, "temp", "temperatures"),
        _search_from(cfg),
        workers,
    )


def _with_scaling(table: ScanTable) -> ScanTable:
    try:
        fit = scaling_fit(table)
    except RingthermError:
        return table
    table.meta["fit_exponent"] = fit.exponent
    table.meta["fit_prefactor"] = fit.prefactor
    table.meta["fit_residual"] = fit.residual
    return table


def _run_t_e(cfg: dict, workers: int) -> ScanTable:
    temps = _grid_from(cfg, "temp", "temperatures")
    search = _search_from(cfg)
    rows: list[tuple] = []
    errors: list[str] = []
    for n in cfg["n_list"]:
        try:
            params = _params_from(cfg, int(n))
            if "temperature" in cfg:
                t_opt = cfg["temperature"]
            else:
                eq = equilibrium_scan(params, temps)
                t_opt = eq.meta["T_opt"]
            te = equilibration_time(params, cfg["phi"], t_opt, cfg["criterion_eps"], search)
            rows.append((float(n), float(t_opt), te))
            errors.append("")
        except RingthermError as exc:
            rows.append((float(n), None, None))
            errors.append(str(exc))
    table = ScanTable(("N", "T", "t_e"), rows, errors, {"phi": cfg["phi"],
                                                        "criterion_eps": cfg["criterion_eps"]})
    fit_input = ScanTable(("N", "t_e"), [(r[0], r[2]) for r in rows], errors, {})
    _with_scaling(fit_input)
    table.meta.update({k: v for k, v in fit_input.meta.items() if k.startswith("fit_")})
    return table


def _run_t_opt(cfg: dict, workers: int) -> ScanTable:
    temps = _grid_from(cfg, "temp", "temperatures")
    search = _search_from(cfg)
    rows: list[tuple] = []
    errors: list[str] = []
    for n in cfg["n_list"]:
        try:
            params = _params_from(cfg, int(n))
            best = optimal_measurement_time(params, cfg["phi"], temps, search, workers)
            rows.append((float(n), best.temperature, best.time, best.qfi, float(best.equilibrated)))
            errors.append("")
        except RingthermError as exc:
            rows.append((float(n), None, None, None, None))
            errors.append(str(exc))
    table = ScanTable(("N", "T_opt", "t_opt", "Q_opt", "equilibrated"), rows, errors,
                      {"phi": cfg["phi"]})
    fit_input = ScanTable(("N", "t_opt"), [(r[0], r[2]) for r in rows], errors, {})
    _with_scaling(fit_input)
    table.meta.update({k: v for k, v in fit_input.meta.items() if k.startswith("fit_")})
    return table


def _run_phi_opt(cfg: dict, workers: int) -> ScanTable:
    params = _params_from(cfg)
    temps = _grid_from(cfg, "temp", "temperatures")
    phis = _grid_from(cfg, "phi", "phis")
    if np.any(phis < 0) or np.any(phis > math.pi / 2):
        raise ConfigError("key phis: angles must lie in [0, pi/2]")
    _, table = optimize_phi(params, temps, phis, _search_from(cfg), workers)
    return table


def _run_crb(cfg: dict, workers: int) -> ScanTable:
    source = read_table(cfg["qfi_table"])
    nu = cfg["repetitions"]
    if nu < 1:
        raise ConfigError("key repetitions: must be >= 1")
    q_cols = [i for i, c in enumerate(source.columns) if c.startswith("Q")]
    if not q_cols:
        raise ConfigError("key qfi_table: no QFI column (name starting with 'Q') found")
    qi = q_cols[0]
    rows: list[tuple] = []
    errors: list[str] = []
    for row, err in zip(source.rows, source.errors):
        q = row[qi]
        if err or q is None:
            rows.append(tuple(row) + (None,))
            errors.append(err or "missing QFI value")
            continue
        try:
            rows.append(tuple(row) + (cramer_rao_bound(float(q), nu),))
            errors.append("")
        except RingthermError as exc:
            rows.append(tuple(row) + (None,))
            errors.append(str(exc))
    return ScanTable(source.columns + ("delta_T",), rows, errors, {"repetitions": nu})


_RUNNERS = {
    "spectrum": _run_spectrum,
    "eq-scan": _run_eq_scan,
    "dyn-scan": _run_dyn_scan,
    "time-opt": _run_time_opt,
    "t-e": _run_t_e,
    "t-opt": _run_t_opt,
    "phi-opt": _run_phi_opt,
    "crb": _run_crb,
}


# ---------------------------------------------------------------------------
# serialization

# keys whose values depend on the runtime environment, not the computation
_VOLATILE_KEYS = ("out", "workers")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.16e}"
    return str(value)


def _echo_config(cfg: dict) -> dict:
    return {k: cfg[k] for k in sorted(cfg) if k not in _VOLATILE_KEYS}


def write_table(table: ScanTable, path: str, fmt: str, subcommand: str, cfg: dict) -> None:
    """Emit a ScanTable as CSV or JSON with a reproducibility header."""
    echo = _echo_config(cfg)
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# ringtherm {__version__}\n")
        buf.write(f"# subcommand = {subcommand}\n")
        for key, value in echo.items():
            buf.write(f"# config.{key} = {_fmt(value)}\n")
        for key in sorted(table.meta):
            buf.write(f"# summary.{key} = {_fmt(table.meta[key])}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(table.columns + ("error",))
        for row, err in zip(table.rows, table.errors):
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row] + [err])
        data = buf.getvalue()
    else:
        doc = {
            "meta": {
                "artifact_version": __version__,
                "subcommand": subcommand,
                "config": echo,
                "summary": table.meta,
            },
            "columns": list(table.columns),
            "data": {c: [r[i] for r in table.rows] for i, c in enumerate(table.columns)},
            "errors": table.errors,
        }
        data = json.dumps(doc, indent=2) + "\n"
    with open(path, "w") as fh:
        fh.write(data)


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path: str) -> ScanTable:
    """Re-parse an emitted result file (either format) into a ScanTable."""
    try:
        with open(path) as fh:
            content = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read table: {exc}")
    if content.lstrip().startswith("{"):
        doc = json.loads(content)
        columns = tuple(doc["columns"])
        n = len(doc["errors"])
        rows = [tuple(doc["data"][c][i] for c in columns) for i in range(n)]
        return ScanTable(columns, rows, list(doc["errors"]), dict(doc["meta"]["summary"]))
    meta: dict = {}
    lines = content.splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            stripped = line[1:].strip()
            if stripped.startswith("summary.") and "=" in stripped:
                key, _, value = stripped.partition("=")
                meta[key.strip()[len("summary."):]] = _parse_cell(value.strip())
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    columns = tuple(header[:-1])  # trailing column is the error marker
    rows: list[tuple] = []
    errors: list[str] = []
    for rec in reader:
        rows.append(tuple(_parse_cell(c) for c in rec[:-1]))
        errors.append(rec[-1])
    return ScanTable(columns, rows, errors, meta)


# ---------------------------------------------------------------------------
# entry points


def run(subcommand: str, config: dict) -> int:
    """Execute one subcommand; writes the result file, returns the exit code."""
    if subcommand not in _SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand: {subcommand}")
    _check_keys(subcommand, config)
    cfg = _resolve(subcommand, config)
    workers = cfg["workers"] if cfg["workers"] > 0 else (os.cpu_count() or 1)
    started = time.monotonic()
    table = _RUNNERS[subcommand](cfg, workers)
    write_table(table, cfg["out"], cfg["format"], subcommand, cfg)
    wall = time.monotonic() - started
    failed = sum(1 for e in table.errors if e)
    print(f"wrote {cfg['out']} ({len(table.rows)} rows, {failed} failed, wall {wall:.2f}s)")
    return 2 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ringtherm",
        description="Thermometry scans for a ring of interacting two-level atoms",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="flat JSON config file")
        sp.add_argument("--out", help="output path (default: <subcommand>.<format>)")
        sp.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
        sp.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        for key in ("out", "format", "workers"):
            value = getattr(args, key)
            if value is not None:
                cfg[key] = value
        return run(args.subcommand, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except RingthermError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
