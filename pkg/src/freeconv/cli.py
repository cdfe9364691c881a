"""Command-line front end: reproducible, file-based runs of the full pipeline.

Every command reads one JSON config (plus one-to-one flag overrides), validates
it completely before computing anything, and writes a single output file whose
bytes depend only on the job parameters -- never on wall time, worker count, or
host.  CSV outputs start with a "# provenance: <json>" line followed by a
"# summary: <json>" line; JSON outputs carry the same data under fixed keys
with a schema version.

Exit codes: 0 success, 1 validation error, 2 partial numerical failure
(including Monte Carlo skip-rate errors), 3 total failure.
"""

from __future__ import annotations

import argparse
import cmath
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import hermitian, montecarlo, nonhermitian
from .ensembles import EnsembleSpec, analytic_transforms
from .errors import (
    FreeconvError,
    GridError,
    SampleFailureError,
    SpecValidationError,
)
from .grids import GridSpec

SCHEMA_VERSION = 1

_COMMON_KEYS = ("ensemble_a", "output", "format", "profile", "seed", "workers")

# config keys accepted per command; command-line flags mirror these one-to-one
_KEYS = {
    "transform": _COMMON_KEYS + ("variable", "start", "stop", "count", "epsilon"),
    "solve-product": _COMMON_KEYS + ("ensemble_b", "grid"),
    "boundary": _COMMON_KEYS + ("ensemble_b", "angular_samples", "r_max"),
    "density": _COMMON_KEYS + ("ensemble_b", "grid"),
    "sample": _COMMON_KEYS + ("ensemble_b", "trials"),
    "compare": _COMMON_KEYS + ("ensemble_b", "grid", "trials", "bins", "epsilon"),
}

# keys that do not affect the numbers and therefore stay out of provenance
_VOLATILE_KEYS = ("output", "workers")

_PROFILE_TRIALS = {"quick": 100, "paper-scale": 20000}
_DEFAULT_EPSILON = {"transform": 1e-6, "compare": 1e-2}


@dataclass
class JobConfig:
    """One fully validated CLI job; every field is ready to use as-is."""

    command: str
    ensemble_a: Optional[EnsembleSpec] = None
    ensemble_b: Optional[EnsembleSpec] = None
    grid: Optional[GridSpec] = None
    seed: int = 0
    trials: Optional[int] = None
    output: str = ""
    format: str = "csv"
    profile: str = "quick"
    workers: int = 1
    variable: str = "z"
    start: float = -4.0
    stop: float = 4.0
    count: int = 100
    angular_samples: int = 64
    r_max: Optional[float] = None
    bins: int = 16
    epsilon: float = 1e-6


# ---------------------------------------------------------------------------
# config assembly and validation
# ---------------------------------------------------------------------------


def _as_int(raw, key, problems, minimum=None):
    if isinstance(raw, bool) or not isinstance(raw, int):
        problems.append(f"{key} must be an integer, got {raw!r}")
        return None
    if minimum is not None and raw < minimum:
        problems.append(f"{key} must be >= {minimum}, got {raw}")
        return None
    return raw


def _as_float(raw, key, problems):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        problems.append(f"{key} must be a number, got {raw!r}")
        return None
    return float(raw)


def _parse_ensemble(raw, key, problems):
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except ValueError as exc:
            problems.append(f"{key} is not valid JSON: {exc}")
            return None
    try:
        return EnsembleSpec.from_json(raw)
    except SpecValidationError as exc:
        problems.extend(f"{key}: {v}" for v in exc.violations)
        return None


def _parse_grid(raw, key, problems):
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except ValueError as exc:
            problems.append(f"{key} is not valid JSON: {exc}")
            return None
    if not isinstance(raw, dict):
        problems.append(f"{key} must be an object with kind/ranges/resolution")
        return None
    try:
        return GridSpec.from_dict(raw)
    except GridError as exc:
        problems.append(f"{key}: {exc}")
        return None


def build_job(command: str, merged: dict) -> JobConfig:
    """Validate a merged config mapping into a JobConfig.

    Args:
        command: one of the subcommand names.
        merged: config-file values with flag overrides already applied.

    Returns:
        A JobConfig with every field resolved to its final value.

    Raises:
        SpecValidationError: listing every violation found, not just the first.
    """
    problems = []
    allowed = set(_KEYS[command]) | {"command"}
    for key in sorted(set(merged) - allowed):
        problems.append(f"key {key!r} is not used by command {command!r}")
    if merged.get("command") not in (None, command):
        problems.append(
            f"config names command {merged['command']!r} but {command!r} was invoked")

    cfg = JobConfig(command=command)
    cfg.epsilon = _DEFAULT_EPSILON.get(command, 1e-6)

    if "ensemble_a" in merged:
        cfg.ensemble_a = _parse_ensemble(merged["ensemble_a"], "ensemble_a", problems)
    else:
        problems.append("ensemble_a is required")
    needs_b = command != "transform"
    if "ensemble_b" in merged:
        cfg.ensemble_b = _parse_ensemble(merged["ensemble_b"], "ensemble_b", problems)
    elif needs_b:
        problems.append(f"ensemble_b is required for command {command!r}")

    needs_grid = command in ("solve-product", "density", "compare")
    if "grid" in merged:
        cfg.grid = _parse_grid(merged["grid"], "grid", problems)
    elif needs_grid:
        problems.append(f"grid is required for command {command!r}")
    if cfg.grid is not None:
        if command == "compare" and cfg.grid.kind != "cartesian":
            problems.append("compare needs a cartesian grid (2d histogram cells)")
        if command in ("density", "compare") and cfg.grid.contains_origin():
            problems.append("grid contains z = 0; offset the ranges to avoid the origin")

    if "seed" in merged:
        value = _as_int(merged["seed"], "seed", problems, minimum=0)
        if value is not None:
            cfg.seed = value
    if command in ("sample", "compare"):
        profile = merged.get("profile", cfg.profile)
        fallback = _PROFILE_TRIALS.get(profile, _PROFILE_TRIALS["quick"])
        if "trials" in merged:
            cfg.trials = _as_int(merged["trials"], "trials", problems, minimum=1)
        else:
            cfg.trials = fallback

    output = merged.get("output")
    if not output or not isinstance(output, str):
        problems.append("output path is required")
    else:
        cfg.output = output

    if "format" in merged:
        if merged["format"] not in ("csv", "json"):
            problems.append(f"format must be 'csv' or 'json', got {merged['format']!r}")
        else:
            cfg.format = merged["format"]
    if command == "compare":
        if merged.get("format", "json") != "json":
            problems.append("comparison reports are JSON only; drop format or set 'json'")
        cfg.format = "json"

    if "profile" in merged:
        if merged["profile"] not in ("quick", "paper-scale"):
            problems.append(
                f"profile must be 'quick' or 'paper-scale', got {merged['profile']!r}")
        else:
            cfg.profile = merged["profile"]

    if "workers" in merged:
        value = _as_int(merged["workers"], "workers", problems, minimum=1)
        if value is not None:
            cfg.workers = value
    else:
        env = os.environ.get("FREECONV_WORKERS")
        if env is not None:
            try:
                cfg.workers = max(1, int(env))
            except ValueError:
                problems.append(f"FREECONV_WORKERS must be an integer, got {env!r}")

    if command == "transform":
        if "variable" in merged:
            if merged["variable"] not in ("z", "y"):
                problems.append(f"variable must be 'z' or 'y', got {merged['variable']!r}")
            else:
                cfg.variable = merged["variable"]
        for key in ("start", "stop", "epsilon"):
            if key in merged:
                value = _as_float(merged[key], key, problems)
                if value is not None:
                    setattr(cfg, key, value)
        if "count" in merged:
            value = _as_int(merged["count"], "count", problems, minimum=2)
            if value is not None:
                cfg.count = value
        if not cfg.stop > cfg.start:
            problems.append(f"need stop > start, got [{cfg.start}, {cfg.stop}]")
        if not cfg.epsilon > 0:
            problems.append(f"epsilon must be positive, got {cfg.epsilon}")
        if cfg.variable == "y":
            if cfg.start <= 0:
                problems.append("variable 'y' needs start > 0 (S is sampled on y > 0)")
            spec = cfg.ensemble_a
            if spec is not None and not (spec.tau == 1.0 and spec.shift.imag == 0.0
                                         and spec.shift.real != 0.0):
                problems.append("variable 'y' needs a non-centered hermitian ensemble "
                                "(tau = 1, real nonzero shift)")

    if command == "boundary":
        if "angular_samples" in merged:
            value = _as_int(merged["angular_samples"], "angular_samples",
                            problems, minimum=8)
            if value is not None:
                cfg.angular_samples = value
        if "r_max" in merged:
            value = _as_float(merged["r_max"], "r_max", problems)
            if value is not None:
                if value <= 0:
                    problems.append(f"r_max must be positive, got {value}")
                else:
                    cfg.r_max = value

    if command == "compare":
        if "bins" in merged:
            value = _as_int(merged["bins"], "bins", problems, minimum=4)
            if value is not None:
                cfg.bins = value
        if "epsilon" in merged:
            value = _as_float(merged["epsilon"], "epsilon", problems)
            if value is not None:
                if value <= 0:
                    problems.append(f"epsilon must be positive, got {value}")
                else:
                    cfg.epsilon = value

    if problems:
        raise SpecValidationError(problems)
    return cfg


def _provenance(cfg: JobConfig) -> dict:
    prov = {"command": cfg.command}
    for key in _KEYS[cfg.command]:
        if key in _VOLATILE_KEYS:
            continue
        value = getattr(cfg, key)
        if isinstance(value, EnsembleSpec):
            value = value.to_json()
        elif isinstance(value, GridSpec):
            value = value.to_dict()
        prov[key] = value
    return prov


# ---------------------------------------------------------------------------
# output writers
# ---------------------------------------------------------------------------


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    x = float(value)
    return format(x, ".17g") if math.isfinite(x) else ""


def _json_cell(value):
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    x = float(value)
    return x if math.isfinite(x) else None


def _write_table(cfg: JobConfig, summary: dict, header: list, rows: list) -> None:
    path = Path(cfg.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    prov = _provenance(cfg)
    if cfg.format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as handle:
            handle.write("# provenance: " + _canon(prov) + "\r\n")
            handle.write("# summary: " + _canon(summary) + "\r\n")
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_csv_cell(c) for c in row])
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "provenance": prov,
            "summary": summary,
            "columns": header,
            "rows": [[_json_cell(c) for c in row] for row in rows],
        }
        _write_json(path, payload)


def _write_json(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(payload, sort_keys=True, indent=2))
        handle.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_transform(cfg: JobConfig) -> int:
    """Tabulate (z, G, R, S) or (y, S, z, G, R) for one ensemble."""
    scalar, matrix = analytic_transforms(cfg.ensemble_a)
    values = np.linspace(cfg.start, cfg.stop, cfg.count)
    rows = []

    if cfg.variable == "y":
        header = ["y", "s_re", "s_im", "z_re", "z_im", "g_re", "g_im", "r_re", "r_im"]
        for y in values:
            y = float(y)
            try:
                s = complex(hermitian.s_from_r(scalar, y))
            except FreeconvError as exc:
                raise FreeconvError(f"transform failed at y = {y}: {exc}") from exc
            z = (1.0 + y) / (y * s)
            g = (1.0 + y) / z
            r = complex(scalar.r_eval(g))
            rows.append([y, s.real, s.imag, z.real, z.imag,
                         g.real, g.imag, r.real, r.imag])
        summary = {"points": len(rows), "variable": "y"}
    elif scalar is not None:
        # hermitian: retarded boundary values G(x + i*epsilon) along the real axis
        header = ["z", "g_re", "g_im", "density", "r_re", "r_im", "y_re", "y_im", "s"]
        for x in values:
            x = float(x)
            z = complex(x, cfg.epsilon)
            try:
                g = hermitian.green_from_r(scalar, z).g
                rho = hermitian.density_real(scalar, x, cfg.epsilon)
            except FreeconvError as exc:
                raise FreeconvError(f"transform failed at z = {x}: {exc}") from exc
            r = complex(scalar.r_eval(g))
            y = z * g - 1.0
            s_cell = "undefined"
            if (scalar.kappa1 != 0 and y.real > 1e-9
                    and abs(y.imag) < 50.0 * cfg.epsilon * (1.0 + abs(y))):
                s_cell = complex(hermitian.s_from_r(scalar, y.real)).real
            rows.append([x, g.real, g.imag, rho, r.real, r.imag,
                         y.real, y.imag, s_cell])
        summary = {"points": len(rows), "variable": "z", "section": "scalar"}
    else:
        # non-hermitian: quaternionic solution and matrix self-energy per point
        header = ["z_re", "z_im", "a_re", "a_im", "b_abs", "correlator", "branch",
                  "r11_re", "r11_im", "r12_re", "r12_im",
                  "r21_re", "r21_im", "r22_re", "r22_im", "s"]
        for x in values:
            z = complex(float(x))
            try:
                sol = nonhermitian.solve_single(matrix, z)
            except FreeconvError as exc:
                raise FreeconvError(f"transform failed at z = {z}: {exc}") from exc
            sig = matrix.apply(sol.gm)
            rows.append([z.real, z.imag, sol.gm.a.real, sol.gm.a.imag,
                         abs(sol.gm.b), sol.correlator, sol.branch,
                         sig.q11.real, sig.q11.imag, sig.q12.real, sig.q12.imag,
                         sig.q21.real, sig.q21.imag, sig.q22.real, sig.q22.imag,
                         "undefined"])
        summary = {"points": len(rows), "variable": "z", "section": "matrix"}

    _write_table(cfg, summary, header, rows)
    return 0


def _solve_grid(cfg: JobConfig, rmap_a, rmap_b):
    """Solve the product system at every grid node, order-preserving."""
    points = cfg.grid.points()
    flat = [complex(z) for z in points.ravel()]

    def solve_one(z: complex):
        try:
            return nonhermitian.solve_product(rmap_a, rmap_b, z)
        except FreeconvError:
            return None

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            sols = list(pool.map(solve_one, flat))
    else:
        sols = [solve_one(z) for z in flat]
    return points, sols


def cmd_solve_product(cfg: JobConfig) -> int:
    """Per-point product Green's functions (a, b, C, branch, residual) on a grid."""
    _, rmap_a = analytic_transforms(cfg.ensemble_a)
    _, rmap_b = analytic_transforms(cfg.ensemble_b)
    points, sols = _solve_grid(cfg, rmap_a, rmap_b)
    n0, n1 = points.shape
    failures = sum(1 for s in sols if s is None)

    rot = None
    if min(cfg.grid.resolution) >= 5:
        g11 = np.array([s.gm.a if s is not None else complex("nan")
                        for s in sols]).reshape(points.shape)
        _, rot = nonhermitian._divergence_rho(cfg.grid, g11)

    axis_names = ("x", "y") if cfg.grid.kind == "cartesian" else ("r", "phi")
    header = [axis_names[0], axis_names[1], "z_re", "z_im", "a_re", "a_im",
              "b_abs", "correlator", "branch", "residual", "iterations", "status"]
    if rot is not None:
        header.append("rot")
    axis0, axis1 = cfg.grid.axes()
    rows = []
    for i in range(n0):
        for j in range(n1):
            z = complex(points[i, j])
            sol = sols[i * n1 + j]
            if sol is None:
                row = [float(axis0[i]), float(axis1[j]), z.real, z.imag,
                       None, None, None, None, "", None, None, "failed"]
            else:
                row = [float(axis0[i]), float(axis1[j]), z.real, z.imag,
                       sol.gm.a.real, sol.gm.a.imag, abs(sol.gm.b),
                       sol.correlator, sol.branch, sol.residual,
                       sol.iterations, "ok"]
            if rot is not None:
                row.append(float(rot[i, j]))
            rows.append(row)

    summary = {"points": n0 * n1, "failed": failures}
    if rot is not None:
        core = rot[1:-1, 1:-1]
        finite = core[np.isfinite(core)]
        summary["rot_residual"] = float(np.max(np.abs(finite))) if finite.size else None
    _write_table(cfg, summary, header, rows)
    if failures == n0 * n1:
        print(f"error: all {failures} grid points failed to solve", file=sys.stderr)
        return 3
    if failures > 0.05 * n0 * n1:
        print(f"warning: {failures} of {n0 * n1} grid points failed", file=sys.stderr)
        return 2
    return 0


def cmd_boundary(cfg: JobConfig) -> int:
    """Support boundary polyline r(phi), with the analytic curve when known."""
    _, rmap_a = analytic_transforms(cfg.ensemble_a)
    _, rmap_b = analytic_transforms(cfg.ensemble_b)
    result = nonhermitian.boundary_curve(rmap_a, rmap_b,
                                         angular_samples=cfg.angular_samples,
                                         r_max=cfg.r_max)
    route = nonhermitian._registered_route(rmap_a, rmap_b)

    def reference(phi: float):
        if route is None:
            return None
        kind, param = route
        if kind == "circular":
            return float(param)
        r_ref = 1.0 + 2.0 * math.cos(phi)
        return r_ref if r_ref > 0 else None

    entries = [(phi, r, "ok") for r, phi in result.points]
    entries += [(phi, None, "empty") for phi in result.empty_rays]
    entries.sort(key=lambda e: e[0])
    header = ["phi", "r", "r_reference", "status"]
    rows = [[phi, r, reference(phi), status] for phi, r, status in entries]
    summary = {"rays": len(entries), "located": len(result.points),
               "empty": len(result.empty_rays)}
    _write_table(cfg, summary, header, rows)
    if not result.points:
        print("error: no support boundary found on any ray", file=sys.stderr)
        return 3
    return 0


def cmd_density(cfg: JobConfig) -> int:
    """Eigenvalue density field of A B on a grid (analytic route)."""
    _, rmap_a = analytic_transforms(cfg.ensemble_a)
    _, rmap_b = analytic_transforms(cfg.ensemble_b)
    try:
        fld = nonhermitian.density_field(rmap_a, rmap_b, cfg.grid)
    except GridError as exc:
        # the grid itself validated, so this is the >5% unsolved-nodes abort
        print(f"error: {exc}", file=sys.stderr)
        return 2

    rot = fld.rot
    axis0, axis1 = cfg.grid.axes()
    hx, hy = cfg.grid.steps()
    points = cfg.grid.points()
    if cfg.grid.kind == "cartesian":
        weights = np.full(points.shape, hx * hy)
    else:
        weights = axis0[:, None] * hx * hy * np.ones_like(points.real)
    mass = float(np.sum(fld.rho * weights))

    axis_names = ("x", "y") if cfg.grid.kind == "cartesian" else ("r", "phi")
    header = [axis_names[0], axis_names[1], "z_re", "z_im",
              "rho", "g11_re", "g11_im", "rot"]
    rows = []
    for i in range(points.shape[0]):
        for j in range(points.shape[1]):
            z = complex(points[i, j])
            g = complex(fld.g11[i, j])
            rows.append([float(axis0[i]), float(axis1[j]), z.real, z.imag,
                         float(fld.rho[i, j]), g.real, g.imag, float(rot[i, j])])
    summary = {"route": fld.route, "rot_residual": _json_cell(fld.rot_residual),
               "holes": fld.holes, "mass": mass}
    _write_table(cfg, summary, header, rows)
    return 0


def cmd_sample(cfg: JobConfig) -> int:
    """Pooled product eigenvalues over independent trials, one row per value."""
    cloud = montecarlo.product_eigenvalues(cfg.ensemble_a, cfg.ensemble_b,
                                           cfg.trials, cfg.seed,
                                           workers=cfg.workers)
    kept = [t for t in range(cfg.trials) if t not in set(cloud.skipped)]
    n = cloud.n
    header = ["trial", "re", "im"]
    rows = []
    for block, trial in enumerate(kept):
        for ev in cloud.eigenvalues[block * n:(block + 1) * n]:
            rows.append([trial, ev.real, ev.imag])
    summary = {"trials": cfg.trials, "n": n,
               "skipped": [int(t) for t in cloud.skipped],
               "eigenvalues": int(cloud.eigenvalues.size)}
    _write_table(cfg, summary, header, rows)
    return 0


def _point_density(rmap_a, rmap_b, z: complex) -> Optional[float]:
    """Analytic density at one point, via the closed form when registered."""
    if abs(z) < 1e-9:
        return None
    route = nonhermitian._registered_route(rmap_a, rmap_b)
    if route is not None:
        kind, param = route
        if kind == "circular":
            return nonhermitian._circular_point(param, z)[1]
        return nonhermitian.limacon_reference(abs(z), cmath.phase(z)).rho
    return nonhermitian.density_at(rmap_a, rmap_b, z).rho


def cmd_compare(cfg: JobConfig) -> int:
    """Sample, histogram, and compare against the analytic field in one run."""
    cloud = montecarlo.product_eigenvalues(cfg.ensemble_a, cfg.ensemble_b,
                                           cfg.trials, cfg.seed,
                                           workers=cfg.workers)
    empirical = montecarlo.histogram2d(cloud, cfg.grid)
    _, rmap_a = analytic_transforms(cfg.ensemble_a)
    _, rmap_b = analytic_transforms(cfg.ensemble_b)
    try:
        analytic = nonhermitian.density_field(rmap_a, rmap_b, cfg.grid)
    except GridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = montecarlo.compare_density(empirical, analytic)
    radial = montecarlo.radial_profile(cloud, bins=cfg.bins)

    payload = {
        "schema_version": SCHEMA_VERSION,
        "provenance": _provenance(cfg),
        "l1_distance": report.l1_distance,
        "max_deviation": report.max_deviation,
        "included_cells": report.included_cells,
        "excluded": report.excluded,
        "sample_counts": report.sample_counts,
        "analytic_route": analytic.route,
        "rot_residual": _json_cell(analytic.rot_residual),
        "skipped_trials": [int(t) for t in cloud.skipped],
        "radial": {
            "edges": [float(e) for e in radial.edges],
            "density": [float(d) for d in radial.density],
            "count": radial.count,
        },
    }

    if cfg.profile == "paper-scale":
        sl = montecarlo.real_axis_slice(cloud, eps=cfg.epsilon, bins=cfg.bins)
        section = {"eps": sl.eps, "count": sl.count, "empty": sl.empty,
                   "normalization": sl.normalization}
        if not sl.empty:
            centers = 0.5 * (sl.edges[:-1] + sl.edges[1:])
            width = float(sl.edges[1] - sl.edges[0])
            raw = [_point_density(rmap_a, rmap_b, complex(c)) for c in centers]
            norm = sum(v for v in raw if v is not None) * width
            section["edges"] = [float(e) for e in sl.edges]
            section["density"] = [float(d) for d in sl.density]
            section["analytic_rho"] = [_json_cell(v) for v in raw]
            section["analytic_density"] = [
                _json_cell(v / norm if v is not None else None) for v in raw]
        payload["slice"] = section

    _write_json(cfg.output, payload)
    return 0


_DISPATCH = {
    "transform": cmd_transform,
    "solve-product": cmd_solve_product,
    "boundary": cmd_boundary,
    "density": cmd_density,
    "sample": cmd_sample,
    "compare": cmd_compare,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems as validation errors."""

    def error(self, message):
        raise SpecValidationError([message])


def _add_flags(sub: argparse.ArgumentParser, command: str) -> None:
    sub.add_argument("--config", type=str, default=None,
                     help="JSON config file; flags below override its keys")
    keys = _KEYS[command]
    sub.add_argument("--ensemble-a", type=str, default=None,
                     help='ensemble A as JSON, e.g. \'{"kind":"ginibre","n":100}\'')
    if "ensemble_b" in keys:
        sub.add_argument("--ensemble-b", type=str, default=None,
                         help="ensemble B as JSON")
    if "grid" in keys:
        sub.add_argument("--grid", type=str, default=None,
                         help='grid as JSON: {"kind","ranges","resolution"}')
    sub.add_argument("--output", type=str, default=None, help="output file path")
    sub.add_argument("--format", type=str, default=None,
                     help="'csv' or 'json' (compare is always json)")
    sub.add_argument("--profile", type=str, default=None,
                     help="'quick' or 'paper-scale'; sets the default trial count")
    sub.add_argument("--seed", type=int, default=None, help="master RNG seed")
    sub.add_argument("--workers", type=int, default=None,
                     help="parallelism cap (default: FREECONV_WORKERS or 1); "
                          "never affects output bytes")
    if "trials" in keys:
        sub.add_argument("--trials", type=int, default=None,
                         help="Monte Carlo trials (default from profile)")
    if "variable" in keys:
        sub.add_argument("--variable", type=str, default=None,
                         help="tabulate against spectral 'z' or moment variable 'y'")
        sub.add_argument("--start", type=float, default=None, help="first value")
        sub.add_argument("--stop", type=float, default=None, help="last value")
        sub.add_argument("--count", type=int, default=None, help="number of values")
    if "epsilon" in keys:
        sub.add_argument("--epsilon", type=float, default=None,
                         help="transform: offset above the real axis; "
                              "compare: half-width of the real-axis slice")
    if "angular_samples" in keys:
        sub.add_argument("--angular-samples", type=int, default=None,
                         help="number of rays (>= 8)")
        sub.add_argument("--r-max", type=float, default=None,
                         help="outer radius for the boundary search")
    if "bins" in keys:
        sub.add_argument("--bins", type=int, default=None,
                         help="bins for radial/slice profiles")


def _build_parser() -> _Parser:
    parser = _Parser(prog="freeconv",
                     description="Spectral calculus for sums and products of "
                                 "free random matrices, with Monte Carlo checks.")
    subs = parser.add_subparsers(dest="command", required=True)
    for command in _KEYS:
        sub = subs.add_parser(command, help=_DISPATCH[command].__doc__,
                              description=_DISPATCH[command].__doc__)
        _add_flags(sub, command)
    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    merged = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as handle:
                loaded = json.load(handle)
        except OSError as exc:
            raise SpecValidationError([f"cannot read config file: {exc}"])
        except ValueError as exc:
            raise SpecValidationError([f"config file is not valid JSON: {exc}"])
        if not isinstance(loaded, dict):
            raise SpecValidationError(["config file must hold a JSON object"])
        merged.update(loaded)
    for key in _KEYS[args.command]:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = build_job(args.command, _merge_config(args))
        return _DISPATCH[cfg.command](cfg)
    except SpecValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SampleFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FreeconvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
