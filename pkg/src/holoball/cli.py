"""Command-line runner: ``holoball <command> --config <file> [--out <dir>] [--seed <int>]``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.  Errors are
printed to stderr as a single JSON record.  Outputs are computed in memory and
only written once the whole run has succeeded.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import math
import os
import platform
import shutil
import sys
import tempfile
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__, carleson, geometry, holo, lattice, measure, opnorm, selftest

COMMANDS = ("geometry-selftest", "lattice", "carleson", "opnorm")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors: exit 1 with a JSON record, not argparse's 2
    def error(self, message):
        raise ConfigError(message)


@dataclass
class RunSpec:
    command: str
    seed: int
    params: dict

    def echo(self) -> dict:
        return {"command": self.command, "seed": self.seed, **self.params}


# ------------------------------------------------------------- validation


def _get(cfg, key, default=...):
    if key in cfg:
        return cfg[key]
    if default is ...:
        raise ConfigError(f"missing required field {key!r}")
    return default


def _real(cfg, key, default=..., *, gt=None, lo=None, hi=None):
    value = _get(cfg, key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{key} must be a finite number, got {value!r}")
    value = float(value)
    if gt is not None and not value > gt:
        raise ConfigError(f"{key} must exceed {gt:g}, got {value!r}")
    if lo is not None and hi is not None and not lo < value < hi:
        raise ConfigError(f"{key} must lie in ({lo:g}, {hi:g}), got {value!r}")
    return value


def _int(cfg, key, default=..., *, minimum=None):
    value = _get(cfg, key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key} must be at least {minimum}, got {value!r}")
    return value


def _gaps(cfg, key, default):
    value = _get(cfg, key, default)
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a list of numbers")
    if arr.ndim != 1 or arr.size == 0 or np.any(arr <= 0) or np.any(arr >= 1) or np.any(np.diff(arr) >= 0):
        raise ConfigError(f"{key} must be a nonempty, strictly decreasing list in (0, 1)")
    return [float(x) for x in arr]


def _map(cfg, key, n):
    desc = _get(cfg, key)
    try:
        m = holo.map_from_dict(desc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: invalid map description ({exc})")
    if n is not None and m.dim != n:
        raise ConfigError(f"{key} acts on dimension {m.dim}, expected n={n}")
    return m


def _measure_desc(desc, n, seed, path="measure"):
    """Validate a measure description and fill in its defaults."""
    if not isinstance(desc, dict) or "type" not in desc:
        raise ConfigError(f"{path} must be an object with a 'type'")
    kind = desc["type"]
    if kind == "nu_alpha":
        return {
            "type": kind,
            "alpha": _real(desc, "alpha", 0.0, gt=-1),
            "N": _int(desc, "N", 20_000, minimum=1),
            "seed": _int(desc, "seed", seed),
        }
    if kind == "point_mass":
        point = _get(desc, "point", [0.0] * n)
        vec = holo._dec_vec(point)
        if vec.shape[0] != n or not np.linalg.norm(vec) < 1:
            raise ConfigError(f"{path}.point must be a point of the {n}-dimensional ball")
        return {"type": kind, "point": point, "weight": _real(desc, "weight", 1.0, gt=0)}
    if kind == "pullback":
        _map(desc, "phi", n)
        _map(desc, "psi", n)
        return {
            "type": kind,
            "phi": desc["phi"],
            "psi": desc["psi"],
            "q": _real(desc, "q", gt=0),
            "beta": _real(desc, "beta", 0.0, gt=-1),
            "N": _int(desc, "N", 20_000, minimum=1),
            "seed": _int(desc, "seed", seed),
        }
    if kind == "csv":
        return {"type": kind, "path": str(_get(desc, "path"))}
    if kind == "sum":
        terms = _get(desc, "terms")
        if not isinstance(terms, list) or not terms:
            raise ConfigError(f"{path}.terms must be a nonempty list")
        return {"type": kind, "terms": [_measure_desc(t, n, seed + 101 * (k + 1), f"{path}.terms[{k}]") for k, t in enumerate(terms)]}
    raise ConfigError(f"{path}.type must be one of nu_alpha, point_mass, pullback, csv, sum; got {kind!r}")


def build_measure(desc: dict, n: int) -> measure.DiscreteMeasure:
    kind = desc["type"]
    if kind == "nu_alpha":
        return measure.sample_nu_alpha(measure.WeightParams(n, desc["alpha"]), desc["N"], desc["seed"])
    if kind == "point_mass":
        return measure.DiscreteMeasure.point_mass(holo._dec_vec(desc["point"]), desc["weight"])
    if kind == "pullback":
        base = measure.sample_nu_alpha(measure.WeightParams(n, desc["beta"]), desc["N"], desc["seed"])
        return holo.pullback_measure(holo.map_from_dict(desc["phi"]), holo.map_from_dict(desc["psi"]), desc["q"], base)
    if kind == "csv":
        mu = measure.read_csv(desc["path"])
        if mu.n != n:
            raise geometry.DimensionError(f"measure file has dimension {mu.n}, expected {n}")
        return mu
    if kind == "sum":
        out = measure.DiscreteMeasure.zero(n)
        for t in desc["terms"]:
            out = out + build_measure(t, n)
        return out
    raise ValueError(kind)


def _grid_cfg(cfg, n):
    g = _get(cfg, "grid", {}) or {}
    return {
        "K": _int(g, "K", 8, minimum=1),
        "directions": _int(g, "directions", 16 if n == 1 else 64, minimum=1),
        "refine": bool(_get(g, "refine", True)),
        "seed": _int(g, "seed", 0),
    }


def _make_grid(g, n):
    return carleson.default_grid(n, g["K"], g["directions"], g["seed"], g["refine"])


def parse_config(path, seed_override: int | None = None) -> RunSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return spec_from_dict(cfg, seed_override)


def spec_from_dict(cfg: dict, seed_override: int | None = None) -> RunSpec:
    command = _get(cfg, "command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}; got {command!r}")
    seed = seed_override if seed_override is not None else _int(cfg, "seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    parse = {
        "geometry-selftest": _parse_selftest,
        "lattice": _parse_lattice,
        "carleson": _parse_carleson,
        "opnorm": _parse_opnorm,
    }[command]
    return RunSpec(command, seed, parse(cfg, seed))


def _parse_selftest(cfg, seed):
    dims = _get(cfg, "dims", [1, 2, 3])
    if not isinstance(dims, list) or not dims or any(isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in dims):
        raise ConfigError("dims must be a nonempty list of positive integers")
    return {"N": _int(cfg, "N", 10_000, minimum=1), "dims": dims, "r": _real(cfg, "r", 0.5, lo=0, hi=1)}


def _parse_lattice(cfg, seed):
    R_max = _real(cfg, "R_max", lo=0, hi=1)
    n = _int(cfg, "n", minimum=1)
    return {
        "n": n,
        "r": _real(cfg, "r", lo=0, hi=1),
        "R_max": R_max,
        "stream_seed": _int(cfg, "stream_seed", seed, minimum=0),
        "budget": _int(cfg, "budget", lattice.default_budget(R_max, n), minimum=1),
        "probes": _int(cfg, "probes", 10_000, minimum=0),
        "count_queries": _int(cfg, "count_queries", 1_000, minimum=0),
    }


def _parse_carleson(cfg, seed):
    n = _int(cfg, "n", minimum=1)
    lam = _real(cfg, "lambda", gt=0)
    alpha = _real(cfg, "alpha", gt=-1)
    out = {
        "n": n,
        "lambda": lam,
        "alpha": alpha,
        "r": _real(cfg, "r", lo=0, hi=1),
        "s_exp": _real(cfg, "s_exp", n + 1 + alpha, gt=0),
        "measure": _measure_desc(_get(cfg, "measure"), n, seed),
    }
    if lam >= 1:
        out["grid"] = _grid_cfg(cfg, n)
        out["gaps"] = _gaps(cfg, "gaps", [2.0**-k for k in range(1, 13)])
        out["profile_directions"] = _int(cfg, "profile_directions", 16 if n == 1 else 64, minimum=1)
        out["tail_K"] = _int(cfg, "tail_K", 3, minimum=1)
    else:
        p = _real(cfg, "p", 2.0, gt=0)
        q = _real(cfg, "q", lam * p, gt=0)
        if not q < p:
            raise ConfigError(f"the L^t criteria need q < p, got p={p!r}, q={q!r}")
        if not math.isclose(q / p, lam, rel_tol=1e-12):
            raise ConfigError(f"q/p must equal lambda, got q/p={q / p!r}, lambda={lam!r}")
        lat = _get(cfg, "lattice", {}) or {}
        out["p"], out["q"] = p, q
        out["N_nu"] = _int(cfg, "N_nu", 20_000, minimum=1)
        out["nu_seed"] = _int(cfg, "nu_seed", seed + 7, minimum=0)
        out["lattice"] = {
            "R_max": _real(lat, "R_max", 0.8, lo=0, hi=1),
            "stream_seed": _int(lat, "stream_seed", seed, minimum=0),
        }
    return out


def _parse_opnorm(cfg, seed):
    p = _real(cfg, "p", gt=0)
    q = _real(cfg, "q", gt=0)
    alpha = _real(cfg, "alpha", gt=-1)
    beta = _real(cfg, "beta", gt=-1)
    phi = _map(cfg, "phi", None)
    psi = _map(cfg, "psi", phi.dim)
    n = phi.dim
    quantities = _get(cfg, "quantities", None)
    if quantities is not None:
        if not isinstance(quantities, list) or any(x not in opnorm.QUANTITIES for x in quantities):
            raise ConfigError(f"quantities must be a list drawn from {list(opnorm.QUANTITIES)}")
        if "lt_quantity" in quantities and not q < p:
            raise ConfigError(f"lt_quantity requires q < p (the L^t characterization), got p={p!r}, q={q!r}")
    for name, m in (("phi", phi), ("psi", psi)):
        rep = holo.validate_self_map(m)
        if not rep.ok:
            raise ConfigError(f"{name} is not a self-map of the ball: |{name}(z)| reaches {rep.max_image_norm:.12g}")
    d = _get(cfg, "dictionary", {}) or {}
    out = {
        "phi": phi.to_dict(),
        "psi": psi.to_dict(),
        "p": p,
        "q": q,
        "alpha": alpha,
        "beta": beta,
        "n": n,
        "s": _real(cfg, "s", n + 1 + alpha, gt=0),
        "quantities": quantities,
        "N_alpha": _int(cfg, "N_alpha", 20_000, minimum=2),
        "N_beta": _int(cfg, "N_beta", 20_000, minimum=2),
        "N_lt": _int(cfg, "N_lt", 4_000, minimum=2),
        "grid": _grid_cfg(cfg, n),
        "tail_gaps": _gaps(cfg, "tail_gaps", [2.0**-k for k in range(1, 17)]),
        "tail_directions": _int(cfg, "tail_directions", 16 if n == 1 else 64, minimum=1),
        "tail_K": _int(cfg, "tail_K", 3, minimum=1),
        "carleson_r": _real(cfg, "carleson_r", 0.5, lo=0, hi=1),
        "dictionary": {
            "max_degree": _int(d, "max_degree", 4, minimum=0),
            "gaps": [float(x) for x in _get(d, "gaps", [0.1, 0.01, 0.001])],
            "directions": _int(d, "directions", 2, minimum=1),
            "N": _real(d, "N", 4.0, gt=1),
        },
        "probe_kmax": _int(cfg, "probe_kmax", 40, minimum=1),
    }
    pr = holo.TestFnParams(n, p, alpha, N=out["dictionary"]["N"])
    for gap in out["dictionary"]["gaps"]:
        if not 0 < gap < 1 - pr.min_radius:
            raise ConfigError(f"dictionary.gaps entries must lie in (0, {1 - pr.min_radius:g}) for N={pr.N:g}, got {gap!r}")
    return out


# -------------------------------------------------------------------- runs


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _run_selftest(spec):
    pr = spec.params
    checks = selftest.geometry_suite(spec.seed, pr["N"], tuple(pr["dims"]), pr["r"])
    passed = sum(c.passed for c in checks)
    results = {"passed": passed, "failed": len(checks) - passed, "checks": [c.to_dict() for c in checks]}
    return results, {}


def _run_lattice(spec):
    pr = spec.params
    lat = lattice.build_lattice(pr["n"], pr["r"], pr["R_max"], pr["stream_seed"], pr["budget"])
    probes = measure.uniform_ball(pr["n"], pr["probes"], spec.seed, pr["R_max"]) if pr["probes"] else np.zeros((0, pr["n"]))
    misses = int(np.count_nonzero(lattice.uncovered(lat, probes))) if pr["probes"] else 0
    bound = math.floor(lattice.counting_bound(lat.separation, lat.r, pr["n"]))
    # count queries: random centers in the covered region, random radii
    rng = measure.block_rng(spec.seed + 1, 0)
    zq = measure.uniform_ball(pr["n"], pr["count_queries"], spec.seed + 2, pr["R_max"])
    rq = rng.uniform(0.05, 0.95, pr["count_queries"])
    violations = 0
    worst = 0
    for z, r in zip(zq, rq):
        c = lattice.count_in(lat, z, float(r))
        b = math.floor(lattice.counting_bound(lat.separation, float(r), pr["n"]))
        violations += c > b
        worst = max(worst, c)
    files = {}
    with tempfile.TemporaryDirectory() as tmp:
        lat.save(Path(tmp) / "lattice.csv")
        for name in ("lattice.csv", "lattice.csv.json"):
            files[name] = (Path(tmp) / name).read_text()
    results = {
        "centers": len(lat),
        "separation": lat.separation,
        "candidates_used": lat.candidates_used,
        "coverage_probes": pr["probes"],
        "coverage_failures": misses,
        "counting_bound_at_r": bound,
        "count_queries": pr["count_queries"],
        "count_violations": int(violations),
        "max_count": int(worst),
    }
    return results, files


def _run_carleson(spec):
    pr = spec.params
    n = pr["n"]
    mu = build_measure(pr["measure"], n)
    params = carleson.CriterionParams(pr["lambda"], pr["alpha"], pr["r"], n, pr["s_exp"])
    files = {}
    if params.lam >= 1:
        rep = carleson.carleson_report(mu, params, _make_grid(pr["grid"], n), gaps=pr["gaps"], count=pr["profile_directions"])
        for name, prof in rep.profiles.items():
            prof = carleson.ShellProfile(prof.shell_gaps, prof.values, pr["tail_K"])
            rep.profiles[name] = prof
            files[f"profile_{name}.csv"] = profile_csv_text(prof)
    else:
        nu = measure.sample_nu_alpha(measure.WeightParams(n, pr["alpha"]), pr["N_nu"], pr["nu_seed"])
        lat = lattice.build_lattice(n, pr["r"], pr["lattice"]["R_max"], pr["lattice"]["stream_seed"])
        rep = carleson.carleson_report(mu, params, nu_sample=nu, lattice=lat, p=pr["p"], q=pr["q"])
    results = rep.to_dict()
    results["measure_atoms"] = len(mu)
    results["measure_total"] = mu.total
    return results, files


def _run_opnorm(spec):
    pr = spec.params
    ospec = opnorm.OperatorSpec(
        holo.map_from_dict(pr["phi"]), holo.map_from_dict(pr["psi"]), pr["p"], pr["q"], pr["alpha"], pr["beta"]
    )
    d = pr["dictionary"]
    cfg = opnorm.CompareConfig(
        s=pr["s"],
        quantities=None if pr["quantities"] is None else tuple(pr["quantities"]),
        N_alpha=pr["N_alpha"],
        N_beta=pr["N_beta"],
        N_lt=pr["N_lt"],
        seed=spec.seed,
        grid_K=pr["grid"]["K"],
        grid_directions=pr["grid"]["directions"],
        tail_gaps=tuple(pr["tail_gaps"]),
        tail_directions=pr["tail_directions"],
        tail_K=pr["tail_K"],
        carleson_r=pr["carleson_r"],
        dict_degree=d["max_degree"],
        dict_gaps=tuple(d["gaps"]),
        dict_directions=d["directions"],
        N_param=d["N"],
        probe_kmax=pr["probe_kmax"],
    )
    rep = opnorm.compare(ospec, cfg)
    files = {}
    if rep.essential_tail is not None:
        files["profile_essential_tail.csv"] = profile_csv_text(rep.essential_tail)
    results = rep.to_dict()
    results["quantities"] = list(cfg.resolved_quantities(ospec))
    results["seeds"] = {"nu_alpha": spec.seed, "nu_beta": spec.seed + 1, "lt_alpha": spec.seed + 2, "lt_beta": spec.seed + 3}
    return results, files


_RUNNERS = {
    "geometry-selftest": _run_selftest,
    "lattice": _run_lattice,
    "carleson": _run_carleson,
    "opnorm": _run_opnorm,
}


def profile_csv_text(profile: carleson.ShellProfile) -> str:
    if len(profile) == 0:
        raise ValueError("cannot write an empty profile")
    buf = io.StringIO()
    buf.write("gap,value\n")
    for g, v in zip(profile.shell_gaps, profile.values):
        buf.write(f"{g:.17g},{v:.17g}\n")
    return buf.getvalue()


def emit_profile_csv(profile: carleson.ShellProfile, path) -> Path:
    """Write a profile as ``gap,value`` CSV with 17 significant digits."""
    text = profile_csv_text(profile)
    path = Path(path)
    path.write_text(text)
    return path


def versions() -> dict:
    return {
        "holoball": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def render_report(spec: RunSpec, results: dict, timestamp: str | None = None) -> str:
    """Report JSON; the timestamp sits alone on the first content line."""
    if timestamp is None:
        timestamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    body = {
        "command": spec.command,
        "config": _jsonable(spec.echo()),
        "seeds": {"seed": spec.seed},
        "versions": versions(),
        "results": _jsonable(results),
    }
    text = json.dumps(body, indent=2, sort_keys=True)
    return "{\n" + f'  "timestamp": {json.dumps(timestamp)},\n' + text[2:] + "\n"


def run(spec: RunSpec, out: Path) -> dict:
    """Run the command and write ``report.json`` plus any CSV files into ``out``.

    Nothing is written unless the computation finishes.
    """
    results, files = _RUNNERS[spec.command](spec)
    files = {"report.json": render_report(spec, results), **files}
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".holoball-", dir=out))
    try:
        for name, text in files.items():
            (staging / name).write_text(text)
        for name in files:
            os.replace(staging / name, out / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return results


def _provenance(exc: BaseException) -> dict:
    module = operation = None
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("holoball.") and mod != __name__:
            module, operation = mod.split(".", 1)[1], frame.f_code.co_name
    return {"module": module, "operation": operation}


def _error(kind: str, exc: BaseException, code: int, command=None) -> int:
    record = {
        "status": "error",
        "exit_code": code,
        "kind": kind,
        "error": type(exc).__name__,
        "message": str(exc),
        "command": command,
        **_provenance(exc),
    }
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = _Parser(prog="holoball", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", default="holoball_out", help="output directory (default: holoball_out)")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        return _error("validation", exc, 1)
    try:
        spec = parse_config(args.config, args.seed)
        if spec.command != args.command:
            raise ConfigError(f"config is for command {spec.command!r}, not {args.command!r}")
    except (ConfigError, ValueError) as exc:
        return _error("validation", exc, 1, args.command)
    try:
        results = run(spec, Path(args.out))
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        return _error("runtime", exc, 2, args.command)
    if spec.command == "geometry-selftest" and results["failed"]:
        print(json.dumps({"status": "failed", "exit_code": 2, "failed_checks": results["failed"]}), file=sys.stderr)
        return 2
    print(json.dumps({"status": "ok", "out": str(Path(args.out) / "report.json")}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
