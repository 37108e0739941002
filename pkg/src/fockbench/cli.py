"""Command-line front end: configuration, scenario dispatch, invariant suite and reports.

    fockbench list
    fockbench verify-core [--seed N] [--out DIR]
    fockbench scenario --name NAME [--config PATH] [--out DIR] [--seed N] [--jobs K]

Exit codes: 0 pass, 2 configuration error, 3 resource cap exceeded, 4 failed assertion.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .fock_core import ResourceError

__all__ = [
    "RunConfig",
    "fit_order",
    "list_scenarios",
    "scenario_schema",
    "load_config",
    "invariant_suite",
    "run",
    "main",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_RESOURCE",
    "EXIT_ASSERTION",
]

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_ASSERTION = 0, 2, 3, 4
DEFAULT_CAP_MB = 4096.0

log = logging.getLogger("fockbench")


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


# ------------------------------------------------------------------ order fits


def fit_order(table, key: str = "abs_error") -> float:
    """Least-squares slope of log(error) against log(h).

    ``table`` is a list of rows with keys ``h`` and ``key`` or an (k, 2)
    array of (h, error) pairs.  Rows with a zero error are skipped.
    """
    if len(table) and isinstance(table[0], dict):
        pts = [(float(r["h"]), float(r[key])) for r in table]
    else:
        pts = [(float(h), float(e)) for h, e in np.asarray(table, dtype=float)]
    pts = [(h, e) for h, e in pts if e > 0 and h > 0]
    if len(pts) < 2:
        raise ValueError("need at least two positive errors to fit an order")
    h, e = np.log(np.array(pts)).T
    return float(np.polyfit(h, e, 1)[0])


# ------------------------------------------------------------------ schemas

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_FRAC = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_COMMON = {
    "scenario": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "h_schedule": {"type": "array", "items": _POS, "minItems": 2},
    "eps_power": _POS,
    "caps": {
        "type": "object",
        "properties": {"mem_mb": _POS, "tensor_cap": {"type": "integer", "minimum": 1}},
        "additionalProperties": False,
    },
}
_SPECIFIC = {
    "coherent": {
        "X0": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "z_norm2": {"type": "number", "exclusiveMinimum": 0, "maximum": 2},
        "p_max": {"type": "integer", "minimum": 1, "maximum": 3},
        "width": _POS, "tol": _POS, "triple_tol": _POS,
    },
    "fermi_gibbs": {
        "beta": _POS, "mu_coeff": _NUM, "p_max": {"type": "integer", "minimum": 1, "maximum": 2},
        "width": _POS, "rel_tol": _POS, "order_min": _NUM, "product_tol": _POS, "cross_check_h": _POS,
        "cross_check_modes": {"type": "integer", "minimum": 1, "maximum": 8},
    },
    "bec": {
        "beta": _POS, "nu_C": _POS, "kappa": _POS, "s_fraction": _FRAC, "rel_tol": _POS, "pole_tol": _POS,
        "taylor_tol": _POS, "taylor_order": {"type": "integer", "minimum": 1, "maximum": 6},
        "cross_check_h": _POS,
    },
    "singular_trace": {
        "c_values": {"type": "array", "items": _POS, "minItems": 1},
        "rel_tol": _POS, "scaling_tol": _POS,
    },
}
_DEFAULT_PLANS = {
    "coherent": (3, 6, 1.0),
    "fermi_gibbs": (4, 8, 1.0),
    "bec": (3, 10, 2.0),
    "singular_trace": (4, 9, 1.0),
}


def scenario_schema(name: str) -> dict:
    if name not in _SPECIFIC:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(sorted(_SPECIFIC))}")
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": name,
        "type": "object",
        "properties": {**_COMMON, **_SPECIFIC[name]},
        "additionalProperties": False,
    }


def list_scenarios() -> dict:
    """Registered scenario names with their parameter schemas."""
    return {name: scenario_schema(name) for name in _SPECIFIC}


# ------------------------------------------------------------------ configuration


@dataclass
class RunConfig:
    scenario: str
    parameters: dict = field(default_factory=dict)
    h_schedule: tuple | None = None
    eps_power: float | None = None
    caps: dict = field(default_factory=dict)
    out: Path = Path("fockbench_out")
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        mem = self.caps.get("mem_mb", cap_mb())
        if mem > 64 * 1024:
            raise ConfigError("mem_mb beyond the documented 64 GB limit")

    def plan(self):
        from .semiclassics import ScalingPlan

        k0, k1, power = _DEFAULT_PLANS[self.scenario]
        hs = self.h_schedule or tuple(2.0**-k for k in range(k0, k1 + 1))
        try:
            return ScalingPlan(tuple(hs), self.eps_power if self.eps_power is not None else power)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def cap_mb() -> float:
    raw = os.environ.get("FOCKBENCH_CAP_MB")
    if raw is None:
        return DEFAULT_CAP_MB
    try:
        val = float(raw)
    except ValueError as exc:
        raise ConfigError(f"FOCKBENCH_CAP_MB={raw!r} is not a number") from exc
    if val <= 0:
        raise ConfigError("FOCKBENCH_CAP_MB must be positive")
    return val


def load_config(path, name: str | None = None) -> dict:
    """Parse and validate a JSON config; errors carry line/column or schema path."""
    text = Path(path).read_text() if path is not None else "{}"
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    name = name or data.get("scenario")
    if name is None:
        raise ConfigError("no scenario name given (use --name or a 'scenario' key)")
    if data.get("scenario", name) != name:
        raise ConfigError(f"config is for scenario {data['scenario']!r}, not {name!r}")
    try:
        jsonschema.validate(data, scenario_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}") from exc
    data["scenario"] = name
    return data


def _estimate_mb(cfg: RunConfig) -> float:
    """Rough peak memory of a scenario from its finest grid."""
    from .weyl import harmonic_grid

    h = min(cfg.plan().h_schedule)
    if cfg.scenario in ("fermi_gibbs", "singular_trace"):
        n = harmonic_grid(h, 4.8).n_pts
        return 6 * n * n * 8 / 2**20
    if cfg.scenario == "coherent":
        n = harmonic_grid(h, 5.0).n_pts
        return 5 * n * n * 8 / 2**20
    return 64.0


# ------------------------------------------------------------------ invariant suite


def _check(name, value, tol, provenance):
    return {"name": name, "value": float(value), "tolerance": float(tol), "passed": bool(value <= tol),
            "provenance": provenance}


def invariant_suite(seed: int = 0) -> list:
    """CCR/CAR on the safe subspace, projector laws, duality, Hermiticity/PSD and determinism."""
    from .fock_core import BOSON, FERMION, embed_restrict, sector_dimension, symmetrizer
    from .operators import Gamma, TruncatedFock
    from .states import (FockState, GibbsSpec, bosonic_gibbs_cutoff, gibbs_state, quasifree_trace,
                         quasifree_trace_sector_sum, reduced_density, reduced_density_duality)
    from .weyl import PhaseSpaceGrid, gaussian_symbol, weyl_quantize
    from .wick import WickKernel, compose_wick

    rng = np.random.Generator(np.random.Philox(seed))
    out = []

    for stat, N in ((BOSON, 5), (FERMION, 3)):
        fock = TruncatedFock(3 if stat is FERMION else 2, stat, N, 0.3)
        safe = fock.particle_numbers < fock.N_max if stat is BOSON else np.ones(fock.dim, bool)
        worst = 0.0
        for i in range(fock.m):
            for j in range(fock.m):
                a, ad = fock.lowering(i), fock.raising(j)
                comm = (a @ ad - stat.pm * (ad @ a)).toarray()
                comm -= fock.eps * (i == j) * np.eye(fock.dim)
                worst = max(worst, float(np.abs(comm[np.ix_(safe, safe)]).max()))
        out.append(_check(f"{'ccr' if stat is BOSON else 'car'}_safe_subspace", worst, 1e-13, "exact relation"))

    for stat in (BOSON, FERMION):
        for m in (2, 3):
            for p in (1, 2, 3):
                S = symmetrizer(stat, m, p)
                E, R = embed_restrict(stat, m, p)
                err = max(np.abs(S @ S - S).max(initial=0.0), np.abs(S - S.conj().T).max(initial=0.0),
                          abs(np.linalg.matrix_rank(S) - sector_dimension(stat, m, p)),
                          np.abs(E @ R - S).max(initial=0.0),
                          np.abs(R @ E - np.eye(R.shape[0])).max(initial=0.0))
                out.append(_check(f"projector_{stat.value}_m{m}_p{p}", err, 1e-12, "projector laws"))

    for stat in (BOSON, FERMION):
        fock = TruncatedFock(2 if stat is BOSON else 3, stat, 3, 0.5)
        psi = rng.standard_normal(fock.dim) + 1j * rng.standard_normal(fock.dim)
        state = FockState.pure(fock, psi / np.linalg.norm(psi))
        for p in (1, 2):
            g = reduced_density(state, p)
            ref = reduced_density_duality(state, p)
            out.append(_check(f"duality_{stat.value}_p{p}", np.abs(g.matrix - ref.matrix).max(), 1e-12,
                              "duality oracle"))
            out.append(_check(f"rdm_psd_{stat.value}_p{p}", 0.0 if g.is_psd() else 1.0, 0.0, "eigenvalues"))

    for stat in (BOSON, FERMION):
        m = 2
        H = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        H = H @ H.conj().T + np.eye(m)
        spec = GibbsSpec(H, 1.0, 0.0, stat)
        N = bosonic_gibbs_cutoff(spec.C, 1e-12) if stat is BOSON else m
        state = gibbs_state(spec, TruncatedFock(m, stat, N, 0.5))
        out.append(_check(f"gibbs_psd_{stat.value}", max(0.0, -state.min_eigenvalue()), 1e-12, "eigenvalues"))
        closed = quasifree_trace(spec.C, stat)
        summed = quasifree_trace_sector_sum(spec.C, stat)["value"]
        out.append(_check(f"quasifree_trace_{stat.value}", abs(closed - summed) / abs(closed), 1e-10,
                          "closed form vs sector sum"))

    grid = PhaseSpaceGrid(1, 16.0, 128)
    M = weyl_quantize(gaussian_symbol(1.0, center=(0.5, -0.3)), 0.25, 0.5, grid, hermitize=False)
    out.append(_check("weyl_hermitian", np.abs(M - M.conj().T).max(), 1e-13, "real symbol"))

    for stat in (BOSON, FERMION):
        fock = TruncatedFock(2, stat, 4, 0.3)
        for (p1, q1, p2, q2) in ((1, 1, 1, 1), (2, 1, 1, 2), (1, 2, 2, 1)):
            b1 = WickKernel.random(rng, stat, 2, p1, q1)
            b2 = WickKernel.random(rng, stat, 2, p2, q2)
            res = compose_wick(b1, b2, fock)
            out.append(_check(f"wick_composition_{stat.value}_{p1}{q1}{p2}{q2}", res["max_diff"], 1e-10,
                              "composition formula"))
        C1 = rng.standard_normal((2, 2)) * 0.4
        C2 = rng.standard_normal((2, 2)) * 0.4
        gap = np.abs((Gamma(fock, C1) @ Gamma(fock, C2)).toarray() - Gamma(fock, C1 @ C2).toarray()).max()
        out.append(_check(f"gamma_multiplicative_{stat.value}", gap, 1e-12, "functor property"))

    def fingerprint():
        r = np.random.Generator(np.random.Philox(seed))
        b = WickKernel.random(r, BOSON, 2, 1, 1)
        return _rows_to_csv([{"re": float(x.real), "im": float(x.imag)} for x in b.matrix.ravel()])

    out.append(_check("determinism", 0.0 if fingerprint() == fingerprint() else 1.0, 0.0, "byte comparison"))
    return out


# ------------------------------------------------------------------ output


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, (list, tuple, np.ndarray)):
        return json.dumps(v, default=_json_default)
    return str(v)


_LEAD = ["h", "value", "predicted", "abs_error", "rel_error", "tolerance", "provenance"]


def _rows_to_csv(rows, seed: int | None = None) -> str:
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    lead = [k for k in _LEAD if k in keys]
    cols = lead + [k for k in keys if k not in lead]
    if seed is not None:
        cols.append("seed")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(seed) if c == "seed" else _fmt(r.get(c)) for c in cols])
    return buf.getvalue()


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


def _with_provenance(rows):
    out = []
    for r in rows:
        r = dict(r)
        if "value" in r and "provenance" not in r:
            r["provenance"] = "value=computed;predicted=closed_form" if "predicted" in r else "value=computed"
        r.setdefault("tolerance", None)
        out.append(r)
    return out


def _emit(out: Path, stem: str, summary: dict, tables: dict, verdicts: dict, seed: int) -> list:
    written = []
    for tname, rows in tables.items():
        if not rows:
            continue
        p = out / f"{stem}_{tname}.csv"
        _atomic_write(p, _rows_to_csv(_with_provenance(rows), seed))
        written.append(str(p))
    lines = [f"{'PASS' if ok else 'FAIL'} {name}" for name, ok in verdicts.items()]
    lines.append(f"seed {seed}")
    p = out / f"{stem}_verdicts.log"
    _atomic_write(p, "\n".join(lines) + "\n")
    written.append(str(p))
    p = out / f"{stem}_summary.json"
    _atomic_write(p, json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    written.append(str(p))
    return written


# ------------------------------------------------------------------ run


def run(cfg: RunConfig) -> tuple:
    """Execute one configured run; returns (exit status, summary)."""
    if "tensor_cap" in cfg.caps:
        os.environ["FOCKBENCH_TENSOR_CAP"] = str(cfg.caps["tensor_cap"])
    limit = cfg.caps.get("mem_mb", cap_mb())
    start = time.perf_counter()
    if cfg.scenario == "verify-core":
        checks = invariant_suite(cfg.seed)
        verdicts = {c["name"]: c["passed"] for c in checks}
        summary = {"scenario": "verify-core", "seed": cfg.seed, "checks": checks, "verdicts": verdicts}
        tables = {"checks": checks}
    else:
        from .semiclassics import SCENARIOS

        need = _estimate_mb(cfg)
        if need > limit:
            raise ResourceError(f"scenario {cfg.scenario} needs about {need:.0f} MB, cap is {limit:.0f} MB")
        kwargs = dict(cfg.parameters)
        if cfg.scenario == "bec":
            kwargs["seed"] = cfg.seed
        if cfg.scenario != "singular_trace":
            kwargs["jobs"] = cfg.jobs
        if "X0" in kwargs:
            kwargs["X0"] = tuple(kwargs["X0"])
        report = SCENARIOS[cfg.scenario](plan=cfg.plan(), **kwargs)
        report["seed"] = cfg.seed
        verdicts = report["verdicts"]
        summary = report
        tables = report["tables"]
    summary["elapsed_s"] = round(time.perf_counter() - start, 3)
    stem = cfg.scenario.replace("-", "_")
    # timings stay out of the files so identical runs give identical bytes
    _emit(cfg.out, stem, dict(summary, elapsed_s=None), tables, verdicts, cfg.seed)
    status = EXIT_OK if all(verdicts.values()) else EXIT_ASSERTION
    return status, summary


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fockbench", description="Second-quantization and semiclassical-limit checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON configuration file")
        p.add_argument("--out", type=Path, default=Path("fockbench_out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="64-bit seed for randomized checks")
        p.add_argument("--jobs", type=int, default=1, help="parallel h-points")

    common(sub.add_parser("verify-core", help="run the invariant suite"))
    sp = sub.add_parser("scenario", help="run a scenario")
    sp.add_argument("--name", required=False, help="scenario name (see 'list')")
    common(sp)
    lp = sub.add_parser("list", help="list scenarios and their parameter schemas")
    lp.add_argument("--name", default=None, help="show one scenario")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            payload = list_scenarios() if args.name is None else {args.name: scenario_schema(args.name)}
            print(json.dumps(payload, indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "verify-core":
            if args.config is not None:
                try:
                    json.loads(args.config.read_text())
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{args.config}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
            cfg = RunConfig("verify-core", out=args.out, seed=args.seed or 0, jobs=args.jobs)
        else:
            data = load_config(args.config, args.name)
            name = data.pop("scenario")
            seed = args.seed if args.seed is not None else data.pop("seed", 0)
            data.pop("seed", None)
            cfg = RunConfig(name, parameters={k: v for k, v in data.items()
                                              if k not in ("h_schedule", "eps_power", "caps")},
                            h_schedule=tuple(data["h_schedule"]) if "h_schedule" in data else None,
                            eps_power=data.get("eps_power"), caps=data.get("caps", {}),
                            out=args.out, seed=seed, jobs=args.jobs)
        status, summary = run(cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (ResourceError, MemoryError) as exc:
        log.error("resource error: %s", exc)
        return EXIT_RESOURCE
    for name, ok in summary["verdicts"].items():
        log.info("%s %s", "PASS" if ok else "FAIL", name)
    log.info("seed %d, %.1f s, exit %d", cfg.seed, summary["elapsed_s"], status)
    return status


if __name__ == "__main__":
    sys.exit(main())
