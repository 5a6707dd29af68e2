"""Command-line entry point: ``gibbsmix {bounds,sample,couple,verify}``.

Each subcommand reads one JSON config, writes its outputs plus a
``manifest.json`` into ``--out`` and exits with 0 (success or
known-discrepancy), 1 (a check failed) or 2 (configuration error).
"""

from __future__ import annotations

import argparse
import json
import math
import numbers
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as bc
from .conditional import DEFAULT_GRID_SIZE
from .exceptions import GibbsMixError, UnavailableError
from .kernels import KernelKind, estimate_meeting_probability, make_grids, run_chain
from .lab import check_close_coupling
from .persist import write_csv, write_json, write_manifest
from .suites import FAIL, KNOWN, SUITES, run_suite
from .targets import FunctionalInequality, RegularityProfile, normalize_fi_kind, target_from_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_TOP_KEYS = {"target", "kernel", "seed", "grid_size", "on_grid", "sample", "couple", "bounds", "verify", "tolerances"}


class ConfigError(GibbsMixError):
    pass


def _section(cfg, name, allowed):
    block = cfg.get(name) or {}
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' must be an object")
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return block


def load_config(path, seed_override=None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON config: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if seed_override is not None:
        cfg["seed"] = seed_override
    if "seed" in cfg:
        s = cfg["seed"]
        if isinstance(s, bool) or not isinstance(s, numbers.Integral) or not 0 <= s < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
    _check_tolerances(cfg.get("tolerances") or {})
    return cfg


def _check_tolerances(tol, prefix="tolerances"):
    if not isinstance(tol, dict):
        raise ConfigError(f"{prefix} must be an object")
    for key, value in tol.items():
        if isinstance(value, dict):
            _check_tolerances(value, f"{prefix}.{key}")
        elif isinstance(value, bool) or not isinstance(value, numbers.Real) or not value > 0:
            raise ConfigError(f"{prefix}.{key} must be a number > 0, got {value!r}")


def _require_seed(cfg, command):
    if "seed" not in cfg:
        raise ConfigError(f"'{command}' is stochastic: a seed is required (config 'seed' or --seed)")
    return int(cfg["seed"])


def _target(cfg):
    if "target" not in cfg:
        raise ConfigError("config needs a 'target'")
    return target_from_config(cfg["target"])


def _kernel(cfg):
    return KernelKind.parse(cfg.get("kernel", "systematic"))


def _grid_size(cfg):
    return int(cfg.get("grid_size", DEFAULT_GRID_SIZE))


# ------------------------------------------------------------------ bounds


def _bound_regularity(target, block):
    """Merge the ``bounds`` block's functional inequality over the target's metadata."""
    reg = target.regularity
    if not any(k in block for k in ("fi", "q", "C")):
        return reg
    kind = normalize_fi_kind(block.get("fi", "poincare"))
    name = "poincare constant" if kind == "poincare" else "log-sobolev constant"
    if block.get("C") is None:
        raise UnavailableError(name, f"unavailable: missing {name} (bounds.C)")
    fi = FunctionalInequality(kind, float(block.get("q", 2.0)), float(block["C"]))
    return reg.merged(RegularityProfile(fi=fi))


def cmd_bounds(cfg, out: Path) -> tuple[int, dict]:
    block = _section(cfg, "bounds", {"fi", "q", "C", "omega", "zeta", "eps_mode"})
    target = _target(cfg)
    reg = _bound_regularity(target, block)
    report = bc.compose_bound_report(
        reg,
        target.dim,
        _kernel(cfg),
        omega=block.get("omega", 1.0),
        zeta=block.get("zeta", 0.25),
        eps_mode=block.get("eps_mode", bc.EPS_EXACT),
    )
    data = report.to_dict()
    write_json(out / "bound_report.json", data)
    rows = [(k, "; ".join(v) if isinstance(v, list) else v) for k, v in data.items()]
    write_csv(out / "bound_report.csv", ["field", "value"], rows)
    return EXIT_OK, {"bound_report": "pass"}


# ------------------------------------------------------------------ sample


def cmd_sample(cfg, out: Path) -> tuple[int, dict]:
    block = _section(cfg, "sample", {"steps", "thin", "replicas", "x0"})
    seed = _require_seed(cfg, "sample")
    target = _target(cfg)
    kind = _kernel(cfg)
    steps = block.get("steps", 100)
    thin = block.get("thin", 1)
    replicas = block.get("replicas", 1)
    if isinstance(replicas, bool) or not isinstance(replicas, numbers.Integral) or replicas < 1:
        raise ConfigError("sample.replicas must be a positive integer")
    x0 = block.get("x0", [0.0] * target.dim)
    grids = make_grids(target, _grid_size(cfg))
    width = max(3, len(str(replicas - 1)))
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(replicas)):
        rng = np.random.Generator(np.random.Philox(child))
        rec = run_chain(target, kind, x0, steps, thin, rng, grids=grids, on_grid=bool(cfg.get("on_grid", False)))
        rec.to_csv(out / f"trajectory_{i:0{width}d}.csv")
    return EXIT_OK, {"sample": "pass"}


# ------------------------------------------------------------------ couple


def _couple_certificate(target, kind, reg):
    from .targets import derive_tv_continuity

    tv = derive_tv_continuity(reg)
    if kind.variant == "systematic":
        return bc.close_coupling_ss(tv.M, tv.beta, target.dim)
    if kind.variant in ("random_scan", "random_scan_iterated"):
        return bc.close_coupling_rs(tv.M, tv.beta, target.dim)
    raise UnavailableError("close coupling certificate", f"unavailable: no certificate for {kind.variant}")


def cmd_couple(cfg, out: Path) -> tuple[int, dict]:
    block = _section(cfg, "couple", {"pairs", "n_pairs", "n_reps", "burn_in", "thin", "x0"})
    seed = _require_seed(cfg, "couple")
    target = _target(cfg)
    kind = _kernel(cfg)
    n_reps = block.get("n_reps", 10_000)
    grids = make_grids(target, _grid_size(cfg))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    header = ["pair", "x", "y", "distance", "meeting_frequency", "stderr", "tv_upper"]
    rows = []
    if "pairs" in block:
        pairs = block["pairs"]
        if not isinstance(pairs, list) or not pairs:
            raise ConfigError("couple.pairs must be a non-empty list of [x, y]")
        children = rng.spawn(len(pairs))
        for i, (pair, child) in enumerate(zip(pairs, children)):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError("each couple.pairs entry must be [x, y]")
            x, y = (np.asarray(p, dtype=float) for p in pair)
            est = estimate_meeting_probability(target, kind, x, y, n_reps, child, grids=grids)
            tv_ub = min(1.0, 1.0 - est.estimate + 3.0 * est.stderr)
            rows.append((i, _vec(x), _vec(y), float(np.linalg.norm(x - y)), est.estimate, est.stderr, tv_ub))
        write_csv(out / "coupling.csv", header, rows)
        summary = {"mode": "explicit_pairs", "kernel": kind.to_dict(), "n_reps": n_reps, "n_pairs": len(rows)}
        write_json(out / "coupling.json", summary)
        return EXIT_OK, {"coupling": "pass"}

    reg = _bound_regularity(target, {})
    cert = _couple_certificate(target, kind, reg)
    if kind.variant == "random_scan":
        kind = KernelKind.random_scan_iterated(cert.N)
    res = check_close_coupling(
        target,
        cert,
        kind,
        block.get("n_pairs", 50),
        n_reps,
        rng,
        grids=grids,
        burn_in=block.get("burn_in", 100),
        thin=block.get("thin", 10),
        x0=block.get("x0"),
    )
    for r in res["pairs"]:
        rows.append((r["pair"], "", "", r["distance"], r["meeting"], r["stderr"], r["tv_upper"]))
    write_csv(out / "coupling.csv", header, rows)
    summary = {
        "mode": "certificate",
        "kernel": kind.to_dict(),
        "n_reps": n_reps,
        "delta": cert.delta,
        "eps_exact": cert.eps_exact,
        "N": cert.N,
        "threshold": res["threshold"],
        "max_tv_ub": res["max_tv_ub"],
        "passed": res["passed"],
    }
    write_json(out / "coupling.json", summary)
    status = "pass" if res["passed"] else FAIL
    return (EXIT_OK if res["passed"] else EXIT_FAIL), {"close_coupling": status}


def _vec(v) -> str:
    return " ".join(format(float(a), ".17g") for a in v)


# ------------------------------------------------------------------ verify


def cmd_verify(cfg, out: Path) -> tuple[int, dict]:
    block = _section(cfg, "verify", {"suites", "params"})
    seed = _require_seed(cfg, "verify")
    names = block.get("suites", "all")
    if names == "all" or names == ["all"]:
        names = list(SUITES)
    if isinstance(names, str):
        names = [names]
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suites {unknown}; choose from {sorted(SUITES)}")
    params = block.get("params") or {}
    tol = cfg.get("tolerances") or {}
    checks = {}
    code = EXIT_OK
    for name in names:
        kwargs = dict(params.get(name) or {})
        kwargs.update(tol.get(name) or {})
        try:
            res = run_suite(name, seed, **kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for suite {name!r}: {exc}") from None
        write_json(out / f"verify_{name}.json", res.to_dict())
        for table, (header, rows) in res.tables.items():
            write_csv(out / f"{table}.csv", header, rows)
        checks[name] = res.status
        if res.status == FAIL:
            code = EXIT_FAIL
        elif res.status == KNOWN:
            bad = [k for k, v in res.checks.items() if not v]
            print(f"warning: {name}: known discrepancy in {bad}", file=sys.stderr)
        print(f"{name}: {res.status} ({res.elapsed:.2f} s)")
    return code, checks


COMMANDS = {"bounds": cmd_bounds, "sample": cmd_sample, "couple": cmd_couple, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbsmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    started = time.time()
    out = Path(args.out)
    try:
        cfg = load_config(args.config, args.seed)
        out.mkdir(parents=True, exist_ok=True)
        code, checks = COMMANDS[args.command](cfg, out)
    except UnavailableError as exc:
        print(f"error: {exc} [{exc.symbol}]", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, GibbsMixError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_manifest(out, cfg, args.command, checks, started, __version__)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
