"""Command-line front end.

    oamturb [--config FILE] superop     [options]
    oamturb [--config FILE] lindblads   [options]
    oamturb [--config FILE] evolve      [--observable trace|detect|fidelity] [--n 1,2,3,4]
    oamturb [--config FILE] codesim     [--n-oam 1] [--t 0.4] [--trials N] [--seed S]
    oamturb [--config FILE] multiphoton [--photons 3]

The config file is a flat JSON object using the same key names as the long
options (dashes replaced by underscores).  Command-line flags override it.

Artifacts
---------
CSV files are UTF-8 with LF line endings, one header row and 17 significant
digits.  The ``evolve`` CSV has the fixed columns

    t, <observable>, n, L_cut, lambda, omega0, cn2

and a ``.json`` sidecar with the remaining settings (t_ref, frame, ...).
Dense matrices go to the binary container of :mod:`oamturb.container`.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .container import ContainerError, read_container, write_container
from .modes import DomainError, PhysicalParams, Truncation

log = logging.getLogger("oamturb")

CACHE_ENV = "OAMTURB_CACHE_DIR"
CACHE_VERSION = 1
OBSERVABLES = {"trace": "trace", "detect": "p_detect", "fidelity": "f_min"}
EVOLVE_COLUMNS = ("t", "{obs}", "n", "L_cut", "lambda", "omega0", "cn2")

DEFAULTS = {
    "wavelength": 1.0e-6,
    "waist": 0.01,
    "cn2": 1.0e-14,
    "L_cut": 4,
    "t": 100.0,
    "t_ref": 0.0,
    "t_max": 100.0,
    "steps": 20,
    "observable": "trace",
    "n": "1,2,3,4",
    "frame": "free",
    "condition": "trace",
    "search_theta": 64,
    "search_phi": 64,
    "tol": 1e-10,
    "n_oam": 1,
    "trials": 100000,
    "seed": 1,
    "noise": "full",
    "photons": 3,
    "output": None,
    "cache_dir": None,
}
POSITIVE = ("wavelength", "waist", "L_cut", "t_max", "steps", "search_theta", "search_phi", "tol",
            "n_oam", "trials", "photons")
NON_NEGATIVE = ("cn2", "t", "t_ref", "seed")
INTEGER = ("L_cut", "steps", "search_theta", "search_phi", "n_oam", "trials", "seed", "photons")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in raw.items():
        if isinstance(v, (dict, list)) and k != "n":
            raise ConfigError(f"config must be flat; key {k!r} holds {type(v).__name__}")
    return raw


def validate(cfg: dict) -> dict:
    out = dict(cfg)
    for k in INTEGER:
        v = out[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise ConfigError(f"{k} must be an integer, got {v!r}")
        out[k] = int(v)
    for k in POSITIVE + NON_NEGATIVE:
        v = out[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{k} must be a finite number, got {v!r}")
        if k in POSITIVE and not v > 0:
            raise ConfigError(f"{k} must be positive, got {v}")
        if k in NON_NEGATIVE and v < 0:
            raise ConfigError(f"{k} must be non-negative, got {v}")
    if out["observable"] not in OBSERVABLES:
        raise ConfigError(f"observable must be one of {sorted(OBSERVABLES)}, got {out['observable']!r}")
    if out["steps"] < 2:
        raise ConfigError("steps must be at least 2")
    n = out["n"]
    if isinstance(n, int):
        n = [n]
    elif isinstance(n, str):
        try:
            n = [int(x) for x in n.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"n must be a comma-separated list of integers, got {out['n']!r}") from exc
    if not n or any(int(x) != x or x < 1 for x in n):
        raise ConfigError(f"n must hold positive integers, got {out['n']!r}")
    out["n"] = [int(x) for x in n]
    return out


def params_of(cfg) -> PhysicalParams:
    return PhysicalParams(cfg["wavelength"], cfg["waist"], cfg["cn2"])


def provenance(cfg, *keys) -> dict:
    base = {"wavelength": cfg["wavelength"], "waist": cfg["waist"], "cn2": cfg["cn2"], "L_cut": cfg["L_cut"],
            "version": __version__}
    base.update({k: cfg[k] for k in keys})
    return base


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def cache_dir(cfg) -> Path:
    d = os.environ.get(CACHE_ENV) or cfg.get("cache_dir") or Path.home() / ".cache" / "oamturb"
    return Path(d)


def cache_key(kind: str, params: PhysicalParams, L_cut: int, t: float) -> str:
    blob = json.dumps({"kind": kind, **params.as_dict(), "L_cut": L_cut, "t": float(t),
                       "cache_version": CACHE_VERSION, "code_version": __version__}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:32]


def cached_superop(kind: str, params: PhysicalParams, trunc: Truncation, t: float, root: Path):
    """Load C or D from the cache, assembling (and storing) it on a miss."""
    from . import ipe

    key = cache_key(kind, params, trunc.L_cut, t)
    path = root / f"{kind}-{key}.bin"
    if path.exists():
        try:
            M, head = read_container(path)
            if head.get("cache_version") == CACHE_VERSION and head.get("key") == key:
                log.info("cache hit %s", path)
                return M, path
            log.warning("stale cache entry %s; recomputing", path)
        except ContainerError as exc:
            log.warning("unreadable cache entry %s (%s); recomputing", path, exc)
    if kind == "C":
        M = ipe.assemble_coherent(trunc, params, units="t")
    else:
        M = ipe.assemble_dissipator(trunc, params, t, units="t")
    head = {**params.as_dict(), "L_cut": trunc.L_cut, "t": float(t), "kind": kind, "units": "t",
            "cache_version": CACHE_VERSION, "key": key, "version": __version__}
    write_container(path, M, head)
    return M, path


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.17g}"


def emit_csv(path, header, rows) -> Path:
    """Write ``rows`` under ``header``; floats with 17 significant digits, LF endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def trajectory_rows(traj, observable: str, n: int, cfg) -> list:
    vals = traj.observables[observable]
    return [(t, v, n, cfg["L_cut"], cfg["wavelength"], cfg["waist"], cfg["cn2"]) for t, v in zip(traj.t, vals)]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _out(cfg, default: str) -> Path:
    return Path(cfg["output"] or default)


def cmd_superop(cfg) -> int:
    params, trunc = params_of(cfg), Truncation(cfg["L_cut"])
    root = cache_dir(cfg)
    out = _out(cfg, "superop")
    prov = provenance(cfg, "t")
    for kind in ("C", "D"):
        M, src = cached_superop(kind, params, trunc, cfg["t"], root)
        dst = write_container(out.with_name(f"{out.name}_{kind}.bin"), M, {**prov, "kind": kind, "units": "t"})
        print(f"{kind}: {dst} ({M.shape[0]}x{M.shape[1]}, cache {src.name})")
    return 0


def cmd_lindblads(cfg) -> int:
    from . import channel

    params, trunc = params_of(cfg), Truncation(cfg["L_cut"])
    D, _ = cached_superop("D", params, trunc, cfg["t"], cache_dir(cfg))
    Dt = channel.project_traceless(channel.choi_reshuffle(D))
    lset = channel.extract_lindblads(Dt, tol=cfg["tol"], l_values=trunc.l_values())
    out = _out(cfg, "lindblads")
    prov = provenance(cfg, "t", "tol")
    lset.save(out, prov)
    lv = trunc.l_values()
    rows = []
    for k, (lam, op) in enumerate(zip(lset.eigenvalues, lset.operators)):
        prof = channel.shift_profile(op, lv)
        shift = max(prof, key=prof.get)
        rows.append((k + 1, lam, abs(lam), shift))
    csv = emit_csv(out.with_name(out.name + "_eigenvalues.csv"), ("index", "eigenvalue", "magnitude", "shift"), rows)
    print(f"{len(lset)} operators -> {out.with_suffix('.json')}, eigenvalues -> {csv}")
    if lset.negative_count:
        print(f"warning: {lset.negative_count} negative eigenvalues (min {lset.most_negative:.3e})", file=sys.stderr)
    return 0


def cmd_evolve(cfg) -> int:
    from . import evolve

    params, trunc = params_of(cfg), Truncation(cfg["L_cut"])
    for n in cfg["n"]:
        if n > trunc.L_cut:
            raise DomainError(f"n={n} exceeds L_cut={trunc.L_cut}")
    D, _ = cached_superop("D", params, trunc, cfg["t_ref"], cache_dir(cfg))
    gen = evolve.Generator.build(params, trunc, cfg["t_ref"], D=D)
    grid = evolve.uniform_grid(cfg["t_max"], cfg["steps"])
    obs = OBSERVABLES[cfg["observable"]]
    search = evolve.SearchSpec(cfg["search_theta"], cfg["search_phi"])
    rows = []
    for n in cfg["n"]:
        ev = evolve.evolve_code_space(n, gen, grid, cfg["frame"])
        if obs == "trace":
            vals = ev.trace_curve()
        elif obs == "p_detect":
            vals = ev.detect_curve()
        else:
            vals = np.array([evolve.minimise_fidelity(ev, k, search, cfg["condition"])[0] for k in range(len(grid))])
        traj = evolve.Trajectory(ev.t, None, {obs: vals}, ev.provenance)
        rows += trajectory_rows(traj, obs, n, cfg)
    out = _out(cfg, f"evolve_{cfg['observable']}.csv")
    header = [c.format(obs=obs) for c in EVOLVE_COLUMNS]
    emit_csv(out, header, rows)
    write_json(out.with_suffix(".json"), {
        "columns": header,
        "provenance": provenance(cfg, "t_ref", "t_max", "steps", "frame", "condition", "observable",
                                 "search_theta", "search_phi", "n"),
    })
    print(f"{len(rows)} rows -> {out}")
    return 0


def cmd_codesim(cfg) -> int:
    from . import codes

    params, trunc = params_of(cfg), Truncation(cfg["L_cut"])
    res = codes.run_scheme(params, trunc, cfg["n_oam"], cfg["t"], cfg["trials"], cfg["seed"],
                           noise=cfg["noise"], t_ref=cfg["t_ref"])
    res.provenance.update(provenance(cfg, "t", "t_ref", "n_oam", "noise"))
    out = _out(cfg, "codesim.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(res.to_json())
    print(f"logical error rate {res.logical_error_rate:.6g}, heralded {res.heralded_failure_rate:.6g} -> {out}")
    return 0


def cmd_multiphoton(cfg) -> int:
    from . import channel, ipe, multiphoton

    params, trunc = params_of(cfg), Truncation(cfg["L_cut"])
    D, _ = cached_superop("D", params, trunc, cfg["t"], cache_dir(cfg))
    Dt = channel.project_traceless(channel.choi_reshuffle(D))
    lset = channel.extract_lindblads(Dt, tol=cfg["tol"], l_values=trunc.l_values())
    out = _out(cfg, "multiphoton")
    prov = provenance(cfg, "t", "photons")
    for k in range(min(2, len(lset))):
        op = multiphoton.lift(lset.operators[k], cfg["photons"])
        dst = write_container(out.with_name(f"{out.name}_L{k + 1}.bin"), op.dense(),
                              {**prov, "n_photons": cfg["photons"], "operator": k + 1})
        print(f"L{k + 1} lifted to {op.dim} dims -> {dst}")
    return 0


COMMANDS = {
    "superop": cmd_superop,
    "lindblads": cmd_lindblads,
    "evolve": cmd_evolve,
    "codesim": cmd_codesim,
    "multiphoton": cmd_multiphoton,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oamturb", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--wavelength", type=float)
        s.add_argument("--waist", type=float)
        s.add_argument("--cn2", type=float)
        s.add_argument("--L-cut", dest="L_cut", type=int)
        s.add_argument("--t", type=float, help="propagation distance (dimensionless)")
        s.add_argument("--output", help="output path or prefix")
        s.add_argument("--cache-dir", dest="cache_dir")
        s.add_argument("--tol", type=float)
        s.add_argument("--t-ref", dest="t_ref", type=float)
        if name == "evolve":
            s.add_argument("--observable", choices=sorted(OBSERVABLES))
            s.add_argument("--n", help="comma-separated code indices")
            s.add_argument("--t-max", dest="t_max", type=float)
            s.add_argument("--steps", type=int)
            s.add_argument("--frame", choices=("free", "lab"))
            s.add_argument("--condition", choices=("trace", "code"))
            s.add_argument("--search-theta", dest="search_theta", type=int)
            s.add_argument("--search-phi", dest="search_phi", type=int)
        if name == "codesim":
            s.add_argument("--n-oam", dest="n_oam", type=int)
            s.add_argument("--trials", type=int)
            s.add_argument("--seed", type=int)
            s.add_argument("--noise", choices=("full", "dominant", "collective"))
        if name == "multiphoton":
            s.add_argument("--photons", type=int)
    return p


def resolve(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.command == "multiphoton":
        cfg["L_cut"] = 1
    if args.command == "codesim":
        cfg["t"] = 0.4
    if args.config:
        cfg.update(load_config(args.config))
    for k, v in vars(args).items():
        if k in DEFAULTS and v is not None:
            cfg[k] = v
    return validate(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ContainerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MemoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
