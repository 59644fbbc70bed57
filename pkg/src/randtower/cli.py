"""Command-line entry point: ``randtower <subcommand> [options]``.

Every run writes ``<subcommand>_<table>.csv`` files and a
``<subcommand>_manifest.json`` into the output directory.  Passing a manifest
back through ``--config`` reproduces the CSVs byte for byte.

Exit status: 0 success, 1 a checked property failed, 2 invalid
configuration, 3 numerical invariant violated.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time

import numpy as np

from .errors import AxiomError, ConfigError, DomainError, NumericalInvariantError
from .experiments import RUNNERS, SUBCOMMANDS, ExperimentConfig


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if np.isfinite(f) else repr(f)
    return o


def versions() -> dict:
    import numba
    import scipy
    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "randtower": pkg}


def run(subcommand: str, cfg: ExperimentConfig) -> int:
    """Run one experiment and write its outputs; returns the exit status."""
    if subcommand not in RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    cfg.validate()
    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output_dir: {e}") from None
    if not os.access(cfg.output_dir, os.W_OK):
        raise ConfigError(f"output_dir {cfg.output_dir!r} is not writable")
    t0 = time.perf_counter()
    result = RUNNERS[subcommand](cfg)
    elapsed = time.perf_counter() - t0
    files = {}
    for name, (header, rows) in result.tables.items():
        text = format_csv(header, rows)
        fname = f"{subcommand}_{name}.csv"
        with open(os.path.join(cfg.output_dir, fname), "w", newline="") as fh:
            fh.write(text)
        files[fname] = hashlib.sha256(text.encode()).hexdigest()
    manifest = {
        "subcommand": subcommand,
        "config": cfg.to_dict(),
        "seeds": {"master": cfg.seed, "rule": "word i uses split_seed(master, i)"},
        "versions": versions(),
        "runtime_seconds": elapsed,
        "outputs": files,
        "summary": _jsonable(result.summary),
        "status": result.status,
        "warnings": result.warnings,
    }
    with open(os.path.join(cfg.output_dir, f"{subcommand}_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result.status


# config key -> (flag, argparse kwargs)
_FLAGS = {
    "family": ("--family", {}),
    "window": ("--window", {"nargs": 2, "type": float, "metavar": ("A0", "A1")}),
    "seed": ("--seed", {"type": int}),
    "n_words": ("--n-words", {"type": int}),
    "horizons": ("--horizons", {"nargs": "+", "type": int}),
    "burn_in": ("--burn-in", {"type": int}),
    "observables": ("--observables", {"nargs": 2, "metavar": ("PHI", "PSI")}),
    "output_dir": ("--output-dir", {}),
    "workers": ("--workers", {"type": int}),
    "constant_alpha": ("--constant-alpha", {"type": float}),
    "fit_range": ("--fit-range", {"nargs": 2, "type": float, "metavar": ("LO", "HI")}),
    "estimator": ("--estimator", {"choices": ["ulam", "montecarlo", "both"]}),
    "direction": ("--direction", {"choices": ["future", "past", "both"]}),
    "n_samples": ("--n-samples", {"type": int}),
    "n_pairs": ("--n-pairs", {"type": int}),
    "C2": ("--C2", {"type": float}),
    "C3": ("--C3", {"type": float}),
    "C4": ("--C4", {"type": float}),
    "n_start": ("--n-start", {"type": int}),
    "grid_size": ("--grid-size", {"type": int}),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randtower", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON config or run manifest; flags override it")
    for key, (flag, kw) in _FLAGS.items():
        p.add_argument(flag, dest=key, default=None, **kw)
    p.add_argument("--cells", type=int, default=None, help="Ulam mesh cells")
    p.add_argument("--grading", type=float, default=None, help="Ulam mesh grading exponent")
    return p


def config_from_args(ns) -> ExperimentConfig:
    base = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                base = ExperimentConfig.from_json(fh.read()).to_dict()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
    for key in _FLAGS:
        v = getattr(ns, key)
        if v is not None:
            base[key] = v
    if ns.cells is not None or ns.grading is not None:
        mesh = dict(base.get("mesh_spec", ExperimentConfig().mesh_spec))
        if ns.cells is not None:
            mesh["cells"] = ns.cells
        if ns.grading is not None:
            mesh["grading"] = ns.grading
        base["mesh_spec"] = mesh
    return ExperimentConfig.from_dict(base)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        status = run(ns.subcommand, cfg)
    except (ConfigError, DomainError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except NumericalInvariantError as e:
        print(f"numerical invariant violated: {e}", file=sys.stderr)
        return 3
    except AxiomError as e:
        print(f"axiom failure: {e}", file=sys.stderr)
        return 1
    if status:
        print(f"{ns.subcommand}: checks failed (status {status})", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
