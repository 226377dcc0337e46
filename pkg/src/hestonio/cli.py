"""hestonio command line: run studies from YAML configs or presets and write CSV/JSON artifacts.

Exit status: 0 on success, 2 on configuration errors, 3 on runtime or
numerical failures (including a failed analytic check).  Errors are also
reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

from . import checks
from .config import PRESETS, STUDIES, ExperimentConfig, load_config
from .errors import ConfigError
from .experiments import ErrorReport, EstimatorReport, ReplicateRow, estimator_error_study, lq_error_study, snapshot
from .io import atomic_write_text, csv_text, json_text
from .sim import BundleCache

log = logging.getLogger("hestonio")

ENV_PREFIX = "HESTONIO_"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _env(name: str) -> str | None:
    value = os.environ.get(ENV_PREFIX + name)
    return value if value not in (None, "") else None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--preset", help="named preset (see print-presets); a --config file is layered on top")
    p.add_argument("--out", help="output directory (default: config output.dir)")
    p.add_argument("--seed", type=int, help="master seed, overrides sim.seed")
    p.add_argument("--jobs", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--format", choices=("csv", "json", "both"), help="artifact formats")
    p.add_argument("--cache", help="directory for cached path bundles")
    p.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hestonio", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="run the study named in the config (or given here)")
    run.add_argument("study", nargs="?", choices=STUDIES, help="override the configured study")
    _common(run)
    _common(sub.add_parser("snapshot", help="(t, V, Y) trajectories of one path"))
    _common(sub.add_parser("analytic-check", help="closed forms against quadrature oracles"))
    pp = sub.add_parser("print-presets", help="list the bundled presets as YAML")
    pp.add_argument("name", nargs="?", help="print only this preset")
    return parser


def resolve_options(args: argparse.Namespace) -> dict[str, Any]:
    """Flags win over HESTONIO_* environment variables."""
    opts = {}
    for key, cast in (("config", str), ("preset", str), ("out", str), ("seed", int), ("jobs", int),
                      ("format", str), ("cache", str)):
        value = getattr(args, key, None)
        if value is None and (raw := _env(key.upper())) is not None:
            try:
                value = cast(raw)
            except ValueError:
                raise ConfigError(f"{ENV_PREFIX}{key.upper()}={raw!r} is not a valid {cast.__name__}") from None
        opts[key] = value
    if opts["format"] not in (None, "csv", "json", "both"):
        raise ConfigError(f"format must be csv, json or both, got {opts['format']!r}")
    if opts["jobs"] is not None and opts["jobs"] < 1:
        raise ConfigError("jobs must be >= 1")
    return opts


def make_config(verb: str, study: str | None, opts: dict[str, Any]) -> ExperimentConfig:
    overrides: dict[str, Any] = {}
    target = study or (verb if verb in ("snapshot", "analytic-check") else None)
    if target:
        overrides["study"] = target
    if opts["seed"] is not None:
        overrides["sim"] = {"seed": opts["seed"]}
    if opts["out"] is not None or opts["format"] is not None:
        out: dict[str, Any] = {}
        if opts["out"] is not None:
            out["dir"] = opts["out"]
        if opts["format"] is not None:
            out["formats"] = ["csv", "json"] if opts["format"] == "both" else [opts["format"]]
        overrides["output"] = out
    cfg = load_config(opts["config"], opts["preset"], overrides)
    cfg.validate_alignment()
    return cfg


# --- study runners: each returns {file name: text} -------------------------------------------


def _comments(cfg: ExperimentConfig) -> list[str]:
    return [f"study={cfg.study}", f"seed={cfg.sim.seed}", f"config_sha256={_config_hash(cfg)}"]


def _config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.provenance(), sort_keys=True).encode()).hexdigest()[:16]


def _progress(label: str):
    def report(done: int, total: int) -> None:
        log.info("%s: %d/%d", label, done, total)
    return report


def run_lq(cfg: ExperimentConfig, jobs: int, cache: BundleCache | None) -> dict[str, str]:
    reports: list[tuple[float, ErrorReport]] = []
    for beta in cfg.betas():
        reports.append((beta, lq_error_study(cfg.lq_config(beta), jobs=jobs, cache=cache,
                                             progress=_progress(f"beta={beta} blocks"))))
    files = {}
    if "csv" in cfg.output.formats:
        rows = [(beta,) + row for beta, rep in reports for row in rep.rows()]
        files["lq-convergence.csv"] = csv_text(("beta",) + ErrorReport.HEADER, rows, _comments(cfg))
    if "json" in cfg.output.formats:
        files["lq-convergence.json"] = json_text(
            {"study": cfg.study, "config": cfg.provenance(),
             "results": [{"beta": beta, **rep.to_dict()} for beta, rep in reports]}
        )
    return files


def run_estimator(cfg: ExperimentConfig, jobs: int, cache: BundleCache | None) -> dict[str, str]:
    est = cfg.estimator
    reports: list[tuple[float, EstimatorReport]] = []
    for beta in cfg.betas():
        rep = estimator_error_study(
            cfg.model.params(beta), cfg.grids.eps, cfg.regime(), lags=est.lags, mc=est.mc, dt=cfg.sim.dt,
            seed=cfg.sim.seed, v0=cfg.sim.v0, jobs=jobs, cache=cache, slope_cut=est.slope_cut,
            progress=_progress(f"beta={beta} replicates"),
        )
        reports.append((beta, rep))
    files = {}
    if "csv" in cfg.output.formats:
        rows = [(beta,) + row for beta, rep in reports for row in rep.rows()]
        files["estimator-convergence.csv"] = csv_text(("beta",) + EstimatorReport.HEADER, rows, _comments(cfg))
        reps = [(beta,) + r.as_tuple() for beta, rep in reports for r in rep.replicates]
        files["estimator-replicates.csv"] = csv_text(("beta",) + ReplicateRow.HEADER, reps, _comments(cfg))
    if "json" in cfg.output.formats:
        files["estimator-convergence.json"] = json_text(
            {"study": cfg.study, "config": cfg.provenance(),
             "results": [{"beta": beta, **rep.to_dict()} for beta, rep in reports]}
        )
    return files


def run_snapshot(cfg: ExperimentConfig, jobs: int, cache: BundleCache | None) -> dict[str, str]:
    s = cfg.snapshot
    snap = snapshot(cfg.model.params(), s.epsilon, cfg.j_rules(), cfg.sim.dt, seed=cfg.sim.seed, spacing=s.spacing,
                    t_end=s.t_end, path_index=s.path_index, v0=cfg.sim.v0, cache=cache)
    diag = {lbl: snap.max_abs_error(lbl) for lbl in snap.realized}
    files = {}
    if "csv" in cfg.output.formats:
        comments = _comments(cfg) + [f"epsilon={s.epsilon!r}", f"path_index={s.path_index}"]
        comments += [f"max|Y-V|[J={lbl}]={v!r}" for lbl, v in diag.items()]
        files["snapshot.csv"] = csv_text(snap.header(), snap.rows(), comments)
    if "json" in cfg.output.formats:
        files["snapshot.json"] = json_text(
            {"study": cfg.study, "config": cfg.provenance(), "J": snap.js, "max_abs_error": diag,
             "t": snap.times, "V": snap.variance, "Y": snap.realized}
        )
    return files


def run_analytic(cfg: ExperimentConfig) -> tuple[dict[str, str], list[str]]:
    params = cfg.model.params()
    results = checks.run_all(params, seed=cfg.sim.seed, expected_ratio=cfg.analytic.expected_ratio,
                             progress=lambda name: log.info("check %s done", name))
    files = {}
    if "csv" in cfg.output.formats:
        rows = [(r.name, int(r.passed), r.value, r.tolerance, r.detail) for r in results]
        files["analytic-check.csv"] = csv_text(("check", "passed", "value", "tolerance", "detail"), rows,
                                               _comments(cfg) + [f"feller_ratio={params.feller_ratio!r}"])
    if "json" in cfg.output.formats:
        files["analytic-check.json"] = json_text(
            {"study": cfg.study, "config": cfg.provenance(), "feller_ratio": params.feller_ratio,
             "all_passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]}
        )
    failed = [r.name for r in results if not r.passed]
    return files, failed


RUNNERS = {
    "lq-convergence": run_lq,
    "estimator-convergence": run_estimator,
    "snapshot": run_snapshot,
}


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba", "pydantic", "PyYAML"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def execute(verb: str, study: str | None, opts: dict[str, Any]) -> tuple[Path, list[str]]:
    cfg = make_config(verb, study, opts)
    jobs = opts["jobs"] or 1
    cache = BundleCache(opts["cache"]) if opts["cache"] else None
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    failed: list[str] = []
    if cfg.study == "analytic-check":
        files, failed = run_analytic(cfg)
    else:
        files = RUNNERS[cfg.study](cfg, jobs, cache)
    elapsed = time.perf_counter() - t0
    out_dir = Path(cfg.output.dir)
    hashes = {}
    for name, text in files.items():
        atomic_write_text(out_dir / name, text)
        hashes[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    manifest = {
        "study": cfg.study,
        "config": cfg.resolved(),
        "config_sha256": _config_hash(cfg),
        "seeds": {"master": cfg.sim.seed, "streams": "Philox key (seed, path_index)"},
        "jobs": jobs,
        "versions": _versions(),
        "started_utc": started.isoformat(),
        "wall_clock_s": elapsed,
        "files": hashes,
    }
    if cfg.study == "analytic-check":
        manifest["feller_ratio"] = cfg.model.params().feller_ratio
        manifest["all_checks_passed"] = not failed
        manifest["failed_checks"] = failed
    atomic_write_text(out_dir / "manifest.json", json_text(manifest))
    return out_dir, failed


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def print_presets(name: str | None) -> int:
    import yaml

    if name is not None and name not in PRESETS:
        return _fail("ConfigError", f"unknown preset {name!r}; available: {', '.join(PRESETS)}", EXIT_CONFIG)
    chosen = {name: PRESETS[name]} if name else PRESETS
    sys.stdout.write(yaml.safe_dump(chosen, sort_keys=False))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "print-presets":
        return print_presets(args.name)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        opts = resolve_options(args)
        out_dir, failed = execute(args.verb, getattr(args, "study", None), opts)
    except ConfigError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_CONFIG)
    except (ArithmeticError, ValueError, RuntimeError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_RUNTIME)
    if failed:
        return _fail("CheckFailed", f"analytic checks failed: {', '.join(failed)}", EXIT_RUNTIME)
    print(out_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
