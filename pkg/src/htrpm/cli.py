"""Command-line interface: ``htrpm simulate | fit | summarize | sweep``.

Exit status is 0 on success, 2 for invalid input or settings and 1 for any
other failure. Independent jobs (replicates, data files, grid cells) run on
a process pool whose size is read from ``HTRPM_WORKERS`` (default 1).
"""
from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .chain import ChainArchive, CheckpointMismatch, run_chain
from .io import read_config, read_panel_csv, write_csv_rows, write_panel_csv
from .model import VARIANTS, Hyperparameters, ValidationError, default_hyperparameters, validate_dataset
from .simulate import ScenarioTruth, generate_scenario1, generate_scenario2
from .summary import estimate_partition, evaluate, trajectory_summary, transition_table, waic

log = logging.getLogger("htrpm")

_GRID_KEYS = {"a0": "alpha0", "alpha0": "alpha0", "a": "alpha", "alpha": "alpha"}


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _workers() -> int:
    raw = os.environ.get("HTRPM_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"HTRPM_WORKERS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError("HTRPM_WORKERS must be at least 1")
    return n


def _run_queue(fn, jobs: list) -> list:
    """Run ``fn(job)`` for every job, in parallel when more than one worker is configured."""
    n = min(_workers(), len(jobs))
    if n <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc.strerror}") from None
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path


def _write_manifest(out: Path, command: str, fingerprint: str, started: float, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "fingerprint": fingerprint,
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_seconds": round(time.time() - started, 3),
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(_dumps(_jsonable(manifest)))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _simulate_one(job):
    scenario, seed, mu_eta, out = job
    if scenario == 1:
        data, truth = generate_scenario1(seed)
    else:
        data, truth = generate_scenario2(seed, mu_eta)
    fp = hashlib.sha256(json.dumps([scenario, seed, mu_eta]).encode()).hexdigest()
    _ensure_dir(out)
    write_panel_csv(out / "data.csv", data, fingerprint=fp)
    truth.write(out / "truth.json")
    return str(out)


def cmd_simulate(args) -> int:
    if args.scenario == 1 and args.mu_eta is not None:
        raise ValidationError("--mu-eta applies to scenario 2 only")
    if args.scenario == 2 and args.mu_eta is None:
        raise ValidationError("scenario 2 needs --mu-eta")
    if args.replicates < 1:
        raise ValidationError("--replicates must be at least 1")
    started = time.time()
    out = _ensure_dir(Path(args.out))
    jobs = [(args.scenario, args.seed + r, args.mu_eta, out / f"rep{r + 1:03d}") for r in range(args.replicates)]
    paths = _run_queue(_simulate_one, jobs)
    fp = hashlib.sha256(json.dumps([args.scenario, args.seed, args.mu_eta, args.replicates]).encode()).hexdigest()
    _write_manifest(out, "simulate", fp, started, {"replicates": [Path(p).name for p in paths]})
    print(f"wrote {len(paths)} dataset(s) under {out}")
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

_HYPER_FLAGS = ("Q", "alpha", "alpha0", "sigma_theta", "mu_eta", "sigma_eta", "n_iter", "burnin", "thin", "seed",
                "waic_fraction", "n_aux")


_CONFIG_ALIASES = {"iters": "n_iter"}


def _hyperparameters(args) -> tuple[Hyperparameters, tuple | None]:
    settings: dict = {}
    if getattr(args, "config", None):
        # config keys may be spelled like the command-line flags
        for key, value in read_config(args.config).items():
            key = key.replace("-", "_")
            settings[_CONFIG_ALIASES.get(key, key)] = value
    for name in _HYPER_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            settings[name] = v
    if getattr(args, "variant", None):
        settings["variant"] = args.variant
    variant = str(settings.pop("variant", "htrpm")).lower()
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    if variant in ("dp", "trpm") and "alpha0" in settings:
        settings.pop("alpha0")
    time_range = settings.pop("time_range", None)
    try:
        hyper = default_hyperparameters(variant, **settings)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    return hyper, time_range


def _load_data(path, hyper: Hyperparameters, time_range=None):
    raw = read_panel_csv(path)
    if hyper.temporal and raw.x.shape[1] == 0:
        raise ValidationError(f"variant {hyper.display_name} needs transition covariates x1..xL in {path}")
    return validate_dataset(raw, time_range=time_range)


def _fit_one(job):
    data_path, out, hyper, time_range, checkpoint_every, resume = job
    started = time.time()
    out = _ensure_dir(Path(out))
    data = _load_data(data_path, hyper, time_range)
    archive = run_chain(
        data, hyper,
        checkpoint=out / "checkpoint.npz",
        checkpoint_every=checkpoint_every,
        resume=resume,
    )
    archive.write(out / "chain.jsonl.gz")
    _write_manifest(out, "fit", archive.fingerprint, started, {
        "data": str(data_path),
        "variant": hyper.variant,
        "retained_draws": archive.n_draws,
    })
    return str(out), archive.n_draws


def _job_dir(out: Path, data_path: Path, many: bool) -> Path:
    if not many:
        return out
    name = data_path.parent.name if data_path.stem == "data" else data_path.stem
    return out / name


def cmd_fit(args) -> int:
    hyper, time_range = _hyperparameters(args)
    if args.time_range:
        time_range = args.time_range
    if args.checkpoint_every is not None and args.checkpoint_every < 1:
        raise ValidationError("--checkpoint-every must be positive")
    paths = [Path(p) for p in args.data]
    for p in paths:
        if not p.exists():
            raise ValidationError(f"data file not found: {p}")
    out = Path(args.out)
    many = len(paths) > 1
    jobs = [(p, _job_dir(out, p, many), hyper, time_range, args.checkpoint_every, args.resume) for p in paths]
    for job_out, n in _run_queue(_fit_one, jobs):
        print(f"{job_out}: {n} retained draws")
    return 0


# ---------------------------------------------------------------------------
# summarize
# ---------------------------------------------------------------------------


def _waic_or_none(archive: ChainArchive):
    try:
        return waic(archive)
    except ValueError as exc:
        log.warning("WAIC not reported: %s", exc)
        return None


def _ordered_estimate(archive, restarts, grid):
    """SALSO estimate relabelled 1..K by descending average log-odds, with trajectories."""
    est = estimate_partition(archive.labels, archive.hyper.hierarchical, restarts)
    traj = trajectory_summary(archive, est, grid)
    relabel = {r["cluster"]: k + 1 for k, r in enumerate(traj)}
    for k, r in enumerate(traj):
        r["cluster"] = k + 1
    return np.vectorize(relabel.get)(est), traj


def summarize_archive(archive: ChainArchive, truth: ScenarioTruth | None = None, restarts: int = 16,
                      grid_points: int = 101) -> tuple[dict, dict]:
    """Report dictionary and CSV tables for one chain."""
    grid = np.linspace(0.0, 1.0, grid_points)
    est, traj = _ordered_estimate(archive, restarts, grid)
    J = est.shape[0]
    sizes = {int(c): [int(np.sum(est[j] == c)) for j in range(J)] for c in np.unique(est)}
    w = _waic_or_none(archive)
    report = {
        "fingerprint": archive.fingerprint,
        "variant": archive.hyper.variant,
        "retained_draws": archive.n_draws,
        "n_clusters": len(sizes),
        "cluster_sizes": {str(c): s for c, s in sizes.items()},
        "partition": est,
        "waic": w,
    }
    if truth is not None:
        report["metrics"] = evaluate(archive, truth, estimate=est)
    data = archive.dataset
    periods = archive.header["periods"]
    participants = archive.header["participants"]
    orig = data.original_times(grid)
    tables = {
        "partition.csv": (["participant_id", "period", "cluster"],
                          [[participants[i], periods[j], est[j, i]] for j in range(J) for i in range(est.shape[1])]),
        "clusters.csv": (["cluster", "period", "size"],
                         [[c, periods[j], s[j]] for c, s in sizes.items() for j in range(J)]),
        "trajectories.csv": (["cluster", "time", "mean", "lower", "upper"],
                             [[r["cluster"], orig[g], r["mean"][g], r["lower"][g], r["upper"][g]]
                              for r in traj for g in range(grid.size)]),
        "transitions.csv": (["from_period", "to_period", "from_cluster", "to_cluster", "count"],
                            [[periods[j], periods[j + 1], labs[a], labs[b], table[a, b]]
                             for j, (labs, table) in enumerate(transition_table(est))
                             for a in range(labs.size) for b in range(labs.size)]),
    }
    return _jsonable(report), tables


def cmd_summarize(args) -> int:
    started = time.time()
    chain_path = Path(args.chain)
    if not chain_path.exists():
        raise ValidationError(f"chain archive not found: {chain_path}")
    archive = ChainArchive.read(chain_path)
    if archive.n_draws == 0:
        raise ValidationError("chain archive has no retained draws")
    truth = None
    if args.truth:
        tp = Path(args.truth)
        if not tp.exists():
            raise ValidationError(f"truth file not found: {tp}")
        truth = ScenarioTruth.read(tp)
        if truth.labels.shape != (archive.header["J"], archive.header["N"]):
            raise ValidationError(
                f"truth has shape {truth.labels.shape}, chain has ({archive.header['J']}, {archive.header['N']})")
    out = _ensure_dir(Path(args.out))
    report, tables = summarize_archive(archive, truth, args.restarts, args.grid_points)
    (out / "report.json").write_text(_dumps(report))
    for name, (header, rows) in tables.items():
        write_csv_rows(out / name, header, rows, fingerprint=archive.fingerprint)
    _write_manifest(out, "summarize", archive.fingerprint, started, {"chain": str(chain_path)})
    w = report["waic"]
    print(f"{report['n_clusters']} clusters, WAIC " + ("n/a" if w is None else f"{w['waic']:.2f}"))
    if truth is not None:
        m = report["metrics"]
        print(f"VI {m['vi']:.4f}  ARI {m['ari']:.4f}  MSE {m['mse_smooth']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def parse_grid(text: str) -> list[dict]:
    """``"a0=1,0.1;a=0.1,0.01"`` -> the cartesian product as a list of settings."""
    axes = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        if "=" not in part:
            raise ValidationError(f"grid axis {part!r} lacks '='")
        key, values = part.split("=", 1)
        key = key.strip()
        if key not in _GRID_KEYS:
            raise ValidationError(f"unknown grid key {key!r}; use a0/alpha0 or a/alpha")
        try:
            vals = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise ValidationError(f"grid values for {key!r} must be numbers") from None
        if not vals:
            raise ValidationError(f"grid axis {key!r} has no values")
        axes.append((_GRID_KEYS[key], vals))
    if not axes:
        raise ValidationError("empty grid")
    names = [a for a, _ in axes]
    if len(set(names)) != len(names):
        raise ValidationError("grid repeats a parameter")
    return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in axes))]


def _sweep_one(job):
    data_path, out, hyper, time_range, restarts = job
    out = _ensure_dir(Path(out))
    data = _load_data(data_path, hyper, time_range)
    archive = run_chain(data, hyper)
    archive.write(out / "chain.jsonl.gz")
    est = estimate_partition(archive.labels, hyper.hierarchical, restarts)
    sizes = sorted((int(np.sum(est == c)) for c in np.unique(est)), reverse=True)
    return {
        "alpha0": hyper.alpha0,
        "alpha": hyper.alpha,
        "n_clusters": len(sizes),
        "cluster_sizes": "/".join(map(str, sizes)),
        "waic": w["waic"] if (w := _waic_or_none(archive)) else "",
        "fingerprint": archive.fingerprint,
    }


def cmd_sweep(args) -> int:
    started = time.time()
    base, time_range = _hyperparameters(args)
    cells = parse_grid(args.grid)
    if not base.hierarchical and any("alpha0" in c for c in cells):
        raise ValidationError(f"variant {base.display_name} has no alpha0")
    if not Path(args.data).exists():
        raise ValidationError(f"data file not found: {args.data}")
    out = _ensure_dir(Path(args.out))
    jobs = []
    for k, cell in enumerate(cells):
        hyper = base.replace(**cell)
        jobs.append((Path(args.data), out / f"cell{k + 1:03d}", hyper, time_range, args.restarts))
    rows = _run_queue(_sweep_one, jobs)
    header = ["alpha0", "alpha", "n_clusters", "cluster_sizes", "waic"]
    fp = hashlib.sha256("".join(r["fingerprint"] for r in rows).encode()).hexdigest()
    write_csv_rows(out / "sweep.csv", header, [[r[h] for h in header] for r in rows], fingerprint=fp)
    _write_manifest(out, "sweep", fp, started, {"cells": len(rows)})
    print(f"wrote {len(rows)} grid cells to {out / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _time_range(text: str):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    return lo, hi


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=VARIANTS, help="model variant (default htrpm)")
    p.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    p.add_argument("--iters", dest="n_iter", type=int, help="total sweeps (default 5000)")
    p.add_argument("--burnin", type=int, help="discarded sweeps (default 3000)")
    p.add_argument("--thin", type=int, help="keep every k-th sweep after burn-in (default 10)")
    p.add_argument("--seed", type=int, help="chain seed (default 0)")
    p.add_argument("--Q", type=int, help="number of cubic B-spline functions (default 10)")
    p.add_argument("--alpha", type=float, help="period-level concentration (default 0.1)")
    p.add_argument("--alpha0", type=float, help="top-level concentration, hierarchical variants (default 1)")
    p.add_argument("--sigma-eta", dest="sigma_eta", type=float, help="prior variance of eta (default 5)")
    p.add_argument("--mu-eta", dest="mu_eta", type=float, help="prior mean of eta (default 0)")
    p.add_argument("--sigma-theta", dest="sigma_theta", type=float, help="prior variance of theta (default 1)")
    p.add_argument("--time-range", type=_time_range, help="LO,HI mapped to [0, 1] (default: data range)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="htrpm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate simulation datasets")
    p.add_argument("--scenario", type=int, choices=(1, 2), required=True)
    p.add_argument("--seed", type=int, default=1, help="seed of the first replicate; later ones add 1")
    p.add_argument("--mu-eta", type=float, help="mean of the transition coefficients (scenario 2)")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    p.add_argument("--data", nargs="+", required=True, help="panel CSV file(s)")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint-every", type=int, help="snapshot the sampler every K sweeps")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="summarize a chain archive")
    p.add_argument("--chain", required=True)
    p.add_argument("--truth", help="truth.json from simulate; adds VI/ARI/MSE/flag accuracy")
    p.add_argument("--out", required=True)
    p.add_argument("--restarts", type=int, default=16, help="SALSO random restarts")
    p.add_argument("--grid-points", type=int, default=101, help="trajectory grid size")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("sweep", help="concentration-parameter sensitivity grid")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", required=True, help='e.g. "a0=1,0.1,0.01;a=0.1,0.01,0.001"')
    p.add_argument("--out", required=True)
    p.add_argument("--restarts", type=int, default=16)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, CheckpointMismatch) as exc:
        print(f"htrpm: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"htrpm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
