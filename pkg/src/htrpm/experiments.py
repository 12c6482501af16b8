"""Simulation study runners with an on-disk result cache.

Each (scenario, mu_eta, seed, variant) fit is scored against its truth and
the metrics are stored as JSON under a key that hashes the package source
together with the run settings, so edits to the sampler invalidate old
results automatically. The cache root is ``HTRPM_CACHE`` (default
``~/.cache/htrpm``). Run ``python -m htrpm.experiments`` to fill it ahead of
the acceptance tests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .chain import run_chain
from .model import default_hyperparameters
from .simulate import generate_scenario1, generate_scenario2
from .summary import evaluate

log = logging.getLogger(__name__)

VARIANTS = ("htrpm", "hdp", "trpm", "dp")
SEEDS = tuple(range(1, 11))
MU_GRID = (-3.0, 0.0, 3.0)
MCMC = {"n_iter": 5000, "burnin": 3000, "thin": 10}
_NOT_HASHED = {"cli.py", "experiments.py", "__init__.py"}


def source_hash() -> str:
    """Digest of the modules that determine a fit and its scores."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        if path.name in _NOT_HASHED:
            continue
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def cache_root() -> Path:
    return Path(os.environ.get("HTRPM_CACHE", Path.home() / ".cache" / "htrpm"))


def _key(job: dict) -> str:
    blob = json.dumps({"src": source_hash(), **job}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def _cache_path(job: dict) -> Path:
    return cache_root() / f"{_key(job)}.json"


def run_one(job: dict) -> dict:
    """Fit one simulated replicate and score it; cached by source and settings."""
    path = _cache_path(job)
    if path.exists():
        with open(path) as fh:
            return json.load(fh)
    if job["scenario"] == 1:
        data, truth = generate_scenario1(job["seed"])
    else:
        data, truth = generate_scenario2(job["seed"], job["mu_eta"])
    hyper = default_hyperparameters(job["variant"], seed=job["seed"], **job["mcmc"])
    t0 = time.perf_counter()
    archive = run_chain(data, hyper)
    scores = evaluate(archive, truth)
    scores = {k: v for k, v in scores.items() if not k.endswith("_by_period")}
    res = {**job, **scores, "seconds": time.perf_counter() - t0}
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        json.dump(res, fh, sort_keys=True)
    tmp.replace(path)
    log.info("%s", {k: res[k] for k in ("scenario", "mu_eta", "seed", "variant", "vi", "ari", "mse_smooth")})
    return res


def scenario1_jobs(seeds=SEEDS, mcmc=MCMC) -> list[dict]:
    return [{"scenario": 1, "mu_eta": None, "seed": s, "variant": v, "mcmc": dict(mcmc)}
            for s in seeds for v in VARIANTS]


def scenario2_jobs(mus=MU_GRID, seeds=SEEDS, mcmc=MCMC) -> list[dict]:
    return [{"scenario": 2, "mu_eta": float(mu), "seed": s, "variant": v, "mcmc": dict(mcmc)}
            for mu in mus for s in seeds for v in VARIANTS]


def run_jobs(jobs: list[dict], workers: int = 1) -> list[dict]:
    if workers <= 1:
        return [run_one(j) for j in jobs]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(run_one, jobs))


def table(results: list[dict], by=("mu_eta", "variant"), metrics=("vi", "ari", "mse_smooth", "gamma_accuracy")) -> dict:
    """Mean and SD of each metric per group; groups keyed by a tuple of ``by`` values."""
    groups: dict = {}
    for r in results:
        groups.setdefault(tuple(r[b] for b in by), []).append(r)
    out = {}
    for g, rows in groups.items():
        out[g] = {}
        for m in metrics:
            vals = np.array([r[m] for r in rows if m in r], dtype=float)
            if vals.size:
                out[g][m] = (float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0)
    return out


def calibration(mu_eta: float, replicates: int = 200) -> dict:
    """Observed fixed fraction over replicate scenario-2 panels (seeds 1..replicates)."""
    fr = np.array([generate_scenario2(s, mu_eta)[1].fixed_fraction for s in range(1, replicates + 1)])
    return {"mean": float(fr.mean()), "se": float(fr.std(ddof=1) / np.sqrt(fr.size)), "n": int(fr.size)}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m htrpm.experiments", description=__doc__.split("\n")[0])
    p.add_argument("which", nargs="*", choices=["scenario1", "scenario2"], default=["scenario1", "scenario2"])
    p.add_argument("--workers", type=int, default=int(os.environ.get("HTRPM_WORKERS", "1")))
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    jobs = []
    if "scenario1" in args.which:
        jobs += scenario1_jobs()
    if "scenario2" in args.which:
        jobs += scenario2_jobs()
    results = run_jobs(jobs, args.workers)
    for key, row in sorted(table(results, by=("scenario", "mu_eta", "variant")).items(), key=str):
        print(key, {m: round(v[0], 3) for m, v in row.items()})
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
