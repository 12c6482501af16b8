"""Running a chain, storing retained draws, and checkpoint/resume.

An archive is gzip-compressed JSON lines: a header line (format version,
hyperparameters, fingerprints and the dataset itself, so summaries need no
other input) followed by one line per retained draw. Dish labels are stored
canonically (first appearance over periods, then participants) together with
the coefficients of each stored dish in the same order.

Checkpoints are ``.npz`` snapshots of the full sampler state, the generator
state and the draws retained so far; resuming reproduces the uninterrupted
run byte for byte.
"""
from __future__ import annotations

import gzip
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gibbs import build_context, cell_loglik, initial_state, sweep
from .model import Hyperparameters, ModelState, PanelDataset
from .rng import RngStream

log = logging.getLogger(__name__)

__all__ = ["ChainArchive", "run_chain", "FORMAT", "VERSION", "CheckpointMismatch"]

FORMAT = "htrpm-chain"
VERSION = 1
CHECKPOINT_VERSION = 1


class CheckpointMismatch(ValueError):
    """Checkpoint was written for different data or settings."""


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def run_fingerprint(data: PanelDataset, hyper: Hyperparameters) -> str:
    return hashlib.sha256((data.fingerprint() + hyper.model_fingerprint()).encode()).hexdigest()


@dataclass
class ChainArchive:
    """Header plus retained draws of one chain."""

    header: dict
    draws: list = field(default_factory=list)

    @property
    def hyper(self) -> Hyperparameters:
        return Hyperparameters.from_dict(self.header["hyper"])

    @property
    def dataset(self) -> PanelDataset:
        return PanelDataset.from_dict(self.header["data"])

    @property
    def fingerprint(self) -> str:
        return self.header["fingerprint"]

    @property
    def n_draws(self) -> int:
        return len(self.draws)

    def _stack(self, key, dtype=np.float64) -> np.ndarray:
        if not self.draws:
            raise ValueError("archive has no retained draws")
        return np.asarray([d[key] for d in self.draws], dtype=dtype)

    @property
    def iterations(self) -> np.ndarray:
        return self._stack("iter", np.int64)

    @property
    def labels(self) -> np.ndarray:
        """Canonical dish labels, shape (S, J, N)."""
        return self._stack("labels", np.int64)

    @property
    def gamma(self) -> np.ndarray:
        if "gamma" not in self.draws[0]:
            raise ValueError(f"variant {self.hyper.display_name} has no fixed/flexible flags")
        return self._stack("gamma", np.int64)

    @property
    def loglik(self) -> np.ndarray:
        """Per participant-period log-likelihoods, shape (S, J, N)."""
        return self._stack("loglik")

    @property
    def theta(self) -> np.ndarray:
        return self._stack("theta")

    @property
    def eta(self) -> np.ndarray:
        return self._stack("eta")

    def beta(self, s: int) -> np.ndarray:
        """Coefficients of draw ``s``'s dishes in canonical order, shape (D_s, Q)."""
        return np.asarray(self.draws[s]["beta"], dtype=np.float64)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        # fixed mtime and empty name keep the gzip container byte-stable
        with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
            gz.write((_dumps(self.header) + "\n").encode())
            for d in self.draws:
                gz.write((_dumps(d) + "\n").encode())
        return buf.getvalue()

    def write(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(self.to_bytes())
        os.replace(tmp, path)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ChainArchive":
        lines = gzip.decompress(raw).decode().splitlines()
        if not lines:
            raise ValueError("empty chain archive")
        header = json.loads(lines[0])
        if header.get("format") != FORMAT:
            raise ValueError("not a chain archive")
        if header.get("version") != VERSION:
            raise ValueError(f"unsupported archive version {header.get('version')}")
        return cls(header, [json.loads(line) for line in lines[1:]])

    @classmethod
    def read(cls, path) -> "ChainArchive":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"chain archive not found: {path}")
        return cls.from_bytes(path.read_bytes())


def make_header(data: PanelDataset, hyper: Hyperparameters, Q: int) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "fingerprint": run_fingerprint(data, hyper),
        "hyper": hyper.to_dict(),
        "N": data.N,
        "J": data.J,
        "Q": Q,
        "participants": data.participants.tolist(),
        "periods": data.periods.tolist(),
        "data": data.to_dict(),
    }


def record_draw(state: ModelState, ctx, temporal: bool) -> dict:
    labels, slots = state.partition.canonical_labels()
    rec = {
        "iter": state.iteration,
        "labels": labels.tolist(),
        "beta": state.beta[slots].tolist(),
        "theta": state.theta.tolist(),
        "loglik": cell_loglik(state, ctx).tolist(),
    }
    if temporal:
        rec["gamma"] = state.partition.gamma.tolist()
        rec["eta"] = state.eta.tolist()
    return rec


def _save_checkpoint(path: Path, state: ModelState, rng: RngStream, draws: list, fingerprint: str) -> None:
    arrays = state.to_arrays()
    arrays["checkpoint_version"] = np.array(CHECKPOINT_VERSION)
    arrays["fingerprint"] = np.array(fingerprint)
    arrays["rng_state"] = np.array(json.dumps(rng.state))
    arrays["draws"] = np.array("\n".join(_dumps(d) for d in draws))
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def _load_checkpoint(path: Path, fingerprint: str, rng: RngStream):
    with np.load(path) as f:
        if int(f["checkpoint_version"]) != CHECKPOINT_VERSION:
            raise CheckpointMismatch(f"unsupported checkpoint version {int(f['checkpoint_version'])}")
        if str(f["fingerprint"]) != fingerprint:
            raise CheckpointMismatch("checkpoint was written for different data or settings")
        state = ModelState.from_arrays(f)
        rng.state = json.loads(str(f["rng_state"]))
        draws = [json.loads(s) for s in str(f["draws"]).splitlines()]
    return state, draws


def run_chain(
    data: PanelDataset,
    hyper: Hyperparameters,
    *,
    checkpoint=None,
    checkpoint_every: int | None = None,
    resume: bool = False,
    stop_after: int | None = None,
    progress=None,
) -> ChainArchive:
    """Run ``hyper.n_iter`` sweeps and return the retained draws.

    Parameters
    ----------
    checkpoint : path, optional
        Snapshot file written every ``checkpoint_every`` sweeps and at the end.
    resume : bool
        Continue from ``checkpoint`` if it exists. The data and every setting
        except ``n_iter`` must match the run that wrote it.
    stop_after : int, optional
        Stop once this many sweeps are done (for interrupting runs in tests);
        the returned archive then holds only the draws retained so far.
    progress : callable, optional
        Called as ``progress(iteration, state)`` after every sweep.
    """
    ctx = build_context(data, hyper)
    fingerprint = run_fingerprint(data, hyper)
    rng = RngStream(hyper.seed)
    ckpt = Path(checkpoint) if checkpoint is not None else None
    if resume and ckpt is not None and ckpt.exists():
        state, draws = _load_checkpoint(ckpt, fingerprint, rng)
        log.info("resuming from sweep %d", state.iteration)
    else:
        state, draws = initial_state(ctx), []
    end = hyper.n_iter if stop_after is None else min(hyper.n_iter, stop_after)
    while state.iteration < end:
        sweep(state, ctx, rng)
        it = state.iteration
        if it > hyper.burnin and (it - hyper.burnin) % hyper.thin == 0:
            draws.append(record_draw(state, ctx, hyper.temporal))
        if progress is not None:
            progress(it, state)
        if ckpt is not None and checkpoint_every and it % checkpoint_every == 0:
            _save_checkpoint(ckpt, state, rng, draws, fingerprint)
    if ckpt is not None:
        _save_checkpoint(ckpt, state, rng, draws, fingerprint)
    if state.counters.any():
        # likelihood clamps mostly come from prior-drawn candidate dishes that are then rejected
        log.info("clamped to +/-%g: %d Polya-Gamma tilts, %d likelihood terms",
                 hyper.clamp, int(state.counters[0]), int(state.counters[1]))
    return ChainArchive(make_header(data, hyper, ctx.Q), draws)
