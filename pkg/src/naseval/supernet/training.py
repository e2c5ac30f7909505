"""Standalone and weight-sharing training, rankings and ground-truth sweeps.

Randomness per experiment seed (see :mod:`naseval.rng`):

* ``INIT``    initial weights (architecture independent),
* ``BATCHES`` the per-epoch shuffle of training windows,
* ``ARCH``    the weight-sharing architecture schedule.

Keeping the three streams separate makes weight-sharing training on a
one-architecture space identical to standalone training of that
architecture with the same seed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import rng as _rng
from ..oracle import LOWER, BenchmarkTable, TabularRecord
from ..space import CHAIN, ChainArch, SearchSpaceSpec, canonical_encoding, enumerate_space
from .model import (
    EvalResult,
    NonFiniteError,
    SharedParams,
    TrainConfig,
    check_arch,
    evaluate,
    init_params,
    sgd_step,
)
from .task import TaskSpec, make_splits

METRIC = "valid_ppl"


def _chain_spec_for(arch: ChainArch) -> SearchSpaceSpec:
    return SearchSpaceSpec(CHAIN, len(arch))


def _batches(n_rows: int, batch_size: int, g: np.random.Generator):
    order = g.permutation(n_rows)
    for s in range(0, n_rows, batch_size):
        yield order[s:s + batch_size]


def batches_per_epoch(task: TaskSpec, config: TrainConfig) -> int:
    return -(-task.train_size // config.batch_size)


@dataclass
class RunRecord:
    """One standalone training run."""

    key: str
    seed: int
    curve: list = field(default_factory=list)  # [(epoch, valid loss)], inf after failure
    valid: EvalResult | None = None
    test: EvalResult | None = None

    @property
    def failed(self) -> bool:
        return self.valid is None or self.valid.failed


def _train_one(arch: ChainArch, task: TaskSpec, config: TrainConfig, seed: int, spec: SearchSpaceSpec):
    splits = make_splits(task)
    key = canonical_encoding(spec, arch)
    params = init_params(spec, task.vocab_size, config, seed)
    g = _rng.stream(seed, _rng.BATCHES)
    scratch = params.zeros_like()
    rec = RunRecord(key, seed)
    try:
        for epoch in range(1, config.epochs + 1):
            for idx in _batches(task.train_size, config.batch_size, g):
                sgd_step(arch, params, splits.train[idx], config.learning_rate, config.gradient_clip, scratch)
            if epoch % config.eval_every == 0 or epoch == config.epochs:
                ev = evaluate(arch, params, splits.valid, spec, epoch)
                if ev.failed:
                    raise NonFiniteError("validation loss overflowed")
                rec.curve.append((epoch, ev.loss))
    except NonFiniteError:
        params.failed = True
        rec.valid = EvalResult.failure(key, config.epochs)
        rec.test = EvalResult.failure(key, config.epochs, "test")
        return rec, params
    rec.valid = evaluate(arch, params, splits.valid, spec, config.epochs)
    rec.test = evaluate(arch, params, splits.test, spec, config.epochs, "test")
    return rec, params


def train_standalone(arch: ChainArch, task: TaskSpec, config: TrainConfig, seed: int,
                     spec: SearchSpaceSpec | None = None) -> EvalResult:
    """Train ``arch`` from a fresh seeded init; final validation result.

    A diverging run returns a result with ``failed=True`` instead of raising.
    """
    spec = spec or _chain_spec_for(arch)
    check_arch(spec, arch)
    return _train_one(arch, task, config, seed, spec)[0].valid


def standalone_run(arch: ChainArch, task: TaskSpec, config: TrainConfig, seed: int,
                   spec: SearchSpaceSpec | None = None) -> RunRecord:
    """Like :func:`train_standalone` but keeps the checkpoint curve and test result."""
    spec = spec or _chain_spec_for(arch)
    check_arch(spec, arch)
    return _train_one(arch, task, config, seed, spec)[0]


# -- weight sharing -------------------------------------------------------


def ws_schedule(n_archs: int, n_batches: int, seed: int) -> np.ndarray:
    """Index of the architecture trained on each mini-batch (uniform, with replacement)."""
    return _rng.stream(seed, _rng.ARCH).integers(0, n_archs, size=n_batches)


def train_weight_sharing(spec: SearchSpaceSpec, task: TaskSpec, config: TrainConfig, seed: int,
                         archs: Sequence[ChainArch] | None = None, log: list | None = None,
                         epochs: int | None = None) -> SharedParams:
    """Single-path uniform-sampling supernet training.

    Each mini-batch trains one architecture drawn uniformly from ``archs``
    (default: the whole space) and only that architecture's path is updated.
    ``log``, if given, receives the key trained on each batch.  A diverging
    run stops early and returns parameters with ``failed=True``.
    """
    archs = list(archs) if archs is not None else enumerate_space(spec)
    if not archs:
        raise ValueError("no architectures to train")
    for a in archs:
        check_arch(spec, a)
    keys = [canonical_encoding(spec, a) for a in archs]
    splits = make_splits(task)
    epochs = config.ws_epochs if epochs is None else epochs
    params = init_params(spec, task.vocab_size, config, seed)
    g = _rng.stream(seed, _rng.BATCHES)
    schedule = ws_schedule(len(archs), epochs * batches_per_epoch(task, config), seed)
    scratch = params.zeros_like()
    step = 0
    try:
        for _ in range(epochs):
            for idx in _batches(task.train_size, config.batch_size, g):
                k = int(schedule[step])
                step += 1
                if log is not None:
                    log.append(keys[k])
                sgd_step(archs[k], params, splits.train[idx], config.learning_rate, config.gradient_clip, scratch)
    except NonFiniteError:
        params.failed = True
    return params


def ws_ranking(shared: SharedParams, spec: SearchSpaceSpec, task: TaskSpec,
               archs: Sequence[ChainArch] | None = None, split: str = "valid") -> list[tuple[ChainArch, EvalResult]]:
    """Every architecture scored with the shared weights, best (lowest loss) first; ties by key."""
    archs = list(archs) if archs is not None else enumerate_space(spec)
    data = make_splits(task).get(split)
    scored = [(a, evaluate(a, shared, data, spec, split=split)) for a in archs]
    scored.sort(key=lambda ae: (ae[1].loss, ae[1].key))
    return scored


# -- ground-truth sweeps --------------------------------------------------


@dataclass
class Sweep:
    """Standalone runs for every (architecture, seed) pair."""

    spec: SearchSpaceSpec
    task: TaskSpec
    config: TrainConfig
    seeds: tuple[int, ...]
    keys: tuple[str, ...]
    runs: dict  # (key, seed) -> RunRecord

    @property
    def failed_runs(self) -> int:
        return sum(r.failed for r in self.runs.values())

    def checkpoints(self) -> list[int]:
        c = self.config
        pts = list(range(c.eval_every, c.epochs + 1, c.eval_every))
        if not pts or pts[-1] != c.epochs:
            pts.append(c.epochs)
        return pts

    def mean_valid_ppl(self, seeds: Sequence[int] | None = None) -> dict[str, float]:
        """Mean validation perplexity per key over ``seeds`` (failed runs skipped; inf if all failed)."""
        seeds = self.seeds if seeds is None else seeds
        out = {}
        for k in self.keys:
            vals = [self.runs[k, s].valid.ppl for s in seeds if not self.runs[k, s].failed]
            out[k] = float(np.mean(vals)) if vals else math.inf
        return out


def _sweep_job(args):
    arch, task, config, seed, spec = args
    return standalone_run(arch, task, config, seed, spec)


def standalone_sweep(spec: SearchSpaceSpec, task: TaskSpec, config: TrainConfig, seeds: Sequence[int],
                     archs: Sequence[ChainArch] | None = None, workers: int = 1) -> Sweep:
    """Train every architecture with every seed.  ``workers > 1`` fans out over processes."""
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    archs = list(archs) if archs is not None else enumerate_space(spec)
    jobs = [(a, task, config, s, spec) for a in archs for s in seeds]
    if workers > 1 and len(jobs) > 1:
        workers = min(workers, os.cpu_count() or 1, len(jobs))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_sweep_job(j) for j in jobs]
    runs = {(r.key, r.seed): r for r in results}
    keys = tuple(sorted({r.key for r in results}))
    return Sweep(spec, task, config, seeds, keys, runs)


def _std(vals) -> float:
    return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0


def table_from_sweep(sweep: Sweep, seeds: Sequence[int] | None = None, meta: dict | None = None) -> BenchmarkTable:
    """Mean/sample-std of validation perplexity over seeds, one record per architecture.

    Test perplexity is carried as ``test_mean``/``test_std``.  Architectures
    whose every run failed become failed records; the count of failed runs
    is stored in the header metadata as ``failed_runs``.
    """
    seeds = sweep.seeds if seeds is None else tuple(seeds)
    records, failed, n_failed = [], [], 0
    for k in sweep.keys:
        ok = [sweep.runs[k, s] for s in seeds if not sweep.runs[k, s].failed]
        n_failed += len(seeds) - len(ok)
        if not ok:
            failed.append(k)
            continue
        v = [r.valid.ppl for r in ok]
        t = [r.test.ppl for r in ok]
        records.append(TabularRecord(k, float(np.mean(v)), _std(v), len(ok),
                                     {"test_mean": float(np.mean(t)), "test_std": _std(t)}))
    m = {"failed_runs": n_failed, "seeds": list(seeds), "task": sweep.task.to_dict(), "train": sweep.config.to_dict()}
    m.update(meta or {})
    return BenchmarkTable(sweep.spec, LOWER, records, metric=METRIC, metric_kind="perplexity", failed=failed, meta=m)


def ground_truth_table(spec: SearchSpaceSpec, task: TaskSpec, config: TrainConfig, seeds: Sequence[int],
                       archs: Sequence[ChainArch] | None = None, workers: int = 1,
                       sweep: Sweep | None = None) -> BenchmarkTable:
    """Train every architecture standalone per seed and tabulate validation perplexity."""
    if sweep is None:
        sweep = standalone_sweep(spec, task, config, seeds, archs, workers)
    return table_from_sweep(sweep, seeds)


def _ordinal_ranks(scores: dict[str, float]) -> dict[str, int]:
    order = sorted(scores, key=lambda k: (scores[k], k))
    return {k: i + 1 for i, k in enumerate(order)}


def rank_trajectory(spec: SearchSpaceSpec, task: TaskSpec, config: TrainConfig, seeds: Sequence[int],
                    archs: Sequence[ChainArch] | None = None, workers: int = 1,
                    sweep: Sweep | None = None) -> tuple[list[int], list[str], np.ndarray]:
    """Ranks (1 = best, ties by key) of mean validation perplexity at each checkpoint.

    Returns ``(checkpoint_epochs, keys, ranks)`` with ``ranks`` shaped
    ``(len(keys), len(checkpoints))``.  The last column uses the same numbers
    as :func:`ground_truth_table`, so it reproduces that table's ranking.
    """
    if sweep is None:
        sweep = standalone_sweep(spec, task, config, seeds, archs, workers)
    pts = sweep.checkpoints()
    keys = list(sweep.keys)
    ranks = np.zeros((len(keys), len(pts)), dtype=np.int64)
    for c, epoch in enumerate(pts):
        scores = {}
        for k in keys:
            vals = []
            for s in sweep.seeds:
                curve = dict(sweep.runs[k, s].curve)
                if epoch in curve and not sweep.runs[k, s].failed:
                    vals.append(math.exp(curve[epoch]))
            scores[k] = float(np.mean(vals)) if vals else math.inf
        r = _ordinal_ranks(scores)
        ranks[:, c] = [r[k] for k in keys]
    return pts, keys, ranks
