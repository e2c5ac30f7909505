"""Synthetic next-token task standing in for a language-modelling corpus.

The generator is an order-``k`` pattern language.  A transition table
``table[s_{t-k}, ..., s_{t-1}]`` (one entry per context, drawn once from the
task seed) gives the next token.  With probability ``1 - noise`` the emitted
token follows the table, otherwise it is uniform over the vocabulary.

One long stream is generated from the task seed and cut into consecutive,
non-overlapping windows of ``sequence_length + 1`` tokens; the first
``train_size`` windows form the training split, the next ``valid_size`` the
validation split and the last ``test_size`` the test split.  Splits are
therefore disjoint and a pure function of the :class:`TaskSpec`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .. import rng as _rng


@dataclass(frozen=True)
class TaskSpec:
    vocab_size: int = 8
    sequence_length: int = 20
    order: int = 2
    noise: float = 0.1
    train_size: int = 512
    valid_size: int = 128
    test_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.sequence_length < 1 or self.order < 1:
            raise ValueError("sequence_length and order must be >= 1")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise must be in [0, 1], got {self.noise}")
        if min(self.train_size, self.valid_size, self.test_size) < 1:
            raise ValueError("split sizes must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(**d)


@dataclass(frozen=True)
class Splits:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def get(self, name: str) -> np.ndarray:
        if name not in ("train", "valid", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


def transition_table(task: TaskSpec) -> np.ndarray:
    """The deterministic part of the language, shape ``(vocab,) * order``."""
    g = _rng.stream(task.seed, _rng.TASK, 0)
    return g.integers(0, task.vocab_size, size=(task.vocab_size,) * task.order)


@functools.lru_cache(maxsize=16)
def _splits(task: TaskSpec) -> Splits:
    V, k, W = task.vocab_size, task.order, task.sequence_length + 1
    table = transition_table(task)
    g = _rng.stream(task.seed, _rng.TASK, 1)
    n_windows = task.train_size + task.valid_size + task.test_size
    total = n_windows * W
    seq = np.empty(total + k, dtype=np.int64)
    seq[:k] = g.integers(0, V, size=k)
    follow = g.random(total) >= task.noise
    uniform = g.integers(0, V, size=total)
    for t in range(total):
        s = k + t
        seq[s] = table[tuple(seq[s - k:s])] if follow[t] else uniform[t]
    windows = seq[k:].reshape(n_windows, W)
    windows.setflags(write=False)
    a, b = task.train_size, task.train_size + task.valid_size
    return Splits(windows[:a], windows[a:b], windows[b:])


def make_splits(task: TaskSpec) -> Splits:
    """Train/valid/test token windows, each of shape ``(size, sequence_length + 1)``."""
    return _splits(task)


def unigram_loss(task: TaskSpec, split: str = "valid") -> float:
    """Cross-entropy of the training-split unigram distribution on ``split``.

    The baseline a learned model must beat for the task to count as learnable.
    """
    s = make_splits(task)
    counts = np.bincount(s.train[:, 1:].ravel(), minlength=task.vocab_size) + 1.0
    logp = np.log(counts / counts.sum())
    return float(-logp[s.get(split)[:, 1:]].mean())


def entropy_floor(task: TaskSpec) -> float:
    """Per-token entropy of the generator given full context (the best achievable loss)."""
    V, e = task.vocab_size, task.noise
    p_hit = 1.0 - e + e / V
    p_miss = e / V
    h = -p_hit * math.log(p_hit)
    if p_miss > 0:
        h -= (V - 1) * p_miss * math.log(p_miss)
    return h
