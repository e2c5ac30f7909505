"""The toy recurrent cell and its shared parameter store.

For an architecture with decisions ``(p_i, a_i)`` the cell computes, at each
time step::

    c_0 = tanh(W_x x_t + W_h h_{t-1})
    c_i = a_i(W_{i,p_i} c_{p_i})            i = 1..n
    h_t = mean(c_1, ..., c_n)
    logits_t = W_out h_t + b_out

and the loss is the mean next-token cross-entropy over the batch and time.
Each ``(target, predecessor)`` edge owns one matrix, so the store holds
``n(n+1)/2`` edge matrices; an architecture touches only ``n`` of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from .. import rng as _rng
from ..space import (
    CHAIN,
    ChainArch,
    SearchSpaceSpec,
    canonical_encoding,
    edge_index,
    num_edges,
    validate,
)

ACTIVATION_CODES = {"identity": 0, "sigmoid": 1, "tanh": 2, "relu": 3}


class NonFiniteError(FloatingPointError):
    """Raised when a loss, activation or parameter becomes NaN or infinite."""


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 16
    embedding_size: int = 8
    learning_rate: float = 0.5
    epochs: int = 30
    ws_epochs: int = 100
    batch_size: int = 32
    gradient_clip: float = 0.25
    eval_every: int = 5

    def __post_init__(self):
        for name in ("hidden_size", "embedding_size", "epochs", "ws_epochs", "batch_size", "eval_every"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("learning_rate", "gradient_clip"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass(frozen=True)
class EvalResult:
    loss: float
    ppl: float
    key: str
    epoch: int
    split: str = "valid"
    failed: bool = False

    @classmethod
    def of(cls, loss: float, key: str, epoch: int, split: str = "valid") -> "EvalResult":
        if not math.isfinite(loss):
            return cls.failure(key, epoch, split)
        return cls(loss, math.exp(loss), key, epoch, split)

    @classmethod
    def failure(cls, key: str, epoch: int, split: str = "valid") -> "EvalResult":
        return cls(math.inf, math.inf, key, epoch, split, True)

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "epoch": self.epoch,
            "split": self.split,
            "loss": None if self.failed else self.loss,
            "ppl": None if self.failed else self.ppl,
            "failed": self.failed,
        }


class SharedParams:
    """Embedding, node-0 input maps, one matrix per edge, and the readout.

    Arrays: ``embed (V, D)``, ``w_x (H, D)``, ``w_h (H, H)``,
    ``edges (n(n+1)/2, H, H)`` indexed by :func:`~naseval.space.edge_index`,
    ``w_out (V, H)``, ``b_out (V,)``.
    """

    names = ("embed", "w_x", "w_h", "edges", "w_out", "b_out")

    def __init__(self, embed, w_x, w_h, edges, w_out, b_out, ops=("identity", "sigmoid", "tanh", "relu")):
        self.embed = embed
        self.w_x = w_x
        self.w_h = w_h
        self.edges = edges
        self.w_out = w_out
        self.b_out = b_out
        self.ops = tuple(ops)
        self.failed = False
        V, D = embed.shape
        H = w_h.shape[0]
        n_e = edges.shape[0]
        n = int(round((math.sqrt(8 * n_e + 1) - 1) / 2))
        if num_edges(n) != n_e:
            raise ValueError(f"{n_e} edge matrices is not n(n+1)/2 for any n")
        expect = {"w_x": (H, D), "w_h": (H, H), "edges": (n_e, H, H), "w_out": (V, H), "b_out": (V,)}
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        self.node_count = n
        try:
            self._codes = tuple(ACTIVATION_CODES[o] for o in self.ops)
        except KeyError as exc:
            raise ValueError(f"the supernet implements only {sorted(ACTIVATION_CODES)}; got op {exc}") from None

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, k) for k in self.names)

    def copy(self) -> "SharedParams":
        p = SharedParams(*(a.copy() for a in self.arrays()), ops=self.ops)
        p.failed = self.failed
        return p

    def zeros_like(self) -> "SharedParams":
        return SharedParams(*(np.zeros_like(a) for a in self.arrays()), ops=self.ops)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def edge(self, target: int, pred: int) -> np.ndarray:
        return self.edges[edge_index(target, pred)]

    def op_codes(self, arch: ChainArch) -> np.ndarray:
        return np.array([self._codes[o] for o in arch.ops], dtype=np.int64)

    def equal(self, other: "SharedParams") -> bool:
        """Bitwise equality of every array."""
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_params(spec: SearchSpaceSpec, vocab_size: int, config: TrainConfig, seed: int) -> SharedParams:
    """Seeded initialization from the seed's ``INIT`` stream.

    The draw does not depend on any architecture, so every architecture
    trained with the same seed starts from the same weights.  Matrices are
    uniform in ``+-1/sqrt(fan_in)``; the embedding in ``+-0.1``.
    """
    if spec.family != CHAIN:
        raise ValueError("the supernet covers chain-recurrent spaces only")
    H, D, V = config.hidden_size, config.embedding_size, vocab_size
    g = _rng.stream(seed, _rng.INIT)

    def u(bound, *shape):
        return g.uniform(-bound, bound, size=shape)

    embed = u(0.1, V, D)
    w_x = u(1 / math.sqrt(D), H, D)
    w_h = u(1 / math.sqrt(H), H, H)
    edges = u(1 / math.sqrt(H), num_edges(spec.node_count), H, H)
    w_out = u(1 / math.sqrt(H), V, H)
    b_out = np.zeros(V)
    return SharedParams(embed, w_x, w_h, edges, w_out, b_out, ops=spec.ops.names)


def _plan(arch: ChainArch, params: SharedParams):
    if not isinstance(arch, ChainArch) or len(arch) != params.node_count:
        raise ValueError(f"architecture does not match a {params.node_count}-node supernet")
    for i, (p, o) in enumerate(arch.decisions, start=1):
        if not 0 <= p < i or not 0 <= o < len(params.ops):
            raise ValueError(f"invalid decision {(p, o)} at node {i}")
    preds = np.array(arch.preds, dtype=np.int64)
    eidx = np.array([edge_index(i, p) for i, p in enumerate(arch.preds, start=1)], dtype=np.int64)
    return preds, params.op_codes(arch), eidx


def _check_batch(batch, params: SharedParams) -> np.ndarray:
    batch = np.asarray(batch)
    if batch.ndim != 2 or batch.shape[1] < 2:
        raise ValueError(f"batch must be (B, T+1) token ids with T >= 1, got shape {batch.shape}")
    if batch.min() < 0 or batch.max() >= params.vocab_size:
        raise ValueError("token id outside the vocabulary")
    return batch


def forward(arch: ChainArch, params: SharedParams, batch) -> float:
    """Mean next-token cross-entropy of ``arch`` on ``batch``."""
    preds, codes, eidx = _plan(arch, params)
    batch = _check_batch(batch, params)
    with np.errstate(over="ignore", invalid="ignore"):
        loss = kernels.cell_loss_grad(batch, preds, codes, eidx, *params.arrays())
    if not math.isfinite(loss):
        raise NonFiniteError(f"non-finite loss {loss} for architecture {arch.decisions}")
    return loss


def loss_and_grad(arch: ChainArch, params: SharedParams, batch, out: SharedParams | None = None):
    """Loss and gradient; ``out`` (if given) receives the gradient in place."""
    preds, codes, eidx = _plan(arch, params)
    batch = _check_batch(batch, params)
    grads = out if out is not None else params.zeros_like()
    with np.errstate(over="ignore", invalid="ignore"):
        loss = kernels.cell_loss_grad(batch, preds, codes, eidx, *params.arrays(), grads=grads.arrays())
    if not math.isfinite(loss):
        raise NonFiniteError(f"non-finite loss {loss} for architecture {arch.decisions}")
    return loss, grads


def backward(arch: ChainArch, params: SharedParams, batch) -> SharedParams:
    """Gradient of :func:`forward` w.r.t. every parameter (exact zeros off the active path)."""
    return loss_and_grad(arch, params, batch)[1]


def active_edge_indices(arch: ChainArch) -> list[int]:
    return [edge_index(i, p) for i, p in enumerate(arch.preds, start=1)]


def sgd_step(arch: ChainArch, params: SharedParams, batch, lr: float, clip: float, scratch=None) -> float:
    """One clipped SGD step on the active path of ``arch``; returns the pre-step loss.

    Clipping rescales the gradient to global L2 norm ``clip`` when larger.
    Parameters off the path are not touched at all.
    """
    loss, g = loss_and_grad(arch, params, batch, out=scratch)
    active = active_edge_indices(arch)
    sq = sum(float(np.vdot(a, a)) for a in (g.embed, g.w_x, g.w_h, g.w_out, g.b_out))
    sq += sum(float(np.vdot(g.edges[e], g.edges[e])) for e in active)
    norm = math.sqrt(sq)
    if not math.isfinite(norm):
        raise NonFiniteError("non-finite gradient")
    step = lr * (clip / norm if norm > clip else 1.0)
    for name in ("embed", "w_x", "w_h", "w_out", "b_out"):
        getattr(params, name)[...] -= step * getattr(g, name)
    for e in active:
        params.edges[e] -= step * g.edges[e]
    return loss


def evaluate(arch: ChainArch, params: SharedParams, data, spec: SearchSpaceSpec | None = None,
             epoch: int = 0, split: str = "valid") -> EvalResult:
    """Loss/perplexity of ``arch`` on a whole split (failed result on overflow)."""
    key = canonical_encoding(spec, arch) if spec is not None else _raw_key(arch, params)
    try:
        return EvalResult.of(forward(arch, params, data), key, epoch, split)
    except NonFiniteError:
        return EvalResult.failure(key, epoch, split)


def _raw_key(arch: ChainArch, params: SharedParams) -> str:
    return " ".join(f"{p} {params.ops[o]}" for p, o in arch.decisions)


def check_arch(spec: SearchSpaceSpec, arch: ChainArch) -> None:
    if spec.family != CHAIN:
        raise ValueError("the supernet covers chain-recurrent spaces only")
    validate(spec, arch)
