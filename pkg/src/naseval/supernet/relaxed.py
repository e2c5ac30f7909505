"""Continuous relaxation of the recurrent cell (softmax mixture over choices).

Node ``i`` computes ``c_i = sum_j q_ij sum_o p_io o(W_ij c_j)`` where
``p_i = softmax(alpha_op[i])`` and ``q_i = softmax(alpha_edge[i])``.  Every
edge matrix and every operation is active, so this path runs in numpy only.

Search alternates one SGD step on the weights (training split, ``alpha``
fixed) with one Adam step on ``alpha`` (validation split, weights fixed),
the first-order scheme.  The final architecture is the per-slot argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import rng as _rng
from .._pykernels import _act, _dact
from ..space import CHAIN, ChainArch, RelaxationParams, SearchSpaceSpec
from .model import ACTIVATION_CODES, NonFiniteError, SharedParams, TrainConfig, init_params
from .task import TaskSpec, make_splits


@dataclass(frozen=True)
class RelaxationConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    alpha_learning_rate: float = 0.01
    alpha_betas: tuple = (0.5, 0.999)

    def __post_init__(self):
        if isinstance(self.train, dict):
            object.__setattr__(self, "train", TrainConfig.from_dict(self.train))
        object.__setattr__(self, "alpha_betas", tuple(self.alpha_betas))
        if not (math.isfinite(self.alpha_learning_rate) and self.alpha_learning_rate >= 0):
            raise ValueError("alpha_learning_rate must be finite and >= 0 (0 freezes alpha)")

    def to_dict(self) -> dict:
        return {"train": self.train.to_dict(), "alpha_learning_rate": self.alpha_learning_rate,
                "alpha_betas": list(self.alpha_betas)}


def relaxed_loss_grad(params: SharedParams, relax: RelaxationParams, tokens, want_weights: bool = True,
                      want_alpha: bool = True):
    """Loss of the mixed cell plus optional weight and ``alpha`` gradients.

    Returns ``(loss, weight_grads | None, (d_alpha_op, d_alpha_edge) | None)``.
    """
    tokens = np.asarray(tokens)
    B, T1 = tokens.shape
    T, n, H = T1 - 1, params.node_count, params.hidden_size
    codes = [ACTIVATION_CODES[o] for o in params.ops]
    K = len(codes)
    P = np.array(relax.op_probs())  # (n, K)
    Q = relax.edge_probs()  # list, len i
    need_back = want_weights or want_alpha
    E, Wx, Wh, We, Wo, bo = params.arrays()
    rows = np.arange(B)

    cs = np.zeros((T, n + 1, B, H))
    outs = np.zeros((T, We.shape[0], K, B, H)) if need_back else None
    hs = np.zeros((T + 1, B, H))
    dlog = np.empty((T, B, Wo.shape[0])) if need_back else None
    total = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            cs[t, 0] = np.tanh(E[tokens[:, t]] @ Wx.T + hs[t] @ Wh.T)
            for i in range(1, n + 1):
                acc = np.zeros((B, H))
                for j in range(i):
                    e = i * (i - 1) // 2 + j
                    z = cs[t, j] @ We[e].T
                    m = np.zeros((B, H))
                    for o, code in enumerate(codes):
                        a = _act(code, z)
                        if need_back:
                            outs[t, e, o] = a
                        m += P[i - 1, o] * a
                    acc += Q[i - 1][j] * m
                cs[t, i] = acc
            hs[t + 1] = cs[t, 1:].mean(axis=0)
            logits = hs[t + 1] @ Wo.T + bo
            mx = logits.max(axis=1, keepdims=True)
            lse = mx + np.log(np.exp(logits - mx).sum(axis=1, keepdims=True))
            tgt = tokens[:, t + 1]
            total += float(np.sum(lse[:, 0] - logits[rows, tgt]))
            if need_back:
                p = np.exp(logits - lse)
                p[rows, tgt] -= 1.0
                dlog[t] = p
    loss = total / (B * T)
    if not math.isfinite(loss):
        raise NonFiniteError("non-finite loss in the relaxed supernet")
    if not need_back:
        return loss, None, None

    g = params.zeros_like()
    dP = np.zeros_like(P)
    dQ = [np.zeros(i) for i in range(1, n + 1)]
    dlog /= B * T
    dh_next = np.zeros((B, H))
    dc = np.empty((n + 1, B, H))
    for t in range(T - 1, -1, -1):
        d = dlog[t]
        g.w_out += d.T @ hs[t + 1]
        g.b_out += d.sum(axis=0)
        dh = dh_next + d @ Wo
        dc[0] = 0.0
        dc[1:] = dh / n
        for i in range(n, 0, -1):
            for j in range(i):
                e = i * (i - 1) // 2 + j
                o_out = outs[t, e]
                m = np.tensordot(P[i - 1], o_out, axes=1)
                dQ[i - 1][j] += float(np.vdot(dc[i], m))
                dm = Q[i - 1][j] * dc[i]
                dz = np.zeros((B, H))
                for o, code in enumerate(codes):
                    dP[i - 1, o] += float(np.vdot(dm, o_out[o]))
                    dz += P[i - 1, o] * (dm * _dact(code, o_out[o]))
                g.edges[e] += dz.T @ cs[t, j]
                dc[j] += dz @ We[e]
        dz0 = dc[0] * (1.0 - cs[t, 0] ** 2)
        tok = tokens[:, t]
        g.w_x += dz0.T @ E[tok]
        g.w_h += dz0.T @ hs[t]
        np.add.at(g.embed, tok, dz0 @ Wx)
        dh_next = dz0 @ Wh

    alpha = None
    if want_alpha:
        d_op = [P[i] * (dP[i] - P[i] @ dP[i]) for i in range(n)]
        d_edge = [Q[i] * (dQ[i] - Q[i] @ dQ[i]) for i in range(n)]
        alpha = (d_op, d_edge)
    return loss, (g if want_weights else None), alpha


def relaxed_loss(params: SharedParams, relax: RelaxationParams, tokens) -> float:
    return relaxed_loss_grad(params, relax, tokens, False, False)[0]


class _Adam:
    def __init__(self, shapes, lr, betas):
        self.lr, (self.b1, self.b2) = lr, betas
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1, c2 = 1 - self.b1 ** self.t, 1 - self.b2 ** self.t
        for p, gr, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * gr
            v *= self.b2
            v += (1 - self.b2) * gr * gr
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + 1e-8)


@dataclass
class RelaxedSearch:
    arch: ChainArch | None
    ties: list
    alpha: RelaxationParams
    failed: bool
    losses: list  # (epoch, train loss mean, valid loss mean)


def search_relaxed(spec: SearchSpaceSpec, task: TaskSpec, epochs: int, seed: int,
                   config: RelaxationConfig | None = None) -> RelaxedSearch:
    """Alternating weight / ``alpha`` optimization for ``epochs`` passes over the training split."""
    if spec.family != CHAIN:
        raise ValueError("relaxation search covers chain-recurrent spaces only")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    config = config or RelaxationConfig()
    tc = config.train
    splits = make_splits(task)
    params = init_params(spec, task.vocab_size, tc, seed)
    relax = RelaxationParams.uniform(spec)
    alphas = relax.alpha_op + relax.alpha_edge
    opt = _Adam([a.shape for a in alphas], config.alpha_learning_rate, config.alpha_betas)
    g_train = _rng.stream(seed, _rng.BATCHES)
    g_valid = _rng.stream(seed, _rng.BATCHES, 1)
    bs = tc.batch_size
    history = []
    try:
        for epoch in range(1, epochs + 1):
            v_order = g_valid.permutation(task.valid_size)
            v_pos = 0
            tl, vl = [], []
            for idx in (g_train.permutation(task.train_size)[s:s + bs] for s in range(0, task.train_size, bs)):
                loss, g, _ = relaxed_loss_grad(params, relax, splits.train[idx], True, False)
                tl.append(loss)
                norm = math.sqrt(sum(float(np.vdot(a, a)) for a in g.arrays()))
                step = tc.learning_rate * (tc.gradient_clip / norm if norm > tc.gradient_clip else 1.0)
                for p, gp in zip(params.arrays(), g.arrays()):
                    p -= step * gp
                if config.alpha_learning_rate > 0:
                    if v_pos + bs > task.valid_size:
                        v_order, v_pos = g_valid.permutation(task.valid_size), 0
                    vidx = v_order[v_pos:v_pos + bs]
                    v_pos += bs
                    vloss, _, (d_op, d_edge) = relaxed_loss_grad(params, relax, splits.valid[vidx], False, True)
                    vl.append(vloss)
                    opt.step(alphas, d_op + d_edge)
                if not params.all_finite():
                    raise NonFiniteError("weights became non-finite")
            history.append((epoch, float(np.mean(tl)), float(np.mean(vl)) if vl else None))
    except NonFiniteError:
        return RelaxedSearch(None, [], relax, True, history)
    arch, ties = relax.discretize()
    return RelaxedSearch(arch, ties, relax, False, history)
