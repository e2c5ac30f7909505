"""Pure numpy kernels; reference versions of the compiled ones in ``_ckernels.pyx``.

Activation codes: 0 identity, 1 sigmoid, 2 tanh, 3 relu.
"""

import numpy as np


def count_pairs(x, y):
    """Return ``(concordant, discordant, tied_x, tied_y, tied_both)`` over all pairs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = len(x)
    iu = np.triu_indices(m, k=1)
    sx = np.sign(x[:, None] - x[None, :])[iu]
    sy = np.sign(y[:, None] - y[None, :])[iu]
    prod = sx * sy
    tx = sx == 0
    ty = sy == 0
    return (
        int(np.count_nonzero(prod > 0)),
        int(np.count_nonzero(prod < 0)),
        int(np.count_nonzero(tx)),
        int(np.count_nonzero(ty)),
        int(np.count_nonzero(tx & ty)),
    )


def _act(code, z):
    if code == 0:
        return z
    if code == 1:
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if code == 2:
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _dact(code, c):
    # derivative expressed through the activation output
    if code == 0:
        return np.ones_like(c)
    if code == 1:
        return c * (1.0 - c)
    if code == 2:
        return 1.0 - c * c
    return (c > 0.0).astype(np.float64)


def cell_loss_grad(tokens, preds, ops, eidx, embed, w_x, w_h, edges, w_out, b_out, grads=None):
    """Mean next-token cross-entropy of the discrete cell, with optional BPTT gradients.

    ``tokens`` is ``(B, T+1)``; node ``i`` reads node ``preds[i-1]`` through
    ``edges[eidx[i-1]]``.  When ``grads`` (arrays shaped like the params) is
    given it is overwritten with the gradient of the returned loss.
    """
    B, T1 = tokens.shape
    T = T1 - 1
    n = len(preds)
    H = w_h.shape[0]
    cs = np.empty((T, n + 1, B, H))
    hs = np.zeros((T + 1, B, H))
    dlog = np.empty((T, B, w_out.shape[0])) if grads is not None else None
    rows = np.arange(B)
    total = 0.0
    for t in range(T):
        x = embed[tokens[:, t]]
        cs[t, 0] = np.tanh(x @ w_x.T + hs[t] @ w_h.T)
        for i in range(1, n + 1):
            cs[t, i] = _act(ops[i - 1], cs[t, preds[i - 1]] @ edges[eidx[i - 1]].T)
        hs[t + 1] = cs[t, 1:].sum(axis=0) / n
        logits = hs[t + 1] @ w_out.T + b_out
        mx = logits.max(axis=1, keepdims=True)
        lse = mx + np.log(np.exp(logits - mx).sum(axis=1, keepdims=True))
        tgt = tokens[:, t + 1]
        total += float(np.sum(lse[:, 0] - logits[rows, tgt]))
        if grads is not None:
            p = np.exp(logits - lse)
            p[rows, tgt] -= 1.0
            dlog[t] = p
    scale = 1.0 / (B * T)
    loss = total * scale
    if grads is None:
        return loss

    g_embed, g_w_x, g_w_h, g_edges, g_w_out, g_b_out = grads
    for g in grads:
        g.fill(0.0)
    dlog *= scale
    dh_next = np.zeros((B, H))
    dc = np.empty((n + 1, B, H))
    for t in range(T - 1, -1, -1):
        d = dlog[t]
        g_w_out += d.T @ hs[t + 1]
        g_b_out += d.sum(axis=0)
        dh = dh_next + d @ w_out
        dc[0] = 0.0
        dc[1:] = dh / n
        for i in range(n, 0, -1):
            p, e = preds[i - 1], eidx[i - 1]
            dz = dc[i] * _dact(ops[i - 1], cs[t, i])
            g_edges[e] += dz.T @ cs[t, p]
            dc[p] += dz @ edges[e]
        dz0 = dc[0] * (1.0 - cs[t, 0] * cs[t, 0])
        tok = tokens[:, t]
        g_w_x += dz0.T @ embed[tok]
        g_w_h += dz0.T @ hs[t]
        np.add.at(g_embed, tok, dz0 @ w_x)
        dh_next = dz0 @ w_h
    return loss
