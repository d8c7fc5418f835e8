"""Pure numpy implementation of the embedding-model training kernel.

Used when the compiled extension is unavailable, and as the readable
reference for what ``_kernels.sgd_epoch`` computes.
"""

from __future__ import annotations

import numpy as np


def context_weights(n_ctx: int, decay: float) -> np.ndarray:
    """Normalized recency weights, most recent item first."""
    w = decay ** np.arange(n_ctx, dtype=np.float64)
    return w / w.sum()


def loss_and_grads(emb_in, emb_out, context, target, negatives, window, decay):
    """Sampled-softmax loss for one step and its dense gradients.

    ``context`` is the chronological history; only its last ``window`` items
    are used. Returns ``(loss, grad_in, grad_out)``.
    """
    recent = np.asarray(context, dtype=np.int64)[-window:][::-1]
    w = context_weights(len(recent), decay)
    ctx = w @ emb_in[recent]
    cand = np.concatenate([[target], np.asarray(negatives, dtype=np.int64)])
    z = emb_out[cand] @ ctx
    zmax = z.max()
    e = np.exp(z - zmax)
    loss = np.log(e.sum()) + zmax - z[0]
    g = e / e.sum()
    g[0] -= 1.0
    grad_out = np.zeros_like(emb_out)
    np.add.at(grad_out, cand, np.outer(g, ctx))
    grad_ctx = g @ emb_out[cand]
    grad_in = np.zeros_like(emb_in)
    np.add.at(grad_in, recent, np.outer(w, grad_ctx))
    return float(loss), grad_in, grad_out


def sgd_epoch(emb_in, emb_out, flat, offsets, targets, order, negatives, lr, window, decay):
    total = 0.0
    for i in order:
        off, t = offsets[i], targets[i]
        start = max(t - window, 0)
        recent = flat[off + start : off + t][::-1]
        w = context_weights(len(recent), decay)
        ctx = w @ emb_in[recent]
        cand = np.concatenate([flat[off + t : off + t + 1], negatives[i]])
        out = emb_out[cand]
        z = out @ ctx
        zmax = z.max()
        e = np.exp(z - zmax)
        s = e.sum()
        total += np.log(s) + zmax - z[0]
        g = e / s
        g[0] -= 1.0
        grad_ctx = g @ out
        np.add.at(emb_out, cand, -lr * np.outer(g, ctx))
        np.add.at(emb_in, recent, -lr * np.outer(w, grad_ctx))
    return float(total)
