# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SGD epoch for the embedding sequence model.

Mirrors ``_pykernels.sgd_epoch`` step for step; summation order is fixed so
repeated runs are bit-identical.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def sgd_epoch(double[:, ::1] emb_in,
              double[:, ::1] emb_out,
              const cnp.int64_t[::1] flat,
              const cnp.int64_t[::1] offsets,
              const cnp.int64_t[::1] targets,
              const cnp.int64_t[::1] order,
              const cnp.int64_t[:, ::1] negatives,
              double lr,
              Py_ssize_t window,
              double decay):
    cdef Py_ssize_t n_pos = order.shape[0]
    cdef Py_ssize_t dim = emb_in.shape[1]
    cdef Py_ssize_t n_neg = negatives.shape[1]
    cdef Py_ssize_t n_cand = n_neg + 1
    cdef double[::1] ctx = np.empty(dim)
    cdef double[::1] grad_ctx = np.empty(dim)
    cdef double[::1] weights = np.empty(max(window, 1))
    cdef double[::1] logits = np.empty(n_cand)
    cdef cnp.int64_t[::1] cand = np.empty(n_cand, dtype=np.int64)
    cdef Py_ssize_t idx, i, j, c, d, start, n_ctx
    cdef cnp.int64_t off, t, item
    cdef double wsum, w, z, z_pos, zmax, sumexp, g, total = 0.0

    for idx in range(n_pos):
        i = order[idx]
        off = offsets[i]
        t = targets[i]
        start = t - window if t > window else 0
        n_ctx = t - start

        # weights[j] belongs to the j-th most recent context item
        wsum = 0.0
        w = 1.0
        for j in range(n_ctx):
            weights[j] = w
            wsum += w
            w *= decay
        for j in range(n_ctx):
            weights[j] /= wsum

        for d in range(dim):
            ctx[d] = 0.0
        for j in range(n_ctx):
            item = flat[off + t - 1 - j]
            w = weights[j]
            for d in range(dim):
                ctx[d] += w * emb_in[item, d]

        cand[0] = flat[off + t]
        for c in range(n_neg):
            cand[c + 1] = negatives[i, c]

        zmax = -1e300
        for c in range(n_cand):
            z = 0.0
            item = cand[c]
            for d in range(dim):
                z += ctx[d] * emb_out[item, d]
            logits[c] = z
            if z > zmax:
                zmax = z
        z_pos = logits[0]
        sumexp = 0.0
        for c in range(n_cand):
            logits[c] = exp(logits[c] - zmax)
            sumexp += logits[c]
        total += log(sumexp) + zmax - z_pos

        # logits now hold softmax numerators; turn them into dL/dz
        for c in range(n_cand):
            logits[c] /= sumexp
        logits[0] -= 1.0

        for d in range(dim):
            grad_ctx[d] = 0.0
        for c in range(n_cand):
            g = logits[c]
            item = cand[c]
            for d in range(dim):
                grad_ctx[d] += g * emb_out[item, d]
        for c in range(n_cand):
            g = lr * logits[c]
            item = cand[c]
            for d in range(dim):
                emb_out[item, d] -= g * ctx[d]
        for j in range(n_ctx):
            item = flat[off + t - 1 - j]
            w = lr * weights[j]
            for d in range(dim):
                emb_in[item, d] -= w * grad_ctx[d]

    return total
