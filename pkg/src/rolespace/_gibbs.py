"""Compiled collapsed Gibbs kernels for topic fitting and fold-in inference.

All randomness enters through pre-drawn uniform arrays, so results are
bitwise-reproducible for a fixed generator seed. Kernels mutate count arrays
in place and must be called with sweeps in sequence, never concurrently.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def init_assignments(doc_ids, term_ids, n_topics, ndk, nkv, nk, uniforms):
    n_tokens = term_ids.shape[0]
    z = np.empty(n_tokens, dtype=np.int32)
    for i in range(n_tokens):
        k = int(uniforms[i] * n_topics)
        if k >= n_topics:
            k = n_topics - 1
        z[i] = k
        ndk[doc_ids[i], k] += 1
        nkv[k, term_ids[i]] += 1
        nk[k] += 1
    return z


@njit(cache=True)
def sweep(doc_ids, term_ids, z, ndk, nkv, nk, alpha, eta_kv, eta_sum, uniforms):
    n_tokens = term_ids.shape[0]
    n_topics = nk.shape[0]
    cum = np.empty(n_topics, dtype=np.float64)
    for i in range(n_tokens):
        d = doc_ids[i]
        v = term_ids[i]
        k_old = z[i]
        ndk[d, k_old] -= 1
        nkv[k_old, v] -= 1
        nk[k_old] -= 1
        total = 0.0
        for k in range(n_topics):
            total += ((ndk[d, k] + alpha[k])
                      * (nkv[k, v] + eta_kv[k, v]) / (nk[k] + eta_sum[k]))
            cum[k] = total
        u = uniforms[i] * total
        k_new = 0
        while k_new < n_topics - 1 and cum[k_new] < u:
            k_new += 1
        z[i] = k_new
        ndk[d, k_new] += 1
        nkv[k_new, v] += 1
        nk[k_new] += 1


@njit(cache=True)
def fold_in(term_ids, alpha, phi, n_iterations, burn_in, uniforms):
    """Sample topic counts for one document against frozen topic-term rows.

    ``uniforms`` holds (n_iterations + 1) * n_tokens draws: one block for the
    initial assignment, then one per sweep. Returns summed post-burn-in
    per-topic counts (divide by the sample count outside).
    """
    n_tokens = term_ids.shape[0]
    n_topics = alpha.shape[0]
    nd = np.zeros(n_topics, dtype=np.int64)
    nd_acc = np.zeros(n_topics, dtype=np.float64)
    z = np.empty(n_tokens, dtype=np.int32)
    for i in range(n_tokens):
        k = int(uniforms[i] * n_topics)
        if k >= n_topics:
            k = n_topics - 1
        z[i] = k
        nd[k] += 1
    cum = np.empty(n_topics, dtype=np.float64)
    for it in range(n_iterations):
        base = (it + 1) * n_tokens
        for i in range(n_tokens):
            v = term_ids[i]
            nd[z[i]] -= 1
            total = 0.0
            for k in range(n_topics):
                total += (nd[k] + alpha[k]) * phi[k, v]
                cum[k] = total
            u = uniforms[base + i] * total
            k_new = 0
            while k_new < n_topics - 1 and cum[k_new] < u:
                k_new += 1
            z[i] = k_new
            nd[k_new] += 1
        if it >= burn_in:
            for k in range(n_topics):
                nd_acc[k] += nd[k]
    return nd_acc
