"""Independent reference implementations used as test oracles."""

import numpy as np

from twostage.nn import MlpParams, MlpSpec, mlp_forward


def finite_difference_grads(params, x, g, h=1e-5):
    """Central differences of sum(f(x) * g) w.r.t. every parameter entry."""
    grads = []
    for arr in params.arrays():
        d = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = float(np.sum(mlp_forward(params, x) * g))
            arr[idx] = old - h
            down = float(np.sum(mlp_forward(params, x) * g))
            arr[idx] = old
            d[idx] = (up - down) / (2 * h)
        grads.append(d)
    return grads


def random_net(rng, sizes):
    spec = MlpSpec(tuple(sizes))
    ws = [rng.normal(0, 0.7, (sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1)]
    bs = [rng.normal(0, 0.3, sizes[i + 1]) for i in range(len(sizes) - 1)]
    return MlpParams(spec, ws, bs)


def max_rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-3, np.abs(a) + np.abs(b))))


def brute_force_gae(r, v, term, trunc, boot, last, gamma, lam):
    """Each advantage summed directly from its definition, sum_k (gamma lam)^k delta_{t+k}
    up to the end of the episode, with the successor value looked up per step."""
    W, T = r.shape
    out = np.zeros((W, T))
    for w in range(W):
        def next_value(t):
            if term[w, t]:
                return 0.0
            if trunc[w, t]:
                return boot[w, t]
            return v[w, t + 1] if t + 1 < T else last[w]

        deltas = [r[w, t] + gamma * next_value(t) - v[w, t] for t in range(T)]
        for t in range(T):
            total, coef = 0.0, 1.0
            for k in range(t, T):
                total += coef * deltas[k]
                if term[w, k] or trunc[w, k]:
                    break
                coef *= gamma * lam
            out[w, t] = total
    return out


def random_gae_batch(rng, W, T):
    r, v, boot = rng.normal(size=(3, W, T))
    term = rng.random((W, T)) < 0.1
    trunc = (rng.random((W, T)) < 0.1) & ~term
    boot = np.where(trunc, boot, 0.0)
    return r, v, term, trunc, boot, rng.normal(size=W)
