"""Finite-difference oracles shared by the gradient tests."""

import numpy as np

from charparser import numcore as nc

EPS = 1e-5
TOL = 1e-4


def rel_error(a, b, floor=1e-6):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def numeric_grad(f, arrays, eps=EPS):
    """Central differences of scalar ``f()`` w.r.t. every entry of every array (mutated in place)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = f()
            flat[i] = old - eps
            down = f()
            flat[i] = old
            gflat[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def check_op(build, arrays, rng):
    """Compare tape gradients of ``sum(R * build(*tensors))`` with finite differences.

    Returns the worst relative error over all inputs.
    """
    params = [nc.Parameter(a, f"in{i}") for i, a in enumerate(arrays)]
    out_shape = build(*params).shape
    proj = rng.normal(size=out_shape)

    def loss_value():
        return float((build(*params).value * proj).sum())

    with nc.Tape() as tape:
        out = build(*params)
        tape.backward(nc.total(nc.mul(out, nc.constant(proj))))
    numeric = numeric_grad(loss_value, [p.value for p in params])
    return max(rel_error(p.grad, n) for p, n in zip(params, numeric))
