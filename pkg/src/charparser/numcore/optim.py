"""Adadelta, adaptive gradient clipping and weight decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError


def epsilon_schedule(epoch, epochs, start=1e-8, end=1e-12):
    """Geometric interpolation from ``start`` (epoch 0) to ``end`` (epoch ``epochs``)."""
    if epochs <= 0:
        return start
    frac = min(max(epoch / epochs, 0.0), 1.0)
    return float(math.exp(math.log(start) + frac * (math.log(end) - math.log(start))))


@dataclass
class AdadeltaState:
    rho: float = 0.95
    epsilon: float = 1e-8
    epsilon_start: float = 1e-8
    epsilon_end: float = 1e-12
    sq_grad: dict = field(default_factory=dict)
    sq_update: dict = field(default_factory=dict)

    def anneal(self, epoch, epochs):
        self.epsilon = epsilon_schedule(epoch, epochs, self.epsilon_start, self.epsilon_end)
        return self.epsilon


def adadelta_step(params, state, grads=None):
    """Apply one Adadelta update in place.

    ``grads`` optionally maps parameter names to gradient arrays; otherwise
    each parameter's own ``.grad`` is used.  All gradients are checked before
    anything is modified, so a non-finite gradient leaves every parameter and
    accumulator untouched.
    """
    params = list(params)
    gs = []
    for p in params:
        g = p.grad if grads is None else grads[p.name]
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for parameter {p.name!r}; step aborted")
        gs.append(g)
    rho, eps = state.rho, state.epsilon
    for p, g in zip(params, gs):
        acc_g = state.sq_grad.get(p.name)
        if acc_g is None:
            acc_g = state.sq_grad[p.name] = np.zeros_like(p.value)
            state.sq_update[p.name] = np.zeros_like(p.value)
        acc_u = state.sq_update[p.name]
        acc_g *= rho
        acc_g += (1.0 - rho) * g * g
        update = -np.sqrt(acc_u + eps) / np.sqrt(acc_g + eps) * g
        acc_u *= rho
        acc_u += (1.0 - rho) * update * update
        p.value += update.astype(p.value.dtype, copy=False)
    return params


def global_norm(arrays):
    return math.sqrt(sum(float(np.vdot(a, a)) for a in arrays))


@dataclass
class ClipState:
    """Running mean of recent global gradient norms.

    Gradients whose norm exceeds ``multiplier * mean`` are rescaled down to
    that threshold.  The mean tracks the post-clip norm so one outlier cannot
    inflate the threshold.
    """

    decay: float = 0.99
    multiplier: float = 2.0
    mean: float | None = None


def clip_gradients(params, state, grads=None):
    """Clip in place; return the scale factor that was applied."""
    arrays = [p.grad for p in params] if grads is None else list(grads)
    norm = global_norm(arrays)
    if state.mean is None:
        state.mean = norm if norm > 0 else None
        return 1.0
    limit = state.multiplier * state.mean
    scale = 1.0
    if norm > limit:
        scale = limit / norm
        for a in arrays:
            a *= scale
    clipped = norm * scale
    state.mean = state.decay * state.mean + (1.0 - state.decay) * clipped
    if state.mean <= 0:
        state.mean = None
    return scale


def weight_decay(params, factor):
    """Multiply every decayable parameter by ``factor``."""
    if not 0.0 < factor <= 1.0:
        raise ValueError(f"weight decay factor must be in (0, 1], got {factor}")
    for p in params:
        if getattr(p, "decay", True) and factor != 1.0:
            p.value *= factor
    return params
