"""Central finite-difference oracle for network gradients.

Only forward passes are used here, so the check stays independent of the
backpropagation it audits.
"""

from __future__ import annotations

import numpy as np

from .nn import MlpNetwork


def _preacts(net: MlpNetwork, x: np.ndarray) -> list[np.ndarray]:
    out = []
    h = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        out.append(z)
        h = np.maximum(z, 0)
    return out[:-1]


def numeric_param_grads(net: MlpNetwork, x: np.ndarray, upstream: np.ndarray, step: float = 1e-3):
    """Gradient of ``sum(upstream * net(x))`` w.r.t. every parameter.

    Uses the fourth-order five-point stencil, which allows a step large
    enough to keep roundoff well below the tolerance. Returns
    ``(grads, kink)`` where ``kink`` flags entries whose probe points put
    some hidden ReLU on opposite sides of zero; a difference quotient is not
    a valid derivative estimate there.
    """
    base_signs = [z > 0 for z in _preacts(net, x)]
    offsets = (-2, -1, 1, 2)
    coefs = (1.0, -8.0, 8.0, -1.0)
    grads, kinks = [], []
    for p in net.params:
        g = np.zeros_like(p)
        k = np.zeros(p.shape, dtype=bool)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            acc = 0.0
            crossed = False
            for off, c in zip(offsets, coefs):
                p[idx] = orig + off * step
                acc += c * float(np.sum(upstream * net.forward(x)))
                signs = [z > 0 for z in _preacts(net, x)]
                crossed = crossed or any((a != b).any() for a, b in zip(base_signs, signs))
            p[idx] = orig
            g[idx] = acc / (12 * step)
            k[idx] = crossed
        grads.append(g)
        kinks.append(k)
    return grads, kinks


def numeric_input_grad(net: MlpNetwork, x: np.ndarray, upstream: np.ndarray, step: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += step
        xm = x.copy()
        xm[idx] -= step
        g[idx] = (np.sum(upstream * net.forward(xp)) - np.sum(upstream * net.forward(xm))) / (2 * step)
    return g


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def max_backprop_error(net: MlpNetwork, x: np.ndarray, upstream: np.ndarray, step: float = 1e-3):
    """Largest relative error between backprop and finite differences over all parameters.

    Returns ``(max_error, n_checked, n_kink)``; kink entries are excluded.
    """
    net.forward(x)
    analytic, _ = net.backward(upstream)
    numeric, kinks = numeric_param_grads(net, x, upstream, step)
    worst = 0.0
    checked = 0
    n_kink = 0
    for a, n, k in zip(analytic, numeric, kinks):
        err = relative_error(a, n)
        n_kink += int(k.sum())
        if (~k).any():
            worst = max(worst, float(err[~k].max()))
        checked += int((~k).sum())
    return worst, checked, n_kink
