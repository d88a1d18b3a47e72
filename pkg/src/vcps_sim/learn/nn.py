"""Fully connected networks with hand-written backpropagation, and Adam."""

from __future__ import annotations

import numpy as np

OUTPUTS = ("linear", "sigmoid")


def _sigmoid(z):
    # split form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    _flush_subnormal(out)
    return out


def _flush_subnormal(a: np.ndarray) -> None:
    """Zero subnormal entries in place.

    Saturated sigmoid units produce them, and every product that touches a
    subnormal takes a slow path on common CPUs, several times slower per
    matmul once the policy saturates.
    """
    a[np.abs(a) < np.finfo(a.dtype).tiny] = 0


class MlpNetwork:
    """ReLU hidden layers followed by a linear or sigmoid output layer.

    Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of
    shape ``(B, fan_in)`` maps through ``x @ W + b``.
    """

    def __init__(
        self,
        sizes,
        output: str = "linear",
        rng: np.random.Generator | None = None,
        dtype=np.float64,
        final_scale: float | None = None,
    ):
        if output not in OUTPUTS:
            raise ValueError(f"output must be one of {OUTPUTS}")
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(0) if rng is None else rng
        shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        self._shapes = shapes
        self.flat = np.empty(sum(int(np.prod(s)) for s in shapes), self.dtype)
        self.grad_flat = np.zeros_like(self.flat)
        self._bind()
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            lim = 1.0 / np.sqrt(fan_in)
            if i == n_layers - 1 and final_scale is not None:
                lim = final_scale
            self.weights[i][...] = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            self.biases[i][...] = rng.uniform(-lim, lim, size=fan_out)
        self._cache = None

    def _bind(self) -> None:
        """Expose per-layer views into the flat parameter and gradient buffers."""
        self.weights, self.biases, self._grads = [], [], []
        i = 0
        for k, shape in enumerate(self._shapes):
            n = int(np.prod(shape))
            view = self.flat[i : i + n].reshape(shape)
            (self.weights if k % 2 == 0 else self.biases).append(view)
            self._grads.append(self.grad_flat[i : i + n].reshape(shape))
            i += n

    def __getstate__(self):
        return {"sizes": self.sizes, "output": self.output, "dtype": self.dtype, "_shapes": self._shapes,
                "flat": self.flat, "grad_flat": self.grad_flat}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._bind()
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.sizes[0]}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.maximum(z, 0)
            else:
                h = _sigmoid(z) if self.output == "sigmoid" else z
            acts.append(h)
        self._cache = acts
        return h[0] if squeeze else h

    def backward(self, grad_out: np.ndarray, param_grads: bool = True):
        """Backpropagate ``d(loss)/d(output)`` through the last forward pass.

        Returns ``(grads, grad_input)`` where ``grads`` is aligned with
        :attr:`params` (``None`` when ``param_grads`` is false). The gradient
        arrays are views into :attr:`grad_flat` and are overwritten by the
        next call.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        acts = self._cache
        g = np.asarray(grad_out, dtype=self.dtype)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ValueError(f"upstream gradient shape {g.shape} != output shape {acts[-1].shape}")
        if self.output == "sigmoid":
            y = acts[-1]
            g = g * y * (1 - y)
            _flush_subnormal(g)
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = acts[i]
            if param_grads:
                np.matmul(h_in.T, g, out=self._grads[2 * i])
                np.sum(g, axis=0, out=self._grads[2 * i + 1])
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (acts[i] > 0)
        return (list(self._grads) if param_grads else None), g

    # --- parameter plumbing ---------------------------------------------------

    def copy(self) -> "MlpNetwork":
        new = MlpNetwork.__new__(MlpNetwork)
        new.__setstate__({**self.__getstate__(), "flat": self.flat.copy(), "grad_flat": np.zeros_like(self.flat)})
        return new

    def soft_update_from(self, source: "MlpNetwork", rate: float) -> None:
        """In place: theta <- rate * source + (1 - rate) * theta."""
        self.flat *= 1.0 - rate
        self.flat += rate * source.flat

    def get_flat(self) -> np.ndarray:
        return self.flat.copy()

    def set_flat(self, flat: np.ndarray) -> None:
        self.flat[...] = flat


class Adam:
    """Adaptive moment estimation over a list of parameter arrays, updated in place.

    Moments of parameters whose gradient stays zero (dead ReLU units) decay
    geometrically into the subnormal range, where float arithmetic is an
    order of magnitude slower. Every ``FLUSH_EVERY`` steps entries below
    ``FLUSH_BELOW`` are zeroed; with beta1 = 0.9 nothing can cross from above
    the threshold to below the float32 normal range between flushes.
    """

    FLUSH_EVERY = 100
    FLUSH_BELOW = 1e-30

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._tmp = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step = self.lr * np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for p, g, m, v, tmp in zip(self.params, grads, self.m, self.v, self._tmp):
            m *= b1
            np.multiply(g, 1 - b1, out=tmp)
            m += tmp
            v *= b2
            np.multiply(g, g, out=tmp)
            tmp *= 1 - b2
            v += tmp
            np.sqrt(v, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= step
            p -= tmp
            if self.t % self.FLUSH_EVERY == 0:
                for buf in (m, v):
                    np.abs(buf, out=tmp)
                    buf[tmp < self.FLUSH_BELOW] = 0
