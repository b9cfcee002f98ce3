"""Minimal fully-connected network with hand-written backpropagation.

Serves both the action classifier (softmax head, cross-entropy loss) and
the Q-network (linear head, TD regression on the taken action). No ML
framework; float64 numpy throughout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_TAG = "ltlnav-mlp-v1"


class DivergenceError(RuntimeError):
    """Loss became non-finite during training."""


def he_uniform_init(sizes, seed) -> tuple:
    """He-uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def make_optimizer(spec) -> object:
    """Accept ('sgd', lr) / ('adam', lr) tuples or a ready optimizer."""
    if isinstance(spec, (SGD, Adam)):
        return spec
    kind, lr = spec
    if kind == "sgd":
        return SGD(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


class MLP:
    """ReLU hidden layers with either a linear or a softmax output head.

    An optional affine input scaling (x - mean) / std travels with the
    model so training and inference see identical inputs.
    """

    def __init__(self, sizes, head="linear", seed=0, input_mean=None,
                 input_std=None):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if head not in ("linear", "softmax"):
            raise ValueError(f"unknown head {head!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        self.weights, self.biases = he_uniform_init(self.sizes, seed)
        self.input_mean = None if input_mean is None else np.asarray(input_mean, float)
        self.input_std = None if input_std is None else np.asarray(input_std, float)

    # -- forward -----------------------------------------------------------

    def _scale(self, x: np.ndarray) -> np.ndarray:
        if self.input_mean is not None:
            x = (x - self.input_mean) / self.input_std
        return x

    def _forward_trace(self, x: np.ndarray):
        """Pre-activations and activations per layer for a (B, d) batch."""
        acts = [self._scale(x)]
        zs = []
        h = acts[0]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            zs.append(z)
            h = np.maximum(z, 0.0) if i < len(self.weights) - 1 else z
            acts.append(h)
        return zs, acts

    def forward(self, x) -> np.ndarray:
        """Evaluate one (d,) input or a (B, d) batch."""
        x = np.asarray(x, float)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.shape[1] != self.sizes[0]:
            raise ValueError(
                f"input dimension {batch.shape[1]} != {self.sizes[0]}"
            )
        _, acts = self._forward_trace(batch)
        out = acts[-1]
        if self.head == "softmax":
            out = softmax(out)
        return out[0] if single else out

    # -- training ----------------------------------------------------------

    def train_step(self, inputs, targets, loss: str, optimizer) -> float:
        """One backprop step on a batch; returns the mean batch loss.

        loss 'cross-entropy' takes integer class labels. loss 'td-mse'
        takes (action_indices, target_values): only the output unit of the
        taken action is regressed and the target is treated as constant, so
        the loss is 0.5 * mean (y - Q[a])^2.
        """
        inputs = np.atleast_2d(np.asarray(inputs, float))
        if inputs.shape[0] == 0:
            raise ValueError("empty batch")
        n = inputs.shape[0]
        zs, acts = self._forward_trace(inputs)
        out = acts[-1]

        if loss == "cross-entropy":
            labels = np.asarray(targets, int)
            probs = softmax(out)
            eps = 1e-12
            value = float(-np.mean(np.log(probs[np.arange(n), labels] + eps)))
            delta = probs.copy()
            delta[np.arange(n), labels] -= 1.0
            delta /= n
        elif loss == "td-mse":
            actions, y = targets
            actions = np.asarray(actions, int)
            y = np.asarray(y, float)
            taken = out[np.arange(n), actions]
            value = float(0.5 * np.mean((y - taken) ** 2))
            delta = np.zeros_like(out)
            delta[np.arange(n), actions] = (taken - y) / n
        else:
            raise ValueError(f"unknown loss {loss!r}")
        if not np.isfinite(value):
            raise DivergenceError(f"{loss} loss is {value}")

        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (zs[i - 1] > 0.0)

        opt = make_optimizer(optimizer)
        opt.step(self.weights + self.biases, grads_w + grads_b)
        return value

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        data = {
            "format": FORMAT_TAG,
            "sizes": list(self.sizes),
            "head": self.head,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        if self.input_mean is not None:
            data["input_mean"] = self.input_mean.tolist()
            data["input_std"] = self.input_std.tolist()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "MLP":
        if data.get("format") != FORMAT_TAG:
            raise ValueError(f"unsupported model format {data.get('format')!r}")
        net = cls(data["sizes"], head=data["head"],
                  input_mean=data.get("input_mean"),
                  input_std=data.get("input_std"))
        net.weights = [np.array(w, float) for w in data["weights"]]
        net.biases = [np.array(b, float) for b in data["biases"]]
        for w, (fi, fo) in zip(net.weights, zip(net.sizes[:-1], net.sizes[1:])):
            if w.shape != (fi, fo):
                raise ValueError("weight shapes do not match declared sizes")
        return net

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "MLP":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_mlp(layer_sizes, head: str, seed) -> MLP:
    return MLP(layer_sizes, head=head, seed=seed)


def forward(net: MLP, x) -> np.ndarray:
    return net.forward(x)


def backward_and_step(net: MLP, batch, loss: str, optimizer) -> float:
    inputs, targets = batch
    return net.train_step(inputs, targets, loss, optimizer)
