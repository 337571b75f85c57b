"""Minimal feed-forward network kit used by the decoder gates.

Layers operate on float64 numpy arrays with explicit forward/backward
methods; no autograd, no external ML dependency.  Conv layers use
channels-first (batch, channels, length) layout with same zero padding
and odd kernel sizes.  Weights serialize to JSON; floats survive a
round trip exactly because json emits repr-quality decimal strings.
"""

from __future__ import annotations

import json

import numpy as np


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Conv1d:
    """Same-padded 1-D convolution, odd kernel only."""

    kind = "conv1d"

    def __init__(self, in_ch: int, out_ch: int, k: int, rng=None):
        if k % 2 != 1:
            raise ValueError("kernel size must be odd for same padding")
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, k
        if rng is None:
            self.w = np.zeros((out_ch, in_ch, k))
        else:
            scale = 1.0 / np.sqrt(in_ch * k)
            self.w = rng.normal(0.0, scale, size=(out_ch, in_ch, k))
        self.b = np.zeros(out_ch)
        self._win = None

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        pad = self.k // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        win = np.lib.stride_tricks.sliding_window_view(xp, self.k, axis=2)
        self._win = win
        self._in_len = x.shape[2]
        return np.einsum("oit,bilt->bol", self.w, win) + self.b[None, :, None]

    def backward(self, gy):
        win = self._win
        dw = np.einsum("bol,bilt->oit", gy, win)
        db = gy.sum(axis=(0, 2))
        pad = self.k // 2
        bsz, _, length = gy.shape[0], gy.shape[1], self._in_len
        dxp = np.zeros((bsz, self.in_ch, length + 2 * pad))
        for t in range(self.k):
            dxp[:, :, t:t + length] += np.einsum("bol,oi->bil", gy, self.w[:, :, t])
        return dxp[:, :, pad:pad + length], [dw, db]

    def to_dict(self):
        return {"kind": self.kind, "in_ch": self.in_ch, "out_ch": self.out_ch,
                "k": self.k, "w": self.w.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d):
        lay = cls(d["in_ch"], d["out_ch"], d["k"])
        lay.w = np.asarray(d["w"], dtype=np.float64)
        lay.b = np.asarray(d["b"], dtype=np.float64)
        return lay


class Dense:
    kind = "dense"

    def __init__(self, in_dim: int, out_dim: int, rng=None):
        self.in_dim, self.out_dim = in_dim, out_dim
        if rng is None:
            self.w = np.zeros((out_dim, in_dim))
        else:
            self.w = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim))
        self.b = np.zeros(out_dim)
        self._x = None

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, gy):
        dw = gy.T @ self._x
        db = gy.sum(axis=0)
        return gy @ self.w, [dw, db]

    def to_dict(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim,
                "w": self.w.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d):
        lay = cls(d["in_dim"], d["out_dim"])
        lay.w = np.asarray(d["w"], dtype=np.float64)
        lay.b = np.asarray(d["b"], dtype=np.float64)
        return lay


class Softplus:
    kind = "softplus"
    params = []

    def forward(self, x):
        self._x = x
        return softplus(x)

    def backward(self, gy):
        return gy * sigmoid(self._x), []

    def to_dict(self):
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d):
        return cls()


class Flatten:
    """(batch, channels, length) -> (batch, channels * length), C-order."""

    kind = "flatten"
    params = []

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(self._shape), []

    def to_dict(self):
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d):
        return cls()


_LAYER_KINDS = {c.kind: c for c in (Conv1d, Dense, Softplus, Flatten)}


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for lay in self.layers:
            x = lay.forward(x)
        return x

    __call__ = forward

    def backward(self, gy):
        """Propagate an output gradient; returns grads aligned with params."""
        grads = []
        for lay in reversed(self.layers):
            gy, g = lay.backward(gy)
            grads = g + grads
        return grads

    @property
    def params(self):
        out = []
        for lay in self.layers:
            out.extend(lay.params)
        return out

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params]) if self.params else np.array([])

    def set_flat(self, vec):
        pos = 0
        for p in self.params:
            p[...] = vec[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def to_dict(self):
        return {"layers": [lay.to_dict() for lay in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls([_LAYER_KINDS[ld["kind"]].from_dict(ld) for ld in d["layers"]])


# ---------------------------------------------------------------------
# losses (each returns loss value and gradient wrt its first argument)
# ---------------------------------------------------------------------

def cross_entropy(logits, labels, class_weight=None):
    """Mean weighted cross entropy over a batch of class logits.

    labels: (B,) int class ids.  class_weight: optional per-class weights;
    the mean is normalized by the total weight so scaling all weights
    together leaves the loss unchanged.
    """
    p = softmax(logits)
    bsz = logits.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    w = np.ones(bsz) if class_weight is None else np.asarray(class_weight, dtype=np.float64)[labels]
    py = np.clip(p[np.arange(bsz), labels], 1e-12, None)
    total = w.sum()
    loss = float((w * -np.log(py)).sum() / total)
    grad = p.copy()
    grad[np.arange(bsz), labels] -= 1.0
    grad *= (w / total)[:, None]
    return loss, grad


def bce_with_logit(logit, target, weight=None):
    """Binary cross entropy on raw logits, numerically safe."""
    logit = np.asarray(logit, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    w = np.ones_like(logit) if weight is None else np.asarray(weight, dtype=np.float64)
    total = w.sum()
    loss = float((w * (softplus(logit) - target * logit)).sum() / total)
    grad = w * (sigmoid(logit) - target) / total
    return loss, grad


# ---------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------

class TrainConfig:
    def __init__(self, steps=2000, lr0=0.01, decay=0.5, decay_every=500,
                 batch=64, seed=0):
        if steps < 1 or batch < 1 or decay_every < 1:
            raise ValueError("steps, batch and decay_every must be positive")
        if not (0.0 < decay <= 1.0):
            raise ValueError("decay must lie in (0, 1]")
        self.steps = int(steps)
        self.lr0 = float(lr0)
        self.decay = float(decay)
        self.decay_every = int(decay_every)
        self.batch = int(batch)
        self.seed = int(seed)

    def lr_at(self, step: int) -> float:
        return self.lr0 * self.decay ** (step // self.decay_every)


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


class TrainInfo:
    def __init__(self, losses, val_losses, best_step, best_val):
        self.losses = losses
        self.val_losses = val_losses
        self.best_step = best_step
        self.best_val = best_val


def train_model(model: Sequential, loss_fn, x, y, cfg: TrainConfig,
                val=None, val_every=100) -> TrainInfo:
    """Minibatch Adam loop with stepped lr decay.

    loss_fn(logits, labels) -> (loss, dlogits).  When a validation pair is
    given, the weights with the lowest validation loss are restored at the
    end, so longer runs never make the returned model worse.
    """
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    opt = Adam(model.params)
    losses, val_losses = [], []
    best_val, best_step, best_flat = np.inf, 0, None
    n = x.shape[0]
    for step in range(cfg.steps):
        idx = rng.integers(0, n, size=cfg.batch)
        logits = model.forward(x[idx])
        loss, dlogits = loss_fn(logits, y[idx])
        grads = model.backward(dlogits)
        opt.step(model.params, grads, cfg.lr_at(step))
        losses.append(loss)
        if val is not None and (step % val_every == 0 or step == cfg.steps - 1):
            vl, _ = loss_fn(model.forward(val[0]), val[1])
            val_losses.append((step, vl))
            if vl < best_val:
                best_val, best_step, best_flat = vl, step, model.get_flat()
    if best_flat is not None:
        model.set_flat(best_flat)
    return TrainInfo(losses, val_losses, best_step, best_val)


# ---------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------

def save_model(model: Sequential, path, meta=None):
    doc = model.to_dict()
    if meta:
        doc["meta"] = meta
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> Sequential:
    with open(path) as fh:
        return Sequential.from_dict(json.load(fh))
