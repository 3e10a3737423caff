"""Small dense and recurrent forecasters, written directly in numpy.

Every model maps one input window (tau rows of per-step features) to the next
step's target vector and exposes exact analytic gradients of the squared-error
loss  L = ||yhat - y||^2  for use by the optimizers; ``batch_gradients``
averages loss and gradients over a window batch.

Architectures
-------------
fnn   flattened window -> 10 sigmoid -> 10 sigmoid -> sigmoid outputs
rnn   h_t = tanh(U x_t + W h_{t-1} + b), then the shared readout head
lstm  gates i/f/o sigmoid, candidate g tanh, c_t = f*c + i*g, h_t = o*tanh(c_t)
gru   z/r sigmoid, g = tanh(Ug x + Wg (r*h)), h_t = (1-z)*g + z*h

The readout head on the recurrent models is two 10-node tanh layers feeding a
linear output; ``sigmoid_head=True`` switches the output to a sigmoid (useful
when targets live in [0, 1]).  Weights start uniform in +-1/sqrt(fan_in),
biases at zero; ``use_bias=False`` removes bias tensors entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, ValidationError

HIDDEN_UNITS = 10

MODEL_KINDS = ("fnn", "rnn", "lstm", "gru")


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class ModelConfig:
    """Shapes and switches shared by all network kinds.

    n_inputs is the per-step feature count; the dense network sees the
    flattened window of ``window * n_inputs`` values.
    """

    n_inputs: int
    window: int
    n_outputs: int = 1
    hidden: int = HIDDEN_UNITS
    use_bias: bool = True
    sigmoid_head: bool = False

    def __post_init__(self):
        for field in ("n_inputs", "window", "n_outputs", "hidden"):
            if getattr(self, field) < 1:
                raise ValidationError(f"{field} must be positive")


def _uniform(rng, rows, cols):
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


class _Network:
    """Common parameter plumbing: ordered init, window validation, loss."""

    kind = ""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        for name, shape in self._shapes():
            if len(shape) == 1:
                if config.use_bias:
                    self.params[name] = np.zeros(shape)
            else:
                self.params[name] = _uniform(rng, *shape)

    def _shapes(self):
        raise NotImplementedError

    def _bias(self, name):
        if self.config.use_bias:
            return self.params[name]
        return 0.0

    def _check_window(self, window):
        window = np.asarray(window, dtype=np.float64)
        expected = (self.config.window, self.config.n_inputs)
        if window.shape != expected:
            raise DimensionError(f"window shape {window.shape}, expected {expected}")
        return window

    def forward(self, window) -> np.ndarray:
        return self._forward(self._check_window(window))[0]

    def predict_batch(self, windows) -> np.ndarray:
        windows = np.asarray(windows, dtype=np.float64)
        return np.stack([self.forward(w) for w in windows])

    def loss(self, window, target) -> float:
        err = self.forward(window) - np.asarray(target, dtype=np.float64)
        return float(err @ err)

    def loss_and_grads(self, window, target):
        """Squared-error loss ||yhat - y||^2 on one window and its gradients."""
        window = self._check_window(window)
        target = np.asarray(target, dtype=np.float64)
        if target.shape != (self.config.n_outputs,):
            raise DimensionError(
                f"target shape {target.shape}, expected ({self.config.n_outputs},)"
            )
        yhat, cache = self._forward(window)
        err = yhat - target
        loss = float(err @ err)
        grads = self._backward(2.0 * err, cache)
        if not self.config.use_bias:
            grads = {k: v for k, v in grads.items() if k in self.params}
        return loss, grads

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


class FeedForwardNet(_Network):
    """Two sigmoid hidden layers over the flattened window, sigmoid outputs."""

    kind = "fnn"

    def _shapes(self):
        c = self.config
        flat = c.window * c.n_inputs
        return [
            ("W1", (c.hidden, flat)), ("b1", (c.hidden,)),
            ("W2", (c.hidden, c.hidden)), ("b2", (c.hidden,)),
            ("W3", (c.n_outputs, c.hidden)), ("b3", (c.n_outputs,)),
        ]

    def _forward(self, window):
        p = self.params
        x = window.ravel()
        a1 = sigmoid(p["W1"] @ x + self._bias("b1"))
        a2 = sigmoid(p["W2"] @ a1 + self._bias("b2"))
        yhat = sigmoid(p["W3"] @ a2 + self._bias("b3"))
        return yhat, (x, a1, a2, yhat)

    def _backward(self, dout, cache):
        p = self.params
        x, a1, a2, yhat = cache
        d3 = dout * yhat * (1.0 - yhat)
        d2 = (p["W3"].T @ d3) * a2 * (1.0 - a2)
        d1 = (p["W2"].T @ d2) * a1 * (1.0 - a1)
        return {
            "W3": np.outer(d3, a2), "b3": d3,
            "W2": np.outer(d2, a1), "b2": d2,
            "W1": np.outer(d1, x), "b1": d1,
        }


def _head_shapes(config: ModelConfig):
    h, out = config.hidden, config.n_outputs
    return [
        ("V1", (h, h)), ("c1", (h,)),
        ("V2", (h, h)), ("c2", (h,)),
        ("V3", (out, h)), ("c3", (out,)),
    ]


class _RecurrentNet(_Network):
    """Shared scan + readout; subclasses provide the single-step cell."""

    def _forward(self, window):
        p = self.config
        state = self._initial_state()
        steps = []
        for x in window:
            state, step_cache = self._step(x, state)
            steps.append(step_cache)
        h = state[0]
        z1 = np.tanh(self.params["V1"] @ h + self._bias("c1"))
        z2 = np.tanh(self.params["V2"] @ z1 + self._bias("c2"))
        pre = self.params["V3"] @ z2 + self._bias("c3")
        yhat = sigmoid(pre) if p.sigmoid_head else pre
        return yhat, (steps, h, z1, z2, yhat)

    def _backward(self, dout, cache):
        steps, h, z1, z2, yhat = cache
        p = self.params
        d3 = dout * yhat * (1.0 - yhat) if self.config.sigmoid_head else dout
        d2 = (p["V3"].T @ d3) * (1.0 - z2 * z2)
        d1 = (p["V2"].T @ d2) * (1.0 - z1 * z1)
        grads = {
            "V3": np.outer(d3, z2), "c3": d3,
            "V2": np.outer(d2, z1), "c2": d2,
            "V1": np.outer(d1, h), "c1": d1,
        }
        for name, shape in self._shapes():
            if name not in grads:
                grads[name] = np.zeros(shape)
        dstate = self._zero_state_grad()
        dstate[0][:] = p["V1"].T @ d1
        for step_cache in reversed(steps):
            dstate = self._step_back(step_cache, dstate, grads)
        return grads

    def initial_state(self):
        """State tuple used at the start of every window scan."""
        return self._initial_state()

    def step(self, x, state):
        """Advance the cell one observation; returns the new state tuple."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.config.n_inputs,):
            raise DimensionError(
                f"step input has shape {x.shape}, expected ({self.config.n_inputs},)"
            )
        new_state, _ = self._step(x, state)
        return new_state

    def _initial_state(self):
        raise NotImplementedError

    def _zero_state_grad(self):
        raise NotImplementedError

    def _step(self, x, state):
        raise NotImplementedError

    def _step_back(self, step_cache, dstate, grads):
        raise NotImplementedError


class VanillaRNN(_RecurrentNet):
    """Single tanh recurrence."""

    kind = "rnn"

    def _shapes(self):
        c = self.config
        return [
            ("U", (c.hidden, c.n_inputs)),
            ("W", (c.hidden, c.hidden)),
            ("b", (c.hidden,)),
        ] + _head_shapes(c)

    def _initial_state(self):
        return (np.zeros(self.config.hidden),)

    def _zero_state_grad(self):
        return [np.zeros(self.config.hidden)]

    def _step(self, x, state):
        (h_prev,) = state
        h = np.tanh(self.params["U"] @ x + self.params["W"] @ h_prev + self._bias("b"))
        return (h,), (x, h_prev, h)

    def _step_back(self, step_cache, dstate, grads):
        x, h_prev, h = step_cache
        da = dstate[0] * (1.0 - h * h)
        grads["U"] += np.outer(da, x)
        grads["W"] += np.outer(da, h_prev)
        grads["b"] += da
        return [self.params["W"].T @ da]


class LSTMNet(_RecurrentNet):
    """Gated memory cell: input/forget/output gates plus a tanh candidate."""

    kind = "lstm"

    GATES = ("i", "f", "o", "g")

    def _shapes(self):
        c = self.config
        shapes = []
        for gate in self.GATES:
            shapes += [
                (f"U{gate}", (c.hidden, c.n_inputs)),
                (f"W{gate}", (c.hidden, c.hidden)),
                (f"b{gate}", (c.hidden,)),
            ]
        return shapes + _head_shapes(c)

    def _initial_state(self):
        h = np.zeros(self.config.hidden)
        return (h, h.copy())

    def _zero_state_grad(self):
        return [np.zeros(self.config.hidden), np.zeros(self.config.hidden)]

    def _pre(self, gate, x, h_prev):
        p = self.params
        return p[f"U{gate}"] @ x + p[f"W{gate}"] @ h_prev + self._bias(f"b{gate}")

    def _step(self, x, state):
        h_prev, c_prev = state
        i = sigmoid(self._pre("i", x, h_prev))
        f = sigmoid(self._pre("f", x, h_prev))
        o = sigmoid(self._pre("o", x, h_prev))
        g = np.tanh(self._pre("g", x, h_prev))
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        return (h, c), (x, h_prev, c_prev, i, f, o, g, tc)

    def _step_back(self, step_cache, dstate, grads):
        x, h_prev, c_prev, i, f, o, g, tc = step_cache
        dh, dc_in = dstate
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_in
        deltas = {
            "i": dc * g * i * (1.0 - i),
            "f": dc * c_prev * f * (1.0 - f),
            "o": do * o * (1.0 - o),
            "g": dc * i * (1.0 - g * g),
        }
        dh_prev = np.zeros_like(dh)
        for gate, da in deltas.items():
            grads[f"U{gate}"] += np.outer(da, x)
            grads[f"W{gate}"] += np.outer(da, h_prev)
            grads[f"b{gate}"] += da
            dh_prev += self.params[f"W{gate}"].T @ da
        return [dh_prev, dc * f]


class GRUNet(_RecurrentNet):
    """Update/reset gating with a reset-modulated candidate state."""

    kind = "gru"

    def _shapes(self):
        c = self.config
        shapes = []
        for gate in ("z", "r", "g"):
            shapes += [
                (f"U{gate}", (c.hidden, c.n_inputs)),
                (f"W{gate}", (c.hidden, c.hidden)),
                (f"b{gate}", (c.hidden,)),
            ]
        return shapes + _head_shapes(c)

    def _initial_state(self):
        return (np.zeros(self.config.hidden),)

    def _zero_state_grad(self):
        return [np.zeros(self.config.hidden)]

    def _step(self, x, state):
        (h_prev,) = state
        p = self.params
        z = sigmoid(p["Uz"] @ x + p["Wz"] @ h_prev + self._bias("bz"))
        r = sigmoid(p["Ur"] @ x + p["Wr"] @ h_prev + self._bias("br"))
        g = np.tanh(p["Ug"] @ x + p["Wg"] @ (r * h_prev) + self._bias("bg"))
        h = (1.0 - z) * g + z * h_prev
        return (h,), (x, h_prev, z, r, g)

    def _step_back(self, step_cache, dstate, grads):
        x, h_prev, z, r, g = step_cache
        dh = dstate[0]
        dz = dh * (h_prev - g)
        dg = dh * (1.0 - z)
        dh_prev = dh * z

        dag = dg * (1.0 - g * g)
        grads["Ug"] += np.outer(dag, x)
        grads["Wg"] += np.outer(dag, r * h_prev)
        grads["bg"] += dag
        drh = self.params["Wg"].T @ dag
        dh_prev += drh * r
        dr = drh * h_prev

        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        grads["Uz"] += np.outer(daz, x)
        grads["Wz"] += np.outer(daz, h_prev)
        grads["bz"] += daz
        grads["Ur"] += np.outer(dar, x)
        grads["Wr"] += np.outer(dar, h_prev)
        grads["br"] += dar
        dh_prev += self.params["Wz"].T @ daz + self.params["Wr"].T @ dar
        return [dh_prev]


def batch_gradients(model, windows, targets):
    """Batch-mean squared-error loss and its exact parameter gradients.

    Returns (mse, grads) where mse averages ||yhat - y||^2 over the windows
    and each gradient tensor is the matching average.  Non-finite gradients
    raise a numeric error naming the offending tensors.
    """
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(windows) == 0:
        raise ValidationError("empty batch")
    if targets.ndim == 1:
        targets = targets[:, None]
    total = 0.0
    sums: dict[str, np.ndarray] = {}
    for window, target in zip(windows, targets):
        loss, grads = model.loss_and_grads(window, target)
        total += loss
        for name, g in grads.items():
            if name in sums:
                sums[name] += g
            else:
                sums[name] = g.copy()
    n = len(windows)
    for name in sums:
        sums[name] /= n
    bad = sorted(name for name, g in sums.items() if not np.isfinite(g).all())
    if bad:
        raise NumericError(f"non-finite gradient for {', '.join(bad)}")
    return total / n, sums


_CLASSES = {
    cls.kind: cls for cls in (FeedForwardNet, VanillaRNN, LSTMNet, GRUNet)
}


def build_model(kind: str, config: ModelConfig, seed: int = 0) -> _Network:
    try:
        cls = _CLASSES[kind]
    except KeyError:
        raise ValidationError(
            f"unknown model kind {kind!r}; choose from {MODEL_KINDS}"
        ) from None
    return cls(config, seed)
