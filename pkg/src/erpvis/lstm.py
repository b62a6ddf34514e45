"""Stacked LSTM encoder, ReLU projection, softmax head, and exact BPTT.

The encoder consumes a channels x time matrix one timestep at a time (the
per-timestep input is the vector of all channel values), runs it through a
stack of LSTM layers, and reads out the top layer's final hidden state
through an affine + ReLU projection into a representation vector. A softmax
head turns the representation into class probabilities.

Cell equations are the standard formulation: input/forget/output sigmoid
gates, tanh candidate, tanh squashing of the cell for the hidden output,
no peepholes:

    i_t = sigmoid(W_i x_t + U_i h_{t-1} + b_i)
    f_t = sigmoid(W_f x_t + U_f h_{t-1} + b_f)
    o_t = sigmoid(W_o x_t + U_o h_{t-1} + b_o)
    g_t = tanh   (W_g x_t + U_g h_{t-1} + b_g)
    c_t = f_t * c_{t-1} + i_t * g_t
    h_t = o_t * tanh(c_t)

Gradients are computed analytically by backpropagation through time over
all timesteps and layers; grad_check verifies them against central finite
differences. All math is 64-bit.

The four gate blocks are stored fused as rows [i; f; o; g] of one matrix
per input kind, so a timestep costs two GEMMs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import ConsistencyError, DimensionError, DomainError, ParameterError
from .seeding import TAG_MODEL_INIT, rng_for

LOG_CLIP_EPS = 1e-12
LOSS_VARIANTS = ("categorical", "eq2")


@dataclass
class LSTMLayerParams:
    """One layer's fused gate parameters, gate row order [i, f, o, g]."""

    w_x: np.ndarray  # (4h, input_size)
    w_h: np.ndarray  # (4h, h)
    b: np.ndarray    # (4h,)

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[1]


@dataclass
class LSTMModel:
    """Stacked LSTM encoder parameters plus projection and softmax head."""

    layers: list
    proj_w: np.ndarray  # (repr_dim, h)
    proj_b: np.ndarray  # (repr_dim,)
    head_w: np.ndarray  # (n_classes, repr_dim)
    head_b: np.ndarray  # (n_classes,)

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    @property
    def hidden_size(self) -> int:
        return self.layers[0].hidden_size

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def repr_dim(self) -> int:
        return self.proj_w.shape[0]

    @property
    def n_classes(self) -> int:
        return self.head_w.shape[0]

    def param_items(self):
        """(name, array) pairs over every learnable tensor, fixed order."""
        for idx, layer in enumerate(self.layers):
            yield f"layer{idx}.w_x", layer.w_x
            yield f"layer{idx}.w_h", layer.w_h
            yield f"layer{idx}.b", layer.b
        yield "proj_w", self.proj_w
        yield "proj_b", self.proj_b
        yield "head_w", self.head_w
        yield "head_b", self.head_b

    def n_parameters(self) -> int:
        return sum(arr.size for _, arr in self.param_items())


def init_lstm_model(input_size: int, hidden_size: int = 128, num_layers: int = 1,
                    repr_dim: int = 128, n_classes: int = 6, seed: int = 0) -> LSTMModel:
    """Seeded model with weights uniform in [-1/sqrt(h), 1/sqrt(h)].

    Biases start at zero except the forget gate's, which starts at 1.0 so
    early training does not erase the cell state.
    """
    for name, v in (("input_size", input_size), ("hidden_size", hidden_size),
                    ("num_layers", num_layers), ("repr_dim", repr_dim), ("n_classes", n_classes)):
        if v < 1:
            raise ParameterError(f"{name} must be >= 1, got {v}")
    rng = rng_for(seed, TAG_MODEL_INIT)
    bound = 1.0 / np.sqrt(hidden_size)
    h = hidden_size
    layers = []
    for ell in range(num_layers):
        in_size = input_size if ell == 0 else h
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0  # forget gate
        layers.append(LSTMLayerParams(
            w_x=rng.uniform(-bound, bound, size=(4 * h, in_size)),
            w_h=rng.uniform(-bound, bound, size=(4 * h, h)),
            b=b,
        ))
    return LSTMModel(
        layers=layers,
        proj_w=rng.uniform(-bound, bound, size=(repr_dim, h)),
        proj_b=np.zeros(repr_dim),
        head_w=rng.uniform(-bound, bound, size=(n_classes, repr_dim)),
        head_b=np.zeros(n_classes),
    )


@dataclass
class LayerTrace:
    """Per-timestep activations of one layer, batch axis second."""

    gates: np.ndarray     # (T, B, 4h) post-nonlinearity, [i, f, o, g]
    cells: np.ndarray     # (T, B, h)
    cell_tanh: np.ndarray # (T, B, h)
    hidden: np.ndarray    # (T, B, h)


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, plus the readout.

    Batched internally; the single-example accessors are valid when the
    trace came from lstm_forward (batch size 1).
    """

    model: LSTMModel
    inputs: np.ndarray            # (T, B, input_size)
    layer_traces: list = field(default_factory=list)
    repr_pre: np.ndarray = None   # (B, repr_dim) before ReLU
    representation_batch: np.ndarray = None
    logits_batch: np.ndarray = None
    probabilities_batch: np.ndarray = None

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[1]

    @property
    def representation(self) -> np.ndarray:
        return self.representation_batch[0]

    @property
    def logits(self) -> np.ndarray:
        return self.logits_batch[0]

    @property
    def probabilities(self) -> np.ndarray:
        return self.probabilities_batch[0]

    def hidden_states(self, layer: int = -1) -> np.ndarray:
        """(T, h) hidden trajectory of one layer, single-example traces."""
        return self.layer_traces[layer].hidden[:, 0, :]

    def cell_states(self, layer: int = -1) -> np.ndarray:
        return self.layer_traces[layer].cells[:, 0, :]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Shift-invariant exponential normalization over the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DomainError("softmax input must be finite")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(model: LSTMModel, xs: np.ndarray, keep_trace: bool = True) -> ForwardTrace:
    """Run the encoder over a batch of (channels x T) inputs.

    xs has shape (B, channels, T). With keep_trace=False only the readout
    is retained, which is enough for evaluation and far lighter on memory.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 3:
        raise DimensionError(f"batch input must be (B, channels, T), got shape {xs.shape}")
    if xs.shape[1] != model.input_size:
        raise DimensionError(
            f"input has {xs.shape[1]} channels, model expects {model.input_size}"
        )
    if not np.all(np.isfinite(xs)):
        raise DomainError("encoder input must be finite")
    n_batch, _, n_steps = xs.shape
    seq = np.ascontiguousarray(xs.transpose(2, 0, 1))  # (T, B, c)

    trace = ForwardTrace(model=model, inputs=seq)
    layer_input = seq
    h_final = None
    for layer in model.layers:
        h = layer.hidden_size
        w_x_t, w_h_t = layer.w_x.T, layer.w_h.T
        h_prev = np.zeros((n_batch, h))
        c_prev = np.zeros((n_batch, h))
        if keep_trace:
            gates = np.empty((n_steps, n_batch, 4 * h))
            cells = np.empty((n_steps, n_batch, h))
            cell_tanh = np.empty((n_steps, n_batch, h))
        hidden = np.empty((n_steps, n_batch, h))
        for t in range(n_steps):
            z = layer_input[t] @ w_x_t + h_prev @ w_h_t + layer.b
            i = _sigmoid(z[:, :h])
            f = _sigmoid(z[:, h:2 * h])
            o = _sigmoid(z[:, 2 * h:3 * h])
            g = np.tanh(z[:, 3 * h:])
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h_t = o * tc
            if keep_trace:
                gates[t, :, :h], gates[t, :, h:2 * h] = i, f
                gates[t, :, 2 * h:3 * h], gates[t, :, 3 * h:] = o, g
                cells[t], cell_tanh[t] = c, tc
            hidden[t] = h_t
            h_prev, c_prev = h_t, c
        if keep_trace:
            trace.layer_traces.append(LayerTrace(gates=gates, cells=cells,
                                                 cell_tanh=cell_tanh, hidden=hidden))
        layer_input = hidden
        h_final = h_prev

    trace.repr_pre = h_final @ model.proj_w.T + model.proj_b
    trace.representation_batch = np.maximum(trace.repr_pre, 0.0)
    trace.logits_batch = trace.representation_batch @ model.head_w.T + model.head_b
    trace.probabilities_batch = softmax(trace.logits_batch)
    return trace


def lstm_forward(model: LSTMModel, x: np.ndarray) -> ForwardTrace:
    """Encode one channels x T matrix, retaining the trace for backprop."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"input must be (channels, T), got shape {x.shape}")
    return forward_batch(model, x[None, :, :], keep_trace=True)


def loss(p: np.ndarray, q: np.ndarray, variant: str = "categorical") -> float:
    """Cross-entropy between a one-hot target p and a distribution q.

    "categorical" is -sum p log q. "eq2" additionally charges every class
    for its complement, -sum [p log q + (1-p) log(1-q)]; it upper-bounds
    the categorical value and both vanish at a perfect one-hot prediction.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise DomainError(f"p and q must be equal-length vectors, got {p.shape} vs {q.shape}")
    if np.any(q < 0) or np.any(q > 1) or abs(q.sum() - 1.0) > 1e-6:
        raise DomainError("q must be a probability distribution")
    if not (np.all((p == 0) | (p == 1)) and p.sum() == 1):
        raise DomainError("p must be one-hot")
    if variant not in LOSS_VARIANTS:
        raise ParameterError(f"unknown loss variant {variant!r}")
    qc = np.clip(q, LOG_CLIP_EPS, 1.0 - LOG_CLIP_EPS)
    value = -float(np.sum(p * np.log(qc)))
    if variant == "eq2":
        value -= float(np.sum((1.0 - p) * np.log(1.0 - qc)))
    return value


@dataclass
class Gradients:
    """Parameter gradients, same shapes and order as the model."""

    layers: list           # list of LSTMLayerParams holding gradient arrays
    proj_w: np.ndarray
    proj_b: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray

    def param_items(self):
        for idx, layer in enumerate(self.layers):
            yield f"layer{idx}.w_x", layer.w_x
            yield f"layer{idx}.w_h", layer.w_h
            yield f"layer{idx}.b", layer.b
        yield "proj_w", self.proj_w
        yield "proj_b", self.proj_b
        yield "head_w", self.head_w
        yield "head_b", self.head_b

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for _, a in self.param_items())))

    def scale(self, factor: float):
        for _, a in self.param_items():
            a *= factor


def _dlogits(probs: np.ndarray, targets: np.ndarray, variant: str) -> np.ndarray:
    """Gradient of the selected loss w.r.t. logits, per example."""
    if variant == "categorical":
        return probs - targets
    # eq2: chain dH/dq through the softmax Jacobian. Clipped coordinates
    # contribute nothing (the loss is flat in them).
    qc = np.clip(probs, LOG_CLIP_EPS, 1.0 - LOG_CLIP_EPS)
    dq = -targets / qc + (1.0 - targets) / (1.0 - qc)
    dq[(probs < LOG_CLIP_EPS) | (probs > 1.0 - LOG_CLIP_EPS)] = 0.0
    inner = np.sum(probs * dq, axis=-1, keepdims=True)
    return probs * (dq - inner)


def backward(model: LSTMModel, trace: ForwardTrace, target: np.ndarray,
             variant: str = "categorical") -> Gradients:
    """Exact gradients of the mean loss over the traced batch.

    The target is one-hot, shape (K,) for a single-example trace or (B, K)
    for a batch. Gradients for a batch are the mean of per-example ones.
    """
    if trace.model is not model:
        raise ConsistencyError("trace was produced by a different model object")
    if not trace.layer_traces:
        raise ConsistencyError("trace was recorded without activations (keep_trace=False)")
    if variant not in LOSS_VARIANTS:
        raise ParameterError(f"unknown loss variant {variant!r}")
    n_batch = trace.batch_size
    targets = np.asarray(target, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[None, :]
    if targets.shape != (n_batch, model.n_classes):
        raise DimensionError(
            f"target shape {targets.shape} does not match (batch {n_batch}, classes {model.n_classes})"
        )

    dlogits = _dlogits(trace.probabilities_batch, targets, variant) / n_batch
    grads = Gradients(
        layers=[LSTMLayerParams(w_x=np.zeros_like(l.w_x), w_h=np.zeros_like(l.w_h),
                                b=np.zeros_like(l.b)) for l in model.layers],
        proj_w=np.zeros_like(model.proj_w),
        proj_b=np.zeros_like(model.proj_b),
        head_w=np.zeros_like(model.head_w),
        head_b=np.zeros_like(model.head_b),
    )

    rep = trace.representation_batch
    grads.head_w += dlogits.T @ rep
    grads.head_b += dlogits.sum(axis=0)
    drep = dlogits @ model.head_w
    dz_proj = drep * (trace.repr_pre > 0.0)

    h_top_final = trace.layer_traces[-1].hidden[-1]
    grads.proj_w += dz_proj.T @ h_top_final
    grads.proj_b += dz_proj.sum(axis=0)
    dh_final = dz_proj @ model.proj_w

    n_steps = trace.inputs.shape[0]
    # Gradient flowing into each timestep's hidden output from the layer
    # above (or, for the top layer, from the projection readout).
    dh_above = np.zeros((n_steps, n_batch, model.layers[-1].hidden_size))
    dh_above[-1] = dh_final

    for ell in range(model.num_layers - 1, -1, -1):
        layer = model.layers[ell]
        lt = trace.layer_traces[ell]
        h = layer.hidden_size
        layer_input = trace.inputs if ell == 0 else trace.layer_traces[ell - 1].hidden
        g_layer = grads.layers[ell]
        need_dx = ell > 0
        dx_seq = np.empty_like(layer_input) if need_dx else None

        dh_rec = np.zeros((n_batch, h))
        dc_rec = np.zeros((n_batch, h))
        for t in range(n_steps - 1, -1, -1):
            gates = lt.gates[t]
            i, f = gates[:, :h], gates[:, h:2 * h]
            o, g = gates[:, 2 * h:3 * h], gates[:, 3 * h:]
            tc = lt.cell_tanh[t]
            dh = dh_above[t] + dh_rec
            do = dh * tc
            dc = dc_rec + dh * o * (1.0 - tc * tc)
            c_prev = lt.cells[t - 1] if t > 0 else 0.0
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_rec = dc * f
            dz = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)],
                axis=1,
            )
            g_layer.w_x += dz.T @ layer_input[t]
            h_prev = lt.hidden[t - 1] if t > 0 else np.zeros((n_batch, h))
            g_layer.w_h += dz.T @ h_prev
            g_layer.b += dz.sum(axis=0)
            if need_dx:
                dx_seq[t] = dz @ layer.w_x
            dh_rec = dz @ layer.w_h
        if need_dx:
            dh_above = dx_seq
    return grads


def grad_check(model: LSTMModel, x: np.ndarray, target: np.ndarray,
               eps: float = 1e-5, variant: str = "categorical") -> float:
    """Max relative error between analytic and central-difference gradients.

    Perturbs every parameter in place by +/- eps; intended for small models
    only. The analytic side is the backward() implementation this verifies.
    """
    if eps is None or eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)

    def loss_at() -> float:
        t = forward_batch(model, x[None, :, :], keep_trace=False)
        return loss(target, t.probabilities_batch[0], variant)

    trace = lstm_forward(model, x)
    grads = backward(model, trace, target, variant)
    analytic = {name: arr for name, arr in grads.param_items()}

    worst = 0.0
    for name, arr in model.param_items():
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            f_plus = loss_at()
            flat[j] = orig - eps
            f_minus = loss_at()
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(a_flat[j]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[j] - numeric) / denom)
    return worst
