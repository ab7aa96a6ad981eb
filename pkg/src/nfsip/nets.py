"""Minimal feedforward network with layer norm and hand-written gradients.

All numerics are plain numpy. Networks are two hidden layers (32 units each
by default) with layer norm after each hidden linear map, ReLU after the
norm, and a plain linear output head. The same architecture serves both the
action-value network and the policy-logits network; the caller applies
softmax to logits where needed.

Gradients are computed analytically by `backward` and can be cross-checked
against `finite_difference_gradient`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

DEFAULT_HIDDEN = (32, 32)
LAYER_NORM_EPS = 1e-5

VALID_HEADS = ("q-values", "policy-logits")


@dataclass
class ParameterSet:
    """Weights, biases and layer-norm gain/offset for one network.

    `weights[i]` has shape (fan_in, fan_out); hidden layers additionally
    carry `gains[i]` / `offsets[i]` vectors for layer norm. The output layer
    has no norm, so gains/offsets have one entry fewer than weights.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gains: list[np.ndarray]
    offsets: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_size(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_size(self) -> int:
        return self.weights[-1].shape[1]

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        """Yield (name, array) pairs in a fixed, documented order."""
        for i in range(self.n_layers):
            yield f"w{i}", self.weights[i]
            yield f"b{i}", self.biases[i]
        for i in range(len(self.gains)):
            yield f"g{i}", self.gains[i]
            yield f"o{i}", self.offsets[i]

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [g.copy() for g in self.gains],
            [o.copy() for o in self.offsets],
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for _, a in self.tensors())


# A GradientSet is shape-congruent with its ParameterSet; reuse the class.
GradientSet = ParameterSet


def init_params(
    input_size: int,
    output_size: int,
    hidden: Sequence[int] = DEFAULT_HIDDEN,
    rng: np.random.Generator | None = None,
) -> ParameterSet:
    """Fan-in scaled uniform init; gains start at 1, offsets at 0."""
    rng = rng if rng is not None else np.random.default_rng(0)
    sizes = [input_size, *hidden, output_size]
    weights, biases, gains, offsets = [], [], [], []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
        if i < len(sizes) - 2:
            gains.append(np.ones(fan_out))
            offsets.append(np.zeros(fan_out))
    return ParameterSet(weights, biases, gains, offsets)


def zeros_like_params(params: ParameterSet) -> GradientSet:
    return ParameterSet(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
        [np.zeros_like(g) for g in params.gains],
        [np.zeros_like(o) for o in params.offsets],
    )


def layer_norm(
    x: np.ndarray,
    gain: np.ndarray,
    offset: np.ndarray,
    eps: float = LAYER_NORM_EPS,
) -> np.ndarray:
    """gain * (x - mean) / sqrt(var + eps) + offset, over the last axis."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != gain.shape[-1] or gain.shape != offset.shape:
        raise ValueError(
            f"layer_norm length mismatch: x {x.shape[-1]}, "
            f"gain {gain.shape[-1]}, offset {offset.shape[-1]}"
        )
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    xhat = (x - mean) / np.sqrt(var + eps)
    return gain * xhat + offset


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class ForwardTrace:
    """Per-layer intermediates needed to backpropagate exactly.

    inputs[i] is the input to linear layer i. For hidden layers we keep the
    pre-norm value z, the normalized xhat, the per-row inverse std, and the
    post-ReLU activation.
    """

    inputs: list[np.ndarray] = field(default_factory=list)
    pre_norm: list[np.ndarray] = field(default_factory=list)
    xhat: list[np.ndarray] = field(default_factory=list)
    inv_std: list[np.ndarray] = field(default_factory=list)
    post_norm: list[np.ndarray] = field(default_factory=list)
    output: np.ndarray | None = None
    single: bool = False


def forward(
    params: ParameterSet,
    inputs: np.ndarray,
    head: str = "q-values",
) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network on one input vector or a (batch, n) matrix.

    Returns the raw output row(s); for head="policy-logits" the caller is
    expected to apply softmax. The trace is sufficient for `backward`.
    """
    if head not in VALID_HEADS:
        raise ValueError(f"unknown head {head!r}; expected one of {VALID_HEADS}")
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.input_size:
        raise ValueError(
            f"input length {x.shape[1]} does not match network input size "
            f"{params.input_size}"
        )
    trace = ForwardTrace(single=single)
    n_hidden = params.n_layers - 1
    for i in range(n_hidden):
        trace.inputs.append(x)
        z = x @ params.weights[i] + params.biases[i]
        n = z.shape[1]
        mean = z.sum(axis=1, keepdims=True) / n
        centered = z - mean
        var = np.einsum("ij,ij->i", centered, centered)[:, None] / n
        inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
        xhat = centered * inv_std
        ln = params.gains[i] * xhat + params.offsets[i]
        x = np.maximum(ln, 0.0)
        trace.pre_norm.append(z)
        trace.xhat.append(xhat)
        trace.inv_std.append(inv_std)
        trace.post_norm.append(ln)
    trace.inputs.append(x)
    out = x @ params.weights[-1] + params.biases[-1]
    trace.output = out
    if single:
        return out[0], trace
    return out, trace


def backward(
    params: ParameterSet,
    trace: ForwardTrace,
    output_grad: np.ndarray,
) -> GradientSet:
    """Gradient of sum_b output_b . output_grad_b w.r.t. all parameters."""
    g = np.asarray(output_grad, dtype=float)
    if trace.single and g.ndim == 1:
        g = g[None, :]
    if g.shape[-1] != params.output_size:
        raise ValueError("output_grad length does not match network output size")
    if len(trace.inputs) != params.n_layers:
        raise ValueError("trace does not match parameter set")
    grads = zeros_like_params(params)

    # Output layer (plain linear).
    x = trace.inputs[-1]
    grads.weights[-1] = x.T @ g
    grads.biases[-1] = g.sum(axis=0)
    dx = g @ params.weights[-1].T

    n_hidden = params.n_layers - 1
    for i in range(n_hidden - 1, -1, -1):
        ln = trace.post_norm[i]
        d_ln = dx * (ln > 0.0)
        xhat = trace.xhat[i]
        grads.gains[i] = (d_ln * xhat).sum(axis=0)
        grads.offsets[i] = d_ln.sum(axis=0)
        d_xhat = d_ln * params.gains[i]
        n = xhat.shape[1]
        inv_std = trace.inv_std[i]
        s1 = d_xhat.sum(axis=1, keepdims=True)
        s2 = (d_xhat * xhat).sum(axis=1, keepdims=True)
        dz = (inv_std / n) * (n * d_xhat - s1 - xhat * s2)
        x_in = trace.inputs[i]
        grads.weights[i] = x_in.T @ dz
        grads.biases[i] = dz.sum(axis=0)
        dx = dz @ params.weights[i].T
    return grads


def scale_grads(grads: GradientSet, factor: float) -> GradientSet:
    return ParameterSet(
        [w * factor for w in grads.weights],
        [b * factor for b in grads.biases],
        [g * factor for g in grads.gains],
        [o * factor for o in grads.offsets],
    )


def add_grads(a: GradientSet, b: GradientSet) -> GradientSet:
    return ParameterSet(
        [x + y for x, y in zip(a.weights, b.weights)],
        [x + y for x, y in zip(a.biases, b.biases)],
        [x + y for x, y in zip(a.gains, b.gains)],
        [x + y for x, y in zip(a.offsets, b.offsets)],
    )


def max_abs_grad(grads: GradientSet) -> float:
    return max(
        (float(np.abs(a).max()) for _, a in grads.tensors() if a.size), default=0.0
    )


@dataclass
class OptimizerState:
    """State for the adaptive-moment optimizer ("adam") or plain SGD."""

    mode: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: GradientSet | None = None
    v: GradientSet | None = None


def optimizer_step(
    params: ParameterSet,
    grads: GradientSet,
    lr: float,
    state: OptimizerState,
) -> tuple[ParameterSet, OptimizerState]:
    """Apply one descent step in place; rejects non-finite gradients."""
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    for name, a in grads.tensors():
        if not np.all(np.isfinite(a)):
            raise ValueError(f"non-finite gradient in tensor {name}")
    if state.mode == "sgd":
        for p, g in _pairs(params, grads):
            p -= lr * g
        return params, state
    if state.mode != "adam":
        raise ValueError(f"unknown optimizer mode {state.mode!r}")
    if state.m is None:
        state.m = zeros_like_params(params)
        state.v = zeros_like_params(params)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    # step = lr * (m/bc1) / (sqrt(v/bc2) + eps); rewritten to cut temporaries.
    scale = lr / bc1
    root_bc2 = np.sqrt(bc2)
    for (p, g), (m, _), (v, _) in zip(
        _pairs(params, grads), _pairs(state.m, grads), _pairs(state.v, grads)
    ):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        denom = np.sqrt(v)
        denom /= root_bc2
        denom += state.eps
        p -= scale * m / denom
    return params, state


def _pairs(a: ParameterSet, b: ParameterSet):
    for xs, ys in (
        (a.weights, b.weights),
        (a.biases, b.biases),
        (a.gains, b.gains),
        (a.offsets, b.offsets),
    ):
        yield from zip(xs, ys)


def finite_difference_gradient(
    loss_fn: Callable[[ParameterSet], float],
    params: ParameterSet,
    h: float = 1e-5,
) -> GradientSet:
    """Central-difference gradient estimate, one parameter at a time."""
    if h <= 0:
        raise ValueError("finite-difference step h must be positive")
    grads = zeros_like_params(params)
    for (_, p), (_, g) in zip(params.tensors(), grads.tensors()):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + h
            up = loss_fn(params)
            flat_p[j] = orig - h
            down = loss_fn(params)
            flat_p[j] = orig
            flat_g[j] = (up - down) / (2.0 * h)
    return grads


def max_relative_error(analytic: GradientSet, numeric: GradientSet) -> float:
    """max |a - n| / max(1e-8, |a| + |n|) over all parameters."""
    worst = 0.0
    for (_, a), (_, n) in zip(analytic.tensors(), numeric.tensors()):
        denom = np.maximum(1e-8, np.abs(a) + np.abs(n))
        err = np.abs(a - n) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


CHECKPOINT_MAGIC = "NFSIP-CKPT v1"


def save_params(path, named_params: dict[str, ParameterSet]) -> None:
    """Write a text checkpoint: magic line, then name/shape/values per tensor."""
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        for net_name, params in named_params.items():
            for tname, a in params.tensors():
                fh.write(f"{net_name}/{tname}\n")
                fh.write(" ".join(str(d) for d in a.shape) + "\n")
                for v in a.reshape(-1):
                    fh.write(f"{v:.8e}\n")


def load_params(path) -> dict[str, dict[str, np.ndarray]]:
    """Read a checkpoint into {net_name: {tensor_name: array}}."""
    with open(path) as fh:
        magic = fh.readline().rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint header: {magic!r}")
        out: dict[str, dict[str, np.ndarray]] = {}
        while True:
            name = fh.readline()
            if not name:
                break
            name = name.rstrip("\n")
            if not name:
                continue
            shape = tuple(int(t) for t in fh.readline().split())
            n = int(np.prod(shape)) if shape else 1
            vals = np.array([float(fh.readline()) for _ in range(n)])
            net, _, tname = name.partition("/")
            out.setdefault(net, {})[tname] = vals.reshape(shape)
    return out


def params_from_tensors(tensors: dict[str, np.ndarray]) -> ParameterSet:
    """Rebuild a ParameterSet from checkpoint tensors (w0, b0, ..., g0, o0...)."""
    n_layers = sum(1 for k in tensors if k.startswith("w"))
    n_norm = sum(1 for k in tensors if k.startswith("g"))
    return ParameterSet(
        [tensors[f"w{i}"] for i in range(n_layers)],
        [tensors[f"b{i}"] for i in range(n_layers)],
        [tensors[f"g{i}"] for i in range(n_norm)],
        [tensors[f"o{i}"] for i in range(n_norm)],
    )
