"""Dense float64 tensors with tape-based reverse-mode differentiation.

The op set is deliberately closed: elementwise arithmetic, the activations
the network needs, channel concat/split, and full reduction. Image ops
(convolution, resizing, deformable sampling, patch pooling) live in ops.py
and register through the same tape machinery.

Tensors are immutable values once created; a GradTape is confined to one
logical training step and must not be shared across threads.
"""

import threading

import numpy as np

from .errors import NumericalError, ShapeError

# Logits are clamped here before exponentiation so learned pooling weights
# cannot overflow.
EXP_CLAMP = 40.0

_state = threading.local()


def _tape_stack():
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """N-d array of float64 values, optionally tracked for backprop."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.item())

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operators over the closed op set --

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, neg(other))
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return rsub_scalar(self, float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return div(self, other)
        return mul_scalar(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def sum(self):
        return tsum(self)


class _Node:
    """One recorded operation: output plus a closure producing input grads."""

    __slots__ = ("op", "output", "backward")

    def __init__(self, op, output, backward):
        self.op = op
        self.output = output
        self.backward = backward


class GradTape:
    """Records every op executed while active; replays them in reverse.

    `grads` maps id(tensor) -> accumulated gradient array. Nodes are stored
    in execution order, so reverse iteration is a valid topological order
    by construction.
    """

    def __init__(self):
        self.nodes = []
        self.grads = {}

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def record(self, node):
        self.nodes.append(node)

    def backward(self, root, seed=None):
        """Accumulate d(root)/d(tensor) for every tracked tensor.

        `root` must be a scalar tensor unless an explicit seed gradient of
        matching shape is supplied.
        """
        if seed is None:
            if root.size != 1:
                raise ShapeError("backward", f"root must be scalar, got shape {root.shape}")
            seed = np.ones_like(root.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != root.data.shape:
                raise ShapeError("backward", "seed shape must match root shape")
        self.grads = {id(root): seed.copy()}
        for node in reversed(self.nodes):
            gout = self.grads.get(id(node.output))
            if gout is None:
                continue
            for tensor, gin in node.backward(gout):
                if not tensor.requires_grad:
                    continue
                if gin.shape != tensor.data.shape:
                    raise ShapeError(
                        node.op, f"gradient shape {gin.shape} != tensor shape {tensor.data.shape}"
                    )
                slot = self.grads.get(id(tensor))
                if slot is None:
                    # Own the buffer: closures may hand back gout itself or a
                    # view of it, and we accumulate in place below.
                    if gin is gout or gin.base is not None:
                        gin = gin.copy()
                    self.grads[id(tensor)] = gin
                else:
                    slot += gin

    def grad(self, tensor):
        """Gradient accumulated for `tensor` in the last backward, or None."""
        return self.grads.get(id(tensor))


def _check_finite(op, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(op, "non-finite values in result")


def _make(op, out_data, inputs, backward):
    """Wrap an op result: finite check, grad flag, tape registration."""
    _check_finite(op, out_data)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = active_tape()
    if tape is not None and requires:
        tape.record(_Node(op, out, backward))
    return out


def _same_shape(op, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(op, f"operand shapes differ: {a.data.shape} vs {b.data.shape}")


# -- elementwise arithmetic --

def add(a, b):
    _same_shape("add", a, b)
    def backward(g):
        return [(a, g), (b, g)]
    return _make("add", a.data + b.data, (a, b), backward)


def neg(a):
    def backward(g):
        return [(a, -g)]
    return _make("neg", -a.data, (a,), backward)


def mul(a, b):
    _same_shape("mul", a, b)
    def backward(g):
        return [(a, g * b.data), (b, g * a.data)]
    return _make("mul", a.data * b.data, (a, b), backward)


def div(a, b):
    _same_shape("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    def backward(g):
        return [(a, g / b.data), (b, -g * out / b.data)]
    return _make("div", out, (a, b), backward)


def add_scalar(a, s):
    def backward(g):
        return [(a, g)]
    return _make("add_scalar", a.data + s, (a,), backward)


def rsub_scalar(a, s):
    """s - a, elementwise."""
    def backward(g):
        return [(a, -g)]
    return _make("rsub_scalar", s - a.data, (a,), backward)


def mul_scalar(a, s):
    def backward(g):
        return [(a, g * s)]
    return _make("mul_scalar", a.data * s, (a,), backward)


def square(a):
    def backward(g):
        return [(a, g * (2.0 * a.data))]
    return _make("square", a.data * a.data, (a,), backward)


def absolute(a):
    sign = np.sign(a.data)
    def backward(g):
        return [(a, g * sign)]
    return _make("abs", np.abs(a.data), (a,), backward)


def tsum(a):
    """Full reduction to a scalar (0-d) tensor."""
    shape = a.data.shape
    def backward(g):
        return [(a, np.full(shape, float(g)))]
    return _make("sum", np.asarray(a.data.sum()), (a,), backward)


# -- activations --

def _sigmoid(x):
    z = np.clip(x, -500.0, 500.0)
    pos = 1.0 / (1.0 + np.exp(-np.maximum(z, 0.0)))
    ez = np.exp(np.minimum(z, 0.0))
    negv = ez / (1.0 + ez)
    return np.where(z >= 0.0, pos, negv)


def sigmoid(a):
    y = _sigmoid(a.data)
    def backward(g):
        return [(a, g * y * (1.0 - y))]
    return _make("sigmoid", y, (a,), backward)


def tanh(a):
    y = np.tanh(a.data)
    def backward(g):
        return [(a, g * (1.0 - y * y))]
    return _make("tanh", y, (a,), backward)


def exp(a):
    """Exponential with inputs clamped to EXP_CLAMP to prevent overflow."""
    clamped = a.data <= EXP_CLAMP
    y = np.exp(np.minimum(a.data, EXP_CLAMP))
    def backward(g):
        return [(a, np.where(clamped, g * y, 0.0))]
    return _make("exp", y, (a,), backward)


def leaky_relu(a, slope=0.1):
    pos = a.data > 0.0
    def backward(g):
        return [(a, np.where(pos, g, g * slope))]
    return _make("leaky_relu", np.where(pos, a.data, a.data * slope), (a,), backward)


def softplus(a):
    """ln(1 + exp(x)) in its overflow-safe form; smooth non-negativity clamp."""
    x = a.data
    y = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    s = _sigmoid(x)
    def backward(g):
        return [(a, g * s)]
    return _make("softplus", y, (a,), backward)


# -- channel structure --

def concat_channels(parts):
    if not parts:
        raise ShapeError("concat_channels", "empty part list")
    first = parts[0].data.shape
    if len(first) != 4:
        raise ShapeError("concat_channels", f"expected NCHW tensors, got shape {first}")
    for p in parts[1:]:
        s = p.data.shape
        if len(s) != 4 or s[0] != first[0] or s[2:] != first[2:]:
            raise ShapeError("concat_channels", f"incompatible part shape {s} vs {first}")
    counts = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + counts)
    def backward(g):
        return [(p, g[:, offsets[i]:offsets[i + 1]]) for i, p in enumerate(parts)]
    return _make("concat_channels", np.concatenate([p.data for p in parts], axis=1),
                 tuple(parts), backward)


def narrow_channels(a, start, count):
    """View channels [start, start+count) as a new tensor."""
    c = a.data.shape[1]
    if start < 0 or count < 1 or start + count > c:
        raise ShapeError("narrow_channels", f"range [{start},{start + count}) outside {c} channels")
    shape = a.data.shape
    def backward(g):
        full = np.zeros(shape)
        full[:, start:start + count] = g
        return [(a, full)]
    return _make("narrow_channels", a.data[:, start:start + count].copy(), (a,), backward)


def split_channels(a, counts):
    if sum(counts) != a.data.shape[1]:
        raise ShapeError("split_channels", f"counts {counts} do not sum to {a.data.shape[1]} channels")
    out, start = [], 0
    for c in counts:
        out.append(narrow_channels(a, start, c))
        start += c
    return out


def sub_channel_mean(a):
    """x minus its per-pixel mean over channels (zero-sum normalization)."""
    c = a.data.shape[1]
    def backward(g):
        return [(a, g - g.mean(axis=1, keepdims=True))]
    return _make("sub_channel_mean", a.data - a.data.mean(axis=1, keepdims=True), (a,), backward)
