"""Small dense reverse-mode autodiff on top of numpy.

Tensors created with ``tape=None`` are constants: every op evaluates on them
without recording anything, so inference reuses the training code path.
Parameters are registered on a :class:`Tape`; each op that touches a taped
tensor appends its output to that tape, which therefore stays in topological
order.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError, ShapeError, TapeError

PROB_FLOOR = 1e-12
MAX_RANK = 3


class Tensor:
    __slots__ = ("value", "grad", "tape", "requires_grad", "_backward", "_parents")

    def __init__(self, value, tape: "Tape | None" = None, requires_grad: bool = False):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim > MAX_RANK:
            raise ShapeError(f"rank {value.ndim} exceeds maximum rank {MAX_RANK}")
        self.value = value
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.requires_grad = requires_grad
        self._backward: Callable[[np.ndarray], None] | None = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def constant(value) -> Tensor:
    return Tensor(value)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records operations for one forward/backward pass.

    A tape supports a single :meth:`backward`; call :meth:`reset` to clear
    gradients before running it again.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._consumed = False

    def param(self, value) -> Tensor:
        t = Tensor(np.array(value, dtype=np.float64), tape=self, requires_grad=True)
        self.nodes.append(t)
        return t

    def reset(self) -> None:
        for node in self.nodes:
            node.grad = None
        self._consumed = False

    def backward(self, loss: Tensor) -> None:
        if loss.tape is not self:
            raise TapeError("loss was not recorded on this tape")
        if loss.value.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self._consumed:
            raise TapeError("backward already ran on this tape; call reset() first")
        self._consumed = True
        for node in self.nodes:
            node.grad = None
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
        for node in self.nodes:
            if node.requires_grad and node.grad is None:
                node.grad = np.zeros_like(node.value)


def _tape_of(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is None:
            if t.requires_grad:
                raise TapeError("detached tensor requires grad but belongs to no tape")
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise TapeError("operands belong to different tapes")
    return tape


def _record(value: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    tape = _tape_of(*parents)
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(value, tape=tape if needs else None, requires_grad=needs)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
        tape.nodes.append(out)
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


# ---------------------------------------------------------------------------
# forward ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        _acc(a, g @ bv.T)
        _acc(b, av.T @ g)

    return _record(av @ bv, (a, b), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a bias vector added to every row."""
    if a.shape == b.shape:
        def back(g):
            _acc(a, g)
            _acc(b, g)
    elif b.value.ndim == 1 and a.value.ndim >= 1 and a.shape[-1] == b.shape[0]:
        n = b.shape[0]

        def back(g):
            _acc(a, g)
            _acc(b, g.reshape(-1, n).sum(axis=0))
    else:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")
    return _record(a.value + b.value, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} * {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        _acc(a, g * bv)
        _acc(b, g * av)

    return _record(av * bv, (a, b), back)


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    on = x.value > 0

    def back(g):
        _acc(x, g * on)

    return _record(np.where(on, x.value, 0.0), (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    v = x.value
    y = np.empty_like(v)
    pos = v >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    y[~pos] = ev / (1.0 + ev)

    def back(g):
        _acc(x, g * y * (1.0 - y))

    return _record(y, (x,), back)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)

    def back(g):
        _acc(x, g * (1.0 - y * y))

    return _record(y, (x,), back)


def softmax(x: Tensor) -> Tensor:
    """Softmax along the last axis, stabilised by subtracting the row max."""
    if x.value.ndim == 0:
        raise ShapeError("softmax needs at least one axis")
    z = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        _acc(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _record(y, (x,), back)


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under row distributions.

    ``labels`` is an int (for a single vector), an int array with one entry
    per row, or a float matrix of soft targets shaped like ``probs``.
    Probabilities are clamped to [1e-12, 1]; the clamp passes no gradient.
    """
    p = probs.value
    squeeze = p.ndim == 1
    p2 = p.reshape(1, -1) if squeeze else p
    if p2.ndim != 2:
        raise ShapeError(f"cross_entropy expects a vector or matrix, got {probs.shape}")
    rows, k = p2.shape
    lab = np.asarray(labels)
    if lab.dtype.kind == "f":
        targets = lab.reshape(rows, k) if lab.size == rows * k else None
        if targets is None:
            raise ShapeError(f"soft targets {lab.shape} do not match probabilities {probs.shape}")
    else:
        lab = lab.reshape(-1).astype(np.int64)
        if lab.shape[0] != rows:
            raise ShapeError(f"{lab.shape[0]} labels for {rows} probability rows")
        if np.any(lab < 0) or np.any(lab >= k):
            raise IndexError(f"label index out of range for {k} classes")
        targets = np.zeros((rows, k))
        targets[np.arange(rows), lab] = 1.0
    clamped = np.clip(p2, PROB_FLOOR, 1.0)
    inside = (p2 >= PROB_FLOOR) & (p2 <= 1.0)
    loss = -(targets * np.log(clamped)).sum() / rows

    def back(g):
        gp = -g * targets / clamped / rows * inside
        _acc(probs, gp.reshape(p.shape))

    return _record(np.asarray(loss), (probs,), back)


def l2_normalize(x: Tensor) -> Tensor:
    """Scale rows (last axis) to unit norm; an all-zero row stays zero."""
    v = x.value
    norm = np.sqrt((v * v).sum(axis=-1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    y = np.where(norm > 0, v / safe, 0.0)

    def back(g):
        gx = (g - y * (g * y).sum(axis=-1, keepdims=True)) / safe
        _acc(x, np.where(norm > 0, gx, 0.0))

    return _record(y, (x,), back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    values = [t.value for t in tensors]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat shape mismatch: {[v.shape for v in values]}") from exc
    sizes = np.cumsum([v.shape[axis] for v in values])[:-1]

    def back(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            _acc(t, piece)

    return _record(out, tensors, back)


def mean(x: Tensor) -> Tensor:
    """Mean over rows (axis 0)."""
    if x.value.ndim == 0:
        raise ShapeError("mean needs at least one axis")
    n = x.shape[0]

    def back(g):
        _acc(x, np.broadcast_to(g / n, x.shape))

    return _record(x.value.mean(axis=0), (x,), back)


def total(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar."""

    def back(g):
        _acc(x, np.broadcast_to(g, x.shape))

    return _record(np.asarray(x.value.sum()), (x,), back)


def select_row(matrix: Tensor, index) -> Tensor:
    """Gather rows of a matrix; ``index`` may be an int or an int array."""
    if matrix.value.ndim != 2:
        raise ShapeError(f"select_row expects a matrix, got {matrix.shape}")
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= matrix.shape[0]):
        raise IndexError(f"row index out of range for {matrix.shape[0]} rows")

    def back(g):
        full = np.zeros_like(matrix.value)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, matrix.shape[1]))
        _acc(matrix, full)

    return _record(matrix.value[idx], (matrix,), back)


def as_row(x: Tensor) -> Tensor:
    """View a vector as a 1 x n matrix."""
    if x.value.ndim != 1:
        raise ShapeError(f"as_row expects a vector, got {x.shape}")
    n = x.shape[0]

    def back(g):
        _acc(x, g.reshape(n))

    return _record(x.value.reshape(1, n), (x,), back)


def columns(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``[start, stop)`` of the last axis."""

    def back(g):
        full = np.zeros_like(x.value)
        full[..., start:stop] = g
        _acc(x, full)

    return _record(x.value[..., start:stop], (x,), back)


def blend(mask, a: Tensor, b: Tensor) -> Tensor:
    """``mask * a + (1 - mask) * b`` for a constant 0/1 mask."""
    m = np.asarray(mask, dtype=np.float64)
    if not (a.shape == b.shape == m.shape):
        raise ShapeError(f"blend shape mismatch: {m.shape}, {a.shape}, {b.shape}")

    def back(g):
        _acc(a, g * m)
        _acc(b, g * (1.0 - m))

    return _record(m * a.value + (1.0 - m) * b.value, (a, b), back)


# ---------------------------------------------------------------------------
# verification


def grad_check(function: Callable[[Tensor], Tensor], x, epsilon: float = 1e-5,
               floor: float = 1e-8) -> float:
    """Max relative error between taped gradients and central differences.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    x = np.array(x, dtype=np.float64)
    tape = Tape()
    xt = tape.param(x)
    tape.backward(function(xt))
    analytic = xt.grad
    numeric = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = epsilon
        hi = float(function(Tensor(x + step)).value)
        lo = float(function(Tensor(x - step)).value)
        numeric.flat[i] = (hi - lo) / (2.0 * epsilon)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0


# ---------------------------------------------------------------------------
# named-tensor container

TENSOR_MAGIC = "CONTACT-TENSORS v1"


def save_tensors(path, tensors: Mapping[str, np.ndarray], meta: Mapping | None = None) -> None:
    """Write named float64 arrays plus JSON metadata.

    Layout: magic line, ``sha256 <hex>`` line, then a text header
    (``meta <json>``, one ``tensor <name> <shape>`` line per array, ``end``)
    followed by the little-endian float64 payloads in header order. The
    checksum covers everything after the checksum line.
    """
    lines = ["meta " + json.dumps(dict(meta or {}), sort_keys=True, separators=(",", ":"))]
    payload = []
    for name, arr in tensors.items():
        if not name or any(c.isspace() for c in name):
            raise ValueError(f"invalid tensor name {name!r}")
        arr = np.asarray(arr, dtype="<f8")
        shape = ",".join(str(d) for d in arr.shape) or "-"
        lines.append(f"tensor {name} {shape}")
        payload.append(np.ascontiguousarray(arr).tobytes())
    lines.append("end")
    body = ("\n".join(lines) + "\n").encode() + b"".join(payload)
    digest = hashlib.sha256(body).hexdigest()
    Path(path).write_bytes(f"{TENSOR_MAGIC}\nsha256 {digest}\n".encode() + body)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    path = str(path)
    data = Path(path).read_bytes()
    first, _, rest = data.partition(b"\n")
    if first.decode(errors="replace") != TENSOR_MAGIC:
        raise FormatError(f"expected header {TENSOR_MAGIC!r}", path, 1)
    second, _, body = rest.partition(b"\n")
    parts = second.decode(errors="replace").split()
    if len(parts) != 2 or parts[0] != "sha256":
        raise FormatError("expected 'sha256 <hex>' line", path, 2)
    if hashlib.sha256(body).hexdigest() != parts[1]:
        raise FormatError("checksum mismatch", path, 2)
    meta: dict = {}
    specs: list[tuple[str, tuple[int, ...]]] = []
    pos = 0
    lineno = 2
    while True:
        end = body.find(b"\n", pos)
        if end < 0:
            raise FormatError("header not terminated by 'end'", path, lineno + 1)
        line = body[pos:end].decode(errors="replace")
        pos = end + 1
        lineno += 1
        if line == "end":
            break
        if line.startswith("meta "):
            try:
                meta = json.loads(line[5:])
            except json.JSONDecodeError as exc:
                raise FormatError(f"bad metadata JSON: {exc.msg}", path, lineno) from exc
            continue
        fields = line.split()
        if len(fields) != 3 or fields[0] != "tensor":
            raise FormatError(f"malformed header line {line!r}", path, lineno)
        try:
            shape = () if fields[2] == "-" else tuple(int(d) for d in fields[2].split(","))
        except ValueError as exc:
            raise FormatError(f"bad shape {fields[2]!r}", path, lineno) from exc
        specs.append((fields[1], shape))
    tensors: dict[str, np.ndarray] = {}
    for name, shape in specs:
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        chunk = body[pos:pos + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"payload for {name!r} truncated", path)
        tensors[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        pos += nbytes
    if pos != len(body):
        raise FormatError("trailing bytes after last tensor", path)
    return tensors, meta


def params_on(tape: Tape, params: Mapping[str, np.ndarray], names: Iterable[str] | None = None):
    """Register arrays on ``tape``; names not in ``names`` become constants."""
    trainable = set(params) if names is None else set(names)
    return {k: tape.param(v) if k in trainable else Tensor(v) for k, v in params.items()}
