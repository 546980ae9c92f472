# Copyright 2024 DeepElastica Contributors

# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at

#      http://www.apache.org/licenses/LICENSE-2.0

# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Dense tensors with define-by-run reverse-mode automatic differentiation.

Every operation applied to a `Tensor` that requires a gradient records a
`TapeNode` on its result. `backward` materialises the recorded graph as a
`networkx.DiGraph` and visits it once in reverse topological order.
"""

from typing import Callable, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

DEFAULT_DTYPE = np.float32

Scalar = Union[int, float, np.floating]
Operand = Union["Tensor", Scalar]

_BINARY_OPS = ("add", "sub", "mul", "div")
_UNARY_OPS = ("sqrt", "square", "sigmoid", "leaky_relu")


class TapeNode:
    """The record left on a result tensor by the operation that produced it.

    Parameters
    ----------
    op : str
        Name of the operation
    inputs : tuple of Tensor
        The tensor operands of the operation (constants are not recorded)
    backward_fn : callable
        Maps the gradient of the result to a tuple with one gradient (or None) per input
    """
    __slots__ = ("op", "inputs", "backward_fn")

    def __init__(self, op: str, inputs: Tuple["Tensor", ...],
                 backward_fn: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn

    def __repr__(self) -> str:
        return "<TapeNode {} with {} input{}>".format(
            self.op, len(self.inputs), "s" if len(self.inputs) != 1 else "")


class Tensor:
    """
    A dense n-dimensional array of floats that can take part in the gradient tape.

    The value buffer is never modified after construction. Only `grad` changes, when
    `backward` accumulates into it.
    """

    __array_ufunc__ = None  # numpy operands defer to the Tensor operators

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        r"""Constructor for the Tensor class

        Parameters
        ----------
        data : array_like
            The values of the tensor
        requires_grad : bool, optional
            Whether gradients should be computed for this tensor, by default False
        dtype : numpy dtype, optional
            Either `numpy.float32` or `numpy.float64`. By default, floating point arrays keep
            their precision and everything else becomes `numpy.float32`

        Examples
        --------
        >>> from deepelastica.tensor import Tensor
        >>> x = Tensor([[1.0, 2.0], [3.0, 4.0]])
        >>> x
        <deepelastica.Tensor of shape (2, 2) and dtype float32>
        >>> x.size
        4
        """
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        dtype = np.dtype(dtype)
        if dtype not in (np.float32, np.float64):
            raise TypeError("Tensor dtype must be float32 or float64, not {}".format(dtype))
        self.data = np.array(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[TapeNode] = None
        self._backward_done = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        """A copy of the values as a numpy array"""
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ValueError("Only a tensor with one element can be converted to a float, "
                             "not a tensor of shape {}".format(self.shape))
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A tensor with the same values that is not connected to the tape"""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def sum(self) -> "Tensor":
        return sum_all(self)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: Operand) -> "Tensor":
        return elementwise("add", self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return elementwise("add", other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return elementwise("sub", self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return elementwise("sub", other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return elementwise("mul", self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return elementwise("mul", other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return elementwise("div", self, other)

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return elementwise("div", other, self)

    def __neg__(self) -> "Tensor":
        return elementwise("mul", self, -1.0)

    def __repr__(self) -> str:
        return "<deepelastica.Tensor of shape {} and dtype {}{}>".format(
            self.shape, self.dtype, ", requires_grad" if self.requires_grad else "")


def parameter(data, dtype=None) -> Tensor:
    """A leaf tensor that requires a gradient"""
    return Tensor(data, requires_grad=True, dtype=dtype)


def as_tensor(x, dtype=None) -> Tensor:
    """Return `x` unchanged if it is already a `Tensor`, otherwise wrap it as a constant"""
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _record(value: np.ndarray, op: str, inputs: Sequence[Tensor],
            backward_fn: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]) -> Tensor:
    out = Tensor(value, dtype=value.dtype)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = TapeNode(op, tuple(inputs), backward_fn)
    return out


def _reduce_to(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    # Only scalar-with-tensor broadcasting exists, so reducing means summing everything.
    if g.shape == shape:
        return g
    return np.asarray(np.sum(g), dtype=g.dtype).reshape(shape)


def elementwise(op: str, a: Operand, b: Optional[Operand] = None, *, alpha: float = 0.2) -> Tensor:
    """
    Apply an elementwise operation and register it on the tape.

    Parameters
    ----------
    op : str
        One of "add", "sub", "mul", "div" (binary) or "sqrt", "square", "sigmoid",
        "leaky_relu" (unary)
    a : Tensor or float
        First operand
    b : Tensor or float, optional
        Second operand of a binary operation. Operands must have equal shapes, or one of
        them must be a scalar
    alpha : float, optional
        Negative slope of "leaky_relu", by default 0.2

    Returns
    -------
    Tensor
        The result, attached to the tape if any operand requires a gradient

    Raises
    ------
    ValueError
        If the operation is unknown or the operand shapes are incompatible

    Examples
    --------
    >>> from deepelastica.tensor import Tensor, elementwise
    >>> elementwise("sqrt", Tensor([4.0])).numpy()
    array([2.], dtype=float32)
    >>> x = Tensor(0.0, requires_grad=True, dtype="float64")
    >>> y = elementwise("sigmoid", x)
    >>> y.backward()
    >>> float(x.grad)
    0.25
    """
    if op in _UNARY_OPS:
        if b is not None:
            raise ValueError("Operation '{}' takes one operand".format(op))
        return _unary(op, as_tensor(a), alpha)
    if op not in _BINARY_OPS:
        raise ValueError("Unknown elementwise operation '{}'. Expected one of {}".format(
            op, _BINARY_OPS + _UNARY_OPS))
    if b is None:
        raise ValueError("Operation '{}' takes two operands".format(op))
    return _binary(op, a, b)


def _binary(op: str, a: Operand, b: Operand) -> Tensor:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("At least one operand of '{}' must be a Tensor".format(op))
    dtype = np.result_type(*[t.dtype for t in (a, b) if isinstance(t, Tensor)])
    ta = a if isinstance(a, Tensor) else Tensor(np.asarray(a), dtype=dtype)
    tb = b if isinstance(b, Tensor) else Tensor(np.asarray(b), dtype=dtype)
    if ta.shape != tb.shape and ta.ndim != 0 and tb.ndim != 0:
        raise ValueError("Cannot apply '{}' to tensors of shapes {} and {}: shapes must be equal "
                         "or one operand must be a scalar".format(op, ta.shape, tb.shape))
    av, bv = ta.data, tb.data
    if op == "add":
        value = av + bv

        def backward_fn(g):
            return _reduce_to(g, av.shape), _reduce_to(g, bv.shape)
    elif op == "sub":
        value = av - bv

        def backward_fn(g):
            return _reduce_to(g, av.shape), _reduce_to(-g, bv.shape)
    elif op == "mul":
        value = av * bv

        def backward_fn(g):
            return _reduce_to(g * bv, av.shape), _reduce_to(g * av, bv.shape)
    else:
        value = av / bv

        def backward_fn(g):
            return _reduce_to(g / bv, av.shape), _reduce_to(-g * av / (bv * bv), bv.shape)
    return _record(np.asarray(value, dtype=dtype), op, (ta, tb), backward_fn)


def _unary(op: str, a: Tensor, alpha: float) -> Tensor:
    av = a.data
    if op == "sqrt":
        value = np.sqrt(av)

        def backward_fn(g):
            return (g * 0.5 / value,)
    elif op == "square":
        value = av * av

        def backward_fn(g):
            return (g * 2 * av,)
    elif op == "sigmoid":
        value = expit(av)

        def backward_fn(g):
            return (g * value * (1 - value),)
    else:
        value = np.where(av > 0, av, alpha * av).astype(av.dtype)

        def backward_fn(g):
            return (g * np.where(av > 0, 1, alpha).astype(av.dtype),)
    return _record(np.asarray(value, dtype=av.dtype), op, (a,), backward_fn)


def sqrt(x: Tensor) -> Tensor:
    return elementwise("sqrt", x)


def square(x: Tensor) -> Tensor:
    return elementwise("square", x)


def sigmoid(x: Tensor) -> Tensor:
    return elementwise("sigmoid", x)


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    return elementwise("leaky_relu", x, alpha=alpha)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements, as a 0-d tensor"""
    shape = x.shape
    value = np.asarray(np.sum(x.data), dtype=x.dtype)

    def backward_fn(g):
        return (np.full(shape, g, dtype=x.dtype),)
    return _record(value, "sum", (x,), backward_fn)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = shape[0]
    old_shape = x.shape
    value = x.data.reshape(tuple(shape))

    def backward_fn(g):
        return (g.reshape(old_shape),)
    return _record(value, "reshape", (x,), backward_fn)


def _fold_reflect(g: np.ndarray, pad: int, n: int, axis: int) -> np.ndarray:
    # Adjoint of np.pad(..., mode="reflect") along one axis.
    if pad == 0:
        return g
    g = np.moveaxis(g, axis, 0)
    out = g[pad:pad + n].copy()
    for t in range(pad):
        out[t + 1] += g[pad - 1 - t]
        out[n - 2 - t] += g[pad + n + t]
    return np.moveaxis(out, 0, axis)


def conv2d(x: Tensor, k: Tensor, bias: Optional[Tensor] = None, *, stride: int = 1,
           dilation: int = 1, boundary: str = "mirror") -> Tensor:
    """
    Two-dimensional cross-correlation of a multi-channel image with a kernel bank.

    The image is extended at its borders by mirroring without repeating the border pixel
    (the discrete analogue of homogeneous Neumann boundary conditions).

    Parameters
    ----------
    x : Tensor
        Input of shape `(C_in, H, W)`
    k : Tensor
        Kernels of shape `(C_out, C_in, kh, kw)` with odd `kh` and `kw`
    bias : Tensor, optional
        Per-output-channel offsets of shape `(C_out,)`, by default None
    stride : int, optional
        1 or 2. With stride 2 the output has `ceil(H/2) x ceil(W/2)` pixels. By default 1
    dilation : int, optional
        Spacing between kernel taps, by default 1
    boundary : str, optional
        Boundary extension. Only "mirror" is available

    Returns
    -------
    Tensor
        Output of shape `(C_out, ceil(H/stride), ceil(W/stride))`

    Raises
    ------
    ValueError
        If the channel counts of `x` and `k` differ, the kernel is not odd-sized, the
        stride or dilation is invalid, or the image is too small for the mirror extension

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.tensor import Tensor, conv2d
    >>> x = Tensor(np.full((1, 4, 4), 0.3))
    >>> box = Tensor(np.full((1, 1, 3, 3), 1 / 9))
    >>> np.allclose(conv2d(x, box).numpy(), 0.3)
    True
    """
    if boundary != "mirror":
        raise ValueError("Unsupported boundary '{}'. Only 'mirror' is available".format(boundary))
    if x.ndim != 3 or k.ndim != 4:
        raise ValueError("conv2d expects an input of shape (C_in, H, W) and kernels of shape "
                         "(C_out, C_in, kh, kw), got {} and {}".format(x.shape, k.shape))
    c_in, height, width = x.shape
    c_out, k_in, kh, kw = k.shape
    if k_in != c_in:
        raise ValueError("Channel mismatch: input has {} channels but the kernels expect {} "
                         "(input shape {}, kernel shape {})".format(c_in, k_in, x.shape, k.shape))
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("Kernel sizes must be odd, not {}x{}".format(kh, kw))
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2, not {}".format(stride))
    if dilation < 1:
        raise ValueError("dilation must be at least 1, not {}".format(dilation))
    if bias is not None and bias.shape != (c_out,):
        raise ValueError("bias must have shape ({},), not {}".format(c_out, bias.shape))
    ph, pw = dilation * (kh // 2), dilation * (kw // 2)
    if (ph and ph >= height) or (pw and pw >= width):
        raise ValueError("An image of size {}x{} is too small for the mirror extension of a "
                         "{}x{} kernel with dilation {}".format(height, width, kh, kw, dilation))

    dtype = np.result_type(x.dtype, k.dtype)
    xv = x.data.astype(dtype, copy=False)
    kv = k.data.astype(dtype, copy=False)
    xp = np.pad(xv, ((0, 0), (ph, ph), (pw, pw)), mode="reflect")
    windows = sliding_window_view(xp, (dilation * (kh - 1) + 1, dilation * (kw - 1) + 1), axis=(1, 2))
    windows = windows[:, ::stride, ::stride, ::dilation, ::dilation]
    out_h, out_w = windows.shape[1], windows.shape[2]
    value = np.tensordot(windows, kv, axes=([0, 3, 4], [1, 2, 3])).transpose(2, 0, 1)
    if bias is not None:
        value = value + bias.data.astype(dtype, copy=False)[:, None, None]
    value = np.ascontiguousarray(value, dtype=dtype)

    def backward_fn(g):
        gx = gk = gb = None
        if x.requires_grad:
            gp = np.zeros(xp.shape, dtype=dtype)
            for i in range(kh):
                for j in range(kw):
                    r0, c0 = i * dilation, j * dilation
                    gp[:, r0:r0 + stride * (out_h - 1) + 1:stride,
                       c0:c0 + stride * (out_w - 1) + 1:stride] += np.tensordot(kv[:, :, i, j], g, axes=([0], [0]))
            gx = _fold_reflect(_fold_reflect(gp, ph, height, axis=1), pw, width, axis=2)
        if k.requires_grad:
            gk = np.tensordot(g, windows, axes=([1, 2], [1, 2]))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(1, 2))
        return (gx, gk) if bias is None else (gx, gk, gb)

    inputs = (x, k) if bias is None else (x, k, bias)
    return _record(value, "conv2d", inputs, backward_fn)


def resample(x: Tensor, direction: str) -> Tensor:
    """
    Halve or double the spatial resolution of a `(C, H, W)` tensor.

    "down2" has no kernel: it keeps every second pixel, giving `ceil(H/2) x ceil(W/2)`
    pixels, which equals a stride-2 `conv2d` with a 1x1 identity kernel. The networks do
    not use it; their encoders downsample with learned stride-2 convolutions. "up2"
    replicates every pixel into a 2x2 block (nearest neighbour) and is followed by a
    learned convolution in the decoder.

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.tensor import Tensor, resample
    >>> resample(Tensor(np.ones((1, 1, 1), dtype=np.float32)), "up2").numpy()[0]
    array([[1., 1.],
           [1., 1.]], dtype=float32)
    """
    if x.ndim != 3:
        raise ValueError("resample expects a tensor of shape (C, H, W), not {}".format(x.shape))
    channels, height, width = x.shape
    if direction == "down2":
        if height < 2 or width < 2:
            raise ValueError("Cannot downsample a {}x{} image".format(height, width))
        value = np.ascontiguousarray(x.data[:, ::2, ::2])

        def backward_fn(g):
            gx = np.zeros(x.shape, dtype=g.dtype)
            gx[:, ::2, ::2] = g
            return (gx,)
    elif direction == "up2":
        value = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

        def backward_fn(g):
            return (g.reshape(channels, height, 2, width, 2).sum(axis=(2, 4)),)
    else:
        raise ValueError("direction must be 'down2' or 'up2', not '{}'".format(direction))
    return _record(value, "resample_" + direction, (x,), backward_fn)


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two `(C, H, W)` tensors along the channel axis"""
    if a.ndim != 3 or b.ndim != 3 or a.shape[1:] != b.shape[1:]:
        raise ValueError("Cannot concatenate tensors of shapes {} and {}: spatial dimensions "
                         "must be equal".format(a.shape, b.shape))
    split = a.shape[0]
    value = np.concatenate([a.data, b.data.astype(a.dtype, copy=False)], axis=0)

    def backward_fn(g):
        return g[:split], g[split:]
    return _record(value, "concat", (a, b), backward_fn)


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    """Channels `start:stop` of a `(C, H, W)` tensor"""
    if x.ndim != 3 or not 0 <= start < stop <= x.shape[0]:
        raise ValueError("Invalid channel range {}:{} for a tensor of shape {}".format(start, stop, x.shape))
    value = x.data[start:stop].copy()

    def backward_fn(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[start:stop] = g
        return (gx,)
    return _record(value, "channel_slice", (x,), backward_fn)


def crop(x: Tensor, height: int, width: int) -> Tensor:
    """The top-left `height x width` window of a `(C, H, W)` tensor"""
    if x.ndim != 3 or height > x.shape[1] or width > x.shape[2]:
        raise ValueError("Cannot crop a tensor of shape {} to {}x{}".format(x.shape, height, width))
    if (height, width) == x.shape[1:]:
        return x
    value = x.data[:, :height, :width].copy()

    def backward_fn(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[:, :height, :width] = g
        return (gx,)
    return _record(value, "crop", (x,), backward_fn)


def _tape_graph(root: Tensor) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_node(root)
    stack = [root]
    while stack:
        t = stack.pop()
        if t._node is None:
            continue
        for parent in t._node.inputs:
            if not parent.requires_grad:
                continue
            if parent not in graph:
                graph.add_node(parent)
                stack.append(parent)
            graph.add_edge(parent, t)
    return graph


def backward(loss: Tensor) -> None:
    """
    Backpropagate from a scalar loss.

    Every tensor on the tape below `loss` that requires a gradient has `grad` set to (or,
    if it already holds a gradient, incremented by) the derivative of `loss` with respect
    to it.

    Parameters
    ----------
    loss : Tensor
        A tensor with exactly one element that was produced on the tape

    Raises
    ------
    ValueError
        If `loss` has more than one element
    RuntimeError
        If `loss` does not require a gradient, or `backward` was already called on it
        and `zero_grad` has not been called since

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.tensor import parameter
    >>> x = parameter(np.array([1.0, -2.0, 3.0]))
    >>> (x * x).sum().backward()
    >>> x.grad
    array([ 2., -4.,  6.])
    """
    if loss.size != 1:
        raise ValueError("backward() needs a scalar loss, not a tensor of shape {}".format(loss.shape))
    if not loss.requires_grad:
        raise RuntimeError("The loss is detached from the tape: none of its inputs requires a gradient")
    if loss._backward_done:
        raise RuntimeError("backward() was already called on this loss. Call zero_grad(loss) "
                           "before backpropagating through it again")
    graph = _tape_graph(loss)
    if not nx.is_directed_acyclic_graph(graph):
        raise RuntimeError("The tape contains a cycle")
    grads = {loss: np.ones(loss.shape, dtype=loss.dtype)}
    for t in reversed(list(nx.topological_sort(graph))):
        g = grads.pop(t, None)
        if g is None:
            continue
        t.grad = g.copy() if t.grad is None else t.grad + g
        if t._node is None:
            continue
        for parent, pg in zip(t._node.inputs, t._node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=parent.dtype)
            grads[parent] = pg if parent not in grads else grads[parent] + pg
    loss._backward_done = True


def zero_grad(root: Tensor) -> None:
    """Clear the gradients of every tensor on the tape below `root` and allow a new backward pass"""
    for t in _tape_graph(root).nodes:
        t.grad = None
    root._backward_done = False
