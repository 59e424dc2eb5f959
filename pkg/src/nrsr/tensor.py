"""Dense-array compute core with reverse-mode differentiation.

Only the operations the reconstruction networks need are provided:
conv2d, deconv2d (stride = kernel), PReLU, channel concatenation,
elementwise add, scalar scaling, bias broadcast and MSE loss.
Activations and weights live in (batch, channels, height, width)
arrays of 32-bit floats; gradient checking runs the same ops in
64-bit, so every op computes in the dtype of its inputs.

Every op is a pure function of its inputs and safe to call from
multiple threads; a given Tensor's backward()/grad state must be
driven by one thread at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible."""


class UnsupportedConfigError(ValueError):
    """Raised for layer configurations outside the supported subset."""


class Tensor:
    """Array node of the computation graph.

    ``data`` is the value buffer, ``grad`` an optional same-shape
    gradient buffer filled by :meth:`backward`. Graph edges are kept in
    ``_parents`` together with a closure that routes the incoming
    gradient to them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeMismatchError(
                f"gradient shape {g.shape} does not match value shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Reverse-mode sweep from this node.

        ``seed`` defaults to ones (the usual scalar-loss case).
        Gradients accumulate into ``grad`` of every reachable tensor
        with ``requires_grad`` set.
        """
        if seed is None:
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.accumulate_grad(np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = parents
        out._backward = backward
    return out


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a (de)convolution layer; pad is symmetric zero padding."""

    kernel_h: int
    kernel_w: int
    stride_h: int = 1
    stride_w: int = 1
    pad: int = 0
    in_channels: int = 1
    out_channels: int = 1
    trainable: bool = True

    def __post_init__(self):
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ShapeMismatchError("kernel dims must be >= 1")
        if self.stride_h < 1 or self.stride_w < 1:
            raise ShapeMismatchError("strides must be >= 1")
        if self.pad < 0:
            raise ShapeMismatchError("pad must be >= 0")

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.pad - self.kernel_h) // self.stride_h + 1
        ow = (w + 2 * self.pad - self.kernel_w) // self.stride_w + 1
        return oh, ow


def _require_4d(t: Tensor, name: str) -> None:
    if t.data.ndim != 4:
        raise ShapeMismatchError(f"{name} must be 4-D (B,C,H,W), got shape {t.data.shape}")


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, oh: int, ow: int) -> np.ndarray:
    """(B,C,Hp,Wp) -> contiguous (B, C*kh*kw, oh*ow) patch matrix."""
    b, c = xp.shape[:2]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]  # (B, C, oh, ow, kh, kw)
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3))
    return cols.reshape(b, c * kh * kw, oh * ow)


def _col2im(dcols: np.ndarray, xp_shape, kh, kw, sh, sw, oh, ow) -> np.ndarray:
    """Scatter-add the patch-matrix gradient back onto the padded input."""
    b, c, hp, wp = xp_shape
    dxp = np.zeros(xp_shape, dtype=dcols.dtype)
    d6 = dcols.reshape(b, c, kh, kw, oh, ow)
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u : u + sh * oh : sh, v : v + sw * ow : sw] += d6[:, :, u, v]
    return dxp


def conv2d(x: Tensor, weights: Tensor, bias: Tensor | None, spec: ConvSpec) -> Tensor:
    """2-D cross-correlation with zero padding.

    ``weights`` has shape (out_channels, in_channels, kernel_h, kernel_w);
    output spatial size follows floor((in + 2*pad - kernel)/stride) + 1.
    Differentiable with respect to input, weights and bias.
    """
    _require_4d(x, "input")
    _require_4d(weights, "weights")
    wshape = (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
    if weights.shape != wshape:
        raise ShapeMismatchError(f"weights shape {weights.shape} != expected {wshape}")
    if x.shape[1] != spec.in_channels:
        raise ShapeMismatchError(f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeMismatchError(f"bias shape {bias.shape} != ({spec.out_channels},)")
    b, _, h, w = x.shape
    oh, ow = spec.out_size(h, w)
    if oh < 1 or ow < 1:
        raise ShapeMismatchError(f"kernel {spec.kernel_h}x{spec.kernel_w} exceeds padded input {h}x{w}")

    xp = _pad_hw(x.data, spec.pad)
    cols = _im2col(xp, spec.kernel_h, spec.kernel_w, spec.stride_h, spec.stride_w, oh, ow)
    wmat = weights.data.reshape(spec.out_channels, -1)
    out = np.matmul(wmat, cols)  # (B, O, oh*ow)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(b, spec.out_channels, oh, ow)

    xp_shape = xp.shape

    def bw(g: np.ndarray):
        gm = g.reshape(b, spec.out_channels, oh * ow)
        if weights.requires_grad or weights._parents:
            dw = np.tensordot(gm, cols, axes=([0, 2], [0, 2])).reshape(weights.shape)
            weights.accumulate_grad(dw)
        if bias is not None and (bias.requires_grad or bias._parents):
            bias.accumulate_grad(gm.sum(axis=(0, 2)))
        if x.requires_grad or x._parents:
            dcols = np.matmul(wmat.T, gm)
            dxp = _col2im(dcols, xp_shape, spec.kernel_h, spec.kernel_w,
                          spec.stride_h, spec.stride_w, oh, ow)
            p = spec.pad
            dx = dxp[:, :, p : p + h, p : p + w] if p else dxp
            x.accumulate_grad(dx)

    parents = (x, weights) if bias is None else (x, weights, bias)
    return _result(out, parents, bw)


def deconv2d(x: Tensor, weights: Tensor, bias: Tensor | None, spec: ConvSpec) -> Tensor:
    """Transposed convolution for the non-overlapping tiling case.

    Requires stride equal to kernel size: each input position paints one
    disjoint kernel-sized block of the output, so the output spatial size
    is exactly input size times stride. ``weights`` has shape
    (in_channels, out_channels, kernel_h, kernel_w).
    """
    _require_4d(x, "input")
    _require_4d(weights, "weights")
    if (spec.stride_h, spec.stride_w) != (spec.kernel_h, spec.kernel_w):
        raise UnsupportedConfigError(
            f"deconv2d supports stride == kernel only, got kernel "
            f"{spec.kernel_h}x{spec.kernel_w} stride {spec.stride_h}x{spec.stride_w}"
        )
    if spec.pad != 0:
        raise UnsupportedConfigError("deconv2d does not support padding")
    wshape = (spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w)
    if weights.shape != wshape:
        raise ShapeMismatchError(f"weights shape {weights.shape} != expected {wshape}")
    if x.shape[1] != spec.in_channels:
        raise ShapeMismatchError(f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeMismatchError(f"bias shape {bias.shape} != ({spec.out_channels},)")

    b, _, h, w = x.shape
    kh, kw = spec.kernel_h, spec.kernel_w
    # out[b,o,i*kh+u,j*kw+v] = sum_c x[b,c,i,j] * W[c,o,u,v]
    blocks = np.tensordot(x.data, weights.data, axes=(1, 0))  # (B,H,W,O,kh,kw)
    out = np.ascontiguousarray(blocks.transpose(0, 3, 1, 4, 2, 5)).reshape(
        b, spec.out_channels, h * kh, w * kw)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def bw(g: np.ndarray):
        g6 = g.reshape(b, spec.out_channels, h, kh, w, kw).transpose(0, 2, 4, 1, 3, 5)
        if weights.requires_grad or weights._parents:
            dw = np.tensordot(x.data, g6, axes=([0, 2, 3], [0, 1, 2]))
            weights.accumulate_grad(dw)
        if bias is not None and (bias.requires_grad or bias._parents):
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))
        if x.requires_grad or x._parents:
            dx = np.tensordot(g6, weights.data, axes=([3, 4, 5], [1, 2, 3]))
            x.accumulate_grad(dx.transpose(0, 3, 1, 2))

    parents = (x, weights) if bias is None else (x, weights, bias)
    return _result(out, parents, bw)


def prelu(x: Tensor, slopes: Tensor) -> Tensor:
    """PReLU with one trainable slope per channel.

    out = in where in >= 0, else slope[c] * in.
    """
    _require_4d(x, "input")
    if slopes.data.ndim != 1 or slopes.shape[0] != x.shape[1]:
        raise ShapeMismatchError(
            f"slopes shape {slopes.shape} must be ({x.shape[1]},) for {x.shape[1]} channels"
        )
    neg = x.data < 0
    a = slopes.data[None, :, None, None]
    out = np.where(neg, a * x.data, x.data)

    def bw(g: np.ndarray):
        if x.requires_grad or x._parents:
            x.accumulate_grad(np.where(neg, a * g, g))
        if slopes.requires_grad or slopes._parents:
            ds = np.where(neg, g * x.data, 0.0).sum(axis=(0, 2, 3))
            slopes.accumulate_grad(ds)

    return _result(out, (x, slopes), bw)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the channel axis, a's channels first."""
    _require_4d(a, "a")
    _require_4d(b, "b")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeMismatchError(f"batch/spatial dims differ: {a.shape} vs {b.shape}")
    na = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def bw(g: np.ndarray):
        if a.requires_grad or a._parents:
            a.accumulate_grad(g[:, :na])
        if b.requires_grad or b._parents:
            b.accumulate_grad(g[:, na:])

    return _result(out, (a, b), bw)


def take_channels(x: Tensor, indices) -> Tensor:
    """Select channels by index; gradient scatters back to the selected channels."""
    _require_4d(x, "input")
    idx = np.asarray(indices, dtype=np.intp)
    out = x.data[:, idx]

    def bw(g: np.ndarray):
        if x.requires_grad or x._parents:
            dx = np.zeros_like(x.data)
            np.add.at(dx, (slice(None), idx), g)
            x.accumulate_grad(dx)

    return _result(out, (x,), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of equal-shape tensors."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    out = a.data + b.data

    def bw(g: np.ndarray):
        if a.requires_grad or a._parents:
            a.accumulate_grad(g)
        if b.requires_grad or b._parents:
            b.accumulate_grad(g)

    return _result(out, (a, b), bw)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a constant scalar."""
    f = x.data.dtype.type(factor)
    out = x.data * f

    def bw(g: np.ndarray):
        if x.requires_grad or x._parents:
            x.accumulate_grad(g * f)

    return _result(out, (x,), bw)


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Broadcast a per-channel bias vector over batch and spatial dims."""
    _require_4d(x, "input")
    if bias.data.ndim != 1 or bias.shape[0] != x.shape[1]:
        raise ShapeMismatchError(f"bias shape {bias.shape} must be ({x.shape[1]},)")
    out = x.data + bias.data[None, :, None, None]

    def bw(g: np.ndarray):
        if x.requires_grad or x._parents:
            x.accumulate_grad(g)
        if bias.requires_grad or bias._parents:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))

    return _result(out, (x, bias), bw)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over all elements of the squared difference; shape (1,1,1,1)."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray(np.mean(diff * diff), dtype=pred.data.dtype).reshape(1, 1, 1, 1)

    def bw(g: np.ndarray):
        go = g.reshape(()) * 2.0 / n
        if pred.requires_grad or pred._parents:
            pred.accumulate_grad(go * diff)
        if target.requires_grad or target._parents:
            target.accumulate_grad(-go * diff)

    return _result(out, (pred, target), bw)
