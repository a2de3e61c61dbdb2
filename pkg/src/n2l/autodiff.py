"""Minimal reverse-mode autodiff over rank-4 float64 tensors.

Every value is a ``Tensor`` with shape (batch, channels, height, width).
Ops build an implicit tape: each result remembers its parents and a
vector-Jacobian closure. ``backward`` replays the tape in exact reverse
construction order, accumulating adjoints in scratch storage and adding
them into ``.grad`` of every tensor that requires gradients at the end,
so repeated backward calls without zeroing double the grads exactly.

No broadcasting: elementwise ops demand identical shapes so shape bugs
surface at the call site. All compute is float64.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import ndimage
from scipy.special import erf

from .errors import ContractViolation

_NODE_IDS = itertools.count()

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

LAYER_NORM_EPS = 1e-6


class Tensor:
    """Dense (B, C, H, W) float64 array with optional gradient."""

    def __init__(self, data, requires_grad=False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 4:
            raise ContractViolation(f"tensor must be rank 4, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        # Leaf params start at zero grad so disconnected params read as zero.
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._nid = next(_NODE_IDS)

    @property
    def shape(self):
        return self.data.shape

    @property
    def numel(self):
        return self.data.size

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def item(self):
        if self.data.size != 1:
            raise ContractViolation("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def backward(self):
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @staticmethod
    def zeros(shape, requires_grad=False):
        return Tensor(np.zeros(shape), requires_grad=requires_grad)


def _result(data, parents, vjp):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every requires-grad tensor reachable from ``loss``.

    ``loss`` must be a scalar (single element). Grads accumulate across
    calls; the caller zeroes between optimization steps.
    """
    if loss.numel != 1:
        raise ContractViolation(f"backward needs a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    # Reachable subgraph, then replay in reverse construction order.
    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._nid in nodes:
            continue
        nodes[t._nid] = t
        stack.extend(p for p in t._parents if p.requires_grad)

    adjoint: dict[int, np.ndarray] = {loss._nid: np.ones_like(loss.data)}
    for nid in sorted(nodes, reverse=True):
        t = nodes[nid]
        adj = adjoint.pop(nid, None)
        if adj is None:
            continue
        if t.grad is None:
            t.grad = adj  # exclusively owned once popped
        else:
            t.grad += adj
        if t._vjp is None:
            continue
        for parent, padj in zip(t._parents, t._vjp(adj)):
            if padj is None or not parent.requires_grad:
                continue
            if parent._nid in adjoint:
                adjoint[parent._nid] += padj
            elif padj is adj or padj.base is not None:
                # A vjp may hand the incoming adjoint (or views of it) to
                # several parents; stored entries must not alias each other.
                adjoint[parent._nid] = padj.copy()
            else:
                adjoint[parent._nid] = padj


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ContractViolation(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)
    return _result(out_data, (x,), lambda g: (g * out_data,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    mask = (x.data >= lo) & (x.data <= hi)
    return _result(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    out_data = np.exp(-x.data)
    out_data += 1.0
    np.reciprocal(out_data, out=out_data)
    return _result(out_data, (x,), lambda g: (g * out_data * (1.0 - out_data),))


def gelu(x: Tensor) -> Tensor:
    """Exact-erf GELU: x * Phi(x)."""
    cdf = x.data * _INV_SQRT2
    erf(cdf, out=cdf)
    cdf += 1.0
    cdf *= 0.5

    def vjp(g):
        pdf = x.data * x.data
        pdf *= -0.5
        np.exp(pdf, out=pdf)
        pdf *= _INV_SQRT_2PI
        pdf *= x.data
        pdf += cdf
        pdf *= g
        return (pdf,)

    return _result(x.data * cdf, (x,), vjp)


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean over all elements of (a - b)^2, as a (1,1,1,1) tensor."""
    _check_same_shape(a, b, "mse_loss")
    diff = a.data - b.data
    n = diff.size
    val = np.array(np.mean(diff * diff)).reshape(1, 1, 1, 1)

    def vjp(g):
        scale = 2.0 * float(g.reshape(())) / n
        return (scale * diff, -scale * diff)

    return _result(val, (a, b), vjp)


def concat_channels(inputs) -> Tensor:
    """Concatenate along the channel axis; batch/height/width must agree."""
    inputs = list(inputs)
    if not inputs:
        raise ContractViolation("concat_channels: empty input list")
    base = inputs[0].shape
    for t in inputs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (base[0], base[2], base[3]):
            raise ContractViolation(
                f"concat_channels: spatial mismatch {t.shape} vs {base}"
            )
    bounds = np.cumsum([0] + [t.shape[1] for t in inputs])

    def vjp(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(inputs)))

    return _result(np.concatenate([t.data for t in inputs], axis=1), inputs, vjp)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.shape[1]):
        raise ContractViolation(f"slice_channels: bad range [{start},{stop}) for {x.shape}")

    def vjp(g):
        gx = np.zeros(x.shape)
        gx[:, start:stop] = g
        return (gx,)

    return _result(x.data[:, start:stop].copy(), (x,), vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Normalize over the channel axis at each spatial position, then affine.

    gamma/beta are (1, C, 1, 1); epsilon is fixed at 1e-6.
    """
    c = x.shape[1]
    if gamma.shape != (1, c, 1, 1) or beta.shape != (1, c, 1, 1):
        raise ContractViolation(
            f"layer_norm: affine shape must be (1,{c},1,1), got {gamma.shape}/{beta.shape}"
        )
    mean = x.data.mean(axis=1, keepdims=True)
    norm = x.data - mean
    var = np.mean(norm * norm, axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    norm *= inv_std

    def vjp(g):
        gn = g * gamma.data
        gx = inv_std * (
            gn
            - gn.mean(axis=1, keepdims=True)
            - norm * (gn * norm).mean(axis=1, keepdims=True)
        )
        ggamma = (g * norm).sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
        gbeta = g.sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
        return (gx, ggamma, gbeta)

    return _result(norm * gamma.data + beta.data, (x, gamma, beta), vjp)


def _im2col(data, k):
    """Extract kxk patches after edge-replication padding: (B,C,k*k,H,W)."""
    b, c, h, w = data.shape
    if k == 1:
        return data.reshape(b, c, 1, h, w)
    pad = k // 2
    padded = np.pad(data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge")
    cols = np.empty((b, c, k * k, h, w))
    for i in range(k):
        for j in range(k):
            cols[:, :, i * k + j] = padded[:, :, i:i + h, j:j + w]
    return cols


def _fold_edges(gp, h, w, pad):
    """Collapse gradients on replication-padded pixels onto the border sources."""
    gx = gp[:, :, pad:pad + h, pad:pad + w].copy()
    gx[:, :, 0, :] += gp[:, :, :pad, pad:pad + w].sum(axis=2)
    gx[:, :, -1, :] += gp[:, :, pad + h:, pad:pad + w].sum(axis=2)
    gx[:, :, :, 0] += gp[:, :, pad:pad + h, :pad].sum(axis=3)
    gx[:, :, :, -1] += gp[:, :, pad:pad + h, pad + w:].sum(axis=3)
    gx[:, :, 0, 0] += gp[:, :, :pad, :pad].sum(axis=(2, 3))
    gx[:, :, 0, -1] += gp[:, :, :pad, pad + w:].sum(axis=(2, 3))
    gx[:, :, -1, 0] += gp[:, :, pad + h:, :pad].sum(axis=(2, 3))
    gx[:, :, -1, -1] += gp[:, :, pad + h:, pad + w:].sum(axis=(2, 3))
    return gx


def _col2im_edge(gcols, h, w, k):
    """Adjoint of _im2col: scatter patch grads, folding replicated edges back."""
    b, c = gcols.shape[:2]
    if k == 1:
        return gcols.reshape(b, c, h, w)
    pad = k // 2
    gp = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    for i in range(k):
        for j in range(k):
            gp[:, :, i:i + h, j:j + w] += gcols[:, :, i * k + j]
    return _fold_edges(gp, h, w, pad)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, groups: int = 1) -> Tensor:
    """2D convolution, stride 1, same-size output via edge-replication padding.

    weight is (out_ch, in_ch/groups, k, k) with odd k in {1, 3, 7};
    bias is (1, out_ch, 1, 1). Pointwise and depthwise layers take direct
    matmul/shift paths; everything else goes through im2col, recomputed
    during the backward pass instead of being stored.
    """
    b, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    if kh != kw or kh not in (1, 3, 7):
        raise ContractViolation(f"conv2d: kernel must be square with k in {{1,3,7}}, got {kh}x{kw}")
    if groups < 1 or cin % groups or cout % groups:
        raise ContractViolation(f"conv2d: groups={groups} must divide in={cin} and out={cout}")
    if cin_g != cin // groups:
        raise ContractViolation(
            f"conv2d: weight expects {cin_g} channels/group, input provides {cin // groups}"
        )
    if bias.shape != (1, cout, 1, 1):
        raise ContractViolation(f"conv2d: bias must be (1,{cout},1,1), got {bias.shape}")
    k = kh
    k2 = k * k
    og = cout // groups
    depthwise = groups == cin and og == 1

    if k == 1 and groups == 1:
        w2 = weight.data.reshape(cout, cin)
        out = np.matmul(w2, x.data.reshape(b, cin, h * w)).reshape(b, cout, h, w)
        out += bias.data

        def vjp_pointwise(g):
            g2 = g.reshape(b, cout, h * w)
            x2 = x.data.reshape(b, cin, h * w)
            gw = np.matmul(g2, x2.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
            gx = np.matmul(w2.T, g2).reshape(b, cin, h, w)
            return (gx, gw, g.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1))

        return _result(out, (x, weight, bias), vjp_pointwise)

    if depthwise:
        pad = k // 2
        padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge")
        taps = weight.data.reshape(cout, k, k)
        out = np.empty((b, cout, h, w))
        for bi in range(b):
            for ch in range(cout):
                ndimage.correlate(x.data[bi, ch], taps[ch], output=out[bi, ch], mode="nearest")
        out += bias.data

        def vjp_depthwise(g):
            gw = np.empty_like(weight.data)
            gp = np.zeros(padded.shape)
            for i in range(k):
                for j in range(k):
                    gw[:, 0, i, j] = np.einsum("bchw,bchw->c", g, padded[:, :, i:i + h, j:j + w])
                    gp[:, :, i:i + h, j:j + w] += taps[:, i, j].reshape(1, cout, 1, 1) * g
            gx = _fold_edges(gp, h, w, pad)
            return (gx, gw, g.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1))

        return _result(out, (x, weight, bias), vjp_depthwise)

    cols = _im2col(x.data, k)
    if groups == 1:
        mat = cols.reshape(b, cin * k2, h * w)
        out = (weight.data.reshape(cout, cin * k2) @ mat).reshape(b, cout, h, w)
    else:
        out = np.empty((b, cout, h, w))
        for g_idx in range(groups):
            mat = cols[:, g_idx * cin_g:(g_idx + 1) * cin_g].reshape(b, cin_g * k2, h * w)
            wg = weight.data[g_idx * og:(g_idx + 1) * og].reshape(og, cin_g * k2)
            out[:, g_idx * og:(g_idx + 1) * og] = (wg @ mat).reshape(b, og, h, w)
    out += bias.data
    del cols

    def vjp(g):
        cols = _im2col(x.data, k)
        gbias = g.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1)
        if groups == 1:
            mat = cols.reshape(b, cin * k2, h * w)
            g2 = g.reshape(b, cout, h * w)
            gw = np.matmul(g2, mat.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
            gcols = np.matmul(weight.data.reshape(cout, cin * k2).T, g2)
            gcols = gcols.reshape(b, cin, k2, h, w)
        else:
            gw = np.empty_like(weight.data)
            gcols = np.empty((b, cin, k2, h, w))
            for g_idx in range(groups):
                sl_in = slice(g_idx * cin_g, (g_idx + 1) * cin_g)
                sl_out = slice(g_idx * og, (g_idx + 1) * og)
                mat = cols[:, sl_in].reshape(b, cin_g * k2, h * w)
                g2 = g[:, sl_out].reshape(b, og, h * w)
                gw[sl_out] = (
                    np.matmul(g2, mat.transpose(0, 2, 1)).sum(axis=0).reshape(og, cin_g, k, k)
                )
                wg = weight.data[sl_out].reshape(og, cin_g * k2)
                gcols[:, sl_in] = np.matmul(wg.T, g2).reshape(b, cin_g, k2, h, w)
        gx = _col2im_edge(gcols, h, w, k)
        return (gx, gw, gbias)

    return _result(out, (x, weight, bias), vjp)


def _interp_matrix(n_in, n_out):
    """Half-pixel-center bilinear weights as an (n_out, n_in) matrix."""
    mat = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    i0 = np.floor(src).astype(int)
    t = src - i0
    lo = np.clip(i0, 0, n_in - 1)
    hi = np.clip(i0 + 1, 0, n_in - 1)
    rows = np.arange(n_out)
    np.add.at(mat, (rows, lo), 1.0 - t)
    np.add.at(mat, (rows, hi), t)
    return mat


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize to (out_h, out_w) >= input dims, edges clamped."""
    b, c, h, w = x.shape
    if out_h < h or out_w < w:
        raise ContractViolation(f"bilinear_upsample: target {out_h}x{out_w} below input {h}x{w}")
    if out_h <= 0 or out_w <= 0:
        raise ContractViolation("bilinear_upsample: zero-size output")
    wr = _interp_matrix(h, out_h)
    wc = _interp_matrix(w, out_w)
    # Separable: rows first, then columns.
    out = np.einsum("oi,bciw->bcow", wr, x.data)
    out = np.einsum("pj,bcoj->bcop", wc, out)

    def vjp(g):
        gx = np.einsum("pj,bcop->bcoj", wc, g)
        gx = np.einsum("oi,bcow->bciw", wr, gx)
        return (gx,)

    return _result(out, (x,), vjp)
