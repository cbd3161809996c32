"""Layer objects wrapping the functional kernels with named parameters.

A layer never owns its arrays.  Parameters live in a flat ``dict`` keyed by
``"<layer name>.<param>"`` so the optimizer, checkpoint writer and gradient
checker can treat the whole model as one vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from . import functional as F

KINDS = (
    "conv3d", "conv_transpose3d", "conv2d_1x1", "batchnorm", "sigmoid", "relu",
    "softmax_time", "reshape", "soft_shrinkage",
)


def _triple(v):
    return (v, v, v) if np.isscalar(v) else tuple(int(a) for a in v)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 1
    out_channels: int = 1
    kernel: tuple = (1, 1, 1)
    stride: tuple = (1, 1, 1)
    padding: tuple = (0, 0, 0)
    dilation: tuple = (1, 1, 1)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        for f in ("kernel", "stride", "padding", "dilation"):
            object.__setattr__(self, f, _triple(getattr(self, f)))

    def output_dims(self, dims):
        """Output ``(T, H, W)`` for input ``dims``; raises if any is not positive."""
        if self.kind == "conv3d":
            out = tuple(map(F.conv_out_len, dims, self.kernel, self.stride, self.padding, self.dilation))
        elif self.kind == "conv_transpose3d":
            out = tuple(map(F.conv_transpose_out_len, dims, self.kernel, self.stride, self.padding,
                            self.dilation))
        else:
            out = tuple(dims)
        if min(out) < 1:
            raise ValueError(f"{self.kind} with {self} maps {dims} to non-positive dims {out}")
        return out


@dataclass
class Context:
    """Per-call state: mode, batchnorm buffers, and optional kink recording."""

    train: bool = True
    buffers: dict = field(default_factory=dict)
    new_buffers: dict = field(default_factory=dict)
    kinks: list | None = None

    def record(self, mask):
        if self.kinks is not None:
            self.kinks.append(np.packbits(mask))


class Layer:
    def __init__(self, name):
        self.name = name

    def key(self, p):
        return f"{self.name}.{p}"

    def param_specs(self):
        """``{key: (shape, fan_in)}`` of trainable arrays."""
        return {}

    def buffer_specs(self):
        return {}

    def children(self):
        return []


class Conv3d(Layer):
    def __init__(self, name, spec: LayerSpec):
        super().__init__(name)
        if spec.kind != "conv3d":
            raise ValueError("Conv3d needs a conv3d spec")
        self.spec = spec

    def param_specs(self):
        s = self.spec
        fan_in = s.in_channels * int(np.prod(s.kernel))
        return {
            self.key("W"): ((s.out_channels, s.in_channels) + s.kernel, fan_in),
            self.key("b"): ((s.out_channels,), fan_in),
        }

    def forward(self, params, x, ctx):
        s = self.spec
        return F.conv3d_forward(x, params[self.key("W")], params[self.key("b")],
                                s.stride, s.padding, s.dilation)

    def backward(self, params, cache, dy, grads):
        dx, dW, db = F.conv3d_backward(cache, dy)
        grads[self.key("W")] = dW
        grads[self.key("b")] = db
        return dx


class ConvTranspose3d(Conv3d):
    def __init__(self, name, spec: LayerSpec):
        Layer.__init__(self, name)
        if spec.kind != "conv_transpose3d":
            raise ValueError("ConvTranspose3d needs a conv_transpose3d spec")
        self.spec = spec

    def param_specs(self):
        s = self.spec
        # Each output voxel sees in_channels * prod(kernel / stride) inputs.
        fan_in = max(1, s.in_channels * int(np.prod(s.kernel)) // int(np.prod(s.stride)))
        return {
            self.key("W"): ((s.in_channels, s.out_channels) + s.kernel, fan_in),
            self.key("b"): ((s.out_channels,), fan_in),
        }

    def forward(self, params, x, ctx):
        s = self.spec
        return F.conv_transpose3d_forward(x, params[self.key("W")], params[self.key("b")],
                                          s.stride, s.padding, s.dilation)

    def backward(self, params, cache, dy, grads):
        dx, dW, db = F.conv_transpose3d_backward(cache, dy)
        grads[self.key("W")] = dW
        grads[self.key("b")] = db
        return dx


class Pointwise(Layer):
    """1x1 (or 1x1x1) convolution acting on axis 1."""

    def __init__(self, name, cin, cout):
        super().__init__(name)
        self.cin, self.cout = cin, cout

    def param_specs(self):
        return {self.key("W"): ((self.cout, self.cin), self.cin),
                self.key("b"): ((self.cout,), self.cin)}

    def forward(self, params, x, ctx):
        if x.shape[1] != self.cin:
            raise ValueError(f"{self.name}: expected {self.cin} channels, got {x.shape[1]}")
        return F.pointwise_forward(x, params[self.key("W")], params[self.key("b")])

    def backward(self, params, cache, dy, grads):
        dx, dW, db = F.pointwise_backward(cache, dy)
        grads[self.key("W")] = dW
        grads[self.key("b")] = db
        return dx


class BatchNorm(Layer):
    def __init__(self, name, channels):
        super().__init__(name)
        self.channels = channels

    def param_specs(self):
        return {self.key("gamma"): ((self.channels,), None), self.key("beta"): ((self.channels,), None)}

    def buffer_specs(self):
        return {self.key("running_mean"): (self.channels,), self.key("running_var"): (self.channels,)}

    def forward(self, params, x, ctx):
        y, cache = F.batchnorm_forward(
            x, params[self.key("gamma")], params[self.key("beta")],
            ctx.buffers[self.key("running_mean")], ctx.buffers[self.key("running_var")],
            train=ctx.train,
        )
        if cache[-1] is not None:
            ctx.new_buffers[self.key("running_mean")], ctx.new_buffers[self.key("running_var")] = cache[-1]
        return y, cache

    def backward(self, params, cache, dy, grads):
        dx, dg, db = F.batchnorm_backward(cache, dy)
        grads[self.key("gamma")] = dg
        grads[self.key("beta")] = db
        return dx


class ReLU(Layer):
    def forward(self, params, x, ctx):
        y, mask = F.relu_forward(x)
        ctx.record(mask)
        return y, mask

    def backward(self, params, cache, dy, grads):
        return F.relu_backward(cache, dy)


class Sigmoid(Layer):
    def forward(self, params, x, ctx):
        y = F.sigmoid_forward(x)
        return y, y

    def backward(self, params, cache, dy, grads):
        return F.sigmoid_backward(cache, dy)


class Sequential(Layer):
    def __init__(self, name, layers):
        super().__init__(name)
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, params, x, ctx):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(params, x, ctx)
            caches.append(c)
        return x, caches

    def backward(self, params, cache, dy, grads):
        for layer, c in zip(reversed(self.layers), reversed(cache)):
            dy = layer.backward(params, c, dy, grads)
        return dy


class PRSBlock(Layer):
    """Residual block with pixel-wise soft-threshold shrinkage.

    Two 3x3x3 convolutions produce a residual ``Xr`` that is reshaped to
    ``(B*C, T, M, N)``.  One branch maps ``Xr`` through batch normalization
    (time as channels), three 1x1 convolutions and a sigmoid to a scaling map
    ``S``; the other averages ``|Xr|`` over time.  Their product is the
    per-pixel threshold used to shrink ``Xr`` before it is added back to the
    block input.
    """

    def __init__(self, name, channels, T):
        super().__init__(name)
        self.C, self.T = channels, T
        conv = LayerSpec("conv3d", channels, channels, 3, 1, 1)
        self.residual = Sequential(f"{name}.res", [
            Conv3d(f"{name}.conv1", conv), ReLU(f"{name}.relu1"), Conv3d(f"{name}.conv2", conv),
        ])
        self.scaling = Sequential(f"{name}.scale", [
            BatchNorm(f"{name}.bn", T),
            Pointwise(f"{name}.fc1", T, T), ReLU(f"{name}.relu2"),
            Pointwise(f"{name}.fc2", T, T), ReLU(f"{name}.relu3"),
            Pointwise(f"{name}.fc3", T, 1), Sigmoid(f"{name}.sigmoid"),
        ])

    def children(self):
        return [self.residual, self.scaling]

    def forward(self, params, x, ctx):
        B, C, T, M, N = x.shape
        if (C, T) != (self.C, self.T):
            raise ValueError(f"{self.name}: expected (C, T)=({self.C}, {self.T}), got ({C}, {T})")
        r5, rcache = self.residual.forward(params, x, ctx)
        Xr = r5.reshape(B * C, T, M, N)
        S, scache = self.scaling.forward(params, Xr, ctx)
        S = S[:, 0]
        A = np.abs(Xr).mean(axis=1)
        tau = S * A
        xr_last = np.ascontiguousarray(Xr.transpose(0, 2, 3, 1))
        xd_last = kernels.soft_threshold(xr_last, tau)
        ctx.record(np.abs(xr_last) > tau[..., None])
        ctx.record(xr_last > 0)
        Xd = xd_last.transpose(0, 3, 1, 2).reshape(B, C, T, M, N)
        return x + Xd, (rcache, scache, Xr, xr_last, S, A, tau)

    def backward(self, params, cache, dy, grads):
        rcache, scache, Xr, xr_last, S, A, tau = cache
        B, C, T, M, N = dy.shape
        dxd_last = np.ascontiguousarray(dy.reshape(B * C, T, M, N).transpose(0, 2, 3, 1))
        dxr_last, dtau = kernels.soft_threshold_grad(xr_last, tau, dxd_last)
        dS = dtau * A
        dA = dtau * S
        dxr_last = dxr_last + np.sign(xr_last) * (dA / T)[..., None]
        dXr = dxr_last.transpose(0, 3, 1, 2)
        dXr = dXr + self.scaling.backward(params, scache, dS[:, None], grads)
        dx_res = self.residual.backward(params, rcache, dXr.reshape(B, C, T, M, N), grads)
        return dy + dx_res


def iter_layers(layer):
    yield layer
    for child in layer.children():
        yield from iter_layers(child)
