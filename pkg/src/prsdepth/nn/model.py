"""Toy-scale PRS network: windowing, strided encoder, shrinkage blocks, decoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import DetectorConfig, PhotonCube, Prediction
from ..loss_metrics import avg_variance, mean_bin, soft_argmax, softmax
from ..windowing import WindowConfig, temporal_window
from .layers import (
    Context, Conv3d, ConvTranspose3d, LayerSpec, Pointwise, PRSBlock, ReLU,
    Sequential, iter_layers,
)


@dataclass(frozen=True)
class PrsNetConfig:
    """Architecture hyper-parameters.

    Each of the ``encoder_stages`` halves the time axis and doubles the
    channel count, so the shrinkage blocks run on ``T_in / 2**D`` bins with
    ``base_channels * 2**D`` channels.
    """

    T_in: int = 64
    window: int = 5
    encoder_stages: int = 2
    base_channels: int = 8
    num_prs_blocks: int = 2
    input_scale: float = 1.0

    def __post_init__(self):
        WindowConfig(self.window)
        if self.encoder_stages < 0 or self.T_in % (2 ** self.encoder_stages):
            raise ValueError(f"T_in={self.T_in} must be divisible by 2**{self.encoder_stages}")
        if self.base_channels < 1 or self.num_prs_blocks < 0:
            raise ValueError("base_channels must be >= 1 and num_prs_blocks >= 0")

    @property
    def latent_T(self) -> int:
        return self.T_in // 2 ** self.encoder_stages

    @property
    def latent_channels(self) -> int:
        return self.base_channels * 2 ** self.encoder_stages

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PrsNetConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class ModelParams:
    """Trainable weights, batchnorm buffers and Adam moments, all keyed by name."""

    weights: dict
    buffers: dict
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def copy(self) -> "ModelParams":
        dup = lambda d: {k: a.copy() for k, a in d.items()}
        return ModelParams(dup(self.weights), dup(self.buffers), dup(self.m), dup(self.v), self.step)

    def check_finite(self):
        for k, a in self.weights.items():
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"parameter {k} is not finite")


def build_network(cfg: PrsNetConfig) -> Sequential:
    c = cfg.base_channels
    layers = [Conv3d("stem", LayerSpec("conv3d", 1, c, 3, 1, 1)), ReLU("stem.relu")]
    for s in range(cfg.encoder_stages):
        layers += [
            Conv3d(f"enc{s}.down", LayerSpec("conv3d", c, 2 * c, 3, (2, 1, 1), 1)),
            ReLU(f"enc{s}.relu1"),
            Conv3d(f"enc{s}.dilated", LayerSpec("conv3d", 2 * c, 2 * c, 3, 1, 2, 2)),
            ReLU(f"enc{s}.relu2"),
        ]
        c *= 2
    layers += [PRSBlock(f"prs{b}", c, cfg.latent_T) for b in range(cfg.num_prs_blocks)]
    for s in range(cfg.encoder_stages):
        layers += [
            ConvTranspose3d(f"dec{s}.up", LayerSpec("conv_transpose3d", c, c // 2, (6, 3, 3), (2, 1, 1), (2, 1, 1))),
        ]
        # no ReLU before the linear head: a dead last stage pins the output to uniform
        if s < cfg.encoder_stages - 1:
            layers.append(ReLU(f"dec{s}.relu"))
        c //= 2
    layers.append(Pointwise("head", c, 1))
    return Sequential("prsnet", layers)


class PrsNet:
    """Forward/backward driver around :func:`build_network`.

    Inputs are raw count cubes ``(B, M, N, T)`` (pixel-major); outputs are
    logits and distributions with time last, ``(B, M, N, T)``.
    """

    def __init__(self, cfg: PrsNetConfig):
        self.cfg = cfg
        self.net = build_network(cfg)

    def init_params(self, seed: int = 0) -> ModelParams:
        """Fan-in scaled uniform weights, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
        rng = np.random.default_rng(seed)
        weights, buffers = {}, {}
        for layer in iter_layers(self.net):
            for k, (shape, fan_in) in layer.param_specs().items():
                if fan_in is None:
                    weights[k] = np.ones(shape) if k.endswith("gamma") else np.zeros(shape)
                else:
                    bound = np.sqrt(1.0 / fan_in)
                    weights[k] = rng.uniform(-bound, bound, size=shape)
            for k, shape in layer.buffer_specs().items():
                buffers[k] = np.ones(shape) if k.endswith("var") else np.zeros(shape)
        return ModelParams(weights, buffers)

    def prepare(self, counts) -> np.ndarray:
        """Window raw counts and lay them out as ``(B, 1, T, M, N)``."""
        x = np.asarray(counts, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[-1] != self.cfg.T_in:
            raise ValueError(f"network expects {self.cfg.T_in} bins, got {x.shape[-1]}")
        x = temporal_window(x, WindowConfig(self.cfg.window)) * self.cfg.input_scale
        return np.ascontiguousarray(x.transpose(0, 3, 1, 2)[:, None])

    def forward(self, params: ModelParams, counts, train=False, kinks=None, update_buffers=True):
        """Returns ``(logits, cache)`` with logits shaped ``(B, M, N, T)``."""
        ctx = Context(train=train, buffers=params.buffers, kinks=kinks)
        x = self.prepare(counts)
        y, cache = self.net.forward(params.weights, x, ctx)
        if train and update_buffers:
            params.buffers.update(ctx.new_buffers)
        return np.ascontiguousarray(y[:, 0].transpose(0, 2, 3, 1)), cache

    def backward(self, params: ModelParams, cache, dlogits) -> dict:
        grads = {}
        dy = np.ascontiguousarray(dlogits.transpose(0, 3, 1, 2))[:, None]
        self.net.backward(params.weights, cache, dy, grads)
        return grads

    def predict_proba(self, params: ModelParams, counts) -> np.ndarray:
        logits, _ = self.forward(params, counts, train=False)
        return softmax(logits, axis=-1)


def prsnet_forward(cube: PhotonCube, cfg: PrsNetConfig, params: ModelParams,
                   det: DetectorConfig | None = None) -> Prediction:
    """Run the network on one cube in inference mode and decode depths."""
    det = det or cube.meta
    if cube.T != cfg.T_in:
        raise ValueError(f"cube has {cube.T} bins but the model expects {cfg.T_in}")
    p = PrsNet(cfg).predict_proba(params, cube.counts)[0]
    return Prediction(p_hat=p, z_hat=soft_argmax(p, det), k_bar=mean_bin(p), V=avg_variance(p))
