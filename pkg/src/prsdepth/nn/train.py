"""Training loop for the toy network on randomly cropped simulated cubes."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import DetectorConfig, PulseModel
from ..loss_metrics import LabelCube, LossConfig, pulse_targets, softmax, total_loss
from ..scenes import random_scene
from ..simulator import SbrTarget, calibrated_rates, sample_cube
from .model import ModelParams, PrsNet, PrsNetConfig
from .optim import AdamConfig, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    batch_size: int = 1
    patch: int = 16
    lr: float = 1e-3
    decay: float = 0.6
    decay_every: int = 5
    epoch_steps: int = 100
    lambda_tv: float = 1e-6
    loss: str = "ce"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class Sample:
    counts: np.ndarray  # (M, N, T)
    Z: np.ndarray  # (M, N)


@dataclass
class TrainResult:
    params: ModelParams
    losses: list = field(default_factory=list)


def make_dataset(n: int, M: int, N: int, det: DetectorConfig, pulse: PulseModel,
                 sbrs=("2:50",), seed: int = 0) -> list:
    """``n`` random synthetic scenes, each simulated at one of ``sbrs`` in turn."""
    rng = np.random.default_rng(seed)
    out = []
    for s in range(n):
        scene = random_scene(rng, M, N, det)
        target = SbrTarget.parse(sbrs[s % len(sbrs)]) if isinstance(sbrs[0], str) else sbrs[s % len(sbrs)]
        rates, _, _ = calibrated_rates(scene, det, pulse, target)
        cube = sample_cube(rates, seed=int(rng.integers(2**31)))
        out.append(Sample(np.asarray(cube.counts), np.asarray(scene.Z)))
    return out


def _targets(Z, det, pulse, kind):
    if kind == "ce":
        return LabelCube.from_depth(Z, det).P
    return pulse_targets(Z, det, pulse)


def _batch(rng, samples, tc: TrainConfig):
    counts, depths = [], []
    for _ in range(tc.batch_size):
        s = samples[int(rng.integers(len(samples)))]
        M, N = s.Z.shape
        p = min(tc.patch, M, N)
        i = int(rng.integers(M - p + 1))
        j = int(rng.integers(N - p + 1))
        counts.append(s.counts[i:i + p, j:j + p])
        depths.append(s.Z[i:i + p, j:j + p])
    return np.stack(counts), np.stack(depths)


def train(model_cfg: PrsNetConfig, tc: TrainConfig, samples: list, det: DetectorConfig,
          pulse: PulseModel | None = None, params: ModelParams | None = None,
          log_every: int = 0, callback=None) -> TrainResult:
    """Adam on the classification (or KL ablation) loss plus TV regularizer.

    Every random draw comes from one generator seeded by ``tc.seed`` and the
    parameter update order is fixed, so a run is bitwise reproducible.
    ``callback(step, loss)`` may return True to stop early.
    """
    pulse = pulse or PulseModel()
    net = PrsNet(model_cfg)
    params = params or net.init_params(tc.seed)
    rng = np.random.default_rng(tc.seed + 1)
    opt = AdamConfig(lr=tc.lr, decay=tc.decay, decay_every=tc.decay_every)
    loss_cfg = LossConfig(lambda_tv=tc.lambda_tv, kind=tc.loss)
    result = TrainResult(params)
    for step in range(tc.steps):
        counts, Z = _batch(rng, samples, tc)
        logits, cache = net.forward(params, counts, train=True)
        loss, dlogits = total_loss(_targets(Z, det, pulse, tc.loss), softmax(logits), loss_cfg, det)
        grads = net.backward(params, cache, dlogits)
        adam_step(params, grads, opt.lr_at(step // tc.epoch_steps))
        result.losses.append(loss)
        if log_every and step % log_every == 0:
            log.info("step %d loss %.5f", step, loss)
        if callback is not None and callback(step, loss):
            break
    params.check_finite()
    return result


def fixed_batch_loss(net: PrsNet, params: ModelParams, counts, Z, det, pulse=None, kind="ce"):
    """Pure classification loss (no TV) on a fixed batch, in training mode
    without touching the batchnorm buffers."""
    logits, _ = net.forward(params, counts, train=True, update_buffers=False)
    targets = _targets(Z, det, pulse or PulseModel(), kind)
    return total_loss(targets, softmax(logits), LossConfig(lambda_tv=0.0, kind=kind), det)[0]
