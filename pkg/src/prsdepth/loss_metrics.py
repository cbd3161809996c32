"""Labels, training losses, depth decoding and evaluation metrics.

Bin indices are 0-based internally.  Decoding follows the 1-based
expectation ``z = (delta * c / 2) * sum_k k * p_k`` with ``k = 1..T``, so a
one-hot label at internal bin ``y`` decodes to ``(y + 1)`` bin widths, i.e.
the far edge of the bin that contains the true depth.

Distributions are stored pixel-major with time last: ``p_hat[..., i, j, k]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import DepthImage, DetectorConfig, PulseModel, bin_depth_width

LOG_EPS = 1e-12
ACCURACY_DELTAS = (1.01, 1.02, 1.03)


@dataclass(frozen=True, eq=False)
class LabelCube:
    y: np.ndarray
    T: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int64)
        if np.any(y < 0) or np.any(y >= self.T):
            raise ValueError(f"labels must lie in [0, {self.T - 1}]")
        object.__setattr__(self, "y", y)

    @property
    def P(self) -> np.ndarray:
        """One-hot encoding with time last, shape ``y.shape + (T,)``."""
        return (self.y[..., None] == np.arange(self.T)).astype(np.float64)

    @classmethod
    def from_depth(cls, z, cfg: DetectorConfig) -> "LabelCube":
        return cls(depth_to_bin(z, cfg), cfg.T)


@dataclass(frozen=True)
class LossConfig:
    lambda_tv: float = 1e-6
    kind: str = "ce"

    def __post_init__(self):
        if self.lambda_tv < 0:
            raise ValueError("lambda_tv must be >= 0")
        if self.kind not in ("ce", "kl"):
            raise ValueError(f"loss kind must be 'ce' or 'kl', got {self.kind!r}")


def depth_to_bin(z, cfg: DetectorConfig):
    """Bin containing depth ``z``: ``floor(2z / (delta c))`` clamped to ``[0, T-1]``."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise ValueError("depth must be non-negative")
    y = np.floor(z / bin_depth_width(cfg)).astype(np.int64)
    y = np.clip(y, 0, cfg.T - 1)
    return y if y.ndim else int(y)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(p: np.ndarray, dp: np.ndarray, axis: int = -1) -> np.ndarray:
    return p * (dp - (dp * p).sum(axis=axis, keepdims=True))


def ce_loss(P, p_hat):
    """Pixel-averaged cross entropy and its gradient w.r.t. the logits.

    The logit gradient ``(p_hat - P) / n_pixels`` assumes ``p_hat`` is the
    softmax of those logits along the last axis.
    """
    P = np.asarray(P.P if isinstance(P, LabelCube) else P, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    if P.shape != p_hat.shape:
        raise ValueError(f"shape mismatch: {P.shape} vs {p_hat.shape}")
    n = p_hat[..., 0].size
    loss = -(P * np.log(np.maximum(p_hat, LOG_EPS))).sum() / n
    return float(loss), (p_hat - P) / n


def kl_loss(Q, p_hat):
    """Pixel-averaged ``KL(Q || p_hat)`` and its logit gradient.

    Used for the waveform-reconstruction ablation where ``Q`` is the
    normalized pulse shape at the true depth rather than a one-hot label.
    """
    Q = np.asarray(Q, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    n = p_hat[..., 0].size
    pos = Q > 0
    loss = (Q[pos] * (np.log(Q[pos]) - np.log(np.maximum(p_hat[pos], LOG_EPS)))).sum() / n
    return float(loss), (p_hat - Q) / n


def pulse_targets(z, cfg: DetectorConfig, pulse: PulseModel) -> np.ndarray:
    """Normalized discretized pulse centered on each true depth, time last."""
    from .simulator import _pulse_mass, depth_to_position

    q = _pulse_mass(depth_to_position(z, cfg), pulse.sigma / cfg.delta, cfg.T)
    return q / np.maximum(q.sum(axis=-1, keepdims=True), LOG_EPS)


def soft_argmax(p_hat, cfg: DetectorConfig):
    """Expected depth ``(delta c / 2) * sum_k (k + 1) p_k`` (1-based bins)."""
    p_hat = np.asarray(p_hat, dtype=np.float64)
    k = np.arange(1, p_hat.shape[-1] + 1, dtype=np.float64)
    z = bin_depth_width(cfg) * (p_hat @ k)
    return DepthImage(z) if z.ndim == 2 else z


def tv_loss(z_hat):
    """Anisotropic total variation over the last two axes and its subgradient.

    Pairs that would reach past the image border are skipped.  Leading axes
    (e.g. a batch) are summed.
    """
    z = np.asarray(z_hat.z if isinstance(z_hat, DepthImage) else z_hat, dtype=np.float64)
    dv = z[..., 1:, :] - z[..., :-1, :]
    dh = z[..., :, 1:] - z[..., :, :-1]
    loss = np.abs(dv).sum() + np.abs(dh).sum()
    g = np.zeros_like(z)
    sv, sh = np.sign(dv), np.sign(dh)
    g[..., 1:, :] += sv
    g[..., :-1, :] -= sv
    g[..., :, 1:] += sh
    g[..., :, :-1] -= sh
    return float(loss), g


def total_loss(target, p_hat, loss_cfg: LossConfig, cfg: DetectorConfig):
    """Mean classification loss plus ``lambda * TV(soft_argmax(p_hat))``.

    ``target`` is a one-hot label cube for ``kind='ce'`` or a pulse-shaped
    target for ``kind='kl'``.  With a leading batch axis the result is the
    batch mean of per-image losses.  Returns the loss and its gradient w.r.t.
    the pre-softmax logits.
    """
    p_hat = np.asarray(p_hat, dtype=np.float64)
    target = target.P if isinstance(target, LabelCube) else np.asarray(target)
    B = p_hat.shape[0] if p_hat.ndim == 4 else 1
    fit = ce_loss if loss_cfg.kind == "ce" else kl_loss
    loss, dlogits = fit(target, p_hat)
    if loss_cfg.lambda_tv > 0:
        w = bin_depth_width(cfg)
        k = np.arange(1, p_hat.shape[-1] + 1, dtype=np.float64)
        z = w * (p_hat @ k)
        tv, dz = tv_loss(z)
        loss += loss_cfg.lambda_tv * tv / B
        # d z / d logit_k = w * p_k * (k - kbar)
        kbar = (p_hat @ k)[..., None]
        dlogits = dlogits + (loss_cfg.lambda_tv / B) * dz[..., None] * w * p_hat * (k - kbar)
    return float(loss), dlogits


def _seq_sum(a) -> float:
    """Left-to-right sum in C order (no pairwise blocking)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    return float(np.cumsum(a)[-1]) if a.size else 0.0


def rmse(Z, Z_hat) -> float:
    Z = np.asarray(Z.z if isinstance(Z, DepthImage) else Z, dtype=np.float64)
    Z_hat = np.asarray(Z_hat.z if isinstance(Z_hat, DepthImage) else Z_hat, dtype=np.float64)
    if Z.shape != Z_hat.shape:
        raise ValueError(f"shape mismatch: {Z.shape} vs {Z_hat.shape}")
    d = Z - Z_hat
    return float(np.sqrt(_seq_sum(d * d) / d.size))


def accuracy_delta(Z, Z_hat, delta: float) -> float:
    """Fraction of pixels with ``max(z_hat / z, z / z_hat) < delta``."""
    Z = np.asarray(Z.z if isinstance(Z, DepthImage) else Z, dtype=np.float64)
    Z_hat = np.asarray(Z_hat.z if isinstance(Z_hat, DepthImage) else Z_hat, dtype=np.float64)
    if Z.shape != Z_hat.shape:
        raise ValueError(f"shape mismatch: {Z.shape} vs {Z_hat.shape}")
    if np.any(Z <= 0) or np.any(Z_hat <= 0):
        raise ValueError("accuracy requires strictly positive depths")
    ratio = np.maximum(Z_hat / Z, Z / Z_hat)
    return float(np.mean(ratio < delta))


def mean_bin(p_hat) -> np.ndarray:
    """Per-pixel 1-based mean bin ``sum_k k p_k``."""
    return kernels.pixel_moments(p_hat)[0]


def avg_variance(p_hat) -> float:
    """Pixel-averaged variance of the predicted distributions, in bins squared.

    All sums run sequentially (bins, then pixels in C order).
    """
    _, var = kernels.pixel_moments(p_hat)
    return _seq_sum(var) / var.size


def evaluate(Z, Z_hat, p_hat=None, deltas=ACCURACY_DELTAS) -> dict:
    out = {"rmse": rmse(Z, Z_hat)}
    for d in deltas:
        out[f"acc_{d:g}"] = accuracy_delta(Z, Z_hat, d)
    out["avg_var"] = avg_variance(p_hat) if p_hat is not None else float("nan")
    return out


def format_report(metrics: dict) -> str:
    """Flat ``key = value`` lines."""
    return "\n".join(f"{k} = {v:.6g}" for k, v in metrics.items())


def csv_header(deltas=ACCURACY_DELTAS) -> str:
    return ",".join(["rmse", *(f"acc_{d:g}" for d in deltas), "avg_var"])


def csv_row(metrics: dict) -> str:
    return ",".join(f"{v:.6g}" for v in metrics.values())
