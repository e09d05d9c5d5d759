"""Training objective: tone-mapped L1 plus a perceptual feature term.

The feature extractor is a fixed, seeded stack of strided convolutions
standing in for a pretrained classifier. Its weights never change, but
gradients flow through it to the prediction.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import hdrmath
from .tensor import Conv2d, Gelu, Op, ShapeError

ALPHA = 0.01
PHI_CHANNELS = (8, 16, 32)


class MuLaw(Op):
    """Clamped mu-law tone curve as a differentiable op."""

    def __init__(self, mu: float = hdrmath.MU):
        self.mu = mu

    def forward(self, h):
        self._cache = h
        return hdrmath.mu_law(h, self.mu)

    def backward(self, grad):
        return grad * hdrmath.mu_law_grad(self._saved(), self.mu)


class FeatureExtractor:
    """Three stride-2 3x3 conv + GELU stages; each stage output is a tap."""

    def __init__(self, seed: int = 0, channels=PHI_CHANNELS, dtype=np.float32, weights=None):
        self.channels = tuple(channels)
        if weights is None:
            rng = np.random.default_rng(seed)
            weights, cin = {}, 3
            for j, cout in enumerate(self.channels):
                weights[f"phi.{j}.weight"] = rng.standard_normal((cout, cin, 3, 3)) / np.sqrt(cin * 9)
                weights[f"phi.{j}.bias"] = np.zeros(cout)
                cin = cout
        self.weights = {k: np.asarray(v, dtype=dtype) for k, v in weights.items()}

    @classmethod
    def load(cls, path, dtype=np.float32) -> "FeatureExtractor":
        """Build from a weight file in the checkpoint container format."""
        from .checkpoint import load_checkpoint
        _, weights = load_checkpoint(path)
        n = len([k for k in weights if k.endswith(".weight")])
        channels = [weights[f"phi.{j}.weight"].shape[0] for j in range(n)]
        return cls(channels=channels, dtype=dtype, weights=weights)

    def __call__(self, x):
        return self.forward(x)[0]

    def forward(self, x):
        """Returns (taps, ops) where ``ops`` feeds :meth:`backward`."""
        ops, taps = [], []
        for j in range(len(self.channels)):
            conv, act = Conv2d(pad=1, stride=2, tag="phi"), Gelu()
            x = act(conv(x, self.weights[f"phi.{j}.weight"], self.weights[f"phi.{j}.bias"]))
            ops.append((conv, act))
            taps.append(x)
        return taps, ops

    @staticmethod
    def backward(ops, dtaps):
        dx = None
        for (conv, act), dt in zip(reversed(ops), reversed(dtaps)):
            g = dt if dx is None else dx + dt
            dx = conv.backward(act.backward(g))[0]
        return dx


class LossTerms(NamedTuple):
    total: float
    l1: float
    lp: float
    grad: np.ndarray | None


def _check(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")


def l1_tonemapped(pred, gt, mu: float = hdrmath.MU) -> float:
    _check(pred, gt)
    return float(np.mean(np.abs(hdrmath.mu_law(pred, mu) - hdrmath.mu_law(gt, mu))))


def perceptual(pred, gt, phi: FeatureExtractor, mu: float = hdrmath.MU) -> float:
    _check(pred, gt)
    fp = phi(hdrmath.mu_law(pred, mu).astype(pred.dtype))
    fg = phi(hdrmath.mu_law(gt, mu).astype(pred.dtype))
    return float(sum(np.mean(np.abs(a - b)) for a, b in zip(fp, fg)))


def total_loss(pred, gt, phi: FeatureExtractor, alpha: float = ALPHA,
               mu: float = hdrmath.MU, with_grad: bool = False) -> LossTerms:
    """``L1(T(pred), T(gt)) + alpha * Lp``; optionally the gradient w.r.t. ``pred``."""
    _check(pred, gt)
    tm = MuLaw(mu)
    tp = tm(pred)
    tg = hdrmath.mu_law(gt, mu).astype(tp.dtype)
    diff = tp - tg
    l1 = float(np.mean(np.abs(diff)))
    lp = 0.0
    if alpha:
        fp, ops = phi.forward(tp)
        fg = phi(tg)
        lp = float(sum(np.mean(np.abs(a - b)) for a, b in zip(fp, fg)))
    total = l1 + alpha * lp
    if not with_grad:
        return LossTerms(total, l1, lp, None)
    dtp = np.sign(diff) / diff.size
    if alpha:
        dtaps = [alpha * np.sign(a - b) / a.size for a, b in zip(fp, fg)]
        dtp = dtp + phi.backward(ops, dtaps)
    return LossTerms(total, l1, lp, tm.backward(dtp).astype(pred.dtype))
