"""Adam optimization over patch crops of the training scenes."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import DataError, Sample
from .hdrmath import LdrBracket, LdrImage
from .loss import ALPHA, FeatureExtractor, total_loss
from .model import ModelConfig, SCTNet, init_weights, make_input

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patch: int = 128
    stride: int = 64
    steps: int = 1000
    batch: int = 1
    seed: int = 0
    augment_flip: bool = True
    augment_rotate: bool = True
    alpha: float = ALPHA
    phi_seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.stride < 1 or self.patch < 1 or self.batch < 1 or self.steps < 0:
            raise ValueError(f"invalid training config {self}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        kinds = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(kinds)
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        out = {}
        for k, v in d.items():
            default = getattr(cls, k)
            if isinstance(default, bool):
                out[k] = v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes")
            else:
                out[k] = type(default)(v)
        return cls(**out)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with bias correction; moment buffers keyed like the weights."""

    def __init__(self, weights: dict, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in weights.items()}
        self.t = 0

    def step(self, weights: dict, grads: dict) -> None:
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {k!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, w in weights.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            w -= (self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(w.dtype)


# --------------------------------------------------------------------------
# patches and augmentation


@dataclass
class Patch:
    sample: Sample
    y: int
    x: int
    padded: bool = False


def _axis_starts(n, patch, stride):
    starts = list(range(0, n - patch + 1, stride))
    if starts[-1] + patch < n:
        starts.append(n - patch)
    return starts


def _map_sample(sample: Sample, fn) -> Sample:
    imgs = tuple(LdrImage(fn(im.pixels), im.exposure_time, im.ev) for im in sample.bracket.images)
    return Sample(sample.id, LdrBracket(imgs), fn(sample.gt), sample.manifest)


def make_patches(sample: Sample, patch: int = 128, stride: int = 64) -> list[Patch]:
    """Regular crop grid; the last row and column are pinned to the image edge.

    Images smaller than ``patch`` give one edge-padded, centred patch flagged
    ``padded``.
    """
    _, h, w = sample.gt.shape
    if h < patch or w < patch:
        ph, pw = max(patch - h, 0), max(patch - w, 0)
        pads = ((0, 0), (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2))
        log.warning("%s: %dx%d image smaller than patch %d; padding", sample.id, h, w, patch)
        return [Patch(_map_sample(sample, lambda a: np.pad(a, pads, mode="edge")), 0, 0, True)]
    out = []
    for y in _axis_starts(h, patch, stride):
        for x in _axis_starts(w, patch, stride):
            crop = lambda a, y=y, x=x: a[:, y:y + patch, x:x + patch].copy()
            out.append(Patch(_map_sample(sample, crop), y, x))
    return out


def dihedral(a: np.ndarray, k: int) -> np.ndarray:
    """Element ``k`` (0..7) of the square's symmetry group on the last two axes.

    ``k % 4`` quarter turns, followed by a horizontal flip when ``k >= 4``.
    """
    out = np.rot90(a, k % 4, axes=(-2, -1))
    if k >= 4:
        out = out[..., ::-1]
    return np.ascontiguousarray(out)


def compose(a: int, b: int) -> int:
    """Index of the transform ``dihedral(dihedral(x, b), a)``."""
    probe = np.arange(4).reshape(2, 2)
    target = dihedral(dihedral(probe, b), a)
    for k in range(8):
        if np.array_equal(dihedral(probe, k), target):
            return k
    raise AssertionError("dihedral group not closed")


def choose_transform(rng: np.random.Generator, flip=True, rotate=True) -> int:
    choices = [k for k in range(8) if (rotate or k % 4 == 0) and (flip or k < 4)]
    return int(choices[rng.integers(len(choices))])


def augment(sample: Sample, seed_or_rng, flip=True, rotate=True) -> tuple[Sample, int]:
    """Apply one seeded dihedral transform to every exposure and the target."""
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) \
        else np.random.default_rng(seed_or_rng)
    k = choose_transform(rng, flip, rotate)
    if sample.gt.shape[-1] != sample.gt.shape[-2] and k % 2:
        raise ValueError("quarter turns need square patches")
    return _map_sample(sample, lambda a: dihedral(a, k)), k


# --------------------------------------------------------------------------
# loop


@dataclass
class TraceRecord:
    step: int
    loss: float
    l1: float
    lp: float
    lr: float

    def line(self) -> str:
        return f"{self.step} {self.loss:.9e} {self.l1:.9e} {self.lp:.9e} {self.lr:.9e}"


@dataclass
class TrainResult:
    weights: dict
    trace: list[TraceRecord]
    optimizer: Adam


def rng_streams(seed: int):
    """Independent generators for weight init, patch sampling and augmentation."""
    init, sampling, aug = np.random.SeedSequence(seed).spawn(3)
    return (np.random.Generator(np.random.PCG64(init)),
            np.random.Generator(np.random.PCG64(sampling)),
            np.random.Generator(np.random.PCG64(aug)))


def train_loop(dataset: list[Sample], model_cfg: ModelConfig, cfg: TrainConfig,
               trace_path=None, ckpt_path=None, weights: dict | None = None,
               phi: FeatureExtractor | None = None) -> TrainResult:
    """Optimize the model; each step draws ``batch`` patches with replacement."""
    if not dataset:
        raise DataError("training set is empty")
    for s in dataset:
        if s.gt.shape != s.bracket.shape:
            raise DataError(f"{s.id}: ground truth shape {s.gt.shape} != inputs {s.bracket.shape}")
    init_rng, sample_rng, aug_rng = rng_streams(cfg.seed)
    if weights is None:
        weights = init_weights(model_cfg, init_rng)
    weights = {k: np.array(v, dtype=np.float32) for k, v in weights.items()}
    phi = phi or FeatureExtractor(cfg.phi_seed)
    opt = Adam(weights, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    pool = [p for s in dataset for p in make_patches(s, cfg.patch, cfg.stride)]
    header = checkpoint.model_header(model_cfg)
    trace = []
    trace_file = open(trace_path, "w", encoding="utf-8") if trace_path else None
    try:
        for step in range(1, cfg.steps + 1):
            grads = {k: np.zeros_like(v) for k, v in weights.items()}
            tot = l1 = lp = 0.0
            for _ in range(cfg.batch):
                p = pool[int(sample_rng.integers(len(pool)))].sample
                if cfg.augment_flip or cfg.augment_rotate:
                    p, _ = augment(p, aug_rng, cfg.augment_flip, cfg.augment_rotate)
                net = SCTNet(model_cfg, weights)
                pred = net.forward(make_input(p.bracket, model_cfg.gamma))
                terms = total_loss(pred, p.gt.astype(np.float32), phi, cfg.alpha, with_grad=True)
                for k, g in net.backward(terms.grad).items():
                    grads[k] += g / cfg.batch
                tot += terms.total / cfg.batch
                l1 += terms.l1 / cfg.batch
                lp += terms.lp / cfg.batch
            rec = TraceRecord(step, tot, l1, lp, cfg.lr)
            trace.append(rec)
            if trace_file:
                trace_file.write(rec.line() + "\n")
                trace_file.flush()
            opt.step(weights, grads)
            if ckpt_path and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                checkpoint.save_checkpoint(ckpt_path, weights, header)
            log.debug("step %d loss %.6f", step, tot)
    finally:
        if trace_file:
            trace_file.close()
    if ckpt_path:
        checkpoint.save_checkpoint(ckpt_path, weights, header)
    return TrainResult(weights, trace, opt)
