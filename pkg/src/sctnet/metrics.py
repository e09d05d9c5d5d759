"""PSNR / SSIM in the linear, mu-law and PU21-encoded domains."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import correlate2d

from . import hdrmath
from .tensor import ShapeError

DOMAINS = ("mu", "pu", "l")
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03

# PU21 "banding + glare" fit, coefficients as in the reference pu21_encoder.m
PU21_P = (0.353487901, 0.3734658629, 8.277049286e-05, 0.9062562627,
          0.09150303166, 0.9099517204, 596.3148142)
PU21_L_MIN, PU21_L_MAX = 0.005, 10000.0


class MetricError(ValueError):
    pass


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"images differ in shape: {a.shape} vs {b.shape}")


def psnr(a, b, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; identical inputs give ``inf``."""
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_2d(x, y, win, data_range):
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    f = lambda im: correlate2d(im, win, mode="valid")
    mx, my = f(x), f(y)
    sxx = f(x * x) - mx * mx
    syy = f(y * y) - my * my
    sxy = f(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a, b, data_range: float = 1.0) -> float:
    """Gaussian-window SSIM over all valid window positions.

    Colour images (CxHxW) are scored per channel and averaged.
    """
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    _same_shape(a, b)
    if a.shape[-1] < SSIM_WINDOW or a.shape[-2] < SSIM_WINDOW:
        raise MetricError(f"image {a.shape[-2:]} smaller than the {SSIM_WINDOW}px SSIM window")
    win = gaussian_window()
    if a.ndim == 2:
        return _ssim_2d(a, b, win, data_range)
    return float(np.mean([_ssim_2d(x, y, win, data_range) for x, y in zip(a, b)]))


# --------------------------------------------------------------------------
# encodings


@dataclass(frozen=True)
class DisplayModel:
    """Display used to turn normalized radiance into absolute luminance (cd/m^2)."""

    peak: float = 100.0
    contrast: float = 1000.0
    ambient: float = 10.0        # lux
    reflectivity: float = 0.005

    def __post_init__(self):
        if not self.peak > self.black > 0:
            raise MetricError(f"invalid display: peak {self.peak}, black {self.black}")

    @property
    def black(self) -> float:
        return self.peak / self.contrast

    @property
    def reflected(self) -> float:
        return self.reflectivity / math.pi * self.ambient

    def luminance(self, a):
        a = np.clip(np.asarray(a, np.float64), 0.0, 1.0)
        return (self.peak - self.black) * a + self.black + self.reflected


def pu21_encode(y):
    """PU21 encoding of absolute luminance (cd/m^2)."""
    p = PU21_P
    y = np.clip(np.asarray(y, np.float64), PU21_L_MIN, PU21_L_MAX)
    yp = y ** p[3]
    return np.maximum(p[6] * (((p[0] + p[1] * yp) / (1 + p[2] * yp)) ** p[4] - p[5]), 0.0)


def mu_domain(a):
    return hdrmath.mu_law(np.asarray(a, np.float64))


def pu_domain(a, display: DisplayModel = DisplayModel()):
    """PU21 values of the displayed image, rescaled so radiance 0 -> 0 and 1 -> 1."""
    lo, hi = pu21_encode(display.luminance(0.0)), pu21_encode(display.luminance(1.0))
    return (pu21_encode(display.luminance(a)) - lo) / (hi - lo)


def to_domain(a, domain: str, display: DisplayModel = DisplayModel()):
    if domain == "mu":
        return mu_domain(a)
    if domain == "pu":
        return pu_domain(a, display)
    if domain == "l":
        return np.asarray(a, np.float64)
    raise MetricError(f"unknown domain {domain!r}; choose from {DOMAINS}")


# --------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    per_sample: dict[str, dict[str, float]] = field(default_factory=dict)
    aggregate: dict[str, float] = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)
    domains: tuple[str, ...] = DOMAINS

    @property
    def metric_names(self) -> list[str]:
        return [f"{d}_psnr" for d in self.domains] + [f"{d}_ssim" for d in self.domains]

    def to_kv(self) -> str:
        lines = []
        for sid in sorted(self.per_sample):
            for m in self.metric_names:
                lines.append(f"{sid}.{m} = {format_metric(m, self.per_sample[sid][m])}")
        for m in self.metric_names:
            lines.append(f"mean.{m} = {format_metric(m, self.aggregate[m])}")
        for sid in self.missing:
            lines.append(f"{sid}.missing = 1")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        names = self.metric_names
        head = ["# SSIM: Gaussian window 11, sigma 1.5, per-channel mean; "
                "HDR-VDP2 not computed",
                f"{'sample':<16}" + "".join(f"{m:>14}" for m in names)]
        rows = [f"{sid:<16}" + "".join(f"{format_metric(m, self.per_sample[sid][m]):>14}"
                                       for m in names) for sid in sorted(self.per_sample)]
        rows.append(f"{'mean':<16}" + "".join(f"{format_metric(m, self.aggregate[m]):>14}"
                                              for m in names))
        rows += [f"missing: {sid}" for sid in self.missing]
        return "\n".join(head + rows) + "\n"


def format_metric(name: str, value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.4f}" if name.endswith("psnr") else f"{value:.6f}"


def evaluate(preds: dict, gts: dict, domains=DOMAINS,
             display: DisplayModel = DisplayModel()) -> EvalReport:
    """Score every sample present in both maps; the rest is listed as missing."""
    for d in domains:
        if d not in DOMAINS:
            raise MetricError(f"unknown domain {d!r}; choose from {DOMAINS}")
    report = EvalReport(domains=tuple(domains))
    report.missing = sorted(set(gts) ^ set(preds))
    for sid in sorted(set(gts) & set(preds)):
        row = {}
        for d in domains:
            p, g = to_domain(preds[sid], d, display), to_domain(gts[sid], d, display)
            row[f"{d}_psnr"] = psnr(p, g)
            row[f"{d}_ssim"] = ssim(p, g)
        report.per_sample[sid] = row
    for m in report.metric_names:
        vals = [report.per_sample[s][m] for s in sorted(report.per_sample)]
        report.aggregate[m] = float(np.mean(vals)) if vals else math.nan
    return report
