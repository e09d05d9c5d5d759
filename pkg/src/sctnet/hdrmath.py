"""HDR domain transfer functions: gamma projection, mu-law, blending, merging."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GAMMA = 2.2
MU = 5000.0
HAT_FLOOR = 1e-3
TRIANGLE_FLOOR = 1e-6


class DomainError(ValueError):
    pass


@dataclass
class LdrImage:
    """A 3xHxW exposure in [0, 1] taken with ``exposure_time`` seconds."""

    pixels: np.ndarray
    exposure_time: float
    ev: float = 0.0

    def __post_init__(self):
        if not self.exposure_time > 0:
            raise DomainError(f"exposure time must be positive, got {self.exposure_time}")
        self.pixels = np.clip(self.pixels, 0.0, 1.0)


@dataclass
class LdrBracket:
    """Short, reference and long exposures of one (possibly dynamic) scene."""

    images: tuple[LdrImage, LdrImage, LdrImage] = field(default=())

    def __post_init__(self):
        if len(self.images) != 3:
            raise DomainError(f"a bracket holds 3 exposures, got {len(self.images)}")
        shapes = {im.pixels.shape for im in self.images}
        if len(shapes) != 1:
            raise DomainError(f"bracket exposures differ in shape: {sorted(shapes)}")
        t = [im.exposure_time for im in self.images]
        if not t[0] < t[1] < t[2]:
            raise DomainError(f"exposure times must be strictly increasing, got {t}")

    @property
    def shape(self):
        return self.images[0].pixels.shape

    @property
    def reference(self) -> LdrImage:
        return self.images[1]


def gamma_project(ldr: LdrImage | np.ndarray, t: float | None = None, gamma: float = GAMMA):
    """Map LDR values to linear radiance: ``L**gamma / t``."""
    if isinstance(ldr, LdrImage):
        pixels, t = ldr.pixels, ldr.exposure_time if t is None else t
    else:
        pixels = np.asarray(ldr)
    if t is None or not t > 0:
        raise DomainError(f"exposure time must be positive, got {t}")
    return pixels ** gamma / t


def mu_law(h, mu: float = MU):
    """Logarithmic tone curve; inputs are clamped to [0, 1]."""
    h = np.clip(h, 0.0, 1.0)
    return np.log1p(mu * h) / np.log1p(mu)


def mu_law_grad(h, mu: float = MU):
    """Derivative of :func:`mu_law`; zero where the clamp is active."""
    inside = (h >= 0.0) & (h <= 1.0)
    return np.where(inside, mu / ((1.0 + mu * np.clip(h, 0.0, 1.0)) * np.log1p(mu)), 0.0)


def luminance(pixels: np.ndarray) -> np.ndarray:
    """Mean over the RGB axis (axis 0)."""
    return pixels.mean(axis=0)


def triangle_weights(ref: LdrImage | np.ndarray):
    """Blending weights (short, reference, long) from reference luminance.

    Each map is HxW; weights are floored so their sum is positive everywhere.
    """
    pixels = ref.pixels if isinstance(ref, LdrImage) else np.asarray(ref)
    z = luminance(pixels) if pixels.ndim == 3 else pixels
    w_short = np.clip(2.0 * z - 1.0, 0.0, 1.0)
    w_ref = 1.0 - np.abs(2.0 * z - 1.0)
    w_long = np.clip(1.0 - 2.0 * z, 0.0, 1.0)
    return tuple(np.maximum(w, TRIANGLE_FLOOR) for w in (w_short, w_ref, w_long))


def blend(hdrs, weights):
    """Per-pixel weighted mean of radiance maps (weights broadcast over channels)."""
    if len(hdrs) != len(weights):
        raise DomainError(f"{len(hdrs)} images but {len(weights)} weight maps")
    shape = hdrs[0].shape
    if any(h.shape != shape for h in hdrs):
        raise DomainError(f"blend inputs differ in shape: {[h.shape for h in hdrs]}")
    num = np.zeros(shape, dtype=np.float64)
    den = np.zeros(shape[-2:], dtype=np.float64)
    for h, w in zip(hdrs, weights):
        w = np.asarray(w, dtype=np.float64)
        num += w * h
        den += w
    if np.any(den <= 0):
        raise DomainError("blend weights sum to zero at some pixel")
    return num / den


def hat_weight(z):
    """Debevec hat ``min(z, 1 - z)``, floored; clipped codes (0 or 1) get zero."""
    w = np.maximum(np.minimum(z, 1.0 - z), HAT_FLOOR)
    return np.where((z <= 0.0) | (z >= 1.0), 0.0, w)


def debevec_merge(stack, gamma: float = GAMMA, normalize: bool = True):
    """Merge a static exposure stack into linear radiance.

    With ``normalize`` the result is divided by the stack's largest
    representable radiance (``1 / t_min``), so it lies in [0, 1].
    Pixels clipped in every exposure take the shortest exposure's
    projection when over-exposed and the longest when under-exposed.
    """
    if len(stack) == 0:
        raise DomainError("empty exposure stack")
    times = [im.exposure_time for im in stack]
    if len(set(times)) != len(times):
        raise DomainError(f"exposure times must be distinct, got {times}")
    order = np.argsort(times)
    stack = [stack[i] for i in order]
    num = np.zeros(stack[0].pixels.shape, dtype=np.float64)
    den = np.zeros_like(num)
    for im in stack:
        z = im.pixels.astype(np.float64)
        w = hat_weight(z)
        num += w * gamma_project(z, im.exposure_time, gamma)
        den += w
    shortest, longest = stack[0], stack[-1]
    fallback = np.where(
        shortest.pixels >= 1.0,
        gamma_project(shortest.pixels.astype(np.float64), shortest.exposure_time, gamma),
        gamma_project(longest.pixels.astype(np.float64), longest.exposure_time, gamma),
    )
    out = np.where(den > 0, num / np.where(den > 0, den, 1.0), fallback)
    if normalize:
        out = out * shortest.exposure_time
    return out
