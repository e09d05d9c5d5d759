"""Dataset I/O and the synthetic multi-exposure scene generator.

Scene folder layout::

    <id>/input_1.png input_2.png input_3.png   16-bit RGB exposures
         exposure.txt                          one log2 EV offset per input
         gt.pfm                                normalized linear HDR target
         manifest.txt                          ``key = value`` lines

Exposure times are rebuilt as ``t_ref * 2**ev``. The generator writes
``t_ref = 2**selected_i`` so the shortest input has ``t = 1``; with that
unit choice every gamma projection and the target already lie in [0, 1].
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import png

from . import hdrmath
from .hdrmath import LdrBracket, LdrImage

log = logging.getLogger(__name__)

MOTIONS = ("local", "ego", "full", "static")
LIGHTS = ("day", "sunset", "night")
LIGHT_SPAN = {"day": 2.0 ** 4, "sunset": 2.0 ** 7, "night": 2.0 ** 10}
BRACKET_EVS = tuple(range(-4, 5))
REF_INDEX = 4
CODE_MAX = 65535
MANIFEST_KEYS = ("id", "motion", "light", "t_ref", "selected_i")
OPTIONAL_KEYS = ("selection", "ref_index")
# mu-law MSE differences below this (about one 16-bit code) count as ties
SELECTION_TIE = 1e-9


class DataError(Exception):
    """A scene folder or file is missing, malformed or inconsistent."""


# --------------------------------------------------------------------------
# PFM


def write_pfm(img: np.ndarray, path) -> None:
    """Write a 3xHxW (or HxW) float image as little-endian PFM, rows bottom-up."""
    img = np.asarray(img, dtype="<f4")
    if img.ndim == 3:
        if img.shape[0] != 3:
            raise DataError(f"PFM colour images need 3 channels, got {img.shape}")
        hwc, magic = img.transpose(1, 2, 0), b"PF"
    elif img.ndim == 2:
        hwc, magic = img[:, :, None], b"Pf"
    else:
        raise DataError(f"cannot store array of shape {img.shape} as PFM")
    h, w = hwc.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        f.write(np.ascontiguousarray(hwc[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file; colour images come back as 3xHxW float32."""
    with open(path, "rb") as f:
        raw = f.read()
    lines, pos = [], 0
    for _ in range(3):
        end = raw.find(b"\n", pos)
        if end < 0:
            raise DataError(f"{path}: truncated PFM header")
        lines.append(raw[pos:end].strip())
        pos = end + 1
    magic, dims, scale = lines
    if magic not in (b"PF", b"Pf"):
        raise DataError(f"{path}: bad PFM magic {magic!r}")
    try:
        w, h = (int(v) for v in dims.split())
        scale = float(scale)
    except ValueError as e:
        raise DataError(f"{path}: malformed PFM header") from e
    ch = 3 if magic == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    n = w * h * ch
    if len(raw) - pos < 4 * n:
        raise DataError(f"{path}: truncated PFM payload ({len(raw) - pos} of {4 * n} bytes)")
    data = np.frombuffer(raw, dtype=dtype, count=n, offset=pos).astype(np.float32)
    data = data.reshape(h, w, ch)[::-1]
    return np.ascontiguousarray(data.transpose(2, 0, 1) if ch == 3 else data[:, :, 0])


# --------------------------------------------------------------------------
# PNG


def write_png16(img: np.ndarray, path) -> None:
    """Store a 3xHxW image in [0, 1] as 16-bit RGB PNG (round-to-nearest codes)."""
    codes = np.round(np.clip(img, 0.0, 1.0) * CODE_MAX).astype(np.uint16)
    _write_png(codes, path, 16)


def write_png8(img: np.ndarray, path) -> None:
    codes = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    _write_png(codes, path, 8)


def _write_png(codes, path, bitdepth):
    c, h, w = codes.shape
    rows = codes.transpose(1, 2, 0).reshape(h, w * c)
    writer = png.Writer(w, h, greyscale=False, bitdepth=bitdepth)
    with open(path, "wb") as f:
        writer.write(f, rows.tolist())


def read_png(path) -> np.ndarray:
    """Decode an RGB PNG to 3xHxW floats in [0, 1]."""
    try:
        w, h, rows, info = png.Reader(filename=str(path)).asDirect()
        arr = np.array([np.asarray(r) for r in rows], dtype=np.float64)
    except (png.Error, OSError) as e:
        raise DataError(f"{path}: cannot decode PNG ({e})") from e
    planes = info["planes"]
    if planes != 3:
        raise DataError(f"{path}: expected RGB, got {planes} planes")
    maxval = (1 << info["bitdepth"]) - 1
    return (arr.reshape(h, w, 3).transpose(2, 0, 1) / maxval)


def quantize(x: np.ndarray) -> np.ndarray:
    """Round [0, 1] values to the nearest 16-bit code."""
    return np.round(np.clip(x, 0.0, 1.0) * CODE_MAX) / CODE_MAX


# --------------------------------------------------------------------------
# manifests and loading


@dataclass
class SceneManifest:
    id: str
    motion: str
    light: str
    t_ref: float
    selected_i: int
    files: tuple[str, str, str] = ("input_1.png", "input_2.png", "input_3.png")
    evs: tuple[float, float, float] = (-1.0, 0.0, 1.0)
    gt_file: str = "gt.pfm"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.motion not in MOTIONS:
            raise DataError(f"{self.id}: unknown motion class {self.motion!r}")
        if self.light not in LIGHTS:
            raise DataError(f"{self.id}: unknown light class {self.light!r}")
        if not self.t_ref > 0:
            raise DataError(f"{self.id}: t_ref must be positive")

    @property
    def exposure_times(self) -> tuple[float, ...]:
        return tuple(self.t_ref * 2.0 ** ev for ev in self.evs)

    def to_text(self) -> str:
        items = {"id": self.id, "motion": self.motion, "light": self.light,
                 "t_ref": repr(float(self.t_ref)), "selected_i": str(self.selected_i)}
        items.update({k: str(v) for k, v in self.extra.items()})
        return "".join(f"{k} = {v}\n" for k, v in items.items())


def parse_kv(text: str, source="") -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{n}: expected 'key = value', got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


@dataclass
class Sample:
    id: str
    bracket: LdrBracket
    gt: np.ndarray
    manifest: SceneManifest | None = None


def load_bracket(scene_dir) -> tuple[LdrBracket, np.ndarray, SceneManifest]:
    """Load one scene folder; inputs are returned sorted by EV."""
    d = Path(scene_dir)
    sid = d.name
    try:
        kv = parse_kv((d / "manifest.txt").read_text(encoding="utf-8"), d / "manifest.txt")
        ev_lines = (d / "exposure.txt").read_text(encoding="utf-8").split()
    except OSError as e:
        raise DataError(f"{sid}: {e}") from e
    missing = [k for k in MANIFEST_KEYS if k not in kv]
    if missing:
        raise DataError(f"{sid}: manifest lacks keys {missing}")
    unknown = sorted(set(kv) - set(MANIFEST_KEYS) - set(OPTIONAL_KEYS))
    if unknown:
        raise DataError(f"{sid}: unknown manifest keys {unknown}")
    try:
        evs = [float(v) for v in ev_lines]
        t_ref, sel = float(kv["t_ref"]), int(kv["selected_i"])
    except ValueError as e:
        raise DataError(f"{sid}: malformed number ({e})") from e
    if len(evs) != 3:
        raise DataError(f"{sid}: exposure.txt must hold 3 offsets, got {len(evs)}")
    files = ["input_1.png", "input_2.png", "input_3.png"]
    order = sorted(range(3), key=lambda i: evs[i])
    evs = [evs[i] for i in order]
    files = [files[i] for i in order]
    if not evs[0] < evs[1] < evs[2]:
        raise DataError(f"{sid}: EV offsets must be distinct, got {evs}")
    man = SceneManifest(id=kv["id"], motion=kv["motion"], light=kv["light"], t_ref=t_ref,
                        selected_i=sel, files=tuple(files), evs=tuple(evs),
                        extra={k: kv[k] for k in OPTIONAL_KEYS if k in kv})
    imgs = []
    for name, ev, t in zip(files, evs, man.exposure_times):
        path = d / name
        if not path.exists():
            raise DataError(f"{sid}: missing {name}")
        imgs.append(LdrImage(read_png(path), t, ev))
    try:
        bracket = LdrBracket(tuple(imgs))
    except hdrmath.DomainError as e:
        raise DataError(f"{sid}: {e}") from e
    gt_path = d / man.gt_file
    if not gt_path.exists():
        raise DataError(f"{sid}: missing {man.gt_file}")
    gt = read_pfm(gt_path)
    if gt.shape != bracket.shape:
        raise DataError(f"{sid}: ground truth {gt.shape} does not match inputs {bracket.shape}")
    return bracket, gt, man


def load_dataset(root) -> list[Sample]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory {root} does not exist")
    out = []
    for d in sorted(p for p in root.iterdir() if (p / "manifest.txt").exists()):
        bracket, gt, man = load_bracket(d)
        out.append(Sample(man.id, bracket, gt, man))
    if not out:
        raise DataError(f"no scenes found under {root}")
    return out


# --------------------------------------------------------------------------
# synthetic scenes


@dataclass
class Sprite:
    shape: str                      # "disc" or "box"
    size: int                       # radius or half-extent in pixels
    radiance: np.ndarray            # RGB, linear
    positions: list[tuple[int, int]]  # centre (y, x) per stop, canvas coordinates


@dataclass
class SyntheticSceneSpec:
    seed: int
    height: int = 128
    width: int = 192
    motion: str = "local"
    light: str = "day"
    margin: int = 8
    camera: list[tuple[int, int]] = field(default_factory=lambda: [(0, 0)] * 3)
    sprites: list[Sprite] = field(default_factory=list)
    background: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.motion not in MOTIONS or self.light not in LIGHTS:
            raise DataError(f"invalid classes {self.motion!r}/{self.light!r}")
        m = self.margin
        for dy, dx in self.camera:
            if abs(dy) > m or abs(dx) > m:
                raise DataError(f"camera offset {(dy, dx)} exceeds margin {m}")
        for s in self.sprites:
            if np.any(np.asarray(s.radiance) < 0):
                raise DataError("sprite radiance must be non-negative")
            for y, x in s.positions:
                if not (0 <= y < self.height + 2 * m and 0 <= x < self.width + 2 * m):
                    raise DataError(f"sprite centre {(y, x)} leaves the canvas")

    @property
    def span(self) -> float:
        return LIGHT_SPAN[self.light]


def random_scene_spec(seed: int, motion: str = "local", light: str = "day",
                      size=(128, 192)) -> SyntheticSceneSpec:
    """Draw background, sprites and camera path for one scene."""
    rng = np.random.default_rng(seed)
    h, w = size
    margin = max(2, min(h, w) // 16)
    ch, cw = h + 2 * margin, w + 2 * margin
    bg = {
        "angle": float(rng.uniform(0, 2 * np.pi)),
        "freqs": rng.uniform(1.5, 6.0, size=(3, 2)).tolist(),
        "phases": rng.uniform(0, 2 * np.pi, size=3).tolist(),
        "tint": rng.uniform(0.75, 1.0, size=3).tolist(),
    }
    camera = [(0, 0)] * 3
    if motion in ("ego", "full"):
        step = rng.integers(1, margin // 2 + 1, size=2) * rng.choice([-1, 1], size=2)
        camera = [(-int(step[0]), -int(step[1])), (0, 0), (int(step[0]), int(step[1]))]
    sprites = []
    for _ in range(int(rng.integers(2, 5))):
        size_px = int(rng.integers(max(2, min(h, w) // 16), max(3, min(h, w) // 6)))
        y0 = int(rng.integers(margin + size_px, ch - margin - size_px))
        x0 = int(rng.integers(margin + size_px, cw - margin - size_px))
        if motion in ("local", "full"):
            vy, vx = (int(v) for v in rng.integers(-size_px, size_px + 1, size=2))
        else:
            vy = vx = 0
        pos = [(int(np.clip(y0 + k * vy, 0, ch - 1)), int(np.clip(x0 + k * vx, 0, cw - 1)))
               for k in (-1, 0, 1)]
        level = float(rng.uniform(0.0, 1.0))
        radiance = _log_level_to_radiance(level, LIGHT_SPAN[light]) * rng.uniform(0.6, 1.0, size=3)
        sprites.append(Sprite(str(rng.choice(["disc", "box"])), size_px, radiance, pos))
    return SyntheticSceneSpec(seed, h, w, motion, light, margin, camera, sprites, bg)


def _log_level_to_radiance(u, span):
    """Map a [0, 1] level to radiance spanning ``span`` around mid-grey at t = 1."""
    mid = 0.5 ** hdrmath.GAMMA
    return mid * span ** (np.asarray(u) - 0.5)


def render_canvas(spec: SyntheticSceneSpec, stop: int) -> np.ndarray:
    """Radiance of the whole canvas (scene coordinates) at one stop."""
    m = spec.margin
    ch, cw = spec.height + 2 * m, spec.width + 2 * m
    yy, xx = np.mgrid[0:ch, 0:cw].astype(np.float64)
    yy /= ch
    xx /= cw
    bg = spec.background
    a = bg.get("angle", 0.0)
    u = 0.5 + 0.35 * (np.cos(a) * (xx - 0.5) + np.sin(a) * (yy - 0.5)) * 2
    for (fy, fx), ph in zip(bg.get("freqs", []), bg.get("phases", [])):
        u = u + 0.08 * np.sin(2 * np.pi * (fy * yy + fx * xx) + ph)
    u = np.clip(u, 0.0, 1.0)
    tint = np.asarray(bg.get("tint", [1.0, 1.0, 1.0]))[:, None, None]
    canvas = _log_level_to_radiance(u, spec.span)[None] * tint
    iy, ix = np.mgrid[0:ch, 0:cw]
    for s in spec.sprites:
        cy, cx = s.positions[stop]
        if s.shape == "disc":
            mask = (iy - cy) ** 2 + (ix - cx) ** 2 <= s.size ** 2
        else:
            mask = (np.abs(iy - cy) <= s.size) & (np.abs(ix - cx) <= s.size)
        canvas[:, mask] = np.asarray(s.radiance, dtype=np.float64)[:, None]
    return canvas


def render_stop(spec: SyntheticSceneSpec, stop: int) -> np.ndarray:
    """Radiance seen by the camera at one stop (3 x H x W)."""
    if spec.motion == "static":
        stop = 1
    canvas = render_canvas(spec, stop)
    dy, dx = spec.camera[stop] if spec.motion in ("ego", "full") else (0, 0)
    m = spec.margin
    return canvas[:, m + dy:m + dy + spec.height, m + dx:m + dx + spec.width].copy()


def expose(radiance: np.ndarray, t: float, gamma: float = hdrmath.GAMMA) -> np.ndarray:
    """Simulated 16-bit camera: ``quantize(clip((E t)^(1/gamma)))``."""
    return quantize(np.clip(radiance * t, 0.0, 1.0) ** (1.0 / gamma))


@dataclass
class SceneRender:
    radiance: list[np.ndarray]          # per stop
    stacks: list[list[LdrImage]]        # per stop, 9 exposures sorted by EV


def synthesize_scene(spec: SyntheticSceneSpec, t_ref: float = 1.0) -> SceneRender:
    """Render three stops and expose each at the nine bracket EVs."""
    radiance, stacks = [], []
    for stop in range(3):
        e = render_stop(spec, stop)
        radiance.append(e)
        stacks.append([LdrImage(expose(e, t_ref * 2.0 ** ev), t_ref * 2.0 ** ev, float(ev))
                       for ev in BRACKET_EVS])
    return SceneRender(radiance, stacks)


def blend_triplet(stack, ref_index: int, i: int, gamma: float = hdrmath.GAMMA) -> np.ndarray:
    """Triangle-weighted blend of the (-i, 0, +i) EV exposures, absolute units."""
    trio = [stack[ref_index - i], stack[ref_index], stack[ref_index + i]]
    hdrs = [hdrmath.gamma_project(im, gamma=gamma) for im in trio]
    return hdrmath.blend(hdrs, hdrmath.triangle_weights(trio[1]))


def make_ground_truth(stack, ref_index: int = REF_INDEX, gamma: float = hdrmath.GAMMA):
    """Pick the EV spacing whose 3-exposure blend best matches the full merge.

    Candidates are compared by mean squared error in the mu-law domain after
    both are divided by the full stack's maximum radiance. Errors within
    :data:`SELECTION_TIE` of the best count as ties, which go to the
    smallest spacing. Returns ``(gt, i, errors)`` with ``gt`` the chosen
    blend normalized by its own maximum radiance ``1 / t_short``.
    """
    if len(stack) < 9:
        raise hdrmath.DomainError(f"ground truth needs a 9-exposure stack, got {len(stack)}")
    stack = sorted(stack, key=lambda im: im.exposure_time)
    full = hdrmath.debevec_merge(stack, gamma, normalize=False)
    scale = stack[0].exposure_time
    target = hdrmath.mu_law(full * scale)
    errors = {}
    for i in (1, 2, 3, 4):
        if ref_index - i < 0 or ref_index + i >= len(stack):
            continue
        cand = blend_triplet(stack, ref_index, i, gamma)
        errors[i] = float(np.mean((hdrmath.mu_law(cand * scale) - target) ** 2))
    lowest = min(errors.values())
    best = min(i for i, e in errors.items() if e <= lowest + SELECTION_TIE)
    gt = blend_triplet(stack, ref_index, best, gamma) * stack[ref_index - best].exposure_time
    return gt, best, errors


def make_sample(spec: SyntheticSceneSpec, sid: str) -> Sample:
    """Render a scene and assemble the three-input training sample."""
    render = synthesize_scene(spec)
    gt, i, _ = make_ground_truth(render.stacks[1])
    picks = [render.stacks[0][REF_INDEX - i], render.stacks[1][REF_INDEX],
             render.stacks[2][REF_INDEX + i]]
    # rescale time so the short input has t = 1; LDR codes are unchanged
    t_ref = 2.0 ** i
    imgs = tuple(LdrImage(im.pixels, t_ref * 2.0 ** ev, ev)
                 for im, ev in zip(picks, (-float(i), 0.0, float(i))))
    man = SceneManifest(sid, spec.motion, spec.light, t_ref, i, evs=(-float(i), 0.0, float(i)),
                        extra={"selection": "mse-mu-law", "ref_index": REF_INDEX})
    return Sample(sid, LdrBracket(imgs), gt.astype(np.float32), man)


def save_sample(sample: Sample, out_dir) -> Path:
    d = Path(out_dir) / sample.id
    d.mkdir(parents=True, exist_ok=True)
    for k, im in enumerate(sample.bracket.images, 1):
        write_png16(im.pixels, d / f"input_{k}.png")
    (d / "exposure.txt").write_text(
        "".join(f"{ev!r}\n" for ev in sample.manifest.evs), encoding="utf-8")
    write_pfm(sample.gt, d / "gt.pfm")
    (d / "manifest.txt").write_text(sample.manifest.to_text(), encoding="utf-8")
    return d


def allocate_classes(n: int, mix: dict[str, float]) -> list[str]:
    """Largest-remainder split of ``n`` scenes over motion classes."""
    total = sum(mix.values())
    if abs(total - 1.0) > 1e-6 or any(v < 0 for v in mix.values()):
        raise DataError(f"class mix fractions must be non-negative and sum to 1, got {mix}")
    unknown = set(mix) - set(MOTIONS)
    if unknown:
        raise DataError(f"unknown motion classes {sorted(unknown)}")
    names = [m for m in MOTIONS if m in mix]
    raw = {m: n * mix[m] for m in names}
    counts = {m: int(np.floor(raw[m])) for m in names}
    rest = sorted(names, key=lambda m: (-(raw[m] - counts[m]), names.index(m)))
    for m in rest[:n - sum(counts.values())]:
        counts[m] += 1
    return [m for m in names for _ in range(counts[m])]


DEFAULT_MIX = {"local": 1 / 3, "ego": 1 / 3, "full": 1 / 3}


def build_dataset(n: int, mix: dict[str, float] | None, seed: int, out_dir,
                  size=(128, 192)) -> list[SceneManifest]:
    """Generate ``n`` scene folders under ``out_dir``; returns their manifests."""
    motions = allocate_classes(n, mix or DEFAULT_MIX)
    seeds = np.random.SeedSequence(seed).spawn(n)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifests = []
    for k, (motion, ss) in enumerate(zip(motions, seeds)):
        light = LIGHTS[k % len(LIGHTS)]
        scene_seed = int(ss.generate_state(1, dtype=np.uint64)[0])
        spec = random_scene_spec(scene_seed, motion, light, size)
        sample = make_sample(spec, f"scene_{k:03d}")
        save_sample(sample, out)
        manifests.append(sample.manifest)
        log.info("wrote %s (%s/%s, i=%d)", sample.id, motion, light, sample.manifest.selected_i)
    return manifests
