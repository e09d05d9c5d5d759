"""SCTNet: window self-attention plus channel cross-attention for HDR merging.

Data flow for one bracket (C = embed_dim, c = C / 3, N = H * W)::

    I_i (6xHxW) --conv3x3--> f_i (c x H x W), concatenated to z_0 (N x C)
    repeat L times:  z <- G-SAB(z);  z <- S-CAB(z, f_1, f_2, f_3)
    y = z (as C x H x W) + conv3x3(f_2);  prediction = sigmoid(conv3x3(y))

Tokens are pixels in row-major order. All learnables live in a flat dict
keyed by the names produced by :func:`weight_schema`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import hdrmath
from .tensor import (Conv2d, LayerNorm, Linear, MatMul, Mlp, Sigmoid, Softmax,
                     matmul, softmax)


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 24
    window_size: int = 4
    num_layers: int = 2
    num_heads: int = 3
    cross_heads: int = 2
    mlp_ratio: int = 4
    patch_size: int = 1
    shared_shallow: bool = False
    gamma: float = hdrmath.GAMMA

    def __post_init__(self):
        c = self.embed_dim
        if c <= 0 or c % 3:
            raise ConfigError(f"embed_dim must be a positive multiple of 3, got {c}")
        if c % self.num_heads:
            raise ConfigError(f"embed_dim {c} not divisible by num_heads {self.num_heads}")
        if (c // 3) % self.cross_heads:
            raise ConfigError(
                f"group width {c // 3} not divisible by cross_heads {self.cross_heads}")
        if self.window_size < 1 or self.num_layers < 0 or self.mlp_ratio < 1:
            raise ConfigError(f"invalid config {self}")
        if self.patch_size != 1:
            raise ConfigError("only per-pixel tokenization (patch_size=1) is supported")

    @property
    def group_dim(self) -> int:
        return self.embed_dim // 3

    @property
    def hidden_dim(self) -> int:
        return self.embed_dim * self.mlp_ratio

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(kinds)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        out = {}
        for k, v in d.items():
            default = getattr(cls, k)
            if isinstance(default, bool):
                out[k] = v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes")
            else:
                out[k] = type(default)(v)
        return cls(**out)


# output starts near a mid-grey reference pixel at 1 EV spacing: 0.5**gamma / 2
HEAD_BIAS_INIT = math.log((0.5 ** hdrmath.GAMMA / 2) / (1 - 0.5 ** hdrmath.GAMMA / 2))

# wider, deeper variant with 8x8 windows; not used by the tests beyond construction
LARGE_CONFIG = ModelConfig(embed_dim=60, window_size=8, num_layers=3, num_heads=6, cross_heads=4)


# --------------------------------------------------------------------------
# weights


def _shallow_names(cfg):
    return ["shallow.shared"] if cfg.shared_shallow else [f"shallow.{i}" for i in (1, 2, 3)]


def weight_schema(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    C, c, hid = cfg.embed_dim, cfg.group_dim, cfg.hidden_dim
    s: dict[str, tuple[int, ...]] = {}
    for name in _shallow_names(cfg):
        s[f"{name}.weight"] = (c, 6, 3, 3)
        s[f"{name}.bias"] = (c,)
    for j in range(cfg.num_layers):
        g = f"layers.{j}.gsab"
        s[f"{g}.norm1.weight"] = s[f"{g}.norm1.bias"] = (C,)
        s[f"{g}.attn.qkv.weight"], s[f"{g}.attn.qkv.bias"] = (C, 3 * C), (3 * C,)
        s[f"{g}.attn.proj.weight"], s[f"{g}.attn.proj.bias"] = (C, C), (C,)
        s[f"{g}.norm2.weight"] = s[f"{g}.norm2.bias"] = (C,)
        s[f"{g}.mlp.fc1.weight"], s[f"{g}.mlp.fc1.bias"] = (C, hid), (hid,)
        s[f"{g}.mlp.fc2.weight"], s[f"{g}.mlp.fc2.bias"] = (hid, C), (C,)
        b = f"layers.{j}.scab"
        for pair in ("cmca12", "cmca32"):
            for lin in ("q", "k", "v", "proj"):
                s[f"{b}.{pair}.{lin}.weight"], s[f"{b}.{pair}.{lin}.bias"] = (c, c), (c,)
        s[f"{b}.merge.weight"], s[f"{b}.merge.bias"] = (C, C), (C,)
        s[f"{b}.norm.weight"] = s[f"{b}.norm.bias"] = (C,)
        s[f"{b}.mlp.fc1.weight"], s[f"{b}.mlp.fc1.bias"] = (C, hid), (hid,)
        s[f"{b}.mlp.fc2.weight"], s[f"{b}.mlp.fc2.bias"] = (hid, C), (C,)
    s["skip.weight"], s["skip.bias"] = (C, c, 3, 3), (C,)
    s["head.weight"], s["head.bias"] = (3, C, 3, 3), (3,)
    return s


def check_weights(weights: dict, cfg: ModelConfig) -> None:
    """Raise :class:`SchemaError` naming the first parameter that does not fit."""
    schema = weight_schema(cfg)
    for name, shape in schema.items():
        if name not in weights:
            raise SchemaError(f"missing parameter {name!r}")
        if tuple(weights[name].shape) != shape:
            raise SchemaError(
                f"parameter {name!r} has shape {tuple(weights[name].shape)}, expected {shape}")
    extra = sorted(set(weights) - set(schema))
    if extra:
        raise SchemaError(f"unexpected parameter {extra[0]!r}")


def _trunc_normal(rng, shape, std=0.02):
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2.0
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2.0
    return x * std


def init_weights(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> dict:
    """Truncated normal (std 0.02) for token mixers, fan-in scaled convs, unit LN gains.

    Biases start at zero except the output head, which starts at
    :data:`HEAD_BIAS_INIT` so the first predictions sit in the dark part of
    the normalized HDR range.
    """
    out = {}
    for name, shape in weight_schema(cfg).items():
        if name == "head.bias":
            w = np.full(shape, HEAD_BIAS_INIT)
        elif name.endswith(".bias"):
            w = np.zeros(shape)
        elif ".norm" in name:
            w = np.ones(shape)
        elif len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
            w = rng.standard_normal(shape) / math.sqrt(fan_in)
        else:
            w = _trunc_normal(rng, shape)
        out[name] = w.astype(dtype)
    return out


def cast_weights(weights: dict, dtype) -> dict:
    return {k: np.asarray(v, dtype=dtype) for k, v in weights.items()}


# --------------------------------------------------------------------------
# inputs


def make_input(bracket: hdrmath.LdrBracket, gamma: float = hdrmath.GAMMA):
    """Stack each exposure with its gamma projection into a 6xHxW array."""
    shapes = {im.pixels.shape for im in bracket.images}
    if len(shapes) != 1:
        raise ConfigError(f"bracket exposures differ in shape: {sorted(shapes)}")
    return tuple(
        np.concatenate([im.pixels, hdrmath.gamma_project(im, gamma=gamma)], axis=0)
        for im in bracket.images
    )


# --------------------------------------------------------------------------
# window helpers


def _reflect_index(n: int, size: int) -> np.ndarray:
    pad = size - n
    if pad == 0:
        return np.arange(n)
    if pad > n - 1:
        raise ConfigError(f"window of {size} needs {pad} reflected rows but the map has {n}")
    return np.pad(np.arange(n), (0, pad), mode="reflect")


class WindowPartition:
    """Reflect-pad an HxWxC grid to window multiples and cut it into windows."""

    def __init__(self, h: int, w: int, ws: int):
        self.h, self.w, self.ws = h, w, ws
        hp, wp = -(-h // ws) * ws, -(-w // ws) * ws
        self.ih, self.iw = _reflect_index(h, hp), _reflect_index(w, wp)
        self.hp, self.wp = hp, wp
        self.nh, self.nw = hp // ws, wp // ws

    def split(self, tokens: np.ndarray) -> np.ndarray:
        c = tokens.shape[-1]
        grid = tokens.reshape(self.h, self.w, c)[self.ih][:, self.iw]
        ws = self.ws
        return grid.reshape(self.nh, ws, self.nw, ws, c).transpose(0, 2, 1, 3, 4).reshape(
            self.nh * self.nw, ws * ws, c)

    def merge(self, windows: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`split` for forward values (padding cropped)."""
        ws, c = self.ws, windows.shape[-1]
        grid = windows.reshape(self.nh, self.nw, ws, ws, c).transpose(0, 2, 1, 3, 4).reshape(
            self.hp, self.wp, c)
        return grid[:self.h, :self.w].reshape(self.h * self.w, c)

    def split_adjoint(self, dwin: np.ndarray) -> np.ndarray:
        """Gradient of :meth:`split`: padded copies accumulate into their source."""
        ws, c = self.ws, dwin.shape[-1]
        grid = dwin.reshape(self.nh, self.nw, ws, ws, c).transpose(0, 2, 1, 3, 4).reshape(
            self.hp, self.wp, c)
        rows = np.zeros((self.h, self.wp, c), dtype=dwin.dtype)
        np.add.at(rows, self.ih, grid)
        out = np.zeros((self.h, self.w, c), dtype=dwin.dtype)
        np.add.at(out, (slice(None), self.iw), rows)
        return out.reshape(self.h * self.w, c)

    def merge_adjoint(self, dtokens: np.ndarray) -> np.ndarray:
        c = dtokens.shape[-1]
        grid = np.zeros((self.hp, self.wp, c), dtype=dtokens.dtype)
        grid[:self.h, :self.w] = dtokens.reshape(self.h, self.w, c)
        ws = self.ws
        return grid.reshape(self.nh, ws, self.nw, ws, c).transpose(0, 2, 1, 3, 4).reshape(
            self.nh * self.nw, ws * ws, c)


# --------------------------------------------------------------------------
# attention primitives (forward only; used by oracles and inference)


def window_attention(x, w_qkv, b_qkv, w_proj, b_proj, heads: int):
    """Multi-head self-attention inside each window. ``x`` is (windows, T, C)."""
    nw, t, c = x.shape
    d = c // heads
    qkv = matmul(x, w_qkv, "wmsa.qkv") + b_qkv
    q, k, v = qkv.reshape(nw, t, 3, heads, d).transpose(2, 0, 3, 1, 4)
    a = softmax(matmul(q, np.swapaxes(k, -1, -2), "wmsa.scores") / math.sqrt(d))
    o = matmul(a, v, "wmsa.values").transpose(0, 2, 1, 3).reshape(nw, t, c)
    return matmul(o, w_proj, "wmsa.proj") + b_proj


def channel_cross_attention(q, k, v, heads: int = 1):
    """Attention over the channel axis: ``softmax(q k^T / sqrt(d)) v`` per head.

    ``q``, ``k``, ``v`` are token-major (N x c); the score matrix of each
    head is d x d with d = c / heads.
    """
    n, c = q.shape
    d = c // heads
    qh, kh, vh = (m.T.reshape(heads, d, n) for m in (q, k, v))
    a = softmax(matmul(qh, np.swapaxes(kh, -1, -2), "cmca.scores") / math.sqrt(d))
    return matmul(a, vh, "cmca.values").reshape(c, n).T


# --------------------------------------------------------------------------
# blocks with backward


class GSAB:
    """LN -> W-MSA -> residual, LN -> MLP -> residual."""

    def __init__(self, prefix: str, cfg: ModelConfig):
        self.p, self.cfg = prefix, cfg

    def forward(self, z, w, part: WindowPartition):
        p, cfg = self.p, self.cfg
        heads = cfg.num_heads
        d = cfg.embed_dim // heads
        self.part = part
        self.ln1, self.ln2 = LayerNorm(), LayerNorm()
        self.qkv, self.proj = Linear("wmsa.qkv"), Linear("wmsa.proj")
        self.score, self.value = MatMul("wmsa.scores"), MatMul("wmsa.values")
        self.soft, self.mlp = Softmax(), Mlp("mlp")
        self.scale = 1.0 / math.sqrt(d)

        x = part.split(self.ln1(z, w[f"{p}.norm1.weight"], w[f"{p}.norm1.bias"]))
        nw, t, c = x.shape
        qkv = self.qkv(x, w[f"{p}.attn.qkv.weight"], w[f"{p}.attn.qkv.bias"])
        q, k, v = qkv.reshape(nw, t, 3, heads, d).transpose(2, 0, 3, 1, 4)
        a = self.soft(self.score(q, np.swapaxes(k, -1, -2)) * self.scale)
        o = self.value(a, v).transpose(0, 2, 1, 3).reshape(nw, t, c)
        o = self.proj(o, w[f"{p}.attn.proj.weight"], w[f"{p}.attn.proj.bias"])
        zh = z + part.merge(o)
        y = self.ln2(zh, w[f"{p}.norm2.weight"], w[f"{p}.norm2.bias"])
        return zh + self.mlp(y, w[f"{p}.mlp.fc1.weight"], w[f"{p}.mlp.fc1.bias"],
                             w[f"{p}.mlp.fc2.weight"], w[f"{p}.mlp.fc2.bias"])

    def backward(self, dout, grads):
        p, cfg = self.p, self.cfg
        heads = cfg.num_heads
        dy, dw1, db1, dw2, db2 = self.mlp.backward(dout)
        _acc(grads, p, "mlp.fc1", dw1, db1)
        _acc(grads, p, "mlp.fc2", dw2, db2)
        dzh, dg, db = self.ln2.backward(dy)
        _acc(grads, p, "norm2", dg, db)
        dzh = dzh + dout

        do = self.part.merge_adjoint(dzh)
        do, dw, db = self.proj.backward(do)
        _acc(grads, p, "attn.proj", dw, db)
        nw, t, c = do.shape
        d = c // heads
        do = do.reshape(nw, t, heads, d).transpose(0, 2, 1, 3)
        da, dv = self.value.backward(do)
        ds = self.soft.backward(da) * self.scale
        dq, dkt = self.score.backward(ds)
        dk = np.swapaxes(dkt, -1, -2)
        dqkv = np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(nw, t, 3 * c)
        dx, dw, db = self.qkv.backward(dqkv)
        _acc(grads, p, "attn.qkv", dw, db)
        dx = self.part.split_adjoint(dx)
        dz, dg, db = self.ln1.backward(dx)
        _acc(grads, p, "norm1", dg, db)
        return dz + dzh


class CMCA:
    """Channel-wise cross-attention: query from one group, key/value from another."""

    def __init__(self, prefix: str, heads: int):
        self.p, self.heads = prefix, heads

    def forward(self, a, b, w):
        p = self.p
        self.lq, self.lk, self.lv = Linear("cmca.qkv"), Linear("cmca.qkv"), Linear("cmca.qkv")
        self.lo = Linear("cmca.proj")
        self.score, self.value, self.soft = MatMul("cmca.scores"), MatMul("cmca.values"), Softmax()
        q = self.lq(a, w[f"{p}.q.weight"], w[f"{p}.q.bias"])
        k = self.lk(b, w[f"{p}.k.weight"], w[f"{p}.k.bias"])
        v = self.lv(b, w[f"{p}.v.weight"], w[f"{p}.v.bias"])
        n, c = q.shape
        h = self.heads
        d = c // h
        self.scale = 1.0 / math.sqrt(d)
        qh, kh, vh = (m.T.reshape(h, d, n) for m in (q, k, v))
        att = self.soft(self.score(qh, np.swapaxes(kh, -1, -2)) * self.scale)
        o = self.value(att, vh).reshape(c, n).T
        return self.lo(o, w[f"{p}.proj.weight"], w[f"{p}.proj.bias"])

    def backward(self, dout, grads):
        p = self.p
        do, dw, db = self.lo.backward(dout)
        _acc(grads, p, "proj", dw, db)
        n, c = do.shape
        h = self.heads
        datt, dvh = self.value.backward(do.T.reshape(h, c // h, n))
        ds = self.soft.backward(datt) * self.scale
        dqh, dkt = self.score.backward(ds)
        dq = dqh.reshape(c, n).T
        dk = np.swapaxes(dkt, -1, -2).reshape(c, n).T
        dv = dvh.reshape(c, n).T
        da, dw, db = self.lq.backward(dq)
        _acc(grads, p, "q", dw, db)
        db_k, dw, db = self.lk.backward(dk)
        _acc(grads, p, "k", dw, db)
        db_v, dw, db = self.lv.backward(dv)
        _acc(grads, p, "v", dw, db)
        return da, db_k + db_v


class SCAB:
    """Split into EV groups, link shallow features, cross-attend to the reference, FFN."""

    def __init__(self, prefix: str, cfg: ModelConfig):
        self.p, self.cfg = prefix, cfg

    def forward(self, z, f, w):
        p, c = self.p, self.cfg.group_dim
        if z.shape[-1] != 3 * c:
            raise ConfigError(f"S-CAB expects {3 * c} channels, got {z.shape[-1]}")
        self.c12 = CMCA(f"{p}.cmca12", self.cfg.cross_heads)
        self.c32 = CMCA(f"{p}.cmca32", self.cfg.cross_heads)
        self.lm, self.ln, self.mlp = Linear("ffn.merge"), LayerNorm(), Mlp("mlp")
        z11, z22, z33 = z[:, :c], z[:, c:2 * c], z[:, 2 * c:]
        z1, z2, z3 = z11 + f[0], z22 + f[1], z33 + f[2]
        z12 = self.c12.forward(z2, z1, w)
        z32 = self.c32.forward(z2, z3, w)
        m = np.concatenate([z12, z22, z32], axis=-1)
        pm = self.lm(m, w[f"{p}.merge.weight"], w[f"{p}.merge.bias"])
        y = self.ln(pm, w[f"{p}.norm.weight"], w[f"{p}.norm.bias"])
        return pm + self.mlp(y, w[f"{p}.mlp.fc1.weight"], w[f"{p}.mlp.fc1.bias"],
                             w[f"{p}.mlp.fc2.weight"], w[f"{p}.mlp.fc2.bias"])

    def backward(self, dout, grads):
        """Returns (dz, [df_1, df_2, df_3])."""
        p, c = self.p, self.cfg.group_dim
        dy, dw1, db1, dw2, db2 = self.mlp.backward(dout)
        _acc(grads, p, "mlp.fc1", dw1, db1)
        _acc(grads, p, "mlp.fc2", dw2, db2)
        dpm, dg, db = self.ln.backward(dy)
        _acc(grads, p, "norm", dg, db)
        dm, dw, db = self.lm.backward(dpm + dout)
        _acc(grads, p, "merge", dw, db)
        dz12, dz22, dz32 = dm[:, :c], dm[:, c:2 * c], dm[:, 2 * c:]
        dz2a, dz3 = self.c32.backward(dz32, grads)
        dz2b, dz1 = self.c12.backward(dz12, grads)
        dz2 = dz2a + dz2b
        dz = np.concatenate([dz1, dz22 + dz2, dz3], axis=-1)
        return dz, [dz1, dz2, dz3]


def _acc(grads, prefix, name, dw, db):
    grads[f"{prefix}.{name}.weight"] += dw
    grads[f"{prefix}.{name}.bias"] += db


# --------------------------------------------------------------------------
# network


class SCTNet:
    """One forward/backward pass over a single bracket.

    ``forward`` records intermediate state; ``backward`` then returns the
    gradient of every weight (zero-initialized, accumulated additively).
    """

    def __init__(self, cfg: ModelConfig, weights: dict):
        check_weights(weights, cfg)
        self.cfg, self.w = cfg, weights
        self._recorded = False

    def _shallow(self, i):
        name = "shallow.shared" if self.cfg.shared_shallow else f"shallow.{i + 1}"
        return name

    def forward(self, inputs) -> np.ndarray:
        cfg, w = self.cfg, self.w
        if len(inputs) != 3:
            raise ConfigError(f"expected 3 inputs, got {len(inputs)}")
        dtype = w["head.weight"].dtype
        inputs = [np.asarray(x, dtype=dtype) for x in inputs]
        shapes = {x.shape for x in inputs}
        if len(shapes) != 1 or inputs[0].ndim != 3 or inputs[0].shape[0] != 6:
            raise ConfigError(f"inputs must be three 6xHxW arrays, got {sorted(shapes)}")
        _, h, wd = inputs[0].shape
        self.hw = (h, wd)
        part = WindowPartition(h, wd, cfg.window_size)

        self.shallow = [Conv2d(pad=1) for _ in range(3)]
        fmaps = [op(x, w[f"{self._shallow(i)}.weight"], w[f"{self._shallow(i)}.bias"])
                 for i, (op, x) in enumerate(zip(self.shallow, inputs))]
        f = [m.reshape(m.shape[0], -1).T for m in fmaps]
        z = np.concatenate(f, axis=-1)

        self.blocks = []
        for j in range(cfg.num_layers):
            g = GSAB(f"layers.{j}.gsab", cfg)
            s = SCAB(f"layers.{j}.scab", cfg)
            z = g.forward(z, w, part)
            z = s.forward(z, f, w)
            self.blocks.append((g, s))

        feat = z.T.reshape(cfg.embed_dim, h, wd)
        self.skip, self.head, self.out = Conv2d(pad=1), Conv2d(pad=1), Sigmoid()
        y = feat + self.skip(fmaps[1], w["skip.weight"], w["skip.bias"])
        pred = self.out(self.head(y, w["head.weight"], w["head.bias"]))
        self._recorded = True
        return pred

    __call__ = forward

    def backward(self, dpred, return_inputs: bool = False):
        if not self._recorded:
            from .tensor import UsageError
            raise UsageError("SCTNet.backward called before forward")
        cfg = self.cfg
        h, wd = self.hw
        grads = {k: np.zeros_like(v) for k, v in self.w.items()}
        dy, dw, db = self.head.backward(self.out.backward(dpred))
        grads["head.weight"] += dw
        grads["head.bias"] += db
        dskip_in, dw, db = self.skip.backward(dy)
        grads["skip.weight"] += dw
        grads["skip.bias"] += db

        dz = dy.reshape(cfg.embed_dim, -1).T
        df = [np.zeros((h * wd, cfg.group_dim), dtype=dz.dtype) for _ in range(3)]
        for g, s in reversed(self.blocks):
            dz, dfs = s.backward(dz, grads)
            for i in range(3):
                df[i] += dfs[i]
            dz = g.backward(dz, grads)
        c = cfg.group_dim
        for i in range(3):
            df[i] += dz[:, i * c:(i + 1) * c]
        dmaps = [d.T.reshape(c, h, wd) for d in df]
        dmaps[1] = dmaps[1] + dskip_in
        dinputs = []
        for i, (op, dm) in enumerate(zip(self.shallow, dmaps)):
            dx, dw, db = op.backward(dm)
            name = self._shallow(i)
            grads[f"{name}.weight"] += dw
            grads[f"{name}.bias"] += db
            dinputs.append(dx)
        if return_inputs:
            return grads, dinputs
        return grads


def predict(bracket: hdrmath.LdrBracket, weights: dict, cfg: ModelConfig) -> np.ndarray:
    """Normalized HDR prediction (3xHxW, values in (0, 1)) for one bracket."""
    return SCTNet(cfg, weights).forward(make_input(bracket, cfg.gamma))


# --------------------------------------------------------------------------
# cost model


def count_macs(cfg: ModelConfig, h: int, w: int) -> dict[str, int]:
    """Analytic multiply-accumulate counts for one forward pass.

    Keys ending in a tag name (``wmsa.scores``, ``cmca.values`` ...) match the
    tags recorded by :class:`sctnet.tensor.MacCounter`. The ``cmca_*`` keys
    reconcile the channel attention cost: one application's score product
    costs c^2 N / heads with c = C/3, i.e. C^2 N / 9 for a single head.
    """
    C, c, hid, L = cfg.embed_dim, cfg.group_dim, cfg.hidden_dim, cfg.num_layers
    ws = cfg.window_size
    n = h * w
    hp, wp = -(-h // ws) * ws, -(-w // ws) * ws
    npad = hp * wp
    heads = cfg.cross_heads
    scores_per_app = c * c * n // heads
    counts = {
        "conv": 3 * n * 6 * 9 * c + n * c * 9 * C + n * C * 9 * 3,
        "wmsa.qkv": L * npad * C * 3 * C,
        "wmsa.scores": L * npad * ws * ws * C,
        "wmsa.values": L * npad * ws * ws * C,
        "wmsa.proj": L * npad * C * C,
        "mlp": L * 2 * (2 * n * C * hid),
        "cmca.qkv": L * 2 * 3 * n * c * c,
        "cmca.scores": L * 2 * scores_per_app,
        "cmca.values": L * 2 * scores_per_app,
        "cmca.proj": L * 2 * n * c * c,
        "ffn.merge": L * n * C * C,
    }
    counts["total"] = sum(counts.values())
    counts["cmca_scores_per_application"] = scores_per_app
    counts["cmca_attention_per_application"] = 2 * scores_per_app
    counts["cmca_attention_per_block"] = 4 * scores_per_app
    counts["wmsa_attention_per_block"] = 2 * npad * ws * ws * C
    return counts


def count_parameters(cfg: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in weight_schema(cfg).values())
