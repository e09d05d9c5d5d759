"""Flat binary weight container.

Layout (all integers little-endian)::

    b"SCTNETCK"                     magic
    u32 format_version
    u32 header_len, header bytes    UTF-8 ``key = value`` lines
    u32 record_count
    per record:
        u16 name_len, name bytes (UTF-8)
        u8 ndim, u32 * ndim extents
        float32 LE payload, row-major

Records are written sorted by name, so saving what was loaded reproduces
the file byte for byte.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SCTNETCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(weights: dict, header: dict | None = None) -> bytes:
    head = "".join(f"{k} = {v}\n" for k, v in (header or {}).items()).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(head)), head,
             struct.pack("<I", len(weights))]
    for name in sorted(weights):
        arr = np.asarray(weights[name])
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"parameter {name!r} holds non-finite values")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    if buf[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    try:
        version, hlen = struct.unpack_from("<II", buf, 8)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 16
        header = {}
        for line in buf[pos:pos + hlen].decode("utf-8").splitlines():
            k, v = line.split(" = ", 1)
            header[k] = v
        pos += hlen
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        weights = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            name = buf[pos + 2:pos + 2 + nlen].decode("utf-8")
            pos += 2 + nlen
            (ndim,) = struct.unpack_from("<B", buf, pos)
            shape = struct.unpack_from(f"<{ndim}I", buf, pos + 1)
            pos += 1 + 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            if pos + 4 * n > len(buf):
                raise CheckpointError(f"truncated payload for {name!r}")
            weights[name] = np.frombuffer(buf, "<f4", n, pos).reshape(shape).astype(np.float32)
            pos += 4 * n
    except (struct.error, UnicodeDecodeError, ValueError) as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {e}") from e
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after last record")
    return header, weights


def save_checkpoint(path, weights: dict, header: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(encode(weights, header))


def load_checkpoint(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        return decode(f.read())


def model_header(cfg, **extra) -> dict:
    """Header entries describing a model config (``model.<field> = value``)."""
    head = {f"model.{k}": v for k, v in cfg.to_dict().items()}
    head.update(extra)
    return head


def config_from_header(header: dict):
    from .model import ModelConfig
    return ModelConfig.from_dict(
        {k[len("model."):]: v for k, v in header.items() if k.startswith("model.")})
