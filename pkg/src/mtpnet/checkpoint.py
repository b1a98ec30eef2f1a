"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic        8 bytes   b"MTPNCKPT"
    version      u32       1
    header_len   u32       byte length of the header
    header       utf-8 JSON object (resolved configuration)
    n_entries    u32
    entry * n_entries:
        name_len u16, name (utf-8 parameter path, e.g. "mtpnet.level.0.encoder.block.0.attn.q.weight")
        dtype    u8        0 = float32, 1 = float64
        ndim     u8
        shape    u64 * ndim
        data     product(shape) little-endian reals, row-major

Entries keep insertion order, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"MTPNCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray], header: dict | None = None) -> None:
    blob = json.dumps(header or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            arr = np.asarray(arr)
            if arr.dtype not in _CODES:
                raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
            code = _CODES[arr.dtype]
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = 16
    header = json.loads(buf[pos : pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        code, ndim = struct.unpack_from("<BB", buf, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        dtype = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(buf, dtype=dtype, count=n, offset=pos).reshape(shape)
        pos += n * dtype.itemsize
        params[name] = arr.astype(dtype.newbyteorder("="), copy=True)
    return header, params


def load_into(model, params: dict[str, np.ndarray]) -> None:
    """Copy arrays into a module's parameters; names and shapes must match exactly."""
    live = model.parameters()
    missing = set(live) - set(params)
    extra = set(params) - set(live)
    if missing or extra:
        raise CheckpointError(f"parameter mismatch: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}")
    for name, p in live.items():
        arr = params[name]
        if arr.shape != p.shape:
            raise CheckpointError(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
        p.data = arr.astype(p.dtype, copy=True)
