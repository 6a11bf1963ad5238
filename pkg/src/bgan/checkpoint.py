"""Single-file little-endian checkpoint container.

Layout::

    b"BGAN" | u32 version | config sha256 (32) | vocab sha256 (32) | u64 iteration
    u32 n | n x parameter record
    u32 n | n x optimizer block (name, u64 step, u32 m, m x record)
    u32 len | rng substream states as UTF-8 JSON

A record is ``u32 len, path, u8 dtype, u32 rank, rank x u64 extent, raw values``.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

MAGIC = b"BGAN"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(RuntimeError):
    pass


def _w_str(fh: BinaryIO, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _w_array(fh: BinaryIO, path: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    code = _CODES[arr.dtype]
    _w_str(fh, path)
    fh.write(struct.pack("<BI", code, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def _read(fh: BinaryIO, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated checkpoint")
    return raw


def _r(fh: BinaryIO, fmt: str):
    return struct.unpack(fmt, _read(fh, struct.calcsize(fmt)))


def _r_str(fh: BinaryIO) -> str:
    (n,) = _r(fh, "<I")
    return _read(fh, n).decode("utf-8")


def _r_array(fh: BinaryIO) -> tuple[str, np.ndarray]:
    path = _r_str(fh)
    code, rank = _r(fh, "<BI")
    if code not in _DTYPES:
        raise CheckpointError(f"unknown dtype code {code} for {path!r}")
    shape = _r(fh, f"<{rank}Q") if rank else ()
    dt = _DTYPES[code]
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(_read(fh, count * dt.itemsize), dtype=dt).reshape(shape)
    return path, arr.astype(dt.newbyteorder("="))


def _stores(state):
    model = getattr(state, "model", state)
    return model, model.stores


def save_checkpoint(state, path: str | Path) -> None:
    """Write parameters, optimizer moments and (for a trainer) rng states."""
    model, stores = _stores(state)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(model.config.hash())
    buf.write(model.pipeline.vocab.hash())
    buf.write(struct.pack("<Q", getattr(state, "iteration", 0)))
    records = []
    for store in stores:
        records += [(p, t.data) for p, t in store.params.items()]
        records += [(p, b) for p, b in store.buffers.items()]
    buf.write(struct.pack("<I", len(records)))
    for p, arr in records:
        _w_array(buf, p, arr)
    buf.write(struct.pack("<I", len(stores)))
    for store in stores:
        _w_str(buf, store.name)
        moments = [(f"m/{p}", a) for p, a in store.m.items()] + [(f"v/{p}", a) for p, a in store.v.items()]
        buf.write(struct.pack("<QI", store.step, len(moments)))
        for p, arr in moments:
            _w_array(buf, p, arr)
    rng = json.dumps(state.rng_state() if hasattr(state, "rng_state") else {}, sort_keys=True)
    _w_str(buf, rng)
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint(path: str | Path) -> dict:
    """Parse a checkpoint file without binding it to a model."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    fh = io.BytesIO(raw)
    if _read(fh, 4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = _r(fh, "<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    out = {"version": version, "config_hash": _read(fh, 32), "vocab_hash": _read(fh, 32)}
    (out["iteration"],) = _r(fh, "<Q")
    (n,) = _r(fh, "<I")
    out["params"] = dict(_r_array(fh) for _ in range(n))
    (n_stores,) = _r(fh, "<I")
    out["optim"] = {}
    for _ in range(n_stores):
        name = _r_str(fh)
        step, m = _r(fh, "<QI")
        out["optim"][name] = {"step": step, "moments": dict(_r_array(fh) for _ in range(m))}
    out["rng"] = json.loads(_r_str(fh))
    if fh.read(1):
        raise CheckpointError(f"{path}: trailing bytes after checkpoint payload")
    return out


def load_checkpoint(path: str | Path, state, check_config: bool = True):
    """Restore ``state`` (a Trainer or BganModel) in place from ``path``; returns it."""
    ck = read_checkpoint(path)
    model, stores = _stores(state)
    if ck["vocab_hash"] != model.pipeline.vocab.hash():
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    if check_config and ck["config_hash"] != model.config.hash():
        raise CheckpointError(f"{path}: config hash mismatch")
    for store in stores:
        for p, t in store.params.items():
            if p not in ck["params"] or ck["params"][p].shape != t.shape:
                raise CheckpointError(f"{path}: missing or mis-shaped parameter {p!r}")
            t.data = ck["params"][p].astype(t.dtype).copy()
            t.grad = None
        for p in store.buffers:
            store.buffers[p] = ck["params"][p].copy()
        opt = ck["optim"].get(store.name)
        if opt is None:
            raise CheckpointError(f"{path}: no optimizer state for {store.name!r}")
        store.step = opt["step"]
        for p in store.m:
            store.m[p] = opt["moments"][f"m/{p}"].copy()
            store.v[p] = opt["moments"][f"v/{p}"].copy()
    if hasattr(state, "set_rng_state") and ck["rng"]:
        state.set_rng_state(ck["rng"])
        state.iteration = ck["iteration"]
    return state
