"""Binary containers: ``UATV`` (TVIR datasets) and ``UACK`` (checkpoints).

UATV layout, little-endian::

    b"UATV" | u16 version | u32 record count
    per record:
        u16 T | u16 D | f64 time_step | f64 delay_step
        T*D*2 f32 (interleaved real, imag; row-major over T then D)
        u32 n | n bytes UTF-8 JSON metadata

UACK layout, little-endian::

    b"UACK" | u16 version | u32 n | n bytes UTF-8 JSON hyperparameters
    u32 tensor count
    per tensor:
        u16 n | n bytes UTF-8 name | u8 ndim | ndim * u32 shape | f32 data
"""

from __future__ import annotations

import io
import json
import os
import struct
from pathlib import Path
from typing import Any, BinaryIO, Iterable, Iterator

import numpy as np

from .errors import FormatError
from .tvir import Tvir

UATV_MAGIC = b"UATV"
UACK_MAGIC = b"UACK"
UATV_VERSION = 1
UACK_VERSION = 1


def _dump_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _read_exact(f: BinaryIO, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise FormatError(f"unexpected end of file (wanted {n} bytes, got {len(b)})")
    return b


def encode_tvir_record(tvir: Tvir) -> bytes:
    t, d = tvir.snapshots.shape
    if t > 0xFFFF or d > 0xFFFF:
        raise FormatError("T and D must fit in u16")
    buf = io.BytesIO()
    buf.write(struct.pack("<HHdd", t, d, tvir.time_step, tvir.delay_step))
    inter = np.empty((t, d, 2), dtype="<f4")
    inter[..., 0] = tvir.snapshots.real
    inter[..., 1] = tvir.snapshots.imag
    buf.write(inter.tobytes())
    meta = _dump_json(tvir.metadata)
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    return buf.getvalue()


def _read_tvir_record(f: BinaryIO) -> Tvir:
    t, d, dt, dd = struct.unpack("<HHdd", _read_exact(f, 20))
    data = np.frombuffer(_read_exact(f, t * d * 8), dtype="<f4").reshape(t, d, 2)
    (n,) = struct.unpack("<I", _read_exact(f, 4))
    meta = json.loads(_read_exact(f, n).decode("utf-8")) if n else {}
    x = data[..., 0].astype(np.float64) + 1j * data[..., 1].astype(np.float64)
    return Tvir(x, time_step=dt, delay_step=dd, metadata=meta)


def write_uatv(path: str | os.PathLike, tvirs: Iterable[Tvir]) -> Path:
    """Write TVIRs to ``path`` atomically (temp file + rename).

    A failure part-way through removes the partial temp file.
    """
    path = Path(path)
    records = [encode_tvir_record(t) for t in tvirs]
    tmp = path.with_name(path.name + ".part")
    try:
        with open(tmp, "wb") as f:
            f.write(UATV_MAGIC)
            f.write(struct.pack("<HI", UATV_VERSION, len(records)))
            for r in records:
                f.write(r)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def iter_uatv(path: str | os.PathLike) -> Iterator[Tvir]:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != UATV_MAGIC:
            raise FormatError(f"{path}: not a UATV file")
        version, count = struct.unpack("<HI", _read_exact(f, 6))
        if version != UATV_VERSION:
            raise FormatError(f"{path}: unsupported UATV version {version}")
        for _ in range(count):
            yield _read_tvir_record(f)


def read_uatv(path: str | os.PathLike) -> list[Tvir]:
    return list(iter_uatv(path))


def save_checkpoint(
    path: str | os.PathLike, hparams: dict[str, Any], tensors: dict[str, np.ndarray]
) -> Path:
    """Write a UACK checkpoint.  Tensors are stored as f32 in insertion order."""
    path = Path(path)
    buf = io.BytesIO()
    buf.write(UACK_MAGIC)
    meta = _dump_json(hparams)
    buf.write(struct.pack("<HI", UACK_VERSION, len(meta)))
    buf.write(meta)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        a = np.array(arr, dtype="<f4", order="C")  # keeps 0-d shapes, unlike ascontiguousarray
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", a.ndim))
        buf.write(struct.pack(f"<{a.ndim}I", *a.shape))
        buf.write(a.tobytes())
    tmp = path.with_name(path.name + ".part")
    try:
        tmp.write_bytes(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != UACK_MAGIC:
            raise FormatError(f"{path}: not a UACK checkpoint")
        version, n = struct.unpack("<HI", _read_exact(f, 6))
        if version != UACK_VERSION:
            raise FormatError(f"{path}: unsupported UACK version {version}")
        hparams = json.loads(_read_exact(f, n).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (ln,) = struct.unpack("<H", _read_exact(f, 2))
            name = _read_exact(f, ln).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
            size = int(np.prod(shape, dtype=np.int64))
            data = np.frombuffer(_read_exact(f, 4 * size), dtype="<f4").reshape(shape)
            tensors[name] = data.astype(np.float32)
        return hparams, tensors
