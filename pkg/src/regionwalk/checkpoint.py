"""Binary checkpoint container.

Layout: magic ``VSCK``, u32 version, u32 config length + UTF-8 ``key=value``
config text, then repeated records of u32 name length, UTF-8 name, u32 rows,
u32 cols, rows*cols float64 little-endian payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, PayloadLengthError

MAGIC = b"VSCK"
VERSION = 1
_U32 = struct.Struct("<I")


def write_vsck(path, config_text: str, records: dict[str, np.ndarray]) -> None:
    path = Path(path)
    blob = config_text.encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(_U32.pack(VERSION))
        fh.write(_U32.pack(len(blob)))
        fh.write(blob)
        for name, arr in records.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            if a.ndim != 2:
                raise FormatError(f"write_vsck: record {name!r} is not 2-D")
            nb = name.encode("utf-8")
            fh.write(_U32.pack(len(nb)))
            fh.write(nb)
            fh.write(_U32.pack(a.shape[0]))
            fh.write(_U32.pack(a.shape[1]))
            fh.write(a.tobytes())


def read_vsck(path) -> tuple[str, dict[str, np.ndarray]]:
    path = Path(path)
    raw = path.read_bytes()
    view = memoryview(raw)
    pos = 0

    def take(nbytes: int, what: str) -> memoryview:
        nonlocal pos
        if pos + nbytes > len(raw):
            raise PayloadLengthError(f"{path}: truncated while reading {what}")
        chunk = view[pos : pos + nbytes]
        pos += nbytes
        return chunk

    magic = bytes(take(4, "magic"))
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version = _U32.unpack(take(4, "version"))[0]
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    cfg_len = _U32.unpack(take(4, "config length"))[0]
    try:
        config_text = bytes(take(cfg_len, "config")).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: config block is not UTF-8") from exc
    records: dict[str, np.ndarray] = {}
    while pos < len(raw):
        name_len = _U32.unpack(take(4, "record name length"))[0]
        name = bytes(take(name_len, "record name")).decode("utf-8")
        rows = _U32.unpack(take(4, f"{name} rows"))[0]
        cols = _U32.unpack(take(4, f"{name} cols"))[0]
        payload = take(rows * cols * 8, f"{name} payload")
        arr = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
        records[name] = arr.astype(np.float64)
    return config_text, records
