"""Bit-exact parameter persistence.

A parameter set is written as two files: ``<base>.manifest``, a text listing
of (name, shape, element offset) sorted by name, and ``<base>.bin``, the
concatenated raw little-endian float64 payload.  Loading reproduces every
array bit-exactly on any platform.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MANIFEST_HEADER = "# params v1 float64 little-endian"


def save_params(base: str | Path, arrays: dict[str, np.ndarray]) -> None:
    base = Path(base)
    lines = [MANIFEST_HEADER]
    payload = bytearray()
    offset = 0
    for name in sorted(arrays):
        if any(ch.isspace() for ch in name):
            raise ValueError(f"parameter name {name!r} contains whitespace")
        arr = np.asarray(arrays[name], dtype=np.float64)
        shape = "x".join(str(s) for s in arr.shape) or "scalar"
        lines.append(f"{name} {shape} {offset}")
        payload.extend(arr.astype("<f8").tobytes())
        offset += arr.size
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(base.suffix + ".manifest").write_text("\n".join(lines) + "\n")
    base.with_suffix(base.suffix + ".bin").write_bytes(bytes(payload))


def load_params(base: str | Path) -> dict[str, np.ndarray]:
    base = Path(base)
    manifest = base.with_suffix(base.suffix + ".manifest").read_text().splitlines()
    if not manifest or manifest[0] != MANIFEST_HEADER:
        raise ValueError("unrecognised manifest header")
    raw = base.with_suffix(base.suffix + ".bin").read_bytes()
    flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)

    out: dict[str, np.ndarray] = {}
    for line in manifest[1:]:
        if not line.strip():
            continue
        name, shape_s, offset_s = line.split()
        shape = () if shape_s == "scalar" else tuple(int(s) for s in shape_s.split("x"))
        size = int(np.prod(shape)) if shape else 1
        offset = int(offset_s)
        out[name] = flat[offset:offset + size].reshape(shape).copy()
    return out
