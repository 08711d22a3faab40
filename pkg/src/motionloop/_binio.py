"""Deterministic binary container for model artifacts.

Layout: a magic line, one compact JSON header line (metadata plus an array
directory), then the raw little-endian bytes of each array in directory
order. No timestamps or platform fields, so equal inputs give equal bytes.
"""

from __future__ import annotations

import json
import numpy as np

MAGIC = b"MLBIN1\n"


class BadContainer(Exception):
    pass


def save_arrays(path: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    directory = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
        directory.append([name, list(arr.shape)])
        blobs.append(arr.astype("<f8").tobytes())
    header = json.dumps(
        {"meta": meta, "arrays": directory}, separators=(",", ":"), sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(header)
        f.write(b"\n")
        for blob in blobs:
            f.write(blob)


def load_arrays(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise BadContainer(f"bad magic in {path!r}")
        header_line = f.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BadContainer(f"unreadable header in {path!r}: {exc}") from exc
        arrays: dict[str, np.ndarray] = {}
        for name, shape in header.get("arrays", []):
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise BadContainer(f"truncated array {name!r} in {path!r}")
            arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        if f.read(1):
            raise BadContainer(f"trailing bytes in {path!r}")
    return header.get("meta", {}), arrays
