"""Named-array binary container used for model, sequence and checkpoint files.

Layout (all integers little-endian)::

    8 bytes   magic  b"GRASPKIT"
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header: {"kind", "version", "meta", "arrays": [...]}
    ...       array payloads, little-endian, C order, in header order

Each ``arrays`` entry is ``{"name", "dtype", "shape", "offset", "nbytes"}`` with
``offset`` relative to the first payload byte.  The header is written with
sorted keys and no timestamps so identical content gives identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GRASPKIT"
_ALLOWED_DTYPES = {"<f8", "<i8", "<f4", "<i4", "|u1", "|b1"}


class ContainerError(ValueError):
    pass


def _encode(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.kind == "f":
        return arr.astype("<f8" if arr.dtype.itemsize == 8 else "<f4", copy=False)
    if arr.dtype.kind in "iu" and arr.dtype.itemsize > 1:
        return arr.astype("<i8" if arr.dtype.itemsize == 8 else "<i4", copy=False)
    if arr.dtype.kind == "b":
        return arr.astype("|b1", copy=False)
    if arr.dtype == np.uint8:
        return arr
    raise ContainerError(f"unsupported dtype {arr.dtype}")


def to_bytes(kind: str, version: int, arrays: dict, meta: dict | None = None) -> bytes:
    entries, payload, offset = [], [], 0
    for name, value in arrays.items():
        arr = _encode(np.asarray(value))
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        payload.append(raw)
        offset += len(raw)
    header = json.dumps({"kind": kind, "version": version, "meta": meta or {}, "arrays": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(payload)


def write(path, kind: str, version: int, arrays: dict, meta: dict | None = None) -> str:
    """Write a container and return the SHA-256 of its bytes."""
    data = to_bytes(kind, version, arrays, meta)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def from_bytes(data: bytes, kind: str, version: int, source="<bytes>"):
    """Parse container bytes; returns ``(arrays, meta)``."""
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise ContainerError(f"{source}: not a graspkit container (bad magic)")
    (hlen,) = struct.unpack("<I", data[len(MAGIC):len(MAGIC) + 4])
    start = len(MAGIC) + 4
    if len(data) < start + hlen:
        raise ContainerError(f"{source}: truncated file (header incomplete)")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{source}: corrupt header ({exc})") from None
    if header.get("kind") != kind:
        raise ContainerError(f"{source}: expected a {kind!r} file, found {header.get('kind')!r}")
    if header.get("version") != version:
        raise ContainerError(
            f"{source}: unsupported {kind} version {header.get('version')} (this build reads version {version})")
    base = start + hlen
    arrays = {}
    for entry in header["arrays"]:
        if entry["dtype"] not in _ALLOWED_DTYPES:
            raise ContainerError(f"{source}: array {entry['name']!r} has unsupported dtype {entry['dtype']}")
        lo = base + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(data):
            raise ContainerError(f"{source}: truncated file (array {entry['name']!r} incomplete)")
        arr = np.frombuffer(data[lo:hi], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    expected_end = base + sum(e["nbytes"] for e in header["arrays"])
    if len(data) != expected_end:
        raise ContainerError(f"{source}: trailing or missing bytes ({len(data)} != {expected_end})")
    return arrays, header.get("meta", {})


def read(path, kind: str, version: int):
    path = Path(path)
    if not path.exists():
        raise ContainerError(f"{path}: file not found")
    return from_bytes(path.read_bytes(), kind, version, source=str(path))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
