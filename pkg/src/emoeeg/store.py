"""Versioned binary container shared by the feature, tensor and model stores.

Layout::

    b"EMOEEG\\x00\\x00"            8-byte magic
    uint32 LE                      format version
    uint32 LE                      header length in bytes
    header                         UTF-8 JSON, sorted keys
    payload                        tensors back to back, row-major, little-endian

The header holds ``kind``, free-form ``meta`` and a ``tensors`` manifest of
``{name, dtype, shape, offset, nbytes}`` records. Serialisation is canonical, so
equal content always yields equal bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMOEEG\x00\x00"
FORMAT_VERSION = 1
_DTYPES = {"f8": "<f8", "f4": "<f4", "i8": "<i8"}


class StoreError(ValueError):
    pass


def _dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype.kind == "f":
        return "f4" if arr.dtype.itemsize == 4 else "f8"
    if arr.dtype.kind in "iub":
        return "i8"
    raise StoreError(f"unsupported dtype {arr.dtype}")


def pack(kind: str, tensors: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    manifest, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        tag = _dtype_tag(arr)
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
        manifest.append({"name": name, "dtype": tag, "shape": list(arr.shape),
                         "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"kind": kind, "meta": meta or {}, "tensors": manifest},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<II", FORMAT_VERSION, len(header)) + header + b"".join(blobs)


def unpack(data: bytes) -> tuple[str, dict[str, np.ndarray], dict]:
    if data[:8] != MAGIC:
        raise StoreError("not an emoeeg container")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise StoreError(f"unsupported container version {version}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    base = 16 + hlen
    tensors = {}
    for rec in header["tensors"]:
        start = base + rec["offset"]
        buf = data[start:start + rec["nbytes"]]
        arr = np.frombuffer(buf, dtype=_DTYPES[rec["dtype"]]).reshape(rec["shape"])
        tensors[rec["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    return header["kind"], tensors, header["meta"]


def save(path: str | Path, kind: str, tensors: dict[str, np.ndarray],
         meta: dict | None = None) -> None:
    Path(path).write_bytes(pack(kind, tensors, meta))


def load(path: str | Path, expect_kind: str | None = None):
    kind, tensors, meta = unpack(Path(path).read_bytes())
    if expect_kind is not None and kind != expect_kind:
        raise StoreError(f"{path}: expected a {expect_kind!r} container, found {kind!r}")
    return kind, tensors, meta


def save_tensor(path: str | Path, array: np.ndarray, meta: dict | None = None) -> None:
    """Tensor store: a single float32 array named ``data``."""
    save(path, "tensor", {"data": np.asarray(array, dtype=np.float32)}, meta)


def load_tensor(path: str | Path) -> tuple[np.ndarray, dict]:
    _, tensors, meta = load(path, "tensor")
    return tensors["data"], meta


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Write an HxWx3 image with values in [0, 1] as a binary PPM (P6)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise StoreError(f"PPM needs an HxWx3 image, got {img.shape}")
    pix = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = pix.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + pix.tobytes())
