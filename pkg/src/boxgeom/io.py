"""File formats: images, JSON-lines, config files and BXT1 dense tensors.

BXT1 layout (little-endian)::

    b"BXT1" | u8 dtype (0 = uint8, 1 = float32) | u8 ndim | ndim x u32 dims | payload

The payload is the row-major array.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from PIL import Image

BXT_MAGIC = b"BXT1"
_BXT_DTYPES = {0: np.dtype("<u1"), 1: np.dtype("<f4")}
_BXT_CODES = {np.dtype("uint8"): 0, np.dtype("float32"): 1}


def read_image(path) -> np.ndarray:
    """Read PNG/JPEG as uint8 (or uint16 for 16-bit PNG) array."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            return np.asarray(im, dtype=np.uint16) if im.mode != "I" else np.asarray(im).astype(np.uint16)
        if im.mode not in ("L", "RGB", "RGBA"):
            im = im.convert("RGB")
        return np.asarray(im).copy()


def write_png(path, img: np.ndarray) -> None:
    """Write a 1/3/4-channel uint8 image (or 2D uint16) as PNG, no metadata."""
    arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if arr.dtype == np.uint16 and arr.ndim == 2:
        im = Image.fromarray(arr)
    else:
        if arr.dtype != np.uint8:
            raise ValueError(f"PNG output expects uint8, got {arr.dtype}")
        im = Image.fromarray(arr)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    im.save(path, format="PNG", optimize=False)


def read_probability_map(path) -> np.ndarray:
    """Single-channel 8/16-bit PNG as probabilities (value / dtype maximum)."""
    arr = read_image(path)
    if arr.ndim == 3:
        arr = arr[..., 0]
    scale = 65535.0 if arr.dtype == np.uint16 else 255.0
    return arr.astype(float) / scale


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc


def write_jsonl(path, rows: Iterable[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> dict:
    """Load a TOML or JSON config file (chosen by extension)."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        import tomli

        with open(path, "rb") as fh:
            return tomli.load(fh)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_bxt(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    code = _BXT_CODES.get(arr.dtype)
    if code is None:
        raise ValueError(f"BXT1 supports uint8 and float32, got {arr.dtype}")
    header = BXT_MAGIC + struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype=_BXT_DTYPES[code]).tobytes())


def read_bxt(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != BXT_MAGIC:
        raise ValueError(f"{path}: not a BXT1 file")
    code, ndim = struct.unpack_from("<BB", data, 4)
    if code not in _BXT_DTYPES:
        raise ValueError(f"{path}: unknown dtype code {code}")
    dims = struct.unpack_from(f"<{ndim}I", data, 6)
    offset = 6 + 4 * ndim
    dtype = _BXT_DTYPES[code]
    count = int(np.prod(dims)) if ndim else 1
    if len(data) - offset != count * dtype.itemsize:
        raise ValueError(f"{path}: payload size does not match header")
    return np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(dims).astype(dtype.newbyteorder("="))
