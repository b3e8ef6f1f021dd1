"""Language-neutral binary containers for arrays and model checkpoints.

Array files: magic ``CINEARR\\0``, u32 version, u32 ndim, u64 dims, u8 dtype
code, then raw little-endian data. Codes: 0 = complex64 (interleaved float32
real/imag), 1 = float32, 2 = uint8 (masks). Checkpoint files: magic
``CINECKPT``, u32 version, u32 header length, a sorted-key JSON header that
includes the array directory (names, shapes, dtypes), then the raw
little-endian parameter blobs concatenated in directory order. Neither
format embeds timestamps, so identical content gives identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["write_array", "read_array", "save_checkpoint", "load_checkpoint", "ensure_dir"]

ARRAY_MAGIC = b"CINEARR\0"
CKPT_MAGIC = b"CINECKPT"
VERSION = 1

_DTYPE_CODES = {0: np.dtype("<c8"), 1: np.dtype("<f4"), 2: np.dtype("u1")}
_CODE_FOR_KIND = {"c": 0, "f": 1, "u": 2, "b": 2}


def _code_for(arr: np.ndarray) -> int:
    code = _CODE_FOR_KIND.get(arr.dtype.kind)
    if code is None:
        raise ValueError(f"unsupported array dtype {arr.dtype}")
    return code


def write_array(path, arr: np.ndarray) -> None:
    """Serialize ``arr`` (complex -> complex64, float -> float32, bool/uint -> uint8)."""
    arr = np.asarray(arr)
    code = _code_for(arr)
    data = np.ascontiguousarray(arr.astype(_DTYPE_CODES[code], copy=False))
    with open(path, "wb") as f:
        f.write(ARRAY_MAGIC)
        f.write(struct.pack("<II", VERSION, data.ndim))
        f.write(struct.pack(f"<{data.ndim}Q", *data.shape))
        f.write(struct.pack("<B", code))
        f.write(data.tobytes())


def read_array(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != ARRAY_MAGIC:
            raise ValueError(f"{path}: not a CINEARR file")
        version, ndim = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
        (code,) = struct.unpack("<B", f.read(1))
        if code not in _DTYPE_CODES:
            raise ValueError(f"{path}: unknown dtype code {code}")
        dtype = _DTYPE_CODES[code]
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(f.read(count * dtype.itemsize), dtype=dtype)
        if data.size != count:
            raise ValueError(f"{path}: truncated data")
    return data.reshape(shape).copy()


def save_checkpoint(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a parameter blob with a JSON header.

    ``header`` should carry the config fingerprint, parameter count, loss
    history, and seed; schedule parameters are included for diffusion
    checkpoints. The array directory is appended automatically.
    """
    names = list(arrays)
    blobs = []
    directory = []
    for name in names:
        a = np.ascontiguousarray(arrays[name])
        if a.dtype.kind not in "fc":
            a = a.astype("<f4")
        dt = "<c8" if a.dtype.kind == "c" else "<f4"
        a = a.astype(dt, copy=False)
        directory.append({"name": name, "shape": list(a.shape), "dtype": dt})
        blobs.append(a.tobytes())
    full_header = dict(header)
    full_header["arrays"] = directory
    payload = json.dumps(full_header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", VERSION, len(payload)))
        f.write(payload)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        header = json.loads(f.read(hlen).decode())
        arrays = {}
        for entry in header.pop("arrays"):
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            data = np.frombuffer(f.read(count * dtype.itemsize), dtype=dtype)
            if data.size != count:
                raise ValueError(f"{path}: truncated array {entry['name']}")
            arrays[entry["name"]] = data.reshape(entry["shape"]).copy()
    return header, arrays


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
