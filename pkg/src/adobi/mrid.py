"""MRID binary container for images, k-space stacks, masks, coil maps and denoisers.

Layout (all little-endian)::

    magic   4 bytes  b"MRID"
    version u32      1
    kind    u8       0 image | 1 kspace-stack | 2 mask | 3 maps | 4 denoiser
    ndim    u32
    dims    u64 * ndim
    dtype   u8       0 complex (interleaved float32 re/im) | 1 float32 | 2 u8
    payload          row-major
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .core import FormatError, MultiCoilKSpace, SamplingMask, SensitivityMaps, as_image

MAGIC = b"MRID"
VERSION = 1
KINDS = {"image": 0, "kspace-stack": 1, "mask": 2, "maps": 3, "denoiser": 4}
KIND_NAMES = {v: k for k, v in KINDS.items()}
DTYPE_COMPLEX, DTYPE_FLOAT32, DTYPE_U8 = 0, 1, 2
_ITEM = {DTYPE_COMPLEX: 8, DTYPE_FLOAT32: 4, DTYPE_U8: 1}


def encode(array: np.ndarray, kind: str) -> bytes:
    a = np.asarray(array)
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if np.iscomplexobj(a):
        dtype = DTYPE_COMPLEX
        payload = np.ascontiguousarray(a, dtype="<c8").tobytes()
    elif a.dtype == np.uint8 or a.dtype == bool:
        dtype = DTYPE_U8
        payload = np.ascontiguousarray(a, dtype=np.uint8).tobytes()
    else:
        dtype = DTYPE_FLOAT32
        payload = np.ascontiguousarray(a, dtype="<f4").tobytes()
    header = struct.pack("<4sIBI", MAGIC, VERSION, KINDS[kind], a.ndim)
    header += struct.pack(f"<{a.ndim}Q", *a.shape)
    header += struct.pack("<B", dtype)
    return header + payload


def decode(buf: bytes) -> tuple[str, np.ndarray]:
    """Parse an MRID buffer. Raises :class:`FormatError` with the failing byte offset."""
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"truncated {what}: need {n} bytes, have {len(buf) - pos}", pos)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError("bad magic", 0)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (kind,) = struct.unpack("<B", take(1, "kind"))
    if kind not in KIND_NAMES:
        raise FormatError(f"unknown kind {kind}", 8)
    (ndim,) = struct.unpack("<I", take(4, "ndim"))
    if ndim > 16:
        raise FormatError(f"implausible ndim {ndim}", 9)
    dims = struct.unpack(f"<{ndim}Q", take(8 * ndim, "dims"))
    dtype_pos = pos
    (dtype,) = struct.unpack("<B", take(1, "dtype"))
    if dtype not in _ITEM:
        raise FormatError(f"unknown dtype {dtype}", dtype_pos)
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    payload = take(count * _ITEM[dtype], "payload")
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes", pos)
    np_dtype = {DTYPE_COMPLEX: "<c8", DTYPE_FLOAT32: "<f4", DTYPE_U8: np.uint8}[dtype]
    a = np.frombuffer(payload, dtype=np_dtype).reshape(dims)
    if dtype == DTYPE_COMPLEX:
        a = a.astype(np.complex128)
    elif dtype == DTYPE_FLOAT32:
        a = a.astype(np.float64)
    else:
        a = a.copy()
    return KIND_NAMES[kind], a


def save_array(path, array, kind: str) -> None:
    path = Path(path)
    data = encode(array, kind)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def load_array(path, expect: str | None = None) -> tuple[str, np.ndarray]:
    kind, a = decode(Path(path).read_bytes())
    if expect is not None and kind != expect:
        raise FormatError(f"expected kind {expect!r}, file holds {kind!r}", 8)
    return kind, a


def save_image(path, image) -> None:
    save_array(path, as_image(image), "image")


def load_image(path) -> np.ndarray:
    _, a = load_array(path, "image")
    return as_image(a)


def save_maps(path, maps: SensitivityMaps) -> None:
    save_array(path, maps.maps, "maps")


def load_maps(path, tol: float = 1e-5) -> SensitivityMaps:
    """Load maps; re-normalizes when the float32 copy still satisfies the invariant to ``tol``."""
    _, a = load_array(path, "maps")
    maps = SensitivityMaps(a)
    sos = maps.sum_of_squares()
    sup = sos > 0
    if np.all(np.abs(sos[sup] - 1.0) <= tol):
        return maps.normalize()
    return maps


def save_mask(path, mask: SamplingMask) -> None:
    codes = np.zeros(mask.shape, dtype=np.uint8)
    codes[:, mask.kept] = 1
    if mask.acs_width:
        codes[:, mask.acs] = 2
    save_array(path, codes, "mask")


def load_mask(path) -> SamplingMask:
    _, codes = load_array(path, "mask")
    if codes.ndim != 2:
        raise FormatError("mask payload must be 2-D", 9)
    row = codes[0]
    height, width = codes.shape
    return SamplingMask(height, width, row > 0, int((row == 2).sum()))


def save_kspace(path, y: MultiCoilKSpace) -> None:
    save_array(path, y.planes, "kspace-stack")


def load_kspace(path, mask: SamplingMask) -> MultiCoilKSpace:
    _, a = load_array(path, "kspace-stack")
    return MultiCoilKSpace(mask.apply(a), mask)
