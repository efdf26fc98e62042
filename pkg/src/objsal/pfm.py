"""Portable FloatMap (PFM) reader and writer, grayscale only.

Header: magic line ("Pf" grayscale), "width height", then a scale whose
sign selects endianness (negative = little-endian). Payload is float32
rows stored bottom-to-top. The magnitude of the scale is ignored.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def _split_header_line(data: bytes, start: int) -> tuple[str, int]:
    end = data.find(b"\n", start)
    if end < 0:
        raise FormatError("truncated PFM header")
    try:
        return data[start:end].decode("ascii").strip(), end + 1
    except UnicodeDecodeError as exc:
        raise FormatError("non-ASCII bytes in PFM header") from exc


def parse_pfm(data: bytes) -> np.ndarray:
    """Decode grayscale PFM bytes into a float64 array (top row first)."""
    magic, offset = _split_header_line(data, 0)
    if magic == "PF":
        raise FormatError("color PFM is not supported, expected grayscale 'Pf'")
    if magic != "Pf":
        raise FormatError(f"not a PFM file (magic {magic!r})")
    dims, offset = _split_header_line(data, offset)
    parts = dims.split()
    if len(parts) != 2:
        raise FormatError("malformed PFM dimensions line")
    scale_text, offset = _split_header_line(data, offset)
    try:
        width, height = int(parts[0]), int(parts[1])
        scale = float(scale_text)
    except ValueError as exc:
        raise FormatError("malformed PFM header") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"invalid PFM dimensions {width}x{height}")
    if scale == 0.0:
        raise FormatError("PFM scale must be nonzero")
    expected = width * height * 4
    if len(data) - offset < expected:
        raise FormatError(
            f"truncated PFM payload: expected {expected} bytes, got {len(data) - offset}"
        )
    dtype = "<f4" if scale < 0 else ">f4"
    payload = memoryview(data)[offset : offset + expected]
    rows = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return np.flipud(rows).astype(np.float64)


def read_pfm(path) -> np.ndarray:
    """Load a grayscale PFM file as a float64 array (top row first)."""
    with open(path, "rb") as fh:
        return parse_pfm(fh.read())


def write_pfm(path, values: np.ndarray, *, little_endian: bool = True) -> None:
    """Write a 2-D array as a grayscale PFM file."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise FormatError(f"PFM payload must be 2-D, got shape {arr.shape}")
    height, width = arr.shape
    dtype = "<f4" if little_endian else ">f4"
    scale = -1.0 if little_endian else 1.0
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{width} {height}\n{scale}\n".encode("ascii"))
        fh.write(np.flipud(arr).astype(dtype).tobytes())


def write_pfm_unit_sum(path, values: np.ndarray, *, little_endian: bool = True) -> None:
    """Write a unit-sum map so that the stored float32 payload still sums to 1.

    Bare float32 quantization drifts the total by a few 1e-9; the residual is
    folded into a pixel small enough for float32 spacing to absorb it.
    """
    payload = np.asarray(values, dtype=np.float64).astype(np.float32)
    flat = payload.ravel()
    for _ in range(4):
        residual = float(payload.astype(np.float64).sum()) - 1.0
        if abs(residual) <= 1e-10:
            break
        # a pixel near 1e4 * |residual| has ulp ~1e-3 of the residual and
        # stays positive after the correction
        idx = int(np.argmin(np.abs(flat - 1e4 * abs(residual))))
        corrected = float(flat[idx]) - residual
        if corrected < 0.0:
            break
        flat[idx] = np.float32(corrected)
    write_pfm(path, payload.astype(np.float64), little_endian=little_endian)
