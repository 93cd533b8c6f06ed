"""Bit-exact file formats.

Depth maps travel as 16-bit binary PGM (P5, maxval 65535, big-endian) with
depth_m = raw / 256 and raw 0 meaning no measurement. Float imagery
(features, selection maps, pyramid levels) travels as PFM, little-endian via
a negative scale, rows bottom-to-top.
"""

import numpy as np

from .errors import FormatError

PGM_MAXVAL = 65535
PGM_SCALE = 256.0


def write_pgm16(path, depth_m, mask=None):
    """Write a (H,W) depth map in meters; pixels with mask 0 become raw 0."""
    depth_m = np.asarray(depth_m, dtype=np.float64)
    if depth_m.ndim != 2:
        raise FormatError(f"pgm16 expects a (H,W) array, got shape {depth_m.shape}")
    if not np.all(np.isfinite(depth_m)):
        raise FormatError("pgm16 cannot encode non-finite depths")
    raw = np.clip(np.round(depth_m * PGM_SCALE), 0, PGM_MAXVAL).astype(np.uint16)
    if mask is not None:
        raw = np.where(np.asarray(mask) > 0, raw, 0).astype(np.uint16)
    h, w = raw.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{PGM_MAXVAL}\n".encode())
        fh.write(raw.astype(">u2").tobytes())


def _read_pgm_tokens(fh, count):
    """Whitespace-separated header tokens, honoring '#' comment lines."""
    tokens = []
    current = b""
    while len(tokens) < count:
        ch = fh.read(1)
        if not ch:
            raise FormatError("truncated PGM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if current:
                tokens.append(current)
                current = b""
            continue
        current += ch
    return tokens


def read_pgm16(path):
    """Return (depth_m, mask) float arrays of shape (H,W)."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic != b"P5":
            raise FormatError(f"not a binary PGM (magic {magic!r})")
        try:
            w, h, maxval = (int(t) for t in _read_pgm_tokens(fh, 3))
        except ValueError as exc:
            raise FormatError(f"malformed PGM header: {exc}") from exc
        if maxval != PGM_MAXVAL:
            raise FormatError(f"expected maxval {PGM_MAXVAL}, got {maxval}")
        raster = fh.read(2 * w * h)
        if len(raster) != 2 * w * h:
            raise FormatError("truncated PGM raster")
    raw = np.frombuffer(raster, dtype=">u2").reshape(h, w).astype(np.float64)
    mask = (raw > 0).astype(np.float64)
    return raw / PGM_SCALE, mask


def write_pfm(path, array):
    """Write (H,W) as grayscale Pf or (3,H,W) as color PF, float32 LE."""
    array = np.asarray(array, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise FormatError("pfm cannot encode non-finite values")
    if array.ndim == 2:
        magic, h, w = b"Pf", array.shape[0], array.shape[1]
        plane = array[:, :, None]
    elif array.ndim == 3 and array.shape[0] == 3:
        magic, h, w = b"PF", array.shape[1], array.shape[2]
        plane = array.transpose(1, 2, 0)
    else:
        raise FormatError(f"pfm expects (H,W) or (3,H,W), got shape {array.shape}")
    with open(path, "wb") as fh:
        fh.write(magic + b"\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")  # negative scale: little-endian
        fh.write(np.flipud(plane).astype("<f4").tobytes())


def read_pfm(path):
    """Return (H,W) or (3,H,W) float64 array."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic == b"Pf":
            channels = 1
        elif magic == b"PF":
            channels = 3
        else:
            raise FormatError(f"not a PFM file (magic {magic!r})")
        try:
            w, h = (int(t) for t in fh.readline().split())
            scale = float(fh.readline())
        except ValueError as exc:
            raise FormatError(f"malformed PFM header: {exc}") from exc
        if scale == 0:
            raise FormatError("PFM scale must be non-zero")
        dtype = "<f4" if scale < 0 else ">f4"
        raster = fh.read(4 * w * h * channels)
        if len(raster) != 4 * w * h * channels:
            raise FormatError("truncated PFM raster")
    plane = np.flipud(np.frombuffer(raster, dtype=dtype).reshape(h, w, channels))
    plane = plane.astype(np.float64)
    if abs(scale) != 1.0:
        plane *= abs(scale)
    if channels == 1:
        return plane[:, :, 0].copy()
    return plane.transpose(2, 0, 1).copy()
