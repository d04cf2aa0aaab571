"""Binary netpbm image IO (8-bit RGB PPM, 16-bit grayscale PGM).

Quantization from float [0, 1] is round-half-up: q = floor(x * maxval + 0.5),
clamped to [0, maxval]. Reading maps q back to q / maxval. 16-bit PGM samples
are stored most-significant byte first, per the netpbm convention.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ContractError


def _quantize(values: np.ndarray, maxval: int) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise ContractError("image contains non-finite values")
    q = np.floor(np.clip(values, 0.0, 1.0) * maxval + 0.5)
    return np.clip(q, 0, maxval)


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an H x W x 3 float image in [0, 1] as binary PPM (P6)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ContractError(f"expected HxWx3 image, got shape {rgb.shape}")
    h, w = rgb.shape[:2]
    data = _quantize(rgb, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6) into an H x W x 3 float64 image in [0, 1]."""
    magic, (w, h), maxval, raw = _read_pnm(path, b"P6")
    if maxval != 255:
        raise ContractError(f"{path}: only maxval 255 PPM supported, got {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w * 3)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def write_pgm16(path, gray: np.ndarray) -> None:
    """Write an H x W float image in [0, 1] as 16-bit binary PGM (P5)."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ContractError(f"expected HxW image, got shape {gray.shape}")
    h, w = gray.shape
    data = _quantize(gray, 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm16(path) -> np.ndarray:
    """Read a 16-bit binary PGM (P5) into an H x W float64 image in [0, 1]."""
    magic, (w, h), maxval, raw = _read_pnm(path, b"P5")
    if maxval != 65535:
        raise ContractError(f"{path}: only maxval 65535 PGM supported, got {maxval}")
    data = np.frombuffer(raw, dtype=">u2", count=h * w)
    return data.reshape(h, w).astype(np.float64) / 65535.0


def _read_pnm(path, expected_magic):
    blob = Path(path).read_bytes()
    tokens = []
    pos = 0
    # header: magic, width, height, maxval; '#' starts a comment line
    while len(tokens) < 4:
        if pos >= len(blob):
            raise ContractError(f"{path}: truncated netpbm header")
        c = blob[pos:pos + 1]
        if c == b"#":
            pos = blob.index(b"\n", pos) + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(blob) and not blob[end:end + 1].isspace():
                end += 1
            tokens.append(blob[pos:end])
            pos = end
    pos += 1  # single whitespace byte after maxval
    magic = tokens[0]
    if magic != expected_magic:
        raise ContractError(f"{path}: expected {expected_magic.decode()} file, got {magic!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    return magic, (w, h), maxval, blob[pos:]
