"""16-bit binary PGM (P5) image I/O and the truth sidecar format.

The mosaic interchange format is deliberately minimal: big-endian 16-bit
grayscale PGM for the intensities (values rounded and clipped to
[0, 65535]), and a ``key = value`` text sidecar describing the scene that
produced a synthetic frame.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import BadDimensions
from .polarimetry import MosaicFrame, MosaicPattern

__all__ = [
    "pgm_bytes",
    "write_pgm",
    "read_pgm",
    "parse_pgm",
    "truth_sidecar_text",
    "write_truth_sidecar",
    "read_truth_sidecar",
    "PGM_MAXVAL",
]

PGM_MAXVAL = 65535


def pgm_bytes(frame: MosaicFrame) -> bytes:
    """Encode the mosaic as binary 16-bit PGM (quantizes the intensities)."""
    arr = np.clip(np.rint(frame.intensities), 0, PGM_MAXVAL).astype(">u2")
    header = f"P5\n{frame.width} {frame.height}\n{PGM_MAXVAL}\n".encode("ascii")
    return header + arr.tobytes()


def write_pgm(path, frame: MosaicFrame) -> None:
    Path(path).write_bytes(pgm_bytes(frame))


def _read_header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace tokens, skipping ``#`` comments; returns
    the tokens and the offset just past the single whitespace that ends the
    last one."""
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i + 1].isspace():
            i += 1
        if start == i:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:i])
    return tokens, i + 1


def read_pgm(path, pattern: MosaicPattern | None = None) -> MosaicFrame:
    """Read a binary PGM file into a :class:`MosaicFrame`.

    The polarizer ``pattern`` comes from configuration, not the file; when
    omitted the package default layout is assumed.
    """
    return parse_pgm(Path(path).read_bytes(), pattern)


def parse_pgm(data: bytes, pattern: MosaicPattern | None = None) -> MosaicFrame:
    """Decode binary PGM bytes into a :class:`MosaicFrame`."""
    tokens, offset = _read_header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval <= 0 or maxval > PGM_MAXVAL:
        raise ValueError(f"unsupported maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height
    pixels = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    if pixels.size != count:
        raise BadDimensions(f"expected {count} pixels, file holds {pixels.size}")
    arr = pixels.reshape(height, width).astype(float)
    return MosaicFrame(arr, pattern or MosaicPattern.TL90_TR45_BL135_BR0)


def truth_sidecar_text(values: dict) -> str:
    """Scene truth as ``key = value`` lines (floats via repr)."""
    lines = []
    for key, val in values.items():
        if isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def write_truth_sidecar(path, values: dict) -> None:
    Path(path).write_text(truth_sidecar_text(values), encoding="ascii")


def read_truth_sidecar(path) -> dict:
    """Parse a truth sidecar back into a dict (floats where possible)."""
    out: dict = {}
    for raw in Path(path).read_text(encoding="ascii").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        try:
            out[key] = float(val)
            if out[key] == math.floor(out[key]) and "." not in val and "e" not in val.lower():
                out[key] = int(val)
        except ValueError:
            out[key] = val
    return out
