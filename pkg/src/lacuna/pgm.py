"""Minimal PGM (portable graymap) reader/writer.

Reads both ASCII (P2) and binary (P5) encodings with maxval up to 255 and
returns pixel values verbatim as a (1, 1, H, W) float map.  Writing always
emits P5 with the map linearly rescaled to [0, 255] (round half up;
constant maps write zeros), which makes write-read-write round trips
byte-identical after the first write.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeMismatchError

_WHITESPACE = b" \t\r\n\x0b\x0c"


class PgmError(ValueError):
    """Base class for PGM format problems."""


class MalformedHeaderError(PgmError):
    pass


class TruncatedPayloadError(PgmError):
    pass


class UnsupportedMaxvalError(PgmError):
    pass


def _parse(blob: bytes, path: str):
    """Header tokens (magic, width, height, maxval) and the payload offset."""
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(blob):
            ch = blob[pos:pos + 1]
            if ch == b"#":
                while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                    pos += 1
            elif ch in _WHITESPACE:
                pos += 1
            else:
                break
        if pos >= len(blob):
            raise MalformedHeaderError(f"{path}: header ended early")
        start = pos
        while pos < len(blob) and blob[pos:pos + 1] not in _WHITESPACE:
            if blob[pos:pos + 1] == b"#":
                break
            pos += 1
        return blob[start:pos]

    magic = next_token()
    if magic not in (b"P2", b"P5"):
        raise MalformedHeaderError(f"{path}: magic {magic!r} is not P2/P5")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: non-numeric header field") from exc
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"{path}: bad dims {width}x{height}")
    if maxval < 1:
        raise MalformedHeaderError(f"{path}: bad maxval {maxval}")
    if maxval > 255:
        raise UnsupportedMaxvalError(f"{path}: maxval {maxval} > 255")
    return magic, width, height, maxval, pos


def read_pgm_raw(path: str) -> tuple[np.ndarray, int]:
    """Pixels (verbatim, as (1,1,H,W) float64) plus the file's maxval."""
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, width, height, maxval, pos = _parse(blob, path)
    count = width * height
    if magic == b"P5":
        payload = blob[pos + 1:pos + 1 + count]  # one whitespace then bytes
        if len(payload) < count:
            raise TruncatedPayloadError(
                f"{path}: need {count} pixel bytes, found {len(payload)}")
        pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    else:
        fields = blob[pos:].split()
        if len(fields) < count:
            raise TruncatedPayloadError(
                f"{path}: need {count} pixel values, found {len(fields)}")
        try:
            pixels = np.array([int(v) for v in fields[:count]], dtype=np.float64)
        except ValueError as exc:
            raise PgmError(f"{path}: non-numeric pixel value") from exc
    if pixels.max(initial=0.0) > maxval or pixels.min(initial=0.0) < 0:
        raise PgmError(f"{path}: pixel outside [0, {maxval}]")
    return pixels.reshape(1, 1, height, width), maxval


def read_pgm(path: str) -> np.ndarray:
    """Pixel values verbatim as a (1, 1, H, W) float map."""
    pixels, _ = read_pgm_raw(path)
    return pixels


def write_pgm(x: np.ndarray, path: str) -> None:
    """Rescale [min, max] to [0, 255] (half-up), write binary P5."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 4 and arr.shape[:2] == (1, 1):
        arr = arr[0, 0]
    if arr.ndim != 2:
        raise ShapeMismatchError(f"write_pgm wants (H, W) or (1,1,H,W), got {x.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("write_pgm requires finite values")
    lo, hi = arr.min(), arr.max()
    if hi > lo:
        q = np.floor((arr - lo) * (255.0 / (hi - lo)) + 0.5)
    else:
        q = np.zeros_like(arr)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(q.astype(np.uint8).tobytes())
