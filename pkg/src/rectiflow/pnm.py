"""Binary NetPBM readers and writers (PPM P6 and PGM P5, maxval 255).

The byte layout is fixed so that a read/write round trip reproduces the
input file exactly: header `P6\\n{w} {h}\\n255\\n` (or P5), then rows of
samples top to bottom. Readers tolerate arbitrary whitespace and `#`
comments in the header, as the format allows, but writers always emit the
canonical header above.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError, ShapeError
from .field import Frame, Mask


def _tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated integer header tokens.

    Skips `#` comments through end of line. Returns the tokens and the
    offset of the first pixel byte (one whitespace char after the last
    token, per the format).
    """
    toks: list[int] = []
    i = 0
    n = len(data)
    while len(toks) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] != ord("\n"):
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("truncated header")
        tok = data[i:j]
        if not tok.isdigit():
            raise FormatError(f"non-numeric header token {tok!r}")
        toks.append(int(tok))
        i = j
    if i >= n or not data[i : i + 1].isspace():
        raise FormatError("missing whitespace after header")
    return toks, i + 1


def _parse(data: bytes, magic: bytes, samples_per_pixel: int) -> np.ndarray:
    if data[:2] != magic:
        raise FormatError(f"expected magic {magic!r}, got {data[:2]!r}")
    (w, h, maxval), start = _tokens(data[2:], 3)
    start += 2
    if w < 1 or h < 1:
        raise FormatError(f"invalid dimensions {w}x{h}")
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    need = w * h * samples_per_pixel
    body = data[start : start + need]
    if len(body) != need:
        raise FormatError(f"expected {need} pixel bytes, got {len(body)}")
    raw = np.frombuffer(body, dtype=np.uint8)
    if samples_per_pixel == 1:
        return raw.reshape(h, w)
    return raw.reshape(h, w, samples_per_pixel)


def _header(magic: bytes, w: int, h: int) -> bytes:
    return magic + b"\n" + f"{w} {h}".encode("ascii") + b"\n255\n"


def _to_u8(values: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(frame: Frame) -> bytes:
    """Encode a frame as binary P6; single-channel frames become gray RGB."""
    v = frame.channel_stack()
    if v.shape[2] == 1:
        v = np.repeat(v, 3, axis=2)
    u8 = _to_u8(v)
    return _header(b"P6", frame.width, frame.height) + u8.tobytes()


def read_ppm(data: bytes) -> Frame:
    """Decode binary P6 into a 3-channel frame with values k/255."""
    raw = _parse(data, b"P6", 3)
    return Frame(values=raw.astype(np.float64) / 255.0)


def write_pgm(values) -> bytes:
    """Encode a single-channel [0, 1] array as binary P5."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ShapeError(f"P5 payload must be 2-D, got shape {v.shape}")
    u8 = _to_u8(v)
    return _header(b"P5", v.shape[1], v.shape[0]) + u8.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    """Decode binary P5 into a float (H, W) array with values k/255."""
    return _parse(data, b"P5", 1).astype(np.float64) / 255.0


def mask_to_pgm(mask: Mask) -> bytes:
    """Write a binary mask as P5 with samples 0 and 255."""
    return write_pgm(mask.as_float())


def pgm_to_mask(data: bytes) -> Mask:
    """Read a P5 file as a binary mask; samples above half scale are 1."""
    return Mask(values=(read_pgm(data) > 0.5).astype(np.uint8))
