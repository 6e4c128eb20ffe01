"""Minimal 16-bit binary PGM (P5) writer and reader.

Pixels are big-endian unsigned 16-bit with max value 65535, per the netpbm
binary convention. Writing scales the frame so its brightest pixel maps to
the full range; reading returns floats scaled back to [0, 1].
"""

import numpy as np

MAX_VALUE = 65535


def write_pgm(path, pixels):
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise ValueError("PGM output requires a 2D array")
    if not np.all(np.isfinite(pixels)) or pixels.min() < 0:
        raise ValueError("PGM output requires finite, non-negative pixels")
    peak = pixels.max()
    scale = MAX_VALUE / peak if peak > 0 else 0.0
    data = np.round(pixels * scale).astype(">u2")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{MAX_VALUE}\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise ValueError(f"not a binary PGM: magic {fields[0]!r}")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != MAX_VALUE:
        raise ValueError(f"expected 16-bit PGM (maxval {MAX_VALUE}), got {maxval}")
    expected = width * height * 2
    raw = blob[pos : pos + expected]
    if len(raw) != expected:
        raise ValueError("truncated PGM payload")
    data = np.frombuffer(raw, dtype=">u2").reshape(height, width)
    return data.astype(np.float64) / maxval
