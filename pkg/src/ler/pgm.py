"""Binary PGM (P5) output for attention-map dumps."""

import numpy as np


def write_pgm(path, gray):
    """gray: 2-D uint8 or float in [0,1]."""
    a = np.asarray(gray)
    if a.dtype != np.uint8:
        a = np.clip(np.round(a * 255.0), 0, 255).astype(np.uint8)
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(np.ascontiguousarray(a).tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM")
    # three whitespace-separated header tokens after P5: width height maxval
    fields = []
    i = 2
    while len(fields) < 3:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i + 1].isspace():
            i += 1
        fields.append(int(data[start:i]))
    i += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    return np.frombuffer(data[i:i + h * w], dtype=np.uint8).reshape(h, w)


def upsample_nearest(a, factor):
    return np.repeat(np.repeat(a, factor, axis=0), factor, axis=1)


def normalize_minmax(a):
    a = np.asarray(a, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi <= lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def attention_maps(att_rows, grid_h, grid_w, factor=4):
    """Per-position attention rows -> list of (grid_h*factor, grid_w*factor)
    grayscale maps, min-max normalized and nearest-upsampled."""
    maps = []
    for row in att_rows:
        m = normalize_minmax(np.asarray(row).reshape(grid_h, grid_w))
        maps.append(upsample_nearest(m, factor))
    return maps
