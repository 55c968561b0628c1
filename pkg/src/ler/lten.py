"""LTEN binary tensor files.

Layout, all little-endian:
    magic   4 bytes  b"LTEN"
    version u32      format version (1); embedding exporters may store a
                     projection seed here instead, so loads accept any value
                     unless expect_version is given
    rank    u32
    dims    u64 * rank
    payload f32 * prod(dims), row-major
"""

import struct

import numpy as np

MAGIC = b"LTEN"
VERSION = 1
_MAX_RANK = 8


def write_lten_stream(f, array, version=VERSION):
    a = np.ascontiguousarray(array, dtype="<f4")
    f.write(MAGIC)
    f.write(struct.pack("<II", version, a.ndim))
    f.write(struct.pack("<%dQ" % a.ndim, *a.shape))
    f.write(a.tobytes())


def read_lten_stream(f):
    head = f.read(12)
    if len(head) < 12 or head[:4] != MAGIC:
        raise ValueError(f"not an LTEN record (bad magic {head[:4]!r})")
    _version, rank = struct.unpack("<II", head[4:])
    if rank > _MAX_RANK:
        raise ValueError(f"implausible LTEN rank {rank}")
    dims = struct.unpack("<%dQ" % rank, f.read(8 * rank))
    n = 1
    for d in dims:
        n *= d
    payload = f.read(4 * n)
    if len(payload) != 4 * n:
        raise ValueError("truncated LTEN payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def save_lten(path, array, version=VERSION):
    with open(path, "wb") as f:
        write_lten_stream(f, array, version)


def load_lten(path, expect_version=None):
    """Read an LTEN file into a float32 array. Returns (array, version)."""
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) < 12 or head[:4] != MAGIC:
            raise ValueError(f"{path}: not an LTEN file (bad magic {head[:4]!r})")
        version, rank = struct.unpack("<II", head[4:])
        if expect_version is not None and version != expect_version:
            raise ValueError(f"{path}: LTEN version {version}, expected {expect_version}")
        if rank > _MAX_RANK:
            raise ValueError(f"{path}: implausible rank {rank}")
        dims = struct.unpack("<%dQ" % rank, f.read(8 * rank))
        n = 1
        for d in dims:
            n *= d
        payload = f.read(4 * n)
        if len(payload) != 4 * n:
            raise ValueError(f"{path}: truncated payload, expected {4 * n} bytes")
        a = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return a.copy(), version
