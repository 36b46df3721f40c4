"""Flat binary array files with a one-line text header.

Format: ``qpat-array 1`` magic line, a header line stating dtype and shape,
a ``#data`` separator, then the raw row-major float64 bytes.  Kept free of
pickle so bundles stay language-neutral and byte-stable.
"""

from __future__ import annotations

import numpy as np

__all__ = ["write_array", "read_array"]


def write_array(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    shape = ",".join(str(n) for n in arr.shape)
    with open(path, "wb") as fh:
        fh.write(b"qpat-array 1\n")
        fh.write(f"dtype=float64 shape={shape}\n".encode("ascii"))
        fh.write(b"#data\n")
        fh.write(arr.tobytes())


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"qpat-array 1":
            raise ValueError(f"not an array file: {path}")
        fields = dict(item.split(b"=") for item in fh.readline().split())
        if fields[b"dtype"] != b"float64":
            raise ValueError("only float64 arrays are supported")
        shape = tuple(int(n) for n in fields[b"shape"].split(b",") if n)
        if fh.readline().strip() != b"#data":
            raise ValueError(f"malformed array header in {path}")
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(fh.read(count * 8), dtype=np.float64)
        if data.size != count:
            raise ValueError(f"truncated array file: {path}")
    return data.reshape(shape).copy()
