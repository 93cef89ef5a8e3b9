"""Little-endian binary serialisation of named numpy arrays.

Layout shared by the model checkpoint and the replay-buffer snapshot:

    magic: 8 bytes
    version: u8
    meta_len: u32            length of the UTF-8 JSON meta blob
    meta: bytes              free-form JSON dict
    count: u32               number of arrays
    per array:
        name_len: u16, name: UTF-8 bytes
        dtype_code: u8       0 = float64, 1 = bool, 2 = int64
        ndim: u8, dims: u64 * ndim
        data: raw C-order little-endian bytes

Round-trips are bit-exact for float64 payloads.
"""

import json
import struct

import numpy as np

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("|b1"), 2: np.dtype("<i8")}
_CODES = {v: k for k, v in _DTYPES.items()}


def write_file(path, magic, version, meta, arrays):
    """Write ``arrays`` as an ordered list of (name, ndarray) pairs."""
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    meta_blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<BI", version, len(meta_blob)))
        fh.write(meta_blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays:
            arr = np.ascontiguousarray(arr)
            code = _CODES.get(arr.dtype.newbyteorder("<"))
            if code is None:
                raise ValueError(f"unsupported dtype {arr.dtype} for {name!r}")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def read_file(path, magic, expect_version=None):
    """Read back (version, meta, list of (name, ndarray))."""
    with open(path, "rb") as fh:
        got = fh.read(8)
        if got != magic:
            raise ValueError(f"bad magic {got!r}, expected {magic!r}")
        version, meta_len = struct.unpack("<BI", fh.read(5))
        if expect_version is not None and version != expect_version:
            raise ValueError(f"unsupported version {version}")
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        arrays = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            code, ndim = struct.unpack("<BB", fh.read(2))
            dims = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            dtype = _DTYPES[code]
            data = fh.read(int(np.prod(dims, dtype=np.int64)) * dtype.itemsize)
            arr = np.frombuffer(data, dtype=dtype).reshape(dims).copy()
            arrays.append((name, arr))
    return version, meta, arrays
