"""Binary weight-file container.

Layout (little-endian): magic "EVFW", u16 version (1), u32 tensor count,
then per tensor: u16 name length, UTF-8 name, u8 dtype code (0=f32, 1=f64),
u8 ndim, u32 dims[ndim], raw row-major data. An 8-byte trailer holds the
checksum: the sum of every preceding byte mod 2^64.

The container itself is just named tensors; enough architecture metadata to
rebuild a Model rides along as reserved f64 tensors under the "__meta__."
prefix (arch code, head code, resolution). Real parameters are always named
"layerNN.field", so the prefix cannot collide.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .models import ARCHITECTURES, HEADS, Model, epoch_specs, nvidia_specs

MAGIC = b"EVFW"
VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
META_PREFIX = "__meta__."


def _checksum(payload: bytes) -> int:
    return int(np.frombuffer(payload, dtype=np.uint8).sum(dtype=np.uint64))


def _encode_tensor(name: str, arr: np.ndarray) -> bytes:
    code = _DTYPE_CODES.get(arr.dtype)
    if code is None:
        raise TypeError(f"weight file cannot store dtype {arr.dtype} (tensor {name!r})")
    name_bytes = name.encode("utf-8")
    parts = [struct.pack("<H", len(name_bytes)), name_bytes, struct.pack("<BB", code, arr.ndim)]
    if arr.ndim:
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    parts.append(np.ascontiguousarray(arr, dtype=_CODE_DTYPES[code]).tobytes())
    return b"".join(parts)


def save_weights(model: Model, path) -> None:
    """Serialize model parameters (and rebuild metadata) to `path`."""
    entries: list[tuple[str, np.ndarray]] = [
        (META_PREFIX + "arch", np.array([ARCHITECTURES.index(model.arch)], dtype=np.float64)),
        (META_PREFIX + "head", np.array([HEADS.index(model.head)], dtype=np.float64)),
        (META_PREFIX + "resolution", np.array(model.resolution, dtype=np.float64)),
    ]
    entries += [(name, t.data) for name, t in model.params.items()]
    payload = MAGIC + struct.pack("<HI", VERSION, len(entries))
    payload += b"".join(_encode_tensor(name, arr) for name, arr in entries)
    Path(path).write_bytes(payload + struct.pack("<Q", _checksum(payload)))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise ValueError(f"weight file truncated while reading {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out


def read_tensors(path) -> dict[str, np.ndarray]:
    """Parse a weight file into a name -> array map, validating the envelope."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 6 + 8:
        raise ValueError("weight file truncated (shorter than the fixed header)")
    payload, trailer = blob[:-8], blob[-8:]
    declared = struct.unpack("<Q", trailer)[0]
    actual = _checksum(payload)
    if declared != actual:
        raise ValueError(f"weight file checksum mismatch: declared {declared}, computed {actual}")
    r = _Reader(payload)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<HI", r.take(6, "version/count"))
    if version != VERSION:
        raise ValueError(f"unsupported weight file version {version}, expected {VERSION}")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = struct.unpack("<H", r.take(2, f"tensor {i} name length"))
        name = r.take(name_len, f"tensor {i} name").decode("utf-8")
        code, ndim = struct.unpack("<BB", r.take(2, f"{name} dtype/ndim"))
        if code not in _CODE_DTYPES:
            raise ValueError(f"tensor {name!r}: unknown dtype code {code}")
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim, f"{name} dims")) if ndim else ()
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        raw = r.take(nbytes, f"{name} data")
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    if r.pos != len(payload):
        raise ValueError(f"weight file has {len(payload) - r.pos} unexpected trailing bytes before the checksum")
    return tensors


def load_weights(path) -> Model:
    """Rebuild the architecture named in the file and load its parameters.

    The round trip save -> load is bit-exact. Shape or name mismatches are
    rejected with the offending tensor named.
    """
    tensors = read_tensors(path)
    for key in ("arch", "head", "resolution"):
        if META_PREFIX + key not in tensors:
            raise ValueError(f"weight file is missing metadata tensor {META_PREFIX + key!r}")
    arch_code = int(tensors.pop(META_PREFIX + "arch")[0])
    head_code = int(tensors.pop(META_PREFIX + "head")[0])
    res = tensors.pop(META_PREFIX + "resolution")
    if not 0 <= arch_code < len(ARCHITECTURES):
        raise ValueError(f"weight file names unknown architecture code {arch_code}")
    if ARCHITECTURES[arch_code] == "custom":
        raise ValueError("weight file holds a custom architecture, which cannot be rebuilt from metadata")
    if not 0 <= head_code < len(HEADS):
        raise ValueError(f"weight file names unknown head code {head_code}")
    arch = ARCHITECTURES[arch_code]
    head = HEADS[head_code]
    resolution = (int(res[0]), int(res[1]))

    dtypes = {arr.dtype for arr in tensors.values()}
    if len(dtypes) != 1:
        raise ValueError(f"weight file mixes parameter dtypes {sorted(map(str, dtypes))}")
    dtype = dtypes.pop()
    specs = epoch_specs(head) if arch == "epoch" else nvidia_specs(head)
    model = Model(arch, head, resolution, specs, rng_seed=0, dtype=dtype)

    for name, t in model.params.items():
        if name not in tensors:
            raise ValueError(f"weight file is missing tensor {name!r}")
        arr = tensors.pop(name)
        if arr.shape != t.data.shape:
            raise ValueError(
                f"{name}: file shape {arr.shape} does not match architecture shape {tuple(t.data.shape)}"
            )
        t.data = arr
    if tensors:
        raise ValueError(f"weight file has unexpected tensors: {sorted(tensors)}")
    return model
