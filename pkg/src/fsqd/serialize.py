"""Binary and text containers for MPS, MPO and brick-wall circuits.

Binary layout (all integers little-endian ``uint32``)::

    magic (8 bytes) | version | n | flag | per-site: rank, extents... | data

``data`` is every site tensor in C order as little-endian complex128, sites
concatenated left to right. ``flag`` is ``ortho_center + 1`` (0 for none)
for states and the Hermitian flag for operators. Circuits store
``n | layers | n_gates`` then per gate its left site and the 16 entries of the
4x4 matrix (row major).

The text form is JSON with each complex number as ``[re, im]``; Python's
shortest round-trip float repr makes it lossless.
"""

from __future__ import annotations

import functools
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

from .circuit import BrickwallCircuit, TwoQubitGate
from .errors import ValidationError
from .mps import MPO, MPS

FORMAT_VERSION = 1
MPS_MAGIC = b"FSQDMPS\x00"
MPO_MAGIC = b"FSQDMPO\x00"
CIRCUIT_MAGIC = b"FSQDCIR\x00"

_LE_COMPLEX = np.dtype("<c16")
PathLike = Union[str, os.PathLike]


def atomic_write(path: PathLike, data: bytes | str) -> None:
    """Write ``data`` to ``path`` through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.buf):
            raise ValidationError("truncated tensor-network container")
        out = self.buf[self.pos : self.pos + size]
        self.pos += size
        return out

    def u32(self, count: int = 1) -> tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count))

    def complex(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(16 * count), dtype=_LE_COMPLEX).astype(np.complex128)

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise ValidationError("trailing bytes in tensor-network container")


def _pack_chain(magic: bytes, flag: int, tensors) -> bytes:
    parts = [magic, struct.pack("<3I", FORMAT_VERSION, len(tensors), flag)]
    for t in tensors:
        parts.append(struct.pack(f"<{1 + t.ndim}I", t.ndim, *t.shape))
    for t in tensors:
        parts.append(np.ascontiguousarray(t, dtype=_LE_COMPLEX).tobytes())
    return b"".join(parts)


def _unpack_chain(buf: bytes, magic: bytes, rank: int) -> tuple[int, list[np.ndarray]]:
    rd = _Reader(buf)
    if rd.take(len(magic)) != magic:
        raise ValidationError("unrecognised container: bad magic header")
    version, n, flag = rd.u32(3)
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported container version {version}")
    shapes = []
    for _ in range(n):
        (r,) = rd.u32()
        if r != rank:
            raise ValidationError(f"expected rank-{rank} site tensors, found rank {r}")
        shapes.append(rd.u32(r))
    tensors = [rd.complex(int(np.prod(s))).reshape(s) for s in shapes]
    rd.done()
    return flag, tensors


def mps_to_bytes(s: MPS) -> bytes:
    flag = 0 if s.ortho_center is None else s.ortho_center + 1
    return _pack_chain(MPS_MAGIC, flag, s.tensors)


def mps_from_bytes(buf: bytes) -> MPS:
    flag, tensors = _unpack_chain(buf, MPS_MAGIC, 3)
    return MPS(tensors, ortho_center=None if flag == 0 else flag - 1)


def mpo_to_bytes(m: MPO) -> bytes:
    return _pack_chain(MPO_MAGIC, int(m.hermitian), m.tensors)


def mpo_from_bytes(buf: bytes) -> MPO:
    flag, tensors = _unpack_chain(buf, MPO_MAGIC, 4)
    return MPO(tensors, hermitian=bool(flag))


def circuit_to_bytes(c: BrickwallCircuit) -> bytes:
    parts = [CIRCUIT_MAGIC, struct.pack("<4I", FORMAT_VERSION, c.n, c.layers, c.n_gates)]
    for g in c.gates:
        parts.append(struct.pack("<I", g.site))
        parts.append(np.ascontiguousarray(g.matrix, dtype=_LE_COMPLEX).tobytes())
    return b"".join(parts)


def circuit_from_bytes(buf: bytes) -> BrickwallCircuit:
    rd = _Reader(buf)
    if rd.take(len(CIRCUIT_MAGIC)) != CIRCUIT_MAGIC:
        raise ValidationError("unrecognised circuit container: bad magic header")
    version, n, layers, n_gates = rd.u32(4)
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported circuit version {version}")
    gates = []
    for _ in range(n_gates):
        (site,) = rd.u32()
        gates.append(TwoQubitGate(site, rd.complex(16).reshape(4, 4)))
    rd.done()
    return BrickwallCircuit(n, layers, tuple(gates))


# --------------------------------------------------------------------------
# text forms


def _encode_array(a: np.ndarray) -> dict:
    flat = np.asarray(a, dtype=np.complex128).reshape(-1)
    return {"shape": list(a.shape), "data": [[float(z.real), float(z.imag)] for z in flat]}


def _decode_array(obj: dict) -> np.ndarray:
    data = np.array(obj["data"], dtype=float).reshape(-1, 2)
    return (data[:, 0] + 1j * data[:, 1]).reshape(obj["shape"])


def _text_errors(fn):
    """Report malformed text documents as validation errors."""

    @functools.wraps(fn)
    def wrapper(text: str):
        try:
            return fn(text)
        except ValidationError:
            raise
        except (ValueError, KeyError, TypeError, IndexError) as exc:
            raise ValidationError(f"malformed document: {exc!r}") from None

    return wrapper


def _check_header(obj: dict, kind: str) -> None:
    if not isinstance(obj, dict):
        raise ValidationError("document root must be an object")
    if obj.get("format") != kind:
        raise ValidationError(f"expected a {kind!r} document, got {obj.get('format')!r}")
    if obj.get("version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported {kind} version {obj.get('version')}")


def mps_to_text(s: MPS) -> str:
    doc = {
        "format": "fsqd-mps",
        "version": FORMAT_VERSION,
        "n": s.n,
        "ortho_center": s.ortho_center,
        "tensors": [_encode_array(t) for t in s.tensors],
    }
    return json.dumps(doc) + "\n"


@_text_errors
def mps_from_text(text: str) -> MPS:
    obj = json.loads(text)
    _check_header(obj, "fsqd-mps")
    tensors = [_decode_array(t) for t in obj["tensors"]]
    if len(tensors) != obj["n"]:
        raise ValidationError("site count does not match the tensor list")
    return MPS(tensors, ortho_center=obj["ortho_center"])


def mpo_to_text(m: MPO) -> str:
    doc = {
        "format": "fsqd-mpo",
        "version": FORMAT_VERSION,
        "n": m.n,
        "hermitian": m.hermitian,
        "tensors": [_encode_array(t) for t in m.tensors],
    }
    return json.dumps(doc) + "\n"


@_text_errors
def mpo_from_text(text: str) -> MPO:
    obj = json.loads(text)
    _check_header(obj, "fsqd-mpo")
    tensors = [_decode_array(t) for t in obj["tensors"]]
    if len(tensors) != obj["n"]:
        raise ValidationError("site count does not match the tensor list")
    return MPO(tensors, hermitian=bool(obj["hermitian"]))


def circuit_to_text(c: BrickwallCircuit) -> str:
    doc = {
        "format": "fsqd-circuit",
        "version": FORMAT_VERSION,
        "n": c.n,
        "layers": c.layers,
        "gates": [{"sites": list(g.sites), "matrix": _encode_array(g.matrix)["data"]} for g in c.gates],
    }
    return json.dumps(doc) + "\n"


@_text_errors
def circuit_from_text(text: str) -> BrickwallCircuit:
    obj = json.loads(text)
    _check_header(obj, "fsqd-circuit")
    gates = []
    for g in obj["gates"]:
        a, b = g["sites"]
        if b != a + 1:
            raise ValidationError(f"gate sites {g['sites']} are not adjacent")
        gates.append(TwoQubitGate(a, _decode_array({"shape": [4, 4], "data": g["matrix"]})))
    return BrickwallCircuit(obj["n"], obj["layers"], tuple(gates))


# --------------------------------------------------------------------------
# files (binary unless the suffix is .json)


def _is_text(path: PathLike) -> bool:
    return Path(path).suffix.lower() == ".json"


def save_mps(path: PathLike, s: MPS) -> None:
    atomic_write(path, mps_to_text(s) if _is_text(path) else mps_to_bytes(s))


def load_mps(path: PathLike) -> MPS:
    p = Path(path)
    return mps_from_text(p.read_text()) if _is_text(p) else mps_from_bytes(p.read_bytes())


def save_mpo(path: PathLike, m: MPO) -> None:
    atomic_write(path, mpo_to_text(m) if _is_text(path) else mpo_to_bytes(m))


def load_mpo(path: PathLike) -> MPO:
    p = Path(path)
    return mpo_from_text(p.read_text()) if _is_text(p) else mpo_from_bytes(p.read_bytes())


def save_circuit(path: PathLike, c: BrickwallCircuit) -> None:
    atomic_write(path, circuit_to_text(c) if _is_text(path) else circuit_to_bytes(c))


def load_circuit(path: PathLike) -> BrickwallCircuit:
    p = Path(path)
    return circuit_from_text(p.read_text()) if _is_text(p) else circuit_from_bytes(p.read_bytes())
