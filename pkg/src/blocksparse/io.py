"""Binary ``.bsd`` files for dictionaries and planted instances.

Layout::

    b"BSD1\\n" | uint64 LE header length | JSON header | payload

The header records ``D``, ``n``, block ``sizes``, subspace ``dims``,
``dtype = "f64le"`` and one entry per named section (shape, byte offset
into the payload, byte count).  Sections are raw little-endian float64 in
column-major order, so a round trip is bit-exact.  The SHA-256 of the
payload is stored in the header.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import BlockSparseCoefficients, BlockStructure, Dictionary, PlantedInstance
from .errors import ChecksumMismatch, DimensionMismatch, MalformedFile

MAGIC = b"BSD1\n"
EXTENSION = ".bsd"
_LEN = struct.Struct("<Q")


def atomic_write(path, data: bytes | str):
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _section_bytes(a: np.ndarray) -> bytes:
    return np.asarray(a, dtype="<f8").tobytes(order="F")


def dumps(obj: Dictionary | PlantedInstance) -> bytes:
    if isinstance(obj, PlantedInstance):
        dictionary, kind = obj.dictionary, "instance"
    elif isinstance(obj, Dictionary):
        dictionary, kind = obj, "dictionary"
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")

    arrays = [("matrix", dictionary.matrix), ("basis", dictionary.stacked_basis)]
    if kind == "instance":
        arrays += [("signal", obj.signal), ("truth", obj.truth.values)]

    sections, chunks, offset = [], [], 0
    for name, a in arrays:
        raw = _section_bytes(a)
        sections.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)

    header = {
        "format": "bsd", "version": 1, "kind": kind,
        "D": dictionary.D, "n": dictionary.n,
        "sizes": list(dictionary.structure.sizes), "dims": list(dictionary.dims),
        "dtype": "f64le", "sections": sections,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    if kind == "instance":
        header["support"] = list(obj.support)
        header["seed"] = obj.seed
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + _LEN.pack(len(head)) + head + payload


def loads(data: bytes) -> Dictionary | PlantedInstance:
    if not data.startswith(MAGIC):
        raise MalformedFile("missing BSD1 magic")
    pos = len(MAGIC)
    if len(data) < pos + _LEN.size:
        raise MalformedFile("truncated header length")
    (hlen,) = _LEN.unpack_from(data, pos)
    pos += _LEN.size
    if len(data) < pos + hlen:
        raise MalformedFile("truncated header")
    try:
        header = json.loads(data[pos:pos + hlen].decode("utf-8"))
        D, n = int(header["D"]), int(header["n"])
        sizes, dims = [int(s) for s in header["sizes"]], [int(s) for s in header["dims"]]
        sections = {s["name"]: s for s in header["sections"]}
        kind = header["kind"]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedFile(f"unreadable header: {exc}") from exc
    if header.get("dtype") != "f64le":
        raise MalformedFile(f"unsupported dtype {header.get('dtype')!r}")
    payload = data[pos + hlen:]

    if len(sizes) != n or len(dims) != n:
        raise DimensionMismatch("sizes/dims length differs from n")
    N = sum(sizes)
    expected = {"matrix": (D, N), "basis": (D, sum(dims))}
    if kind == "instance":
        expected.update(signal=(D,), truth=(N,))
    elif kind != "dictionary":
        raise MalformedFile(f"unknown kind {kind!r}")
    for name, shape in expected.items():
        if name not in sections:
            raise MalformedFile(f"missing section {name!r}")
        if tuple(sections[name]["shape"]) != shape:
            raise DimensionMismatch(
                f"section {name!r} has shape {tuple(sections[name]['shape'])}, expected {shape}")

    end = max(s["offset"] + s["nbytes"] for s in sections.values())
    if len(payload) < end:
        raise MalformedFile(f"payload truncated: {len(payload)} of {end} bytes")
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise ChecksumMismatch("payload checksum mismatch")

    def read(name):
        s = sections[name]
        if s["nbytes"] != 8 * int(np.prod(s["shape"])):
            raise DimensionMismatch(f"section {name!r} byte count disagrees with its shape")
        flat = np.frombuffer(payload, dtype="<f8", count=s["nbytes"] // 8, offset=s["offset"])
        return flat.reshape(s["shape"], order="F").astype(np.float64)

    basis = read("basis")
    cuts = np.cumsum([0] + dims)
    bases = tuple(basis[:, cuts[i]:cuts[i + 1]] for i in range(n))
    dictionary = Dictionary(read("matrix"), BlockStructure(tuple(sizes)), bases)
    if kind == "dictionary":
        return dictionary
    truth = BlockSparseCoefficients(read("truth"), dictionary.structure)
    signal = read("signal")
    signal.flags.writeable = False
    return PlantedInstance(dictionary, signal, truth,
                           tuple(int(i) for i in header["support"]), int(header["seed"]))


def save(obj, path):
    atomic_write(path, dumps(obj))


def load(path):
    return loads(Path(path).read_bytes())
