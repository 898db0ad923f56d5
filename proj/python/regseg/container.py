"""Pure-Python reader and writer for the RSEGTC01 weight container.

Layout: 8-byte magic, u64 little-endian header length, UTF-8 text header,
zero padding to a 64-byte boundary, then the payload. Header lines, in order:

    format_version 1
    meta <key> <value>                               (sorted by key)
    tensor <name> f32 <n> <c> <h> <w> <offset> <nbytes>   (sorted by name)
    checksum <crc32 of header body + payload, 8 lowercase hex digits>

Tensors are packed in name order, each starting on a 64-byte boundary of the
payload. Output is byte-identical to the engine's writer.
"""

from __future__ import annotations

import os
import re
import struct
import zlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

MAGIC = b"RSEGTC01"
VERSION = 1
ALIGNMENT = 64

_WS = re.compile(r"\s")
_HEX8 = re.compile(r"[0-9a-f]{8}")


class ContainerError(Exception):
    """Base class for container problems."""


class ContainerFormatError(ContainerError):
    """Not a container, or a header the reader does not understand."""


class ContainerCorruptionError(ContainerError):
    """Checksum, padding or index inconsistencies."""


@dataclass
class Container:
    metadata: dict[str, str] = field(default_factory=dict)
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def _align(n: int) -> int:
    return (n + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def as_engine_array(value) -> np.ndarray:
    """float32 array padded on the left to four dimensions."""
    a = np.ascontiguousarray(value, dtype=np.float32)
    if a.ndim > 4 or a.ndim == 0:
        raise ValueError(f"tensors need 1 to 4 dimensions, got shape {a.shape}")
    return a.reshape((1,) * (4 - a.ndim) + a.shape)


def serialize(tensors: Mapping[str, object], metadata: Mapping[str, str] | None = None) -> bytes:
    metadata = dict(metadata or {})
    lines = [f"format_version {VERSION}\n"]
    for key in sorted(metadata, key=lambda k: k.encode()):
        value = str(metadata[key])
        if not key or _WS.search(key):
            raise ValueError(f"metadata key {key!r} is empty or contains whitespace")
        if "\n" in value or "\r" in value:
            raise ValueError(f"metadata value of {key!r} contains a line break")
        lines.append(f"meta {key} {value}\n")

    payload = bytearray()
    for name in sorted(tensors, key=lambda k: k.encode()):
        if not name or _WS.search(name):
            raise ValueError(f"tensor name {name!r} is empty or contains whitespace")
        a = as_engine_array(tensors[name])
        raw = a.astype("<f4", copy=False).tobytes()
        n, c, h, w = a.shape
        lines.append(f"tensor {name} f32 {n} {c} {h} {w} {len(payload)} {len(raw)}\n")
        payload += raw
        payload += b"\0" * (_align(len(payload)) - len(payload))

    body = "".join(lines).encode()
    crc = zlib.crc32(bytes(payload), zlib.crc32(body))
    header = body + f"checksum {crc:08x}\n".encode()
    out = bytearray(MAGIC + struct.pack("<Q", len(header)) + header)
    out += b"\0" * (_align(len(out)) - len(out))
    return bytes(out + payload)


def write(path: str | os.PathLike, tensors: Mapping[str, object],
          metadata: Mapping[str, str] | None = None) -> None:
    data = serialize(tensors, metadata)
    with open(path, "wb") as f:
        f.write(data)


def parse(data: bytes) -> Container:
    if data[:8] != MAGIC:
        raise ContainerFormatError("not a weight container (bad magic)")
    if len(data) < 16:
        raise ContainerCorruptionError("container truncated in preamble")
    (hlen,) = struct.unpack_from("<Q", data, 8)
    if hlen > len(data) - 16:
        raise ContainerCorruptionError("header length exceeds file size")
    start = _align(16 + hlen)
    if start > len(data):
        raise ContainerCorruptionError("container truncated in header padding")
    if any(data[16 + hlen:start]):
        raise ContainerCorruptionError("nonzero header padding")
    header = data[16:16 + hlen]
    payload = data[start:]
    if not header.endswith(b"\n"):
        raise ContainerCorruptionError("header does not end with a line break")
    cut = header.rfind(b"\n", 0, len(header) - 1) + 1
    body, cs_line = header[:cut], header[cut:-1]
    if not cs_line.startswith(b"checksum ") or not _HEX8.fullmatch(cs_line[9:].decode("latin-1")):
        raise ContainerCorruptionError("header checksum record missing")
    if zlib.crc32(payload, zlib.crc32(body)) != int(cs_line[9:], 16):
        raise ContainerCorruptionError("container checksum mismatch")

    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ContainerFormatError("header is not UTF-8") from e
    lines = text.split("\n")[:-1]
    if not lines or lines[0] != f"format_version {VERSION}":
        raise ContainerFormatError("unsupported or missing format_version")

    c = Container()
    index = []
    for line in lines[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "meta":
            key, sep, value = rest.partition(" ")
            if not sep or not key:
                raise ContainerFormatError(f"bad meta line {line!r}")
            if index or (c.metadata and key.encode() <= list(c.metadata)[-1].encode()):
                raise ContainerFormatError("meta lines out of order")
            c.metadata[key] = value
        elif kind == "tensor":
            f = rest.split(" ")
            if len(f) != 8 or f[1] != "f32":
                raise ContainerFormatError(f"bad tensor line {line!r}")
            try:
                dims = [int(x) for x in f[2:6]]
                offset, nbytes = int(f[6]), int(f[7])
            except ValueError as e:
                raise ContainerFormatError(f"bad number in {line!r}") from e
            if index and f[0].encode() <= index[-1][0].encode():
                raise ContainerFormatError("tensor lines out of order")
            index.append((f[0], dims, offset, nbytes))
        else:
            raise ContainerFormatError(f"unknown header line {line!r}")

    expected = 0
    for name, dims, offset, nbytes in index:
        if min(dims) < 1:
            raise ContainerCorruptionError(f"{name}: invalid shape {dims}")
        if nbytes != 4 * int(np.prod(dims, dtype=np.int64)):
            raise ContainerCorruptionError(f"{name}: byte count does not match shape")
        if offset != expected:
            raise ContainerCorruptionError(f"{name}: offset {offset}, expected {expected}")
        expected = _align(offset + nbytes)
        if offset + nbytes > len(payload):
            raise ContainerCorruptionError(f"{name}: payload truncated")
        c.tensors[name] = np.frombuffer(payload, "<f4", nbytes // 4, offset).reshape(dims).copy()
    if len(payload) != expected:
        raise ContainerCorruptionError("payload size does not match the index")
    return c


def read(path: str | os.PathLike) -> Container:
    with open(path, "rb") as f:
        return parse(f.read())
