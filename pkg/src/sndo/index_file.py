"""Versioned binary index files.

Layout (little endian): magic b"SNDO", u16 version, u8 mode, u8 reserved,
u32 header length, UTF-8 JSON header with sorted keys, n*d f64 points
(row major), then in materialized mode every level's counter array and the
tail array for the n point slots, and finally a u32 CRC-32 of everything
before it. Replayable files rebuild the counters from seed and points.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .norms import CustomNorm, MmcBound, MmcProvenance, OrliczNorm, SymNorm, parse_norm
from .oracle import Knobs, Oracle, OracleParams

__all__ = ["MAGIC", "VERSION", "REPLAYABLE", "MATERIALIZED", "IndexFormatError", "dumps", "loads", "mode_of", "save", "load"]

MAGIC = b"SNDO"
VERSION = 1
REPLAYABLE = 0
MATERIALIZED = 1
_HEAD = struct.Struct("<4sHBBI")


class IndexFormatError(ValueError):
    """Malformed, truncated or incompatible index file."""


def _norm_record(norm: SymNorm) -> dict:
    if isinstance(norm, CustomNorm):
        raise ValueError("custom norms cannot be persisted")
    rec = {"descriptor": norm.descriptor}
    if isinstance(norm, OrliczNorm):
        rec.update(xs=[float(x) for x in norm.xs], gs=[float(g) for g in norm.gs], growth=float(norm.growth))
    return rec


def _norm_from_record(rec: dict, d: int) -> SymNorm:
    desc = rec["descriptor"]
    if desc.startswith("orlicz:"):
        return OrliczNorm(np.array(rec["xs"]), np.array(rec["gs"]), growth=rec["growth"],
                          source=desc.partition(":")[2], dim=d)
    return parse_norm(desc, d)


def dumps(oracle: Oracle, materialized: bool = False) -> bytes:
    p = oracle.params
    header = {
        "norm": _norm_record(oracle.norm),
        "eps": p.eps,
        "delta": p.delta,
        "seed": oracle.seed,
        "n": p.n,
        "d": p.d,
        "xi": p.xi,
        "knobs": asdict(p.knobs),
        "mmc": {"value": oracle.mmc.value, "provenance": oracle.mmc.provenance.value},
        "params": p.summary(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [_HEAD.pack(MAGIC, VERSION, MATERIALIZED if materialized else REPLAYABLE, 0, len(blob)), blob,
             np.ascontiguousarray(oracle.points, dtype="<f8").tobytes()]
    if materialized:
        n = p.n
        for c in oracle.counters:
            parts.append(np.ascontiguousarray(c[:, :n], dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(oracle.tail_y[:, :n], dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> Oracle:
    if data[:4] != MAGIC:
        raise IndexFormatError("not an index file")
    if len(data) < _HEAD.size + 4:
        raise IndexFormatError("index file truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise IndexFormatError("index file checksum mismatch")
    _, version, mode, _, hlen = _HEAD.unpack_from(body)
    if version != VERSION:
        raise IndexFormatError(f"unsupported index version {version}")
    if mode not in (REPLAYABLE, MATERIALIZED):
        raise IndexFormatError(f"unknown persistence mode {mode}")
    off = _HEAD.size
    try:
        header = json.loads(body[off:off + hlen])
        off += hlen
        n, d = int(header["n"]), int(header["d"])
        norm = _norm_from_record(header["norm"], d)
        knobs = Knobs(**header["knobs"])
        mmc = MmcBound(header["mmc"]["value"], MmcProvenance(header["mmc"]["provenance"]))
        params = OracleParams.derive(n, d, header["eps"], header["delta"], mmc.value, knobs, header["xi"])
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexFormatError(f"bad index header: {exc}") from exc
    size = n * d * 8
    if len(body) < off + size:
        raise IndexFormatError("index file truncated")
    points = np.frombuffer(body, dtype="<f8", count=n * d, offset=off).reshape(n, d).astype(np.float64)
    off += size
    oracle = Oracle(points, norm, params, int(header["seed"]), mmc, encode=(mode == REPLAYABLE))
    if mode == MATERIALIZED:
        for arr in oracle.counters + [oracle.tail_y]:
            count = arr[:, :n].size
            if len(body) < off + 8 * count:
                raise IndexFormatError("index file truncated")
            arr[:, :n] = np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(arr[:, :n].shape)
            off += 8 * count
    if off != len(body):
        raise IndexFormatError("trailing bytes in index file")
    return oracle


def mode_of(data: bytes) -> int:
    if len(data) < _HEAD.size or data[:4] != MAGIC:
        raise IndexFormatError("not an index file")
    return _HEAD.unpack_from(data)[2]


def save(oracle: Oracle, path: str | Path, materialized: bool = False) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(oracle, materialized))
    tmp.replace(path)


def load(path: str | Path) -> Oracle:
    return loads(Path(path).read_bytes())
