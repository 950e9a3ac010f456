"""Snapshot persistence.

File layout: an ASCII header of key=value lines terminated by a blank line
(the run manifest is a single JSON value), then one binary record per frame:

    time      float64 little-endian
    phi       N x float64 little-endian
    psi       N x float64 little-endian
    crc32     uint32 little-endian, over the preceding frame bytes

The header declares the point count and frame count, so a reader never
allocates more than the header admits, and the byte length is validated
before any array is read.  Round trips are bit-exact for every finite
float64 payload.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import GridSpec
from .scheme import PhysicsParams, SolverConfig

__all__ = [
    "SCHEMA_VERSION",
    "RunManifest",
    "RunStatus",
    "SnapshotSeries",
    "StoreError",
    "VersionMismatchError",
    "ChecksumError",
    "TruncatedFileError",
    "FormatError",
    "write_series",
    "read_series",
    "export_csv",
]

SCHEMA_VERSION = 1
MAGIC = "kgdg-snapshot"


class StoreError(Exception):
    pass


class VersionMismatchError(StoreError):
    pass


class ChecksumError(StoreError):
    pass


class TruncatedFileError(StoreError):
    pass


class FormatError(StoreError):
    pass


@dataclass(frozen=True)
class RunManifest:
    """Complete description of one run's inputs."""

    grid: GridSpec
    physics: PhysicsParams
    solver: SolverConfig
    initial_amplitude: float
    snapshot_cadence: float = 1.0
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "grid": {
                "dim": self.grid.dim,
                "points": list(self.grid.points),
                "dx": list(self.grid.dx),
                "dt": self.grid.dt,
                "origin": list(self.grid.origin),
            },
            "physics": {
                "c": self.physics.c,
                "hbar": self.physics.hbar,
                "mass": self.physics.mass,
                "lam": self.physics.lam,
                "p": self.physics.p,
                "l0": self.physics.l0,
            },
            "solver": {
                "tol": self.solver.tol,
                "max_iters": self.solver.max_iters,
                "equal_value_eps": self.solver.equal_value_eps,
            },
            "initial_amplitude": self.initial_amplitude,
            "snapshot_cadence": self.snapshot_cadence,
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        g = d["grid"]
        return cls(
            grid=GridSpec(
                dim=g["dim"],
                points=tuple(g["points"]),
                dx=tuple(g["dx"]),
                dt=g["dt"],
                origin=tuple(g["origin"]),
            ),
            physics=PhysicsParams(**d["physics"]),
            solver=SolverConfig(**d["solver"]),
            initial_amplitude=d["initial_amplitude"],
            snapshot_cadence=d["snapshot_cadence"],
            schema_version=d["schema_version"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        """Stable identifier used to name snapshot files."""
        return hashlib.sha256(self.to_json().encode("ascii")).hexdigest()[:16]


@dataclass(frozen=True)
class RunStatus:
    completed: bool
    fail_time: Optional[float] = None
    fail_reason: str = ""

    @classmethod
    def ok(cls) -> "RunStatus":
        return cls(True)

    @classmethod
    def failed(cls, time: float, reason: str) -> "RunStatus":
        return cls(False, time, reason)


@dataclass
class SnapshotSeries:
    """Ordered (time, phi, psi) frames from one run."""

    manifest: RunManifest
    frames: list[tuple[float, np.ndarray, np.ndarray]] = field(default_factory=list)
    status: RunStatus = field(default_factory=RunStatus.ok)

    def validate(self):
        n = self.manifest.grid.total_points
        prev = None
        for t, phi, psi in self.frames:
            if phi.size != n or psi.size != n:
                raise ValueError("frame array length does not match the grid")
            if prev is not None and t <= prev:
                raise ValueError("frame times must be strictly increasing")
            prev = t

    def times(self) -> list[float]:
        return [t for t, _, _ in self.frames]

    def frame_at(self, time: float, atol: float = 1e-9):
        for t, phi, psi in self.frames:
            if abs(t - time) <= atol:
                return t, phi, psi
        raise KeyError(f"no frame at time {time}")


def write_series(series: SnapshotSeries, path: str) -> None:
    """Write atomically (temp file + rename)."""
    series.validate()
    m = series.manifest
    n = m.grid.total_points
    header_lines = [
        MAGIC,
        f"schema_version={m.schema_version}",
        f"manifest={m.to_json()}",
        f"points={n}",
        f"frames={len(series.frames)}",
        f"status={'completed' if series.status.completed else 'failed'}",
    ]
    if not series.status.completed:
        header_lines.append(f"fail_time={series.status.fail_time!r}")
        header_lines.append(f"fail_reason={series.status.fail_reason}")
    header = ("\n".join(header_lines) + "\n\n").encode("ascii")

    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        for t, phi, psi in series.frames:
            payload = struct.pack("<d", t)
            payload += np.ascontiguousarray(phi, dtype="<f8").tobytes()
            payload += np.ascontiguousarray(psi, dtype="<f8").tobytes()
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    os.replace(tmp, path)


def _parse_header(blob: bytes):
    end = blob.find(b"\n\n")
    if end < 0:
        raise TruncatedFileError("no header terminator found")
    try:
        lines = blob[:end].decode("ascii").split("\n")
    except UnicodeDecodeError as exc:
        raise FormatError("header is not ASCII") from exc
    if not lines or lines[0] != MAGIC:
        raise FormatError("not a kgdg snapshot file")
    kv = {}
    for line in lines[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"malformed header line: {line!r}")
        kv[key] = value
    return kv, end + 2


def read_series(path: str) -> SnapshotSeries:
    with open(path, "rb") as fh:
        blob = fh.read()
    kv, offset = _parse_header(blob)

    try:
        version = int(kv["schema_version"])
        points = int(kv["points"])
        frames = int(kv["frames"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad header field: {exc}") from exc
    if version != SCHEMA_VERSION:
        raise VersionMismatchError(
            f"file schema_version {version}, reader supports {SCHEMA_VERSION}"
        )
    if points < 1 or frames < 0:
        raise FormatError("nonsensical header sizes")

    manifest = RunManifest.from_json(kv.get("manifest", ""))
    if manifest.grid.total_points != points:
        raise FormatError("header point count disagrees with the manifest grid")

    status_kind = kv.get("status", "completed")
    if status_kind == "completed":
        status = RunStatus.ok()
    elif status_kind == "failed":
        status = RunStatus.failed(float(kv.get("fail_time", "nan")), kv.get("fail_reason", ""))
    else:
        raise FormatError(f"unknown status {status_kind!r}")

    frame_bytes = 8 + 2 * 8 * points + 4
    expected = offset + frames * frame_bytes
    if len(blob) < expected:
        raise TruncatedFileError(
            f"file has {len(blob)} bytes, header declares {expected}"
        )
    if len(blob) > expected:
        raise FormatError("trailing bytes after the declared frames")

    out = []
    for i in range(frames):
        start = offset + i * frame_bytes
        payload = blob[start : start + frame_bytes - 4]
        (crc_stored,) = struct.unpack_from("<I", blob, start + frame_bytes - 4)
        if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
            raise ChecksumError(f"checksum failure in frame {i}")
        (t,) = struct.unpack_from("<d", payload, 0)
        arr = np.frombuffer(payload, dtype="<f8", count=2 * points, offset=8)
        out.append((t, arr[:points].copy(), arr[points:].copy()))
    return SnapshotSeries(manifest, out, status)


def export_csv(series: SnapshotSeries, path: str) -> None:
    """Plot-ready CSV: time, node index, x, phi, psi at 17 significant
    digits (lossless for float64)."""
    grid = series.manifest.grid
    if grid.dim != 1:
        raise ValueError("CSV export is defined for 1-D runs")
    x = grid.axis_coords(0)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        fh.write("time,node,x,phi,psi\n")
        for t, phi, psi in series.frames:
            for k in range(grid.total_points):
                fh.write(
                    f"{t:.17g},{k},{x[k]:.17g},{phi[k]:.17g},{psi[k]:.17g}\n"
                )
    os.replace(tmp, path)
