"""File formats for point-cloud frames and debug dumps.

Point-cloud frames come in two encodings carrying the same content.

Text::

    # anchor_mppi cloud v1
    frame_id 42
    points 3
    1.0 2.0 0.5
    ...

Binary (little-endian): magic ``b"AMPC"``, ``uint32`` version (1),
``uint64`` frame id, ``uint64`` point count, then ``count * 3`` float64
values in x, y, z order.

Debug CSVs: the partition dump has columns ``i,j,range`` in lexicographic
cell order; the guide dump has columns ``step,anchor,x,y,z`` where ``step``
indexes guide samples at ``k * dt`` for ``k = 0..N`` (the last sample is the
refined anchor).
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from anchor_mppi.guidance import GuidingTrajectory
from anchor_mppi.perception import SphericalPartition, partition_rows

CLOUD_HEADER = "# anchor_mppi cloud v1"
CLOUD_MAGIC = b"AMPC"
_BIN_HEAD = struct.Struct("<4sIQQ")


def write_cloud(path: str | Path, points: np.ndarray, frame_id: int, binary: bool = False) -> None:
    pts = np.asarray(points, float).reshape(-1, 3)
    if binary:
        with open(path, "wb") as fh:
            fh.write(_BIN_HEAD.pack(CLOUD_MAGIC, 1, int(frame_id), len(pts)))
            fh.write(pts.astype("<f8").tobytes())
        return
    with open(path, "w") as fh:
        fh.write(f"{CLOUD_HEADER}\nframe_id {int(frame_id)}\npoints {len(pts)}\n")
        for x, y, z in pts.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def read_cloud(path: str | Path) -> tuple[int, np.ndarray]:
    """Return ``(frame_id, points)``; the encoding is detected from the first bytes.

    Raises:
        ValueError: on a malformed header or a point count mismatch.
    """
    raw = Path(path).read_bytes()
    if raw[:4] == CLOUD_MAGIC:
        if len(raw) < _BIN_HEAD.size:
            raise ValueError("truncated cloud header")
        _, version, frame_id, n = _BIN_HEAD.unpack_from(raw)
        if version != 1:
            raise ValueError(f"unsupported cloud version {version}")
        body = raw[_BIN_HEAD.size :]
        if len(body) != n * 24:
            raise ValueError("point count does not match payload size")
        return int(frame_id), np.frombuffer(body, "<f8").reshape(-1, 3).astype(float)

    lines = raw.decode().splitlines()
    if len(lines) < 3 or lines[0].strip() != CLOUD_HEADER:
        raise ValueError("not an anchor_mppi cloud file")
    key1, fid = lines[1].split()
    key2, count = lines[2].split()
    if key1 != "frame_id" or key2 != "points":
        raise ValueError("malformed cloud header")
    rows = [ln.split() for ln in lines[3:] if ln.strip()]
    if len(rows) != int(count):
        raise ValueError("point count does not match the number of rows")
    pts = np.array(rows, float).reshape(-1, 3)
    return int(fid), pts


def write_partition_csv(path: str | Path, part: SphericalPartition) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("i", "j", "range"))
        for i, j, r in partition_rows(part):
            w.writerow((i, j, repr(float(r))))


def read_partition_csv(path: str | Path) -> np.ndarray:
    """Ranges as a ``(120, 60)`` array."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ni = max(int(r["i"]) for r in rows) + 1
    nj = max(int(r["j"]) for r in rows) + 1
    out = np.full((ni, nj), np.nan)
    for r in rows:
        out[int(r["i"]), int(r["j"])] = float(r["range"])
    return out


def guide_rows(guides: list[GuidingTrajectory], dt: float, steps: int) -> list[tuple[int, int, float, float, float]]:
    times = np.arange(steps + 1) * dt
    rows = []
    for m, g in enumerate(guides):
        for k, p in enumerate(g.position(times)):
            rows.append((k, m, float(p[0]), float(p[1]), float(p[2])))
    return rows


def write_guides_csv(path: str | Path, guides: list[GuidingTrajectory], dt: float, steps: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("step", "anchor", "x", "y", "z"))
        w.writerows(guide_rows(guides, dt, steps))
