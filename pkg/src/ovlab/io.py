"""Run persistence: FLD1 snapshots, diagnostics CSV and JSON manifests.

FLD1 layout (little endian): a 32-byte header

    offset  0  4s   magic b"FLD1"
    offset  4  u32  nx
    offset  8  u32  ny
    offset 12  u32  ncomponents
    offset 16  u32  dtype code (8 = float64)
    offset 20  4x   padding (keeps the u64 8-byte aligned)
    offset 24  u64  reserved (0)

followed by ``ncomponents * nx * ny`` float64 values, component-major, each
component row-major over (ix, iy).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS
from .spectral import ConfigurationError, ifft

FLD_MAGIC = b"FLD1"
FLD_HEADER = struct.Struct("<4sIIII4xQ")
DTYPE_FLOAT64 = 8
MANIFEST = "manifest.json"


class SnapshotFormatError(ValueError):
    pass


def write_fld(path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim == 2:
        values = values[None]
    ncomp, nx, ny = values.shape
    with open(path, "wb") as fh:
        fh.write(FLD_HEADER.pack(FLD_MAGIC, nx, ny, ncomp, DTYPE_FLOAT64, 0))
        fh.write(values.tobytes(order="C"))


def read_fld(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < FLD_HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, nx, ny, ncomp, dtype, _ = FLD_HEADER.unpack_from(data)
    if magic != FLD_MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if dtype != DTYPE_FLOAT64:
        raise SnapshotFormatError(f"{path}: unsupported dtype code {dtype}")
    expected = FLD_HEADER.size + 8 * nx * ny * ncomp
    if len(data) != expected:
        raise SnapshotFormatError(f"{path}: {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype="<f8", offset=FLD_HEADER.size).reshape(ncomp, nx, ny).copy()


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def inventory(root) -> dict:
    """sha256 and size of every file under ``root`` except the manifest."""
    root = Path(root)
    files = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != MANIFEST and not p.name.startswith("."):
            rel = p.relative_to(root).as_posix()
            files[rel] = {"sha256": sha256_file(p), "bytes": p.stat().st_size}
    return files


def write_manifest(root, payload: dict) -> dict:
    payload = dict(payload)
    payload["files"] = inventory(root)
    atomic_write_text(Path(root) / MANIFEST, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload


def read_manifest(root) -> dict:
    with open(Path(root) / MANIFEST) as fh:
        return json.load(fh)


def verify_manifest(root, manifest: dict) -> list[str]:
    """Problems found comparing the directory against its manifest (empty if clean)."""
    root = Path(root)
    problems = []
    listed = manifest.get("files", {})
    for rel, meta in listed.items():
        p = root / rel
        if not p.is_file():
            problems.append(f"missing file {rel}")
        elif sha256_file(p) != meta["sha256"]:
            problems.append(f"checksum mismatch {rel}")
    for rel in inventory(root):
        if rel not in listed:
            problems.append(f"unlisted file {rel}")
    return problems


class RunDirectory:
    """Diagnostics and snapshot sink writing one run directory."""

    def __init__(self, root, columns=CSV_COLUMNS):
        self.root = Path(root)
        try:
            (self.root / "snapshots").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create run directory {self.root}: {exc}") from exc
        self.columns = list(columns)
        self._diag = open(self.root / "diagnostics.csv", "w", newline="")
        self._diag_writer = csv.writer(self._diag, lineterminator="\n")
        self._diag_writer.writerow(self.columns)
        self._snap_index = open(self.root / "snapshots.csv", "w", newline="")
        self._snap_writer = csv.writer(self._snap_index, lineterminator="\n")
        self._snap_writer.writerow(["step", "t", "file", "ncomponents"])
        self._last_snapshot_step = None

    def diagnostics(self, row: dict) -> None:
        self._diag_writer.writerow([format_float(row[c]) for c in self.columns])

    def snapshot(self, state) -> None:
        if state.step_count == self._last_snapshot_step:
            return
        self._last_snapshot_step = state.step_count
        arrays = [ifft(state.u.coeffs)]
        if state.tau is not None:
            arrays.append(ifft(state.tau.coeffs))
        values = np.concatenate(arrays)
        name = f"snapshots/step_{state.step_count:08d}.fld"
        write_fld(self.root / name, values)
        self._snap_writer.writerow([state.step_count, format_float(state.t), name, values.shape[0]])

    def close(self) -> None:
        for fh in (self._diag, self._snap_index):
            if not fh.closed:
                fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_float(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


def check_grid_values(values: np.ndarray, nx: int, ny: int) -> None:
    if values.shape[-2:] != (nx, ny):
        raise ConfigurationError(f"snapshot grid {values.shape[-2:]} does not match {nx}x{ny}")
