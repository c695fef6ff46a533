"""Bit-exact file formats: the tensor container, PGM previews, weight bundles.

Container layout (little-endian throughout):
    magic   "SAVT" (4 bytes)
    version u16 = 1
    rank    u16
    extents u32 * rank
    payload float32, row-major
    crc32   u32 over the payload bytes

Values live as float64 in memory and float32 on disk; a write-read round
trip is therefore exact at float32 precision, and rewriting what was read
is byte-identical. All writes go through a temp file + atomic rename.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
import warnings
import zlib

import numpy as np

MAGIC = b"SAVT"
VERSION = 1


class ContainerError(ValueError):
    """Malformed tensor container."""


def _atomic_write(path, payload):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tensor(path, arr):
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to serialize non-finite tensor")
    payload = arr.astype("<f4").tobytes(order="C")
    head = MAGIC + struct.pack("<HH", VERSION, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    _atomic_write(path, head + payload + struct.pack("<I", zlib.crc32(payload)))


def read_tensor(path):
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic")
    version, rank = struct.unpack_from("<HH", blob, 4)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    ofs = 8 + 4 * rank
    if len(blob) < ofs:
        raise ContainerError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{rank}I", blob, 8)
    n = int(np.prod(shape)) if rank else 1
    if len(blob) != ofs + 4 * n + 4:
        raise ContainerError(f"{path}: payload length mismatch")
    payload = blob[ofs : ofs + 4 * n]
    (crc,) = struct.unpack_from("<I", blob, ofs + 4 * n)
    if crc != zlib.crc32(payload):
        raise ContainerError(f"{path}: CRC mismatch")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(shape)


def write_pgm(path, grid):
    """Binary P5, maxval 255, byte = floor(x*255 + 0.5) (round half up)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("PGM wants a 2D grid")
    if grid.min() < 0.0 or grid.max() > 1.0:
        warnings.warn("PGM values outside [0,1], clipping", RuntimeWarning)
        grid = np.clip(grid, 0.0, 1.0)
    data = np.floor(grid * 255.0 + 0.5).astype(np.uint8)
    head = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode()
    _atomic_write(path, head + data.tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        blob = f.read()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError(f"{path}: not a maxval-255 P5 file")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3][: w * h], dtype=np.uint8).astype(np.float64).reshape(h, w) / 255.0


def export_pgm(seq, outdir, prefix="frame"):
    """One PGM per frame (per channel when multi-channel); returns paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    frames = np.asarray(seq, dtype=np.float64)
    for i, frame in enumerate(frames):
        if frame.ndim == 2:
            frame = frame[None]
        if frame.shape[0] == 1:
            p = os.path.join(outdir, f"{prefix}_{i:03d}.pgm")
            write_pgm(p, frame[0])
            paths.append(p)
        else:
            for c in range(frame.shape[0]):
                p = os.path.join(outdir, f"{prefix}_{i:03d}_c{c}.pgm")
                write_pgm(p, frame[c])
                paths.append(p)
    return paths


def save_bundle(outdir, tensors, meta=None):
    """Weight bundle: manifest.json + one container per named tensor."""
    os.makedirs(outdir, exist_ok=True)
    manifest = {"meta": meta or {}, "tensors": sorted(tensors)}
    for name, arr in tensors.items():
        write_tensor(os.path.join(outdir, f"{name}.savt"), arr)
    _atomic_write(os.path.join(outdir, "manifest.json"),
                  json.dumps(manifest, indent=1, sort_keys=True).encode())


def load_bundle(indir):
    with open(os.path.join(indir, "manifest.json")) as f:
        manifest = json.load(f)
    tensors = {name: read_tensor(os.path.join(indir, f"{name}.savt"))
               for name in manifest["tensors"]}
    return tensors, manifest.get("meta", {})
