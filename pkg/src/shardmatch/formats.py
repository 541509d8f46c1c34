"""File formats: portable graymaps, raw float rasters, CSV reports."""

from __future__ import annotations

import os
import struct

import numpy as np

FFH_MAGIC = b"FFH1"


def write_pgm(path: str | os.PathLike, mask: np.ndarray) -> None:
    """Binary P5, maxval 255, foreground = 255."""
    m = np.asarray(mask).astype(bool)
    h, w = m.shape
    data = (m.astype(np.uint8) * 255).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data)


def write_pgm16(path: str | os.PathLike, img: np.ndarray) -> None:
    """Binary P5 with maxval 65535 for [0, 1] intensity grids."""
    a = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    q = np.round(a * 65535.0).astype(">u2")
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())


def _read_pnm_header(fh) -> tuple[bytes, int, int, int]:
    def token() -> bytes:
        t = b""
        while True:
            c = fh.read(1)
            if not c:
                raise ValueError("truncated PNM header")
            if c == b"#":
                while c not in (b"\n", b""):
                    c = fh.read(1)
                continue
            if c.isspace():
                if t:
                    return t
                continue
            t += c

    magic = token()
    w, h, maxval = int(token()), int(token()), int(token())
    return magic, w, h, maxval


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read P5 or P2; returns float64 in [0, 1] (use > 0.5 for masks)."""
    with open(path, "rb") as fh:
        magic, w, h, maxval = _read_pnm_header(fh)
        if magic == b"P5":
            if maxval > 255:
                raw = np.frombuffer(fh.read(w * h * 2), dtype=">u2")
            else:
                raw = np.frombuffer(fh.read(w * h), dtype=np.uint8)
        elif magic == b"P2":
            raw = np.array(fh.read().split(), dtype=np.int64)
        else:
            raise ValueError(f"not a PGM file: magic {magic!r}")
    if raw.size != w * h:
        raise ValueError("PGM pixel data truncated")
    return raw.reshape(h, w).astype(np.float64) / maxval


def write_pgm_ascii(path: str | os.PathLike, mask: np.ndarray) -> None:
    """Plain-text P2 fixture format, foreground = 255."""
    m = np.asarray(mask).astype(bool)
    h, w = m.shape
    lines = [f"P2", f"{w} {h}", "255"]
    for row in (m.astype(np.uint8) * 255):
        lines.append(" ".join(str(v) for v in row.tolist()))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mask(path: str | os.PathLike) -> np.ndarray:
    return read_pgm(path) > 0.5


def write_ffh(path: str | os.PathLike, grid: np.ndarray) -> None:
    """Raw float64 raster: 16-byte header (magic FFH1, u32 width, u32 height,
    u32 reserved, little-endian) followed by row-major LE float64."""
    a = np.ascontiguousarray(np.asarray(grid, dtype="<f8"))
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(FFH_MAGIC)
        fh.write(struct.pack("<III", w, h, 0))
        fh.write(a.tobytes())


def read_ffh(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FFH_MAGIC:
            raise ValueError(f"bad FFH magic {magic!r} in {path}")
        w, h, _ = struct.unpack("<III", fh.read(12))
        data = np.frombuffer(fh.read(w * h * 8), dtype="<f8")
    if data.size != w * h:
        raise ValueError("FFH pixel data truncated")
    return data.reshape(h, w).copy()


def write_sidecar(path: str | os.PathLike, units: str, gauge: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"units: {units}\ngauge: {gauge}\n")


def write_lights(path: str | os.PathLike, lights: np.ndarray) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for row in np.asarray(lights, dtype=np.float64):
            fh.write(f"{row[0]!r} {row[1]!r} {row[2]!r}\n")


def read_lights(path: str | os.PathLike) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split()])
    lights = np.array(rows, dtype=np.float64)
    if lights.shape != (3, 3):
        raise ValueError(f"expected 3 light vectors in {path}, got shape {lights.shape}")
    return lights


def write_csv(path: str | os.PathLike, header: str, rows: list[str]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")
