"""On-disk formats: event CSV streams, grayscale PFM float images, and
metric report tables."""

from __future__ import annotations

import math
from pathlib import Path
from typing import List

import numpy as np

from .eventsim import Event


def write_events(path, events: List[Event]) -> None:
    """CSV with header s,x,y,p, records sorted by (s, y, x).

    Output bytes are a pure function of the event set.
    """
    ordered = sorted(events, key=lambda e: (e.s, e.y, e.x))
    with open(path, "w", newline="") as f:
        f.write("s,x,y,p\n")
        for e in ordered:
            f.write(f"{e.s},{e.x},{e.y},{e.p}\n")


def read_events(path) -> List[Event]:
    events: List[Event] = []
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header != "s,x,y,p":
            raise ValueError(f"{path}: bad header {header!r}")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields")
            try:
                s, x, y, p = (int(v) for v in parts)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-integer field")
            if p not in (-1, 1):
                raise ValueError(f"{path}: line {lineno}: polarity must be "
                                 "-1 or 1")
            if s < 1 or x < 0 or y < 0:
                raise ValueError(f"{path}: line {lineno}: negative coordinate")
            events.append(Event(x, y, s, p))
    return events


def write_pfm(path, image: np.ndarray) -> None:
    """Grayscale PFM: 'Pf' header, negative scale for little-endian floats,
    rows stored bottom-to-top. Refuses non-finite pixels before writing."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 2:
        raise ValueError("PFM writer expects a 2D grayscale image")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    h, w = image.shape
    header = f"Pf\n{w} {h}\n{-1.0:.12f}\n".encode("ascii")
    payload = np.flipud(image).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM file")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(4 * w * h), dtype=dtype)
        if data.size != w * h:
            raise ValueError(f"{path}: truncated pixel data")
    img = data.reshape(h, w)
    return np.flipud(img).astype(np.float32)


def _format_cell(key: str, value) -> str:
    if value is None:
        return ""
    if key == "speedup":
        return f"{value:.2f}×"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.6g}"
    return str(value)


def write_report(path, rows: List[dict]) -> None:
    """Metric/timing rows as CSV plus an aligned text table alongside.

    All rows must share one column set; the speedup column renders as a
    ratio like 8.00×.
    """
    if not rows:
        raise ValueError("report needs at least one row")
    columns = list(rows[0].keys())
    for r in rows:
        if list(r.keys()) != columns:
            raise ValueError("report rows have inconsistent columns")
    cells = [[_format_cell(c, r[c]) for c in columns] for r in rows]

    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(columns) + "\n")
        for row in cells:
            f.write(",".join(row) + "\n")

    widths = [max(len(columns[i]), max(len(row[i]) for row in cells))
              for i in range(len(columns))]
    txt = path.with_suffix(".txt")
    with open(txt, "w", encoding="utf-8") as f:
        f.write("  ".join(c.ljust(widths[i])
                          for i, c in enumerate(columns)).rstrip() + "\n")
        for row in cells:
            f.write("  ".join(v.ljust(widths[i])
                              for i, v in enumerate(row)).rstrip() + "\n")
