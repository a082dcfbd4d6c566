"""Event-stream comparison metrics: frame-based RMSE/PSNR and
polarity-aware F1 / signed chamfer distance on spatiotemporal point clouds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


@dataclass
class SignedPointCloud:
    """Events as 3D points (x, y, t) with polarity signs, plus the axis
    extents needed for normalized distances."""

    xyz: np.ndarray         # (n, 3) float64
    polarity: np.ndarray    # (n,) values in {-1, +1}
    width: int
    height: int
    n_frames: int

    @classmethod
    def from_events(cls, events, width: int, height: int, n_frames: int):
        n = len(events)
        xyz = np.empty((n, 3), dtype=np.float64)
        pol = np.empty(n, dtype=np.int8)
        for i, e in enumerate(events):
            xyz[i, 0] = e.x
            xyz[i, 1] = e.y
            xyz[i, 2] = e.s
            pol[i] = e.p
        return cls(xyz, pol, width, height, n_frames)

    def __len__(self):
        return self.xyz.shape[0]


def events_to_frames(events, width: int, height: int,
                     n_frames: int) -> np.ndarray:
    """Per-frame grids with 1.0 at positive events, 0.0 at negative, 0.5
    elsewhere. Returns an (n_frames, height, width) array."""
    frames = np.full((n_frames, height, width), 0.5)
    for e in events:
        if not (1 <= e.s <= n_frames and 0 <= e.x < width
                and 0 <= e.y < height):
            raise ValueError(f"event out of bounds: ({e.x}, {e.y}, s={e.s})")
        frames[e.s - 1, e.y, e.x] = 1.0 if e.p > 0 else 0.0
    return frames


def rmse_psnr(a: np.ndarray, b: np.ndarray):
    """RMSE over all pixels and frames, and PSNR in dB against peak 1.0.

    Identical inputs give rmse 0 and psnr +inf.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"frame shape mismatch: {a.shape} vs {b.shape}")
    rmse = math.sqrt(float(np.mean((a - b) ** 2)))
    psnr = math.inf if rmse == 0.0 else 20.0 * math.log10(1.0 / rmse)
    return rmse, psnr


def _nearest_dists(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Distance from each src point to its nearest dst point."""
    if dst.shape[0] == 0:
        return np.full(src.shape[0], np.inf)
    if src.shape[0] == 0:
        return np.empty(0)
    tree = cKDTree(dst)
    d, _ = tree.query(src, k=1)
    return np.atleast_1d(d)


def polarity_f1(a: SignedPointCloud, b: SignedPointCloud,
                tau: float = 2.0) -> float:
    """F1 of matching points within radius tau, same polarity required.

    Distances are Euclidean in raw (pixel, pixel, frame) units. Two empty
    clouds score 1.0; exactly one empty scores 0.0.
    """
    if tau <= 0:
        raise ValueError("match radius must be positive")
    na, nb = len(a), len(b)
    if na == 0 and nb == 0:
        return 1.0
    if na == 0 or nb == 0:
        return 0.0
    matched_a = 0
    matched_b = 0
    for pol in (-1, 1):
        pa = a.xyz[a.polarity == pol]
        pb = b.xyz[b.polarity == pol]
        matched_a += int(np.count_nonzero(_nearest_dists(pa, pb) <= tau))
        matched_b += int(np.count_nonzero(_nearest_dists(pb, pa) <= tau))
    precision = matched_a / na
    recall = matched_b / nb
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def signed_chamfer(a: SignedPointCloud, b: SignedPointCloud) -> float:
    """Symmetric mean nearest-neighbor distance restricted to equal
    polarity, in coordinates normalized by (width, height, n_frames).

    A point whose polarity class is missing from the other cloud counts the
    normalized-space diameter sqrt(3). Two empty clouds score 0; a single
    empty cloud contributes the full sqrt(3) penalty.
    """
    if (a.width, a.height, a.n_frames) != (b.width, b.height, b.n_frames):
        raise ValueError("point clouds have different axis extents")
    na, nb = len(a), len(b)
    if na == 0 and nb == 0:
        return 0.0
    diameter = math.sqrt(3.0)
    if na == 0 or nb == 0:
        return diameter
    scale = np.array([a.width, a.height, a.n_frames], dtype=np.float64)
    an = a.xyz / scale
    bn = b.xyz / scale

    def one_side(src, src_pol, dst, dst_pol):
        total = 0.0
        for pol in (-1, 1):
            ps = src[src_pol == pol]
            if ps.shape[0] == 0:
                continue
            d = _nearest_dists(ps, dst[dst_pol == pol])
            d = np.where(np.isinf(d), diameter, d)
            total += float(d.sum())
        return total / src.shape[0]

    mean_a = one_side(an, a.polarity, bn, b.polarity)
    mean_b = one_side(bn, b.polarity, an, a.polarity)
    return 0.5 * (mean_a + mean_b)
