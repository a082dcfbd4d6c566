"""Shared scene builders and brute-force metric oracles for the tests."""

import json
import math
from pathlib import Path

import numpy as np

SCENES = Path(__file__).resolve().parent.parent / "src/evrender/scenes"


def write_scene(dirpath, doc, name="scene.json"):
    p = Path(dirpath) / name
    p.write_text(json.dumps(doc))
    return str(p)


def base_camera(width=16, height=16, fov=0.8):
    return {"fov": fov, "width": width, "height": height,
            "keyframes": [{"t": 0.0, "pos": [0.0, 0.0, 5.0],
                           "quat": [1.0, 0.0, 0.0, 0.0]}]}


def furnace_doc(albedo=1.0):
    """Constant environment around a single matte sphere: the rendered value
    at the sphere equals the albedo times the environment radiance."""
    return {
        "frames": 2,
        "threshold": 0.5,
        "environment": [1.0, 1.0, 1.0],
        "camera": base_camera(8, 8),
        "materials": {"ball": {"kind": "lambertian",
                               "albedo": [albedo] * 3}},
        "primitives": [{"shape": "sphere", "material": "ball",
                        "center": [0.0, 0.0, 0.0], "radius": 1.0}],
    }


def emitter_view_doc(radiance=5.0):
    """Camera staring straight at a big emitter: zero-variance pixels."""
    return {
        "frames": 2,
        "threshold": 0.5,
        "camera": base_camera(4, 4),
        "materials": {"lamp": {"kind": "emitter",
                               "radiance": [radiance] * 3}},
        "primitives": [{"shape": "sphere", "material": "lamp",
                        "center": [0.0, 0.0, 0.0], "radius": 2.0}],
    }


def static_lit_doc(width=16, height=16, frames=5):
    """Static, well lit, light source outside the view frustum."""
    return {
        "frames": frames,
        "threshold": 0.5,
        "environment": [0.15, 0.15, 0.15],
        "camera": base_camera(width, height),
        "materials": {
            "backdrop": {"kind": "lambertian", "albedo": [0.6, 0.58, 0.55]},
            "lamp": {"kind": "emitter", "radiance": [12.0, 11.0, 10.0]},
        },
        "primitives": [
            {"shape": "triangle", "material": "backdrop",
             "vertices": [[-6, -6, -2], [6, -6, -2], [6, 6, -2]]},
            {"shape": "triangle", "material": "backdrop",
             "vertices": [[-6, -6, -2], [6, 6, -2], [-6, 6, -2]]},
            {"shape": "sphere", "material": "lamp",
             "center": [0.0, 6.0, 4.0], "radius": 1.5},
        ],
    }


def moving_emitter_doc(width=24, height=24, frames=8):
    """Bright sphere sweeping across a matte backdrop."""
    return {
        "frames": frames,
        "threshold": 0.5,
        "environment": [0.05, 0.05, 0.05],
        "camera": base_camera(width, height, fov=0.9),
        "materials": {
            "backdrop": {"kind": "lambertian", "albedo": [0.65, 0.62, 0.58]},
            "lamp": {"kind": "emitter", "radiance": [6.0, 5.2, 4.2]},
        },
        "primitives": [
            {"shape": "triangle", "material": "backdrop",
             "vertices": [[-6, -6, -2], [6, -6, -2], [6, 6, -2]]},
            {"shape": "triangle", "material": "backdrop",
             "vertices": [[-6, -6, -2], [6, 6, -2], [-6, 6, -2]]},
            {"shape": "sphere", "material": "lamp",
             "center": [0.0, 0.0, 0.0], "radius": 0.6,
             "motion": [{"t": 0.0, "pos": [-2.2, 0, 0], "quat": [1, 0, 0, 0]},
                        {"t": 1.0, "pos": [2.2, 0, 0], "quat": [1, 0, 0, 0]}]},
        ],
    }


def luma(rgb):
    return 0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]


# Independent O(n^2) oracles for the point-cloud metrics.

def _pair_dists(src, dst):
    out = np.empty((src.shape[0], dst.shape[0]))
    for i in range(src.shape[0]):
        for j in range(dst.shape[0]):
            d = src[i] - dst[j]
            out[i, j] = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    return out


def brute_f1(a, b, tau):
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
        if pa.shape[0] and pb.shape[0]:
            d = _pair_dists(pa, pb)
            matched_a += int((d.min(axis=1) <= tau).sum())
            matched_b += int((d.min(axis=0) <= tau).sum())
    p = matched_a / na
    r = matched_b / nb
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def brute_pscd(a, b):
    na, nb = len(a), len(b)
    if na == 0 and nb == 0:
        return 0.0
    diam = math.sqrt(3.0)
    if na == 0 or nb == 0:
        return diam
    scale = np.array([a.width, a.height, a.n_frames], dtype=np.float64)
    an = a.xyz / scale
    bn = b.xyz / scale

    def side(src, sp, dst, dp):
        total = 0.0
        for i in range(src.shape[0]):
            best = math.inf
            for j in range(dst.shape[0]):
                if sp[i] != dp[j]:
                    continue
                d = src[i] - dst[j]
                dist = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
                if dist < best:
                    best = dist
            total += diam if math.isinf(best) else best
        return total / src.shape[0]

    return 0.5 * (side(an, a.polarity, bn, b.polarity)
                  + side(bn, b.polarity, an, a.polarity))
