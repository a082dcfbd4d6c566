"""Animated scene model: keyframed pinhole camera, rigid-motion primitives,
materials, and a constant environment emitter, loaded from a JSON file."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

MAT_LAMBERTIAN = 0
MAT_MIRROR = 1
MAT_EMITTER = 2

_KIND_NAMES = {"lambertian": MAT_LAMBERTIAN, "mirror": MAT_MIRROR,
               "emitter": MAT_EMITTER}


class SceneError(ValueError):
    """Raised for unparseable or invariant-violating scene files."""


@dataclass
class Material:
    kind: int
    albedo: np.ndarray      # RGB in [0,1]; mirrors store reflectance in all 3
    radiance: np.ndarray    # RGB >= 0, nonzero only for emitters
    name: str = ""


@dataclass
class Keyframes:
    """Rigid pose track: strictly increasing times in [0,1], positions,
    unit quaternions (w, x, y, z)."""

    times: np.ndarray
    positions: np.ndarray
    quats: np.ndarray

    def at(self, u: float):
        """Pose at normalized time u: linear position, spherical-linear
        orientation, clamped at the ends."""
        t = self.times
        if len(t) == 1 or u <= t[0]:
            return self.positions[0].copy(), self.quats[0].copy()
        if u >= t[-1]:
            return self.positions[-1].copy(), self.quats[-1].copy()
        i = int(np.searchsorted(t, u, side="right")) - 1
        w = (u - t[i]) / (t[i + 1] - t[i])
        pos = self.positions[i] + w * (self.positions[i + 1] - self.positions[i])
        quat = _slerp(self.quats[i], self.quats[i + 1], w)
        return pos, quat


@dataclass
class Camera:
    keyframes: Keyframes
    fov: float              # vertical, radians
    width: int
    height: int
    n_frames: int


@dataclass
class Primitive:
    shape: str              # "sphere" or "triangle"
    material: int           # index into Scene.materials
    center: Optional[np.ndarray] = None
    radius: float = 0.0
    vertices: Optional[np.ndarray] = None   # (3, 3)
    motion: Optional[Keyframes] = None


@dataclass
class Scene:
    camera: Camera
    primitives: list
    materials: list
    environment: np.ndarray
    threshold: float
    path: str = ""


@dataclass
class PosedCamera:
    position: np.ndarray
    rotation: np.ndarray    # camera-to-world, columns are right/up/back
    fov: float
    width: int
    height: int


@dataclass
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray
    material: Material


@dataclass
class EnvMiss:
    radiance: np.ndarray


def _slerp(q0, q1, w):
    d = float(np.dot(q0, q1))
    if d < 0.0:
        # antipodal pair: flip to the shorter arc
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-10:
        q = q0 + w * (q1 - q0)
        return q / np.linalg.norm(q)
    omega = math.acos(min(d, 1.0))
    s = math.sin(omega)
    q = (math.sin((1.0 - w) * omega) * q0 + math.sin(w * omega) * q1) / s
    return q


def _quat_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _parse_keyframes(raw, where: str) -> Keyframes:
    if not raw:
        raise SceneError(f"{where}: at least one keyframe required")
    times, positions, quats = [], [], []
    for i, kf in enumerate(raw):
        times.append(float(kf.get("t", 0.0)))
        positions.append([float(v) for v in kf.get("pos", [0.0, 0.0, 0.0])])
        q = [float(v) for v in kf.get("quat", [1.0, 0.0, 0.0, 0.0])]
        norm = math.sqrt(sum(v * v for v in q))
        if abs(norm - 1.0) > 1e-6:
            raise SceneError(f"{where}: keyframe {i} quaternion not unit-norm")
        quats.append(q)
    t = np.array(times)
    if np.any(np.diff(t) <= 0):
        raise SceneError(f"{where}: keyframe times must be strictly increasing")
    return Keyframes(t, np.array(positions), np.array(quats))


def load_scene(path: str) -> Scene:
    """Load and validate a scene file; raises SceneError with the offending
    field on any invariant violation."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise SceneError(f"scene file not found: {path}")
    except json.JSONDecodeError as e:
        raise SceneError(f"{path}: parse error at line {e.lineno}: {e.msg}")

    for key in ("camera", "primitives", "frames", "threshold"):
        if key not in doc:
            raise SceneError(f"{path}: missing top-level key '{key}'")

    cam_doc = doc["camera"]
    fov = float(cam_doc.get("fov", 0.0))
    if not (0.0 < fov < math.pi):
        raise SceneError("fov out of range")
    width = int(cam_doc.get("width", 0))
    height = int(cam_doc.get("height", 0))
    if width < 1 or height < 1:
        raise SceneError("image size must be at least 1x1")
    n_frames = int(doc["frames"])
    if n_frames < 2:
        raise SceneError("frames must be at least 2")
    camera = Camera(_parse_keyframes(cam_doc.get("keyframes"), "camera"),
                    fov, width, height, n_frames)

    threshold = float(doc["threshold"])
    if threshold < 0.0:
        raise SceneError("threshold must be nonnegative")

    env = np.array([float(v) for v in doc.get("environment", [0.0, 0.0, 0.0])])
    if env.shape != (3,) or np.any(env < 0) or not np.all(np.isfinite(env)):
        raise SceneError("environment radiance must be finite and nonnegative")

    materials: list = []
    mat_index: dict = {}
    for name, m in doc.get("materials", {}).items():
        kind_name = m.get("kind")
        if kind_name not in _KIND_NAMES:
            raise SceneError(f"material '{name}': unknown kind '{kind_name}'")
        kind = _KIND_NAMES[kind_name]
        albedo = np.zeros(3)
        radiance = np.zeros(3)
        if kind == MAT_LAMBERTIAN:
            albedo = np.array([float(v) for v in m.get("albedo", [0, 0, 0])])
            if np.any(albedo < 0) or np.any(albedo > 1):
                raise SceneError(f"material '{name}': albedo out of [0,1]")
        elif kind == MAT_MIRROR:
            r = float(m.get("reflectance", 0.0))
            if not (0.0 <= r <= 1.0):
                raise SceneError(f"material '{name}': reflectance out of [0,1]")
            albedo = np.full(3, r)
        else:
            radiance = np.array([float(v) for v in m.get("radiance", [0, 0, 0])])
            if np.any(radiance < 0) or not np.all(np.isfinite(radiance)):
                raise SceneError(
                    f"material '{name}': radiance must be finite, nonnegative")
        mat_index[name] = len(materials)
        materials.append(Material(kind, albedo, radiance, name))

    primitives = []
    for i, p in enumerate(doc["primitives"]):
        mname = p.get("material")
        if mname not in mat_index:
            raise SceneError(f"primitive {i}: unknown material '{mname}'")
        motion = None
        if "motion" in p:
            motion = _parse_keyframes(p["motion"], f"primitive {i} motion")
        shape = p.get("shape")
        if shape == "sphere":
            radius = float(p.get("radius", 0.0))
            if radius <= 0.0:
                raise SceneError(f"primitive {i}: radius must be positive")
            center = np.array([float(v) for v in p["center"]])
            primitives.append(Primitive("sphere", mat_index[mname],
                                        center=center, radius=radius,
                                        motion=motion))
        elif shape == "triangle":
            verts = np.array([[float(v) for v in row]
                              for row in p["vertices"]])
            if verts.shape != (3, 3):
                raise SceneError(f"primitive {i}: triangle needs 3 vertices")
            area = 0.5 * np.linalg.norm(
                np.cross(verts[1] - verts[0], verts[2] - verts[0]))
            if area <= 1e-12:
                raise SceneError(f"primitive {i}: triangle vertices collinear")
            primitives.append(Primitive("triangle", mat_index[mname],
                                        vertices=verts, motion=motion))
        else:
            raise SceneError(f"primitive {i}: unknown shape '{shape}'")

    if not primitives and not np.any(env > 0):
        raise SceneError("scene needs at least one primitive or a nonzero "
                         "environment")

    return Scene(camera, primitives, materials, env, threshold, str(path))


def frame_time(scene: Scene, s: int) -> float:
    """Normalized time of 1-based frame s."""
    n = scene.camera.n_frames
    if not (1 <= s <= n):
        raise ValueError(f"frame index {s} out of range [1, {n}]")
    return (s - 1) / (n - 1)


def camera_at(scene: Scene, s: int) -> PosedCamera:
    """Camera pose at frame s (1-based), interpolated between keyframes."""
    u = frame_time(scene, s)
    pos, quat = scene.camera.keyframes.at(u)
    return PosedCamera(pos, _quat_matrix(quat), scene.camera.fov,
                       scene.camera.width, scene.camera.height)


class FrameGeometry(NamedTuple):
    """Scene posed at one frame, flattened for the tracing kernel."""

    sph: np.ndarray         # (ns, 4) cx cy cz r
    sph_mat: np.ndarray     # (ns,) int32
    tri: np.ndarray         # (nt, 9) v0, edge1, edge2
    tri_mat: np.ndarray     # (nt,) int32
    tri_aux: np.ndarray     # (nt, 4) unit normal, area
    mats: np.ndarray        # (nm, 7) albedo rgb, radiance rgb, kind
    emitters: np.ndarray    # (ne, 2) kind (0 sphere, 1 tri, 2 env), index
    env: np.ndarray         # (3,)
    cam_pos: np.ndarray     # (3,)
    cam_rot: np.ndarray     # (3, 3) camera-to-world
    tan_half_fov: float
    width: int
    height: int


def flatten_at(scene: Scene, s: int) -> FrameGeometry:
    """Pose every primitive at frame s and pack the scene into flat arrays."""
    u = frame_time(scene, s)
    sph_rows, sph_mats = [], []
    tri_rows, tri_mats, tri_auxs = [], [], []
    emitters = []
    for prim in scene.primitives:
        if prim.motion is not None:
            t, q = prim.motion.at(u)
            R = _quat_matrix(q)
        else:
            t, R = None, None
        mat = scene.materials[prim.material]
        emitting = (mat.kind == MAT_EMITTER and np.any(mat.radiance > 0))
        if prim.shape == "sphere":
            c = prim.center
            if R is not None:
                c = R @ c + t
            if emitting:
                emitters.append((0, len(sph_rows)))
            sph_rows.append([c[0], c[1], c[2], prim.radius])
            sph_mats.append(prim.material)
        else:
            v = prim.vertices
            if R is not None:
                v = v @ R.T + t
            e1 = v[1] - v[0]
            e2 = v[2] - v[0]
            n = np.cross(e1, e2)
            area = 0.5 * np.linalg.norm(n)
            n = n / (2.0 * area)
            if emitting:
                emitters.append((1, len(tri_rows)))
            tri_rows.append(np.concatenate([v[0], e1, e2]))
            tri_mats.append(prim.material)
            tri_auxs.append([n[0], n[1], n[2], area])
    if np.any(scene.environment > 0):
        emitters.append((2, -1))

    nm = len(scene.materials)
    mats = np.zeros((max(nm, 1), 7))
    for i, m in enumerate(scene.materials):
        mats[i, 0:3] = m.albedo
        mats[i, 3:6] = m.radiance
        mats[i, 6] = m.kind

    cam = camera_at(scene, s)
    return FrameGeometry(
        sph=np.array(sph_rows, dtype=np.float64).reshape(-1, 4),
        sph_mat=np.array(sph_mats, dtype=np.int32),
        tri=np.array(tri_rows, dtype=np.float64).reshape(-1, 9),
        tri_mat=np.array(tri_mats, dtype=np.int32),
        tri_aux=np.array(tri_auxs, dtype=np.float64).reshape(-1, 4),
        mats=mats,
        emitters=np.array(emitters, dtype=np.int32).reshape(-1, 2),
        env=scene.environment.astype(np.float64),
        cam_pos=cam.position.astype(np.float64),
        cam_rot=cam.rotation.astype(np.float64),
        tan_half_fov=math.tan(0.5 * cam.fov),
        width=cam.width,
        height=cam.height,
    )


def intersect(scene: Scene, s: int, origin, direction):
    """Nearest hit of a ray against the scene posed at frame s.

    Returns a Hit, or an EnvMiss carrying the environment radiance.
    The direction must be unit-norm within 1e-6.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
        raise ValueError("ray direction must be unit-norm")
    geo = flatten_at(scene, s)
    best_t = math.inf
    best = None
    for i in range(geo.sph.shape[0]):
        cx, cy, cz, r = geo.sph[i]
        oc = origin - np.array([cx, cy, cz])
        b = float(np.dot(oc, direction))
        c = float(np.dot(oc, oc)) - r * r
        disc = b * b - c
        if disc <= 0.0:
            # tangent grazes count as misses
            continue
        sq = math.sqrt(disc)
        t = -b - sq
        if t <= 1e-9:
            t = -b + sq
        if 1e-9 < t < best_t:
            best_t = t
            best = ("sphere", i)
    for i in range(geo.tri.shape[0]):
        row = geo.tri[i]
        v0, e1, e2 = row[0:3], row[3:6], row[6:9]
        p = np.cross(direction, e2)
        det = float(np.dot(e1, p))
        if abs(det) < 1e-12:
            continue
        inv = 1.0 / det
        tv = origin - v0
        uu = float(np.dot(tv, p)) * inv
        if uu < 0.0 or uu > 1.0:
            continue
        qv = np.cross(tv, e1)
        vv = float(np.dot(direction, qv)) * inv
        if vv < 0.0 or uu + vv > 1.0:
            continue
        t = float(np.dot(e2, qv)) * inv
        if 1e-9 < t < best_t:
            best_t = t
            best = ("triangle", i)
    if best is None:
        return EnvMiss(scene.environment.copy())
    point = origin + best_t * direction
    if best[0] == "sphere":
        cx, cy, cz, r = geo.sph[best[1]]
        normal = (point - np.array([cx, cy, cz])) / r
        mat = scene.materials[int(geo.sph_mat[best[1]])]
    else:
        normal = geo.tri_aux[best[1], 0:3].copy()
        mat = scene.materials[int(geo.tri_mat[best[1]])]
    if float(np.dot(normal, direction)) > 0.0:
        normal = -normal
    return Hit(best_t, point, normal, mat)
