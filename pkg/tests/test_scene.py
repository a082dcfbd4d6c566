import json
import math
from pathlib import Path

import numpy as np
import pytest

from evrender.scene import (EnvMiss, Hit, SceneError, camera_at, flatten_at,
                            intersect, load_scene)

SCENES = Path(__file__).resolve().parent.parent / "src/evrender/scenes"


def write_scene(tmp_path, doc, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def minimal_doc(**overrides):
    doc = {
        "frames": 4,
        "threshold": 0.5,
        "environment": [1.0, 1.0, 1.0],
        "camera": {"fov": 0.8, "width": 8, "height": 8,
                   "keyframes": [{"t": 0.0, "pos": [0.0, 0.0, 5.0],
                                  "quat": [1.0, 0.0, 0.0, 0.0]}]},
        "materials": {"gray": {"kind": "lambertian",
                               "albedo": [0.5, 0.5, 0.5]}},
        "primitives": [{"shape": "sphere", "material": "gray",
                        "center": [0.0, 0.0, 0.0], "radius": 1.0}],
    }
    doc.update(overrides)
    return doc


def test_minimal_scene_loads(tmp_path):
    scene = load_scene(write_scene(tmp_path, minimal_doc()))
    assert len(scene.primitives) == 1
    assert scene.threshold == 0.5


def test_fov_zero_rejected(tmp_path):
    doc = minimal_doc()
    doc["camera"]["fov"] = 0.0
    with pytest.raises(SceneError, match="fov out of range"):
        load_scene(write_scene(tmp_path, doc))


def test_missing_file_is_scene_error():
    with pytest.raises(SceneError, match="not found"):
        load_scene("/nonexistent/scene.json")


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "frames": 4,\n  oops\n}')
    with pytest.raises(SceneError, match="line 3"):
        load_scene(str(p))


def test_bad_albedo_rejected(tmp_path):
    doc = minimal_doc()
    doc["materials"]["gray"]["albedo"] = [0.5, 1.5, 0.5]
    with pytest.raises(SceneError, match="albedo"):
        load_scene(write_scene(tmp_path, doc))


def test_collinear_triangle_rejected(tmp_path):
    doc = minimal_doc()
    doc["primitives"] = [{"shape": "triangle", "material": "gray",
                          "vertices": [[0, 0, 0], [1, 0, 0], [2, 0, 0]]}]
    with pytest.raises(SceneError, match="collinear"):
        load_scene(write_scene(tmp_path, doc))


def test_nonincreasing_keyframe_times_rejected(tmp_path):
    doc = minimal_doc()
    doc["camera"]["keyframes"] = [
        {"t": 0.0, "pos": [0, 0, 5], "quat": [1, 0, 0, 0]},
        {"t": 0.0, "pos": [0, 0, 4], "quat": [1, 0, 0, 0]},
    ]
    with pytest.raises(SceneError, match="strictly increasing"):
        load_scene(write_scene(tmp_path, doc))


def test_non_unit_quaternion_rejected(tmp_path):
    doc = minimal_doc()
    doc["camera"]["keyframes"][0]["quat"] = [0.9, 0.1, 0.0, 0.0]
    with pytest.raises(SceneError, match="unit-norm"):
        load_scene(write_scene(tmp_path, doc))


def test_bundled_two_boxes_threshold():
    scene = load_scene(str(SCENES / "two_boxes.json"))
    assert scene.threshold == 0.5
    assert scene.camera.n_frames == 240
    assert scene.camera.width == 200


def test_camera_endpoints_and_midpoint(tmp_path):
    doc = minimal_doc(frames=3)
    doc["camera"]["keyframes"] = [
        {"t": 0.0, "pos": [0.0, 0.0, 0.0], "quat": [1, 0, 0, 0]},
        {"t": 1.0, "pos": [2.0, 0.0, 0.0], "quat": [1, 0, 0, 0]},
    ]
    scene = load_scene(write_scene(tmp_path, doc))
    assert np.array_equal(camera_at(scene, 1).position, [0.0, 0.0, 0.0])
    assert np.array_equal(camera_at(scene, 3).position, [2.0, 0.0, 0.0])
    assert camera_at(scene, 2).position == pytest.approx([1.0, 0.0, 0.0])


def test_camera_frame_out_of_range(tmp_path):
    scene = load_scene(write_scene(tmp_path, minimal_doc()))
    with pytest.raises(ValueError, match="out of range"):
        camera_at(scene, 0)
    with pytest.raises(ValueError, match="out of range"):
        camera_at(scene, 5)


def test_halving_keyframe_span_halves_pose_delta(tmp_path):
    def delta(frames):
        doc = minimal_doc(frames=frames)
        doc["camera"]["keyframes"] = [
            {"t": 0.0, "pos": [0.0, 0.0, 0.0], "quat": [1, 0, 0, 0]},
            {"t": 1.0, "pos": [4.0, 0.0, 0.0], "quat": [1, 0, 0, 0]},
        ]
        scene = load_scene(write_scene(tmp_path, doc))
        return np.linalg.norm(camera_at(scene, 2).position
                              - camera_at(scene, 1).position)

    assert delta(9) == pytest.approx(0.5 * delta(5), rel=1e-12)


def test_slerp_antipodal_uses_short_arc(tmp_path):
    q = [math.cos(0.3), 0.0, math.sin(0.3), 0.0]
    doc = minimal_doc(frames=5)
    doc["camera"]["keyframes"] = [
        {"t": 0.0, "pos": [0, 0, 5], "quat": q},
        {"t": 1.0, "pos": [0, 0, 5], "quat": [-v for v in q]},
    ]
    scene = load_scene(write_scene(tmp_path, doc))
    # -q is the same orientation, so every frame shares one rotation
    r1 = camera_at(scene, 1).rotation
    r3 = camera_at(scene, 3).rotation
    assert np.allclose(r1, r3, atol=1e-9)


def test_intersect_analytic_sphere_hit(tmp_path):
    scene = load_scene(write_scene(tmp_path, minimal_doc()))
    hit = intersect(scene, 1, [0.0, 0.0, -5.0], [0.0, 0.0, 1.0])
    assert isinstance(hit, Hit)
    assert hit.point == pytest.approx([0.0, 0.0, -1.0], abs=1e-9)
    assert hit.normal == pytest.approx([0.0, 0.0, -1.0], abs=1e-9)


def test_intersect_miss_carries_environment(tmp_path):
    scene = load_scene(write_scene(tmp_path, minimal_doc()))
    miss = intersect(scene, 1, [0.0, 0.0, 5.0], [0.0, 0.0, 1.0])
    assert isinstance(miss, EnvMiss)
    assert miss.radiance == pytest.approx([1.0, 1.0, 1.0])


def test_tangent_ray_is_miss(tmp_path):
    scene = load_scene(write_scene(tmp_path, minimal_doc()))
    # impact parameter exactly equals the radius
    miss = intersect(scene, 1, [-5.0, 1.0, 0.0], [1.0, 0.0, 0.0])
    assert isinstance(miss, EnvMiss)


def test_intersect_rejects_non_unit_direction(tmp_path):
    scene = load_scene(write_scene(tmp_path, minimal_doc()))
    with pytest.raises(ValueError, match="unit-norm"):
        intersect(scene, 1, [0, 0, 5], [0.0, 0.0, 2.0])


def cluttered_doc():
    doc = minimal_doc()
    doc["materials"]["lamp"] = {"kind": "emitter", "radiance": [3, 3, 3]}
    doc["primitives"] = [
        {"shape": "sphere", "material": "gray",
         "center": [0.0, 0.0, 0.0], "radius": 1.0},
        {"shape": "sphere", "material": "lamp",
         "center": [1.5, 0.8, -1.0], "radius": 0.5},
        {"shape": "triangle", "material": "gray",
         "vertices": [[-3, -2, -2], [3, -2, -2], [0, 3, -2]]},
        {"shape": "triangle", "material": "gray",
         "vertices": [[-2, -2, 1], [-1, -2, 1], [-1.5, 0, 0.5]]},
    ]
    return doc


def test_intersect_order_independent(tmp_path):
    doc = cluttered_doc()
    s1 = load_scene(write_scene(tmp_path, doc, "a.json"))
    doc["primitives"] = doc["primitives"][::-1]
    s2 = load_scene(write_scene(tmp_path, doc, "b.json"))
    rng = np.random.default_rng(77)
    for _ in range(10_000):
        o = rng.uniform(-4, 4, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        h1 = intersect(s1, 1, o, d)
        h2 = intersect(s2, 1, o, d)
        if isinstance(h1, EnvMiss):
            assert isinstance(h2, EnvMiss)
        else:
            assert h1.t == h2.t
            assert np.array_equal(h1.point, h2.point)


def test_static_scene_identical_across_frames(tmp_path):
    scene = load_scene(write_scene(tmp_path, cluttered_doc()))
    rng = np.random.default_rng(3)
    rays = [(rng.uniform(-4, 4, 3), rng.normal(size=3)) for _ in range(50)]
    base = None
    for s in range(1, 5):
        hits = []
        for o, d in rays:
            d = d / np.linalg.norm(d)
            h = intersect(scene, s, o, d)
            hits.append(h.t if isinstance(h, Hit) else -1.0)
        if base is None:
            base = hits
        else:
            assert hits == base


def test_motion_keyframes_move_primitive(tmp_path):
    doc = minimal_doc(frames=3)
    doc["primitives"][0]["motion"] = [
        {"t": 0.0, "pos": [0.0, 0.0, 0.0], "quat": [1, 0, 0, 0]},
        {"t": 1.0, "pos": [3.0, 0.0, 0.0], "quat": [1, 0, 0, 0]},
    ]
    scene = load_scene(write_scene(tmp_path, doc))
    assert isinstance(intersect(scene, 1, [0, 0, 5.0], [0, 0, -1.0]), Hit)
    assert isinstance(intersect(scene, 3, [0, 0, 5.0], [0, 0, -1.0]), EnvMiss)
    assert isinstance(intersect(scene, 3, [3.0, 0, 5.0], [0, 0, -1.0]), Hit)


def test_flatten_marks_emitters(tmp_path):
    scene = load_scene(write_scene(tmp_path, cluttered_doc()))
    geo = flatten_at(scene, 1)
    kinds = set(geo.emitters[:, 0].tolist())
    assert 0 in kinds           # the lamp sphere
    assert 2 in kinds           # nonzero environment
    assert geo.sph.shape[0] == 2
    assert geo.tri.shape[0] == 2
