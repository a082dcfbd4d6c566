"""Command-line entry point: render event streams, evaluate two streams
against each other, and benchmark speedups across image sizes."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, evio, metrics, tracer
from .eventsim import MODES, SimConfig, simulate
from .scene import Scene, SceneError, load_scene


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_threads(requested):
    if requested is None:
        env = os.environ.get("EVRENDER_THREADS")
        if env is not None:
            try:
                requested = int(env)
            except ValueError:
                raise ValueError(f"EVRENDER_THREADS must be an integer, "
                                 f"got {env!r}")
    if requested is None:
        return tracer.set_threads(10 ** 9)   # clamp picks the full budget
    if requested < 1:
        raise ValueError("--threads must be at least 1")
    return tracer.set_threads(requested)


def _apply_overrides(scene: Scene, args) -> None:
    if getattr(args, "width", None):
        scene.camera.width = args.width
    if getattr(args, "height", None):
        scene.camera.height = args.height
    if getattr(args, "frames", None):
        if args.frames < 2:
            raise ValueError("--frames must be at least 2")
        scene.camera.n_frames = args.frames


def _write_atomic_json(path, payload) -> None:
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def cmd_render(args) -> int:
    if args.from_manifest:
        with open(args.from_manifest) as f:
            manifest = json.load(f)
        cfg_doc = manifest["config"]
        args.scene = manifest["scene_path"]
        args.mode = cfg_doc["mode"]
        args.spp = cfg_doc["n_spp"]
        args.alpha = cfg_doc["alpha"]
        args.theta = cfg_doc["theta"]
        args.epsilon = cfg_doc["eps"]
        args.init_batch = cfg_doc["initial"]
        args.batch = cfg_doc["increment"]
        args.seed = cfg_doc["seed"]
        args.width = manifest["film"]["width"]
        args.height = manifest["film"]["height"]
        args.frames = manifest["film"]["frames"]
        recorded = manifest.get("scene_sha256")
        actual = _sha256(args.scene)
        if recorded and recorded != actual:
            raise ValueError(f"scene file {args.scene} no longer matches the "
                             "manifest hash")
    if not args.scene:
        raise ValueError("--scene is required (or --from-manifest)")

    threads = _resolve_threads(args.threads)
    scene = load_scene(args.scene)
    _apply_overrides(scene, args)
    cfg = SimConfig(mode=args.mode, n_spp=args.spp, initial=args.init_batch,
                    increment=args.batch, alpha=args.alpha, theta=args.theta,
                    eps=args.epsilon, seed=args.seed)
    cfg.validate()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tracer.diagnostics.reset()

    t0 = time.perf_counter()
    events, reports = simulate(scene, cfg)
    sim_time = time.perf_counter() - t0

    evio.write_events(out / "events.csv", events)
    for r in reports:
        evio.write_pfm(out / f"counts_{r.s:04d}.pfm",
                       r.counts.astype(np.float32))
        evio.write_pfm(out / f"mean_{r.s:04d}.pfm", r.mean)
    total_paths = sum(r.paths for r in reports)

    manifest = {
        "tool_version": __version__,
        "scene_path": str(args.scene),
        "scene_sha256": _sha256(args.scene),
        "film": {"width": scene.camera.width, "height": scene.camera.height,
                 "frames": scene.camera.n_frames},
        "config": {"mode": cfg.mode, "n_spp": cfg.n_spp,
                   "initial": cfg.initial, "increment": cfg.increment,
                   "alpha": cfg.alpha, "theta": cfg.theta, "eps": cfg.eps,
                   "seed": cfg.seed},
        "threads": threads,
        "outputs": {"events": "events.csv",
                    "counts": "counts_NNNN.pfm", "means": "mean_NNNN.pfm"},
        "timings": {"simulate_s": sim_time,
                    "per_frame_s": [r.wall_time for r in reports]},
        "paths_traced": total_paths,
        "events_emitted": len(events),
        "diagnostics": {
            "clamped_nonfinite": tracer.diagnostics.clamped_nonfinite},
    }
    _write_atomic_json(out / "manifest.json", manifest)
    print(f"{total_paths} paths in {sim_time:.2f} s, "
          f"{len(events)} events -> {out}")
    return 0


def cmd_eval(args) -> int:
    ev_a = evio.read_events(args.events_a)
    ev_b = evio.read_events(args.events_b)
    w, h, n = args.width, args.height, args.frames
    frames_a = metrics.events_to_frames(ev_a, w, h, n)
    frames_b = metrics.events_to_frames(ev_b, w, h, n)
    cloud_a = metrics.SignedPointCloud.from_events(ev_a, w, h, n)
    cloud_b = metrics.SignedPointCloud.from_events(ev_b, w, h, n)
    rmse, psnr = metrics.rmse_psnr(frames_a, frames_b)
    f1 = metrics.polarity_f1(cloud_a, cloud_b, tau=args.tau)
    pscd = metrics.signed_chamfer(cloud_a, cloud_b)
    row = {"events_a": str(args.events_a), "events_b": str(args.events_b),
           "rmse": rmse, "psnr": psnr, "f1": f1, "pscd": pscd}
    evio.write_report(args.out, [row])
    print(f"rmse {rmse:.6g}  psnr {psnr:.6g}  f1 {f1:.6g}  pscd {pscd:.6g}")
    return 0


def cmd_bench(args) -> int:
    _resolve_threads(args.threads)
    sizes = []
    for token in args.resolutions.split(","):
        token = token.strip().lower()
        if "x" in token:
            w, h = (int(v) for v in token.split("x"))
        else:
            w = h = int(token)
        sizes.append((w, h))
    modes = [m.strip() for m in args.modes.split(",")]
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode '{m}'")

    rows = []
    for w, h in sizes:
        base_time = None
        for mode in modes:
            scene = load_scene(args.scene)
            scene.camera.width = w
            scene.camera.height = h
            if args.frames:
                scene.camera.n_frames = args.frames
            cfg = SimConfig(mode=mode, n_spp=args.spp,
                            initial=args.init_batch, increment=args.batch,
                            alpha=args.alpha, theta=args.theta,
                            eps=args.epsilon, seed=args.seed)
            cfg.validate()
            t0 = time.perf_counter()
            _, reports = simulate(scene, cfg)
            elapsed = time.perf_counter() - t0
            if mode == "baseline":
                base_time = elapsed
            speedup = (base_time / elapsed) if base_time else None
            rows.append({"width": w, "height": h, "mode": mode,
                         "time_s": elapsed,
                         "paths": sum(r.paths for r in reports),
                         "speedup": speedup})
    evio.write_report(args.out, rows)
    for r in rows:
        tag = f"{r['width']}x{r['height']} {r['mode']}"
        sp = f"{r['speedup']:.2f}x" if r["speedup"] else "n/a"
        print(f"{tag}: {r['time_s']:.2f} s, {r['paths']} paths, {sp}")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage mistakes are user errors: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _add_sim_flags(p):
    p.add_argument("--spp", type=int, default=4096,
                   help="max samples per pixel (default 4096)")
    p.add_argument("--frames", type=int, default=None,
                   help="override the scene's frame count")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.05,
                   help="significance level for the t-test (default 0.05)")
    p.add_argument("--theta", type=float, default=None,
                   help="event threshold; default comes from the scene")
    p.add_argument("--epsilon", type=float, default=1e-3,
                   help="luminance floor before the log (default 1e-3)")
    p.add_argument("--init-batch", type=int, default=256,
                   help="samples before the first test (default 256)")
    p.add_argument("--batch", type=int, default=64,
                   help="samples added per retest (default 64)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads; EVRENDER_THREADS as fallback")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evrender",
                     description="Event-camera simulation by adaptive "
                                 "path tracing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="simulate an event stream")
    p.add_argument("--scene", default=None)
    p.add_argument("--mode", default="one_tailed", choices=MODES)
    _add_sim_flags(p)
    p.add_argument("--out", default="out")
    p.add_argument("--from-manifest", default=None,
                   help="reproduce a previous run from its manifest")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="compare two event streams")
    p.add_argument("events_a")
    p.add_argument("events_b")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--tau", type=float, default=2.0,
                   help="F1 match radius in pixel/frame units (default 2)")
    p.add_argument("--out", default="report.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="speedup across image sizes")
    p.add_argument("--scene", required=True)
    p.add_argument("--resolutions", default="50,100",
                   help="comma list, square N or WxH (default 50,100)")
    p.add_argument("--modes", default="baseline,one_tailed")
    _add_sim_flags(p)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (SceneError, ValueError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 1
    except Exception as e:   # internal failure
        import traceback
        traceback.print_exc()
        sys.stderr.write(f"internal error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
