"""Adaptive event-stream simulation.

Frame 1 renders every pixel at the full sample budget to seed reference
statistics. Later frames sample in batches and stop early once the chosen
termination rule is confident; a pixel emits an event when its log-luminance
mean moved against the reference by more than the threshold, and only then
does the reference move.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import logstat, tracer
from .logstat import LogLumStats
from .scene import Scene, flatten_at

MODES = ("baseline", "one_tailed", "two_tailed", "mean_only")


@dataclass
class SimConfig:
    mode: str = "one_tailed"
    n_spp: int = 4096
    initial: int = 256
    increment: int = 64
    alpha: float = 0.05
    theta: Optional[float] = None   # None: use the scene's threshold
    eps: float = 1e-3
    seed: int = 0

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode '{self.mode}'")
        if not (2 <= self.initial <= self.n_spp):
            raise ValueError("initial batch must satisfy 2 <= initial <= n_spp")
        if self.increment < 1:
            raise ValueError("increment must be at least 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")


@dataclass
class Event:
    x: int
    y: int
    s: int
    p: int


@dataclass
class FrameReport:
    s: int
    counts: np.ndarray          # (h, w) samples traced per pixel
    mean: np.ndarray            # (h, w) final per-pixel log-luminance mean
    variance: np.ndarray        # (h, w) unbiased variance of those samples
    events: List[Event] = field(default_factory=list)
    wall_time: float = 0.0
    paths: int = 0


def termination_rule(mode: str, a: LogLumStats, b: LogLumStats,
                     theta: float, alpha: float) -> str:
    """Batch-checkpoint decision for one pixel: "stop" or "continue"."""
    if mode == "baseline":
        return "continue"
    if mode == "mean_only":
        return "stop" if abs(b.mean - a.mean) <= theta else "continue"
    t = logstat.t_statistic(a, b, theta)
    p_lower = logstat.student_t_cdf(t, b.n - 1)
    if mode == "one_tailed":
        return "stop" if p_lower < alpha else "continue"
    if mode == "two_tailed":
        if p_lower < alpha or (1.0 - p_lower) < alpha:
            return "stop"
        return "continue"
    raise ValueError(f"unknown mode '{mode}'")


def _stop_mask(mode, ref_mean, ref_var, w_mean, w_var, n_b, theta, alpha):
    if mode == "mean_only":
        return np.abs(w_mean - ref_mean) <= theta
    t = logstat.t_statistic_arrays(ref_mean, ref_var, w_mean, w_var, n_b, theta)
    p_lower = logstat.student_t_cdf_arrays(t, n_b - 1)
    if mode == "one_tailed":
        return p_lower < alpha
    return (p_lower < alpha) | ((1.0 - p_lower) < alpha)


def simulate(scene: Scene, cfg: SimConfig) -> Tuple[List[Event],
                                                    List[FrameReport]]:
    """Run the event simulation; returns events sorted by (s, y, x) plus a
    per-frame report of sample counts, statistics, and timings."""
    cfg.validate()
    theta = scene.threshold if cfg.theta is None else cfg.theta
    w = scene.camera.width
    h = scene.camera.height
    n_frames = scene.camera.n_frames
    npix = w * h
    ys_all, xs_all = np.divmod(np.arange(npix, dtype=np.int64), w)

    events: List[Event] = []
    reports: List[FrameReport] = []

    # frame 1: full budget everywhere, becomes the first reference
    t0 = time.perf_counter()
    geo = flatten_at(scene, 1)
    n1, mean1, M2_1, _ = tracer.trace_grid_stats(
        geo, xs_all, ys_all, cfg.n_spp, 0, cfg.seed, 1, cfg.eps)
    ref_n = n1.copy()
    ref_mean = mean1.copy()
    ref_M2 = M2_1.copy()
    reports.append(FrameReport(
        s=1,
        counts=n1.reshape(h, w).copy(),
        mean=mean1.reshape(h, w).copy(),
        variance=logstat.variance_array(n1, M2_1).reshape(h, w),
        events=[],
        wall_time=time.perf_counter() - t0,
        paths=int(n1.sum()),
    ))

    for s in range(2, n_frames + 1):
        t0 = time.perf_counter()
        geo = flatten_at(scene, s)
        counts = np.zeros(npix, dtype=np.int64)
        w_mean = np.zeros(npix)
        w_M2 = np.zeros(npix)

        if cfg.mode == "baseline":
            counts, w_mean, w_M2, _ = tracer.trace_grid_stats(
                geo, xs_all, ys_all, cfg.n_spp, 0, cfg.seed, s, cfg.eps)
        else:
            active = np.arange(npix, dtype=np.int64)
            cur = 0
            batch = cfg.initial
            ref_var = logstat.variance_array(ref_n, ref_M2)
            while active.size > 0 and cur < cfg.n_spp:
                bn, bmean, bM2, _ = tracer.trace_grid_stats(
                    geo, xs_all[active], ys_all[active], batch, cur,
                    cfg.seed, s, cfg.eps)
                counts[active], w_mean[active], w_M2[active] = \
                    logstat.merge_stats_arrays(
                        counts[active], w_mean[active], w_M2[active],
                        bn, bmean, bM2)
                cur += batch
                if cur >= cfg.n_spp:
                    break
                w_var = logstat.variance_array(counts[active], w_M2[active])
                stop = _stop_mask(cfg.mode, ref_mean[active], ref_var[active],
                                  w_mean[active], w_var, counts[active],
                                  theta, cfg.alpha)
                active = active[~stop]
                # final batch truncated so totals never exceed the budget
                batch = min(cfg.increment, cfg.n_spp - cur)

        gap = w_mean - ref_mean
        fired = np.abs(gap) > theta
        frame_events: List[Event] = []
        if np.any(fired):
            idx = np.flatnonzero(fired)
            order = np.lexsort((xs_all[idx], ys_all[idx]))
            for i in idx[order]:
                pol = 1 if gap[i] > 0 else -1
                frame_events.append(Event(int(xs_all[i]), int(ys_all[i]),
                                          s, pol))
            # reference follows the pixel only when an event fires
            ref_n[idx] = counts[idx]
            ref_mean[idx] = w_mean[idx]
            ref_M2[idx] = w_M2[idx]

        events.extend(frame_events)
        reports.append(FrameReport(
            s=s,
            counts=counts.reshape(h, w).copy(),
            mean=w_mean.reshape(h, w).copy(),
            variance=logstat.variance_array(counts, w_M2).reshape(h, w),
            events=frame_events,
            wall_time=time.perf_counter() - t0,
            paths=int(counts.sum()),
        ))

    return events, reports


def render_reference_frames(scene: Scene, cfg: SimConfig) -> List[np.ndarray]:
    """Per-frame images of the final log-luminance mean per pixel."""
    _, reports = simulate(scene, cfg)
    return [r.mean for r in reports]
