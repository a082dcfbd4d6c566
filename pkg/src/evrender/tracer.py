"""Unidirectional Monte Carlo path tracer.

Every sample draws from a counter-based random stream keyed by
(seed, pixel, frame, sample index), so results are independent of worker
count and of how sample batches are split.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from numba import njit, prange

from .scene import FrameGeometry, Scene, flatten_at

# splitmix64 finalizer constants
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PHI = np.uint64(0x9E3779B97F4A7C15)
_K0 = np.uint64(0xD6E8FEB86659FD93)
_KQ = np.uint64(0xA24BAED4963EE407)
_KS = np.uint64(0x9FB21C651E98DF25)
_KI = np.uint64(0xE7037ED1A0B428DB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0

_RR_DEPTH = 3
_MAX_DEPTH = 16
_EPS_OFFSET = 1e-4
_TMIN = 1e-9


class Diagnostics:
    """Mutable tally of pathological samples clamped during tracing."""

    def __init__(self):
        self.clamped_nonfinite = 0

    def reset(self):
        self.clamped_nonfinite = 0


diagnostics = Diagnostics()


def set_threads(k: int) -> int:
    """Clamp k to the launch-time thread budget and apply it."""
    avail = numba.config.NUMBA_NUM_THREADS
    k = max(1, min(int(k), avail))
    numba.set_num_threads(k)
    return k


@njit(inline="always", cache=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always", cache=True)
def _stream_key(seed, qid, frame, sample):
    h = _mix64(seed ^ _K0)
    h = _mix64(h ^ (np.uint64(qid) + _KQ))
    h = _mix64(h ^ (np.uint64(frame) + _KS))
    h = _mix64(h ^ (np.uint64(sample) + _KI))
    return h


@njit(inline="always", cache=True)
def _next_float(state):
    state = state + _PHI
    z = _mix64(state)
    return state, np.float64(z >> _S11) * _INV_2_53


@njit(inline="always", cache=True)
def _nearest_hit(ox, oy, oz, dx, dy, dz, sph, tri):
    """Closest intersection: (t, kind, index); kind -1 means miss."""
    best_t = np.inf
    kind = -1
    idx = -1
    for i in range(sph.shape[0]):
        cx = ox - sph[i, 0]
        cy = oy - sph[i, 1]
        cz = oz - sph[i, 2]
        b = cx * dx + cy * dy + cz * dz
        c = cx * cx + cy * cy + cz * cz - sph[i, 3] * sph[i, 3]
        disc = b * b - c
        if disc <= 0.0:
            continue
        sq = math.sqrt(disc)
        t = -b - sq
        if t <= _TMIN:
            t = -b + sq
        if _TMIN < t < best_t:
            best_t = t
            kind = 0
            idx = i
    for i in range(tri.shape[0]):
        e1x = tri[i, 3]
        e1y = tri[i, 4]
        e1z = tri[i, 5]
        e2x = tri[i, 6]
        e2y = tri[i, 7]
        e2z = tri[i, 8]
        px = dy * e2z - dz * e2y
        py = dz * e2x - dx * e2z
        pz = dx * e2y - dy * e2x
        det = e1x * px + e1y * py + e1z * pz
        if -1e-12 < det < 1e-12:
            continue
        inv = 1.0 / det
        tx = ox - tri[i, 0]
        ty = oy - tri[i, 1]
        tz = oz - tri[i, 2]
        u = (tx * px + ty * py + tz * pz) * inv
        if u < 0.0 or u > 1.0:
            continue
        qx = ty * e1z - tz * e1y
        qy = tz * e1x - tx * e1z
        qz = tx * e1y - ty * e1x
        v = (dx * qx + dy * qy + dz * qz) * inv
        if v < 0.0 or u + v > 1.0:
            continue
        t = (e2x * qx + e2y * qy + e2z * qz) * inv
        if _TMIN < t < best_t:
            best_t = t
            kind = 1
            idx = i
    return best_t, kind, idx


@njit(inline="always", cache=True)
def _basis(wx, wy, wz):
    """Orthonormal tangent pair for a unit vector."""
    s = 1.0 if wz >= 0.0 else -1.0
    a = -1.0 / (s + wz)
    b = wx * wy * a
    ux = 1.0 + s * wx * wx * a
    uy = s * b
    uz = -s * wx
    vx = b
    vy = s + wy * wy * a
    vz = -wy
    return ux, uy, uz, vx, vy, vz


@njit(cache=True)
def _trace_one(key, px, py, sph, sph_mat, tri, tri_mat, tri_aux, mats,
               emitters, env, cam_pos, cam_rot, tan_half_fov, width, height):
    """Trace one full path; returns (luma, clamped flag)."""
    state = key
    state, jx = _next_float(state)
    state, jy = _next_float(state)
    aspect = width / height
    sx = (2.0 * (px + jx) / width - 1.0) * tan_half_fov * aspect
    sy = (1.0 - 2.0 * (py + jy) / height) * tan_half_fov
    dx = cam_rot[0, 0] * sx + cam_rot[0, 1] * sy - cam_rot[0, 2]
    dy = cam_rot[1, 0] * sx + cam_rot[1, 1] * sy - cam_rot[1, 2]
    dz = cam_rot[2, 0] * sx + cam_rot[2, 1] * sy - cam_rot[2, 2]
    inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
    dx *= inv
    dy *= inv
    dz *= inv
    ox = cam_pos[0]
    oy = cam_pos[1]
    oz = cam_pos[2]

    n_emit = emitters.shape[0]
    env_in_nee = False
    for e in range(n_emit):
        if emitters[e, 0] == 2:
            env_in_nee = True

    tr = 1.0
    tg = 1.0
    tb = 1.0
    lr = 0.0
    lg = 0.0
    lb = 0.0
    prev_pdf = 0.0          # solid-angle pdf of the last BSDF sample
    specular = True         # camera and mirror vertices skip NEE weighting
    depth = 0

    while True:
        t_hit, kind, idx = _nearest_hit(ox, oy, oz, dx, dy, dz, sph, tri)
        if kind < 0:
            w = 1.0
            if not specular and env_in_nee:
                pdf_l = (1.0 / n_emit) * (1.0 / (2.0 * math.pi))
                w = prev_pdf / (prev_pdf + pdf_l)
            lr += tr * env[0] * w
            lg += tg * env[1] * w
            lb += tb * env[2] * w
            break

        hx = ox + t_hit * dx
        hy = oy + t_hit * dy
        hz = oz + t_hit * dz
        if kind == 0:
            m = sph_mat[idx]
            inv_r = 1.0 / sph[idx, 3]
            nx = (hx - sph[idx, 0]) * inv_r
            ny = (hy - sph[idx, 1]) * inv_r
            nz = (hz - sph[idx, 2]) * inv_r
        else:
            m = tri_mat[idx]
            nx = tri_aux[idx, 0]
            ny = tri_aux[idx, 1]
            nz = tri_aux[idx, 2]
        # shading normal faces the incoming ray
        if nx * dx + ny * dy + nz * dz > 0.0:
            nx = -nx
            ny = -ny
            nz = -nz

        mkind = mats[m, 6]
        if mkind == 2.0:
            w = 1.0
            if not specular and n_emit > 0:
                # pdf of the light sampler having produced this direction
                if kind == 0:
                    ccx = sph[idx, 0] - ox
                    ccy = sph[idx, 1] - oy
                    ccz = sph[idx, 2] - oz
                    d2 = ccx * ccx + ccy * ccy + ccz * ccz
                    r = sph[idx, 3]
                    pdf_l = 0.0
                    if d2 > r * r:
                        cos_max = math.sqrt(1.0 - r * r / d2)
                        pdf_l = 1.0 / (2.0 * math.pi * (1.0 - cos_max))
                else:
                    cos_l = tri_aux[idx, 0] * dx + tri_aux[idx, 1] * dy \
                        + tri_aux[idx, 2] * dz
                    cos_l = abs(cos_l)
                    pdf_l = 0.0
                    if cos_l > 1e-12:
                        pdf_l = t_hit * t_hit / (tri_aux[idx, 3] * cos_l)
                pdf_l /= n_emit
                w = prev_pdf / (prev_pdf + pdf_l)
            lr += tr * mats[m, 3] * w
            lg += tg * mats[m, 4] * w
            lb += tb * mats[m, 5] * w
            break

        if depth >= _MAX_DEPTH:
            break
        if depth >= _RR_DEPTH:
            p_max = mats[m, 0]
            if mats[m, 1] > p_max:
                p_max = mats[m, 1]
            if mats[m, 2] > p_max:
                p_max = mats[m, 2]
            if p_max <= 0.0:
                break
            surv = p_max if p_max < 1.0 else 1.0
            state, u = _next_float(state)
            if u >= surv:
                break
            tr /= surv
            tg /= surv
            tb /= surv

        ox = hx + _EPS_OFFSET * nx
        oy = hy + _EPS_OFFSET * ny
        oz = hz + _EPS_OFFSET * nz

        if mkind == 1.0:
            # mirror: deterministic reflection
            dn = dx * nx + dy * ny + dz * nz
            dx = dx - 2.0 * dn * nx
            dy = dy - 2.0 * dn * ny
            dz = dz - 2.0 * dn * nz
            tr *= mats[m, 0]
            tg *= mats[m, 1]
            tb *= mats[m, 2]
            specular = True
            depth += 1
            continue

        # Lambertian: next-event estimation toward one uniformly chosen emitter
        if n_emit > 0:
            state, ue = _next_float(state)
            e = int(ue * n_emit)
            if e >= n_emit:
                e = n_emit - 1
            ekind = emitters[e, 0]
            eidx = emitters[e, 1]
            wix = 0.0
            wiy = 0.0
            wiz = 0.0
            pdf_l = 0.0
            ler = 0.0
            leg = 0.0
            leb = 0.0
            target_kind = -2
            if ekind == 0:
                ccx = sph[eidx, 0] - ox
                ccy = sph[eidx, 1] - oy
                ccz = sph[eidx, 2] - oz
                d2 = ccx * ccx + ccy * ccy + ccz * ccz
                r = sph[eidx, 3]
                if d2 > r * r:
                    d = math.sqrt(d2)
                    cos_max = math.sqrt(1.0 - r * r / d2)
                    state, u1 = _next_float(state)
                    state, u2 = _next_float(state)
                    cos_t = 1.0 - u1 * (1.0 - cos_max)
                    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
                    phi = 2.0 * math.pi * u2
                    wx2 = ccx / d
                    wy2 = ccy / d
                    wz2 = ccz / d
                    ux, uy, uz, vx, vy, vz = _basis(wx2, wy2, wz2)
                    cp = math.cos(phi) * sin_t
                    sp = math.sin(phi) * sin_t
                    wix = wx2 * cos_t + ux * cp + vx * sp
                    wiy = wy2 * cos_t + uy * cp + vy * sp
                    wiz = wz2 * cos_t + uz * cp + vz * sp
                    pdf_l = 1.0 / (2.0 * math.pi * (1.0 - cos_max))
                    mm = sph_mat[eidx]
                    ler = mats[mm, 3]
                    leg = mats[mm, 4]
                    leb = mats[mm, 5]
                    target_kind = 0
            elif ekind == 1:
                state, u1 = _next_float(state)
                state, u2 = _next_float(state)
                if u1 + u2 > 1.0:
                    u1 = 1.0 - u1
                    u2 = 1.0 - u2
                tx2 = tri[eidx, 0] + u1 * tri[eidx, 3] + u2 * tri[eidx, 6]
                ty2 = tri[eidx, 1] + u1 * tri[eidx, 4] + u2 * tri[eidx, 7]
                tz2 = tri[eidx, 2] + u1 * tri[eidx, 5] + u2 * tri[eidx, 8]
                lx = tx2 - ox
                ly = ty2 - oy
                lz = tz2 - oz
                d2 = lx * lx + ly * ly + lz * lz
                if d2 > 1e-12:
                    d = math.sqrt(d2)
                    wix = lx / d
                    wiy = ly / d
                    wiz = lz / d
                    cos_l = abs(tri_aux[eidx, 0] * wix + tri_aux[eidx, 1] * wiy
                                + tri_aux[eidx, 2] * wiz)
                    if cos_l > 1e-9:
                        pdf_l = d2 / (tri_aux[eidx, 3] * cos_l)
                        mm = tri_mat[eidx]
                        ler = mats[mm, 3]
                        leg = mats[mm, 4]
                        leb = mats[mm, 5]
                        target_kind = 1
            else:
                state, u1 = _next_float(state)
                state, u2 = _next_float(state)
                cos_t = u1
                sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
                phi = 2.0 * math.pi * u2
                ux, uy, uz, vx, vy, vz = _basis(nx, ny, nz)
                cp = math.cos(phi) * sin_t
                sp = math.sin(phi) * sin_t
                wix = nx * cos_t + ux * cp + vx * sp
                wiy = ny * cos_t + uy * cp + vy * sp
                wiz = nz * cos_t + uz * cp + vz * sp
                pdf_l = 1.0 / (2.0 * math.pi)
                ler = env[0]
                leg = env[1]
                leb = env[2]
                target_kind = -1
            if pdf_l > 0.0:
                cos_s = wix * nx + wiy * ny + wiz * nz
                if cos_s > 0.0:
                    st, sk, si = _nearest_hit(ox, oy, oz, wix, wiy, wiz,
                                              sph, tri)
                    visible = False
                    if target_kind == -1:
                        visible = sk < 0
                    elif sk == target_kind and si == eidx:
                        visible = True
                    if visible:
                        q_l = pdf_l / n_emit
                        p_b = cos_s / math.pi
                        scale = cos_s / math.pi / (q_l + p_b)
                        lr += tr * mats[m, 0] * ler * scale
                        lg += tg * mats[m, 1] * leg * scale
                        lb += tb * mats[m, 2] * leb * scale

        # cosine-weighted bounce
        state, u1 = _next_float(state)
        state, u2 = _next_float(state)
        r_d = math.sqrt(u1)
        phi = 2.0 * math.pi * u2
        lxd = r_d * math.cos(phi)
        lyd = r_d * math.sin(phi)
        lzd = math.sqrt(max(0.0, 1.0 - u1))
        ux, uy, uz, vx, vy, vz = _basis(nx, ny, nz)
        dx = ux * lxd + vx * lyd + nx * lzd
        dy = uy * lxd + vy * lyd + ny * lzd
        dz = uz * lxd + vz * lyd + nz * lzd
        prev_pdf = lzd / math.pi
        if prev_pdf <= 0.0:
            break
        tr *= mats[m, 0]
        tg *= mats[m, 1]
        tb *= mats[m, 2]
        specular = False
        depth += 1

    luma = 0.2126 * lr + 0.7152 * lg + 0.0722 * lb
    if not math.isfinite(luma):
        return 0.0, 1
    return luma, 0


@njit(parallel=True, cache=True)
def _trace_grid(xs, ys, n, start, seed, frame, sph, sph_mat, tri, tri_mat,
                tri_aux, mats, emitters, env, cam_pos, cam_rot, tan_half_fov,
                width, height, eps, out_n, out_mean, out_M2, out_bad):
    """Welford-accumulate n log-luminance samples for each listed pixel."""
    log_eps = math.log(eps)
    for k in prange(xs.shape[0]):
        x = xs[k]
        y = ys[k]
        qid = y * width + x
        cnt = 0
        mean = 0.0
        M2 = 0.0
        bad = 0
        for i in range(n):
            key = _stream_key(seed, qid, frame, start + i)
            L, flag = _trace_one(key, x, y, sph, sph_mat, tri, tri_mat,
                                 tri_aux, mats, emitters, env, cam_pos,
                                 cam_rot, tan_half_fov, width, height)
            bad += flag
            if L > eps:
                B = math.log(L)
            else:
                B = log_eps
            cnt += 1
            delta = B - mean
            mean += delta / cnt
            M2 += delta * (B - mean)
        out_n[k] = cnt
        out_mean[k] = mean
        out_M2[k] = M2
        out_bad[k] = bad


@njit(cache=True)
def _trace_samples(x, y, n, start, seed, frame, sph, sph_mat, tri, tri_mat,
                   tri_aux, mats, emitters, env, cam_pos, cam_rot,
                   tan_half_fov, width, height, out, out_bad):
    qid = y * width + x
    bad = 0
    for i in range(n):
        key = _stream_key(seed, qid, frame, start + i)
        L, flag = _trace_one(key, x, y, sph, sph_mat, tri, tri_mat, tri_aux,
                             mats, emitters, env, cam_pos, cam_rot,
                             tan_half_fov, width, height)
        bad += flag
        out[i] = L
    out_bad[0] = bad


def _geo_args(geo: FrameGeometry):
    return (geo.sph, geo.sph_mat, geo.tri, geo.tri_mat, geo.tri_aux,
            geo.mats, geo.emitters, geo.env, geo.cam_pos, geo.cam_rot,
            geo.tan_half_fov, geo.width, geo.height)


def trace_paths(scene: Scene, q, s: int, n: int, start_index: int = 0,
                seed: int = 0) -> np.ndarray:
    """Trace n paths for pixel q = (x, y) at frame s.

    Sample i draws from the stream keyed by (seed, q, s, start_index + i),
    so batches extend rather than repeat the sequence. Returns the raw
    luminance of each path; non-finite estimates are clamped to zero and
    tallied in ``diagnostics``.
    """
    if n < 1:
        raise ValueError("sample count must be at least 1")
    if start_index < 0:
        raise ValueError("start_index must be nonnegative")
    x, y = int(q[0]), int(q[1])
    geo = flatten_at(scene, s)
    out = np.empty(n, dtype=np.float64)
    out_bad = np.zeros(1, dtype=np.int64)
    _trace_samples(x, y, n, start_index, np.uint64(seed), s,
                   *_geo_args(geo), out, out_bad)
    diagnostics.clamped_nonfinite += int(out_bad[0])
    return out


def log_samples(samples, eps: float) -> np.ndarray:
    """Floor luminances at eps and take the natural log."""
    if eps <= 0:
        raise ValueError("luminance floor must be positive")
    return np.log(np.maximum(np.asarray(samples, dtype=np.float64), eps))


def trace_grid_stats(geo: FrameGeometry, xs, ys, n: int, start: int,
                     seed: int, s: int, eps: float):
    """Per-pixel Welford stats of n log-luminance samples.

    Returns (count, mean, M2, clamped) arrays aligned with xs/ys.
    """
    k = xs.shape[0]
    out_n = np.empty(k, dtype=np.int64)
    out_mean = np.empty(k, dtype=np.float64)
    out_M2 = np.empty(k, dtype=np.float64)
    out_bad = np.empty(k, dtype=np.int64)
    _trace_grid(xs, ys, n, start, np.uint64(seed), s, *_geo_args(geo),
                eps, out_n, out_mean, out_M2, out_bad)
    diagnostics.clamped_nonfinite += int(out_bad.sum())
    return out_n, out_mean, out_M2, out_bad
