"""Compiled inner loops of the room simulator.

All kernels are sequential so results do not depend on scheduling.
Surface order everywhere: x=0, x=W, y=0, y=D, z=0, z=H.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _axis_range(length, extent):
    return int(math.ceil(extent / (2.0 * length))) + 1


@njit(cache=True)
def enumerate_images(dims, src, center, max_dist, max_order, beta, out_pos, out_gain,
                     out_hits, count_only):
    """Mirror-lattice images of ``src`` within ``max_dist`` of ``center``.

    ``beta`` is the (6, n_bands) per-reflection amplitude factor. With
    ``count_only`` nothing is written and only the count is returned.
    Images whose gain is zero in every band are dropped unless they are the
    direct source.
    """
    n_bands = beta.shape[1]
    mx = _axis_range(dims[0], max_dist)
    my = _axis_range(dims[1], max_dist)
    mz = _axis_range(dims[2], max_dist)
    max_hits = 2 * max(mx, my, mz) + 2
    powtab = np.ones((6, max_hits + 1, n_bands))
    for s in range(6):
        for k in range(1, max_hits + 1):
            for b in range(n_bands):
                powtab[s, k, b] = powtab[s, k - 1, b] * beta[s, b]
    n = 0
    hits = np.zeros(6, dtype=np.int64)
    pos = np.zeros(3)
    for ix in range(-mx, mx + 1):
        for qx in range(2):
            pos[0] = (1 - 2 * qx) * src[0] + 2 * ix * dims[0]
            hits[0] = abs(ix - qx)
            hits[1] = abs(ix)
            dx = pos[0] - center[0]
            if abs(dx) > max_dist:
                continue
            for iy in range(-my, my + 1):
                for qy in range(2):
                    pos[1] = (1 - 2 * qy) * src[1] + 2 * iy * dims[1]
                    hits[2] = abs(iy - qy)
                    hits[3] = abs(iy)
                    dy = pos[1] - center[1]
                    if dx * dx + dy * dy > max_dist * max_dist:
                        continue
                    for iz in range(-mz, mz + 1):
                        for qz in range(2):
                            pos[2] = (1 - 2 * qz) * src[2] + 2 * iz * dims[2]
                            hits[4] = abs(iz - qz)
                            hits[5] = abs(iz)
                            dz = pos[2] - center[2]
                            if dx * dx + dy * dy + dz * dz > max_dist * max_dist:
                                continue
                            order = hits[0] + hits[1] + hits[2] + hits[3] + hits[4] + hits[5]
                            if max_order >= 0 and order > max_order:
                                continue
                            nonzero = order == 0
                            if not nonzero:
                                for b in range(n_bands):
                                    g = 1.0
                                    for s in range(6):
                                        g *= powtab[s, hits[s], b]
                                    if g > 0.0:
                                        nonzero = True
                                        break
                            if not nonzero:
                                continue
                            if not count_only:
                                for k in range(3):
                                    out_pos[n, k] = pos[k]
                                for s in range(6):
                                    out_hits[n, s] = hits[s]
                                for b in range(n_bands):
                                    g = 1.0
                                    for s in range(6):
                                        g *= powtab[s, hits[s], b]
                                    out_gain[n, b] = g
                            n += 1
    return n


@njit(cache=True)
def _raster_index(raster, vx, vy, vz, r):
    el = math.degrees(math.asin(min(1.0, max(-1.0, vz / r))))
    az = math.degrees(math.atan2(vy, vx))
    ai = int(math.floor(az + 0.5)) % 360
    ei = int(math.floor(el + 0.5)) + 90
    if ei < 0:
        ei = 0
    if ei > 180:
        ei = 180
    return raster[ai, ei]


@njit(cache=True)
def render_images(pos, gain, rcv, axes, air, fs, c, raster, tap_idx, tap_val, tap_cnt, acc):
    """Scatter every image into the per-band, per-ear accumulator ``acc``
    (n_bands, 2, T): 1/r spreading, linear-interpolated fractional delay and
    the nearest HRTF pair. Returns the number of images skipped for
    coinciding with the receiver."""
    n_bands = gain.shape[1]
    T = acc.shape[2]
    skipped = 0
    for i in range(pos.shape[0]):
        wx = pos[i, 0] - rcv[0]
        wy = pos[i, 1] - rcv[1]
        wz = pos[i, 2] - rcv[2]
        r = math.sqrt(wx * wx + wy * wy + wz * wz)
        if r < 1e-9:
            skipped += 1
            continue
        lx = axes[0, 0] * wx + axes[0, 1] * wy + axes[0, 2] * wz
        ly = axes[1, 0] * wx + axes[1, 1] * wy + axes[1, 2] * wz
        lz = axes[2, 0] * wx + axes[2, 1] * wy + axes[2, 2] * wz
        h = _raster_index(raster, lx, ly, lz, r)
        delay = r / c * fs
        n0 = int(math.floor(delay))
        frac = delay - n0
        for b in range(n_bands):
            amp = gain[i, b] / r * math.exp(-air[b] * r)
            if amp == 0.0:
                continue
            a0 = amp * (1.0 - frac)
            a1 = amp * frac
            for e in range(2):
                for t in range(tap_cnt[h, e]):
                    k = n0 + tap_idx[h, e, t]
                    v = tap_val[h, e, t]
                    if k < T:
                        acc[b, e, k] += a0 * v
                    if k + 1 < T:
                        acc[b, e, k + 1] += a1 * v
    return skipped


@njit(cache=True)
def trace_rays(dims, src, rcv, alpha, diff, directions, c, bin_width, n_bins, max_time,
               air, energy_floor, hist, dir_acc):
    """Specular ray tracing with diffuse ("rain") transfer to the receiver.

    Every ray starts with energy 4*pi/N per band. At each wall impact the
    non-absorbed energy is split: (1 - a) * d is re-emitted as a Lambert
    source towards the receiver (received intensity E cos(theta) / (pi R^2))
    and (1 - a)(1 - d) continues along the specular direction.
    """
    n_rays = directions.shape[0]
    n_bands = alpha.shape[1]
    e0 = 4.0 * math.pi / n_rays
    energy = np.empty(n_bands)
    p = np.empty(3)
    d = np.empty(3)
    for ray in range(n_rays):
        for b in range(n_bands):
            energy[b] = e0
        for k in range(3):
            p[k] = src[k]
            d[k] = directions[ray, k]
        path = 0.0
        for _ in range(100000):
            t_hit = 1e300
            surf = -1
            for k in range(3):
                if d[k] > 0.0:
                    t = (dims[k] - p[k]) / d[k]
                    s = 2 * k + 1
                elif d[k] < 0.0:
                    t = -p[k] / d[k]
                    s = 2 * k
                else:
                    continue
                if t < t_hit:
                    t_hit = t
                    surf = s
            if surf < 0:
                break
            for k in range(3):
                p[k] += t_hit * d[k]
            axis = surf // 2
            p[axis] = 0.0 if surf % 2 == 0 else dims[axis]
            path += t_hit
            if path / c > max_time:
                break
            for b in range(n_bands):
                energy[b] *= math.exp(-air[b] * t_hit)
            wx = rcv[0] - p[0]
            wy = rcv[1] - p[1]
            wz = rcv[2] - p[2]
            R = math.sqrt(wx * wx + wy * wy + wz * wz)
            if R > 1e-9:
                w_axis = wx if axis == 0 else (wy if axis == 1 else wz)
                cos_t = abs(w_axis) / R
                arrival = (path + R) / c
                bi = int(arrival / bin_width)
                if bi < n_bins:
                    total = 0.0
                    for b in range(n_bands):
                        e = (energy[b] * (1.0 - alpha[surf, b]) * diff[surf, b] * cos_t
                             / (math.pi * R * R) * math.exp(-air[b] * R))
                        hist[b, bi] += e
                        total += e
                    dir_acc[bi, 0] -= total * wx / R
                    dir_acc[bi, 1] -= total * wy / R
                    dir_acc[bi, 2] -= total * wz / R
            peak = 0.0
            for b in range(n_bands):
                energy[b] *= (1.0 - alpha[surf, b]) * (1.0 - diff[surf, b])
                if energy[b] > peak:
                    peak = energy[b]
            d[axis] = -d[axis]
            if peak < e0 * energy_floor:
                break


@njit(cache=True)
def synthesize_diffuse(hist, dir_index, edges, noise, tap_idx, tap_val, tap_cnt, acc):
    """Noise-based diffuse tail: each histogram bin drives a flat amplitude
    envelope sqrt(E / n_samples) on the shared noise sequence, spatialised
    through the HRTF pair of the bin's mean arrival direction."""
    n_bands, n_bins = hist.shape
    T = acc.shape[2]
    for bi in range(n_bins):
        h = dir_index[bi]
        if h < 0:
            continue
        s0 = edges[bi]
        s1 = edges[bi + 1]
        if s1 <= s0:
            continue
        for b in range(n_bands):
            if hist[b, bi] <= 0.0:
                continue
            amp = math.sqrt(hist[b, bi] / (s1 - s0))
            for s in range(s0, s1):
                v = amp * noise[s]
                for e in range(2):
                    for t in range(tap_cnt[h, e]):
                        k = s + tap_idx[h, e, t]
                        if k < T:
                            acc[b, e, k] += v * tap_val[h, e, t]
