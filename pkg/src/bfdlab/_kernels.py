"""Compiled inner loops of the collision and entropy-production quadratures.

These kernels implement the O(N^6 * K) direct sums.  They are data-parallel
over output nodes (prange): each iteration writes one disjoint slot, so the
result is bitwise independent of the thread count.  No fastmath is enabled;
the summation order is part of the contract (the quantum path at eps = 0 must
reproduce the classical path bit for bit).

Angular model codes: 0 = constant b0, 1 = capped power law.  When `mirror`
is nonzero the direction set covers one hemisphere and each term folds in the
antipodal direction analytically (the collision bracket is invariant under
sigma -> -sigma, only b(cos theta) changes).
"""
import numpy as np
from numba import njit, prange


@njit(inline="always")
def _tri(values, n, L, h, x, y, z):
    ux = (x + L) / h - 0.5
    uy = (y + L) / h - 0.5
    uz = (z + L) / h - 0.5
    top = n - 1.0
    if ux < 0.0 or ux > top or uy < 0.0 or uy > top or uz < 0.0 or uz > top:
        return 0.0
    ix = int(ux)
    iy = int(uy)
    iz = int(uz)
    if ix > n - 2:
        ix = n - 2
    if iy > n - 2:
        iy = n - 2
    if iz > n - 2:
        iz = n - 2
    tx = ux - ix
    ty = uy - iy
    tz = uz - iz
    base = (ix * n + iy) * n + iz
    c000 = values[base]
    c001 = values[base + 1]
    c010 = values[base + n]
    c011 = values[base + n + 1]
    nn = n * n
    c100 = values[base + nn]
    c101 = values[base + nn + 1]
    c110 = values[base + nn + n]
    c111 = values[base + nn + n + 1]
    c00 = c000 * (1.0 - tx) + c100 * tx
    c01 = c001 * (1.0 - tx) + c101 * tx
    c10 = c010 * (1.0 - tx) + c110 * tx
    c11 = c011 * (1.0 - tx) + c111 * tx
    c0 = c00 * (1.0 - ty) + c10 * ty
    c1 = c01 * (1.0 - ty) + c11 * ty
    return c0 * (1.0 - tz) + c1 * tz


@njit(inline="always")
def _bang(model, b0, amp, expo, tcut, c):
    if model == 0:
        return b0
    cc = c
    if cc > 1.0:
        cc = 1.0
    elif cc < -1.0:
        cc = -1.0
    theta = np.arccos(cc)
    if theta < tcut:
        theta = tcut
    return b0 + amp * theta**expo


@njit(parallel=True, cache=True)
def bfd_collision(values, n, L, h, eps, gamma, model, b0, amp, expo, tcut,
                  dirs, wts, mirror, out):
    m = n * n * n
    nn = n * n
    ksz = dirs.shape[0]
    w = h * h * h
    for i in prange(m):
        ix = i // nn
        iy = (i % nn) // n
        iz = i % n
        vx = -L + (ix + 0.5) * h
        vy = -L + (iy + 0.5) * h
        vz = -L + (iz + 0.5) * h
        fi = values[i]
        pi = 1.0 - eps * fi
        acc = 0.0
        for j in range(m):
            if j == i:
                continue
            fj = values[j]
            jx = j // nn
            jy = (j % nn) // n
            jz = j % n
            wx = -L + (jx + 0.5) * h
            wy = -L + (jy + 0.5) * h
            wz = -L + (jz + 0.5) * h
            dx = vx - wx
            dy = vy - wy
            dz = vz - wz
            r2 = dx * dx + dy * dy + dz * dz
            r = np.sqrt(r2)
            phi = r**gamma
            cx = 0.5 * (vx + wx)
            cy = 0.5 * (vy + wy)
            cz = 0.5 * (vz + wz)
            rhalf = 0.5 * r
            invr = 1.0 / r
            nx = dx * invr
            ny = dy * invr
            nz = dz * invr
            pj = 1.0 - eps * fj
            gain_pref = pi * pj
            loss_pref = fi * fj
            ssum = 0.0
            for k in range(ksz):
                sx = dirs[k, 0]
                sy = dirs[k, 1]
                sz = dirs[k, 2]
                px = cx + rhalf * sx
                py = cy + rhalf * sy
                pz = cz + rhalf * sz
                qx = cx - rhalf * sx
                qy = cy - rhalf * sy
                qz = cz - rhalf * sz
                fp = _tri(values, n, L, h, px, py, pz)
                fq = _tri(values, n, L, h, qx, qy, qz)
                gain = fp * fq * gain_pref
                loss = loss_pref * ((1.0 - eps * fp) * (1.0 - eps * fq))
                bracket = gain - loss
                if model == 0 and mirror != 0:
                    bfac = 2.0 * b0
                else:
                    c = nx * sx + ny * sy + nz * sz
                    bfac = _bang(model, b0, amp, expo, tcut, c)
                    if mirror != 0:
                        bfac += _bang(model, b0, amp, expo, tcut, -c)
                ssum += wts[k] * bfac * bracket
            acc += phi * ssum
        out[i] = acc * w


@njit(parallel=True, cache=True)
def classical_collision(values, n, L, h, gamma, model, b0, amp, expo, tcut,
                        dirs, wts, mirror, out):
    m = n * n * n
    nn = n * n
    ksz = dirs.shape[0]
    w = h * h * h
    for i in prange(m):
        ix = i // nn
        iy = (i % nn) // n
        iz = i % n
        vx = -L + (ix + 0.5) * h
        vy = -L + (iy + 0.5) * h
        vz = -L + (iz + 0.5) * h
        fi = values[i]
        acc = 0.0
        for j in range(m):
            if j == i:
                continue
            fj = values[j]
            jx = j // nn
            jy = (j % nn) // n
            jz = j % n
            wx = -L + (jx + 0.5) * h
            wy = -L + (jy + 0.5) * h
            wz = -L + (jz + 0.5) * h
            dx = vx - wx
            dy = vy - wy
            dz = vz - wz
            r2 = dx * dx + dy * dy + dz * dz
            r = np.sqrt(r2)
            phi = r**gamma
            cx = 0.5 * (vx + wx)
            cy = 0.5 * (vy + wy)
            cz = 0.5 * (vz + wz)
            rhalf = 0.5 * r
            invr = 1.0 / r
            nx = dx * invr
            ny = dy * invr
            nz = dz * invr
            loss_pref = fi * fj
            ssum = 0.0
            for k in range(ksz):
                sx = dirs[k, 0]
                sy = dirs[k, 1]
                sz = dirs[k, 2]
                px = cx + rhalf * sx
                py = cy + rhalf * sy
                pz = cz + rhalf * sz
                qx = cx - rhalf * sx
                qy = cy - rhalf * sy
                qz = cz - rhalf * sz
                fp = _tri(values, n, L, h, px, py, pz)
                fq = _tri(values, n, L, h, qx, qy, qz)
                gain = fp * fq
                loss = loss_pref
                bracket = gain - loss
                if model == 0 and mirror != 0:
                    bfac = 2.0 * b0
                else:
                    c = nx * sx + ny * sy + nz * sz
                    bfac = _bang(model, b0, amp, expo, tcut, c)
                    if mirror != 0:
                        bfac += _bang(model, b0, amp, expo, tcut, -c)
                ssum += wts[k] * bfac * bracket
            acc += phi * ssum
        out[i] = acc * w


@njit(inline="always")
def _log_ratio(eps, fi, fj, fp, fq, floor):
    # floored occupation ratio log( psi(fp) psi(fq) / (psi(fi) psi(fj)) );
    # numerator and denominator components are floored independently so
    # truncation zeros give large finite values instead of infinities.
    ai = fi if fi > floor else floor
    aj = fj if fj > floor else floor
    ap = fp if fp > floor else floor
    aq = fq if fq > floor else floor
    bi = 1.0 - eps * fi
    bj = 1.0 - eps * fj
    bp = 1.0 - eps * fp
    bq = 1.0 - eps * fq
    if bi < floor:
        bi = floor
    if bj < floor:
        bj = floor
    if bp < floor:
        bp = floor
    if bq < floor:
        bq = floor
    return np.log((ap * aq * bi * bj) / (ai * aj * bp * bq))


@njit(parallel=True, cache=True)
def entropy_production(values, n, L, h, eps, eta, model, b0, amp, expo, tcut,
                       dirs, wts, mirror, floor, partial, partial_abs):
    m = n * n * n
    nn = n * n
    ksz = dirs.shape[0]
    w = h * h * h
    for i in prange(m):
        ix = i // nn
        iy = (i % nn) // n
        iz = i % n
        vx = -L + (ix + 0.5) * h
        vy = -L + (iy + 0.5) * h
        vz = -L + (iz + 0.5) * h
        fi = values[i]
        pi = 1.0 - eps * fi
        acc = 0.0
        acc_abs = 0.0
        for j in range(m):
            if j == i:
                continue
            fj = values[j]
            jx = j // nn
            jy = (j % nn) // n
            jz = j % n
            wx = -L + (jx + 0.5) * h
            wy = -L + (jy + 0.5) * h
            wz = -L + (jz + 0.5) * h
            dx = vx - wx
            dy = vy - wy
            dz = vz - wz
            r2 = dx * dx + dy * dy + dz * dz
            r = np.sqrt(r2)
            phi = r**eta
            cx = 0.5 * (vx + wx)
            cy = 0.5 * (vy + wy)
            cz = 0.5 * (vz + wz)
            rhalf = 0.5 * r
            invr = 1.0 / r
            nx = dx * invr
            ny = dy * invr
            nz = dz * invr
            pj = 1.0 - eps * fj
            loss_pref = fi * fj
            gain_pref = pi * pj
            ssum = 0.0
            ssum_abs = 0.0
            for k in range(ksz):
                sx = dirs[k, 0]
                sy = dirs[k, 1]
                sz = dirs[k, 2]
                px = cx + rhalf * sx
                py = cy + rhalf * sy
                pz = cz + rhalf * sz
                qx = cx - rhalf * sx
                qy = cy - rhalf * sy
                qz = cz - rhalf * sz
                fp = _tri(values, n, L, h, px, py, pz)
                fq = _tri(values, n, L, h, qx, qy, qz)
                gain = fp * fq * gain_pref
                loss = loss_pref * ((1.0 - eps * fp) * (1.0 - eps * fq))
                if gain < 1e-280 and loss < 1e-280:
                    continue
                term = (gain - loss) * _log_ratio(eps, fi, fj, fp, fq, floor)
                if model == 0 and mirror != 0:
                    bfac = 2.0 * b0
                else:
                    c = nx * sx + ny * sy + nz * sz
                    bfac = _bang(model, b0, amp, expo, tcut, c)
                    if mirror != 0:
                        bfac += _bang(model, b0, amp, expo, tcut, -c)
                contrib = wts[k] * bfac * term
                ssum += contrib
                if contrib >= 0.0:
                    ssum_abs += contrib
                else:
                    ssum_abs -= contrib
            acc += phi * ssum
            acc_abs += phi * ssum_abs
        partial[i] = 0.25 * acc * w * w
        partial_abs[i] = 0.25 * acc_abs * w * w


@njit(parallel=True, cache=True)
def loss_rate_bound(values, n, L, h, gamma, b_l1, out):
    # upper bound on the loss coefficient of each node: the blocking factors
    # under the gain-side integral are bounded by one
    m = n * n * n
    nn = n * n
    w = h * h * h
    for i in prange(m):
        ix = i // nn
        iy = (i % nn) // n
        iz = i % n
        vx = -L + (ix + 0.5) * h
        vy = -L + (iy + 0.5) * h
        vz = -L + (iz + 0.5) * h
        acc = 0.0
        for j in range(m):
            if j == i:
                continue
            jx = j // nn
            jy = (j % nn) // n
            jz = j % n
            wx = -L + (jx + 0.5) * h
            wy = -L + (jy + 0.5) * h
            wz = -L + (jz + 0.5) * h
            dx = vx - wx
            dy = vy - wy
            dz = vz - wz
            r = np.sqrt(dx * dx + dy * dy + dz * dz)
            acc += values[j] * r**gamma
        out[i] = acc * w * b_l1
