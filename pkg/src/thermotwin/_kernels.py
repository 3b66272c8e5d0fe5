"""Numba-compiled hot loops.

Three families live here:

* ``shadow_march`` / ``svf_horizon`` — per-cell ray marches over the digital
  surface model (ground + building or canopy tops).
* ``attn_fwd`` / ``attn_bwd`` — float64 softmax attention over token slices;
  the reference path used by gradient checks and small configurations.
* ``attn_fwd_f32`` / ``attn_bwd_f32`` — float32 twins tuned for the training
  hot loop: inlined polynomial exp (no SVML on typical boxes, so libm exp
  would dominate), manually unrolled reductions (LLVM does not vectorize
  branchy max/sum chains), and a fused inner product for the production
  head width of 6.

All kernels parallelize over independent work items (cells or attention
slices), so results are bit-identical regardless of thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# float32 exp constants (Cephes expf splitting of ln 2 plus minimax poly)
_LOG2E = np.float32(1.44269504088896341)
_C1 = np.float32(0.693359375)
_C2 = np.float32(-2.12194440e-4)
_P0 = np.float32(1.9875691500e-4)
_P1 = np.float32(1.3981999507e-3)
_P2 = np.float32(8.3334519073e-3)
_P3 = np.float32(4.1665795894e-2)
_P4 = np.float32(1.6666665459e-1)
_P5 = np.float32(5.0000001201e-1)


@njit(cache=True, parallel=True, fastmath=True)
def shadow_march(dem, building_top, canopy_top, tan_elev, drow, dcol,
                 cell_size, tau, max_steps):
    """Shade factor per cell: 0 building-shadow, tau tree-shadow, 1 sunlit.

    Marches from each cell toward the sun in one-cell steps; a building top
    (or terrain) above the ray blocks it fully, a canopy top alone leaves
    transmitted beam tau.
    """
    nrows, ncols = dem.shape
    out = np.ones((nrows, ncols), np.float32)
    for r in prange(nrows):
        for c in range(ncols):
            z0 = dem[r, c]
            shade = np.float32(1.0)
            fr = np.float64(r)
            fc = np.float64(c)
            for s in range(1, max_steps + 1):
                fr += drow
                fc += dcol
                ir = int(round(fr))
                ic = int(round(fc))
                if ir < 0 or ir >= nrows or ic < 0 or ic >= ncols:
                    break
                ray_z = z0 + tan_elev * s * cell_size
                if building_top[ir, ic] > ray_z:
                    shade = np.float32(0.0)
                    break
                if canopy_top[ir, ic] > ray_z:
                    shade = np.float32(tau)
            out[r, c] = shade
    return out


@njit(cache=True, parallel=True, fastmath=True)
def svf_horizon(dem, surface_top, n_azimuths, max_steps, cell_size):
    """Sky-view factor: mean over azimuths of cos^2 of the horizon angle."""
    nrows, ncols = dem.shape
    out = np.empty((nrows, ncols), np.float32)
    for r in prange(nrows):
        for c in range(ncols):
            z0 = dem[r, c]
            acc = 0.0
            for k in range(n_azimuths):
                az = 2.0 * math.pi * k / n_azimuths
                drow = -math.cos(az)
                dcol = math.sin(az)
                max_tan = 0.0
                fr = np.float64(r)
                fc = np.float64(c)
                for s in range(1, max_steps + 1):
                    fr += drow
                    fc += dcol
                    ir = int(round(fr))
                    ic = int(round(fc))
                    if ir < 0 or ir >= nrows or ic < 0 or ic >= ncols:
                        break
                    rise = surface_top[ir, ic] - z0
                    if rise > 0.0:
                        t = rise / (s * cell_size)
                        if t > max_tan:
                            max_tan = t
                acc += 1.0 / (1.0 + max_tan * max_tan)  # cos^2(atan(t))
            out[r, c] = np.float32(acc / n_azimuths)
    return out


# ---------------------------------------------------------------------------
# Attention over slices of (L, dh) tokens; softmax over keys row by row.
# The backward recomputes probabilities with the same arithmetic order as the
# forward, so training is deterministic.
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True, fastmath=True)
def attn_fwd(q, k, v, scale):
    """Float64 reference forward: out[s] = softmax(q k^T * scale) v."""
    n_slices, L, dh = q.shape
    out = np.empty_like(q)
    for s in prange(n_slices):
        kt = np.empty((dh, L), q.dtype)
        vt = np.empty((dh, L), q.dtype)
        for j in range(L):
            for d in range(dh):
                kt[d, j] = k[s, j, d]
                vt[d, j] = v[s, j, d]
        sc = np.empty(L, q.dtype)
        for i in range(L):
            for j in range(L):
                sc[j] = 0.0
            for d in range(dh):
                qd = q[s, i, d] * scale
                for j in range(L):
                    sc[j] += qd * kt[d, j]
            m = sc[0]
            for j in range(1, L):
                if sc[j] > m:
                    m = sc[j]
            total = 0.0
            for j in range(L):
                e = math.exp(sc[j] - m)
                sc[j] = e
                total += e
            inv = 1.0 / total
            for d in range(dh):
                acc = 0.0
                for j in range(L):
                    acc += sc[j] * vt[d, j]
                out[s, i, d] = acc * inv
    return out


@njit(cache=True, parallel=True, fastmath=True)
def attn_bwd(q, k, v, dout, scale):
    """Float64 reference backward for attn_fwd."""
    n_slices, L, dh = q.shape
    dq = np.empty_like(q)
    dk = np.empty_like(q)
    dv = np.empty_like(q)
    for s in prange(n_slices):
        kt = np.empty((dh, L), q.dtype)
        vt = np.empty((dh, L), q.dtype)
        dkt = np.zeros((dh, L), q.dtype)
        dvt = np.zeros((dh, L), q.dtype)
        for j in range(L):
            for d in range(dh):
                kt[d, j] = k[s, j, d]
                vt[d, j] = v[s, j, d]
        sc = np.empty(L, q.dtype)
        dp = np.empty(L, q.dtype)
        for i in range(L):
            # recompute the softmax row exactly as the forward did
            for j in range(L):
                sc[j] = 0.0
            for d in range(dh):
                qd = q[s, i, d] * scale
                for j in range(L):
                    sc[j] += qd * kt[d, j]
            m = sc[0]
            for j in range(1, L):
                if sc[j] > m:
                    m = sc[j]
            total = 0.0
            for j in range(L):
                e = math.exp(sc[j] - m)
                sc[j] = e
                total += e
            inv = 1.0 / total
            for j in range(L):
                sc[j] *= inv              # sc now holds probabilities
            # dP = dout_i V^T ; delta = sum_j P_j dP_j
            for j in range(L):
                dp[j] = 0.0
            for d in range(dh):
                g = dout[s, i, d]
                for j in range(L):
                    dp[j] += g * vt[d, j]
            delta = 0.0
            for j in range(L):
                delta += sc[j] * dp[j]
            # dS = P * (dP - delta); chain into dq, dk, dv
            for j in range(L):
                dp[j] = sc[j] * (dp[j] - delta)
            for d in range(dh):
                acc = 0.0
                for j in range(L):
                    acc += dp[j] * kt[d, j]
                dq[s, i, d] = acc * scale
            for d in range(dh):
                qd = q[s, i, d] * scale
                g = dout[s, i, d]
                for j in range(L):
                    dkt[d, j] += qd * dp[j]
                    dvt[d, j] += g * sc[j]
        for j in range(L):
            for d in range(dh):
                dk[s, j, d] = dkt[d, j]
                dv[s, j, d] = dvt[d, j]
    return dq, dk, dv


@njit(inline="always", fastmath=True)
def _row_max_f32(sc, L):
    """Max of sc[:L]; 8 independent lanes so LLVM emits vmaxps."""
    m0 = np.float32(-3.0e38)
    m1 = np.float32(-3.0e38)
    m2 = np.float32(-3.0e38)
    m3 = np.float32(-3.0e38)
    m4 = np.float32(-3.0e38)
    m5 = np.float32(-3.0e38)
    m6 = np.float32(-3.0e38)
    m7 = np.float32(-3.0e38)
    nb = L - (L & 7)
    for j in range(0, nb, 8):
        m0 = max(m0, sc[j])
        m1 = max(m1, sc[j + 1])
        m2 = max(m2, sc[j + 2])
        m3 = max(m3, sc[j + 3])
        m4 = max(m4, sc[j + 4])
        m5 = max(m5, sc[j + 5])
        m6 = max(m6, sc[j + 6])
        m7 = max(m7, sc[j + 7])
    for j in range(nb, L):
        m0 = max(m0, sc[j])
    return max(max(max(m0, m1), max(m2, m3)), max(max(m4, m5), max(m6, m7)))


@njit(inline="always", fastmath=True)
def _exp_row_f32(sc, ebits, L):
    """exp(sc - max) split as poly * 2^n: the poly part replaces sc in place
    and the 2^n exponent bits land in ``ebits`` (int32, viewed as float32 by
    the caller).

    Cephes-style expf: n = floor(x/ln2 + 1/2) via the add-big-constant trick
    (no libm floor), minimax poly on the residual. Branch-free f32/i32
    arithmetic throughout, so the loops vectorize; accuracy ~1 ulp of f32.
    """
    one = np.float32(1.0)
    lo = np.float32(-87.0)
    shift = np.float32(16384.5)  # 0.5 rounding bias + big-constant floor
    m = _row_max_f32(sc, L)
    for j in range(L):
        x = sc[j] - m
        if x < lo:
            x = lo
        u = np.int32(x * _LOG2E + shift) - np.int32(16384)  # floor(x/ln2+1/2)
        fn = np.float32(u)
        x = x - fn * _C1
        x = x - fn * _C2
        z = x * x
        p = ((((_P0 * x + _P1) * x + _P2) * x + _P3) * x + _P4) * x + _P5
        sc[j] = (p * z + x) + one
        ebits[j] = (u + np.int32(127)) << np.int32(23)


@njit(inline="always", fastmath=True)
def _softmax_row_f32(sc, ebits, escale, L):
    """In-place exp(sc - max); returns the sum (generic-width path)."""
    _exp_row_f32(sc, ebits, L)
    t0 = np.float32(0.0)
    t1 = np.float32(0.0)
    t2 = np.float32(0.0)
    t3 = np.float32(0.0)
    nb = L - (L & 3)
    for j in range(0, nb, 4):
        e0 = sc[j] * escale[j]
        e1 = sc[j + 1] * escale[j + 1]
        e2 = sc[j + 2] * escale[j + 2]
        e3 = sc[j + 3] * escale[j + 3]
        sc[j] = e0
        sc[j + 1] = e1
        sc[j + 2] = e2
        sc[j + 3] = e3
        t0 += e0
        t1 += e1
        t2 += e2
        t3 += e3
    for j in range(nb, L):
        e = sc[j] * escale[j]
        sc[j] = e
        t0 += e
    return (t0 + t1) + (t2 + t3)


@njit(cache=True, parallel=True, fastmath=True)
def attn_fwd_f32(q, k, v, scale):
    """Float32 fast-path forward; numerics match attn_fwd to ~1e-7 relative."""
    n_slices, L, dh = q.shape
    out = np.empty_like(q)
    scale32 = np.float32(scale)
    one = np.float32(1.0)
    for s in prange(n_slices):
        kt = np.empty((dh, L), np.float32)
        vt = np.empty((dh, L), np.float32)
        for j in range(L):
            for d in range(dh):
                kt[d, j] = k[s, j, d]
                vt[d, j] = v[s, j, d]
        sc = np.empty(L, np.float32)
        ebits = np.empty(L, np.int32)
        escale = ebits.view(np.float32)
        if dh == 6:
            k0, k1, k2 = kt[0], kt[1], kt[2]
            k3, k4, k5 = kt[3], kt[4], kt[5]
            v0, v1, v2 = vt[0], vt[1], vt[2]
            v3, v4, v5 = vt[3], vt[4], vt[5]
            for i in range(L):
                q0 = q[s, i, 0] * scale32
                q1 = q[s, i, 1] * scale32
                q2 = q[s, i, 2] * scale32
                q3 = q[s, i, 3] * scale32
                q4 = q[s, i, 4] * scale32
                q5 = q[s, i, 5] * scale32
                for j in range(L):
                    sc[j] = (((q0 * k0[j] + q1 * k1[j]) + (q2 * k2[j] + q3 * k3[j]))
                             + (q4 * k4[j] + q5 * k5[j]))
                _exp_row_f32(sc, ebits, L)
                # fold softmax normalization into the value accumulation
                a0 = np.float32(0.0)
                a1 = np.float32(0.0)
                a2 = np.float32(0.0)
                a3 = np.float32(0.0)
                a4 = np.float32(0.0)
                a5 = np.float32(0.0)
                total = np.float32(0.0)
                for j in range(L):
                    e = sc[j] * escale[j]
                    total += e
                    a0 += e * v0[j]
                    a1 += e * v1[j]
                    a2 += e * v2[j]
                    a3 += e * v3[j]
                    a4 += e * v4[j]
                    a5 += e * v5[j]
                inv = one / total
                out[s, i, 0] = a0 * inv
                out[s, i, 1] = a1 * inv
                out[s, i, 2] = a2 * inv
                out[s, i, 3] = a3 * inv
                out[s, i, 4] = a4 * inv
                out[s, i, 5] = a5 * inv
        else:
            for i in range(L):
                for j in range(L):
                    sc[j] = 0.0
                for d in range(dh):
                    qd = q[s, i, d] * scale32
                    for j in range(L):
                        sc[j] += qd * kt[d, j]
                total = _softmax_row_f32(sc, ebits, escale, L)
                inv = one / total
                for d in range(dh):
                    acc = np.float32(0.0)
                    for j in range(L):
                        acc += sc[j] * vt[d, j]
                    out[s, i, d] = acc * inv
    return out


@njit(cache=True, parallel=True, fastmath=True)
def attn_bwd_f32(q, k, v, dout, scale):
    """Float32 fast-path backward for attn_fwd_f32."""
    n_slices, L, dh = q.shape
    dq = np.empty_like(q)
    dk = np.empty_like(q)
    dv = np.empty_like(q)
    scale32 = np.float32(scale)
    one = np.float32(1.0)
    for s in prange(n_slices):
        kt = np.empty((dh, L), np.float32)
        vt = np.empty((dh, L), np.float32)
        dkt = np.zeros((dh, L), np.float32)
        dvt = np.zeros((dh, L), np.float32)
        for j in range(L):
            for d in range(dh):
                kt[d, j] = k[s, j, d]
                vt[d, j] = v[s, j, d]
        sc = np.empty(L, np.float32)
        dp = np.empty(L, np.float32)
        ebits = np.empty(L, np.int32)
        escale = ebits.view(np.float32)
        if dh == 6:
            k0, k1, k2 = kt[0], kt[1], kt[2]
            k3, k4, k5 = kt[3], kt[4], kt[5]
            v0, v1, v2 = vt[0], vt[1], vt[2]
            v3, v4, v5 = vt[3], vt[4], vt[5]
            dk0, dk1, dk2 = dkt[0], dkt[1], dkt[2]
            dk3, dk4, dk5 = dkt[3], dkt[4], dkt[5]
            dv0, dv1, dv2 = dvt[0], dvt[1], dvt[2]
            dv3, dv4, dv5 = dvt[3], dvt[4], dvt[5]
            for i in range(L):
                q0 = q[s, i, 0] * scale32
                q1 = q[s, i, 1] * scale32
                q2 = q[s, i, 2] * scale32
                q3 = q[s, i, 3] * scale32
                q4 = q[s, i, 4] * scale32
                q5 = q[s, i, 5] * scale32
                for j in range(L):
                    sc[j] = (((q0 * k0[j] + q1 * k1[j]) + (q2 * k2[j] + q3 * k3[j]))
                             + (q4 * k4[j] + q5 * k5[j]))
                _exp_row_f32(sc, ebits, L)
                g0 = dout[s, i, 0]
                g1 = dout[s, i, 1]
                g2 = dout[s, i, 2]
                g3 = dout[s, i, 3]
                g4 = dout[s, i, 4]
                g5 = dout[s, i, 5]
                # unnormalized weights, dP and (total, delta) in one pass;
                # 1/total is folded into the scalar factors afterwards
                total = np.float32(0.0)
                draw = np.float32(0.0)
                for j in range(L):
                    e = sc[j] * escale[j]
                    sc[j] = e
                    w = (((g0 * v0[j] + g1 * v1[j]) + (g2 * v2[j] + g3 * v3[j]))
                         + (g4 * v4[j] + g5 * v5[j]))
                    dp[j] = w
                    total += e
                    draw += e * w
                inv = one / total
                delta = draw * inv
                a0 = np.float32(0.0)
                a1 = np.float32(0.0)
                a2 = np.float32(0.0)
                a3 = np.float32(0.0)
                a4 = np.float32(0.0)
                a5 = np.float32(0.0)
                for j in range(L):
                    ds = sc[j] * (dp[j] - delta)   # inv-scaled later
                    dp[j] = ds
                    a0 += ds * k0[j]
                    a1 += ds * k1[j]
                    a2 += ds * k2[j]
                    a3 += ds * k3[j]
                    a4 += ds * k4[j]
                    a5 += ds * k5[j]
                si = scale32 * inv
                dq[s, i, 0] = a0 * si
                dq[s, i, 1] = a1 * si
                dq[s, i, 2] = a2 * si
                dq[s, i, 3] = a3 * si
                dq[s, i, 4] = a4 * si
                dq[s, i, 5] = a5 * si
                qi0 = q0 * inv
                qi1 = q1 * inv
                qi2 = q2 * inv
                gi0 = g0 * inv
                gi1 = g1 * inv
                gi2 = g2 * inv
                for j in range(L):
                    ds = dp[j]
                    e = sc[j]
                    dk0[j] += qi0 * ds
                    dk1[j] += qi1 * ds
                    dk2[j] += qi2 * ds
                    dv0[j] += gi0 * e
                    dv1[j] += gi1 * e
                    dv2[j] += gi2 * e
                qi3 = q3 * inv
                qi4 = q4 * inv
                qi5 = q5 * inv
                gi3 = g3 * inv
                gi4 = g4 * inv
                gi5 = g5 * inv
                for j in range(L):
                    ds = dp[j]
                    e = sc[j]
                    dk3[j] += qi3 * ds
                    dk4[j] += qi4 * ds
                    dk5[j] += qi5 * ds
                    dv3[j] += gi3 * e
                    dv4[j] += gi4 * e
                    dv5[j] += gi5 * e
        else:
            for i in range(L):
                for j in range(L):
                    sc[j] = 0.0
                for d in range(dh):
                    qd = q[s, i, d] * scale32
                    for j in range(L):
                        sc[j] += qd * kt[d, j]
                total = _softmax_row_f32(sc, ebits, escale, L)
                inv = one / total
                for j in range(L):
                    sc[j] *= inv
                for j in range(L):
                    dp[j] = 0.0
                for d in range(dh):
                    g = dout[s, i, d]
                    for j in range(L):
                        dp[j] += g * vt[d, j]
                delta = np.float32(0.0)
                for j in range(L):
                    delta += sc[j] * dp[j]
                for j in range(L):
                    dp[j] = sc[j] * (dp[j] - delta)
                for d in range(dh):
                    acc = np.float32(0.0)
                    for j in range(L):
                        acc += dp[j] * kt[d, j]
                    dq[s, i, d] = acc * scale32
                for d in range(dh):
                    qd = q[s, i, d] * scale32
                    g = dout[s, i, d]
                    for j in range(L):
                        dkt[d, j] += qd * dp[j]
                        dvt[d, j] += g * sc[j]
        for j in range(L):
            for d in range(dh):
                dk[s, j, d] = dkt[d, j]
                dv[s, j, d] = dvt[d, j]
    return dq, dk, dv


@njit(cache=True, parallel=True, fastmath=True)
def ln_fwd(x, g, b, eps):
    """Row-wise layer normalization over (rows, d); returns (out, xn, istd)."""
    rows, d = x.shape
    out = np.empty_like(x)
    xn = np.empty_like(x)
    istd = np.empty(rows, x.dtype)
    for r in prange(rows):
        mu = 0.0
        for j in range(d):
            mu += x[r, j]
        mu /= d
        var = 0.0
        for j in range(d):
            t = x[r, j] - mu
            var += t * t
        var /= d
        s = 1.0 / math.sqrt(var + eps)
        istd[r] = s
        for j in range(d):
            v = (x[r, j] - mu) * s
            xn[r, j] = v
            out[r, j] = v * g[j] + b[j]
    return out, xn, istd


@njit(cache=True, parallel=True, fastmath=True)
def ln_bwd(dout, xn, istd, g, n_chunks):
    """Backward of ln_fwd. Gain/offset gradients come back as per-chunk
    partials (n_chunks, d); summing them in fixed order keeps training
    deterministic regardless of thread count."""
    rows, d = dout.shape
    dx = np.empty_like(dout)
    dg_part = np.zeros((n_chunks, d), dout.dtype)
    db_part = np.zeros((n_chunks, d), dout.dtype)
    chunk = (rows + n_chunks - 1) // n_chunks
    for ci in prange(n_chunks):
        r0 = ci * chunk
        r1 = min(rows, r0 + chunk)
        for r in range(r0, r1):
            m1 = 0.0
            m2 = 0.0
            for j in range(d):
                dxn = dout[r, j] * g[j]
                m1 += dxn
                m2 += dxn * xn[r, j]
            m1 /= d
            m2 /= d
            s = istd[r]
            for j in range(d):
                dxn = dout[r, j] * g[j]
                dx[r, j] = s * (dxn - m1 - xn[r, j] * m2)
                dg_part[ci, j] += dout[r, j] * xn[r, j]
                db_part[ci, j] += dout[r, j]
    return dx, dg_part, db_part


def attention_forward(q, k, v, scale):
    """Dispatch to the dtype-matched kernel; q/k/v are (slices, L, dh)."""
    if q.dtype == np.float32:
        return attn_fwd_f32(q, k, v, scale)
    return attn_fwd(q, k, v, scale)


def attention_backward(q, k, v, dout, scale):
    if q.dtype == np.float32:
        return attn_bwd_f32(q, k, v, dout, scale)
    return attn_bwd(q, k, v, dout, scale)
