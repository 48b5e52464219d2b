# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: Householder LQ, THP feedback loop and the batched link."""
import numpy as np

from libc.math cimport sqrt, floor
from scipy.linalg.cython_blas cimport zgemm

from mbthp.errors import RankDeficient

ctypedef double complex cplx

cdef double RANK_TOL = 1e-12


cdef inline double _abs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline double _floor(double y) noexcept nogil:
    # libm floor is an out-of-line call without SSE4.1; |y| stays small here
    cdef long long k = <long long>y
    if y < k:
        k -= 1
    return <double>k


cdef inline double _wrap(double a, double tau, double inv_tau) noexcept nogil:
    return a - _floor(a * inv_tau + 0.5) * tau


cdef int _lq(cplx[:, ::1] a, int m, int n, double tol, cplx[:, ::1] lmat,
             cplx[:, ::1] q, cplx[:, ::1] u, double[::1] utau) noexcept nogil:
    # Row Householder LQ of a[:m, :n]; a is destroyed. Returns 0 or pivot+1.
    cdef int i, j, k
    cdef double nrm, ax0
    cdef cplx x0, phase, alpha, c
    for k in range(m):
        nrm = 0.0
        for j in range(k, n):
            nrm += _abs2(a[k, j])
        nrm = sqrt(nrm)
        if not nrm > tol:
            return k + 1
        x0 = a[k, k]
        ax0 = sqrt(_abs2(x0))
        if ax0 > 0.0:
            phase = x0 / ax0
        else:
            phase = 1.0
        alpha = -phase * nrm
        for j in range(k):
            u[k, j] = 0.0
        u[k, k] = x0 - alpha
        for j in range(k + 1, n):
            u[k, j] = a[k, j]
        utau[k] = 1.0 / (nrm * nrm + ax0 * nrm)
        a[k, k] = alpha
        for j in range(k + 1, n):
            a[k, j] = 0.0
        for i in range(k + 1, m):
            c = 0.0
            for j in range(k, n):
                c = c + a[i, j] * u[k, j].conjugate()
            c = c * utau[k]
            for j in range(k, n):
                a[i, j] = a[i, j] - c * u[k, j]
    for i in range(m):
        for j in range(n):
            q[i, j] = 0.0
        q[i, i] = 1.0
    for k in range(m - 1, -1, -1):
        for i in range(k, m):
            c = 0.0
            for j in range(k, n):
                c = c + q[i, j] * u[k, j].conjugate()
            c = c * utau[k]
            for j in range(k, n):
                q[i, j] = q[i, j] - c * u[k, j]
    for k in range(m):
        alpha = a[k, k]
        nrm = sqrt(_abs2(alpha))
        phase = alpha / nrm
        for i in range(k):
            lmat[i, k] = 0.0
        lmat[k, k] = nrm
        for i in range(k + 1, m):
            lmat[i, k] = a[i, k] * phase.conjugate()
        for j in range(n):
            q[k, j] = q[k, j] * phase
    return 0


def lq_factor(a):
    """LQ factorization ``a = l @ q`` with a real positive diagonal on ``l``."""
    work = np.array(a, dtype=np.complex128, order="C", copy=True)
    if work.ndim != 2:
        raise ValueError("lq needs a 2-D array")
    cdef int m = work.shape[0]
    cdef int n = work.shape[1]
    if m > n:
        raise ValueError(f"lq needs rows <= cols, got {work.shape}")
    cdef double tol = RANK_TOL * np.linalg.norm(work)
    lmat = np.zeros((m, m), dtype=np.complex128)
    q = np.zeros((m, n), dtype=np.complex128)
    u = np.zeros((m, n), dtype=np.complex128)
    utau = np.zeros(m)
    cdef int rc = _lq(work, m, n, tol, lmat, q, u, utau)
    if rc:
        raise RankDeficient(f"pivot {rc - 1} below {tol:.3e}")
    return lmat, q


cdef void _feedback_rows(cplx[:, ::1] lmat, cplx[:, ::1] s, cplx[:, ::1] x,
                         cplx[:, ::1] v, int centralized, double tau) noexcept nogil:
    # Row i depends only on rows j < i, so each row is swept over the packet.
    cdef int S = s.shape[0]
    cdef int P = s.shape[1]
    cdef int i, j, p
    cdef cplx bij, w, xi
    cdef double re, im
    cdef double inv_tau = 1.0 / tau
    for i in range(S):
        for p in range(P):
            v[i, p] = s[i, p]
        for j in range(i):
            if centralized:
                bij = lmat[i, j] / lmat[j, j].real
            else:
                bij = lmat[i, j] / lmat[i, i].real
            for p in range(P):
                v[i, p] = v[i, p] - bij * x[j, p]
        for p in range(P):
            w = v[i, p]
            re = _wrap(w.real, tau, inv_tau)
            im = _wrap(w.imag, tau, inv_tau)
            xi = re + 1j * im
            x[i, p] = xi
            v[i, p] = s[i, p] + (xi - w)


cdef void _matmul(cplx[:, ::1] a, cplx[:, ::1] b, cplx[:, ::1] c) noexcept nogil:
    # c = a @ b for C-ordered operands, via column-major zgemm on transposes
    cdef int m = b.shape[1]
    cdef int n = a.shape[0]
    cdef int k = a.shape[1]
    cdef cplx one = 1.0
    cdef cplx zero = 0.0
    cdef char tr = b'N'
    zgemm(&tr, &tr, &m, &n, &k, &one, &b[0, 0], &m, &a[0, 0], &k, &zero, &c[0, 0], &m)


def thp_feedback(lmat, s, double tau, bint centralized):
    """Successive cancellation with modulo reduction; returns ``(x, v)``."""
    lm = np.ascontiguousarray(lmat, dtype=np.complex128)
    sv = np.asarray(s, dtype=np.complex128)
    squeeze = sv.ndim == 1
    if squeeze:
        sv = sv[:, None]
    sv = np.ascontiguousarray(sv)
    x = np.zeros_like(sv)
    v = np.zeros_like(sv)
    _feedback_rows(lm, sv, x, v, centralized, tau)
    if squeeze:
        return x[:, 0], v[:, 0]
    return x, v


def simulate_thp_batch(h_true, h_est, perms, labels, noise, sigma_n,
                       bint mmse, bint centralized, points, levels, axis_gray,
                       int bits_per_axis, double tau):
    """Run the THP link for a batch of trials and several noise levels.

    Same contract as the numpy fallback.
    """
    cdef const cplx[:, :, ::1] ht = np.ascontiguousarray(h_true, dtype=np.complex128)
    cdef const cplx[:, :, ::1] he = np.ascontiguousarray(h_est, dtype=np.complex128)
    cdef const long long[:, ::1] pm = np.ascontiguousarray(perms, dtype=np.int64)
    cdef const long long[:, :, ::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const cplx[:, :, ::1] nz = np.ascontiguousarray(noise, dtype=np.complex128)
    cdef const double[::1] sig = np.ascontiguousarray(sigma_n, dtype=np.float64).ravel()
    cdef const cplx[::1] pts = np.ascontiguousarray(points, dtype=np.complex128)
    cdef const double[::1] lev = np.ascontiguousarray(levels, dtype=np.float64)
    cdef const long long[::1] gray = np.ascontiguousarray(axis_gray, dtype=np.int64)

    cdef int T = lab.shape[0]
    cdef int S = lab.shape[1]
    cdef int P = lab.shape[2]
    cdef int E = sig.shape[0]
    cdef int LB = pm.shape[0]
    cdef int ncol = 2 * S if mmse else S

    out_err = np.zeros((E, T), dtype=np.int64)
    out_sel = np.zeros((E, T), dtype=np.int64)
    out_beta = np.ones((E, T))
    out_ld = np.zeros((E, T, S))
    out_vv = np.zeros((E, T))
    out_st = np.zeros((E, T), dtype=np.int8)
    cdef long long[:, ::1] o_err = out_err
    cdef long long[:, ::1] o_sel = out_sel
    cdef double[:, ::1] o_beta = out_beta
    cdef double[:, :, ::1] o_ld = out_ld
    cdef double[:, ::1] o_vv = out_vv
    cdef signed char[:, ::1] o_st = out_st

    cdef cplx[:, ::1] a = np.zeros((S, ncol), dtype=np.complex128)
    cdef cplx[:, ::1] lw = np.zeros((S, S), dtype=np.complex128)
    cdef cplx[:, ::1] qw = np.zeros((S, ncol), dtype=np.complex128)
    cdef cplx[:, ::1] lb = np.zeros((S, S), dtype=np.complex128)
    cdef cplx[:, ::1] qb = np.zeros((S, ncol), dtype=np.complex128)
    cdef cplx[:, ::1] uw = np.zeros((S, ncol), dtype=np.complex128)
    cdef double[::1] utau = np.zeros(S)
    cdef cplx[:, ::1] sv = np.zeros((S, P), dtype=np.complex128)
    cdef cplx[:, ::1] xv = np.zeros((S, P), dtype=np.complex128)
    cdef cplx[:, ::1] vv = np.zeros((S, P), dtype=np.complex128)
    cdef cplx[:, ::1] tx = np.zeros((S, P), dtype=np.complex128)
    cdef cplx[:, ::1] yv = np.zeros((S, P), dtype=np.complex128)
    cdef cplx[:, ::1] fmat = np.zeros((S, S), dtype=np.complex128)
    cdef cplx[:, ::1] hrow = np.zeros((S, S), dtype=np.complex128)
    cdef cplx[:, ::1] cmat = np.zeros((S, S), dtype=np.complex128)

    cdef int e, t, b, i, j, p, rc, best, row, ii, qq, k, m_axis
    cdef long long det, diff, errs
    cdef double sn, fro, tol, score, best_score, ld, bt, acc, lev0, spacing, re, im, sc_y, sc_n
    cdef double inv_spacing, inv_tau
    cdef cplx c

    m_axis = lev.shape[0]
    lev0 = lev[0]
    spacing = lev[1] - lev[0]
    inv_spacing = 1.0 / spacing
    inv_tau = 1.0 / tau

    with nogil:
        for t in range(T):
            for e in range(E):
                sn = sig[e]
                # ZF filters do not depend on the noise level: factor once per trial
                if mmse or e == 0:
                    best = -1
                    best_score = 0.0
                for b in range(LB if (mmse or e == 0) else 0):
                    fro = 0.0
                    for i in range(S):
                        row = <int>pm[b, i]
                        for j in range(S):
                            a[i, j] = he[t, row, j]
                            fro += _abs2(a[i, j])
                        if mmse:
                            for j in range(S, ncol):
                                a[i, j] = 0.0
                            a[i, S + i] = sn
                            fro += sn * sn
                    tol = RANK_TOL * sqrt(fro)
                    rc = _lq(a, S, ncol, tol, lw, qw, uw, utau)
                    if rc:
                        continue
                    score = 0.0
                    for i in range(S):
                        score += 1.0 / (lw[i, i].real * lw[i, i].real)
                    if best < 0 or score < best_score:
                        best = b
                        best_score = score
                        for i in range(S):
                            for j in range(S):
                                lb[i, j] = lw[i, j]
                            for j in range(ncol):
                                qb[i, j] = qw[i, j]
                if best < 0:
                    o_st[e, t] = 1
                    continue

                for i in range(S):
                    row = <int>pm[best, i]
                    for p in range(P):
                        sv[i, p] = pts[lab[t, row, p]]
                _feedback_rows(lb, sv, xv, vv, centralized, tau)

                acc = 0.0
                for i in range(S):
                    for p in range(P):
                        acc += _abs2(vv[i, p])
                o_vv[e, t] = acc / (S * P)

                if centralized:
                    for i in range(S):
                        ld = lb[i, i].real
                        for p in range(P):
                            xv[i, p] = xv[i, p] / ld
                for j in range(S):
                    for i in range(S):
                        fmat[j, i] = qb[i, j].conjugate()
                for i in range(S):
                    row = <int>pm[best, i]
                    for j in range(S):
                        hrow[i, j] = ht[t, row, j]
                # yv = H[perm] @ Q1^H @ xv; cTHP transmits u / beta and the
                # receiver multiplies by beta, so only the noise sees beta.
                bt = 1.0
                if centralized and mmse:
                    _matmul(fmat, xv, tx)
                    acc = 0.0
                    for j in range(S):
                        for p in range(P):
                            acc += _abs2(tx[j, p])
                    bt = sqrt(acc / (S * P))
                    _matmul(hrow, tx, yv)
                else:
                    if centralized:
                        bt = sqrt(best_score)
                    _matmul(hrow, fmat, cmat)
                    _matmul(cmat, xv, yv)

                errs = 0
                for i in range(S):
                    row = <int>pm[best, i]
                    if centralized:
                        sc_y = 1.0
                        sc_n = bt * sn
                    else:
                        ld = lb[i, i].real
                        sc_y = 1.0 / ld
                        sc_n = sn / ld
                    for p in range(P):
                        re = _wrap(sc_y * yv[i, p].real + sc_n * nz[t, row, p].real, tau, inv_tau)
                        im = _wrap(sc_y * yv[i, p].imag + sc_n * nz[t, row, p].imag, tau, inv_tau)
                        ii = <int>_floor((re - lev0) * inv_spacing + 0.5)
                        qq = <int>_floor((im - lev0) * inv_spacing + 0.5)
                        if ii < 0:
                            ii = 0
                        elif ii >= m_axis:
                            ii = m_axis - 1
                        if qq < 0:
                            qq = 0
                        elif qq >= m_axis:
                            qq = m_axis - 1
                        det = (gray[ii] << bits_per_axis) | gray[qq]
                        diff = det ^ lab[t, row, p]
                        errs += __builtin_popcountll(<unsigned long long>diff)
                o_err[e, t] = errs
                o_sel[e, t] = best
                o_beta[e, t] = bt
                for i in range(S):
                    o_ld[e, t, i] = lb[i, i].real

    return out_err, out_sel, out_beta, out_ld, out_vv, out_st
