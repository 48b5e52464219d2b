"""Pure numpy implementations of the hot kernels.

Selected automatically when the compiled ``_core`` extension is missing, or
forced with ``MBTHP_PURE_PYTHON=1``. Signatures and semantics match
``_core.pyx`` exactly.
"""
import numpy as np

from mbthp.errors import RankDeficient

RANK_TOL = 1e-12


def lq_factor(a):
    """LQ factorization ``a = l @ q`` with a real positive diagonal on ``l``.

    Parameters
    ----------
    a : (m, n) complex array, m <= n

    Returns
    -------
    l : (m, m) lower triangular, exact zeros above the diagonal
    q : (m, n) with orthonormal rows
    """
    a = np.asarray(a, dtype=np.complex128)
    m, n = a.shape
    if m > n:
        raise ValueError(f"lq needs rows <= cols, got {a.shape}")
    tol = RANK_TOL * np.linalg.norm(a)
    qr_q, qr_r = np.linalg.qr(a.conj().T)
    diag = np.diag(qr_r)
    mags = np.abs(diag)
    bad = np.flatnonzero(~(mags > tol))
    if bad.size:
        raise RankDeficient(f"pivot {bad[0]} below {tol:.3e}")
    phase = diag / mags
    qr_r = qr_r * phase.conj()[:, None]
    qr_q = qr_q * phase[None, :]
    l = np.tril(qr_r.conj().T)
    l[np.diag_indices(m)] = mags
    return l, np.ascontiguousarray(qr_q.conj().T)


def modulo(x, tau):
    x = np.asarray(x)
    return (x - np.floor(x.real / tau + 0.5) * tau
            - 1j * np.floor(x.imag / tau + 0.5) * tau)


def thp_feedback(lmat, s, tau, centralized):
    """Successive cancellation with modulo reduction.

    The feedback matrix is derived from ``lmat``: ``G L`` for the
    decentralized structure and ``L G`` for the centralized one, with
    ``G = diag(lmat)^-1``.

    Returns ``(x, v)`` where ``v = B x`` is the effective (perturbed) data.
    """
    lmat = np.asarray(lmat, dtype=np.complex128)
    s = np.asarray(s, dtype=np.complex128)
    squeeze = s.ndim == 1
    if squeeze:
        s = s[:, None]
    ldiag = np.real(np.diag(lmat))
    if centralized:
        b = lmat / ldiag[None, :]
    else:
        b = lmat / ldiag[:, None]
    x = np.zeros_like(s)
    v = np.empty_like(s)
    for i in range(s.shape[0]):
        w = s[i] - b[i, :i] @ x[:i]
        x[i] = modulo(w, tau)
        v[i] = s[i] + (x[i] - w)
    if squeeze:
        return x[:, 0], v[:, 0]
    return x, v


def _extended(h, sigma_n, mmse):
    if not mmse:
        return h
    n = h.shape[0]
    return np.hstack([h, sigma_n * np.eye(n)])


def simulate_thp_batch(h_true, h_est, perms, labels, noise, sigma_n,
                       mmse, centralized, points, levels, axis_gray,
                       bits_per_axis, tau):
    """Run the THP link for a batch of trials and several noise levels.

    Arrays are indexed ``[trial, antenna, symbol]`` in physical antenna
    order. ``noise`` has unit variance and is scaled by each ``sigma_n``.

    Returns ``(bit_errors, selected, beta, ldiag, v_var, status)``, each
    indexed ``[point, trial]`` (``ldiag`` has a trailing stream axis).
    ``status`` is 1 where every branch was rank deficient.
    """
    h_true = np.asarray(h_true, dtype=np.complex128)
    h_est = np.asarray(h_est, dtype=np.complex128)
    perms = np.asarray(perms, dtype=np.int64)
    sigma_n = np.asarray(sigma_n, dtype=np.float64)
    n_trials, n_streams, n_sym = labels.shape
    n_pts = sigma_n.size
    bit_errors = np.zeros((n_pts, n_trials), dtype=np.int64)
    selected = np.zeros((n_pts, n_trials), dtype=np.int64)
    beta = np.ones((n_pts, n_trials))
    ldiag = np.zeros((n_pts, n_trials, n_streams))
    v_var = np.zeros((n_pts, n_trials))
    status = np.zeros((n_pts, n_trials), dtype=np.int8)

    lev0 = levels[0]
    spacing = levels[1] - levels[0]
    m_axis = levels.size

    for e in range(n_pts):
        sn = sigma_n[e]
        for t in range(n_trials):
            best = None
            for b in range(perms.shape[0]):
                a = _extended(h_est[t][perms[b]], sn, mmse)
                try:
                    lmat, q = lq_factor(a)
                except RankDeficient:
                    continue
                ld = np.real(np.diag(lmat))
                score = np.sum(1.0 / ld**2)
                if best is None or score < best[0]:
                    best = (score, b, lmat, q, ld)
            if best is None:
                status[e, t] = 1
                continue
            _, b, lmat, q, ld = best
            perm = perms[b]
            lab = labels[t][perm]
            s = points[lab]
            x, v = thp_feedback(lmat, s, tau, centralized)
            f_eff = q[:, :n_streams].conj().T
            if centralized:
                u = f_eff @ (x / ld[:, None])
                if mmse:
                    bt = np.sqrt(np.sum(np.abs(u) ** 2) / (n_sym * n_streams))
                else:
                    bt = np.sqrt(np.sum(1.0 / ld**2))
                tx = u / bt
            else:
                bt = 1.0
                tx = f_eff @ x
            y = h_true[t][perm] @ tx + sn * noise[t][perm]
            r = bt * y if centralized else y / ld[:, None]
            r = modulo(r, tau)
            ii = np.clip(np.floor((r.real - lev0) / spacing + 0.5), 0, m_axis - 1)
            qq = np.clip(np.floor((r.imag - lev0) / spacing + 0.5), 0, m_axis - 1)
            det = (axis_gray[ii.astype(np.int64)] << bits_per_axis) | axis_gray[qq.astype(np.int64)]
            diff = np.bitwise_xor(det, lab)
            errs = 0
            for k in range(2 * bits_per_axis):
                errs += int(np.count_nonzero((diff >> k) & 1))
            bit_errors[e, t] = errs
            selected[e, t] = b
            beta[e, t] = bt
            ldiag[e, t] = ld
            v_var[e, t] = np.mean(np.abs(v) ** 2)
    return bit_errors, selected, beta, ldiag, v_var, status
