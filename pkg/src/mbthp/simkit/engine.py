"""Monte-Carlo sweep engine.

Trials are grouped into fixed-size units of ``batch_trials``. Each trial
draws its channel, CSI error, labels and unit-variance noise from its own
substreams, and the same draws are reused at every Eb/N0 point. Units may
run in worker processes. Their partial sums are merged in unit order, so
the output does not depend on the worker count.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from mbthp import _kernels
from mbthp.channel import (STREAM_CHANNEL, STREAM_CSI, STREAM_DATA, SystemGeometry,
                           complex_gaussian, exponential_correlation, hermitian_sqrt,
                           substream)
from mbthp.errors import RankDeficient
from mbthp.metrics import error_covariance, sum_rate
from mbthp.modem import get_constellation, slice_labels
from mbthp.patterns import build_patterns
from mbthp.precoder import encode, mb_select, receive
from mbthp.simkit.config import ExperimentConfig, ResultRow

__all__ = ["noise_variance", "run_ber", "run_sumrate", "run_covariance_check",
           "CovarianceCheck", "trial_inputs"]

log = logging.getLogger(__name__)

MAX_REDRAWS = 16


def noise_variance(ebno_db: float, geometry: SystemGeometry, bits_per_symbol: int) -> float:
    """Per-antenna noise variance for unit-energy symbols at the given Eb/N0."""
    return geometry.num_rx / (geometry.num_tx * bits_per_symbol * 10.0 ** (ebno_db / 10.0))


def _corr_root(cfg: ExperimentConfig):
    if cfg.correlation_r == 0:
        return None
    return hermitian_sqrt(exponential_correlation(cfg.num_tx, cfg.correlation_r))


def trial_inputs(cfg: ExperimentConfig, trial: int, attempt: int = 0, root=None):
    """``(h_true, h_est, labels, noise)`` for one trial, physical antenna order."""
    s = cfg.geometry.streams
    const = get_constellation(cfg.modulation)
    if cfg.channel_model == "identity":
        h = np.eye(s, dtype=np.complex128)
    else:
        h = complex_gaussian(substream(cfg.master_seed, STREAM_CHANNEL, trial, attempt), (s, s))
        if root is not None:
            h = h @ root
    if cfg.csi_error_var > 0:
        rng = substream(cfg.master_seed, STREAM_CSI, trial, attempt)
        h_est = h + complex_gaussian(rng, (s, s), cfg.csi_error_var)
    else:
        h_est = h
    rng = substream(cfg.master_seed, STREAM_DATA, trial)
    labels = rng.integers(0, const.size, (s, cfg.packet_len))
    noise = complex_gaussian(rng, (s, cfg.packet_len))
    return h, h_est, labels, noise


def _sigmas(cfg: ExperimentConfig) -> np.ndarray:
    const = get_constellation(cfg.modulation)
    return np.sqrt([noise_variance(e, cfg.geometry, const.bits_per_symbol)
                    if e != math.inf else 0.0 for e in cfg.ebno_db])


def _linear_batch(cfg, h_true, h_est, labels, noise, sigma_n):
    """Batched linear precoding; same output layout as the THP kernel."""
    const = get_constellation(cfg.modulation)
    pts = const.points
    n_t, s = h_true.shape[0], h_true.shape[1]
    mmse = cfg.precoder_spec.mode == "MMSE"
    eye = np.eye(s)
    n_pts = sigma_n.size
    bit_errors = np.zeros((n_pts, n_t), dtype=np.int64)
    rates = np.zeros((n_pts, n_t))
    status = np.zeros((n_pts, n_t), dtype=np.int8)
    sym = pts[labels]
    for e, sn in enumerate(sigma_n):
        gram = h_est @ np.conj(np.swapaxes(h_est, 1, 2))
        if mmse:
            gram = gram + sn**2 * eye
        with np.errstate(all="ignore"):
            try:
                p = np.conj(np.swapaxes(np.linalg.solve(gram, h_est), 1, 2))
            except np.linalg.LinAlgError:
                p = np.full_like(h_est, np.nan)
        bad = ~np.all(np.isfinite(p), axis=(1, 2))
        status[e, bad] = 1
        p[bad] = 0.0
        beta = np.sqrt(np.sum(np.abs(p) ** 2, axis=(1, 2)) / s)
        beta[bad] = 1.0
        eff = h_true @ p
        r = eff @ sym + beta[:, None, None] * sn * noise
        det = slice_labels(r, const)
        bit_errors[e] = np.bitwise_count(det ^ labels).sum(axis=(1, 2))
        sig = np.abs(np.diagonal(eff, axis1=1, axis2=2)) ** 2
        interf = np.sum(np.abs(eff) ** 2, axis=2) - sig
        with np.errstate(divide="ignore"):
            sinr = sig / (interf + (beta**2 * sn**2)[:, None])
        rates[e] = np.sum(np.log2(1.0 + sinr), axis=1)
    zeros = np.zeros((n_pts, n_t), dtype=np.int64)
    return bit_errors, zeros, rates, status


def _thp_rates(scheme, sigma_n, beta, ldiag):
    nv = (sigma_n**2)[:, None]
    if scheme == "MMSE-cTHP":
        # effective perturbed-signal variance beta^2 sigma_n^2 sigma_s^2
        return sum_rate(scheme, nv, ldiag, sigma_v_sq=beta**2 * nv)
    return sum_rate(scheme, nv, ldiag)


def _simulate(cfg, perms, h_true, h_est, labels, noise, sigma_n):
    spec = cfg.precoder_spec
    if not spec.is_thp:
        return _linear_batch(cfg, h_true, h_est, labels, noise, sigma_n)
    const = get_constellation(cfg.modulation)
    bit_errors, selected, beta, ldiag, _, status = _kernels.simulate_thp_batch(
        h_true, h_est, perms, labels, noise, sigma_n, spec.mode == "MMSE",
        spec.structure == "cTHP", const.points, const.levels, const.axis_gray,
        const.bits_per_axis, const.tau)
    rates = _thp_rates(spec.scheme, sigma_n, beta, ldiag)
    return bit_errors, selected, rates, status


@dataclass
class _UnitResult:
    bit_errors: np.ndarray
    rate_sum: np.ndarray
    selected_sum: np.ndarray
    redraws: int


def _perms(cfg):
    pats = build_patterns(cfg.geometry, cfg.effective_branches)
    return np.array([p.index for p in pats], dtype=np.int64)


def _run_unit(cfg: ExperimentConfig, unit: int) -> _UnitResult:
    first = unit * cfg.batch_trials
    last = min(cfg.trials, first + cfg.batch_trials)
    root = _corr_root(cfg)
    sigma_n = _sigmas(cfg)
    perms = _perms(cfg)
    inputs = [trial_inputs(cfg, t, 0, root) for t in range(first, last)]
    h_true, h_est, labels, noise = (np.stack(a) for a in zip(*inputs))
    bit_errors, selected, rates, status = _simulate(
        cfg, perms, h_true, h_est, labels, noise, sigma_n)
    redraws = 0
    for k in np.flatnonzero(status.any(axis=0)):
        trial = first + int(k)
        for attempt in range(1, MAX_REDRAWS + 1):
            redraws += 1
            one = trial_inputs(cfg, trial, attempt, root)
            res = _simulate(cfg, perms, *(a[None] for a in one), sigma_n)
            if not res[3].any():
                bit_errors[:, k], selected[:, k], rates[:, k] = res[0][:, 0], res[1][:, 0], res[2][:, 0]
                break
        else:
            raise RankDeficient(f"trial {trial}: no full-rank channel after {MAX_REDRAWS} redraws")
    if redraws:
        log.warning("unit %d: %d rank-deficient channel redraws", unit, redraws)
    return _UnitResult(bit_errors.sum(axis=1), rates.sum(axis=1),
                       (selected + 1).sum(axis=1), redraws)


def _run_units(cfg: ExperimentConfig) -> list[_UnitResult]:
    n_units = -(-cfg.trials // cfg.batch_trials)
    if cfg.workers == 1 or n_units == 1:
        return [_run_unit(cfg, u) for u in range(n_units)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(_run_unit, [cfg] * n_units, range(n_units)))


def _sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    units = _run_units(cfg)
    spec = cfg.precoder_spec
    const = get_constellation(cfg.modulation)
    bits_sent = cfg.trials * cfg.geometry.streams * cfg.packet_len * const.bits_per_symbol
    rows = []
    for e, ebno in enumerate(cfg.ebno_db):
        errors = 0
        rate_sum = 0.0
        sel_sum = 0
        for u in units:
            errors += int(u.bit_errors[e])
            rate_sum += float(u.rate_sum[e])
            sel_sum += int(u.selected_sum[e])
        rows.append(ResultRow(
            precoder=spec.name, structure=spec.structure, mode=spec.mode,
            branches=cfg.effective_branches, modulation=const.name, ebno_db=float(ebno),
            trials=cfg.trials, bits_sent=bits_sent, bit_errors=errors,
            ber=errors / bits_sent, mean_sum_rate=rate_sum / cfg.trials,
            mean_selected_branch=(sel_sum / cfg.trials) if spec.is_thp else 1.0,
            corr_r=float(cfg.correlation_r), csi_err_var=float(cfg.csi_error_var),
            seed=cfg.master_seed, redraws=sum(u.redraws for u in units)))
    return rows


def run_ber(cfg: ExperimentConfig) -> list[ResultRow]:
    """One row per Eb/N0 point with the bit error count over all trials."""
    return _sweep(cfg)


def run_sumrate(cfg: ExperimentConfig) -> list[ResultRow]:
    """Same sweep as :func:`run_ber`; ``mean_sum_rate`` is the quantity of interest.

    THP rates use the selected branch's diagonal (and, for MMSE-cTHP, its
    per-frame power normalization). Linear rates use the per-stream SINR.
    """
    return _sweep(cfg)


@dataclass(frozen=True)
class CovarianceCheck:
    scheme: str
    ebno_db: float
    samples: int
    empirical: np.ndarray  # mean per-layer error variance
    analytic: np.ndarray  # mean per-layer analytic variance
    ratio: np.ndarray  # mean per-layer ratio empirical / analytic

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.ratio - 1.0)))


def run_covariance_check(cfg: ExperimentConfig) -> list[CovarianceCheck]:
    """Compare measured and analytic per-layer error variance on noise-only frames.

    Each trial selects filters on its channel, sends an all-zero frame and
    measures the variance of the scaled receiver noise on every layer over
    the packet. A random data frame is encoded first to fix the MMSE-cTHP
    power normalization. Ratios are averaged over trials.
    """
    spec = cfg.precoder_spec
    if not spec.is_thp:
        raise ValueError("covariance check applies to THP precoders only")
    const = get_constellation(cfg.modulation)
    pats = build_patterns(cfg.geometry, cfg.effective_branches)
    root = _corr_root(cfg)
    out = []
    for ebno, sn in zip(cfg.ebno_db, _sigmas(cfg)):
        nv = float(sn**2)
        s = cfg.geometry.streams
        emp = np.zeros(s)
        ana = np.zeros(s)
        ratio = np.zeros(s)
        for t in range(cfg.trials):
            h, h_est, labels, noise = trial_inputs(cfg, t, 0, root)
            filt, _ = mb_select(h_est, pats, spec.mode, spec.structure, nv)
            perm = filt.perm.index
            data = encode(const.points[labels[perm]], filt, const)
            silent = data.__class__(np.zeros_like(data.x), np.zeros_like(data.tx),
                                    np.zeros_like(data.v), 0.0, data.beta)
            r = receive(silent, h[perm], sn * noise[perm], filt)
            var = np.mean(np.abs(r) ** 2, axis=1)
            sigma_v_sq = data.beta**2 * nv if spec.scheme == "MMSE-cTHP" else None
            rep = error_covariance(filt.l_diag, nv, 1.0, sigma_v_sq, spec.scheme)
            emp += var
            ana += rep.diag
            ratio += var / rep.diag
        n = cfg.trials
        out.append(CovarianceCheck(spec.scheme, float(ebno), n * cfg.packet_len,
                                   emp / n, ana / n, ratio / n))
    return out
