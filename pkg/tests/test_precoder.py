import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import gaussian_matrix
from mbthp.channel import SystemGeometry
from mbthp.errors import ConfigInvalid, DimensionMismatch, RankDeficient
from mbthp.matkit import Permutation, lq_extended
from mbthp.modem import QAM16, QPSK, modulo
from mbthp.patterns import TransmitPattern, build_patterns
from mbthp.precoder import (EncodedFrame, PrecoderFilters, build_filters, detect, encode,
                            linear_precode, linear_receive, mb_select, mesc_score,
                            mmse_filters, receive, zf_filters)

seeds = st.integers(0, 2**32 - 1)
STRUCTURES = ["cTHP", "dTHP"]


def check_structure(f):
    assert np.allclose(np.diag(f.b), 1, atol=1e-12)
    assert np.all(np.triu(f.b, 1) == 0)
    assert np.all(f.l_diag > 0)
    np.testing.assert_allclose(f.g_diag, 1 / f.l_diag, rtol=1e-14)


def test_zf_identity():
    for structure in STRUCTURES:
        f = zf_filters(np.eye(3), structure)
        for m in (f.f_effective, f.b, np.diag(f.g_diag)):
            np.testing.assert_allclose(m, np.eye(3), atol=1e-15)
    assert zf_filters(np.eye(3), "cTHP").beta == pytest.approx(np.sqrt(3))
    assert zf_filters(np.eye(3), "dTHP").beta == 1.0


def test_zf_diagonal():
    f = zf_filters(np.diag([2.0, 4.0]), "cTHP")
    np.testing.assert_allclose(f.g_diag, [0.5, 0.25])
    np.testing.assert_allclose(f.b, np.eye(2), atol=1e-15)
    assert f.beta == pytest.approx(np.sqrt(1 / 4 + 1 / 16))


@pytest.mark.parametrize("structure", STRUCTURES)
@given(seed=seeds, n=st.integers(2, 8))
def test_zf_filter_invariants(structure, seed, n):
    h = gaussian_matrix(np.random.default_rng(seed), n)
    f = zf_filters(h, structure)
    check_structure(f)
    if structure == "dTHP":
        np.testing.assert_allclose(np.diag(f.g_diag) @ f.l, f.b, atol=1e-12)
    else:
        np.testing.assert_allclose(f.l @ np.diag(f.g_diag), f.b, atol=1e-12)


def test_mmse_identity_unit_noise():
    f = mmse_filters(np.eye(2), 1.0, "dTHP")
    np.testing.assert_allclose(f.l_diag, [np.sqrt(2)] * 2)
    np.testing.assert_allclose(f.g_diag, [1 / np.sqrt(2)] * 2)
    np.testing.assert_allclose(f.b, np.eye(2), atol=1e-15)
    assert np.isnan(mmse_filters(np.eye(2), 1.0, "cTHP").beta)


@given(seeds, st.integers(2, 8), st.floats(1e-3, 10))
def test_extended_factorization_identities(seed, n, noise_var):
    h = gaussian_matrix(np.random.default_rng(seed), n)
    sn = np.sqrt(noise_var)
    fac, q1, q2 = lq_extended(h, sn)
    np.testing.assert_allclose(fac.l @ q1, h, atol=1e-10)
    np.testing.assert_allclose(np.linalg.inv(fac.l), q2 / sn, atol=1e-9 * np.linalg.cond(fac.l))
    np.testing.assert_allclose(q1 @ q1.conj().T + q2 @ q2.conj().T, np.eye(n), atol=1e-10)
    check_structure(mmse_filters(h, noise_var, "cTHP"))


def test_mmse_tends_to_zf(rng):
    h = gaussian_matrix(rng, 4)
    for structure in STRUCTURES:
        a = zf_filters(h, structure)
        b = mmse_filters(h, 1e-14, structure)
        for x, y in ((a.b, b.b), (a.f_effective, b.f_effective), (a.l, b.l)):
            assert np.linalg.norm(x - y) <= 1e-6


def test_filter_input_errors():
    with pytest.raises(ConfigInvalid):
        zf_filters(np.eye(2), "xTHP")
    with pytest.raises(ConfigInvalid):
        build_filters(np.eye(2), "MF", "cTHP")
    with pytest.raises(DimensionMismatch):
        zf_filters(np.ones((2, 3)), "dTHP")
    with pytest.raises(ValueError):
        mmse_filters(np.eye(2), 0.0, "dTHP")
    with pytest.raises(RankDeficient):
        zf_filters(np.ones((2, 2)), "dTHP")


def _filters_with_l(l, structure="dTHP"):
    l = np.asarray(l, dtype=complex)
    d = np.real(np.diag(l))
    b = l / d[:, None] if structure == "dTHP" else l / d[None, :]
    return PrecoderFilters(l, b, np.eye(l.shape[0]), 1 / d, 1.0, d, structure, "ZF")


def test_encode_without_interference_passes_symbols():
    s = QPSK.points[[0, 3, 2]]
    frame = encode(s, _filters_with_l(np.eye(3)), QPSK)
    np.testing.assert_allclose(frame.x, s)
    np.testing.assert_allclose(frame.v, s)


def test_encode_forces_wrap():
    s = np.array([1 + 1j, 1 + 1j]) / np.sqrt(2)
    frame = encode(s, _filters_with_l([[1, 0], [3, 1]]), QPSK)
    expected = modulo(s[1] - 3 * s[0], QPSK.tau)
    assert frame.x[1] == pytest.approx(expected, abs=1e-14)
    # -sqrt(2) sits on the closed lower edge of the region and stays put
    assert frame.x[1] == pytest.approx(-np.sqrt(2) * (1 + 1j), abs=1e-14)
    assert abs(frame.x[1].real) <= QPSK.tau / 2 and abs(frame.x[1].imag) <= QPSK.tau / 2
    # the effective symbol carries the lattice offset
    np.testing.assert_allclose(frame.v, _filters_with_l([[1, 0], [3, 1]]).b @ frame.x)


@pytest.mark.parametrize("c", [QPSK, QAM16])
@pytest.mark.parametrize("structure", STRUCTURES)
def test_encode_output_inside_region(c, structure, rng):
    h = gaussian_matrix(rng, 6)
    f = zf_filters(h, structure)
    s = c.points[rng.integers(0, c.size, (6, 50))]
    frame = encode(s, f, c)
    assert np.all(np.abs(frame.x.real) <= c.tau / 2 + 1e-12)
    assert np.all(np.abs(frame.x.imag) <= c.tau / 2 + 1e-12)
    assert frame.tx.shape == (6, 50)


@pytest.mark.parametrize("c", [QPSK, QAM16])
@pytest.mark.parametrize("structure", STRUCTURES)
def test_noiseless_zf_roundtrip_every_branch(c, structure, rng):
    geom = SystemGeometry(8, (2, 2, 2, 2))
    h = gaussian_matrix(rng, 8)
    for pat in build_patterns(geom, 8):
        f = zf_filters(h[pat.index], structure, pat)
        labels = rng.integers(0, c.size, (8, 20))
        s_ordered = c.points[labels][pat.index]
        frame = encode(s_ordered, f, c)
        r = receive(frame, h[pat.index], np.zeros((8, 20)), f)
        np.testing.assert_array_equal(detect(r, f.perm, c), labels)


@pytest.mark.parametrize("structure", STRUCTURES)
def test_near_noiseless_mmse_roundtrip(structure, rng):
    c = QAM16
    errors = 0
    for _ in range(1000):
        h = gaussian_matrix(rng, 4)
        f = mmse_filters(h, 1e-12, structure)
        labels = rng.integers(0, c.size, 4)
        frame = encode(c.points[labels], f, c)
        r = receive(frame, h, np.zeros(4), f)
        errors += np.count_nonzero(detect(r, f.perm, c) != labels)
    assert errors == 0


def test_mmse_cthp_power_normalized(rng):
    h = gaussian_matrix(rng, 4)
    f = mmse_filters(h, 0.1, "cTHP")
    s = QPSK.points[rng.integers(0, 4, (4, 200))]
    frame = encode(s, f, QPSK)
    assert np.mean(np.sum(np.abs(frame.tx) ** 2, axis=0)) == pytest.approx(4.0, rel=1e-12)
    assert isinstance(frame, EncodedFrame) and frame.beta > 0


def test_dthp_noise_variance_per_layer(rng):
    h = gaussian_matrix(rng, 4)
    f = zf_filters(h, "dTHP")
    nv = 0.1
    noise = np.sqrt(nv / 2) * (rng.standard_normal((4, 100_000)) + 1j * rng.standard_normal((4, 100_000)))
    frame = encode(np.zeros((4, 100_000), dtype=complex), f, QPSK)
    r = receive(frame, h, noise, f)
    np.testing.assert_allclose(np.var(r, axis=1), nv / f.l_diag**2, rtol=0.05)



def test_mb_select_picks_lower_score():
    assert mesc_score([1, 1]) == 2
    assert mesc_score([2, 0.9]) == pytest.approx(1.4846, abs=1e-4)
    # natural order gives l = (sqrt2, 1/sqrt2), score 2.5; swapped gives (1, 1)
    h = np.array([[1.0, 1.0], [0.0, 1.0]])
    geom = SystemGeometry(2, (1, 1))
    pats = build_patterns(geom, 2)
    f, idx = mb_select(h, pats, "ZF", "dTHP")
    assert idx == 1 and f.perm.order == (1, 0)
    assert f.score == pytest.approx(2.0)
    np.testing.assert_allclose(f.l_diag, [1, 1])


def test_mb_select_single_branch_and_ties():
    pats = build_patterns(SystemGeometry(2, (1, 1)), 2)
    f, idx = mb_select(np.eye(2), pats[:1], "ZF", "cTHP")
    assert idx == 0
    f, idx = mb_select(np.eye(2), pats, "ZF", "cTHP")
    assert idx == 0  # equal scores keep the earliest branch


def test_mb_select_skips_rank_deficient_branch():
    # a pattern that duplicates nothing still sees a singular channel
    pats = build_patterns(SystemGeometry(2, (1, 1)), 2)
    with pytest.raises(RankDeficient):
        mb_select(np.ones((2, 2)), pats, "ZF", "dTHP")
    with pytest.raises(ValueError):
        mb_select(np.eye(2), [], "ZF", "dTHP")


@pytest.mark.parametrize("mode", ["ZF", "MMSE"])
@given(seed=seeds)
def test_mb_select_is_minimum(mode, seed):
    h = gaussian_matrix(np.random.default_rng(seed), 8)
    pats = build_patterns(SystemGeometry(8, (2, 2, 2, 2)), 8)
    f, idx = mb_select(h, pats, mode, "dTHP", 0.1)
    scores = [build_filters(h[p.index], mode, "dTHP", 0.1).score for p in pats]
    assert f.score == min(scores) and scores.index(min(scores)) == idx
    assert f.score <= scores[0]


def test_linear_identity():
    lin = linear_precode(np.eye(3), "ZF")
    np.testing.assert_allclose(lin.p, np.eye(3), atol=1e-15)
    assert lin.beta == pytest.approx(1.0)


@given(seeds, st.integers(2, 8))
def test_linear_zf_inverts(seed, n):
    h = gaussian_matrix(np.random.default_rng(seed), n)
    lin = linear_precode(h, "ZF")
    np.testing.assert_allclose(h @ lin.p, np.eye(n), atol=1e-10 * np.linalg.cond(h))


def test_linear_mmse_limits_and_formula(rng):
    h = gaussian_matrix(rng, 4)
    assert np.linalg.norm(linear_precode(h, "MMSE", 1e-14).p - linear_precode(h, "ZF").p) <= 1e-6
    nv = 0.3
    ref = h.conj().T @ np.linalg.inv(h @ h.conj().T + nv * np.eye(4))
    np.testing.assert_allclose(linear_precode(h, "MMSE", nv).p, ref, atol=1e-12)
    with pytest.raises(RankDeficient):
        linear_precode(np.ones((2, 2)), "ZF")


def test_linear_receive_noiseless(rng):
    h = gaussian_matrix(rng, 4)
    lin = linear_precode(h, "ZF")
    s = QAM16.points[rng.integers(0, 16, (4, 10))]
    np.testing.assert_allclose(linear_receive(lin, s, h, 0.0), s, atol=1e-10)
