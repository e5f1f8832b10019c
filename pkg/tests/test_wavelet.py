import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pwfnet import autodiff as ad
from pwfnet import wavelet

FAMS = sorted(wavelet.FAMILIES)


def naive_dwt2(x, fam):
    """Direct double loop over the correlation definition (oracle)."""
    H, W = x.shape
    L = fam.length
    out = {}
    filt = {"l": fam.analysis_lo, "h": fam.analysis_hi}
    for band in ("ll", "lh", "hl", "hh"):
        fw, fh = filt[band[0]], filt[band[1]]
        y = np.zeros((H // 2, W // 2))
        for i in range(H // 2):
            for j in range(W // 2):
                s = 0.0
                for p in range(L):
                    for q in range(L):
                        s += fh[p] * fw[q] * x[(2 * i + p) % H, (2 * j + q) % W]
                y[i, j] = s
        out[band] = y
    return out


@pytest.mark.parametrize("name", FAMS)
def test_dwt2_matches_naive_loop(name, rng):
    fam = wavelet.filter_bank(name)
    x = rng.random((8, 10))
    sb = wavelet.dwt2(x, fam)
    ref = naive_dwt2(x, fam)
    for b in wavelet.BANDS:
        np.testing.assert_allclose(getattr(sb, b), ref[b], atol=1e-13)


def test_haar_by_hand():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    sb = wavelet.dwt2(x, "haar")
    # orthonormal Haar on a 2x2 block: sums and differences over 2
    assert sb.ll[0, 0] == pytest.approx(5.0)
    assert sb.hl[0, 0] == pytest.approx((1 - 2 + 3 - 4) / 2)   # high along width
    assert sb.lh[0, 0] == pytest.approx((1 + 2 - 3 - 4) / 2)   # high along height
    assert sb.hh[0, 0] == pytest.approx((1 - 2 - 3 + 4) / 2)


@pytest.mark.parametrize("name", FAMS)
def test_perfect_reconstruction_levels(name, rng):
    x = rng.random((3, 64, 64))
    for lv in range(1, 5):
        pyr = wavelet.pyramid(x, name, lv)
        assert pyr.levels == lv
        assert np.max(np.abs(wavelet.reconstruct(pyr) - x)) <= 1e-8


@pytest.mark.parametrize("name", [n for n in FAMS if wavelet.FAMILIES[n].orthogonal])
def test_orthogonal_filters_and_energy(name, rng):
    fam = wavelet.FAMILIES[name]
    h = fam.analysis_lo
    assert np.sum(h) == pytest.approx(np.sqrt(2), abs=1e-14)
    for s in range(0, fam.length // 2):
        want = 1.0 if s == 0 else 0.0
        assert np.dot(h[:len(h) - 2 * s], h[2 * s:]) == pytest.approx(want, abs=1e-14)
    x = rng.standard_normal((16, 16))
    sb = wavelet.dwt2(x, fam)
    e = sum(np.sum(getattr(sb, b) ** 2) for b in wavelet.BANDS)
    assert e == pytest.approx(np.sum(x * x), rel=1e-13)


def test_sym4_vanishing_moments():
    g = wavelet.FAMILIES["sym4"].analysis_hi
    k = np.arange(8.0)
    for p in range(4):
        assert abs(np.dot(g, k ** p)) < 1e-9 * max(1.0, np.sum(np.abs(k ** p)))


def test_biorthogonal_pair_is_not_orthogonal_but_reconstructs(rng):
    fam = wavelet.FAMILIES["bior2.2"]
    assert not fam.orthogonal
    x = rng.random((12, 20))
    np.testing.assert_allclose(wavelet.idwt2(wavelet.dwt2(x, fam), fam), x, atol=1e-13)


def test_vertical_streak_lands_in_hl():
    x = np.zeros((32, 32))
    x[:, 13] = 1.0
    sb = wavelet.dwt2(x, "haar")
    e = {b: np.sum(getattr(sb, b) ** 2) for b in ("lh", "hl", "hh")}
    assert e["hl"] > 0 and e["lh"] == pytest.approx(0.0, abs=1e-20) and e["hh"] == pytest.approx(0.0, abs=1e-20)


def test_odd_sizes_round_trip(rng):
    x = rng.random((2, 13, 9))
    sb = wavelet.dwt2(x, "db2")
    assert sb.pad == (1, 1)
    np.testing.assert_allclose(wavelet.idwt2(sb, "db2"), x, atol=1e-12)


def test_aliases_and_unknown():
    assert wavelet.filter_bank("Daubechies").name == "db2"
    assert wavelet.filter_bank("biorthogonal").name == "bior2.2"
    with pytest.raises(ValueError):
        wavelet.filter_bank("mexican-hat")


def test_pyramid_too_small():
    with pytest.raises(ValueError):
        wavelet.pyramid(np.zeros((4, 4)), "haar", 3)


@pytest.mark.parametrize("name", FAMS)
def test_kernel_ops_match_separable(name, rng):
    x = rng.random((2, 3, 16, 12))
    K = ad.Tensor(wavelet.analysis_kernels(name))
    y = wavelet.analysis_op(ad.Tensor(x), K).data.reshape(2, 3, 4, 8, 6)
    sb = wavelet.dwt2(x, name)
    for s, b in enumerate(wavelet.BANDS):
        np.testing.assert_allclose(y[:, :, s], getattr(sb, b), atol=1e-13)
    back = wavelet.synthesis_op(ad.Tensor(y.reshape(2, 12, 8, 6)), ad.Tensor(wavelet.synthesis_kernels(name)))
    np.testing.assert_allclose(back.data, x, atol=1e-12)


@given(arrays(np.float64, st.tuples(st.sampled_from([2, 4, 6, 8]), st.sampled_from([2, 4, 10])),
              elements=st.floats(-10, 10)),
       st.sampled_from(FAMS))
def test_property_reconstruction_any_even_shape(x, name):
    sb = wavelet.dwt2(x, name)
    np.testing.assert_allclose(wavelet.idwt2(sb, name), x, atol=1e-10)


@given(st.sampled_from(FAMS), st.floats(-3, 3), st.integers(0, 2 ** 31 - 1))
def test_property_linearity(name, a, seed):
    r = np.random.default_rng(seed)
    x, y = r.random((8, 8)), r.random((8, 8))
    lhs = wavelet.dwt2(a * x + y, name)
    sx, sy = wavelet.dwt2(x, name), wavelet.dwt2(y, name)
    for b in wavelet.BANDS:
        np.testing.assert_allclose(getattr(lhs, b), a * getattr(sx, b) + getattr(sy, b), atol=1e-12)
