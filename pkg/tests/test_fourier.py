import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pwfnet import autodiff as ad
from pwfnet import fourier


def naive_dft2(x):
    """O(N^4) orthonormal DFT, written from the definition."""
    H, W = x.shape
    out = np.zeros((H, W), dtype=complex)
    for v in range(H):
        for u in range(W):
            s = 0j
            for n in range(H):
                for m in range(W):
                    s += x[n, m] * np.exp(-2j * np.pi * (v * n / H + u * m / W))
            out[v, u] = s / np.sqrt(H * W)
    return out


def test_fft2_matches_naive_dft(rng):
    x = rng.random((8, 8))
    ref = naive_dft2(x)
    s = fourier.fft2(x)
    assert np.max(np.abs(s.bins - ref[:, :5])) <= 1e-10
    assert np.max(np.abs(fourier.full_plane(s) - ref)) <= 1e-10


def test_full_plane_odd_width(rng):
    x = rng.random((5, 7))
    np.testing.assert_allclose(fourier.full_plane(fourier.fft2(x)), naive_dft2(x), atol=1e-12)


def test_round_trip_non_power_of_two(rng):
    x = rng.random((60, 92))
    assert np.max(np.abs(fourier.ifft2(fourier.fft2(x)) - x)) <= 1e-10


def test_parseval(rng):
    x = rng.standard_normal((3, 60, 92))
    assert fourier.energy(fourier.fft2(x)) == pytest.approx(np.sum(x * x), rel=1e-12)


def test_dc_bin_is_scaled_mean():
    x = np.full((4, 6), 0.5)
    s = fourier.fft2(x)
    assert s.bins[0, 0].real == pytest.approx(0.5 * np.sqrt(24))
    assert np.max(np.abs(s.bins.ravel()[1:])) < 1e-15


def test_non_hermitian_spectrum_rejected():
    s = fourier.fft2(np.zeros((4, 4)))
    s.bins[0, 0] = 1j
    with pytest.raises(fourier.HermitianError):
        fourier.ifft2(s)


def test_window_equal_to_size_is_global(rng):
    x = rng.random((2, 16, 24))
    ws = fourier.window_fft2(x, (16, 24))
    np.testing.assert_array_equal(ws.bins[..., 0, 0, :, :], fourier.fft2(x).bins)


def test_window_tiles_and_padding(rng):
    x = rng.random((10, 13))
    ws = fourier.window_fft2(x, 4)
    assert ws.padded == (12, 16)
    assert ws.bins.shape == (3, 4, 4, 3)
    np.testing.assert_allclose(fourier.window_ifft2(ws), x, atol=1e-13)
    # the tile at grid (1, 2) is the plain transform of that block
    np.testing.assert_allclose(ws.bins[1, 2], fourier.fft2(x[4:8, 8:12]).bins, atol=1e-14)


def test_half_plane_weights():
    np.testing.assert_array_equal(fourier.half_plane_weights(2, 8)[0], [1, 2, 2, 2, 1])
    np.testing.assert_array_equal(fourier.half_plane_weights(2, 7)[0], [1, 2, 2, 2])


def test_radial_mask_8x8_counts():
    m = fourier.radial_mask(8, 8, 0.5)
    low = {(int(v), int(u)) for v, u in zip(*np.nonzero(~m))}
    assert low == {(0, 0), (0, 1), (0, 2), (1, 0), (7, 0), (1, 1), (7, 1), (2, 0), (6, 0)}
    assert m.sum() == 31
    assert not fourier.radial_mask(8, 8, 1.0).any()
    assert fourier.radial_mask(8, 8, 0.0).sum() == 8 * 5 - 1


def test_fft_macs():
    assert fourier.fft_macs(8, 8) == 2.5 * 64 * 6
    assert fourier.fft_macs(1, 1) == 0


def test_fft2_ri_layout_and_inverse(rng):
    x = rng.random((2, 3, 6, 8))
    z = fourier.fft2_ri(ad.Tensor(x)).data
    s = fourier.fft2(x).bins
    np.testing.assert_allclose(z[:, :3], s.real, atol=1e-15)
    np.testing.assert_allclose(z[:, 3:], s.imag, atol=1e-15)
    back = fourier.ifft2_ri(ad.Tensor(z), (6, 8)).data
    np.testing.assert_allclose(back, x, atol=1e-13)


def test_fft2_ri_windowed_matches_window_fft2(rng):
    x = rng.random((1, 2, 8, 12))
    z = fourier.fft2_ri(ad.Tensor(x), (4, 6)).data
    ws = fourier.window_fft2(x, (4, 6)).bins         # (1, 2, 2, 2, 4, 4)
    np.testing.assert_allclose(z[:, :2, 4:8, 4:8], ws[:, :, 1, 1].real, atol=1e-15)
    np.testing.assert_allclose(z[:, 2:, 0:4, 0:4], ws[:, :, 0, 0].imag, atol=1e-15)


def test_fft2_ri_window_clipped_to_map(rng):
    x = rng.random((1, 1, 8, 8))
    a = fourier.fft2_ri(ad.Tensor(x), 64).data
    b = fourier.fft2_ri(ad.Tensor(x)).data
    np.testing.assert_array_equal(a, b)


def test_fft2_ri_indivisible_rejected():
    with pytest.raises(ValueError):
        fourier.fft2_ri(ad.Tensor(np.zeros((1, 1, 6, 6))), 4)


@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2 ** 31 - 1))
def test_property_round_trip_and_parseval(H, W, seed):
    x = np.random.default_rng(seed).standard_normal((H, W))
    s = fourier.fft2(x)
    np.testing.assert_allclose(fourier.ifft2(s), x, atol=1e-12)
    assert fourier.energy(s) == pytest.approx(np.sum(x * x), rel=1e-10, abs=1e-12)


@given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 2 ** 31 - 1))
def test_property_fft2_ri_adjoint(H, W, seed):
    # <F x, y> with half-plane weights equals <x, F^H y>: check the vjp is the transpose
    r = np.random.default_rng(seed)
    x = ad.Tensor(r.standard_normal((1, 1, H, W)), requires_grad=True)
    g = r.standard_normal((1, 2, H, W // 2 + 1))
    with ad.Tape() as tape:
        y = ad.inner(fourier.fft2_ri(x), g)
    grads = ad.backward(tape, y)
    eps = 1e-6
    d = r.standard_normal(x.shape)
    fp = np.sum(fourier.fft2_ri(ad.Tensor(x.data + eps * d)).data * g)
    fm = np.sum(fourier.fft2_ri(ad.Tensor(x.data - eps * d)).data * g)
    assert np.sum(grads[id(x)] * d) == pytest.approx((fp - fm) / (2 * eps), rel=1e-6, abs=1e-8)
