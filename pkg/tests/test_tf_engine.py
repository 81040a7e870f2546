import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burstfd.errors import PreconditionError
from burstfd.signal_pre import AnalyticSignal
from burstfd.tf_engine import (GridSpec, KernelSpec, TFDMatrix, WindowSpec, cost_report,
                               make_window, paper_kernel, separable_tfd_efficient,
                               separable_tfd_full, time_marginal, wigner_ville)


def rand_signal(n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def kernel(lag_len, dop_len, lag_family="hanning", dop_family="tukey", alpha=0.9):
    return KernelSpec(WindowSpec(lag_family, lag_len), WindowSpec(dop_family, dop_len, alpha))


def rel_err(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


# ---------------------------------------------------------------- windows


def test_window_examples():
    np.testing.assert_allclose(make_window(WindowSpec("hanning", 3)), [0, 1, 0], atol=1e-15)
    np.testing.assert_array_equal(make_window(WindowSpec("tukey", 7, 0.0)), np.ones(7))
    for length in (5, 31, 61):
        np.testing.assert_allclose(make_window(WindowSpec("tukey", length, 1.0)),
                                   make_window(WindowSpec("hanning", length)), atol=1e-12)


def test_window_hann_closed_form():
    L = 61
    n = np.arange(L)
    np.testing.assert_allclose(make_window(WindowSpec("hanning", L)),
                               0.5 - 0.5 * np.cos(2 * np.pi * n / (L - 1)), atol=1e-14)


def test_window_rejects_even_length_and_bad_param():
    with pytest.raises(PreconditionError):
        make_window(WindowSpec("hanning", 60))
    with pytest.raises(PreconditionError):
        make_window(WindowSpec("tukey", 61, 1.5))
    with pytest.raises(PreconditionError):
        make_window(WindowSpec("kaiser", 61))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["hanning", "tukey", "rectangular"]), st.integers(1, 50),
       st.floats(0, 1))
def test_window_symmetric_and_normalised(family, half, alpha):
    w = make_window(WindowSpec(family, 2 * half + 1, alpha))
    np.testing.assert_allclose(w, w[::-1], atol=1e-14)
    assert w[half] == pytest.approx(1.0)


# ---------------------------------------------------------------- WVD


@pytest.mark.parametrize("n,k", [(64, 10), (65, 7), (128, 40)])
def test_wvd_complex_exponential_concentration(n, k):
    z = np.exp(2j * np.pi * k * np.arange(n) / n)
    w = wigner_ville(z)
    # bin b sits at b / (2n) cycles/sample, so frequency k/n is bin 2k
    interior = slice(n // 8, n - n // 8)
    assert np.all(np.argmax(w.values[interior], axis=1) == 2 * k)


@pytest.mark.parametrize("n", [31, 64, 100])
def test_wvd_energy_and_realness(n):
    z = rand_signal(n, n)
    w = wigner_ville(AnalyticSignal(z, 8.0))
    total = w.values.sum() * w.freq_resolution / w.slice_rate
    energy = np.sum(np.abs(z) ** 2) / 8.0
    assert abs(total - energy) <= 1e-8 * energy
    assert w.imag_residue < 1e-10
    np.testing.assert_allclose(time_marginal(w), np.abs(z) ** 2, rtol=1e-10, atol=1e-12)


def test_wvd_time_marginal_of_exponential_is_constant():
    n = 64
    w = wigner_ville(np.exp(2j * np.pi * 5 * np.arange(n) / n))
    np.testing.assert_allclose(time_marginal(w), 1.0, atol=1e-8)


# ---------------------------------------------------------------- full separable TFD


@pytest.mark.parametrize("n", [33, 65])
def test_identity_kernel_is_wvd(n):
    # rectangular windows spanning every lag and Doppler bin (odd n covers all)
    k = KernelSpec(WindowSpec("rectangular", n), WindowSpec("rectangular", n))
    z = rand_signal(n, 3)
    assert rel_err(separable_tfd_full(z, k).values, wigner_ville(z).values) < 1e-10


def test_lag_window_reduces_cross_term():
    n = 128
    t = np.arange(n)
    k1, k2 = 10, 30
    z = np.exp(2j * np.pi * k1 * t / n) + np.exp(2j * np.pi * k2 * t / n)
    mid = k1 + k2  # bin of the mid frequency (k1 + k2) / (2n)
    w = wigner_ville(z).values
    rho = separable_tfd_full(z, KernelSpec(WindowSpec("hanning", 31),
                                           WindowSpec("rectangular", 1))).values
    interior = slice(32, 96)
    assert np.sum(np.abs(rho[interior, mid])) < np.sum(np.abs(w[interior, mid]))


def test_full_tfd_zero_signal_and_long_window():
    k = paper_kernel(15)
    assert np.all(separable_tfd_full(np.zeros(64, complex), k).values == 0)
    with pytest.raises(PreconditionError, match="exceeds"):
        separable_tfd_full(np.ones(32, complex), paper_kernel(61))


@pytest.mark.parametrize("n", [64, 90])
def test_separable_energy_scales_with_window_centres(n):
    z = rand_signal(n, 11)
    k = kernel(15, 21)
    rho = separable_tfd_full(z, k)
    total = rho.values.sum() * rho.freq_resolution
    assert abs(total - np.sum(np.abs(z) ** 2)) <= 1e-8 * np.sum(np.abs(z) ** 2)
    unnorm = KernelSpec(WindowSpec("hanning", 15, normalized=False),
                        WindowSpec("tukey", 21, 0.9, normalized=False))
    h0 = make_window(unnorm.lag_window)[7]
    g0 = make_window(unnorm.doppler_window)[10]
    rho2 = separable_tfd_full(z, unnorm)
    total2 = rho2.values.sum() * rho2.freq_resolution
    assert abs(total2 - g0 * h0 * np.sum(np.abs(z) ** 2)) <= 1e-8 * abs(total2)


def test_time_marginal_is_doppler_smoothed_energy():
    n = 128
    z = rand_signal(n, 5)
    k = kernel(31, 41)
    marg = time_marginal(separable_tfd_full(z, k))
    # direct circular convolution of |z|^2 with G, the time image of g
    g = np.zeros(n)
    nus = np.arange(-20, 21)
    g[nus % n] = make_window(k.doppler_window)
    big_g = np.fft.ifft(g)
    e = np.abs(z) ** 2
    direct = np.array([np.sum(big_g[(i - np.arange(n)) % n] * e) for i in range(n)]).real
    assert rel_err(marg, direct) < 1e-8


# ---------------------------------------------------------------- decimated TFD


@pytest.mark.parametrize("n,nt,nf,lag,dop", [
    (256, 64, 64, 61, 61), (256, 32, 128, 31, 15), (128, 128, 128, 15, 31),
    (512, 64, 32, 21, 41), (240, 48, 40, 31, 61),
])
def test_efficient_matches_subsampled_full(n, nt, nf, lag, dop):
    z = rand_signal(n, n + nt)
    k = kernel(lag, dop)
    grid = GridSpec(n, nt, nf, k.lag_half_length)
    eff = separable_tfd_efficient(z, k, grid)
    full = separable_tfd_full(z, k).values[:: n // nt, :: n // nf]
    assert eff.values.shape == (nt, nf)
    assert rel_err(eff.values, full) < 1e-9
    assert eff.imag_residue < 1e-10


def test_efficient_full_grid_is_exact():
    n = 64
    z = rand_signal(n, 9)
    k = kernel(21, 21)
    eff = separable_tfd_efficient(z, k, GridSpec(n, n, n, k.lag_half_length))
    assert rel_err(eff.values, separable_tfd_full(z, k).values) < 1e-10


def test_efficient_paper_shape():
    k = paper_kernel()
    z = AnalyticSignal(rand_signal(4608, 1), 128.0)
    tfd = separable_tfd_efficient(z, k, GridSpec(4608, 144, 128, 31))
    assert tfd.shape == (144, 128)
    assert tfd.slice_rate == 4.0 and tfd.freq_resolution == 0.5
    assert np.all(np.isfinite(tfd.values))


def test_efficient_rejects_bad_grid():
    k = paper_kernel(15)
    z = rand_signal(128, 0)
    with pytest.raises(PreconditionError, match="n_time"):
        separable_tfd_efficient(z, k, GridSpec(128, 48, 64, 8))
    with pytest.raises(PreconditionError, match="n_freq"):
        separable_tfd_efficient(z, k, GridSpec(128, 64, 4, 8))
    with pytest.raises(PreconditionError, match="lag_half_length"):
        separable_tfd_efficient(z, k, GridSpec(128, 64, 64, 9))
    with pytest.raises(PreconditionError, match="signal length"):
        separable_tfd_efficient(z, k, GridSpec(256, 64, 64, 8))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 15))
def test_efficient_time_shift_covariance(seed, shift):
    # compact support keeps the zero-extended autocorrelation circular-safe
    n, nt, nf = 256, 32, 32
    rng = np.random.default_rng(seed)
    z = np.zeros(n, complex)
    z[96:160] = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    k = kernel(15, 15, dop_family="rectangular")
    grid = GridSpec(n, nt, nf, k.lag_half_length)
    step = n // nt
    shift = shift % 8 - 4 or 1
    a = separable_tfd_efficient(z, k, grid).values
    b = separable_tfd_efficient(np.roll(z, shift * step), k, grid).values
    assert rel_err(b, np.roll(a, shift, axis=0)) < 1e-9


def test_chirp_ridge_tracks_instantaneous_frequency():
    n, nt, nf = 512, 64, 128
    t = np.arange(n)
    f0, f1 = 0.05, 0.4  # cycles/sample
    z = np.exp(2j * np.pi * (f0 * t + 0.5 * (f1 - f0) / n * t**2))
    k = kernel(31, 31)
    tfd = separable_tfd_efficient(z, k, GridSpec(n, nt, nf, k.lag_half_length)).values
    slices = np.arange(nt) * (n // nt)
    inst_bin = 2 * nf * (f0 + (f1 - f0) * slices / n)
    interior = slice(8, nt - 8)
    err = np.argmax(tfd, axis=1)[interior] - inst_bin[interior]
    assert np.max(np.abs(err)) <= 2


# ---------------------------------------------------------------- cost model


def test_cost_small_example():
    rep = cost_report(GridSpec(64, 16, 16, 4))
    assert rep.ops_full == 36_864
    # P_h(N log2 N + Nt log2 Nt) + Nt Nf log2(Nf) / 2 = 4 * (384 + 64) + 512
    assert rep.ops_efficient == 2_304
    assert rep.mem_efficient == 256 and rep.mem_full == 4096


def test_cost_paper_grid():
    rep = cost_report(GridSpec(4608, 144, 128, 31))
    assert rep.mem_efficient == 18_432
    assert rep.ops_efficient / rep.ops_full < 0.02
    assert rep.reduction_ops == pytest.approx(100 * rep.ops_efficient / rep.ops_full)


def grids():
    return st.builds(lambda e, t, f, p: GridSpec(2**e, 2**t, 2**f, p),
                     st.integers(10, 13), st.integers(2, 7), st.integers(5, 8), st.integers(1, 31))


@settings(max_examples=60, deadline=None)
@given(grids())
def test_cost_monotone_in_each_parameter(g):
    base = cost_report(g).ops_efficient
    assert cost_report(GridSpec(g.n_signal, g.n_time, g.n_freq, g.lag_half_length + 1)).ops_efficient > base
    assert cost_report(GridSpec(g.n_signal, 2 * g.n_time, g.n_freq, g.lag_half_length)).ops_efficient > base
    assert cost_report(GridSpec(g.n_signal, g.n_time, 2 * g.n_freq, g.lag_half_length)).ops_efficient > base
    rep = cost_report(g)
    assert rep.ops_efficient < rep.ops_full
    assert 0 < rep.reduction_mem <= 100


def test_tfd_matrix_axes():
    m = TFDMatrix(np.zeros((4, 3)), slice_rate=4.0, freq_resolution=0.5, origin_time=2.0)
    np.testing.assert_allclose(m.times, [2.0, 2.25, 2.5, 2.75])
    np.testing.assert_allclose(m.frequencies, [0, 0.5, 1.0])
    assert math.isclose(time_marginal(m).sum(), 0.0)
