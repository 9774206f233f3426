"""Noise multiplier, increment covariance, exact sampler, keyed streams.

Covariance oracles: scipy quadrature of the sine/cosine kernels (times the
factor 2 of the complex-Brownian normalization, see the noise module
docstring) and the covariance recursion of an Euler-Maruyama chain.  The
keyed generator is validated bit-for-bit against numpy's Philox.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from snlw.rng import keyed_normals, philox4x64, stream_key
from snlw.spectral import FourierGrid, SpectralField
from snlw.noise import (
    ConvolutionState,
    NoiseMultiplier,
    NoiseStream,
    hs_norm,
    increment_tables,
    mode_covariance,
    sample_convolution_path,
    step_convolution,
)
from snlw.solver import linear_propagate
from snlw.spectral import SpectralState


def covariance_by_quadrature(omega, h, phi=1.0):
    """Oracle: 2 phi^2 integral of the exact kernels over one step."""
    if omega == 0.0:
        k11 = quad(lambda s: s ** 2, 0, h)[0]
        k12 = quad(lambda s: s, 0, h)[0]
        k22 = h
    else:
        k11 = quad(lambda s: np.sin(s * omega) ** 2 / omega ** 2, 0, h)[0]
        k12 = quad(lambda s: np.sin(s * omega) * np.cos(s * omega) / omega, 0, h)[0]
        k22 = quad(lambda s: np.cos(s * omega) ** 2, 0, h)[0]
    f = 2.0 * phi ** 2
    return np.array([[f * k11, f * k12], [f * k12, f * k22]])


def covariance_by_euler_maruyama(omega, h, phi=1.0, n_sub=200_000):
    """Oracle: covariance recursion of the Euler-Maruyama discretization of
    da = b dt, db = -omega^2 a dt + phi dB with E|dB|^2 = 2 dt."""
    dt = h / n_sub
    A = np.array([[1.0, dt], [-omega ** 2 * dt, 1.0]])
    Q = np.array([[0.0, 0.0], [0.0, 2.0 * phi ** 2 * dt]])
    C = np.zeros((2, 2))
    for _ in range(n_sub):
        C = A @ C @ A.T + Q
    return C


# ------------------------------------------------------------------ hs_norm

def test_hs_single_mode():
    grid = FourierGrid(d=2, M=3)
    phi = NoiseMultiplier.from_spec(grid, {"kind": "explicit",
                                           "modes": [{"n": [0, 0], "value": 1.0}]})
    for s in (-1.0, 0.0, 2.0):
        assert hs_norm(phi, s) == pytest.approx(1.0, abs=1e-14)


def test_hs_unit_cube_27_modes():
    grid = FourierGrid(d=3, M=2)
    arr = np.zeros(grid.shape)
    box = np.max(np.abs(np.stack(np.meshgrid(*([grid.n_axis] * 3), indexing="ij"))), axis=0)
    arr[box <= 1] = 1.0
    phi = NoiseMultiplier(grid, arr)
    assert hs_norm(phi, 0.0) == pytest.approx(np.sqrt(27.0), rel=1e-14)


def test_hs_power_decay_vs_direct_sum():
    grid = FourierGrid(d=3, M=3)
    alpha, s = 1.3, 0.4
    phi = NoiseMultiplier.power_decay(grid, alpha=alpha)
    total = 0.0
    for n1 in grid.n_axis:
        for n2 in grid.n_axis:
            for n3 in grid.n_axis:
                jap2 = 1.0 + n1 ** 2 + n2 ** 2 + n3 ** 2
                total += jap2 ** s * jap2 ** (-alpha)
    assert hs_norm(phi, s) ** 2 == pytest.approx(total, rel=1e-12)


def test_multiplier_validation():
    grid = FourierGrid(d=1, M=2)
    with pytest.raises(ValueError, match=">= 0"):
        NoiseMultiplier(grid, -np.ones(grid.shape))
    asym = np.zeros(grid.shape)
    asym[0] = 1.0
    with pytest.raises(ValueError, match="phi"):
        NoiseMultiplier(grid, asym)
    with pytest.raises(ValueError, match="kind"):
        NoiseMultiplier.from_spec(grid, {"kind": "rainbow"})


# ----------------------------------------------------------- mode covariance

@pytest.mark.parametrize("omega", [0.0, 1.0, 4.0, 13.856406460551018])
@pytest.mark.parametrize("h", [1e-3, 0.37, 1.0])
def test_mode_covariance_matches_quadrature(omega, h):
    C = mode_covariance(omega * np.array([1.0]), h, phi_n=0.8)
    ref = covariance_by_quadrature(omega, h, phi=0.8)
    assert np.allclose(C, ref, rtol=1e-9, atol=1e-16)


def test_mode_covariance_zero_mode_closed_form():
    # kernels t^2, t, 1 integrate to 1/3, 1/2, 1; doubled by the complex
    # Brownian normalization
    C = mode_covariance((0, 0, 0), 1.0, 1.0)
    assert np.allclose(C, [[2.0 / 3.0, 1.0], [1.0, 2.0]], rtol=1e-14)


def test_mode_covariance_unit_frequency_closed_form():
    h = 0.83
    C = mode_covariance((1, 0, 0), h, 1.0)
    assert C[0, 0] == pytest.approx(2.0 * (h / 2.0 - np.sin(2 * h) / 4.0), rel=1e-13)
    assert C[1, 1] == pytest.approx(2.0 * (h / 2.0 + np.sin(2 * h) / 4.0), rel=1e-13)
    assert C[0, 1] == pytest.approx(np.sin(h) ** 2, rel=1e-13)


def test_mode_covariance_small_argument_series():
    # across the series/closed-form switch the kernel integrals stay smooth
    for omega in (1.0, 40.0):
        for h in (0.9e-3 / omega, 1.1e-3 / omega):
            C = mode_covariance(np.array([omega]), h, 1.0)
            ref = covariance_by_quadrature(omega, h)
            assert np.allclose(C, ref, rtol=1e-9)


def test_mode_covariance_white_noise_scaling():
    # h -> 0: entries vanish, Var22/h -> 2 phi^2
    phi_n = 1.7
    for h in (1e-3, 1e-5, 1e-7):
        C = mode_covariance((3, 1, 0), h, phi_n)
        assert np.all(np.abs(C) <= 2.1 * phi_n ** 2 * h)
    C = mode_covariance((3, 1, 0), 1e-9, phi_n)
    assert C[1, 1] / 1e-9 == pytest.approx(2.0 * phi_n ** 2, rel=1e-6)


def test_mode_covariance_matches_euler_maruyama():
    # EM bias is O(omega^2 dt); tolerance sized accordingly
    for omega in (0.0, 4.0):
        C = mode_covariance(np.array([omega]), 1.0, 1.0)
        em = covariance_by_euler_maruyama(omega, 1.0, n_sub=400_000)
        tol = 10.0 * max(omega ** 2, 1.0) / 400_000
        assert np.allclose(C, em, rtol=tol, atol=1e-8)


def test_two_steps_compose_to_one():
    # rotation R_h C_h R_h^T + C_h == C_2h exactly (independent increments)
    for omega in (0.0, 1.0, 2.5, 11.0):
        h = 0.21
        c, s = np.cos(h * omega), (np.sin(h * omega) / omega if omega else h)
        R = np.array([[c, s], [-omega ** 2 * s, c]])
        C1 = covariance_by_quadrature(omega, h)
        C2 = covariance_by_quadrature(omega, 2 * h)
        comp = R @ C1 @ R.T + C1
        assert np.allclose(comp, C2, rtol=1e-9, atol=1e-14)


# ------------------------------------------------------------- keyed streams

def test_philox_matches_numpy_bitwise():
    key = stream_key(123, 7)
    bg = np.random.Philox(counter=np.zeros(4, dtype=np.uint64), key=key)
    ref = bg.random_raw(12)
    for block in range(3):
        ctr = np.zeros((4, 1), dtype=np.uint64)
        ctr[0, 0] = block + 1  # numpy pre-increments its counter
        mine = philox4x64(ctr, key)[:, 0]
        assert np.array_equal(mine, ref[4 * block:4 * block + 4])


def test_keyed_normals_are_reproducible_and_keyed():
    key = stream_key(5, 1)
    codes = np.array([10, 11, 12], dtype=np.uint64)
    a = keyed_normals(key, step=3, codes=codes)
    b = keyed_normals(key, step=3, codes=codes)
    assert np.array_equal(a, b)
    c = keyed_normals(key, step=4, codes=codes)
    assert not np.allclose(a, c)
    # permuting the code array permutes the rows: draws belong to codes
    perm = keyed_normals(key, step=3, codes=codes[::-1])
    assert np.array_equal(perm, a[::-1])


def test_keyed_normals_moments():
    key = stream_key(2, 2)
    z = keyed_normals(key, step=0, codes=np.arange(20000, dtype=np.uint64))
    flat = z.reshape(-1)
    assert abs(flat.mean()) < 4.0 / np.sqrt(flat.size)
    assert abs(flat.std() - 1.0) < 4.0 / np.sqrt(flat.size)


# -------------------------------------------------------------- exact sampler

def test_step_convolution_zero_noise_is_free_rotation():
    grid = FourierGrid(d=2, M=3)
    rs = np.random.default_rng(0)
    psi = SpectralField(grid, rs.standard_normal(grid.shape) + 0j).hermitize()
    psit = SpectralField(grid, rs.standard_normal(grid.shape) + 0j).hermitize()
    state = ConvolutionState(psi, psit, t=0.0)
    phi = NoiseMultiplier.zero(grid)
    out = step_convolution(state, phi, 0.3, NoiseStream(0, 0, grid), step_index=0)
    rotated = linear_propagate(SpectralState(psi, psit), 0.3)
    assert np.allclose(out.psi.coeffs, rotated.u.coeffs, atol=1e-14)
    assert np.allclose(out.psit.coeffs, rotated.ut.coeffs, atol=1e-14)
    assert out.t == pytest.approx(0.3)


def test_sampler_marginal_matches_covariance():
    grid = FourierGrid(d=1, M=2, pad=1.0)
    phi = NoiseMultiplier.power_decay(grid, alpha=0.0)
    h = 0.7
    tables = increment_tables(phi, h)
    n = 20000
    vals = np.empty((n, 3))
    for j in range(n):
        st = step_convolution(ConvolutionState.zero(grid), phi, h,
                              NoiseStream(77, j, grid), step_index=0, tables=tables)
        a = st.psi.coeffs[3]  # mode n = 1
        b = st.psit.coeffs[3]
        vals[j] = [abs(a) ** 2, (a * np.conj(b)).real, abs(b) ** 2]
    emp = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(n)
    C = mode_covariance((1,), h, 1.0)
    ref = np.array([C[0, 0], C[0, 1], C[1, 1]])
    assert np.all(np.abs(emp - ref) <= 4.0 * se)


def test_sampler_hermitian_and_zero_mode_real():
    grid = FourierGrid(d=3, M=2)
    phi = NoiseMultiplier.power_decay(grid, alpha=1.0)
    st = ConvolutionState.zero(grid)
    stream = NoiseStream(3, 0, grid)
    for k in range(5):
        st = step_convolution(st, phi, 0.05, stream, step_index=k)
    assert st.psi.is_hermitian(1e-12)
    assert st.psit.is_hermitian(1e-12)
    assert abs(st.psi.coeffs[2, 2, 2].imag) < 1e-15


def test_distinct_modes_are_uncorrelated():
    grid = FourierGrid(d=2, M=2)
    phi = NoiseMultiplier.power_decay(grid, alpha=0.0)
    n = 4000
    a = np.empty(n, dtype=complex)
    b = np.empty(n, dtype=complex)
    tables = increment_tables(phi, 1.0)
    for j in range(n):
        st = step_convolution(ConvolutionState.zero(grid), phi, 1.0,
                              NoiseStream(9, j, grid), step_index=0, tables=tables)
        a[j] = st.psi.coeffs[3, 2]  # n = (1, 0)
        b[j] = st.psi.coeffs[2, 3]  # n = (0, 1), not conjugate to a
    corr = np.corrcoef(np.abs(a) ** 2, np.abs(b) ** 2)[0, 1]
    assert abs(corr) < 4.0 / np.sqrt(n)
    cross = np.mean(a * np.conj(b)) / np.sqrt(np.mean(np.abs(a) ** 2) * np.mean(np.abs(b) ** 2))
    assert abs(cross) < 4.0 / np.sqrt(n)


def test_coupled_streams_agree_across_lattice_sizes():
    # the same (base seed, trajectory, step) yields identical increments on
    # shared modes regardless of the lattice the run was truncated to
    small = FourierGrid(d=3, M=2)
    large = FourierGrid(d=3, M=4)
    phi_s = NoiseMultiplier.power_decay(small, alpha=1.0)
    phi_l = NoiseMultiplier.power_decay(large, alpha=1.0)
    st_s = ConvolutionState.zero(small)
    st_l = ConvolutionState.zero(large)
    stream_s = NoiseStream(42, 3, small)
    stream_l = NoiseStream(42, 3, large)
    for k in range(4):
        st_s = step_convolution(st_s, phi_s, 0.1, stream_s, step_index=k)
        st_l = step_convolution(st_l, phi_l, 0.1, stream_l, step_index=k)
    inner = st_l.psi.coeffs[2:7, 2:7, 2:7]
    assert np.allclose(st_s.psi.coeffs, inner, rtol=0, atol=1e-14)
    inner_t = st_l.psit.coeffs[2:7, 2:7, 2:7]
    assert np.allclose(st_s.psit.coeffs, inner_t, rtol=0, atol=1e-14)


def test_sample_path_consistency():
    grid = FourierGrid(d=1, M=3)
    phi = NoiseMultiplier.power_decay(grid, alpha=1.0)
    path = sample_convolution_path(phi, 0.1, 5, NoiseStream(1, 0, grid))
    assert len(path.times) == 6
    assert not path.psis[0].any()
    st = path.state_at(0.3)
    assert st.t == pytest.approx(0.3)
    with pytest.raises(KeyError):
        path.psi_at(0.33)
    sub = path.restricted(0.1, 0.4)
    assert np.allclose(sub.times, [0.1, 0.2, 0.3, 0.4])
