"""Spectral core: norms, transforms, dealiased nonlinearity.

Expected values come from independent oracles computed in-test: direct grid
quadrature for Parseval, pointwise evaluation of the basis sum for
transforms, trigonometric identities and explicit p-fold coefficient
convolution for the nonlinearity.
"""

import numpy as np
import pytest

from snlw.spectral import (
    BlowupError,
    FourierGrid,
    SpectralField,
    SpectralState,
    from_physical,
    nonlinearity,
    sobolev_norm,
    to_physical,
)

TWO_PI = 2.0 * np.pi


def random_hermitian_field(grid, seed, scale=1.0):
    rs = np.random.default_rng(seed)
    c = rs.standard_normal(grid.shape) + 1j * rs.standard_normal(grid.shape)
    f = SpectralField(grid, scale * c)
    return f.hermitize()


def eval_basis_sum(field, points):
    """Direct (slow) evaluation of sum_n f_n exp(i n.x) / (2 pi)^(d/2)."""
    grid = field.grid
    coords = np.stack(np.meshgrid(*([grid.n_axis] * grid.d), indexing="ij"),
                      axis=-1).reshape(-1, grid.d)
    flat = field.coeffs.reshape(-1)
    out = np.zeros(len(points), dtype=complex)
    for n, c in zip(coords, flat):
        out += c * np.exp(1j * points @ n)
    return (out / TWO_PI ** (grid.d / 2.0)).real


# ---------------------------------------------------------------------- norms

def test_sobolev_single_mode_at_zero():
    grid = FourierGrid(d=3, M=2, pad=1.0)
    f = SpectralField.from_modes(grid, {(0, 0, 0): 1.0})
    for s in (-1.5, 0.0, 0.5, 2.0):
        assert sobolev_norm(f, s) == pytest.approx(1.0, abs=1e-14)


def test_sobolev_conjugate_pair_d3():
    grid = FourierGrid(d=3, M=1, pad=1.0)
    f = SpectralField.from_modes(grid, {(1, 0, 0): 1.0})  # fills (-1,0,0) too
    assert sobolev_norm(f, 1.0) == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("d,M", [(1, 6), (2, 4), (3, 3)])
@pytest.mark.parametrize("pad", [1.0, 1.5, 2.0])
def test_parseval_matches_grid_quadrature(d, M, pad):
    grid = FourierGrid(d=d, M=M, pad=pad)
    f = random_hermitian_field(grid, seed=d * 10 + M)
    u = to_physical(f, pad)
    K = u.shape[0]
    quad = (TWO_PI / K) ** d * np.sum(u ** 2)
    assert abs(quad - sobolev_norm(f, 0.0) ** 2) <= 1e-10 * quad


# ----------------------------------------------------------------- transforms

def test_roundtrip_zero():
    grid = FourierGrid(d=2, M=3, pad=1.5)
    f = SpectralField.zeros(grid)
    u = to_physical(f)
    assert not u.any()
    assert not from_physical(u, grid).coeffs.any()


def test_single_mode_samples_are_cosine():
    grid = FourierGrid(d=1, M=3, pad=2.0)
    amp = np.sqrt(TWO_PI) / 2.0
    f = SpectralField.from_modes(grid, {(1,): amp})  # cos(x)
    u = to_physical(f)
    x = TWO_PI * np.arange(len(u)) / len(u)
    assert np.max(np.abs(u - np.cos(x))) < 1e-13
    back = from_physical(u, grid)
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-13


@pytest.mark.parametrize("d,M", [(1, 8), (2, 5), (3, 4), (4, 2)])
def test_roundtrip_random(d, M):
    grid = FourierGrid(d=d, M=M, pad=1.5)
    f = random_hermitian_field(grid, seed=17 + d)
    back = from_physical(to_physical(f), grid)
    scale = np.max(np.abs(f.coeffs))
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12 * scale


def test_transform_matches_direct_basis_sum():
    grid = FourierGrid(d=2, M=2, pad=1.0)
    f = random_hermitian_field(grid, seed=5)
    u = to_physical(f)
    K = u.shape[0]
    ax = TWO_PI * np.arange(K) / K
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    direct = eval_basis_sum(f, pts).reshape(K, K)
    assert np.max(np.abs(u - direct)) < 1e-12 * max(np.max(np.abs(direct)), 1.0)


def test_to_physical_rejects_non_hermitian():
    grid = FourierGrid(d=1, M=2, pad=1.0)
    f = SpectralField.from_modes(grid, {(1,): 1.0}, hermitize=False)
    with pytest.raises(ValueError, match="Hermitian"):
        to_physical(f)


# --------------------------------------------------------------- nonlinearity

def test_nonlinearity_constant_field():
    grid = FourierGrid(d=3, M=2, pad=3.0)
    c = -0.7
    f = SpectralField.from_modes(grid, {(0, 0, 0): c * TWO_PI ** 1.5})  # u == c
    g = nonlinearity(f, p=5.0)
    expect = abs(c) ** 4 * c * TWO_PI ** 1.5
    assert g.coeffs[2, 2, 2] == pytest.approx(expect, rel=1e-13)
    off = g.coeffs.copy()
    off[2, 2, 2] = 0.0
    assert np.max(np.abs(off)) < 1e-13 * abs(expect)


def test_nonlinearity_cos_cubed_identity():
    # cos^3 x = (3 cos x + cos 3x) / 4
    grid = FourierGrid(d=1, M=4, pad=2.0)
    amp = np.sqrt(TWO_PI) / 2.0
    f = SpectralField.from_modes(grid, {(1,): amp})
    g = nonlinearity(f, p=3.0, pad=2.0)
    expect = SpectralField.from_modes(grid, {(1,): 0.75 * amp, (3,): 0.25 * amp})
    assert np.max(np.abs(g.coeffs - expect.coeffs)) < 1e-12


def test_nonlinearity_odd_symmetry():
    grid = FourierGrid(d=2, M=3, pad=3.0)
    f = random_hermitian_field(grid, seed=9, scale=0.5)
    for p in (3.0, 5.0, 7.0 / 3.0):
        g1 = nonlinearity(f, p)
        g2 = nonlinearity(SpectralField(grid, -f.coeffs), p)
        assert np.allclose(g2.coeffs, -g1.coeffs, rtol=0, atol=1e-13)


def power_by_convolution(field, p):
    """Oracle: p-fold coefficient convolution for integer p, d = 1."""
    grid = field.grid
    full = field.coeffs
    acc = full.copy()
    for _ in range(p - 1):
        acc = np.convolve(acc, full)
    # acc covers frequencies -pM..pM; truncate to the lattice
    center = p * grid.M
    window = acc[center - grid.M:center + grid.M + 1]
    return window / TWO_PI ** (grid.d * (p - 1) / 2.0)


@pytest.mark.parametrize("M", [2, 4])
@pytest.mark.parametrize("p", [3, 5])
def test_nonlinearity_alias_free_vs_convolution(M, p):
    grid = FourierGrid(d=1, M=M, pad=(p + 1) / 2.0)
    f = random_hermitian_field(grid, seed=M * p, scale=0.8)
    g = nonlinearity(f, float(p))
    oracle = power_by_convolution(f, p)
    assert np.max(np.abs(g.coeffs - oracle)) < 1e-12 * max(np.max(np.abs(oracle)), 1.0)


def test_hermitian_symmetry_preserved():
    grid = FourierGrid(d=3, M=3, pad=3.0)
    f = random_hermitian_field(grid, seed=2)
    assert nonlinearity(f, 5.0).is_hermitian(1e-12)
    assert from_physical(to_physical(f), grid).is_hermitian(1e-12)
    assert (f + f).is_hermitian(1e-12)


def test_overflow_raises_blowup():
    grid = FourierGrid(d=1, M=2, pad=3.0)
    f = SpectralField.from_modes(grid, {(1,): 1e80})
    with pytest.raises(BlowupError):
        nonlinearity(f, 5.0)


# ------------------------------------------------------------------- validity

def test_grid_validation():
    with pytest.raises(ValueError):
        FourierGrid(d=0, M=2)
    with pytest.raises(ValueError):
        FourierGrid(d=6, M=2)
    with pytest.raises(ValueError):
        FourierGrid(d=2, M=2, pad=0.5)
    g = FourierGrid(d=2, M=2, pad=1.0)
    assert g.K >= 2 * g.M + 1


def test_from_modes_validation():
    grid = FourierGrid(d=2, M=2)
    with pytest.raises(ValueError, match="outside"):
        SpectralField.from_modes(grid, {(3, 0): 1.0})
    with pytest.raises(ValueError, match="dimension"):
        SpectralField.from_modes(grid, {(1,): 1.0})


def test_state_requires_shared_grid():
    g1 = FourierGrid(d=1, M=2)
    g2 = FourierGrid(d=1, M=3)
    with pytest.raises(ValueError, match="grid"):
        SpectralState(SpectralField.zeros(g1), SpectralField.zeros(g2))
