import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cauchyop.errors import EmptyGrid, SizeMismatch
from cauchyop.grid import (TGrid, TorusGrid, apply_D, curl_residual, d_symbol, dft_slice,
                           h_orthonormal_basis, idft_slice, l2_norm, project_H)
from conftest import random_values


def test_grid_basics():
    g = TorusGrid(n=2, m=1, N=8, L=4.0)
    assert g.d == 3 and g.shape == (8, 8) and g.size == 64
    assert g.x.shape == (8, 8, 2) and g.xi.shape == (8, 8, 2)
    assert g.dim_H == 2 * 63
    assert np.isclose(g.cell_volume, 0.25)


@pytest.mark.parametrize("N", [0, 3, 12])
def test_grid_rejects_bad_N(N):
    with pytest.raises(ValueError):
        TorusGrid(1, 1, N)


def test_tgrid_guards():
    with pytest.raises(EmptyGrid):
        TGrid(1e-3, 1.0, 1)
    with pytest.raises(ValueError):
        TGrid(1.0, 0.5, 10)
    tg = TGrid.with_ratio(1e-3, 1.0, 0.1)
    assert np.max(np.diff(np.log(tg.t))) <= 0.1 + 1e-12
    assert np.isclose(tg.t[0], 1e-3) and np.isclose(tg.t[-1], 1.0)


def test_dft_roundtrip_and_parseval(rng, grid1):
    h = random_values(rng, (3, 32, 2))
    hh = dft_slice(grid1, h)
    assert np.allclose(idft_slice(grid1, hh), h, atol=1e-12)
    assert np.allclose(l2_norm(grid1, h) ** 2, np.sum(np.abs(hh) ** 2, axis=(-2, -1)) * grid1.cell_volume)


def test_size_mismatch(grid1):
    with pytest.raises(SizeMismatch):
        dft_slice(grid1, np.zeros((16, 2)))


@pytest.mark.parametrize("n,m", [(1, 1), (1, 2), (2, 1)])
def test_project_H_is_orthogonal_projection(rng, n, m):
    g = TorusGrid(n, m, 8)
    a = random_values(rng, g.shape + (g.d,))
    b = random_values(rng, g.shape + (g.d,))
    Pa, Pb = project_H(g, a), project_H(g, b)
    assert np.allclose(project_H(g, Pa), Pa, atol=1e-12)
    assert np.isclose(np.vdot(Pa, b), np.vdot(a, Pb))
    assert np.allclose(np.sum(Pa, axis=tuple(range(n))), 0, atol=1e-10)
    assert np.all(curl_residual(g, Pa) < 1e-10)


def test_D_symbol_hermitian_and_zero_at_origin(grid2):
    S = d_symbol(grid2)
    assert np.allclose(S, np.conj(np.swapaxes(S, -1, -2)))
    assert np.allclose(S[0], 0)


def test_apply_D_lands_in_H(rng, grid2):
    h = random_values(rng, grid2.shape + (grid2.d,))
    Dh = apply_D(grid2, h)
    assert np.allclose(project_H(grid2, Dh), Dh, atol=1e-10)


def test_orthonormal_basis(grid2):
    Q = h_orthonormal_basis(grid2)
    G = np.einsum("bij,bik->bjk", Q.conj(), Q)
    assert np.allclose(G, np.eye(2 * grid2.m))


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.integers(2, 200))
def test_gram_matrix_integrates_piecewise_linear(alpha, nodes):
    tg = TGrid(1e-2, 5.0, nodes)
    f = np.sin(tg.t) + 1j * np.cos(3 * tg.t)
    quad = np.real(np.vdot(f, tg.gram_apply(alpha, f)))
    # the same integral on a fine linear-interpolation mesh
    s = np.concatenate([np.geomspace(a, b, 2000, endpoint=False) for a, b in zip(tg.t[:-1], tg.t[1:])] + [[tg.t[-1]]])
    fs = np.interp(s, tg.t, f.real) + 1j * np.interp(s, tg.t, f.imag)
    ref = np.trapezoid(np.abs(fs) ** 2 * s**alpha, s)
    assert np.isclose(quad, ref, rtol=1e-4)
    assert np.allclose(tg.gram_solve(alpha, tg.gram_apply(alpha, f)), f)
