import numpy as np
import pytest

from cauchyop.coeff import random_accretive
from cauchyop.errors import DimensionUnsupported, GridTooLarge
from cauchyop.flow import FlowConfig, cauchy_extension, hardy_projection, semigroup
from cauchyop.funcalc import assemble_DB0
from cauchyop.grid import BoundaryField, HalfSpaceField, TGrid, TorusGrid, project_H
from cauchyop.oracle import (cauchy_kernel_extension, direct_solve, periodic_cauchy_kernel, poisson_extension,
                             dense_apply_S)
from cauchyop.sio import apply_S

from _problems import band_limited_h, problem


def test_cauchy_kernel_image_sum_matches_cotangent():
    # (i / 2 pi) sum_j 1 / (z + jL) = (i / 2L) cot(pi z / L)
    L, t = 2 * np.pi, 0.3
    w = np.linspace(-3, 3, 7)
    z = w + 1j * t
    ref = 1j / (2 * L) / np.tan(np.pi * z / L)
    assert np.allclose(periodic_cauchy_kernel(w, t, L), ref, rtol=1e-8)


def test_cauchy_oracle_matches_flow():
    rng = np.random.default_rng(0)
    grid = TorusGrid(1, 1, 128)
    tg = TGrid(0.1, 1.0, 6)
    dec = assemble_DB0(grid, np.eye(2))
    hp = hardy_projection(dec, "+", band_limited_h(rng, grid))
    f = cauchy_extension(dec, FlowConfig(-1.0, tg), hp)
    o = cauchy_kernel_extension(BoundaryField(grid, hp), tg)
    err = np.linalg.norm(f.values - o.values) / np.linalg.norm(f.values)
    assert err < 1e-5


@pytest.mark.parametrize("n,N,t0,tol", [(1, 64, 0.2, 1e-5), (2, 32, 1.0, 1e-4)])
def test_poisson_oracle_matches_semigroup(n, N, t0, tol):
    rng = np.random.default_rng(n)
    grid = TorusGrid(n, 1, N)
    tg = TGrid(t0, 2.0, 4)
    h = band_limited_h(rng, grid, kmax=3)
    dec = assemble_DB0(grid, np.eye(grid.d))
    o = poisson_extension(BoundaryField(grid, h), tg)
    for j, t in enumerate(tg.t):
        ref = semigroup(dec, t, h)
        assert np.linalg.norm(o.values[j] - ref) < tol * np.linalg.norm(ref)


def test_oracles_reject_unsupported():
    grid = TorusGrid(2, 1, 8)
    h = BoundaryField(grid, np.zeros(grid.shape + (3,), complex))
    with pytest.raises(DimensionUnsupported):
        cauchy_kernel_extension(h, TGrid(0.1, 1.0, 3))
    g3 = TorusGrid(3, 1, 4)
    with pytest.raises(DimensionUnsupported):
        poisson_extension(BoundaryField(g3, np.zeros(g3.shape + (4,), complex)), TGrid(0.1, 1.0, 3))


def test_dense_S_matches_sweep():
    rng = np.random.default_rng(4)
    grid = TorusGrid(1, 1, 16)
    tg = TGrid(1e-2, 5.0, 20)
    dec = assemble_DB0(grid, random_accretive(rng, 2, kappa=0.8, spread=0.3, skew=0.2))
    v = rng.normal(size=(tg.nodes,) + grid.shape + (2,)) + 1j * rng.normal(size=(tg.nodes,) + grid.shape + (2,))
    v = project_H(grid, v)
    f = HalfSpaceField(grid, tg, v, in_H=True)
    ref = apply_S(dec, f)
    got = dense_apply_S(dec, f, rel_step=0.01)
    assert np.linalg.norm(got.values - ref.values) < 1e-3 * np.linalg.norm(ref.values)
    with pytest.raises(GridTooLarge):
        dense_apply_S(dec, f, rel_step=1e-6, max_work=1e6)


def test_direct_solve_zero_E_and_size_guard():
    dec, E, cfg, hp, _ = problem(N=8, tgrid=TGrid(1e-3, 10.0, 20), delta=0.0)
    f = direct_solve(dec, E, cfg, hp)
    ref = cauchy_extension(dec, cfg, hp)
    assert np.linalg.norm(f.values - ref.values) < 1e-10 * np.linalg.norm(ref.values)
    dec, E, cfg, hp, _ = problem(N=16, delta=0.05)
    with pytest.raises(GridTooLarge):
        direct_solve(dec, E, cfg, hp, max_dim=100)
