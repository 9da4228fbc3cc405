"""Small perturbed problems shared by the solver, bvp and acceptance tests."""
import numpy as np

from cauchyop.coeff import (CoefficientTensor, PerturbationField, TransformedTensor, extract_E, random_accretive,
                            transform_A_to_B)
from cauchyop.flow import FlowConfig, hardy_projection
from cauchyop.funcalc import assemble_DB0
from cauchyop.grid import BoundaryField, TGrid, TorusGrid, project_H


def band_limited_h(rng, grid, kmax=6):
    h = rng.normal(size=grid.shape + (grid.d,)) + 1j * rng.normal(size=grid.shape + (grid.d,))
    hh = np.fft.fftn(h, axes=tuple(range(grid.n)))
    hh[grid.abs_xi > kmax * 2 * np.pi / grid.L] = 0
    return project_H(grid, np.fft.ifftn(hh, axes=tuple(range(grid.n))))


def uniform_E(rng, grid, tgrid, delta):
    """t-independent, x-dependent perturbation with sup-norm ``delta``."""
    M = rng.normal(size=(1,) + grid.shape + (grid.d, grid.d)) + 1j * rng.normal(size=(1,) + grid.shape + (grid.d, grid.d))
    E = PerturbationField(grid, tgrid, M)
    return E.scaled(delta / E.sup_norm) if delta > 0 else PerturbationField.zero(grid, tgrid)


def problem(seed=0, N=16, tgrid=None, delta=0.05, alpha=0.0, B0=None):
    rng = np.random.default_rng(seed)
    grid = TorusGrid(1, 1, N)
    tgrid = tgrid or TGrid(1e-4, 20.0, 80)
    B0 = random_accretive(rng, 2, kappa=0.8, spread=0.3, skew=0.2) if B0 is None else B0
    dec = assemble_DB0(grid, B0)
    E = uniform_E(rng, grid, tgrid, delta)
    cfg = FlowConfig(alpha, tgrid)
    hp = BoundaryField(grid, hardy_projection(dec, "+", band_limited_h(rng, grid)), in_H=True)
    B = TransformedTensor(grid, B0 @ (np.eye(2) - E.values), "B", tgrid)
    return dec, E, cfg, hp, B


def decaying_problem(seed=0, N=16, tgrid=None, delta=0.1, alpha=0.0):
    """``A(t, x) = A0 + delta t/(1+t)^2 P(x)``; E extracted against ``B0 = B(A0)``."""
    rng = np.random.default_rng(seed)
    grid = TorusGrid(1, 1, N)
    tgrid = tgrid or TGrid(1e-4, 20.0, 80)
    A0 = np.diag([1.0, 1.3])
    P = rng.normal(size=(N, 2, 2)) * 0.5
    prof = 4 * tgrid.t / (1 + tgrid.t) ** 2
    A = CoefficientTensor(grid, A0 + delta * prof[:, None, None, None] * P[None], tgrid)
    B = transform_A_to_B(A)
    B0 = transform_A_to_B(CoefficientTensor.constant(A0, grid))
    B0 = TransformedTensor(grid, B0.values, "B0", tgrid)
    E = extract_E(B, B0)
    dec = assemble_DB0(grid, B0)
    cfg = FlowConfig(alpha, tgrid)
    hp = BoundaryField(grid, hardy_projection(dec, "+", band_limited_h(rng, grid)), in_H=True)
    return dec, E, cfg, hp, B
