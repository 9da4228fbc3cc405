import csv
import warnings

import numpy as np
import pytest

from cauchyop.bvp import (HardyProjector, HCoordinates, _dec_for, duality_check, hardy_projection_EA,
                          perturbation_sweep, rellich_check, restriction_map, write_sweep_csv)
from cauchyop.coeff import CoefficientTensor, PerturbationField, random_accretive
from cauchyop.errors import NotHermitianWarning
from cauchyop.flow import FlowConfig
from cauchyop.grid import TGrid, TorusGrid

from _problems import problem


def hermitian_field(rng, grid, spread=0.4):
    v = random_accretive(rng, grid.d, size=grid.shape, spread=spread, skew=0.0)
    return (v + np.conj(np.swapaxes(v, -1, -2))) / 2


def test_zero_E_gives_unperturbed_projector():
    dec, _, cfg, _, _ = problem(N=8)
    P = hardy_projection_EA(dec, PerturbationField.zero(dec.grid, cfg.tgrid), cfg)
    P0 = hardy_projection_EA(dec, None, cfg)
    assert np.array_equal(P.matrix, P0.matrix)
    assert P.deviation == 0.0
    assert P.idempotence < 1e-12 and P.null_defect < 1e-12


def test_perturbed_projector_is_idempotent_and_deviates_linearly():
    tg = TGrid(1e-4, 20.0, 50)
    dec, E, cfg, _, _ = problem(seed=2, N=8, tgrid=tg, delta=0.1)
    devs = []
    for delta in (0.0125, 0.025, 0.05, 0.1):
        P = hardy_projection_EA(dec, E.scaled(delta / E.sup_norm), cfg)
        assert P.idempotence < 1e-6
        devs.append(P.deviation / delta)
    slope = devs[0]
    assert slope > 0
    assert max(devs) < 1.5 * slope


def test_identity_restriction_maps():
    grid = TorusGrid(1, 1, 16)
    A = CoefficientTensor.constant(np.eye(2), grid)
    P = hardy_projection_EA(_dec_for(A), None, FlowConfig(0.0, TGrid()))
    for which in ("Neu", "Dir"):
        r = restriction_map(P, which)
        assert r.sigma_min == pytest.approx(2 ** -0.5, abs=1e-12)
        assert r.sigma_max == pytest.approx(2 ** -0.5, abs=1e-12)
        assert r.verdict == "well_posed"


def test_null_normal_direction_is_ill_posed():
    grid = TorusGrid(1, 1, 8)
    hc = HCoordinates(grid, 0.5)
    dirpart = hc.part("Dir").astype(float)
    P = HardyProjector(np.diag(dirpart).astype(complex), 0.5, hc)
    assert restriction_map(P, "Neu").verdict == "ill_posed"
    assert restriction_map(P, "Dir").verdict == "well_posed"
    with pytest.raises(ValueError):
        restriction_map(P, "normal")


def test_rellich_identity_single_mode():
    grid = TorusGrid(1, 1, 16)
    A = CoefficientTensor.constant(np.eye(2), grid)
    x = grid.x[:, 0]
    k = 2 * np.pi * 3 / grid.L
    h = np.stack([np.exp(1j * k * x), np.exp(1j * k * x)], axis=-1)
    rep = rellich_check(A, h)
    assert rep.value == pytest.approx(1.0, abs=1e-8)


def test_rellich_zero_data():
    grid = TorusGrid(1, 1, 8)
    A = CoefficientTensor.constant(np.eye(2), grid)
    rep = rellich_check(A, np.zeros(grid.shape + (2,), complex))
    assert rep.details["lhs"] == 0 and rep.details["rhs"] == 0


def test_rellich_hermitian_bounded_and_warning():
    rng = np.random.default_rng(5)
    grid = TorusGrid(1, 1, 16)
    A = CoefficientTensor(grid, hermitian_field(rng, grid)[None])
    ratios = []
    for _ in range(10):
        h = rng.normal(size=grid.shape + (2,)) + 1j * rng.normal(size=grid.shape + (2,))
        ratios.append(rellich_check(A, h).value)
    assert 0 < min(ratios) and max(ratios) / min(ratios) < 10
    B = CoefficientTensor(grid, random_accretive(rng, 2, size=grid.shape, skew=0.5)[None])
    with pytest.warns(NotHermitianWarning):
        rellich_check(B, h)


def test_perturbation_sweep(tmp_path):
    rng = np.random.default_rng(8)
    grid = TorusGrid(1, 1, 8)
    A0 = CoefficientTensor(grid, hermitian_field(rng, grid)[None])
    D = CoefficientTensor(grid, hermitian_field(rng, grid, spread=0.2)[None] - np.eye(2))
    cfg = FlowConfig(0.0, TGrid())
    eps = [0.0, 0.01, 0.02, 0.03]
    rep = perturbation_sweep(A0, D, eps, cfg)
    rows = rep.details["rows"]
    base = [restriction_map(hardy_projection_EA(_dec_for(A0), None, cfg), w)
            for w in ("Neu", "Dir")]
    assert rows[0]["sigma_min"] == pytest.approx(min(r.sigma_min for r in base), rel=1e-12)
    assert all(r["verdict"] == "well_posed" for r in rows)
    assert rep.details["max_jump"] < 0.05 * rows[0]["sigma_min"]
    path = tmp_path / "sweep.csv"
    write_sweep_csv(rep, path)
    with open(path) as fh:
        got = list(csv.DictReader(fh))
    assert len(got) == len(eps) and float(got[2]["eps"]) == 0.02


def test_duality_agrees():
    rng = np.random.default_rng(11)
    grid = TorusGrid(1, 1, 8)
    A = CoefficientTensor(grid, random_accretive(rng, 2, size=grid.shape, kappa=0.8, spread=0.3, skew=0.3)[None])
    rep = duality_check(A, 0.5)
    assert rep.passed and rep.details["agree"]
    blk = CoefficientTensor.constant(np.diag([1.0, 2.0]), grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert duality_check(blk, 0.25).passed
