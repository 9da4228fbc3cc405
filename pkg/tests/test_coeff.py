import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cauchyop.coeff import (CoefficientTensor, PerturbationField, TransformedTensor, carleson_dahlberg_norm,
                            check_accretivity, extract_E, load_coefficients, random_accretive,
                            save_coefficients, select_B0, transform_A_to_B, transform_B_to_A)
from cauchyop.errors import DimensionMismatch, NonSquareMatrix, SingularB0, SingularNormalBlock
from cauchyop.funcnorms import WhitneyGeometry
from cauchyop.grid import TGrid, TorusGrid

import _brute as brute

G1 = TorusGrid(1, 1, 16)


@pytest.mark.parametrize("A,kappa", [
    (np.eye(2), 1.0),
    (np.diag([2.0, 0.5]), 0.5),
    ([[1, 1j], [0, 1]], 0.5),
])
def test_accretivity_constants(A, kappa):
    rep = check_accretivity(CoefficientTensor.constant(A, G1))
    assert np.isclose(rep.kappa, kappa) and rep.ok


def test_accretivity_matches_characteristic_polynomial():
    # [[1, i/2], [-i/2, 1]]: lambda^2 - 2 lambda + 3/4 = 0
    lo = (2 - np.sqrt(4 - 3)) / 2
    assert np.isclose(check_accretivity(np.array([[1, 1j], [0, 1]])).kappa, lo)


def test_shape_errors():
    with pytest.raises(NonSquareMatrix):
        CoefficientTensor(G1, np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        CoefficientTensor(G1, np.eye(3))
    with pytest.raises(SingularNormalBlock):
        transform_A_to_B(CoefficientTensor.constant([[0, 1], [-1, 1]], G1))


def test_transform_examples():
    B = transform_A_to_B(CoefficientTensor.constant(np.eye(2), G1))
    assert np.allclose(B.values[0, 0], np.eye(2))
    B = transform_A_to_B(CoefficientTensor.constant(np.diag([4.0, 3.0]), G1))
    assert np.allclose(B.values[0, 0], np.diag([0.25, 3.0]))


@pytest.mark.parametrize("n,m", [(1, 1), (1, 2), (2, 1)])
def test_transform_is_involution(n, m):
    g = TorusGrid(n, m, 4)
    A = random_accretive(np.random.default_rng(n + 10 * m), g.d, size=(1,) + g.shape)
    T = CoefficientTensor(g, A)
    back = transform_B_to_A(transform_A_to_B(T))
    assert np.allclose(back.values, T.values, atol=1e-12)


def test_transform_substitution_100_samples():
    # B f = (a^-1 g_perp, ...) solves  A (g_perp, f_par) = (f_perp, g_par)
    rng = np.random.default_rng(5)
    for A in random_accretive(rng, 2, size=(100,)):
        B = transform_A_to_B(CoefficientTensor.constant(A, G1)).values[0, 0]
        f = rng.normal(size=2) + 1j * rng.normal(size=2)
        g = B @ f
        lhs = A @ np.array([g[0], f[1]])
        assert np.allclose(lhs, np.array([f[0], g[1]]))


def test_extract_E_examples():
    tg = TGrid(1e-2, 1.0, 8)
    A = CoefficientTensor.from_function(lambda t, x: np.array([[2.0, 0.3], [0.1, 1.0]]) * (1 + 0 * t[..., None, None]),
                                        G1, tg)
    B = transform_A_to_B(A)
    B0 = select_B0(B)
    assert extract_E(B, B0).is_zero
    E = extract_E(TransformedTensor(G1, 1.2 * B.values, "B", tg), B0)
    assert np.allclose(E.values, -0.2 * np.eye(2))
    with pytest.raises(SingularB0):
        extract_E(B, TransformedTensor(G1, np.zeros((2, 2)), "B0", tg))


def test_extract_E_reconstruction():
    rng = np.random.default_rng(3)
    tg = TGrid(1e-2, 1.0, 5)
    Bv = random_accretive(rng, 2, size=(5, 16))
    B = TransformedTensor(G1, Bv, "B", tg)
    B0 = TransformedTensor(G1, random_accretive(rng, 2, size=(1, 16)), "B0", tg)
    E = extract_E(B, B0)
    rec = B0.values @ (np.eye(2) - E.values)
    assert np.allclose(rec, Bv, atol=1e-13)


def test_roundtrip_file(tmp_path):
    tg = TGrid(1e-2, 1.0, 4)
    A = CoefficientTensor.from_expressions([["1 + 0.1*sin(x)", "0"], ["0", "1 + t"]], G1, tg)
    save_coefficients(tmp_path / "a.cop", A)
    B = load_coefficients(tmp_path / "a.cop")
    assert np.array_equal(A.values, B.values) and B.tgrid == tg


@pytest.mark.parametrize("case", ["single_region", "slab"])
def test_carleson_dahlberg_brute_force(case):
    grid = TorusGrid(1, 1, 8)
    tg = TGrid(1e-2, 4.0, 12)
    vals = np.zeros((tg.nodes, 8, 2, 2))
    if case == "single_region":
        vals[5:7, 2:4] = 0.3 * np.eye(2)
    else:
        vals[tg.t < 1] = 0.2 * np.eye(2)
    E = PerturbationField(grid, tg, vals)
    got = carleson_dahlberg_norm(E)
    g = np.linalg.norm(vals, ord=2, axis=(-2, -1)) ** 2 / tg.t[:, None]
    geom = WhitneyGeometry(grid, tg)
    ref = np.sqrt(brute.carleson(grid, tg, brute.winf(grid, tg, g), geom.carleson_radii()).max())
    assert np.isclose(got, ref, rtol=1e-10)
    assert E.cd_norm == got


def test_carleson_dahlberg_zero_and_monotone():
    grid = TorusGrid(1, 1, 8)
    tg = TGrid(1e-2, 4.0, 12)
    assert carleson_dahlberg_norm(PerturbationField.zero(grid, tg)) == 0.0
    rng = np.random.default_rng(0)
    base = rng.uniform(0, 0.1, size=(tg.nodes, 8, 1, 1)) * np.eye(2)
    e1 = carleson_dahlberg_norm(PerturbationField(grid, tg, 0.5 * base))
    e2 = carleson_dahlberg_norm(PerturbationField(grid, tg, base))
    assert e1 <= e2


def test_carleson_dahlberg_grows_for_t_independent_E():
    grid = TorusGrid(1, 1, 8)
    E = 0.1 * np.eye(2)
    vals = [carleson_dahlberg_norm(PerturbationField(grid, TGrid(a, b, 40), E))
            for a, b in [(1e-1, 1.0), (1e-3, 10.0), (1e-5, 100.0)]]
    assert vals[0] < vals[1] < vals[2]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 2.0))
def test_random_accretive_is_accretive(seed, kappa):
    A = random_accretive(np.random.default_rng(seed), 4, size=(3,), kappa=kappa)
    assert check_accretivity(A).kappa >= kappa - 1e-12
