import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cauchyop.coeff import random_accretive
from cauchyop.errors import NegativeTime, NotInHardyRange, UnsupportedAlpha
from cauchyop.flow import (FlowConfig, cauchy_extension, decay_residual, hardy_projection, semigroup,
                           square_function_norm)
from cauchyop.funcalc import assemble_DB0
from cauchyop.grid import TGrid, TorusGrid, apply_D, project_H
from conftest import random_values

G = TorusGrid(1, 1, 32)


def mode(k, vec):
    x = G.x[:, 0]
    return np.exp(1j * k * x)[:, None] * np.asarray(vec)[None, :]


def test_flow_config():
    tg = TGrid()
    assert FlowConfig(0.0, tg).sigma == 0.5
    assert FlowConfig.from_sigma(1.0, tg).alpha == 1.0
    with pytest.raises(UnsupportedAlpha):
        FlowConfig(1.5, tg)


def test_semigroup(rng):
    dec = assemble_DB0(G, np.eye(2))
    h = project_H(G, random_values(rng, (32, 2)))
    assert np.allclose(semigroup(dec, 0.0, h), h)
    assert np.allclose(semigroup(dec, 0.2, semigroup(dec, 0.3, h)), semigroup(dec, 0.5, h), atol=1e-10)
    hm = mode(3, [1.0, 0.5])
    assert np.allclose(semigroup(dec, 0.4, hm), np.exp(-1.2) * hm)
    assert np.linalg.norm(semigroup(dec, 0.4, h)) <= np.linalg.norm(h)
    with pytest.raises(NegativeTime):
        semigroup(dec, -1.0, h)


def test_hardy_projections(rng):
    dec = assemble_DB0(G, np.eye(2))
    h = project_H(G, random_values(rng, (32, 2)))
    p, m = hardy_projection(dec, "+", h), hardy_projection(dec, "-", h)
    assert np.allclose(p + m, h, atol=1e-10)
    assert np.allclose(hardy_projection(dec, "+", p), p, atol=1e-10)
    # xi > 0: E0+ is the orthogonal projector onto (i, 1)/sqrt(2)
    v = np.array([1j, 1.0]) / np.sqrt(2)
    P = np.outer(v, v.conj())
    w = np.array([0.3 - 1j, 2.0])
    assert np.allclose(hardy_projection(dec, "+", mode(2, w)), mode(2, P @ w), atol=1e-12)


def test_cauchy_extension_single_mode():
    dec = assemble_DB0(G, np.eye(2))
    tg = TGrid(1e-3, 5.0, 30)
    hp = mode(4, [1j, 1.0])
    f = cauchy_extension(dec, FlowConfig(-1.0, tg), hp)
    assert np.allclose(f.values, np.exp(-4 * tg.t)[:, None, None] * hp[None], atol=1e-12)
    with pytest.raises(NotInHardyRange):
        cauchy_extension(dec, FlowConfig(-1.0, tg), mode(4, [1.0, 0.0]))


def test_sigma_one_is_minus_time_derivative(rng):
    dec = assemble_DB0(G, random_accretive(rng, 2))
    hp = hardy_projection(dec, "+", project_H(G, random_values(rng, (32, 2)) * np.exp(-np.abs(G.xi))))
    errs = []
    for nodes in (100, 200):
        tg = TGrid(1e-2, 2.0, nodes)
        u = cauchy_extension(dec, FlowConfig(-1.0, tg), hp).values
        f = cauchy_extension(dec, FlowConfig(1.0, tg), hp).values
        du = np.log(tg.rho)
        dudt = (u[2:] - u[:-2]) / (2 * du) / tg.t[1:-1, None, None]
        errs.append(np.linalg.norm(dudt + f[1:-1]) / np.linalg.norm(f[1:-1]))
    assert errs[1] < errs[0] / 3.5 and errs[1] < 1e-3


def test_first_order_system_residual(rng):
    dec = assemble_DB0(G, np.eye(2))
    hp = hardy_projection(dec, "+", project_H(G, random_values(rng, (32, 2)) * np.exp(-np.abs(G.xi))))
    res = []
    for nodes in (80, 160):
        tg = TGrid(1e-2, 2.0, nodes)
        f = cauchy_extension(dec, FlowConfig(-1.0, tg), hp).values
        du = np.log(tg.rho)
        dfdt = (f[2:] - f[:-2]) / (2 * du) / tg.t[1:-1, None, None]
        res.append(np.linalg.norm(dfdt + apply_D(G, f[1:-1])) / np.linalg.norm(dfdt))
    assert res[1] < res[0] / 3.5
    assert decay_residual(dec, FlowConfig(0.0, TGrid(1e-2, 2.0, 160)), hp) < 1e-3


def test_square_function_single_mode():
    dec = assemble_DB0(G, np.eye(2))
    hp = mode(3, [1j, 1.0])
    rep = square_function_norm(dec, FlowConfig(0.0, TGrid(1e-9, 40.0, 400)), hp)
    hn = rep.details["h_norm_sq"]
    assert np.isclose(rep.details["full"], hn / 2, rtol=1e-10)
    assert abs(rep.value - hn / 2) < 1e-6 * hn
    assert 0 <= rep.details["tail"] <= rep.details["tail_bound"] + 1e-15


def test_square_function_vanishes_on_minus_range(rng):
    dec = assemble_DB0(G, np.eye(2))
    hm = hardy_projection(dec, "-", project_H(G, random_values(rng, (32, 2))))
    assert square_function_norm(dec, FlowConfig(0.0, TGrid()), hm).value < 1e-20


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_square_function_ratio_bounded(seed):
    rng = np.random.default_rng(seed)
    dec = assemble_DB0(TorusGrid(1, 1, 16), random_accretive(rng, 2))
    g = dec.grid
    h = hardy_projection(dec, "+", project_H(g, random_values(rng, (16, 2))))
    r = square_function_norm(dec, FlowConfig(0.0, TGrid()), h).details["ratio"]
    assert 0 < r < 10
