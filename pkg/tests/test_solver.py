import warnings

import numpy as np
import pytest

from cauchyop.coeff import TransformedTensor
from cauchyop.errors import ContractionWarning, NotInHardyRange, SeriesDiverged, SliceNotInH
from cauchyop.flow import FlowConfig, cauchy_extension, hardy_projection
from cauchyop.funcalc import assemble_DB0
from cauchyop.grid import HalfSpaceField, TGrid, TorusGrid, project_H
from cauchyop.oracle import direct_solve
from cauchyop.solver import (extract_trace, ode_residual, solve_cauchy, trace_limit_check,
                             verify_representation)

from _problems import band_limited_h, decaying_problem, problem
from conftest import random_values


def test_zero_E_is_cauchy_extension():
    dec, E, cfg, hp, _ = problem(delta=0.0)
    res = solve_cauchy(dec, E, cfg, hp)
    assert res.series_terms == 1
    assert np.array_equal(res.f.values, cauchy_extension(dec, cfg, hp).values)
    assert verify_representation(res.f, dec, E, cfg).value < 1e-10
    h = extract_trace(res.f, dec, E, cfg)
    assert np.allclose(h.values, hp.values, atol=1e-12 * np.abs(hp.values).max())


@pytest.mark.parametrize("alpha", [-0.5, 0.0, 0.5, -1.0, 1.0])
def test_round_trip_and_direct_solve(alpha):
    dec, E, cfg, hp, B = problem(seed=3, N=8, tgrid=TGrid(1e-4, 20.0, 50), delta=0.1, alpha=alpha)
    res = solve_cauchy(dec, E, cfg, hp)
    rep = verify_representation(res.f, dec, E, cfg)
    assert rep.value < 1e-6
    assert np.linalg.norm(rep.details["h_plus"] - hp.values) < 1e-6 * np.linalg.norm(hp.values)
    ref = direct_solve(dec, E, cfg, hp)
    assert np.linalg.norm(res.f.values - ref.values) < 1e-8 * np.linalg.norm(ref.values)
    if alpha == 1.0:
        assert res.details["E_inc_C22"] >= 0


def test_contraction_estimate_matches_late_increments():
    dec, E, cfg, hp, _ = problem(seed=1, delta=0.1)
    res = solve_cauchy(dec, E, cfg, hp, tol=1e-13)
    inc = np.array(res.increments)
    late = np.exp(np.mean(np.log(inc[-4:] / inc[-5:-1])))
    assert abs(late - res.contraction_estimate) < 0.2 * res.contraction_estimate
    assert res.contraction_estimate < 0.5


def test_series_failures():
    dec, E, cfg, hp, _ = problem(seed=2, delta=0.1)
    with pytest.raises(SeriesDiverged):
        solve_cauchy(dec, E.scaled(40.0), cfg, hp)
    with pytest.raises(SeriesDiverged):
        solve_cauchy(dec, E, cfg, hp, max_terms=3)
    with pytest.raises(NotInHardyRange):
        solve_cauchy(dec, E, cfg, band_limited_h(np.random.default_rng(0), dec.grid))


def test_contraction_warning():
    dec, E, cfg, hp, _ = problem(seed=2, delta=0.1)
    rate = solve_cauchy(dec, E, cfg, hp).contraction_estimate
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        try:
            solve_cauchy(dec, E.scaled(0.7 / rate), cfg, hp, max_terms=400)
        except SeriesDiverged:
            pass
    assert any(issubclass(w.category, ContractionWarning) for w in rec)


def test_linearity():
    dec, E, cfg, hp, _ = problem(seed=4)
    rng = np.random.default_rng(9)
    hq = hardy_projection(dec, "+", band_limited_h(rng, dec.grid))
    f1 = solve_cauchy(dec, E, cfg, hp).f.values
    f2 = solve_cauchy(dec, E, cfg, hq).f.values
    f12 = solve_cauchy(dec, E, cfg, 2 * hp.values - 1j * hq).f.values
    assert np.linalg.norm(f12 - (2 * f1 - 1j * f2)) < 1e-9 * np.linalg.norm(f12)


def test_batched_solve_matches_single():
    dec, E, cfg, hp, _ = problem(seed=5)
    hb = np.stack([hp.values, 2 * hp.values])
    fb = solve_cauchy(dec, E, cfg, hb).f.values
    assert np.allclose(fb[1], 2 * fb[0])
    assert np.allclose(fb[0], solve_cauchy(dec, E, cfg, hp).f.values, atol=1e-9 * np.abs(fb).max())


def test_negative_control_minus_flow():
    dec, E, cfg, hp, _ = problem(seed=6, delta=0.0)
    rng = np.random.default_rng(1)
    g = hardy_projection(dec, "-", band_limited_h(rng, dec.grid))
    t = cfg.tgrid.t
    a = dec.to_coords(g)
    amp = np.where(~dec.plus, np.exp(-np.multiply.outer(cfg.tgrid.t_max - t, dec.mu)), 0) * a
    f = HalfSpaceField(dec.grid, cfg.tgrid, dec.from_coords(amp))
    assert verify_representation(f, dec, E, cfg).value > 0.1


def test_requires_H():
    dec, E, cfg, hp, _ = problem()
    v = random_values(np.random.default_rng(0), (cfg.tgrid.nodes,) + dec.grid.shape + (2,))
    with pytest.raises(SliceNotInH):
        verify_representation(HalfSpaceField(dec.grid, cfg.tgrid, v), dec, E, cfg)


def test_trace_perturbation_bound():
    ratios = []
    for delta in (0.02, 0.05, 0.1):
        dec, E, cfg, hp, _ = problem(seed=7, delta=delta)
        f = solve_cauchy(dec, E, cfg, hp).f
        h = extract_trace(f, dec, E, cfg)
        ratios.append(np.linalg.norm(h.values - hp.values) / (delta * np.linalg.norm(f.values)))
        assert h.meta["h_over_f"] > 0
    assert max(ratios) < 3 * min(ratios)


@pytest.mark.parametrize("mode", ["dini", "L2"])
def test_trace_limits(mode):
    tg = TGrid(1e-5, 30.0, 110)
    dec, E, cfg, hp, _ = problem(seed=8, delta=0.05, tgrid=tg, alpha=0.0 if mode == "dini" else 0.5)
    f = solve_cauchy(dec, E, cfg, hp).f
    h = extract_trace(f, dec, E, cfg)
    rep = trace_limit_check(f, h, cfg, dec, mode=mode)
    assert rep.passed, rep.details
    assert rep.details["upper"][-1] < 1e-6


def test_trace_limit_zero_E_per_mode_decay():
    dec, E, cfg, hp, _ = problem(seed=9, delta=0.0, tgrid=TGrid(1e-5, 30.0, 110))
    f = solve_cauchy(dec, E, cfg, hp).f
    rep = trace_limit_check(f, hp, cfg, dec)
    # |1 - e^{-s mu}|^2 <= (s mu)^2, averaged over [t, 2t]: at most (7/3) (t mu_max)^2
    mu_max = np.max(np.abs(dec.mu[dec.plus]))
    bound = 7 / 3 * (rep.details["lower_t"] * mu_max) ** 2
    assert np.all(rep.details["lower"] <= bound * 1.01)
    with pytest.raises(ValueError):
        trace_limit_check(f, hp, cfg, dec, mode="sup")


def test_ode_residual_refinement():
    res = []
    for nodes in (100, 200):
        dec, E, cfg, hp, B = decaying_problem(seed=1, tgrid=TGrid(1e-3, 20.0, nodes))
        f = solve_cauchy(dec, E, cfg, hp).f
        r, curl = ode_residual(f, B)
        res.append(r)
        assert curl == 0.0
    assert res[1] < res[0] / 3.5


def test_ode_residual_exact_mode_and_negative_control():
    g = TorusGrid(1, 1, 16)
    dec = assemble_DB0(g, np.eye(2))
    tg = TGrid(1e-3, 5.0, 60)
    hp = np.exp(2j * g.x[:, 0])[:, None] * np.array([1j, 1.0])
    f = cauchy_extension(dec, FlowConfig(-1.0, tg), hp)
    B = TransformedTensor(g, np.eye(2))
    r, _ = ode_residual(f, B)
    # centred difference of e^{-2t} in log t: relative error (du^2 / 6) (2t)^2-type, small here
    assert r < 1e-2
    rnd = HalfSpaceField(g, tg, project_H(g, random_values(np.random.default_rng(0), (60, 16, 2))))
    assert ode_residual(rnd, B)[0] > 0.5
