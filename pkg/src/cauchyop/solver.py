"""The Cauchy formula ``f = (I - S E)^-1 Lambda^sigma e^{-t Lambda} E0+ h+`` and its diagnostics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coeff import PerturbationField, TransformedTensor
from .errors import ContractionWarning, SeriesDiverged, SliceNotInH
from .flow import FlowConfig, cauchy_extension, flow_amplitudes, hardy_projection
from .funcalc import SpectralDecomp
from .funcnorms import (FunctionalReport, WhitneyGeometry, carleson_norm, nontangential_norm,
                        slab_averages, weighted_norm)
from .grid import BoundaryField, HalfSpaceField, apply_D, curl_residual, project_H, values_of
from .sio import KernelTerm, S_coords, kernel_integrals

CONTINUATION_STEPS = 30


@dataclass
class SolveResult:
    f: HalfSpaceField
    h_plus: BoundaryField
    series_terms: int
    series_tail: float
    contraction_estimate: float
    increments: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"series_terms": self.series_terms, "series_tail": self.series_tail,
                "contraction_estimate": self.contraction_estimate,
                "increments": [float(x) for x in self.increments], **self.details}


def _SE(dec: SpectralDecomp, E: PerturbationField, t, v):
    return dec.from_coords(S_coords(dec, t, dec.to_coords(E.apply(v))))


def _series_norm(v, cfg: FlowConfig, grid, geom):
    """Increment norm: L2(t^alpha) inside, N22 at alpha = -1; the max over batch axes."""
    if cfg.alpha == -1.0:
        flat = v.reshape((-1, cfg.tgrid.nodes) + grid.shape + (grid.d,))
        return max(nontangential_norm(HalfSpaceField(grid, cfg.tgrid, w), geom) for w in flat)
    return float(np.max(np.sqrt(weighted_norm(v, cfg.alpha, cfg.tgrid, grid))))


def solve_cauchy(dec: SpectralDecomp, E: Optional[PerturbationField], cfg: FlowConfig, h_plus,
                 tol=1e-10, max_terms=200, project=False) -> SolveResult:
    """Sum the Neumann series of ``(I - S E)^-1`` applied to the Cauchy extension of ``h_plus``.

    ``contraction_estimate`` is the asymptotic rate ``lim ||(S E)^k v||^{1/k}``
    measured by continuing the iteration from the last increment; the
    L2(t^alpha) operator-norm ratio of that continuation is kept in
    ``details['norm_ratio_max']``.
    """
    grid, tgrid = dec.grid, cfg.tgrid
    hp = values_of(h_plus)
    f0 = cauchy_extension(dec, cfg, hp, project=project)
    if project:
        hp = values_of(hardy_projection(dec, "+", hp))
    h_plus = BoundaryField(grid, hp, in_H=True)
    if E is None or E.is_zero:
        return SolveResult(f0, h_plus, 1, 0.0, 0.0, [], {"f0_norm": _series_norm(f0.values, cfg, grid, None)
                                                          if cfg.alpha != -1 else None})
    geom = WhitneyGeometry(grid, tgrid) if cfg.alpha == -1.0 else None
    t = tgrid.t
    total = f0.values.copy()
    inc = f0.values
    n0 = _series_norm(inc, cfg, grid, geom)
    incs, growth, terms = [], 0, 1
    extra = {}
    while True:
        nxt = _SE(dec, E, t, inc)
        nn = _series_norm(nxt, cfg, grid, geom)
        incs.append(nn)
        total += nxt
        terms += 1
        inc = nxt
        if not np.isfinite(nn):
            raise SeriesDiverged("non-finite increment", incs)
        if len(incs) > 1 and nn > incs[-2]:
            growth += 1
            if growth >= 3:
                raise SeriesDiverged(f"increment grew for 3 consecutive steps (last {nn:.3e})", incs)
        else:
            growth = 0
        if nn < tol * n0 or nn == 0:
            break
        if terms >= max_terms:
            raise SeriesDiverged(f"no convergence within {max_terms} terms", incs)
    if cfg.alpha == 1.0:
        # C22 size of the E f increments, the input norm paired with L2(t)
        extra["E_inc_C22"] = carleson_norm(HalfSpaceField(grid, tgrid, E.apply(inc)))
    rate, ratio_max = _continuation_rate(dec, E, cfg, inc, geom)
    if rate >= 1.0:
        raise SeriesDiverged(f"contraction estimate {rate:.3f} >= 1", incs)
    if rate >= 0.5:
        warnings.warn(f"contraction estimate {rate:.3f} >= 1/2", ContractionWarning, stacklevel=2)
    f = HalfSpaceField(grid, tgrid, total, in_H=True, meta={"kind": "solve_cauchy", "sigma": cfg.sigma})
    extra.update({"f0_norm": n0, "norm_ratio_max": ratio_max,
                  "f_over_h": float(np.sqrt(np.sum(weighted_norm(total, cfg.alpha, tgrid, grid))))
                  / max(float(np.linalg.norm(hp) * np.sqrt(grid.cell_volume)), 1e-300)})
    return SolveResult(f, h_plus, terms, incs[-1] if incs else 0.0, rate, incs, extra)


def _continuation_rate(dec, E, cfg, v, geom, steps=CONTINUATION_STEPS):
    """Geometric-mean growth of ``(S E)^k v`` and its largest single-step ratio."""
    grid, t = dec.grid, cfg.tgrid.t
    nv = _series_norm(v, cfg, grid, geom)
    if nv == 0:
        return 0.0, 0.0
    v = v / nv
    logs, ratios = [], []
    for _ in range(steps):
        w = _SE(dec, E, t, v)
        nw = _series_norm(w, cfg, grid, geom)
        if nw == 0:
            return 0.0, max(ratios, default=0.0)
        logs.append(np.log(nw))
        ratios.append(nw)
        v = w / nw
    return float(np.exp(np.mean(logs))), float(max(ratios))


# ------------------------------------------------------------ representation


def _fit_h_plus(dec: SpectralDecomp, cfg: FlowConfig, r):
    """Least-squares ``a+`` per + channel over the first quarter of the nodes."""
    t = cfg.tgrid.t
    q = max(2, len(t) // 4)
    c = dec.to_coords(r)[..., :q, :]
    phi = flow_amplitudes(dec, cfg.sigma, t[:q], np.ones(dec.K))
    den = np.sum(np.abs(phi) ** 2, axis=-2)
    num = np.sum(np.conj(phi) * c, axis=-2)
    return np.where(dec.plus & (den > 0), num / np.where(den > 0, den, 1), 0)


def _check_H(grid, v, rtol=1e-8):
    err = np.linalg.norm(project_H(grid, v) - v)
    nv = np.linalg.norm(v)
    if nv > 0 and err > rtol * nv:
        raise SliceNotInH(f"slices leave H (relative defect {err / nv:.2e})")


def verify_representation(f: HalfSpaceField, dec: SpectralDecomp, E, cfg: FlowConfig) -> FunctionalReport:
    """Residual of ``f = Lambda^sigma e^{-t Lambda} E0+ h+ + S E f`` with a fitted ``h+``."""
    grid, tgrid = dec.grid, cfg.tgrid
    v = values_of(f)
    _check_H(grid, v)
    SEf = 0 if E is None or E.is_zero else _SE(dec, E, tgrid.t, v)
    r = v - SEf
    a = _fit_h_plus(dec, cfg, r)
    model = dec.from_coords(flow_amplitudes(dec, cfg.sigma, tgrid.t, a))
    res = np.sqrt(np.sum(weighted_norm(r - model, cfg.alpha, tgrid, grid)))
    nf = np.sqrt(np.sum(weighted_norm(v, cfg.alpha, tgrid, grid)))
    h_hat = dec.from_coords(a)
    return FunctionalReport("representation_residual", float(res / nf) if nf > 0 else 0.0, grid.describe(),
                            {"alpha": cfg.alpha, "tgrid": tgrid.describe()}, 1, {"h_plus": h_hat})


def extract_trace(f: HalfSpaceField, dec: SpectralDecomp, E, cfg: FlowConfig) -> BoundaryField:
    """``h = h+ + int_0^inf Lambda^{1 - sigma} e^{-s Lambda} E0- (E f)_s ds``.

    ``meta`` carries the fitted ``h_plus`` and the ratio ``||h|| / ||f||``.
    """
    grid, tgrid = dec.grid, cfg.tgrid
    v = values_of(f)
    _check_H(grid, v)
    a = _fit_h_plus(dec, cfg, v - (0 if E is None or E.is_zero else _SE(dec, E, tgrid.t, v)))
    hp = dec.from_coords(a)
    corr = 0
    if E is not None and not E.is_zero:
        c = dec.to_coords(E.apply(v))
        term = KernelTerm("sum", ~dec.plus, lambda _t: 0.0, lambda _t: np.inf, mult=dec.mu ** (1.0 - cfg.sigma))
        b = kernel_integrals(tgrid.t, dec.mu, c, [term], targets=[0.0])[..., 0, :]
        corr = dec.from_coords(b)
    h = BoundaryField(grid, hp + corr, in_H=True)
    nf = float(np.sqrt(np.sum(weighted_norm(v, cfg.alpha, tgrid, grid))))
    nh = float(np.linalg.norm(h.values) * np.sqrt(grid.cell_volume))
    h.meta.update({"h_plus": hp, "h_over_f": nh / nf if nf > 0 else 0.0})
    return h


def trace_limit_check(f: HalfSpaceField, h, cfg: FlowConfig, dec: SpectralDecomp, mode="dini",
                      ends=6, tol=1e-4) -> FunctionalReport:
    """Lower- and upper-end behaviour of ``Lambda^{-sigma} f_t`` against ``h`` and 0.

    ``dini``: ``t^-1 int_t^{2t} ||Lambda^{-sigma} f_s - h||^2 ds`` at the ``ends``
    smallest admissible t, and the same with ``h = 0`` at the largest.
    ``L2``: ``||Lambda^{-sigma} f_t - h||^2`` at the smallest and largest nodes.
    Values are relative to ``||h||^2``; sequences are listed from the
    innermost node toward the boundary.
    """
    grid, tgrid = dec.grid, cfg.tgrid
    v = values_of(f)
    u = dec.apply_values(dec.mu ** (-cfg.sigma), v) if cfg.sigma != 0 else v
    hv = values_of(h)
    sx = tuple(range(1, u.ndim))
    hn2 = float(np.sum(np.abs(hv) ** 2) * grid.cell_volume)
    d_lo = np.sum(np.abs(u - hv) ** 2, axis=sx) * grid.cell_volume
    d_hi = np.sum(np.abs(u) ** 2, axis=sx) * grid.cell_volume
    if mode == "dini":
        tt, lo = slab_averages(tgrid, d_lo)
        _, hi = slab_averages(tgrid, d_hi)
        lower, upper = lo[:ends][::-1] / hn2, hi[-ends:] / hn2
        lower_t, upper_t = tt[:ends][::-1], tt[-ends:]
    elif mode == "L2":
        lower, upper = d_lo[:ends][::-1] / hn2, d_hi[-ends:] / hn2
        lower_t, upper_t = tgrid.t[:ends][::-1], tgrid.t[-ends:]
    else:
        raise ValueError(f"mode must be 'dini' or 'L2', got {mode!r}")
    monotone = bool(np.all(np.diff(lower) <= 1e-15 * max(lower.max(), 1e-300)))
    ok = monotone and lower[-1] < tol
    return FunctionalReport(f"trace_limit_{mode}", float(lower[-1]), grid.describe(),
                            {"sigma": cfg.sigma, "tgrid": tgrid.describe(), "tol": tol}, 1,
                            {"lower": lower, "lower_t": lower_t, "upper": upper, "upper_t": upper_t,
                             "monotone": monotone, "h_norm_sq": hn2}, passed=ok)


def ode_residual(f: HalfSpaceField, B: TransformedTensor, alpha=0.0):
    """``||d_t f + D B f||_{L2(t^alpha)} / ||f||_{L2(t^alpha)}`` at interior nodes, and the max curl residual.

    The t-derivative is the centred difference in ``log t``.
    """
    grid, tgrid = f.grid, f.tgrid
    v = values_of(f)
    t = tgrid.t
    du = np.log(tgrid.rho)
    shp = (-1,) + (1,) * (grid.n + 1)
    dfdt = (v[2:] - v[:-2]) / (2 * du) / t[1:-1].reshape(shp)
    Bv = np.asarray(B.values)
    if Bv.shape[0] != 1:
        Bv = Bv[1:-1]
    Bf = np.einsum("...ab,...b->...a", Bv, v[1:-1])
    R = dfdt + apply_D(grid, Bf)
    w = (tgrid.trapezoid[1:-1] * t[1:-1] ** alpha).reshape(shp)
    num = np.sqrt(np.sum(w * np.abs(R) ** 2))
    den = np.sqrt(np.sum(w * np.abs(v[1:-1]) ** 2))
    curl = float(np.max(curl_residual(grid, v))) if grid.n > 1 else 0.0
    return float(num / den) if den > 0 else 0.0, curl
