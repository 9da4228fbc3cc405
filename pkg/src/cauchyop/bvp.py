"""Hardy projections, Neumann/Dirichlet restriction maps and well-posedness sweeps.

Boundary data in H are represented by coordinates ``y`` with
``y(xi) = |xi|^{-sigma} Q(xi)^* h^(xi)`` (``Q`` from
:func:`grid.h_orthonormal_basis`, scaled by the cell volume), so that the
Euclidean norm of ``y`` is the homogeneous ``H^{-sigma}`` norm.  The first
``m`` entries per frequency are the normal part, the rest the tangential
part, so both restriction maps are coordinate projections.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coeff import (CoefficientTensor, PerturbationField, carleson_dahlberg_norm, check_accretivity,
                    extract_E, select_B0, transform_A_to_B)
from .errors import NotHermitianWarning, SeriesDiverged
from .flow import FlowConfig, square_function_norm
from .funcalc import SpectralDecomp, Symbol, apply_symbol, assemble_DB0
from .funcnorms import FunctionalReport, sobolev_norm
from .grid import TGrid, TorusGrid, dft_slice, h_orthonormal_basis, idft_slice
from .solver import extract_trace, solve_cauchy

WP_THRESHOLD = 1e-6


class HCoordinates:
    """Isometry between H (with the ``H^{-sigma}`` norm) and ``C^{dim H}``."""

    def __init__(self, grid: TorusGrid, sigma: float):
        self.grid, self.sigma = grid, sigma
        self.Q = h_orthonormal_basis(grid)
        self.nz = grid.nonzero
        self.scale = grid.abs_xi.reshape(-1)[self.nz] ** (-sigma) * np.sqrt(grid.cell_volume)
        self.dim = self.Q.shape[0] * self.Q.shape[2]

    def to_y(self, h):
        g = self.grid
        hh = dft_slice(g, np.asarray(h)).reshape(np.shape(h)[: np.ndim(h) - g.n - 1] + (g.size, g.d))
        y = np.einsum("bdk,...bd->...bk", np.conj(self.Q), hh[..., self.nz, :]) * self.scale[:, None]
        return y.reshape(y.shape[:-2] + (self.dim,))

    def from_y(self, y):
        g = self.grid
        y = np.asarray(y).reshape(np.shape(y)[:-1] + (self.Q.shape[0], self.Q.shape[2]))
        hh = np.zeros(y.shape[:-2] + (g.size, g.d), dtype=complex)
        hh[..., self.nz, :] = np.einsum("bdk,...bk->...bd", self.Q, y / self.scale[:, None])
        return idft_slice(g, hh.reshape(y.shape[:-2] + g.shape + (g.d,)))

    def part(self, which):
        """Index mask of the normal (``Neu``) or tangential (``Dir``) coordinates."""
        m, k2 = self.grid.m, self.Q.shape[2]
        sel = np.zeros(k2, bool)
        sel[:m] = which == "Neu"
        sel[m:] = which == "Dir"
        return np.tile(sel, self.Q.shape[0])


@dataclass
class HardyProjector:
    matrix: np.ndarray
    sigma: float
    coords: HCoordinates
    E_sup: float = 0.0
    deviation: float = 0.0
    idempotence: float = 0.0
    null_defect: float = 0.0
    contraction: float = 0.0
    meta: dict = field(default_factory=dict)


@dataclass
class ConditioningReport:
    which: str
    sigma_min: float
    sigma_max: float
    verdict: str
    singular_values: np.ndarray = None

    @property
    def ratio(self) -> float:
        return self.sigma_min / self.sigma_max if self.sigma_max > 0 else 0.0


def _chi_matrix(dec: SpectralDecomp, hc: HCoordinates, sign):
    basis = hc.from_y(np.eye(hc.dim))
    return hc.to_y(apply_symbol(dec, Symbol.chi(sign), basis)).T


def hardy_projection_EA(dec: SpectralDecomp, E: Optional[PerturbationField], cfg: FlowConfig,
                        tol=1e-12) -> HardyProjector:
    """Matrix of ``E_A+`` in H-coordinates, one column per basis vector.

    With ``E`` nonzero every column is the trace of ``solve_cauchy`` applied
    to ``E0+`` of the basis vector (all columns in one batched solve).
    """
    hc = HCoordinates(dec.grid, cfg.sigma)
    P0 = _chi_matrix(dec, hc, "+")
    contraction = 0.0
    if E is None or E.is_zero:
        P = P0.copy()
    else:
        hp = hc.from_y(P0.T)
        res = solve_cauchy(dec, E, cfg, hp, tol=tol)
        h = extract_trace(res.f, dec, E, cfg)
        P = hc.to_y(h.values).T
        contraction = res.contraction_estimate
    nP = max(np.linalg.norm(P, 2), 1e-300)
    Pm = _chi_matrix(dec, hc, "-")
    return HardyProjector(P, cfg.sigma, hc,
                          E_sup=0.0 if E is None else E.sup_norm,
                          deviation=float(np.linalg.norm(P - P0, 2)),
                          idempotence=float(np.linalg.norm(P @ P - P, 2) / nP),
                          null_defect=float(np.linalg.norm(P @ Pm, 2) / nP),
                          contraction=contraction,
                          meta={"dim": hc.dim, "mode": dec.mode})


def range_basis(P: HardyProjector, rtol=1e-8):
    """Orthonormal basis of the range of the projector (columns)."""
    U, s, _ = np.linalg.svd(P.matrix)
    r = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    return U[:, :r]


def restriction_map(P: HardyProjector, which, threshold=WP_THRESHOLD) -> ConditioningReport:
    """Extreme singular values of range(E_A+) -> normal (Neu) or tangential (Dir) part."""
    if which not in ("Neu", "Dir"):
        raise ValueError(f"which must be 'Neu' or 'Dir', got {which!r}")
    U = range_basis(P)
    Mr = U[P.coords.part(which)]
    s = np.linalg.svd(Mr, compute_uv=False)
    if Mr.shape[0] < U.shape[1]:
        s = np.concatenate([s, np.zeros(U.shape[1] - Mr.shape[0])])
    smin, smax = float(s.min()), float(s.max())
    return ConditioningReport(which, smin, smax, "well_posed" if smin > threshold else "ill_posed", s)


def _dec_for(A: CoefficientTensor, cache_dir=None) -> SpectralDecomp:
    B = transform_A_to_B(A)
    return assemble_DB0(A.grid, B.values[0], cache_dir=cache_dir)


def _is_hermitian(A: CoefficientTensor, rtol=1e-12):
    v = A.values
    return np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2)))) <= rtol * max(np.max(np.abs(v)), 1e-300)


def rellich_check(A: CoefficientTensor, h_plus, tgrid: TGrid = None, dec: SpectralDecomp = None) -> FunctionalReport:
    """``int_0^inf ||f_t||^2 dt`` against ``||(f_0)_perp||_{H^-1/2} ||(f_0)_par||_{H^-1/2}`` at sigma = 1/2.

    ``f_t = Lambda^{1/2} e^{-t Lambda} E0+ h+`` for the t-independent ``A``;
    the left side uses the closed-form full-range square function.
    """
    if not _is_hermitian(A):
        warnings.warn("coefficients are not Hermitian", NotHermitianWarning, stacklevel=2)
    dec = dec or _dec_for(A)
    tgrid = tgrid or TGrid()
    cfg = FlowConfig(0.0, tgrid)
    hp = apply_symbol(dec, Symbol.chi("+"), np.asarray(h_plus))
    lhs = square_function_norm(dec, cfg, hp, sigma=0.5).details["full"]
    f0 = dec.apply_values(dec.mu**0.5, hp)
    g = A.grid
    perp, par = f0.copy(), f0.copy()
    perp[..., g.m:] = 0
    par[..., : g.m] = 0
    rhs = float(sobolev_norm(g, perp, -0.5) * sobolev_norm(g, par, -0.5))
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    return FunctionalReport("rellich", ratio, g.describe(), {"sigma": 0.5}, 1, {"lhs": lhs, "rhs": rhs})


def perturbation_sweep(A0: CoefficientTensor, direction: CoefficientTensor, eps_list, cfg: FlowConfig,
                       threshold=WP_THRESHOLD) -> FunctionalReport:
    """Restriction-map conditioning along ``A0 + eps * direction``.

    A t-independent direction is handled exactly with ``B0 = B(eps)``; a
    t-dependent one perturbatively around ``B0 = B(A0)`` with
    ``E = I - B0^-1 B(eps)``.
    """
    grid = A0.grid
    rows = []
    t_dep = not direction.t_independent
    base_dec = _dec_for(A0) if t_dep else None
    base_B0 = select_B0(transform_A_to_B(A0)) if t_dep else None
    for eps in eps_list:
        A = CoefficientTensor(grid, A0.values + eps * direction.values, tgrid=direction.tgrid)
        row = {"eps": float(eps), "sigma_min": np.nan, "sigma_max": np.nan, "contraction": 0.0,
               "E_sup": 0.0, "E_star": 0.0, "verdict": ""}
        if not check_accretivity(A).ok:
            row["verdict"] = "not_accretive"
            rows.append(row)
            continue
        try:
            if t_dep:
                E = extract_E(transform_A_to_B(A), base_B0)
                row["E_sup"] = E.sup_norm
                row["E_star"] = carleson_dahlberg_norm(E)
                P = hardy_projection_EA(base_dec, E, cfg)
            else:
                P = hardy_projection_EA(_dec_for(A), None, cfg)
            rep = [restriction_map(P, w, threshold) for w in ("Neu", "Dir")]
            row.update(sigma_min=min(r.sigma_min for r in rep), sigma_max=max(r.sigma_max for r in rep),
                       contraction=P.contraction,
                       verdict="well_posed" if all(r.verdict == "well_posed" for r in rep) else "ill_posed")
        except SeriesDiverged:
            row["verdict"] = "diverged"
        rows.append(row)
    smin = np.array([r["sigma_min"] for r in rows], float)
    jumps = np.abs(np.diff(smin))
    return FunctionalReport("perturbation_sweep", float(np.nanmax(jumps)) if jumps.size else 0.0, grid.describe(),
                            {"sigma": cfg.sigma, "eps": [float(e) for e in eps_list]}, len(rows),
                            {"rows": rows, "max_jump": float(np.nanmax(jumps)) if jumps.size else 0.0})


SWEEP_COLUMNS = ("eps", "sigma_min", "sigma_max", "contraction", "E_sup", "E_star", "verdict")


def write_sweep_csv(report: FunctionalReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in report.details["rows"]:
            w.writerow({k: r[k] for k in SWEEP_COLUMNS})


def duality_check(A: CoefficientTensor, sigma, tgrid: TGrid = None, threshold=WP_THRESHOLD) -> FunctionalReport:
    """Dirichlet for ``A`` at ``sigma`` vs ``A*`` at ``1 - sigma``, Neumann with the roles swapped.

    Each problem is posed on the Hardy space in ``H^{-s}``: Dirichlet for
    ``A`` uses ``s = 1 - sigma`` and for ``A*`` uses ``s = sigma``; Neumann
    for ``A`` uses ``s = sigma`` and for ``A*`` uses ``s = 1 - sigma``.
    """
    tgrid = tgrid or TGrid()
    dA, dS = _dec_for(A), _dec_for(A.adjoint())

    def cond(dec, s, which):
        return restriction_map(hardy_projection_EA(dec, None, FlowConfig.from_sigma(s, tgrid)), which, threshold)

    pairs = {"Dir": (cond(dA, 1 - sigma, "Dir"), cond(dS, sigma, "Dir")),
             "Neu": (cond(dA, sigma, "Neu"), cond(dS, 1 - sigma, "Neu"))}
    agree = all(a.verdict == b.verdict for a, b in pairs.values())
    details = {k: {"A": {"sigma_min": a.sigma_min, "verdict": a.verdict},
                   "A_star": {"sigma_min": b.sigma_min, "verdict": b.verdict}} for k, (a, b) in pairs.items()}
    details["agree"] = agree
    return FunctionalReport("wp_duality", float(agree), A.grid.describe(), {"sigma": sigma}, 1, details, passed=agree)
