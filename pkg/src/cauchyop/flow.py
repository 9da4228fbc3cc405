"""Decaying flow: e^{-t Lambda}, E0+-, the Cauchy extension and square functions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma, gammaincc

from .errors import NegativeTime, NotInHardyRange, UnsupportedAlpha
from .funcalc import SpectralDecomp, Symbol, apply_symbol
from .funcnorms import FunctionalReport
from .grid import BoundaryField, HalfSpaceField, TGrid, values_of

_GX, _GW = np.polynomial.legendre.leggauss(6)


@dataclass(frozen=True)
class FlowConfig:
    """Weight exponent ``alpha`` and the derived trace regularity ``sigma = (alpha + 1) / 2``."""

    alpha: float
    tgrid: TGrid

    def __post_init__(self):
        if not -1.0 <= self.alpha <= 1.0:
            raise UnsupportedAlpha(f"alpha = {self.alpha} outside [-1, 1]")

    @property
    def sigma(self) -> float:
        return (self.alpha + 1.0) / 2.0

    @classmethod
    def from_sigma(cls, sigma, tgrid):
        return cls(2.0 * sigma - 1.0, tgrid)


def semigroup(dec: SpectralDecomp, t, h):
    """``e^{-t Lambda} h``."""
    if t < 0:
        raise NegativeTime(f"t = {t} < 0")
    return apply_symbol(dec, Symbol.exp_decay(t), h)


def hardy_projection(dec: SpectralDecomp, sign, h):
    """``E0+ h`` or ``E0- h``."""
    return apply_symbol(dec, Symbol.chi(sign), h)


def hardy_defect(dec: SpectralDecomp, h) -> float:
    """Relative change of ``h`` under ``E0+``."""
    v = values_of(h)
    p = values_of(hardy_projection(dec, "+", v))
    nv = np.linalg.norm(v)
    return float(np.linalg.norm(p - v) / nv) if nv > 0 else 0.0


def flow_amplitudes(dec: SpectralDecomp, sigma, t, a):
    """Channel amplitudes of ``Lambda^sigma e^{-t Lambda} E0+`` applied to coordinates ``a``.

    ``t`` has shape ``(T,)``; ``a`` has shape ``(..., K)``; the result is ``(..., T, K)``.
    """
    mu = dec.mu
    fac = np.where(dec.plus, mu**sigma * np.exp(-np.multiply.outer(t, mu)), 0.0)
    return fac * np.asarray(a)[..., None, :]


def cauchy_extension(dec: SpectralDecomp, cfg: FlowConfig, h_plus, rtol=1e-8, project=False) -> HalfSpaceField:
    """``f(t_j) = Lambda^sigma e^{-t_j Lambda} E0+ h_plus`` on every t-node."""
    v = values_of(h_plus)
    if project:
        v = values_of(hardy_projection(dec, "+", v))
    else:
        defect = hardy_defect(dec, v)
        if defect > rtol:
            raise NotInHardyRange(f"E0+ changes h_plus by {defect:.2e} (relative)")
    a = dec.to_coords(v)
    amps = flow_amplitudes(dec, cfg.sigma, cfg.tgrid.t, a)
    vals = dec.from_coords(amps)
    return HalfSpaceField(dec.grid, cfg.tgrid, vals, in_H=True,
                          meta={"kind": "cauchy_extension", "sigma": cfg.sigma})


def _block_gram(dec: SpectralDecomp):
    """``<r_k, r_l>`` for right eigenvectors within each block, physical L2 scaling."""
    RH = np.conj(np.swapaxes(dec.R, -1, -2))
    return (RH @ dec.R) * dec.grid.cell_volume


def _quad_form(G, c, nb, kb):
    cb = c.reshape(c.shape[:-1] + (nb, kb))
    return np.real(np.einsum("...bk,bkl,...bl->...", np.conj(cb), G, cb))


def square_function_norm(dec: SpectralDecomp, cfg: FlowConfig, h, sigma=None) -> FunctionalReport:
    """``int ||(t Lambda)^sigma e^{-t Lambda} E0+ h||^2 dt/t`` (squared).

    ``value`` is the integral over ``[t_min, t_max]`` (Gauss-Legendre in
    ``log t`` per cell).  ``details['full']`` is the closed-form value over
    ``(0, inf)`` for ``sigma > 0``; ``details['tail']`` their difference and
    ``details['tail_bound']`` an a-priori estimate from the eigenvalues.
    """
    sigma = cfg.sigma if sigma is None else sigma
    tg = cfg.tgrid
    a = dec.to_coords(values_of(h))
    a = np.where(dec.plus, a, 0)
    mu = dec.mu
    G = _block_gram(dec)
    # grid part
    u0, u1 = np.log(tg.t[:-1]), np.log(tg.t[1:])
    uq = (u0[:, None] + (u1 - u0)[:, None] * (_GX + 1) / 2).ravel()
    wq = ((u1 - u0)[:, None] * _GW / 2).ravel()
    tq = np.exp(uq)
    c = (np.multiply.outer(tq, mu) ** sigma) * np.exp(-np.multiply.outer(tq, mu)) * a
    grid_val = float(np.sum(wq * _quad_form(G, c, dec.nb, dec.kb)))
    # full range, closed form
    if sigma > 0:
        mb = mu.reshape(dec.nb, dec.kb)
        ab = a.reshape(dec.nb, dec.kb)
        den = np.conj(mb)[:, :, None] + mb[:, None, :]
        kern = gamma(2 * sigma) * (np.conj(mb)[:, :, None] ** sigma) * (mb[:, None, :] ** sigma) / den ** (2 * sigma)
        full = float(np.real(np.einsum("bk,bkl,bkl,bl->", np.conj(ab), G, kern, ab)))
        amp = np.abs(a) ** 2 * np.real(np.einsum("bkk->bk", G)).ravel()
        re, am = mu.real, np.abs(mu)
        lower = (tg.t_min * am) ** (2 * sigma) / (2 * sigma)
        upper = (am / (2 * re)) ** (2 * sigma) * gamma(2 * sigma) * gammaincc(2 * sigma, 2 * tg.t_max * re)
        tail_bound = float(np.sum(amp * (lower + upper)))
    else:
        full, tail_bound = float("inf"), float("inf")
    hn = float(np.sum(np.abs(values_of(h)) ** 2) * dec.grid.cell_volume)
    return FunctionalReport("square_function", grid_val, dec.grid.describe(),
                            {"sigma": sigma, "tgrid": tg.describe()}, 1,
                            {"full": full, "tail": full - grid_val, "tail_bound": tail_bound,
                             "h_norm_sq": hn, "ratio": (full if sigma > 0 else grid_val) / hn if hn > 0 else 0.0})


def decay_residual(dec: SpectralDecomp, cfg: FlowConfig, h_plus) -> float:
    """Relative residual of ``d/dt f + Lambda f = 0`` for the flow, by centred differences in log t."""
    f = cauchy_extension(dec, FlowConfig(-1.0, cfg.tgrid), h_plus, project=True).values
    t = cfg.tgrid.t
    du = np.log(cfg.tgrid.rho)
    dfdt = (f[2:] - f[:-2]) / (2 * du) / t[1:-1].reshape((-1,) + (1,) * (f.ndim - 1))
    lam_f = dec.apply_values(dec.mu, f[1:-1])
    return float(np.linalg.norm(dfdt + lam_f) / np.linalg.norm(lam_f))


def as_boundary(dec: SpectralDecomp, v) -> BoundaryField:
    return BoundaryField(dec.grid, v, in_H=True)
