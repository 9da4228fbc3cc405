"""The singular integral S = F(DB0), its truncations, splittings and S~.

Fields are moved to channel coordinates with the spectral decomposition;
every operator then acts channel by channel in t.  Data are piecewise
linear between t-nodes and held constant on ``[0, t_min]``; the upper
integral is cut at ``t_max``.  Two engines evaluate the t-integrals
exactly for such data:

* the sweep in :mod:`cauchyop._kernels` (plain S, O(T) per channel);
* :func:`kernel_integrals`, which handles piecewise quadratic weights
  ``w(t, s)`` (the truncation cut-offs) and the three exponent shapes
  ``t - s``, ``s - t`` and ``t + s`` (O(T^2) per channel).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._kernels import channel_sweep, phi
from .errors import SliceNotInH, UnsupportedAlpha
from .funcalc import SpectralDecomp
from .funcnorms import FunctionalReport, WhitneyGeometry, carleson_norm, nontangential_norm, weighted_norm
from .grid import HalfSpaceField, TGrid, project_H, values_of


def eta0(x):
    """Ramp: 0 on ``(-inf, 1]``, linear on ``(1, 2)``, 1 on ``[2, inf)``."""
    return np.clip(np.asarray(x, float) - 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class TruncationProfile:
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def eta(self, t):
        t = np.asarray(t, float)
        return eta0(t / self.eps) * (1.0 - eta0(2.0 * self.eps * t))

    def eta_pm(self, t, s, sign):
        sgn = 1.0 if sign in ("+", 1) else -1.0
        return eta0(sgn * (np.asarray(t) - np.asarray(s)) / self.eps) * self.eta(t) * self.eta(s)

    @property
    def breaks(self):
        e = self.eps
        return np.array([e, 2 * e, 1 / (2 * e), 1 / e])


# ------------------------------------------------------------ coordinates


def _coords(dec, f, require_H, rtol=1e-8):
    v = values_of(f)
    if require_H:
        err = np.linalg.norm(project_H(dec.grid, v) - v)
        nv = np.linalg.norm(v)
        if nv > 0 and err > rtol * nv:
            raise SliceNotInH(f"input slices leave H (relative defect {err / nv:.2e})")
    return dec.to_coords(v)


def _wrap(dec, tgrid, coords, kind):
    return HalfSpaceField(dec.grid, tgrid, dec.from_coords(coords), in_H=True, meta={"kind": kind})


def S_coords(dec: SpectralDecomp, t, a, adjoint=False, use_numba=None):
    """S on channel amplitudes ``(..., T, K)``; ``adjoint`` gives the Euclidean transpose."""
    return channel_sweep(a, t, dec.mu, dec.plus, adjoint=adjoint, use_numba=use_numba)


def apply_S(dec: SpectralDecomp, f, tgrid: Optional[TGrid] = None, require_H=True, use_numba=None):
    """``S f``; ``f`` is a :class:`HalfSpaceField` (or an array with ``tgrid``)."""
    tgrid = tgrid or f.tgrid
    a = _coords(dec, f, require_H)
    return _wrap(dec, tgrid, S_coords(dec, tgrid.t, a, use_numba=use_numba), "S")


def apply_S_raw(dec: SpectralDecomp, tgrid: TGrid, v, adjoint=False):
    """S (or its Euclidean adjoint) on raw arrays ``(..., T, x..., d)`` of general L2 fields."""
    if adjoint:
        z = dec.from_coords_adjoint(v)
        return dec.to_coords_adjoint(S_coords(dec, tgrid.t, z, adjoint=True))
    return dec.from_coords(S_coords(dec, tgrid.t, dec.to_coords(v)))


# ------------------------------------------------------------ cell engine


@dataclass
class KernelTerm:
    """One term ``coef * int_lo^hi mult_k w(t, s) exp(-mu_k l(t, s)) a_k(s) ds``.

    ``shape`` is ``"fwd"`` (``l = t - s``), ``"bwd"`` (``l = s - t``) or
    ``"sum"`` (``l = t + s``).  ``w`` must be at most quadratic in ``s``
    between consecutive points of ``breaks(t)`` and the t-nodes.
    """

    shape: str
    mask: np.ndarray
    lo: Callable
    hi: Callable
    w: Callable = None
    breaks: Callable = None
    coef: float = 1.0
    mult: Optional[np.ndarray] = None


def _interp(t, a, s):
    """Piecewise linear data (held constant below ``t[0]``) at points ``s``; ``a`` is (B, T, K)."""
    j = np.clip(np.searchsorted(t, s, side="right") - 1, 0, len(t) - 2)
    th = np.clip((s - t[j]) / (t[j + 1] - t[j]), 0.0, 1.0)
    th = np.where(s < t[0], 0.0, th)
    return (1 - th)[None, :, None] * a[:, j] + th[None, :, None] * a[:, j + 1]


def kernel_integrals(t, mu, a, terms, targets=None):
    """Evaluate a sum of :class:`KernelTerm` at target nodes.

    ``a`` has shape ``(..., T, K)``; returns the same shape, or
    ``(..., len(targets), K)`` for explicit target times.  Exact for
    piecewise linear ``a``.
    """
    a = np.asarray(a, dtype=complex)
    lead = a.shape[:-2]
    T, K = a.shape[-2:]
    a3 = a.reshape((-1, T, K))
    times = t if targets is None else np.asarray(targets, float)
    out = np.zeros((a3.shape[0], len(times), K), dtype=complex)
    base = np.concatenate([[0.0], t])
    tmax = t[-1]
    for term in terms:
        mask = np.asarray(term.mask, bool)
        if not mask.any():
            continue
        kk = np.flatnonzero(mask)
        muk = mu[kk]
        mult = muk if term.mult is None else np.asarray(term.mult)[kk]
        ak = a3[:, :, kk]
        for jj, tj in enumerate(times):
            lo, hi = max(term.lo(tj), 0.0), min(term.hi(tj), tmax)
            if hi <= lo:
                continue
            pts = [base[(base > lo) & (base < hi)], [lo, hi]]
            if term.breaks is not None:
                b = np.asarray(term.breaks(tj), float)
                pts.append(b[(b > lo) & (b < hi)])
            edges = np.unique(np.concatenate(pts))
            p, q = edges[:-1], edges[1:]
            h = q - p
            keep = h > 1e-14 * max(hi, 1.0)
            p, q, h = p[keep], q[keep], h[keep]
            if term.shape == "fwd":
                s0, s1, off = q, p, tj - q
            elif term.shape == "bwd":
                s0, s1, off = p, q, p - tj
            else:
                s0, s1, off = p, q, tj + p
            if term.w is None:
                w0 = wm = w1 = np.ones_like(p)
            else:
                w0, wm, w1 = term.w(tj, s0), term.w(tj, (s0 + s1) / 2), term.w(tj, s1)
                nz = (np.abs(w0) + np.abs(wm) + np.abs(w1)) > 0
                if not nz.any():
                    continue
                p, q, h, s0, s1, off = p[nz], q[nz], h[nz], s0[nz], s1[nz], off[nz]
                w0, wm, w1 = w0[nz], wm[nz], w1[nz]
            c1w = -3 * w0 + 4 * wm - w1
            c2w = 2 * w0 - 4 * wm + 2 * w1
            f0 = _interp(t, ak, s0)
            df = _interp(t, ak, s1) - f0
            z = h[:, None] * muk[None, :]
            P = phi(z, order=3)
            pref = h[:, None] * np.exp(-np.maximum(off, 0.0)[:, None] * muk[None, :])
            coeffs = (w0[None, :, None] * f0,
                      w0[None, :, None] * df + c1w[None, :, None] * f0,
                      c1w[None, :, None] * df + c2w[None, :, None] * f0,
                      c2w[None, :, None] * df)
            acc = sum(np.einsum("sk,bsk->bk", pref * P[i], coeffs[i]) for i in range(4))
            out[:, jj, kk] += term.coef * mult * acc
    return out.reshape(lead + (len(times), K))


def _inf(_t):
    return np.inf


def _zero(_t):
    return 0.0


def _ident(t):
    return t


def exact_S_terms(dec, sigma=None):
    mult = None if sigma is None else dec.mu ** (1.0 - sigma)
    return [KernelTerm("fwd", dec.plus, _zero, _ident, mult=mult),
            KernelTerm("bwd", ~dec.plus, _ident, _inf, mult=mult)]


def truncated_terms(dec, prof: TruncationProfile, pos=None, neg=None):
    pos = dec.plus if pos is None else pos
    neg = ~dec.plus if neg is None else neg
    e, br = prof.eps, prof.breaks
    return [KernelTerm("fwd", pos, _zero, _ident, lambda t, s: prof.eta_pm(t, s, "+"),
                       lambda t: np.concatenate([br, [t - e, t - 2 * e]])),
            KernelTerm("bwd", neg, _ident, _inf, lambda t, s: prof.eta_pm(t, s, "-"),
                       lambda t: np.concatenate([br, [t + e, t + 2 * e]]))]


def _F1_terms(dec, prof, pos, neg):
    e, br = prof.eps, prof.breaks

    def bpm(t):
        return np.concatenate([br, [t - e, t - 2 * e, t + e, t + 2 * e]])

    return [KernelTerm("fwd", pos, _zero, _ident, lambda t, s: prof.eta_pm(t, s, "+"), bpm),
            KernelTerm("bwd", neg, _ident, _inf, lambda t, s: prof.eta_pm(t, s, "-"), bpm),
            KernelTerm("sum", neg, _ident, _inf, lambda t, s: prof.eta_pm(t, s, "-"), bpm, coef=-1.0),
            KernelTerm("sum", neg, _zero, lambda t: t + 2 * e,
                       lambda t, s: prof.eta(t) * prof.eta(s) - prof.eta_pm(t, s, "-"), bpm, coef=-1.0)]


def _F3_terms(dec, prof, pos, neg):
    e, br = prof.eps, prof.breaks

    def bpm(t):
        return np.concatenate([br, [t - e, t - 2 * e, t + e, t + 2 * e]])

    return [KernelTerm("fwd", pos, _zero, _ident, lambda t, s: prof.eta_pm(t, s, "+"), bpm),
            KernelTerm("sum", pos, _zero, _ident, lambda t, s: prof.eta_pm(t, s, "+"), bpm, coef=-1.0),
            KernelTerm("sum", pos, lambda t: t - 2 * e, _inf,
                       lambda t, s: prof.eta(t) * prof.eta(s) - prof.eta_pm(t, s, "+"), bpm, coef=-1.0),
            KernelTerm("bwd", neg, _ident, _inf, lambda t, s: prof.eta_pm(t, s, "-"), bpm)]


def _rank_term(dec, prof, t, a, mask, weight_mu_in):
    """``eta(t) e^{-t mu} b`` (or with ``mu`` moved outside) where ``b = int eta(s) e^{-s mu} a ds``.

    With ``weight_mu_in`` the factor ``mu`` sits inside the s-integral (F2 shape),
    otherwise it multiplies the output (F4 shape).  Returns ``(out, b)``.
    """
    mu = dec.mu
    term = KernelTerm("sum", mask, _zero, _inf, lambda _t, s: prof.eta(s), lambda _t: prof.breaks,
                      mult=mu if weight_mu_in else np.ones_like(mu))
    b = kernel_integrals(t, mu, a, [term], targets=np.array([0.0]))[..., 0, :]
    outer = np.exp(-np.multiply.outer(t, mu)) * prof.eta(t)[:, None]
    if not weight_mu_in:
        outer = outer * mu
    out = np.where(mask, outer * b[..., None, :], 0.0)
    return out, b


# ------------------------------------------------------------ public ops


def apply_S_exact(dec: SpectralDecomp, f, tgrid=None, require_H=True):
    """S through the cell engine (independent of the sweep)."""
    tgrid = tgrid or f.tgrid
    a = _coords(dec, f, require_H)
    return _wrap(dec, tgrid, kernel_integrals(tgrid.t, dec.mu, a, exact_S_terms(dec)), "S_exact")


def apply_S_truncated(dec: SpectralDecomp, f, prof: TruncationProfile, tgrid=None, require_H=True):
    """``S_eps f`` with the kernels multiplied by ``eta_eps^+-(t, s)``."""
    tgrid = tgrid or f.tgrid
    a = _coords(dec, f, require_H)
    return _wrap(dec, tgrid, kernel_integrals(tgrid.t, dec.mu, a, truncated_terms(dec, prof)), "S_eps")


def S_tilde_coords(dec, t, a, sigma):
    return dec.mu ** (-sigma) * S_coords(dec, t, a)


def apply_S_tilde(dec: SpectralDecomp, sigma, f, tgrid=None, require_H=True, decompose=False):
    """``S~ f`` (kernel ``Lambda^{1 - sigma} e^{-|t - s| Lambda}``).

    With ``decompose`` the four pieces of the near/far splitting are also
    evaluated by the cell engine and returned in ``meta['parts']`` as
    fields ``I``, ``II``, ``III``, ``IV``.
    """
    tgrid = tgrid or f.tgrid
    if not 0.0 <= sigma <= 1.0:
        raise ValueError("sigma must lie in [0, 1]")
    a = _coords(dec, f, require_H)
    out = _wrap(dec, tgrid, S_tilde_coords(dec, tgrid.t, a, sigma), "S_tilde")
    if decompose:
        parts = {name: dec.from_coords(kernel_integrals(tgrid.t, dec.mu, a, terms))
                 for name, terms in S_tilde_parts(dec, sigma).items()}
        out.meta["parts"] = parts
    return out


def S_tilde_parts(dec, sigma):
    m = dec.mu ** (1.0 - sigma)
    P, N = dec.plus, ~dec.plus

    def half(t):
        return t / 2

    def dbl(t):
        return 2 * t

    return {
        "I": [KernelTerm("fwd", P, half, _ident, mult=m), KernelTerm("bwd", N, _ident, dbl, mult=m)],
        "II": [KernelTerm("fwd", P, _zero, half, mult=m), KernelTerm("sum", P, _zero, half, coef=-1.0, mult=m)],
        "III": [KernelTerm("bwd", N, dbl, _inf, mult=m), KernelTerm("sum", N, dbl, _inf, coef=-1.0, mult=m)],
        "IV": [KernelTerm("sum", P, _zero, half, mult=m), KernelTerm("sum", N, dbl, _inf, mult=m)],
    }


def splitting_coords(dec, t, a, prof, which, swap=False):
    """Channel amplitudes of ``F1 .. F4`` applied to ``a``.

    ``swap`` exchanges the roles of the two channel halves, which turns
    ``F3`` into the adjoint of ``F1`` and ``F4`` into the adjoint of ``F2``
    when used on the adjoint decomposition.
    """
    pos, neg = (dec.plus, ~dec.plus) if not swap else (~dec.plus, dec.plus)
    if which == "F1":
        return kernel_integrals(t, dec.mu, a, _F1_terms(dec, prof, pos, neg)), None
    if which == "F3":
        return kernel_integrals(t, dec.mu, a, _F3_terms(dec, prof, pos, neg)), None
    if which == "F2":
        return _rank_term(dec, prof, t, a, neg, True)
    if which == "F4":
        return _rank_term(dec, prof, t, a, pos, False)
    raise ValueError(f"unknown splitting term {which!r}")


def splitting_terms(dec: SpectralDecomp, f, prof: TruncationProfile, which, tgrid=None, require_H=True, swap=False):
    """One term of ``S_eps = F1 + F2`` or ``S_eps = F3 + F4``.

    F2 and F4 are computed through their rank structure: the boundary
    field ``b`` they factor through is returned in ``meta['boundary']``.
    """
    tgrid = tgrid or f.tgrid
    a = _coords(dec, f, require_H)
    c, b = splitting_coords(dec, tgrid.t, a, prof, which, swap)
    out = _wrap(dec, tgrid, c, which)
    if b is not None:
        out.meta["boundary"] = dec.from_coords(b)
    return out


def rank_pairing(dec: SpectralDecomp, tgrid: TGrid, prof: TruncationProfile, f, g, which="F2", swap=False):
    """``<F f, g>`` for the rank terms, with the outer t-integral done exactly.

    ``F f(t) = sum_k eta(t) c_k e^{-t mu_k} b_k r_k`` where ``c_k`` is 1 (F2)
    or ``mu_k`` (F4).  The pairing ``iint <F f, g> dt`` (Euclidean sum over
    x-nodes) is evaluated with ``g`` piecewise linear in t, so no
    interpolation of the output enters.
    """
    t = tgrid.t
    pos, neg = (dec.plus, ~dec.plus) if not swap else (~dec.plus, dec.plus)
    mask = neg if which == "F2" else pos
    _, b = _rank_term(dec, prof, t, dec.to_coords(f), mask, which == "F2")
    gam = dec.from_coords_adjoint(g)                 # (T, K): <r_k, g(t)>
    term = KernelTerm("sum", mask, _zero, _inf, lambda _t, s: prof.eta(s), lambda _t: prof.breaks,
                      mult=np.ones(dec.K))
    c = kernel_integrals(t, np.conj(dec.mu), gam, [term], targets=np.array([0.0]))[0]
    outer = np.ones(dec.K) if which == "F2" else dec.mu
    return complex(np.sum(np.where(mask, b * outer * np.conj(c), 0.0)))


def splitting_duality(dec: SpectralDecomp, tgrid: TGrid, prof: TruncationProfile, f, g):
    """``<F2 f, g>`` and ``<f, F4' g>`` where F4' is the F4 form on the adjoint decomposition.

    On ``B0* D`` the channel halves trade places in the duality, so F4' acts
    on the channels with negative real part.  Returns both numbers.
    """
    adj = dec.adjoint()
    lhs = rank_pairing(dec, tgrid, prof, f, g, "F2")
    rhs = np.conj(rank_pairing(adj, tgrid, prof, g, f, "F4", swap=True))
    return lhs, complex(rhs)


# ------------------------------------------------------------ norm estimation


def _random_fields(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _smooth_random(rng, grid, tgrid, count, bandwidth=8):
    """Random fields smooth in x (few modes) and in log t."""
    shape = (count, tgrid.nodes) + grid.shape + (grid.d,)
    v = _random_fields(rng, shape)
    vh = np.fft.fftn(v, axes=tuple(range(2, 2 + grid.n)))
    vh[..., grid.abs_xi > bandwidth * 2 * np.pi / grid.L, :] = 0
    v = np.fft.ifftn(vh, axes=tuple(range(2, 2 + grid.n)))
    u = np.log(tgrid.t)
    k = np.arange(1, 5)
    c = rng.standard_normal((count, len(k)))
    mod = 1 + np.einsum("bk,kt->bt", c, np.cos(np.outer(k, (u - u[0]) / (u[-1] - u[0]) * np.pi))) / 2
    return v * mod.reshape(mod.shape + (1,) * (grid.n + 1))


def _apply_op(op, dec, tgrid, v, E=None, prof=None, sigma=None, adjoint=False):
    if op == "S":
        return apply_S_raw(dec, tgrid, v, adjoint=adjoint)
    if op == "S_E":
        if adjoint:
            return E.apply(apply_S_raw(dec, tgrid, v, adjoint=True), adjoint=True)
        return apply_S_raw(dec, tgrid, E.apply(v))
    if adjoint:
        raise NotImplementedError
    a = dec.to_coords(v)
    if op == "S_eps":
        return dec.from_coords(kernel_integrals(tgrid.t, dec.mu, a, truncated_terms(dec, prof)))
    if op == "S_tilde":
        return dec.from_coords(S_tilde_coords(dec, tgrid.t, a, sigma))
    raise ValueError(f"unknown operator {op!r}")


def _power_iteration(op, dec, grid, tgrid, alpha, iters, rng, **kw):
    """Largest singular value in L2(t^alpha) with the weighted adjoint ``G^-1 A^H G``."""
    v = _random_fields(rng, (tgrid.nodes,) + grid.shape + (grid.d,))
    est = 0.0
    for _ in range(iters):
        nv = np.sqrt(weighted_norm(v, alpha, tgrid, grid))
        v = v / nv
        Av = _apply_op(op, dec, tgrid, v, **kw)
        est = float(np.sqrt(weighted_norm(Av, alpha, tgrid, grid)))
        if est == 0:
            return 0.0, v
        w = tgrid.gram_apply(alpha, Av, axis=0)
        w = _apply_op(op, dec, tgrid, w, adjoint=True, **kw)
        v = tgrid.gram_solve(alpha, w, axis=0)
    return est, v


def estimate_operator_norm(op, dec: SpectralDecomp, tgrid: TGrid, alpha, trials=20, iters=30, rng=None,
                           E=None, prof=None, sigma=None) -> FunctionalReport:
    """Norm estimate of ``op`` in ``{"S", "S_eps", "S_tilde", "S_E"}`` on ``L2(t^alpha)``.

    For ``alpha = -1`` the report also carries the ``L2(t^-1) -> N22``
    estimate, for ``alpha = +1`` the ``C22 -> L2(t)`` estimate
    (``details['endpoint']``).  S and S_E use power iteration; the others
    random probes plus the leading S vector.
    """
    if abs(alpha) > 1:
        raise UnsupportedAlpha(f"|alpha| = {abs(alpha)} > 1")
    rng = np.random.default_rng(0) if rng is None else rng
    grid = dec.grid
    kw = {"E": E, "prof": prof, "sigma": sigma}
    if op == "S_E" and (E is None or E.is_zero):
        return FunctionalReport(f"norm_{op}", 0.0, grid.describe(), {"alpha": alpha, "tgrid": tgrid.describe()},
                                trials, {"l2": 0.0, "endpoint": 0.0 if abs(alpha) == 1 else None})
    probes = [_random_fields(rng, (tgrid.nodes,) + grid.shape + (grid.d,)) for _ in range(trials)]
    if op in ("S", "S_E"):
        l2, top = _power_iteration(op, dec, grid, tgrid, alpha, iters, rng, **kw)
        probes.append(top)
    else:
        _, top = _power_iteration("S", dec, grid, tgrid, alpha, max(iters // 3, 5), rng)
        probes.append(top)
        l2 = 0.0
    geom = WhitneyGeometry(grid, tgrid) if abs(alpha) == 1 else None
    endpoint = 0.0
    for v in probes:
        nin = np.sqrt(weighted_norm(v, alpha, tgrid, grid))
        Av = _apply_op(op, dec, tgrid, v, **kw)
        if op not in ("S", "S_E"):
            l2 = max(l2, float(np.sqrt(weighted_norm(Av, alpha, tgrid, grid)) / nin))
        if alpha == -1:
            fo = HalfSpaceField(grid, tgrid, Av)
            endpoint = max(endpoint, nontangential_norm(fo, geom) / nin)
        elif alpha == 1:
            fi = HalfSpaceField(grid, tgrid, v)
            endpoint = max(endpoint, float(np.sqrt(weighted_norm(Av, 1.0, tgrid, grid))) / carleson_norm(fi, geom))
    details = {"l2": l2, "endpoint": endpoint if abs(alpha) == 1 else None, "iters": iters}
    value = endpoint if abs(alpha) == 1 else l2
    return FunctionalReport(f"norm_{op}", value, grid.describe(), {"alpha": alpha, "tgrid": tgrid.describe()},
                            trials, details)


def apply_SE(dec: SpectralDecomp, E, f, tgrid=None):
    """``S (E f)``; ``E f`` is a general L2 field, so no H check."""
    tgrid = tgrid or f.tgrid
    v = E.apply(values_of(f))
    return _wrap(dec, tgrid, S_coords(dec, tgrid.t, dec.to_coords(v)), "S_E")


def upper_tail_estimate(dec: SpectralDecomp, tgrid: TGrid):
    """Per-channel factor ``exp(-re|lam| (t_max - t))`` at ``t = t_min`` for the cut upper integral."""
    return np.where(dec.plus, 0.0, np.exp(-dec.mu.real * (tgrid.t_max - tgrid.t_min)))
