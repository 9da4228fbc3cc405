"""Function-space functionals on the half-space grid.

All t-integrals except :func:`weighted_norm` use trapezoid node weights on
``[t_min, t_max]``; the field is taken to vanish outside the grid.  Lateral
balls ``|y - x| < r`` use the periodic distance on the torus and are
evaluated as FFT convolutions with ball indicators, one per distinct
radius class.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.special import gamma

from .errors import EmptyGrid, NonzeroMeanNegativeOrder, SliceNotInH
from .grid import TGrid, TorusGrid, dft_slice, project_H


@dataclass
class FunctionalReport:
    name: str
    value: float
    grid: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    trials: int = 0
    details: dict = field(default_factory=dict)
    passed: Optional[bool] = None

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _vals(f):
    return np.asarray(getattr(f, "values", f))


@dataclass(frozen=True)
class WhitneyGeometry:
    """Discrete Whitney regions, cones and Carleson boxes on the grids."""

    grid: TorusGrid
    tgrid: TGrid

    @cached_property
    def dist(self) -> np.ndarray:
        """Periodic distance of each node to the origin, shape ``grid.shape``."""
        k = np.arange(self.grid.N)
        d1 = np.minimum(k, self.grid.N - k) * self.grid.dx
        mesh = np.meshgrid(*([d1] * self.grid.n), indexing="ij")
        return np.sqrt(sum(m**2 for m in mesh))

    @cached_property
    def radii(self) -> np.ndarray:
        return np.unique(self.dist)

    def ball_class(self, r):
        """Number of distinct distances strictly below ``r`` (0 = empty ball)."""
        return np.searchsorted(self.radii, np.asarray(r) - 1e-12 * self.grid.dx, side="left")

    @cached_property
    def class_counts(self) -> np.ndarray:
        """Number of nodes in the ball of each radius class (class 0 is empty)."""
        per = np.bincount(np.searchsorted(self.radii, self.dist.ravel()), minlength=len(self.radii))
        return np.concatenate([[0], np.cumsum(per)])

    def ball_weight(self, r):
        """Measure of the periodic ball of radius ``r`` per node it contains.

        Ball integrals are taken as the mean over the nodes in the discrete
        ball times the ball's measure, so balls narrower than a cell keep
        their true size.
        """
        r = np.asarray(r, float)
        n, L = self.grid.n, self.grid.L
        cnt = self.class_counts[self.ball_class(r)]
        if n == 1:
            vol = np.minimum(2 * r, L)
        else:
            unit = np.pi ** (n / 2) / gamma(n / 2 + 1)
            vol = np.where(r <= L / 2, unit * np.maximum(r, 0) ** n, cnt * self.grid.cell_volume)
        return np.where(cnt > 0, vol / np.maximum(cnt, 1), 0.0)

    def _kernel_hat(self, c):
        c = np.asarray(c)
        thr = np.where(c > 0, self.radii[np.maximum(c - 1, 0)], -1.0)
        ker = (self.dist[None] <= thr.reshape((-1,) + (1,) * self.grid.n)).astype(float)
        return np.fft.fftn(ker, axes=tuple(range(1, self.grid.n + 1)))

    def ball_sums(self, G, r):
        """``sum_{|y - x| < r} G(y)`` for ``G`` of shape ``(..., x...)`` per radius.

        ``r`` is broadcast against the leading axis of ``G`` (one radius per
        row) and may be a scalar.
        """
        n = self.grid.n
        axes = tuple(range(G.ndim - n, G.ndim))
        c = self.ball_class(r)
        uc, inv = np.unique(np.atleast_1d(c), return_inverse=True)
        kh = self._kernel_hat(uc)
        Gh = np.fft.fftn(G, axes=axes)
        if np.ndim(r) == 0:
            out = np.fft.ifftn(Gh * kh[0], axes=axes)
        else:
            out = np.fft.ifftn(Gh * kh[inv], axes=axes)
        return out.real if np.isrealobj(G) else out

    def footprint(self, r):
        """Centered boolean footprint of the open ball of radius ``r``."""
        n, N, dx = self.grid.n, self.grid.N, self.grid.dx
        R = int(min(np.ceil(r / dx), N // 2))
        ax = np.arange(-R, R + 1) * dx
        mesh = np.meshgrid(*([ax] * n), indexing="ij")
        return np.sqrt(sum(m**2 for m in mesh)) < r

    def ball_max(self, G, r):
        """``max_{|y - x| < r} G(y)`` for real ``G`` with shape ``grid.shape``."""
        if r <= 0:
            return np.full_like(G, -np.inf)
        if r > self.radii[-1]:
            return np.full_like(G, G.max())
        return ndimage.maximum_filter(G, footprint=self.footprint(r), mode="wrap")

    @cached_property
    def s_ranges(self):
        """Index ranges ``[lo, hi)`` of t-nodes with ``t/2 < s < 2t``."""
        t = self.tgrid.t
        lo = np.searchsorted(t, t / 2, side="right")
        hi = np.searchsorted(t, 2 * t, side="left")
        return lo, hi

    def overlap(self):
        """Max number of Whitney t-ranges containing a node, and its dt/t-normalized value."""
        lo, hi = self.s_ranges
        T = self.tgrid.nodes
        cnt = np.zeros(T, int)
        for j in range(T):
            cnt[lo[j]:hi[j]] += 1
        mx = int(cnt.max())
        return mx, mx * np.log(self.tgrid.rho) / np.log(4.0)

    def carleson_radii(self):
        """Radii for the Carleson sup: t-nodes, lateral grid scales and a geometric tail."""
        t = self.tgrid.t
        diam = self.radii[-1]
        lateral = np.arange(1, int(np.ceil(diam / self.grid.dx)) + 2) * self.grid.dx
        tail = []
        r = t[-1]
        while r < t[-1] + diam + self.grid.dx:
            r *= self.tgrid.rho
            tail.append(r)
        return np.unique(np.concatenate([t, lateral, tail]))


def _slice_sq(f, grid):
    """``|f(t, x)|^2`` summed over components, shape ``(..., T, x...)``."""
    return np.sum(np.abs(_vals(f)) ** 2, axis=-1)


def weighted_norm(f, alpha, tgrid: Optional[TGrid] = None, grid: Optional[TorusGrid] = None):
    """Squared weighted norm ``iint |f|^2 t^alpha dt dx``.

    Exact for data that are piecewise linear in t between the nodes.
    Leading batch axes are kept.
    """
    tgrid = tgrid or f.tgrid
    grid = grid or f.grid
    if abs(alpha) > 1 + 1e-12:
        from .errors import UnsupportedAlpha

        raise UnsupportedAlpha(f"|alpha| = {abs(alpha)} > 1")
    v = _vals(f)
    ax_t = v.ndim - grid.n - 2
    Gv = tgrid.gram_apply(alpha, v, axis=ax_t)
    tot = np.sum(np.conj(v) * Gv, axis=tuple(range(ax_t, v.ndim)))
    return np.real(tot) * grid.cell_volume


def weighted_inner(f, g, alpha, tgrid, grid):
    """``iint <f, g> t^alpha dt dx`` with the same exact-linear Gram."""
    f, g = _vals(f), _vals(g)
    ax_t = f.ndim - grid.n - 2
    Gg = tgrid.gram_apply(alpha, g, axis=ax_t)
    return np.sum(np.conj(f) * Gg, axis=tuple(range(ax_t, f.ndim))) * grid.cell_volume


def whitney_l2(f, geom: WhitneyGeometry):
    """``W2 f(t, x) = t^{-(1+n)/2} ||f||_{L2(W(t, x))}``, shape ``(T, x...)``."""
    q = _slice_sq(f, geom.grid)
    tg, grid = geom.tgrid, geom.grid
    w = tg.trapezoid
    lo, hi = geom.s_ranges
    cum = np.concatenate([np.zeros((1,) + q.shape[1:]), np.cumsum(w.reshape((-1,) + (1,) * grid.n) * q, axis=0)])
    slab = cum[hi] - cum[lo]
    tot = geom.ball_sums(slab, tg.t) * geom.ball_weight(tg.t).reshape((-1,) + (1,) * grid.n)
    return np.sqrt(np.maximum(tot, 0) / tg.t.reshape((-1,) + (1,) * grid.n) ** (1 + grid.n))


def whitney_linf(g, geom: WhitneyGeometry):
    """``W_inf g(t, x)``: max of the scalar ``g >= 0`` over the Whitney region."""
    lo, hi = geom.s_ranges
    out = np.zeros_like(g)
    for j, t in enumerate(geom.tgrid.t):
        if hi[j] <= lo[j]:
            continue
        slab = g[lo[j]:hi[j]].max(axis=0)
        out[j] = geom.ball_max(slab, t)
    return out


def nontangential_max(G, geom: WhitneyGeometry):
    """``N G(x) = sup_{|y - x| < s} G(s, y)`` for scalar ``G >= 0``."""
    out = np.zeros(G.shape[1:])
    for j, t in enumerate(geom.tgrid.t):
        out = np.maximum(out, geom.ball_max(G[j], t))
    return out


def nontangential_norm(f, geom: Optional[WhitneyGeometry] = None):
    """``||N(W2 f)||_2``."""
    geom = geom or WhitneyGeometry(f.grid, f.tgrid)
    Nf = nontangential_max(whitney_l2(f, geom), geom)
    return float(np.sqrt(np.sum(Nf**2) * geom.grid.cell_volume))


def carleson_functional(G, geom: WhitneyGeometry):
    """``C G(x) = sup_r r^{-n} iint_{|y - x| < r - s} G(s, y) ds dy`` for scalar ``G >= 0``."""
    grid, tg = geom.grid, geom.tgrid
    t, w = tg.t, tg.trapezoid
    radii = geom.carleson_radii()
    nclass = len(geom.radii) + 1
    kh = geom._kernel_hat(np.arange(nclass))
    axes = tuple(range(1, grid.n + 1))
    acc = np.zeros((len(radii),) + grid.shape)
    for i in range(tg.nodes):
        if not np.any(G[i]):
            continue
        rows = np.flatnonzero(radii > t[i])
        if rows.size == 0:
            continue
        # ball sums of this slice for every lateral radius class
        balls = np.fft.ifftn(np.fft.fftn(G[i])[None] * kh, axes=axes).real
        rr = radii[rows] - t[i]
        acc[rows] += (w[i] * geom.ball_weight(rr)).reshape((-1,) + (1,) * grid.n) * balls[geom.ball_class(rr)]
    acc /= radii.reshape((-1,) + (1,) * grid.n) ** grid.n
    return acc.max(axis=0)


def area_functional(G, geom: WhitneyGeometry):
    """``A G(x) = iint_{|y - x| < s} G(s, y) s^{-n} ds dy``."""
    grid, tg = geom.grid, geom.tgrid
    balls = geom.ball_sums(G, tg.t) * geom.ball_weight(tg.t).reshape((-1,) + (1,) * grid.n)
    wt = (tg.trapezoid / tg.t**grid.n).reshape((-1,) + (1,) * grid.n)
    return np.sum(wt * balls, axis=0)


def carleson_norm(g, geom: Optional[WhitneyGeometry] = None, whitney=True):
    """``||C(W2 g)||_2`` (or ``||C g||_2`` for a scalar ``g`` with ``whitney=False``)."""
    geom = geom or WhitneyGeometry(g.grid, g.tgrid)
    G = whitney_l2(g, geom) if whitney else np.abs(_vals(g))
    Cg = carleson_functional(G, geom)
    return float(np.sqrt(np.sum(Cg**2) * geom.grid.cell_volume))


def area_norm(g, geom: Optional[WhitneyGeometry] = None, whitney=True):
    geom = geom or WhitneyGeometry(g.grid, g.tgrid)
    G = whitney_l2(g, geom) if whitney else np.abs(_vals(g))
    Ag = area_functional(G, geom)
    return float(np.sqrt(np.sum(Ag**2) * geom.grid.cell_volume))


def carleson_dahlberg(grid: TorusGrid, tgrid: TGrid, E) -> float:
    """``sup_x C(W_inf(|E|^2 / t))(x) ** 1/2`` for a matrix field ``E``."""
    E = np.asarray(E)
    if tgrid.nodes < 2 or grid.size == 0:
        raise EmptyGrid("empty grid")
    full = np.broadcast_to(E, (tgrid.nodes,) + grid.shape + E.shape[-2:])
    op = np.linalg.norm(full, ord=2, axis=(-2, -1))
    geom = WhitneyGeometry(grid, tgrid)
    g = op**2 / tgrid.t.reshape((-1,) + (1,) * grid.n)
    if not np.any(g):
        return 0.0
    return float(np.sqrt(carleson_functional(whitney_linf(g, geom), geom).max()))


def duality_pairing(f, g, tgrid: Optional[TGrid] = None, grid: Optional[TorusGrid] = None):
    """``iint <f, g> dt dx`` (complex; exact for piecewise linear data)."""
    tgrid = tgrid or f.tgrid
    grid = grid or f.grid
    return complex(weighted_inner(f, g, 0.0, tgrid, grid))


def duality_check(f, g, geom: Optional[WhitneyGeometry] = None) -> FunctionalReport:
    geom = geom or WhitneyGeometry(f.grid, f.tgrid)
    p = duality_pairing(f, g, geom.tgrid, geom.grid)
    nf = nontangential_norm(f, geom)
    cg = carleson_norm(g, geom)
    C = abs(p) / (nf * cg) if nf * cg > 0 else 0.0
    return FunctionalReport("duality_pairing", C, geom.grid.describe(),
                            {"tgrid": geom.tgrid.describe()}, 1,
                            {"pairing": p, "N22": nf, "C22": cg})


def sobolev_norm(grid: TorusGrid, h, s, mean_rtol=1e-12):
    """``(sum_xi |xi|^{2s} |h^(xi)|^2)^{1/2}`` scaled so that ``s = 0`` gives the L2 norm."""
    hh = dft_slice(grid, _vals(h))
    k = grid.abs_xi
    tot = np.sum(np.abs(hh) ** 2, axis=-1)
    axes = grid.spatial_axes
    axes = tuple(a + 1 for a in axes)  # component axis already summed
    zero = (0,) * grid.n
    if s < 0:
        mean = tot[(...,) + zero]
        if np.any(mean > mean_rtol**2 * np.sum(tot, axis=axes)):
            raise NonzeroMeanNegativeOrder("negative-order norm needs zero-mean data")
    wk = np.where(k > 0, k, 1.0) ** (2 * s)
    wk = np.where(k > 0, wk, 1.0 if s >= 0 else 0.0)
    return np.sqrt(np.sum(wk * tot, axis=axes) * grid.cell_volume)


def slab_averages(tgrid: TGrid, q, axis=0):
    """``t^{-1} int_t^{2t} q(s) ds`` at the nodes with ``2t <= t_max`` (q piecewise linear)."""
    t = tgrid.t
    q = np.moveaxis(np.asarray(q, float), axis, 0)
    cum = np.concatenate([np.zeros((1,) + q.shape[1:]), np.cumsum(np.diff(t).reshape((-1,) + (1,) * (q.ndim - 1))
                                                                  * (q[1:] + q[:-1]) / 2, axis=0)])
    keep = np.flatnonzero(2 * t <= t[-1] * (1 + 1e-12))

    def integral_to(x):
        j = np.clip(np.searchsorted(t, x, side="right") - 1, 0, len(t) - 2)
        th = ((x - t[j]) / (t[j + 1] - t[j])).reshape((-1,) + (1,) * (q.ndim - 1))
        qx = (1 - th) * q[j] + th * q[j + 1]
        return cum[j] + (x - t[j]).reshape(th.shape) * (q[j] + qx) / 2

    tt = t[keep]
    vals = (integral_to(2 * tt) - integral_to(tt)) / tt.reshape((-1,) + (1,) * (q.ndim - 1))
    return tt, vals


def slab_sup_norm(f, sigma, dec=None, check_H=True, rtol=1e-8):
    """``sup_t t^{-1} int_t^{2t} ||Lambda^{-sigma} f_s||^2 ds``."""
    grid, tgrid = f.grid, f.tgrid
    v = _vals(f)
    if check_H:
        err = np.linalg.norm(project_H(grid, v) - v)
        if err > rtol * max(np.linalg.norm(v), 1e-300):
            raise SliceNotInH(f"slices leave H (relative defect {err / np.linalg.norm(v):.2e})")
    if sigma != 0:
        if dec is None:
            raise ValueError("sigma != 0 needs a spectral decomposition")
        v = dec.apply_values(dec.mu ** (-sigma), v)
    q = np.sum(np.abs(v) ** 2, axis=tuple(range(v.ndim - grid.n - 1, v.ndim))) * grid.cell_volume
    _, avg = slab_averages(tgrid, q, axis=v.ndim - grid.n - 2)
    return np.max(avg, axis=0)


def sandwich_constants(f, geom: Optional[WhitneyGeometry] = None) -> FunctionalReport:
    """The three sides of the slab / non-tangential / dt/t sandwich and their ratios."""
    geom = geom or WhitneyGeometry(f.grid, f.tgrid)
    lower = float(slab_sup_norm(f, 0.0, check_H=False))
    mid = nontangential_norm(f, geom) ** 2
    upper = float(weighted_norm(f, -1.0))
    return FunctionalReport("nontangential_sandwich", mid, geom.grid.describe(), {}, 1,
                            {"slab_sup": lower, "N_sq": mid, "dt_over_t": upper,
                             "lower_constant": lower / mid if mid > 0 else 0.0,
                             "upper_constant": mid / upper if upper > 0 else 0.0})
