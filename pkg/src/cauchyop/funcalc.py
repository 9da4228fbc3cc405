"""Functional calculus of DB0 on the discrete H.

A :class:`SpectralDecomp` stores, per block, right eigenvectors ``R`` and
left rows ``L`` of DB0 restricted to H.  The left rows are built as
``diag(1/lam) V^-1 Q* D B0`` so that ``L`` annihilates the null space of
DB0: applying a symbol to any L2 field realizes the splitting
``L2 = N(DB0) + E0+ L2 + E0- L2`` with the symbol extended by zero on
``N(DB0)``.

Two layouts exist.  ``blocks``: B0 independent of x, one ``d x 2m``
problem per nonzero frequency.  ``dense``: B0 depends on x (n = 1 only),
one matrix over all modes, where multiplication by B0 couples frequencies
through the Fourier coefficients of B0.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .container import read_container, write_container
from .errors import (DimensionUnsupported, IllConditionedEigenbasis, NegativeTime, NullEigenvalue,
                     SectorViolation, SymbolUndefinedAtEigenvalue)
from .grid import BoundaryField, TorusGrid, d_symbol, dft_slice, h_orthonormal_basis, idft_slice, project_H

NULL_RTOL = 1e-10
SECTOR_MARGIN = 1e-6
COND_MAX = 1e8


@dataclass(frozen=True)
class TangentialD:
    """Per-frequency symbol of D."""

    grid: TorusGrid

    @property
    def symbols(self) -> np.ndarray:
        return d_symbol(self.grid)

    def apply(self, h):
        from .grid import apply_D

        return apply_D(self.grid, h)


# ---------------------------------------------------------------- symbols


def split_spectrum(lam):
    """``(sign, |lam|)`` with ``|lam| = +-lam`` chosen so that ``re |lam| > 0``."""
    lam = np.asarray(lam, dtype=complex)
    s = np.where(lam.real >= 0, 1.0, -1.0)
    return s, s * lam


@dataclass(frozen=True)
class Symbol:
    """A scalar holomorphic function on the bisector, evaluated at eigenvalues."""

    tag: str
    params: tuple = ()
    func: Optional[Callable] = field(default=None, compare=False)

    def __call__(self, lam):
        s, mu = split_spectrum(lam)
        p = self.params
        if self.tag == "identity":
            return np.ones_like(mu)
        if self.tag == "sgn":
            return s.astype(complex)
        if self.tag == "chi_plus":
            return (s > 0).astype(complex)
        if self.tag == "chi_minus":
            return (s < 0).astype(complex)
        if self.tag == "abs_pow":
            sigma = p[0]
            if sigma < 0 and not (len(p) > 1 and p[1]):
                raise SymbolUndefinedAtEigenvalue("negative powers of |DB0| are not bounded symbols")
            return mu**sigma
        if self.tag == "exp_decay":
            if p[0] < 0:
                raise NegativeTime(f"t = {p[0]} < 0")
            return np.exp(-p[0] * mu)
        if self.tag == "flow_kernel":
            t, s_, side = p
            if side == "+":
                return np.where((s > 0) & (s_ < t), mu * np.exp(-(t - s_) * mu), 0)
            return np.where((s < 0) & (s_ > t), mu * np.exp(-(s_ - t) * mu), 0)
        if self.tag == "psi_sf":
            sigma, t = p
            return np.where(s > 0, (t * mu) ** sigma * np.exp(-t * mu), 0)
        if self.tag == "product":
            return p[0](lam) * p[1](lam)
        if self.tag == "sum":
            return p[0](lam) + p[1](lam)
        if self.tag == "custom":
            return np.asarray(self.func(lam), dtype=complex)
        raise ValueError(f"unknown symbol tag {self.tag!r}")

    def __mul__(self, other):
        return Symbol("product", (self, other))

    def __add__(self, other):
        return Symbol("sum", (self, other))

    @staticmethod
    def sgn():
        return Symbol("sgn")

    @staticmethod
    def chi(sign="+"):
        return Symbol("chi_plus" if sign in ("+", 1) else "chi_minus")

    @staticmethod
    def abs_pow(sigma, allow_negative=False):
        return Symbol("abs_pow", (float(sigma), bool(allow_negative)))

    @staticmethod
    def exp_decay(t):
        return Symbol("exp_decay", (float(t),))

    @staticmethod
    def flow_kernel(t, s, side):
        return Symbol("flow_kernel", (float(t), float(s), side))

    @staticmethod
    def psi_sf(sigma, t=1.0):
        return Symbol("psi_sf", (float(sigma), float(t)))

    @staticmethod
    def custom(func, name="custom"):
        return Symbol("custom", (name,), func)


# ----------------------------------------------------------- decomposition


def _b0_dense(grid: TorusGrid, B0v: np.ndarray) -> np.ndarray:
    """Matrix of multiplication by B0(x) on unitary Fourier coefficients (n = 1)."""
    N, d = grid.N, grid.d
    b0 = np.broadcast_to(B0v, (N, d, d))
    bt = np.fft.fft(b0, axis=0) / N
    k = np.arange(N)
    diff = (k[:, None] - k[None, :]) % N
    return bt[diff].transpose(0, 2, 1, 3).reshape(N * d, N * d)


@dataclass
class SpectralDecomp:
    """Spectral data of DB0 on H (see module docstring)."""

    grid: TorusGrid
    mode: str
    lam: np.ndarray            # (nb, kb)
    R: np.ndarray              # (nb, db, kb)
    L: np.ndarray              # (nb, kb, db)
    Q: np.ndarray              # (nb, db, kb)
    M: np.ndarray              # (nb, kb, kb), Q* D B0 Q
    P: Optional[np.ndarray] = None  # (nb, kb, db), M^-1 Q* D B0 (Schur mode)
    omega: float = 0.0
    cond: float = 1.0
    schur_mode: bool = False
    adjoint_of: Optional[str] = None
    key: str = ""
    B0: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def nb(self):
        return self.lam.shape[0]

    @property
    def kb(self):
        return self.lam.shape[1]

    @property
    def K(self):
        return self.nb * self.kb

    @property
    def lam_flat(self):
        return self.lam.reshape(-1)

    @property
    def sign(self):
        return split_spectrum(self.lam_flat)[0]

    @property
    def mu(self):
        """``|lam|`` per channel, flat."""
        return split_spectrum(self.lam_flat)[1]

    @property
    def plus(self):
        return self.sign > 0

    @property
    def sector_param(self):
        """Sector half-angle used where the calculus needs one: ``(omega + pi/2) / 2``."""
        return (self.omega + np.pi / 2) / 2

    # -- gather / scatter on Fourier coefficients
    def _gather(self, hh):
        g = self.grid
        flat = hh.reshape(hh.shape[: hh.ndim - g.n - 1] + (g.size, g.d))
        if self.mode == "blocks":
            return flat[..., g.nonzero, :]
        return flat.reshape(flat.shape[:-2] + (1, g.size * g.d))

    def _scatter(self, blocks):
        g = self.grid
        lead = blocks.shape[:-2]
        if self.mode == "blocks":
            out = np.zeros(lead + (g.size, g.d), dtype=complex)
            out[..., g.nonzero, :] = blocks
        else:
            out = blocks.reshape(lead + (g.size, g.d))
        return out.reshape(lead + g.shape + (g.d,))

    def _require_eig(self):
        if self.schur_mode:
            raise IllConditionedEigenbasis("channel coordinates are unavailable in Schur mode")

    def to_coords(self, h):
        """Channel amplitudes ``(..., K)`` of a field with layout ``(..., x..., d)``."""
        self._require_eig()
        hh = dft_slice(self.grid, np.asarray(getattr(h, "values", h), dtype=complex))
        a = np.einsum("bkd,...bd->...bk", self.L, self._gather(hh))
        return a.reshape(a.shape[:-2] + (self.K,))

    def from_coords(self, a):
        self._require_eig()
        a = np.asarray(a, dtype=complex)
        a = a.reshape(a.shape[:-1] + (self.nb, self.kb))
        blocks = np.einsum("bdk,...bk->...bd", self.R, a)
        return idft_slice(self.grid, self._scatter(blocks))

    def to_coords_adjoint(self, a):
        """Euclidean adjoint of :meth:`to_coords` (unitary DFT)."""
        a = np.asarray(a, dtype=complex).reshape(np.shape(a)[:-1] + (self.nb, self.kb))
        blocks = np.einsum("bkd,...bk->...bd", np.conj(self.L), a)
        return idft_slice(self.grid, self._scatter(blocks))

    def from_coords_adjoint(self, h):
        hh = dft_slice(self.grid, np.asarray(h, dtype=complex))
        a = np.einsum("bdk,...bd->...bk", np.conj(self.R), self._gather(hh))
        return a.reshape(a.shape[:-2] + (self.K,))

    def apply_values(self, values, h):
        """``b(DB0) h`` for per-channel symbol values ``(K,)``."""
        if self.schur_mode:
            raise IllConditionedEigenbasis("use apply_symbol with a Symbol in Schur mode")
        return self.from_coords(np.asarray(values) * self.to_coords(h))

    def reconstruction_error(self) -> float:
        """Relative error of ``R diag(lam) L`` against D B0 on H."""
        DB = self.meta.get("DB_on_Q")
        if DB is None or self.schur_mode:
            return 0.0
        rec = np.einsum("bdk,bk,bke,bef->bdf", self.R, self.lam, self.L, self.Q)
        return float(np.max(np.abs(rec - DB)) / max(np.max(np.abs(DB)), 1e-300))

    def biorthogonality_error(self) -> float:
        if self.schur_mode:
            return 0.0
        G = np.einsum("bkd,bdl->bkl", self.L, self.R)
        return float(np.max(np.abs(G - np.eye(self.kb))))

    def adjoint(self) -> "SpectralDecomp":
        """Decomposition of ``(DB0)* = B0* D``, obtained by similarity from ``D B0*``."""
        if self.B0 is None:
            raise ValueError("decomposition has no B0 attached")
        B0h = np.conj(np.swapaxes(self.B0, -1, -2))
        base = assemble_DB0(self.grid, B0h)
        base._require_eig()
        if self.mode == "blocks":
            b = B0h.reshape(self.grid.d, self.grid.d)
            R = np.einsum("de,bek->bdk", b, base.R)
            L = np.einsum("bkd,de->bke", base.L, np.linalg.inv(b))
        else:
            Bd = _b0_dense(self.grid, B0h.reshape(-1, self.grid.d, self.grid.d))
            R = (Bd @ base.R[0])[None]
            L = np.linalg.solve(Bd.T, base.L[0].T).T[None]
        return SpectralDecomp(self.grid, self.mode, base.lam, R, L, base.Q, base.M, None,
                              base.omega, base.cond, False, self.key, base.key, B0h, {})


def content_key(grid: TorusGrid, B0v: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(repr(sorted(grid.describe().items())).encode())
    h.update(np.ascontiguousarray(B0v, dtype=np.complex128).tobytes())
    h.update(str(B0v.shape).encode())
    return h.hexdigest()[:24]


_CACHE: dict = {}


def _b0_array(grid, B0):
    v = np.asarray(getattr(B0, "values", B0), dtype=complex)
    if v.ndim == grid.n + 3:
        if v.shape[0] != 1:
            raise ValueError("B0 must be t-independent")
        v = v[0]
    if v.ndim == 2:
        v = v.reshape((1,) * grid.n + v.shape)
    return v


def assemble_DB0(grid: TorusGrid, B0, force_schur=False, cache_dir=None) -> SpectralDecomp:
    """Assemble DB0 on H and eigen-decompose it.

    ``B0`` is a matrix, a ``(x..., d, d)`` field (broadcast axes allowed) or
    a :class:`TransformedTensor`.  Raises :class:`NullEigenvalue` or
    :class:`SectorViolation`; an ill-conditioned eigenbasis switches to
    Schur mode instead of raising.
    """
    B0v = _b0_array(grid, B0)
    x_indep = all(s == 1 for s in B0v.shape[:-2])
    key = content_key(grid, B0v) + ("s" if force_schur else "")
    if key in _CACHE:
        return _CACHE[key]
    if cache_dir is not None:
        path = os.path.join(cache_dir, f"decomp_{key}.cop")
        if os.path.exists(path):
            dec = load_decomp(path)
            _CACHE[key] = dec
            return dec

    Qb = h_orthonormal_basis(grid)
    Dsym = d_symbol(grid)
    if x_indep:
        mode = "blocks"
        b0 = B0v.reshape(grid.d, grid.d)
        DB = Dsym[grid.nonzero] @ b0                     # (nb, d, d)
        Q = Qb
    else:
        if grid.n != 1:
            raise DimensionUnsupported("x-dependent B0 is supported for n = 1 only")
        mode = "dense"
        N, d, k2 = grid.N, grid.d, 2 * grid.m
        Bd = _b0_dense(grid, B0v.reshape(-1, d, d))
        Dd = scipy.linalg.block_diag(*Dsym)
        DB = (Dd @ Bd)[None]
        Q = np.zeros((1, N * d, k2 * len(grid.nonzero)), dtype=complex)
        for i, k in enumerate(grid.nonzero):
            Q[0, k * d:(k + 1) * d, i * k2:(i + 1) * k2] = Qb[i]
    QH = np.conj(np.swapaxes(Q, -1, -2))
    DBQ = DB @ Q
    M = QH @ DBQ
    lam, V = np.linalg.eig(M)
    absl = np.abs(lam)
    if np.min(absl) <= NULL_RTOL * np.max(absl):
        raise NullEigenvalue(f"eigenvalue {np.min(absl):.3e} vanishes relative to {np.max(absl):.3e}")
    _, mu = split_spectrum(lam)
    omega = float(np.max(np.abs(np.angle(mu))))
    if omega >= np.pi / 2 - SECTOR_MARGIN:
        raise SectorViolation(f"sector angle {omega:.6f} reaches pi/2")
    cond = float(np.max(np.linalg.cond(V)))
    schur = force_schur or cond > COND_MAX
    meta = {"DB_on_Q": DBQ}
    if schur:
        P = np.linalg.solve(M, QH @ DB)
        R = L = None
        dec = SpectralDecomp(grid, mode, lam, np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), Q, M, P,
                             omega, cond, True, None, key, B0v, meta)
    else:
        R = Q @ V
        L = (np.linalg.solve(V, QH @ DB)) / lam[..., :, None]
        dec = SpectralDecomp(grid, mode, lam, R, L, Q, M, None, omega, cond, False, None, key, B0v, meta)
    _CACHE[key] = dec
    if cache_dir is not None and not schur:
        save_decomp(os.path.join(cache_dir, f"decomp_{key}.cop"), dec)
    return dec


def clear_cache():
    _CACHE.clear()


def save_decomp(path, dec: SpectralDecomp):
    header = {"kind": "decomposition", "mode": dec.mode, "key": dec.key, "omega": dec.omega,
              "cond": dec.cond, **dec.grid.describe()}
    write_container(path, header, {"lam": dec.lam, "R": dec.R, "L": dec.L, "Q": dec.Q, "M": dec.M,
                                   "B0": dec.B0, "DBQ": dec.meta["DB_on_Q"]})


def load_decomp(path) -> SpectralDecomp:
    h, a = read_container(path)
    grid = TorusGrid(h["n"], h["m"], h["N"], h["L"])
    return SpectralDecomp(grid, h["mode"], a["lam"], a["R"], a["L"], a["Q"], a["M"], None,
                          h["omega"], h["cond"], False, None, h["key"], a["B0"], {"DB_on_Q": a["DBQ"]})


# ------------------------------------------------------------- application


def _schur_apply(dec: SpectralDecomp, b: Symbol, h):
    hh = dft_slice(dec.grid, h)
    x = np.einsum("bkd,...bd->...bk", dec.P, dec._gather(hh))
    out = np.empty_like(x)
    for i in range(dec.nb):
        fM, _ = scipy.linalg.funm(dec.M[i], lambda z: b(z), disp=False)
        out[..., i, :] = x[..., i, :] @ fM.T
    blocks = np.einsum("bdk,...bk->...bd", dec.Q, out)
    return idft_slice(dec.grid, dec._scatter(blocks))


def apply_symbol(dec: SpectralDecomp, b, h, project=False):
    """``b(DB0) h``.  ``b`` is a :class:`Symbol` or an array of channel values.

    Input may be a :class:`BoundaryField` or an array ``(..., x..., d)``.
    With ``project`` the input is first projected onto H.
    """
    is_field = isinstance(h, BoundaryField)
    v = np.asarray(getattr(h, "values", h), dtype=complex)
    if project or (is_field and not h.in_H):
        v = project_H(dec.grid, v)
    if dec.schur_mode:
        if not isinstance(b, Symbol):
            raise IllConditionedEigenbasis("Schur mode needs a Symbol, not channel values")
        out = _schur_apply(dec, b, v)
    else:
        vals = b(dec.lam_flat) if isinstance(b, Symbol) else np.asarray(b)
        out = dec.apply_values(vals, v)
    return BoundaryField(dec.grid, out, in_H=True) if is_field else out


def block_operator(dec: SpectralDecomp, b) -> np.ndarray:
    """Per-block matrices of ``b(DB0)`` in the orthonormal H coordinates."""
    if dec.schur_mode:
        return np.stack([scipy.linalg.funm(dec.M[i], lambda z: b(z), disp=False)[0] for i in range(dec.nb)])
    vals = b(dec.lam) if isinstance(b, Symbol) else np.asarray(b).reshape(dec.lam.shape)
    QH = np.conj(np.swapaxes(dec.Q, -1, -2))
    return np.einsum("bcd,bdk,bk,bke,bef->bcf", QH, dec.R, vals, dec.L, dec.Q)


def verify_calculus(dec: SpectralDecomp, rng=None, probes=4, taus=None):
    """Identity suite for the calculus; returns a FunctionalReport."""
    from .funcnorms import FunctionalReport
    from .grid import apply_D

    rng = np.random.default_rng(0) if rng is None else rng
    g = dec.grid
    h = rng.standard_normal((probes,) + g.shape + (g.d,)) + 1j * rng.standard_normal((probes,) + g.shape + (g.d,))
    h = project_H(g, h)
    nrm = np.linalg.norm(h)

    def ap(b, x):
        return apply_symbol(dec, b, x)

    S, Cp, Cm = Symbol.sgn(), Symbol.chi("+"), Symbol.chi("-")
    dev = {}
    dev["sgn_squared"] = np.linalg.norm(ap(S, ap(S, h)) - h) / nrm
    dev["chi_sum"] = np.linalg.norm(ap(Cp, h) + ap(Cm, h) - h) / nrm
    dev["chi_plus_idempotent"] = np.linalg.norm(ap(Cp, ap(Cp, h)) - ap(Cp, h)) / nrm
    dev["chi_minus_idempotent"] = np.linalg.norm(ap(Cm, ap(Cm, h)) - ap(Cm, h)) / nrm
    dev["chi_orthogonal"] = np.linalg.norm(ap(Cp, ap(Cm, h))) / nrm
    s, t = 0.3, 0.7
    dev["semigroup"] = np.linalg.norm(ap(Symbol.exp_decay(s), ap(Symbol.exp_decay(t), h))
                                      - ap(Symbol.exp_decay(s + t), h)) / nrm
    # Lambda against D (B0 (sgn h)) computed in physical space
    B0 = np.broadcast_to(dec.B0, g.shape + (g.d, g.d))
    sh = ap(S, h)
    lam_phys = apply_D(g, np.einsum("...ab,...b->...a", B0, sh))
    lam_sym = ap(Symbol.abs_pow(1.0), h)
    dev["lambda_is_DB0_sgn"] = np.linalg.norm(lam_phys - lam_sym) / np.linalg.norm(lam_sym)
    dev["lambda_commutes_E0"] = np.linalg.norm(ap(Symbol.abs_pow(1.0), ap(Cp, h))
                                               - ap(Cp, ap(Symbol.abs_pow(1.0), h))) / np.linalg.norm(lam_sym)
    b1, b2 = Symbol.exp_decay(0.2), Symbol.psi_sf(0.5, 0.4)
    dev["homomorphism"] = np.linalg.norm(ap(b1 * b2, h) - ap(b1, ap(b2, h))) / nrm
    _, mu = split_spectrum(dec.lam)
    min_re_abs = float(np.min(mu.real))
    # resolvent bound over tau = 2^-20..2^20
    taus = 2.0 ** np.arange(-20, 21) if taus is None else taus
    res = 0.0
    for tau in taus:
        A = np.eye(dec.kb) + 1j * tau * dec.M
        res = max(res, float(np.max(np.linalg.norm(np.linalg.inv(A), ord=2, axis=(-2, -1)))))
    # ||b(DB0)|| / sup|b| across the symbol set
    ratios = {}
    for name, b in [("sgn", S), ("chi_plus", Cp), ("chi_minus", Cm), ("exp_decay", Symbol.exp_decay(1.0)),
                    ("psi_sf", Symbol.psi_sf(0.5, 1.0))]:
        ops = block_operator(dec, b)
        sup = float(np.max(np.abs(b(dec.lam_flat))))
        nb = float(np.max(np.linalg.norm(ops, ord=2, axis=(-2, -1))))
        ratios[name] = nb / sup if sup > 0 else 0.0
    dev = {k: float(v) for k, v in dev.items()}
    details = {"deviations": dev, "max_deviation": max(dev.values()), "omega": dec.omega,
               "min_re_abs_lambda": min_re_abs, "resolvent_bound": res, "symbol_norm_ratios": ratios,
               "reconstruction": dec.reconstruction_error(), "biorthogonality": dec.biorthogonality_error(),
               "cond": dec.cond, "schur_mode": dec.schur_mode}
    return FunctionalReport("calculus_identities", max(dev.values()), g.describe(),
                            {"probes": probes}, probes, details, passed=min_re_abs > 0)
