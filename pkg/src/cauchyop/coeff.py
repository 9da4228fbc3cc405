"""Coefficients: accretivity, the A -> B transform and the perturbation E."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .container import read_container, write_container
from .errors import DimensionMismatch, NonSquareMatrix, SingularB0, SingularNormalBlock
from .expr import compile_expression
from .grid import TGrid, TorusGrid

SINGULAR_RTOL = 1e-10


def _broadcast_shape(values, grid: TorusGrid, tgrid: Optional[TGrid]):
    v = np.asarray(values, dtype=complex)
    if v.ndim < 2 or v.shape[-1] != v.shape[-2]:
        raise NonSquareMatrix(f"coefficient samples must be square matrices, got shape {v.shape}")
    if v.shape[-1] != grid.d:
        raise DimensionMismatch(f"matrix size {v.shape[-1]} does not match (1+n)m = {grid.d}")
    if v.ndim == 2:
        v = v.reshape((1,) + (1,) * grid.n + v.shape)
    if v.ndim != grid.n + 3:
        raise DimensionMismatch(f"expected (T, x..., d, d) layout, got shape {v.shape}")
    nt = v.shape[0]
    if nt != 1 and (tgrid is None or nt != tgrid.nodes):
        raise DimensionMismatch("t-axis length does not match the t-grid")
    for s in v.shape[1:-2]:
        if s not in (1, grid.N):
            raise DimensionMismatch("x-axis length does not match the torus grid")
    return v


@dataclass
class CoefficientTensor:
    """Sampled coefficients ``A(t, x)``.

    ``values`` has shape ``(Tt, X1, ..., Xn, d, d)`` where ``Tt`` is 1 or the
    number of t-nodes and each ``Xi`` is 1 or ``N`` (broadcast axes).
    """

    grid: TorusGrid
    values: np.ndarray
    tgrid: Optional[TGrid] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        self.values = _broadcast_shape(self.values, self.grid, self.tgrid)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("coefficients must be finite")

    @property
    def t_independent(self) -> bool:
        return self.values.shape[0] == 1

    @property
    def x_independent(self) -> bool:
        return all(s == 1 for s in self.values.shape[1:-2])

    @property
    def blocks(self):
        m = self.grid.m
        v = self.values
        return v[..., :m, :m], v[..., :m, m:], v[..., m:, :m], v[..., m:, m:]

    def full(self) -> np.ndarray:
        nt = self.tgrid.nodes if self.tgrid is not None else 1
        return np.broadcast_to(self.values, (nt,) + self.grid.shape + (self.grid.d,) * 2)

    def adjoint(self) -> "CoefficientTensor":
        return CoefficientTensor(self.grid, np.conj(np.swapaxes(self.values, -1, -2)), self.tgrid)

    @classmethod
    def constant(cls, matrix, grid, tgrid=None):
        return cls(grid, np.asarray(matrix, dtype=complex), tgrid)

    @classmethod
    def from_function(cls, func, grid, tgrid=None, t_dependent=True, x_dependent=True):
        """Sample ``func(t, x) -> (..., d, d)`` on the grids.

        ``t`` broadcasts with shape ``(Tt, 1, ..., 1)`` and ``x`` with shape
        ``(1, *spatial, n)``.
        """
        t = tgrid.t if (t_dependent and tgrid is not None) else np.array([tgrid.t_min if tgrid else 0.0])
        t = t.reshape((-1,) + (1,) * grid.n)
        x = grid.x[None] if x_dependent else np.zeros((1,) * (grid.n + 1) + (grid.n,))
        vals = np.asarray(func(t, x), dtype=complex)
        shape = (t.shape[0],) + (x.shape[1:-1]) + (grid.d, grid.d)
        return cls(grid, np.broadcast_to(vals, shape).copy(), tgrid if t.shape[0] > 1 else tgrid)

    @classmethod
    def from_expressions(cls, entries, grid, tgrid=None):
        """Build from a ``d x d`` nested list of expression strings."""
        d = grid.d
        if len(entries) != d or any(len(row) != d for row in entries):
            raise DimensionMismatch(f"expression matrix must be {d}x{d}")
        funcs = [[compile_expression(e, grid.n) for e in row] for row in entries]
        dep_t = any(f.depends_on_t for row in funcs for f in row)
        dep_x = any(f.depends_on_x for row in funcs for f in row)
        nt = tgrid.nodes if (dep_t and tgrid is not None) else 1
        t = (tgrid.t if nt > 1 else np.array([tgrid.t_min if tgrid else 0.0])).reshape((-1,) + (1,) * grid.n)
        x = grid.x[None] if dep_x else np.zeros((1,) * (grid.n + 1) + (grid.n,))
        xs = x.shape[1:-1]
        vals = np.zeros((nt,) + xs + (d, d), dtype=complex)
        for a in range(d):
            for b in range(d):
                vals[..., a, b] = np.broadcast_to(funcs[a][b](t, x), (nt,) + xs)
        return cls(grid, vals, tgrid)


@dataclass
class AccretivityReport:
    kappa: float
    ok: bool
    worst_index: tuple


@dataclass
class TransformedTensor:
    """``B`` (possibly t-dependent) or the t-independent ``B0``."""

    grid: TorusGrid
    values: np.ndarray
    role: str = "B"
    tgrid: Optional[TGrid] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        self.values = _broadcast_shape(self.values, self.grid, self.tgrid)
        if self.role not in ("B", "B0"):
            raise ValueError("role must be 'B' or 'B0'")
        if self.role == "B0" and self.values.shape[0] != 1:
            raise ValueError("B0 must be t-independent")

    @property
    def x_independent(self) -> bool:
        return all(s == 1 for s in self.values.shape[1:-2])

    def at_t(self, j=0) -> np.ndarray:
        """Matrix field at a t-index, shape ``(X1..Xn, d, d)``."""
        return self.values[min(j, self.values.shape[0] - 1)]

    def apply(self, f):
        """Pointwise product ``B(t, x) f(t, x)`` for a half-space array."""
        return np.einsum("...ab,...b->...a", self.values, f)


@dataclass
class PerturbationField:
    """``E(t, x) = I - B0(x)^{-1} B(t, x)``."""

    grid: TorusGrid
    tgrid: TGrid
    values: np.ndarray
    sup_norm: float = 0.0
    cd_norm: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = _broadcast_shape(self.values, self.grid, self.tgrid)
        self.sup_norm = float(np.max(np.linalg.norm(self.values, ord=2, axis=(-2, -1))))

    @property
    def is_zero(self) -> bool:
        return self.sup_norm == 0.0

    def apply(self, f, adjoint=False):
        """Pointwise ``E f`` on arrays of layout ``(..., T, x..., d)``."""
        if self.is_zero:
            return np.zeros_like(f)
        E = np.conj(np.swapaxes(self.values, -1, -2)) if adjoint else self.values
        return np.einsum("...ab,...b->...a", E, f)

    def scaled(self, c) -> "PerturbationField":
        return PerturbationField(self.grid, self.tgrid, c * self.values)

    @classmethod
    def zero(cls, grid, tgrid):
        return cls(grid, tgrid, np.zeros((grid.d, grid.d), dtype=complex))


def check_accretivity(A, n=None, m=None) -> AccretivityReport:
    """Minimum over samples of the smallest eigenvalue of ``(A + A*)/2``."""
    v = np.asarray(getattr(A, "values", A), dtype=complex)
    if v.ndim < 2 or v.shape[-1] != v.shape[-2]:
        raise NonSquareMatrix(f"expected square matrices, got shape {v.shape}")
    if n is not None and m is not None and v.shape[-1] != (1 + n) * m:
        raise DimensionMismatch(f"matrix size {v.shape[-1]} != (1+n)m = {(1 + n) * m}")
    herm = (v + np.conj(np.swapaxes(v, -1, -2))) / 2
    lo = np.linalg.eigvalsh(herm)[..., 0]
    idx = np.unravel_index(np.argmin(lo), lo.shape) if lo.ndim else ()
    kappa = float(np.min(lo))
    if isinstance(A, (CoefficientTensor, TransformedTensor)):
        A.kappa = kappa
    return AccretivityReport(kappa=kappa, ok=kappa > 0, worst_index=tuple(int(i) for i in idx))


def _transform(v, m):
    a, b, c, d = v[..., :m, :m], v[..., :m, m:], v[..., m:, :m], v[..., m:, m:]
    sv = np.linalg.svd(a, compute_uv=False)
    if np.any(sv[..., -1] <= SINGULAR_RTOL * sv[..., 0]):
        raise SingularNormalBlock("normal block a is singular at some sample")
    ai = np.linalg.inv(a)
    out = np.empty_like(v)
    out[..., :m, :m] = ai
    out[..., :m, m:] = -ai @ b
    out[..., m:, :m] = c @ ai
    out[..., m:, m:] = d - c @ ai @ b
    return out


def transform_A_to_B(A: CoefficientTensor) -> TransformedTensor:
    """Pointwise ``B = [[a^-1, -a^-1 b], [c a^-1, d - c a^-1 b]]``."""
    return TransformedTensor(A.grid, _transform(A.values, A.grid.m), "B", A.tgrid)


def transform_B_to_A(B: TransformedTensor) -> CoefficientTensor:
    """Inverse transform (the map is an involution)."""
    return CoefficientTensor(B.grid, _transform(B.values, B.grid.m), B.tgrid)


def select_B0(B: TransformedTensor, override=None) -> TransformedTensor:
    """Default ``B0(x) = B(t_min, x)``; ``override`` may be a matrix field or tensor."""
    if override is not None:
        vals = getattr(override, "values", override)
        vals = np.asarray(vals, dtype=complex)
        if vals.ndim == B.grid.n + 3:
            if vals.shape[0] != 1:
                raise ValueError("B0 override must be t-independent")
        return TransformedTensor(B.grid, vals if vals.ndim != B.grid.n + 2 else vals[None], "B0", B.tgrid)
    return TransformedTensor(B.grid, B.values[:1].copy(), "B0", B.tgrid)


def extract_E(B: TransformedTensor, B0: TransformedTensor) -> PerturbationField:
    """``E(t, x) = I - B0(x)^{-1} B(t, x)`` with ``sup_norm`` filled in."""
    b0 = B0.values
    sv = np.linalg.svd(b0, compute_uv=False)
    if np.any(sv[..., -1] <= SINGULAR_RTOL * sv[..., 0]):
        raise SingularB0("B0 is not invertible at some sample")
    if B.tgrid is None:
        raise ValueError("B needs a t-grid to define a perturbation field")
    E = np.eye(B.grid.d) - np.linalg.solve(b0, B.values)
    return PerturbationField(B.grid, B.tgrid, E)


def carleson_dahlberg_norm(E: PerturbationField) -> float:
    """Discrete ``|| C W_inf(|E|^2 / t) ||_inf ** 1/2``; stores it on ``E``."""
    from .funcnorms import carleson_dahlberg

    value = carleson_dahlberg(E.grid, E.tgrid, E.values)
    E.cd_norm = value
    return value


def random_accretive(rng, d, size=(), spread=0.5, skew=0.5, kappa=0.5):
    """Random matrices with Hermitian part having eigenvalues in ``[kappa, kappa + spread + ...]``."""
    G = rng.standard_normal(size + (d, d)) + 1j * rng.standard_normal(size + (d, d))
    H = G @ np.conj(np.swapaxes(G, -1, -2)) / d
    H = kappa * np.eye(d) + spread * H
    K = rng.standard_normal(size + (d, d)) + 1j * rng.standard_normal(size + (d, d))
    K = skew * (K - np.conj(np.swapaxes(K, -1, -2))) / 2
    return H + K


def save_coefficients(path, A, tgrid=None):
    grid = A.grid
    tg = tgrid or getattr(A, "tgrid", None)
    header = {"kind": "coefficients", "role": getattr(A, "role", "A"), **grid.describe(),
              "tgrid": tg.describe() if tg is not None else None,
              "layout": "row-major over (t, x..., matrix-row, matrix-col)"}
    write_container(path, header, {"values": A.values.astype(np.complex128)})


def load_coefficients(path) -> CoefficientTensor:
    header, arrays = read_container(path)
    if header.get("kind") != "coefficients":
        raise ValueError(f"{path} does not hold coefficients")
    grid = TorusGrid(header["n"], header["m"], header["N"], header["L"])
    tg = TGrid(**header["tgrid"]) if header.get("tgrid") else None
    return CoefficientTensor(grid, arrays["values"], tg)
