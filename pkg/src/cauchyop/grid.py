"""Discretization: periodic torus for the boundary, geometric grid for t.

Field arrays use the layout ``(..., *spatial, d)`` for boundary data and
``(..., T, *spatial, d)`` for half-space data, with ``d = (1 + n) m``.
The first ``m`` entries of the last axis are the normal part, the
remaining ``n m`` entries the tangential part, ordered as ``kron(xi, w)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solveh_banded

from .errors import EmptyGrid, SizeMismatch

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(6)


@dataclass(frozen=True)
class TorusGrid:
    """Periodic grid with ``N`` points per axis on ``[0, L)^n``."""

    n: int = 1
    m: int = 1
    N: int = 256
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if self.N < 2 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two, got {self.N}")

    @property
    def d(self) -> int:
        return (1 + self.n) * self.m

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N**self.n

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx**self.n

    @cached_property
    def x(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, n)``."""
        ax = np.arange(self.N) * self.dx
        return np.stack(np.meshgrid(*([ax] * self.n), indexing="ij"), axis=-1)

    @cached_property
    def xi(self) -> np.ndarray:
        """Frequencies in FFT order, shape ``(*shape, n)``."""
        k = np.fft.fftfreq(self.N, d=1.0 / self.N) * (2 * np.pi / self.L)
        return np.stack(np.meshgrid(*([k] * self.n), indexing="ij"), axis=-1)

    @cached_property
    def xi_flat(self) -> np.ndarray:
        return self.xi.reshape(-1, self.n)

    @cached_property
    def abs_xi(self) -> np.ndarray:
        return np.linalg.norm(self.xi, axis=-1)

    @cached_property
    def nonzero(self) -> np.ndarray:
        """Flat indices of the nonzero frequencies."""
        return np.flatnonzero(np.linalg.norm(self.xi_flat, axis=-1) > 0)

    @property
    def dim_H(self) -> int:
        return 2 * self.m * (self.size - 1)

    @property
    def spatial_axes(self) -> tuple:
        return tuple(range(-self.n - 1, -1))

    def describe(self) -> dict:
        return {"n": self.n, "m": self.m, "N": self.N, "L": float(self.L)}


@dataclass(frozen=True)
class TGrid:
    """Geometric grid ``t_j = t_min * rho**j`` on ``[t_min, t_max]``."""

    t_min: float = 1e-3
    t_max: float = 10.0
    nodes: int = 160

    def __post_init__(self):
        if self.nodes < 2:
            raise EmptyGrid("a t-grid needs at least two nodes")
        if not 0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")

    @classmethod
    def with_ratio(cls, t_min, t_max, log_step):
        """Grid whose log-spacing is at most ``log_step``."""
        nodes = int(np.ceil(np.log(t_max / t_min) / log_step)) + 1
        return cls(t_min, t_max, nodes)

    @cached_property
    def t(self) -> np.ndarray:
        return np.geomspace(self.t_min, self.t_max, self.nodes)

    @property
    def rho(self) -> float:
        return (self.t_max / self.t_min) ** (1.0 / (self.nodes - 1))

    @cached_property
    def h(self) -> np.ndarray:
        return np.diff(self.t)

    @cached_property
    def trapezoid(self) -> np.ndarray:
        """Node weights of the trapezoidal rule on ``[t_min, t_max]``."""
        w = np.zeros(self.nodes)
        w[:-1] += self.h / 2
        w[1:] += self.h / 2
        return w

    def gram_bands(self, alpha: float) -> np.ndarray:
        """Upper banded form of the Gram matrix of hat functions in L2(t^alpha).

        ``sum_ij G_ij conj(f_i) f_j`` is the exact integral of
        ``|f|^2 t^alpha`` for the piecewise linear interpolant of ``f``.
        """
        a, b = self.t[:-1], self.t[1:]
        # geometric sub-panels of ratio <= 1.25 keep the Gauss rule accurate for any alpha
        k = max(1, int(np.ceil(np.log(self.rho) / np.log(1.25))))
        e = a * (b / a) ** (np.arange(k + 1)[:, None] / k)
        u = (_GAUSS_X[:, None, None] + 1) / 2
        tq = (e[:-1] + u * (e[1:] - e[:-1])).reshape(-1, len(a))
        wq = ((_GAUSS_W[:, None, None] / 2) * (e[1:] - e[:-1])).reshape(-1, len(a)) * tq**alpha
        v = (tq - a) / (b - a)
        m_aa = np.sum(wq * (1 - v) ** 2, axis=0)
        m_ab = np.sum(wq * v * (1 - v), axis=0)
        m_bb = np.sum(wq * v**2, axis=0)
        diag = np.zeros(self.nodes)
        diag[:-1] += m_aa
        diag[1:] += m_bb
        bands = np.zeros((2, self.nodes))
        bands[0, 1:] = m_ab
        bands[1] = diag
        return bands

    def gram_apply(self, alpha, f, axis=0):
        """Apply the Gram matrix along ``axis``."""
        bands = self.gram_bands(alpha)
        f = np.moveaxis(f, axis, 0)
        out = bands[1].reshape((-1,) + (1,) * (f.ndim - 1)) * f
        off = bands[0, 1:].reshape((-1,) + (1,) * (f.ndim - 1))
        out[:-1] += off * f[1:]
        out[1:] += off * f[:-1]
        return np.moveaxis(out, 0, axis)

    def gram_solve(self, alpha, f, axis=0):
        bands = self.gram_bands(alpha)
        f = np.moveaxis(f, axis, 0)
        shp = f.shape
        sol = solveh_banded(bands, f.reshape(shp[0], -1))
        return np.moveaxis(sol.reshape(shp), 0, axis)

    def describe(self) -> dict:
        return {"t_min": self.t_min, "t_max": self.t_max, "nodes": self.nodes}


@dataclass
class BoundaryField:
    """Values ``h(x_k)`` on the torus."""

    grid: TorusGrid
    values: np.ndarray
    in_H: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[-self.grid.n - 1:] != self.grid.shape + (self.grid.d,):
            raise SizeMismatch(f"boundary field shape {self.values.shape} does not fit {self.grid}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("boundary field has non-finite values")

    @property
    def perp(self):
        return self.values[..., : self.grid.m]

    @property
    def par(self):
        return self.values[..., self.grid.m:]


@dataclass
class HalfSpaceField:
    """Values ``f(t_j, x_k)`` on the geometric t-grid times the torus."""

    grid: TorusGrid
    tgrid: TGrid
    values: np.ndarray
    in_H: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        want = (self.tgrid.nodes,) + self.grid.shape + (self.grid.d,)
        if self.values.shape[-len(want):] != want:
            raise SizeMismatch(f"half-space field shape {self.values.shape}, expected {want}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("half-space field has non-finite values")

    @property
    def perp(self):
        return self.values[..., : self.grid.m]

    @property
    def par(self):
        return self.values[..., self.grid.m:]

    def slice(self, j) -> BoundaryField:
        return BoundaryField(self.grid, np.take(self.values, j, axis=-self.grid.n - 2))


def values_of(obj):
    return np.asarray(getattr(obj, "values", obj))


def _check(grid: TorusGrid, h: np.ndarray):
    if h.shape[h.ndim - grid.n - 1:] != grid.shape + (grid.d,):
        raise SizeMismatch(f"array of shape {h.shape} does not match grid {grid.shape} x {grid.d}")


def dft_slice(grid: TorusGrid, h) -> np.ndarray:
    """Unitary DFT over the spatial axes."""
    h = values_of(h)
    _check(grid, h)
    return np.fft.fftn(h, axes=grid.spatial_axes, norm="ortho")


def idft_slice(grid: TorusGrid, hh) -> np.ndarray:
    hh = values_of(hh)
    _check(grid, hh)
    return np.fft.ifftn(hh, axes=grid.spatial_axes, norm="ortho")


def l2_norm(grid: TorusGrid, h, axis_sum=True):
    """Discrete L2(torus) norm over the spatial and component axes."""
    h = values_of(h)
    sq = np.sum(np.abs(h) ** 2, axis=grid.spatial_axes + (-1,)) * grid.cell_volume
    return np.sqrt(sq)


def _tangential_split(grid, hh):
    m, n = grid.m, grid.n
    par = hh[..., m:].reshape(hh.shape[:-1] + (n, m))
    return hh[..., :m], par


def project_H_hat(grid: TorusGrid, hh: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto H acting on Fourier coefficients."""
    xi = grid.xi
    k2 = np.sum(xi**2, axis=-1)
    safe = np.where(k2 > 0, k2, 1.0)
    perp, par = _tangential_split(grid, hh)
    # component of par along xi (for each system index)
    coef = np.einsum("...i,...ij->...j", xi, par) / safe[..., None]
    par_new = xi[..., :, None] * coef[..., None, :]
    out = np.concatenate([perp, par_new.reshape(par.shape[:-2] + (grid.n * grid.m,))], axis=-1)
    zero = (k2 == 0)
    out[..., zero, :] = 0
    return out


def project_H(grid: TorusGrid, h) -> np.ndarray:
    """Orthogonal projection onto the closure of the range of D.

    Keeps the normal part, projects the tangential part of each mode onto
    ``{xi (x) w}``, and removes the mean.
    """
    return idft_slice(grid, project_H_hat(grid, dft_slice(grid, h)))


def curl_residual(grid: TorusGrid, h) -> np.ndarray:
    """L2 norm of the tangential curl, computed spectrally (0 for n = 1)."""
    h = values_of(h)
    if grid.n == 1:
        return np.zeros(h.shape[: h.ndim - 2])
    hh = dft_slice(grid, h)
    _, par = _tangential_split(grid, hh)
    xi = grid.xi
    tot = 0.0
    for i in range(grid.n):
        for j in range(i + 1, grid.n):
            c = xi[..., i, None] * par[..., j, :] - xi[..., j, None] * par[..., i, :]
            tot = tot + np.sum(np.abs(c) ** 2, axis=grid.spatial_axes + (-1,))
    return np.sqrt(tot * grid.cell_volume)


def h_orthonormal_basis(grid: TorusGrid) -> np.ndarray:
    """Per-frequency orthonormal basis of H, shape ``(n_nonzero, d, 2m)``.

    The first ``m`` columns span the normal part, the last ``m`` the
    tangential part ``xi/|xi| (x) e_j``.
    """
    m, n, d = grid.m, grid.n, grid.d
    xi = grid.xi_flat[grid.nonzero]
    unit = xi / np.linalg.norm(xi, axis=-1, keepdims=True)
    Q = np.zeros((len(xi), d, 2 * m), dtype=complex)
    Q[:, :m, :m] = np.eye(m)
    Q[:, m:, m:] = np.einsum("bi,jk->bijk", unit, np.eye(m)).reshape(len(xi), n * m, m)
    return Q


def d_symbol(grid: TorusGrid, xi=None) -> np.ndarray:
    """Symbol of D: ``[[0, i xi^T (x) I], [-i xi (x) I, 0]]``, shape ``(..., d, d)``."""
    m, n, d = grid.m, grid.n, grid.d
    if xi is None:
        xi = grid.xi_flat
    xi = np.asarray(xi, dtype=float)
    Dh = np.zeros(xi.shape[:-1] + (d, d), dtype=complex)
    col = np.einsum("...i,jk->...ijk", xi, np.eye(m)).reshape(xi.shape[:-1] + (n * m, m))
    Dh[..., m:, :m] = -1j * col
    Dh[..., :m, m:] = 1j * np.swapaxes(col, -1, -2)
    return Dh


def apply_D(grid: TorusGrid, h) -> np.ndarray:
    """Apply D spectrally to boundary or half-space arrays."""
    hh = dft_slice(grid, h)
    Dh = d_symbol(grid).reshape(grid.shape + (grid.d, grid.d))
    return idft_slice(grid, np.einsum("...ab,...b->...a", Dh, hh))
