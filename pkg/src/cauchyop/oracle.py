"""Brute-force references.

Nothing here goes through the channel sweep or the flow module:

* :func:`cauchy_kernel_extension` and :func:`poisson_extension` are real-space
  quadratures of lattice-summed kernels;
* :func:`dense_apply_S` integrates ``Lambda e^{-|t-s| Lambda} E0+-`` with a
  midpoint rule on sub-cells;
* :func:`direct_solve` materializes ``I - S E`` and factorizes it.  Its S
  comes from the cell engine, not from the sweep used by the solver.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy.special import gamma, polygamma

from .errors import DimensionUnsupported, GridTooLarge, SingularSystem
from .funcalc import SpectralDecomp
from .grid import HalfSpaceField, TGrid, TorusGrid, values_of

IMAGES = 50


def _offsets(grid: TorusGrid):
    """Signed offsets ``y - x`` in ``[-L/2, L/2)`` for all node pairs, shape ``(N, N)`` (n = 1)."""
    k = np.arange(grid.N)
    d = (k[None, :] - k[:, None]) % grid.N
    d = np.where(d >= grid.N // 2, d - grid.N, d)
    return d * grid.dx


def periodic_cauchy_kernel(w, t, L, images=IMAGES):
    """``(i / 2 pi) sum_j 1 / (w + j L + i t)`` with a symmetric image sum and tail correction."""
    z = np.asarray(w, dtype=complex) + 1j * t
    acc = 1.0 / z
    for j in range(1, images + 1):
        acc = acc + 2 * z / (z**2 - (j * L) ** 2)
    # sum_{j > J} 2 z / (z^2 - j^2 L^2) ~ -(2 z / L^2) psi_1(J + 1) - (2 z^3 / L^4) psi_3(J + 1) / 6
    acc = acc - (2 * z / L**2) * polygamma(1, images + 1) - (2 * z**3 / L**4) * polygamma(3, images + 1) / 6
    return 1j / (2 * np.pi) * acc


def periodic_poisson_kernel(w, t, L, n=1, images=IMAGES):
    """Lattice sum of ``c_n t / (|w|^2 + t^2)^{(n+1)/2}`` with a tail correction."""
    cn = gamma((n + 1) / 2) / np.pi ** ((n + 1) / 2)
    w = np.asarray(w, float)
    if n == 1:
        acc = np.zeros(w.shape)
        for j in range(-images, images + 1):
            acc += t / ((w + j * L) ** 2 + t**2)
        acc += 2 * t / L**2 * polygamma(1, images + 1)
        return cn * acc
    if n == 2:
        acc = np.zeros(w.shape[:-1])
        J = 12
        for i in range(-J, J + 1):
            for j in range(-J, J + 1):
                r2 = (w[..., 0] + i * L) ** 2 + (w[..., 1] + j * L) ** 2
                acc += t / (r2 + t**2) ** 1.5
        # remaining images: integral of t / r^3 over the plane outside radius (J + 1/2) L
        acc += 2 * np.pi * t / (L**2 * (J + 0.5) * L)
        return cn * acc
    raise DimensionUnsupported("Poisson oracle implemented for n = 1, 2")


def scalar_cauchy_extension(grid: TorusGrid, g, t):
    """``(i / 2 pi) int g(y) / (y - x + i t) dy`` by the trapezoidal rule, ``g`` scalar on the torus."""
    W = _offsets(grid)
    K = periodic_cauchy_kernel(W, t, grid.L)
    return (K @ np.asarray(g)) * grid.dx


def cauchy_kernel_extension(h, tgrid: TGrid, t_nodes=None) -> HalfSpaceField:
    """Classical Cauchy extension of conormal-gradient data (n = m = 1).

    For real data the scalar ``F = f_par + i f_perp`` is anti-analytic in
    ``x + i t`` and is extended with the Cauchy kernel; complex data are
    split into real and imaginary parts.  Only the nodes in ``t_nodes``
    (default: all) are filled, the others are zero.
    """
    grid = h.grid
    if grid.n != 1 or grid.m != 1:
        raise DimensionUnsupported("Cauchy-kernel oracle is for n = m = 1")
    v = values_of(h)
    out = np.zeros((tgrid.nodes, grid.N, 2), dtype=complex)
    idx = range(tgrid.nodes) if t_nodes is None else t_nodes
    for j in idx:
        t = tgrid.t[j]
        K = periodic_cauchy_kernel(_offsets(grid), t, grid.L) * grid.dx
        res = np.zeros((grid.N, 2), dtype=complex)
        for part, unit in ((v.real, 1.0), (v.imag, 1j)):
            F = K @ (part[:, 1] + 1j * part[:, 0])
            res[:, 0] += unit * F.imag
            res[:, 1] += unit * F.real
        out[j] = res
    return HalfSpaceField(grid, tgrid, out, meta={"kind": "cauchy_oracle"})


def poisson_extension(h, tgrid: TGrid, t_nodes=None) -> HalfSpaceField:
    """Componentwise convolution with the periodized Poisson kernel (n = 1, 2)."""
    grid = h.grid
    v = values_of(h)
    idx = range(tgrid.nodes) if t_nodes is None else t_nodes
    out = np.zeros((tgrid.nodes,) + v.shape, dtype=complex)
    if grid.n == 1:
        W = _offsets(grid)
    elif grid.n == 2:
        k = np.arange(grid.N)
        d1 = np.where(k >= grid.N // 2, k - grid.N, k) * grid.dx
        W = np.stack(np.meshgrid(d1, d1, indexing="ij"), axis=-1)
    else:
        raise DimensionUnsupported("Poisson oracle implemented for n = 1, 2")
    for j in idx:
        t = tgrid.t[j]
        if grid.n == 1:
            P = periodic_poisson_kernel(W, t, grid.L, 1) * grid.dx
            out[j] = P @ v
        else:
            P = periodic_poisson_kernel(W, t, grid.L, 2) * grid.cell_volume
            # circular convolution over offsets, written as an explicit sum over shifts
            Ph = np.fft.fft2(P)  # kernel depends on offset only; convolution theorem on the torus
            out[j] = np.fft.ifft2(np.fft.fft2(v, axes=(0, 1)) * Ph[..., None], axes=(0, 1))
    return HalfSpaceField(grid, tgrid, out, meta={"kind": "poisson_oracle"})


def dense_apply_S(dec: SpectralDecomp, f, tgrid: TGrid = None, rel_step=0.02, max_work=2e8):
    """Midpoint-rule quadrature of S on sub-cells with ``max|lam| * width <= rel_step``.

    The kernel is evaluated pointwise on the spectrum for each target and
    sub-cell midpoint; no cell-exact integration is used.
    """
    tgrid = tgrid or f.tgrid
    t = tgrid.t
    a = dec.to_coords(values_of(f))
    mmax = float(np.max(np.abs(dec.mu)))
    edges = [np.array([0.0, t[0]])]
    for i in range(len(t) - 1):
        k = max(1, int(np.ceil((t[i + 1] - t[i]) * mmax / rel_step)))
        edges.append(np.linspace(t[i], t[i + 1], k + 1)[1:])
    s_edges = np.concatenate(edges)
    mid = (s_edges[:-1] + s_edges[1:]) / 2
    wid = np.diff(s_edges)
    if len(t) * len(mid) * dec.K > max_work:
        raise GridTooLarge(f"{len(t) * len(mid) * dec.K:.2e} kernel evaluations exceed the budget")
    # data at midpoints: linear between nodes, constant below t_0
    j = np.clip(np.searchsorted(t, mid, side="right") - 1, 0, len(t) - 2)
    th = np.clip((mid - t[j]) / (t[j + 1] - t[j]), 0, 1)
    th = np.where(mid < t[0], 0.0, th)
    am = (1 - th)[:, None] * a[..., j, :] + th[:, None] * a[..., j + 1, :]
    out = np.zeros_like(a)
    lam = dec.lam_flat
    pos = lam.real > 0
    mu = np.where(pos, lam, -lam)
    for jj, tj in enumerate(t):
        gap = (tj - mid)[:, None]
        # Lambda e^{-(t-s) Lambda} E0+ below t, Lambda e^{-(s-t) Lambda} E0- above t
        live = np.where(pos, gap > 0, gap < 0)
        ker = np.where(live, mu * np.exp(-np.abs(gap) * mu), 0)
        out[..., jj, :] = np.sum(wid[:, None] * ker * am, axis=-2)
    return HalfSpaceField(dec.grid, tgrid, dec.from_coords(out), in_H=True, meta={"kind": "dense_S"})


def _S_channel_matrices(dec: SpectralDecomp, t):
    """``S_k[t, s]`` for every channel, shape ``(K, T, T)``, from the cell engine."""
    from .sio import exact_S_terms, kernel_integrals

    T = len(t)
    eye = np.broadcast_to(np.eye(T)[:, :, None], (T, T, dec.K))
    cols = kernel_integrals(t, dec.mu, eye, exact_S_terms(dec))   # (T_in, T_out, K)
    return np.transpose(cols, (2, 1, 0))


def direct_solve(dec: SpectralDecomp, E, cfg, h_plus, max_dim=6000):
    """Solve ``(I - S E) f = f0`` by dense LU; ``f0`` the Cauchy extension of ``h_plus``."""
    grid, tgrid = dec.grid, cfg.tgrid
    T, n_x = tgrid.nodes, grid.size * grid.d
    if T * n_x > max_dim:
        raise GridTooLarge(f"dense system of size {T * n_x} exceeds {max_dim}")
    t = tgrid.t
    # f0 from its closed form per channel
    a0 = dec.to_coords(values_of(h_plus))
    fac = np.where(dec.plus, dec.mu**cfg.sigma * np.exp(-np.outer(t, dec.mu)), 0.0)
    f0 = dec.from_coords(fac * a0).reshape(T, n_x)
    if E is None or E.is_zero:
        return HalfSpaceField(grid, tgrid, f0.reshape((T,) + grid.shape + (grid.d,)), meta={"kind": "direct"})
    eye = np.eye(n_x).reshape((n_x,) + grid.shape + (grid.d,))
    C = dec.to_coords(eye).T                                  # (K, n_x)
    Fm = dec.from_coords(np.eye(dec.K)).reshape(dec.K, n_x).T  # (n_x, K)
    Sk = _S_channel_matrices(dec, t)                           # (K, T, T)
    Ev = np.broadcast_to(E.values, (T,) + grid.shape + (grid.d, grid.d))
    Eb = np.zeros((T, n_x, n_x), dtype=complex)
    Er = Ev.reshape(T, grid.size, grid.d, grid.d)
    for p in range(grid.size):
        Eb[:, p * grid.d:(p + 1) * grid.d, p * grid.d:(p + 1) * grid.d] = Er[:, p]
    CE = np.einsum("kj,sjl->skl", C, Eb)                      # (T_s, K, n_x)
    A = np.einsum("ik,kts,skj->tisj", Fm, Sk, CE).reshape(T * n_x, T * n_x)
    M = np.eye(T * n_x) - A
    lu, piv = scipy.linalg.lu_factor(M)
    if np.min(np.abs(np.diag(lu))) < 1e-13 * np.max(np.abs(np.diag(lu))):
        raise SingularSystem("I - S E is numerically singular")
    f = scipy.linalg.lu_solve((lu, piv), f0.reshape(-1))
    return HalfSpaceField(grid, tgrid, f.reshape((T,) + grid.shape + (grid.d,)), meta={"kind": "direct"})
