"""Hot inner loops: per-eigenchannel sweeps along the t-grid.

Every sweep has a numba implementation and a pure numpy one.  Set
``CAUCHYOP_DISABLE_NUMBA=1`` to force the numpy path.  Both paths follow
the same recursion and agree to rounding.
"""
import os

import numpy as np

USE_NUMBA = os.environ.get("CAUCHYOP_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def _njit(func):
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def phi(z, order=3):
    """``Phi_i(z) = int_0^1 v^i exp(-z v) dv`` for ``i = 0..order``.

    Stable for ``re z >= 0``: power series for ``|z| < 1``, upward
    recurrence otherwise.
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty((order + 1,) + z.shape, dtype=complex)
    small = np.abs(z) < 1.0
    zs = z[small]
    term = np.ones_like(zs)
    acc = [np.zeros_like(zs) for _ in range(order + 1)]
    for k in range(28):
        for i in range(order + 1):
            acc[i] += term / (i + k + 1)
        term = term * (-zs) / (k + 1)
    zl = z[~small]
    ez = np.exp(-zl)
    prev = -np.expm1(-zl) / zl
    out[0][~small] = prev
    for i in range(1, order + 1):
        prev = (i * prev - ez) / zl
        out[i][~small] = prev
    for i in range(order + 1):
        out[i][small] = acc[i]
    return out


def sweep_weights(t, mu):
    """Cell factors for exact integration of ``mu exp(-mu u)`` against linear data.

    Returns ``(E, c0, c1, first)`` with shapes ``(T-1, K)`` and ``(K,)``:
    on a cell of width ``h`` with ``z = mu h``, ``E = exp(-z)``,
    ``c0 = 1 - exp(-z)`` and ``c1 = z Phi_1(z)``; ``first = 1 - exp(-mu t_0)``
    is the weight of the constant extension of the data on ``[0, t_0]``.
    """
    h = np.diff(t)
    z = h[:, None] * mu[None, :]
    p = phi(z, order=1)
    E = np.exp(-z)
    c0 = z * p[0]
    c1 = z * p[1]
    first = -np.expm1(-t[0] * mu)
    return E, c0, c1, first


@_njit
def _sweep_numba(a, E, c0, c1, first, plus, out):
    B, T, K = a.shape
    for b in range(B):
        for k in range(K):
            if plus[k]:
                acc = first[k] * a[b, 0, k]
                out[b, 0, k] = acc
                for j in range(1, T):
                    acc = (E[j - 1, k] * acc + c0[j - 1, k] * a[b, j, k]
                           + c1[j - 1, k] * (a[b, j - 1, k] - a[b, j, k]))
                    out[b, j, k] = acc
            else:
                acc = 0j
                out[b, T - 1, k] = acc
                for j in range(T - 2, -1, -1):
                    acc = (E[j, k] * acc + c0[j, k] * a[b, j, k]
                           + c1[j, k] * (a[b, j + 1, k] - a[b, j, k]))
                    out[b, j, k] = acc


def _sweep_numpy(a, E, c0, c1, first, plus, out):
    T = a.shape[1]
    acc = first * a[:, 0]
    fwd = np.empty_like(a)
    fwd[:, 0] = acc
    for j in range(1, T):
        acc = E[j - 1] * acc + c0[j - 1] * a[:, j] + c1[j - 1] * (a[:, j - 1] - a[:, j])
        fwd[:, j] = acc
    bwd = np.empty_like(a)
    acc = np.zeros_like(a[:, 0])
    bwd[:, T - 1] = acc
    for j in range(T - 2, -1, -1):
        acc = E[j] * acc + c0[j] * a[:, j] + c1[j] * (a[:, j + 1] - a[:, j])
        bwd[:, j] = acc
    out[...] = np.where(plus, fwd, bwd)


@_njit
def _sweep_adjoint_numba(z, E, c0, c1, first, plus, out):
    B, T, K = z.shape
    for b in range(B):
        for k in range(K):
            if plus[k]:
                G = z[b, T - 1, k]
                nxt = G
                out[b, T - 1, k] = np.conj(c0[T - 2, k] - c1[T - 2, k]) * G
                for i in range(T - 2, -1, -1):
                    G = z[b, i, k] + np.conj(E[i, k]) * nxt
                    val = np.conj(c1[i, k]) * nxt
                    if i >= 1:
                        val += np.conj(c0[i - 1, k] - c1[i - 1, k]) * G
                    else:
                        val += np.conj(first[k]) * G
                    out[b, i, k] = val
                    nxt = G
            else:
                G = z[b, 0, k]
                prev = G
                out[b, 0, k] = np.conj(c0[0, k] - c1[0, k]) * G
                for i in range(1, T):
                    G = z[b, i, k] + np.conj(E[i - 1, k]) * prev
                    val = np.conj(c1[i - 1, k]) * prev
                    if i <= T - 2:
                        val += np.conj(c0[i, k] - c1[i, k]) * G
                    out[b, i, k] = val
                    prev = G


def _sweep_adjoint_numpy(z, E, c0, c1, first, plus, out):
    T = z.shape[1]
    cE, cc0, cc1, cf = np.conj(E), np.conj(c0), np.conj(c1), np.conj(first)
    # causal channels: backward accumulation
    G = np.empty_like(z)
    G[:, T - 1] = z[:, T - 1]
    for i in range(T - 2, -1, -1):
        G[:, i] = z[:, i] + cE[i] * G[:, i + 1]
    fwd = np.zeros_like(z)
    fwd[:, 1:] += (cc0 - cc1) * G[:, 1:]
    fwd[:, 0] += cf * G[:, 0]
    fwd[:, :-1] += cc1 * G[:, 1:]
    # anti-causal channels: forward accumulation
    H = np.empty_like(z)
    H[:, 0] = z[:, 0]
    for i in range(1, T):
        H[:, i] = z[:, i] + cE[i - 1] * H[:, i - 1]
    bwd = np.zeros_like(z)
    bwd[:, :-1] += (cc0 - cc1) * H[:, :-1]
    bwd[:, 1:] += cc1 * H[:, :-1]
    out[...] = np.where(plus, fwd, bwd)


def channel_sweep(a, t, mu, plus, adjoint=False, use_numba=None):
    """Apply the exact flow integral to channel amplitudes.

    ``a`` has shape ``(..., T, K)``.  Channels with ``plus`` true get
    ``int_0^t mu exp(-(t-s) mu) a(s) ds`` (data held constant on
    ``[0, t_0]``), the others ``int_t^{t_max} mu exp(-(s-t) mu) a(s) ds``;
    ``a`` is treated as piecewise linear between nodes.  With ``adjoint``
    the Euclidean conjugate transpose of that map is applied.
    """
    a = np.asarray(a, dtype=complex)
    lead = a.shape[:-2]
    T, K = a.shape[-2:]
    a3 = np.ascontiguousarray(a.reshape((-1, T, K)))
    E, c0, c1, first = sweep_weights(np.asarray(t, float), np.asarray(mu, complex))
    plus = np.asarray(plus, dtype=np.bool_)
    out = np.empty_like(a3)
    numba_on = USE_NUMBA if use_numba is None else (use_numba and USE_NUMBA)
    if adjoint:
        fn = _sweep_adjoint_numba if numba_on else _sweep_adjoint_numpy
    else:
        fn = _sweep_numba if numba_on else _sweep_numpy
    fn(a3, E, c0, c1, first, plus, out)
    return out.reshape(lead + (T, K))
