"""Loop-based evaluation of the n = 1 functionals straight from their definitions.

Ball integrals use the same rule as the library (mean over the nodes of the
discrete ball times the ball's length); everything else is explicit loops.
"""
import numpy as np


def _dist(grid, x):
    k = np.arange(grid.N)
    return np.minimum((k - x) % grid.N, (x - k) % grid.N) * grid.dx


def _ball(grid, x, r):
    inside = _dist(grid, x) < r - 1e-12 * grid.dx
    cnt = inside.sum()
    return inside, (min(2 * r, grid.L) / cnt if cnt else 0.0)


def whitney_l2(grid, tg, v):
    q = np.sum(np.abs(v) ** 2, axis=-1)
    t, w = tg.t, tg.trapezoid
    out = np.zeros(q.shape)
    for j in range(tg.nodes):
        s_in = (t > t[j] / 2) & (t < 2 * t[j])
        for x in range(grid.N):
            inside, wt = _ball(grid, x, t[j])
            out[j, x] = np.sqrt(wt * np.sum(w[s_in, None] * q[np.ix_(s_in, inside)]) / t[j] ** 2)
    return out


def nontangential(grid, tg, G):
    out = np.zeros(grid.N)
    for x in range(grid.N):
        for j in range(tg.nodes):
            inside = _dist(grid, x) < tg.t[j]
            if inside.any():
                out[x] = max(out[x], G[j, inside].max())
    return out


def carleson(grid, tg, G, radii):
    t, w = tg.t, tg.trapezoid
    out = np.zeros(grid.N)
    for x in range(grid.N):
        for r in radii:
            acc = 0.0
            for i in range(tg.nodes):
                if r - t[i] <= 0:
                    continue
                inside, wt = _ball(grid, x, r - t[i])
                acc += w[i] * wt * G[i, inside].sum()
            out[x] = max(out[x], acc / r)
    return out


def area(grid, tg, G):
    t, w = tg.t, tg.trapezoid
    out = np.zeros(grid.N)
    for x in range(grid.N):
        for i in range(tg.nodes):
            inside, wt = _ball(grid, x, t[i])
            out[x] += w[i] / t[i] * wt * G[i, inside].sum()
    return out


def winf(grid, tg, g):
    t = tg.t
    out = np.zeros_like(g)
    for j in range(tg.nodes):
        s_in = (t > t[j] / 2) & (t < 2 * t[j])
        for x in range(grid.N):
            near = _dist(grid, x) < t[j]
            if s_in.any() and near.any():
                out[j, x] = g[np.ix_(s_in, near)].max()
    return out


def l2(grid, v):
    return float(np.sqrt(np.sum(v**2) * grid.dx))
