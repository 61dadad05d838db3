"""Independent reference computations used to cross-check the main modules.

Nothing here calls the solver or the barycenter code.  The flat oracle is a
direct sparse linear solve; the translation length oracle minimises the
displacement with its own distance and Mobius formulas.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize


def flat_twisted_dirichlet(A, b, outer, inner, T: float, n_t: int, n_psi: int) -> np.ndarray:
    """Discrete harmonic map into ``R^m`` with seam rule ``u(psi + 2 pi) = A u(psi) + b``.

    ``outer``/``inner`` are ``(n_psi, m)`` boundary slices.  Returns values of
    shape ``(n_t + 1, n_psi, m)`` solving the 5-point equations exactly.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m = A.shape[0]
    h_t, h_p = T / n_t, 2.0 * math.pi / n_psi
    wt, wp = 1.0 / h_t**2, 1.0 / h_p**2
    n_rows = n_t - 1
    N = n_rows * n_psi * m

    def idx(i, j, c):  # interior unknown index, i in 1..n_t-1
        return ((i - 1) * n_psi + j) * m + c

    outer = np.asarray(outer, dtype=float)
    inner = np.asarray(inner, dtype=float)
    rows, cols, vals = [], [], []
    rhs = np.zeros(N)
    Ainv = A.T
    for i in range(1, n_t):
        for j in range(n_psi):
            for c in range(m):
                r = idx(i, j, c)
                rows.append(r)
                cols.append(r)
                vals.append(2 * wt + 2 * wp)
                # axial neighbours
                for ii in (i - 1, i + 1):
                    if ii == 0:
                        rhs[r] += wt * outer[j, c]
                    elif ii == n_t:
                        rhs[r] += wt * inner[j, c]
                    else:
                        rows.append(r)
                        cols.append(idx(ii, j, c))
                        vals.append(-wt)
                # +psi neighbour
                if j + 1 < n_psi:
                    rows.append(r)
                    cols.append(idx(i, j + 1, c))
                    vals.append(-wp)
                else:  # A u[i, 0] + b
                    for k in range(m):
                        rows.append(r)
                        cols.append(idx(i, 0, k))
                        vals.append(-wp * A[c, k])
                    rhs[r] += wp * b[c]
                # -psi neighbour
                if j > 0:
                    rows.append(r)
                    cols.append(idx(i, j - 1, c))
                    vals.append(-wp)
                else:  # A^{-1}(u[i, n-1] - b)
                    for k in range(m):
                        rows.append(r)
                        cols.append(idx(i, n_psi - 1, k))
                        vals.append(-wp * Ainv[c, k])
                    rhs[r] -= wp * (Ainv @ b)[c]
    M = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    x = spla.spsolve(M.tocsc(), rhs)
    out = np.empty((n_t + 1, n_psi, m))
    out[0], out[-1] = outer, inner
    out[1:-1] = x.reshape(n_rows, n_psi, m)
    return out


def flat_energy(values: np.ndarray, A, b, T: float) -> float:
    """Trapezoid-in-t discrete energy of a flat twisted grid map."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n_t, n_psi = values.shape[0] - 1, values.shape[1]
    h_t, h_p = T / n_t, 2.0 * math.pi / n_psi
    wrapped = values[:, :1] @ A.T + np.asarray(b, dtype=float)
    nxt = np.concatenate([values[:, 1:], wrapped], axis=1)
    ang = np.sum((nxt - values) ** 2, axis=(1, 2)) / h_p
    ax = np.sum((values[1:] - values[:-1]) ** 2) * h_p / h_t
    return float(ax + 0.5 * h_t * np.sum(ang[1:] + ang[:-1]))


def flat_energy_slope(delta: float, n_psi: int = 64, n_t: int = 64, T: float = 12.0) -> float:
    """Energy per unit length of the flat twisted solution with straight-loop boundary data."""
    psi = 2.0 * math.pi * np.arange(n_psi) / n_psi
    loop = np.stack([delta * psi / (2 * math.pi), np.zeros(n_psi)], axis=-1)
    A, b = np.eye(2), np.array([delta, 0.0])
    u = flat_twisted_dirichlet(A, b, loop, loop, T, n_t, n_psi)
    return flat_energy(u, A, b, T) / T


# -- translation length ---------------------------------------------------------------


def _hyp_dist(z, w):
    return np.arccosh(1.0 + abs(z - w) ** 2 / (2.0 * z.imag * w.imag))


def _mobius(M, z):
    (a, b), (c, d) = M
    return (a * z + b) / (c * z + d)


def delta_min_mobius(M, n_grid: int = 25, seed: int = 0) -> float:
    """``inf_z d(Mz, z)`` over the upper half-plane by grid search plus Nelder-Mead."""
    M = np.asarray(M, dtype=float)
    M = M / math.sqrt(abs(np.linalg.det(M)))

    def f(p):
        z = complex(p[0], math.exp(p[1]))
        return _hyp_dist(_mobius(M, z), z)

    xs = np.linspace(-5, 5, n_grid)
    ls = np.linspace(-5, 5, n_grid)
    cand = sorted(((f((x, l)), x, l) for x in xs for l in ls))[:5]
    rng = np.random.default_rng(seed)
    starts = [(x, l) for _, x, l in cand] + [tuple(rng.uniform(-5, 5, 2)) for _ in range(5)]
    best = min(minimize(f, s, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000}).fun for s in starts)
    return float(best)


def delta_min_euclidean(A, b, seed: int = 0) -> float:
    """``inf_x |A x + b - x|`` by multi-start Nelder-Mead."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)

    def f(x):
        return float(np.linalg.norm(A @ x + b - x))

    rng = np.random.default_rng(seed)
    starts = [np.zeros(b.size)] + [rng.normal(scale=5, size=b.size) for _ in range(8)]
    return float(min(minimize(f, s, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000}).fun for s in starts))


# -- loop lower bound -----------------------------------------------------------------


def loop_bound_brute_force(delta: float, n_loops: int = 1000, n_psi: int = 32, dim: int = 2, seed: int = 0):
    """Random twisted loops in ``R^dim`` (twist = translation by ``delta e_1``).

    Returns ``(bound, min_slack)`` where ``bound = delta^2 / 2 pi`` and
    ``min_slack`` is the smallest observed ``loop energy - bound``.
    """
    rng = np.random.default_rng(seed)
    h = 2.0 * math.pi / n_psi
    shift = np.zeros(dim)
    shift[0] = delta
    bound = delta**2 / (2.0 * math.pi)
    slack = math.inf
    for _ in range(n_loops):
        loop = rng.normal(scale=rng.uniform(0.01, 3.0), size=(n_psi, dim))
        nxt = np.concatenate([loop[1:], loop[:1] + shift])
        e = float(np.sum((nxt - loop) ** 2)) / h
        slack = min(slack, e - bound)
    return bound, slack
