"""Independent reference computations used by the test-suite.

Nothing here calls into the code paths under test except for parameter
containers.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate


def stable_cdf(x: float, alpha: float, gamma: float = 1.0, beta: float = 0.0, delta: float = 0.0) -> float:
    """CDF of the stable law by Gil-Pelaez inversion of its characteristic function

    ``phi(t) = exp(-g^a |t|^a [1 + i b sign(t) tan(pi a/2) ((g|t|)^(1-a) - 1)] + i d t)``, ``a != 1``.

    For ``t > 0``, ``Im(exp(-itx) phi(t)) / t = -exp(-(gt)^a) sin(t x' - b z (gt)^a) / t`` with
    ``x' = x - d + b z g`` and ``z = tan(pi a / 2)``; the oscillatory tail is
    integrated with QUADPACK's oscillatory-weight routine.
    """
    z = math.tan(math.pi * alpha / 2) if beta else 0.0
    xp = x - delta + beta * z * gamma

    def amp(t):
        return math.exp(-((gamma * t) ** alpha))

    def f_sin(t):
        return amp(t) * math.cos(beta * z * (gamma * t) ** alpha) / t

    def f_cos(t):
        return amp(t) * math.sin(beta * z * (gamma * t) ** alpha) / t

    def head(t):
        # Gauss-Kronrod nodes never touch t = 0
        return f_sin(t) * math.sin(xp * t) - f_cos(t) * math.cos(xp * t)

    cut = min(1.0 / max(abs(xp), 1e-3), 1.0 / gamma)
    t_max = 45.0 ** (1.0 / alpha) / gamma  # exp(-45) is below double precision relative to 1
    total, _ = integrate.quad(head, 0.0, cut, limit=400, epsabs=1e-12, epsrel=1e-10)
    # geometric panels keep the 1/t amplitude well resolved in each QAWO call
    edges = np.geomspace(cut, t_max, max(2, int(np.ceil(np.log10(t_max / cut))) + 1))
    for lo, hi in zip(edges[:-1], edges[1:]):
        if xp != 0:
            opts = dict(wvar=xp, limit=2000, epsabs=1e-13, epsrel=1e-10)
            total += integrate.quad(f_sin, lo, hi, weight="sin", **opts)[0]
            total -= integrate.quad(f_cos, lo, hi, weight="cos", **opts)[0]
        else:
            total -= integrate.quad(f_cos, lo, hi, limit=400, epsabs=1e-13)[0]
    return 0.5 + total / math.pi


def ks_upper_bound(samples: np.ndarray, cdf, n_nodes: int = 2000) -> float:
    """Upper bound on sup_x |F_emp(x) - F(x)| from ``cdf`` evaluated at ``n_nodes`` points.

    Nodes are empirical quantiles; monotonicity of both CDFs bounds the
    discrepancy between consecutive nodes.
    """
    xs = np.sort(np.asarray(samples))
    n = xs.size
    ranks = np.unique(np.linspace(0, n - 1, n_nodes).astype(int))
    nodes = xs[ranks]
    F = np.array([cdf(v) for v in nodes])
    below = np.searchsorted(xs, nodes, side="left") / n  # F_emp(node-)
    at = np.searchsorted(xs, nodes, side="right") / n  # F_emp(node)
    # on [node_k, node_{k+1}): F_emp in [at_k, below_{k+1}], F in [F_k, F_{k+1}]
    gaps = np.concatenate(
        [
            below[1:] - F[:-1],
            F[1:] - at[:-1],
            [F[0], below[0] - 0.0, 1.0 - F[-1], 1.0 - at[-1]],
            np.abs(at - F),
        ]
    )
    return float(gaps.max())


def ou_density(x, mean0: float, var0: float, theta: float, sigma: float, t: float) -> np.ndarray:
    """Density at time ``t`` of ``dX = -theta X dt + sigma dW`` started from ``N(mean0, var0)``."""
    m = mean0 * math.exp(-theta * t)
    v = var0 * math.exp(-2 * theta * t) + sigma**2 * (1 - math.exp(-2 * theta * t)) / (2 * theta)
    x = np.asarray(x, dtype=float)
    return np.exp(-((x - m) ** 2) / (2 * v)) / math.sqrt(2 * math.pi * v)


def kalman_1d(measurements, F: float, Q: float, H: float, R: float, m0: float, P0: float):
    """Posterior means and variances of the scalar linear-Gaussian model

    ``x_{n+1} = F x_n + N(0, Q)``, ``y_n = H x_n + N(0, R)``, ``x_0 ~ N(m0, P0)``.
    """
    m, P = m0, P0
    means, variances = [], []
    for y in np.ravel(measurements):
        m, P = F * m, F * F * P + Q
        S = H * H * P + R
        K = P * H / S
        m, P = m + K * (y - H * m), (1 - K * H) * P
        means.append(m)
        variances.append(P)
    return np.array(means), np.array(variances)


def finite_difference_divergence(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference divergence of a vector field ``f: (n, d) -> (n, d)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape[0])
    for k in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[k] = h
        out += (f(x + e)[:, k] - f(x - e)[:, k]) / (2 * h)
    return out
