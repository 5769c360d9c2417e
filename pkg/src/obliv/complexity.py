"""Monte-Carlo complexity estimation over compiled moment sets, covering-number
bounds via minoration, and the spectral-submatrix certificate for sparse
quadratic forms.

Estimates over moment sets are lower estimates (every solver iterate is
feasible); certificates are upper bounds. ComplexityReport.interpretation keeps
the direction explicit so comparisons are made the valid way around.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .noise import rng_from_seed, sample_noise
from .solver import SolverFailure, SolverParams, maximize_linear
from .tensor import Tensor, huber_grad

SUBMATRIX_ENUM_CAP = 1_000_000


@dataclass
class ComplexityReport:
    mean: float
    stderr: float
    trials: int
    values: list
    interpretation: str
    failures: int = 0


def _report(values, interpretation, failures=0):
    values = [float(v) for v in values]
    count = len(values)
    if count == 0:
        raise SolverFailure("no trial produced a value")
    mean = sum(values) / count
    if count > 1:
        var = sum((v - mean) ** 2 for v in values) / (count - 1)
        stderr = math.sqrt(var / count)
    else:
        stderr = 0.0
    return ComplexityReport(mean, stderr, count, values, interpretation, failures)


def _mc_linear_sup(sys, p, trials, params, seed, draw):
    if trials < 1:
        raise ValueError("trials must be positive")
    if params is None:
        params = SolverParams()
    n = sys.basis.n
    rng = rng_from_seed(seed)
    values, failures = [], 0
    for _ in range(trials):
        W = Tensor(p, n, draw(rng, n ** p))
        try:
            value, _ = maximize_linear(W, sys, params)
            values.append(value)
        except SolverFailure:
            failures += 1
    return _report(values, "lower-estimate", failures)


def gaussian_complexity_mc(sys, p, trials, params=None, seed=0):
    """Mean of maximize_linear over i.i.d. standard Gaussian tensors; a lower
    estimate of E sup_X <X, W>."""
    return _mc_linear_sup(sys, p, trials, params, seed,
                          lambda rng, m: rng.standard_normal(m))


def rademacher_complexity_mc(sys, p, trials, params=None, seed=0):
    """As gaussian_complexity_mc with uniform +-1 tensors."""
    return _mc_linear_sup(sys, p, trials, params, seed,
                          lambda rng, m: 2.0 * rng.integers(0, 2, m) - 1.0)


def sudakov_ln_net_bound(G, eps):
    """Covering-number bound ln|N_eps| <= (2G/eps)^2 from minoration."""
    if G < 0:
        raise ValueError("complexity must be nonnegative")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return (2.0 * G / eps) ** 2


def submatrix_spectral_max(W, t):
    """Exact max spectral norm over all 2t x 2t principal submatrices."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("need a square matrix")
    if not np.allclose(W, W.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    n = W.shape[0]
    if t < 1 or 2 * t > n:
        raise ValueError("need 1 <= 2t <= n")
    if math.comb(n, 2 * t) > SUBMATRIX_ENUM_CAP:
        raise ValueError("submatrix enumeration above cap")
    best = -np.inf
    best_subset = None
    for subset in itertools.combinations(range(n), 2 * t):
        sub = W[np.ix_(subset, subset)]
        w = np.linalg.eigvalsh(sub)
        val = max(abs(w[0]), abs(w[-1]))
        if val > best:
            best = val
            best_subset = subset
    return float(best), best_subset


def sparse_quadratic_certificate(W, k, t):
    """Upper bound 2 m_t k / t on sup over k-sparse unit x of x^T W x."""
    W = np.asarray(W, dtype=np.float64)
    if not t <= k <= W.shape[0]:
        raise ValueError("need t <= k <= n")
    m_t, _ = submatrix_spectral_max(W, t)
    return 2.0 * m_t * k / t


def sparse_complexity_bound_mc(n, k, t, trials, seed=0):
    """Monte-Carlo mean of the certificate 2 w_t k / t over symmetric Gaussian
    matrices; an upper bound on the Gaussian complexity of the sparse set."""
    if not n >= k >= t >= 2:
        raise ValueError("need n >= k >= t >= 2")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = rng_from_seed(seed)
    values = []
    for _ in range(trials):
        G = rng.standard_normal((n, n))
        W = np.triu(G)
        W = W + np.triu(W, 1).T
        w_t, _ = submatrix_spectral_max(W, t)
        values.append(2.0 * w_t * k / t)
    return _report(values, "certificate-upper-bound")


def gradient_sup_bound_check(A, spec, h, trials, seed=0):
    """Compare E sup_{a in A} <grad F_h(N), a> against 3h * G_hat(A).

    Both sides are Monte-Carlo means; pass allows 3 joint standard errors.
    Returns (empirical mean, bound, pass).
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if trials < 2:
        raise ValueError("need at least 2 trials for a standard error")
    m = A.shape[1]
    sup_vals = np.empty(trials)
    for i in range(trials):
        sub_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        noise = sample_noise(spec, m, sub_seed)
        sup_vals[i] = float(np.max(A @ huber_grad(noise, h)))
    rng = rng_from_seed(seed)
    g_vals = np.max(A @ rng.standard_normal((m, trials)), axis=0)
    mean_s = float(sup_vals.mean())
    se_s = float(sup_vals.std(ddof=1) / math.sqrt(trials))
    mean_g = float(g_vals.mean())
    se_g = float(g_vals.std(ddof=1) / math.sqrt(trials))
    bound = 3.0 * h * mean_g
    joint = math.sqrt(se_s ** 2 + (3.0 * h * se_g) ** 2)
    return mean_s, bound, bool(mean_s <= bound + 3.0 * joint)


def expectation_from_tails(a, taus, tail_values):
    """Upper bound E eta <= a + integral of the tail function, trapezoidal."""
    taus = np.asarray(taus, dtype=np.float64)
    tail_values = np.asarray(tail_values, dtype=np.float64)
    if taus.shape != tail_values.shape or taus.size < 2:
        raise ValueError("need matching tau/value grids with >= 2 points")
    if (np.diff(taus) <= 0).any():
        raise ValueError("tau grid must be strictly increasing")
    if (tail_values < 0).any():
        raise ValueError("tail values must be nonnegative")
    return float(a) + float(np.trapezoid(tail_values, taus))
