"""Dense tensors, the Huber penalty family, and the norm inequalities the estimators rest on."""

import itertools
import math

import numpy as np

# Desk-scale caps for dense row-major storage.
MAX_ORDER = 4
MAX_ENTRIES = 100_000


class Tensor:
    """Dense order-p real tensor, dimension n per mode, row-major flat storage."""

    __slots__ = ("order", "dim", "values")

    def __init__(self, order, dim, values):
        order = int(order)
        dim = int(dim)
        if order < 1:
            raise ValueError("tensor order must be >= 1")
        if dim < 1:
            raise ValueError("tensor dimension must be >= 1")
        if order > MAX_ORDER:
            raise ValueError(f"tensor order {order} exceeds cap {MAX_ORDER}")
        if dim ** order > MAX_ENTRIES:
            raise ValueError(f"tensor size {dim}^{order} exceeds cap {MAX_ENTRIES}")
        values = np.ascontiguousarray(values, dtype=np.float64).ravel()
        if values.size != dim ** order:
            raise ValueError(f"expected {dim ** order} entries, got {values.size}")
        self.order = order
        self.dim = dim
        self.values = values

    @classmethod
    def zeros(cls, order, dim):
        return cls(order, dim, np.zeros(dim ** order))

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float64)
        dims = set(arr.shape)
        if len(dims) != 1:
            raise ValueError("all modes must share one dimension")
        return cls(arr.ndim, arr.shape[0], arr.ravel())

    def reshaped(self):
        """View of the values as an ndarray of shape (n,)*p."""
        return self.values.reshape((self.dim,) * self.order)

    def frobenius_norm(self):
        return float(np.linalg.norm(self.values))

    def copy(self):
        return Tensor(self.order, self.dim, self.values.copy())

    def __eq__(self, other):
        return (
            isinstance(other, Tensor)
            and self.order == other.order
            and self.dim == other.dim
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"Tensor(order={self.order}, dim={self.dim})"


def rank_one(v, p):
    """Outer power v^(x)p as a Tensor."""
    v = np.asarray(v, dtype=np.float64).ravel()
    p = int(p)
    if p < 1:
        raise ValueError("order must be >= 1")
    out = v
    for _ in range(p - 1):
        out = np.multiply.outer(out, v)
    return Tensor(p, v.size, out.ravel())


def huber_value(t, h):
    """Quadratic t^2/2 inside [-h, h], linear h(|t| - h/2) outside.

    Accepts scalars or arrays. Boundary |t| = h uses the quadratic branch.
    """
    if h <= 0:
        raise ValueError("huber threshold must be positive")
    t = np.asarray(t, dtype=np.float64)
    a = np.abs(t)
    out = np.where(a <= h, 0.5 * t * t, h * (a - 0.5 * h))
    return float(out) if out.ndim == 0 else out


def huber_grad(t, h):
    """Derivative of huber_value: t clamped to [-h, h]."""
    if h <= 0:
        raise ValueError("huber threshold must be positive")
    t = np.asarray(t, dtype=np.float64)
    out = np.clip(t, -h, h)
    return float(out) if out.ndim == 0 else out


def huber_loss(T, h):
    """Sum of the Huber penalty over all tensor entries."""
    return float(np.sum(huber_value(T.values, h)))


def huber_second_order_gap(t, delta, zeta, h):
    """Slack of the second-order lower bound on the Huber penalty.

    Returns f(t+delta) - f(t) - f'(t)*delta - (delta^2/2)*1{|t|<=zeta}*1{|delta|<=h-zeta}.
    Nonnegative (up to rounding) for all 0 <= zeta <= h.
    """
    if h <= 0:
        raise ValueError("huber threshold must be positive")
    if zeta < 0 or zeta > h:
        raise ValueError("zeta must lie in [0, h]")
    t = np.asarray(t, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    lhs = huber_value(t + delta, h) - huber_value(t, h) - huber_grad(t, h) * delta
    active = (np.abs(t) <= zeta) & (np.abs(delta) <= h - zeta)
    rhs = 0.5 * delta * delta * active
    out = lhs - rhs
    return float(out) if np.ndim(out) == 0 else out


def tensor_diff_norm_check(v, x):
    """Check 0.5*||v-x||^2 <= ||v^(x)3 - x^(x)3||_F^2 <= 10*||v-x||^2 for unit v, x.

    Returns (lower_ok, upper_ok, ratio) with ratio defined as 1 at v = x.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64).ravel()
    if abs(np.linalg.norm(v) - 1.0) > 1e-10 or abs(np.linalg.norm(x) - 1.0) > 1e-10:
        raise ValueError("inputs must be unit vectors")
    diff = rank_one(v, 3).values - rank_one(x, 3).values
    dsq = float(diff @ diff)
    vxsq = float(np.sum((v - x) ** 2))
    lower_ok = bool(dsq >= 0.5 * vxsq - 1e-9)
    upper_ok = bool(dsq <= 10.0 * vxsq + 1e-9)
    ratio = 1.0 if vxsq == 0.0 else dsq / vxsq
    return lower_ok, upper_ok, ratio


def upper_simplex(T, strict):
    """Entries with nondecreasing (or strictly increasing) indices, lexicographic order."""
    if T.order < 2:
        raise ValueError("need order >= 2")
    arr = T.reshaped()
    combine = itertools.combinations if strict else itertools.combinations_with_replacement
    idx = np.array(list(combine(range(T.dim), T.order)), dtype=np.intp)
    if idx.size == 0:
        return np.zeros(0)
    return arr[tuple(idx.T)].astype(np.float64)


def upper_simplex_size(n, p, strict):
    return math.comb(n, p) if strict else math.comb(n + p - 1, p)


def upper_simplex_indices(n, p, strict):
    """The multi-indices selected by upper_simplex, in the same order."""
    combine = itertools.combinations if strict else itertools.combinations_with_replacement
    return list(combine(range(n), p))
