"""Pseudo-moment vectors over a monomial basis, constraint systems compiled to
affine-plus-PSD form, and Dykstra projection onto the feasible set.

A constraint system may carry auxiliary variables (used by the sparse
compilation's sign-split of absolute values); the working vector is then
[moment values | aux values]. The PSD requirement applies to the moment
block only.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

MAX_BASIS = 50_000


class MonomialBasis:
    """Exponent multi-indices of total degree <= degree, graded-lex order."""

    def __init__(self, n, degree, exponents):
        self.n = n
        self.degree = degree
        self.exponents = exponents
        self.index = {e: i for i, e in enumerate(exponents)}
        self.size = len(exponents)
        self._matrix_idx = {}
        self._extract_idx = {}
        self._exp_array = None

    def exponent_array(self):
        if self._exp_array is None:
            self._exp_array = np.array(self.exponents, dtype=np.int64)
        return self._exp_array

    def matrix_index(self, half_degree):
        """Index matrix IDX with IDX[r,c] = position of exponent e_r + e_c,
        rows ranging over monomials of degree <= half_degree."""
        if half_degree not in self._matrix_idx:
            if 2 * half_degree > self.degree:
                raise ValueError("matrix degree exceeds basis degree")
            rows = [e for e in self.exponents if sum(e) <= half_degree]
            r = len(rows)
            idx = np.empty((r, r), dtype=np.intp)
            for a in range(r):
                for b in range(a, r):
                    s = tuple(x + y for x, y in zip(rows[a], rows[b]))
                    idx[a, b] = idx[b, a] = self.index[s]
            self._matrix_idx[half_degree] = idx
        return self._matrix_idx[half_degree]

    def extract_index(self, p):
        """Flat index array mapping each order-p tensor position (row-major)
        to its monomial's slot."""
        if p not in self._extract_idx:
            if p > self.degree:
                raise ValueError("extraction order exceeds basis degree")
            out = np.empty(self.n ** p, dtype=np.intp)
            for pos, multi in enumerate(itertools.product(range(self.n), repeat=p)):
                e = [0] * self.n
                for i in multi:
                    e[i] += 1
                out[pos] = self.index[tuple(e)]
            self._extract_idx[p] = out
        return self._extract_idx[p]

    def __repr__(self):
        return f"MonomialBasis(n={self.n}, degree={self.degree}, size={self.size})"


def monomial_basis(n, degree, max_size=MAX_BASIS):
    if n < 1:
        raise ValueError("need at least one variable")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    size = math.comb(n + degree, degree)
    if size > max_size:
        raise ValueError(f"basis size {size} exceeds cap {max_size}")
    exponents = []
    for d in range(degree + 1):
        for comb in itertools.combinations_with_replacement(range(n), d):
            e = [0] * n
            for i in comb:
                e[i] += 1
            exponents.append(tuple(e))
    return MonomialBasis(n, degree, exponents)


class PseudoMoments:
    """One real value per basis monomial; the constant monomial's value is 1."""

    __slots__ = ("basis", "values")

    def __init__(self, basis, values):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (basis.size,):
            raise ValueError("value vector does not match basis size")
        if abs(values[0] - 1.0) > 1e-6:
            raise ValueError("constant monomial must have value 1")
        self.basis = basis
        self.values = values

    @classmethod
    def from_distribution(cls, basis, atoms, weights):
        """Moments of a finite mixture sum_a weights[a] * delta_{atoms[a]}."""
        atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
        weights = np.asarray(weights, dtype=np.float64)
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        E = basis.exponent_array()
        values = np.zeros(basis.size)
        for atom, w in zip(atoms, weights):
            values += w * np.prod(atom[None, :] ** E, axis=1)
        return cls(basis, values)

    def first_moments(self):
        n = self.basis.n
        return self.values[1:1 + n].copy()

    def second_moment_matrix(self):
        n = self.basis.n
        out = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                e = [0] * n
                e[i] += 1
                e[j] += 1
                out[i, j] = out[j, i] = self.values[self.basis.index[tuple(e)]]
        return out

    def copy(self):
        return PseudoMoments(self.basis, self.values.copy())


def moment_matrix(m):
    """M[beta,gamma] = values[beta+gamma] over monomials of degree <= D/2."""
    if m.basis.degree % 2 != 0:
        raise ValueError("moment matrix needs an even basis degree")
    idx = m.basis.matrix_index(m.basis.degree // 2)
    return m.values[idx]


def project_psd(M):
    """Frobenius-nearest PSD matrix: clip negative eigenvalues."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("need a square matrix")
    if not np.allclose(M, M.T, atol=1e-8):
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh((M + M.T) / 2.0)
    w = np.maximum(w, 0.0)
    out = (V * w) @ V.T
    return (out + out.T) / 2.0


class ConstraintSystem:
    """Affine equalities/inequalities over [moments | aux] plus a PSD moment
    matrix of the given half-degree. Construction requires a feasible witness."""

    def __init__(self, basis, psd_degree, equalities, inequalities, n_aux,
                 witness, meta):
        self.basis = basis
        self.psd_degree = psd_degree
        self.equalities = equalities
        self.inequalities = inequalities
        self.n_aux = n_aux
        self.dim = basis.size + n_aux
        self.witness = np.ascontiguousarray(witness, dtype=np.float64)
        self.meta = dict(meta)
        if self.witness.shape != (self.dim,):
            raise ValueError("witness does not match system dimension")
        self._eq_cache = None
        self._ineq_cache = None
        self._counts = None
        self._check_witness()

    def _check_witness(self):
        eq, ineq, mineig = self.residuals(self.witness)
        if eq > 1e-9 or ineq > 1e-9 or mineig < -1e-10:
            raise ValueError(
                f"witness infeasible: eq={eq:.2e} ineq={ineq:.2e} mineig={mineig:.2e}")

    def _equalities(self):
        # Stacked sparse rows with a Cholesky factor of A A^T for the
        # least-squares projection onto {Ay = b}.
        if self._eq_cache is None:
            idxs = [np.asarray(e[0], dtype=np.intp) for e in self.equalities]
            coefs = [np.asarray(e[1], dtype=np.float64) for e in self.equalities]
            rows = len(idxs)
            lens = np.array([len(i) for i in idxs])
            ptr = np.concatenate(([0], np.cumsum(lens)))[:-1]
            idx_all = np.concatenate(idxs)
            coef_all = np.concatenate(coefs)
            row_of = np.repeat(np.arange(rows), lens)
            b = np.array([e[2] for e in self.equalities], dtype=np.float64)
            occurrences = {}
            for r in range(rows):
                for j, c in zip(idxs[r], coefs[r]):
                    occurrences.setdefault(int(j), []).append((r, c))
            gram = np.zeros((rows, rows))
            for entries in occurrences.values():
                for r1, c1 in entries:
                    for r2, c2 in entries:
                        gram[r1, r2] += c1 * c2
            # no ridge: a regularized solve leaves a bias proportional to
            # the residual, which breaks the unit-mass slot on far inputs
            try:
                solve = np.linalg.cholesky(gram)
            except np.linalg.LinAlgError:
                solve = None  # dependent rows; fall back to the pseudoinverse
            pinv = np.linalg.pinv(gram) if solve is None else None
            self._eq_cache = (idx_all, coef_all, ptr, row_of, b, (solve, pinv))
        return self._eq_cache

    def _inequalities(self):
        if self._ineq_cache is None:
            rows = []
            for idx, coef, ub, _ in self.inequalities:
                idx = np.asarray(idx, dtype=np.intp)
                coef = np.asarray(coef, dtype=np.float64)
                rows.append((idx, coef, float(ub), float(coef @ coef)))
            self._ineq_cache = rows
        return self._ineq_cache

    def matrix_counts(self):
        if self._counts is None:
            idx = self.basis.matrix_index(self.psd_degree)
            counts = np.bincount(idx.ravel(), minlength=self.basis.size)
            if (counts == 0).any():
                raise ValueError("moment matrix does not cover the basis")
            self._counts = counts.astype(np.float64)
        return self._counts

    def residuals(self, y):
        """(max equality residual, max inequality violation, min eigenvalue)."""
        idx_all, coef_all, ptr, _, b, _ = self._equalities()
        prods = coef_all * y[idx_all]
        eq = float(np.max(np.abs(np.add.reduceat(prods, ptr) - b))) if len(b) else 0.0
        ineq = 0.0
        for idx, coef, ub, _ in self._inequalities():
            ineq = max(ineq, float(coef @ y[idx]) - ub)
        idx = self.basis.matrix_index(self.psd_degree)
        mineig = float(np.linalg.eigvalsh(y[idx])[0])
        return eq, max(ineq, 0.0), mineig

    def moments_of(self, y):
        return PseudoMoments(self.basis, y[:self.basis.size])


@dataclass
class ProjectionReport:
    converged: bool
    sweeps: int
    eq_residual: float
    ineq_violation: float
    min_eig: float
    aux: np.ndarray
    # final (halfspace, PSD) corrections; feed back in as `dual` to
    # warm-start the projection of a nearby point
    dual: tuple = None


def _project_affine(y, eq):
    idx_all, coef_all, ptr, row_of, b, (L, pinv) = eq
    r = np.add.reduceat(coef_all * y[idx_all], ptr) - b
    if L is not None:
        w = np.linalg.solve(L.T, np.linalg.solve(L, r))
    else:
        w = pinv @ r
    np.subtract.at(y, idx_all, coef_all * w[row_of])


def dykstra_project(m, sys, max_iters=500, tol=1e-7, aux=None, dual=None):
    """Project pseudo-moments onto the system's feasible set.

    Cyclic Dykstra sweeps: each inequality halfspace (scalar corrections),
    the PSD cone via eigenvalue clipping averaged back over matrix cells
    sharing a monomial, then the stacked affine equalities last, so every
    candidate iterate sits exactly on the equalities. Affine sets need no
    correction term. Residuals are checked every few sweeps (an extra
    eigendecomposition); on non-convergence the best checked iterate is
    returned with converged = False.

    `dual` seeds the correction terms from a previous report. Projecting a
    point near the one that produced them then converges in far fewer
    sweeps; the residual check still decides convergence, so a stale seed
    costs sweeps but cannot produce a false positive.
    """
    size = sys.basis.size
    y = np.empty(sys.dim)
    y[:size] = m.values
    y[size:] = sys.witness[size:] if aux is None else aux
    eq = sys._equalities()
    halfspaces = sys._inequalities()
    idx = sys.basis.matrix_index(sys.psd_degree)
    counts = sys.matrix_counts()
    if dual is None:
        beta = np.zeros(len(halfspaces))
        corr = np.zeros(idx.shape)
    else:
        beta = dual[0].copy()
        corr = dual[1].copy()
    _project_affine(y, eq)
    best = None
    sweeps = 0
    for sweeps in range(1, max_iters + 1):
        for i, (hidx, coef, ub, nsq) in enumerate(halfspaces):
            val = float(coef @ y[hidx]) + beta[i] * nsq
            viol = (val - ub) / nsq
            if viol <= 0.0:
                if beta[i] != 0.0:
                    y[hidx] += beta[i] * coef
                beta[i] = 0.0
            else:
                y[hidx] += (beta[i] - viol) * coef
                beta[i] = viol
        M = y[idx] + corr
        w, V = np.linalg.eigh(M)
        Mp = (V * np.maximum(w, 0.0)) @ V.T
        Mp = (Mp + Mp.T) / 2.0
        corr = M - Mp
        acc = np.zeros(size)
        np.add.at(acc, idx.ravel(), Mp.ravel())
        y[:size] = acc / counts
        _project_affine(y, eq)
        if sweeps % 4 == 0 or sweeps == max_iters:
            eqres, ineqres, mineig = sys.residuals(y)
            score = max(eqres, ineqres, -mineig)
            if best is None or score < best[0]:
                best = (score, y.copy(), eqres, ineqres, mineig)
            if eqres <= tol and ineqres <= tol and mineig >= -tol:
                report = ProjectionReport(True, sweeps, eqres, ineqres,
                                          mineig, y[size:].copy(),
                                          (beta.copy(), corr.copy()))
                return sys.moments_of(y), report
    _, y, eqres, ineqres, mineig = best
    report = ProjectionReport(False, sweeps, eqres, ineqres, mineig,
                              y[size:].copy(), (beta.copy(), corr.copy()))
    return sys.moments_of(y), report


def extract_signal(m, p):
    """Order-p tensor of degree-p moments: entry (i1..ip) = values[x_{i1}...x_{ip}]."""
    idx = m.basis.extract_index(p)
    return Tensor(p, m.basis.n, m.values[idx].copy())


def _even_mixture_values(basis, u):
    """Moments of the two-point mixture (delta_u + delta_{-u})/2."""
    E = basis.exponent_array()
    vals = np.prod(u[None, :] ** E, axis=1)
    vals[E.sum(axis=1) % 2 == 1] = 0.0
    return vals


def compile_tensor_pca(n, p, lam, max_monomials=MAX_BASIS):
    """Degree-2p system: unit mass, total power <= 1, per-coordinate second
    moments <= lam^{-2/p}."""
    if p < 2:
        raise ValueError("order must be at least 2")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    basis = monomial_basis(n, 2 * p, max_monomials)
    bound = lam ** (-2.0 / p)
    diag_slots = []
    for i in range(n):
        e = [0] * n
        e[i] = 2
        diag_slots.append(basis.index[tuple(e)])
    equalities = [(np.array([0]), np.array([1.0]), 1.0, "unit-mass")]
    inequalities = [(np.array(diag_slots), np.ones(n), 1.0, "total-power<=1")]
    for i, slot in enumerate(diag_slots):
        inequalities.append((np.array([slot]), np.array([1.0]), bound,
                             f"diag[{i}]<=bound"))
    s = math.sqrt(min(1.0, n * bound))
    u = np.full(n, s / math.sqrt(n))
    witness = _even_mixture_values(basis, u)
    meta = {"problem": "tensor-pca", "n": n, "p": p, "lambda": lam,
            "diag_bound": bound}
    return ConstraintSystem(basis, p, equalities, inequalities, 0, witness, meta)


def compile_sparse_pca(n, k, b, max_monomials=200_000):
    """Degree-4 system over x only: unit total power (equality), diagonal
    bounds b^2/k, and the l1 surrogate sum_{i,j} |E x_i x_j| <= k via a
    sign-split pair of auxiliary variables per unordered pair."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if b <= 0:
        raise ValueError("b must be positive")
    if b * b < k / n:
        raise ValueError("infeasible: diagonal bounds cannot carry unit power")
    basis = monomial_basis(n, 4, max_monomials)
    size = basis.size
    pairs = list(itertools.combinations_with_replacement(range(n), 2))
    pair_slot = []
    for i, j in pairs:
        e = [0] * n
        e[i] += 1
        e[j] += 1
        pair_slot.append(basis.index[tuple(e)])
    n_aux = 2 * len(pairs)
    pos_var = [size + 2 * r for r in range(len(pairs))]
    neg_var = [size + 2 * r + 1 for r in range(len(pairs))]
    diag_slots = [pair_slot[pairs.index((i, i))] for i in range(n)]

    equalities = [
        (np.array([0]), np.array([1.0]), 1.0, "unit-mass"),
        (np.array(diag_slots), np.ones(n), 1.0, "total-power=1"),
    ]
    for r, (i, j) in enumerate(pairs):
        equalities.append((np.array([pair_slot[r], pos_var[r], neg_var[r]]),
                           np.array([1.0, -1.0, 1.0]), 0.0, f"split({i},{j})"))

    bound = b * b / k
    inequalities = []
    for i in range(n):
        inequalities.append((np.array([diag_slots[i]]), np.array([1.0]), bound,
                             f"diag[{i}]<=bound"))
    weights = np.array([1.0 if i == j else 2.0 for i, j in pairs])
    surrogate_idx = np.array([v for r in range(len(pairs))
                              for v in (pos_var[r], neg_var[r])])
    surrogate_coef = np.repeat(weights, 2)
    inequalities.append((surrogate_idx, surrogate_coef, float(k), "l1-surrogate"))
    for r, (i, j) in enumerate(pairs):
        inequalities.append((np.array([pos_var[r]]), np.array([-1.0]), 0.0,
                             f"pos({i},{j})>=0"))
        inequalities.append((np.array([neg_var[r]]), np.array([-1.0]), 0.0,
                             f"neg({i},{j})>=0"))

    witness = np.zeros(size + n_aux)
    if b >= 1.0:
        u = np.zeros(n)
        u[:k] = 1.0 / math.sqrt(k)
        witness[:size] = _even_mixture_values(basis, u)
        for r, (i, j) in enumerate(pairs):
            if i < k and j < k:
                witness[pos_var[r]] = 1.0 / k
    else:
        # Mixture over +-e_i: diagonal 1/n, all cross moments zero.
        E = basis.exponent_array()
        vals = np.zeros(size)
        single = (np.count_nonzero(E, axis=1) == 1) & (E.sum(axis=1) % 2 == 0)
        vals[single] = 1.0 / n
        vals[0] = 1.0
        witness[:size] = vals
        for i in range(n):
            witness[pos_var[pairs.index((i, i))]] = 1.0 / n
    meta = {"problem": "sparse-pca", "n": n, "k": k, "b": b,
            "diag_bound": bound}
    return ConstraintSystem(basis, 2, equalities, inequalities, n_aux, witness,
                            meta)


def compile_unit_ball(n, max_monomials=MAX_BASIS):
    """Degenerate degree-2 system whose first moments range over the unit
    Euclidean ball; used to calibrate complexity estimators."""
    basis = monomial_basis(n, 2, max_monomials)
    diag_slots = []
    for i in range(n):
        e = [0] * n
        e[i] = 2
        diag_slots.append(basis.index[tuple(e)])
    equalities = [(np.array([0]), np.array([1.0]), 1.0, "unit-mass")]
    inequalities = [(np.array(diag_slots), np.ones(n), 1.0, "total-power<=1")]
    witness = np.zeros(basis.size)
    witness[0] = 1.0
    meta = {"problem": "unit-ball", "n": n}
    return ConstraintSystem(basis, 1, equalities, inequalities, 0, witness, meta)


def _var_key(basis, j):
    if j < basis.size:
        return ",".join(str(e) for e in basis.exponents[j])
    return f"aux:{j - basis.size}"


def system_to_json(sys):
    """JSON-ready dict; monomial variables keyed by comma-joined exponents."""
    def rows(constraints, bound_name):
        out = []
        for idx, coef, rhs, label in constraints:
            terms = {_var_key(sys.basis, int(j)): float(c)
                     for j, c in zip(idx, coef)}
            out.append({"terms": terms, bound_name: float(rhs), "label": label})
        return out

    return {
        "n": sys.basis.n,
        "basis_degree": sys.basis.degree,
        "basis_size": sys.basis.size,
        "psd_degree": sys.psd_degree,
        "n_aux": sys.n_aux,
        "meta": sys.meta,
        "equalities": rows(sys.equalities, "rhs"),
        "inequalities": rows(sys.inequalities, "bound"),
    }
