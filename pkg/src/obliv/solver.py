"""Projected-gradient minimization of the Huber loss over a compiled moment
set, linear maximization over the same set, and the exact sign-pattern
estimator for third-order tensors."""

from dataclasses import dataclass

import numpy as np

from .moments import PseudoMoments, dykstra_project
from .tensor import huber_grad, huber_value

HYPERCUBE_MAX_N = 24


@dataclass
class SolverParams:
    max_outer_iters: int = 30
    step_init: float = 0.3
    backtrack_factor: float = 0.5
    max_backtracks: int = 12
    grad_tol: float = 1e-7
    # a loose projection tolerance buys more accepted descent steps per
    # second than a tight one buys accuracy; residuals of whatever is
    # returned are reported, not assumed
    proj_max_iters: int = 120
    proj_tol: float = 1e-4
    seed: int = 0
    init: np.ndarray | None = None

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.max_backtracks < 1:
            raise ValueError("iteration counts must be positive")
        if self.step_init <= 0 or self.grad_tol <= 0 or self.proj_tol <= 0:
            raise ValueError("step and tolerances must be positive")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")


@dataclass
class SolveReport:
    objective: float
    iterations: int
    trajectory: list
    eq_residual: float
    ineq_violation: float
    min_eig: float
    converged: bool
    projections: int


class SolverFailure(RuntimeError):
    pass


def _start_vector(sys, params):
    if params.init is not None:
        y = np.ascontiguousarray(params.init, dtype=np.float64)
        if y.shape != (sys.dim,):
            raise ValueError("init vector does not match system dimension")
        return y.copy()
    return sys.witness.copy()


def _project(sys, y, params, dual=None, max_iters=None):
    m = PseudoMoments(sys.basis, y[:sys.basis.size])
    if max_iters is None:
        max_iters = params.proj_max_iters
    mom, rep = dykstra_project(m, sys, max_iters=max_iters,
                               tol=params.proj_tol, aux=y[sys.basis.size:],
                               dual=dual)
    out = np.empty(sys.dim)
    out[:sys.basis.size] = mom.values
    out[sys.basis.size:] = rep.aux
    return out, rep


def _gather_slots(sys, Z, mask):
    if Z.dim != sys.basis.n:
        raise ValueError("tensor dimension does not match basis")
    slots = sys.basis.extract_index(Z.order)
    if mask is None:
        return Z.values, slots
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != Z.values.shape:
        raise ValueError("mask shape does not match tensor entries")
    return Z.values[mask], slots[mask]


def minimize_huber(Z, sys, h, params=None, mask=None):
    """Minimize F_h(Z - extract_signal(m, p)) over the feasible moment set.

    Projected gradient descent: the gradient of the Huber residual is pulled
    back through the linear extraction map by scatter-adding, each trial point
    is re-projected with dykstra_project, and a backtracking line search
    accepts only strict objective decrease. The step size resets to step_init
    after 5 consecutive accepts. Entries where mask is False are excluded from
    the objective.

    Each trial point is first projected under a reduced sweep budget. A
    candidate whose partial projection does not beat the incumbent is
    rejected at that price; otherwise the run is resumed to the full budget
    from its own iterate and correction terms.
    """
    if params is None:
        params = SolverParams()
    if h <= 0:
        raise ValueError("h must be positive")
    zvals, slots = _gather_slots(sys, Z, mask)

    def objective(y):
        return float(huber_value(zvals - y[slots], h).sum())

    y, rep = _project(sys, _start_vector(sys, params), params)
    if not rep.converged and rep.eq_residual > 1e-3:
        raise SolverFailure(
            f"projection failed to reach the feasible set: eq={rep.eq_residual:.2e}")
    projections = 1
    f = objective(y)
    trajectory = [f]
    step = params.step_init
    screen_cap = min(params.proj_max_iters, max(8, params.proj_max_iters // 4))
    consecutive = 0
    converged = False
    iterations = 0
    for it in range(params.max_outer_iters):
        iterations = it + 1
        g = np.zeros(sys.dim)
        np.add.at(g, slots, -huber_grad(zvals - y[slots], h))
        gnorm = float(np.linalg.norm(g))
        if gnorm <= 1e-15:
            converged = True
            break
        # unit direction: step measures pre-projection displacement, which
        # keeps Dykstra's start close to the set
        d = g / gnorm
        accepted = False
        move = 0.0
        for _ in range(params.max_backtracks):
            cand, cand_rep = _project(sys, y - step * d, params,
                                      max_iters=screen_cap)
            projections += 1
            if not cand_rep.converged and screen_cap < params.proj_max_iters:
                if objective(cand) >= f:
                    # partial projection already fails to beat the incumbent;
                    # skip the full sweep budget for this candidate
                    step *= params.backtrack_factor
                    consecutive = 0
                    continue
                # continue the same projection run from its iterate and
                # correction terms rather than restarting cold
                cand, cand_rep = _project(sys, cand, params,
                                          dual=cand_rep.dual,
                                          max_iters=params.proj_max_iters - screen_cap)
                projections += 1
            fc = objective(cand)
            # a truncated projection can understate the objective; comparing
            # it against a converged f would poison the line search
            if fc < f and cand_rep.converged:
                move = float(np.linalg.norm(cand - y))
                y, f, rep = cand, fc, cand_rep
                trajectory.append(f)
                accepted = True
                consecutive += 1
                if consecutive >= 5:
                    step = params.step_init
                    consecutive = 0
                break
            step *= params.backtrack_factor
            consecutive = 0
        if not accepted:
            converged = True
            break
        if move <= params.grad_tol * (1.0 + float(np.linalg.norm(y))):
            converged = True
            break
    report = SolveReport(f, iterations, trajectory, rep.eq_residual,
                         rep.ineq_violation, rep.min_eig, converged, projections)
    return PseudoMoments(sys.basis, y[:sys.basis.size]), report


def _point_mass_candidate(sys, y, tol):
    """Moments of the point mass at the iterate's normalized first moments,
    or None when the mass is degenerate, the system has auxiliary slots, or
    the point mass is not feasible. A feasible point mass pins the boundary
    exactly, which projected iterates only approach."""
    if sys.n_aux:
        return None
    n = sys.basis.n
    mu = y[1:1 + n]
    norm = float(np.linalg.norm(mu))
    if norm < 1e-12:
        return None
    x = mu / norm
    vals = PseudoMoments.from_distribution(sys.basis, [x], [1.0]).values
    eqres, ineqres, mineig = sys.residuals(vals)
    if eqres <= tol and ineqres <= tol and mineig >= -tol:
        return vals
    return None


def maximize_linear(W, sys, params=None):
    """Projected gradient ascent on <extract_signal(m, p), W>. Any feasible
    iterate is a valid lower estimate of the sup, so the best one seen is
    returned rather than the last. Each accepted iterate also offers its
    rounded point mass as a candidate; when that is feasible it dominates
    the projected iterate, which stops short of the boundary."""
    if params is None:
        params = SolverParams()
    wvals, slots = _gather_slots(sys, W, None)
    c = np.zeros(sys.dim)
    np.add.at(c, slots, wvals)
    cnorm = float(np.linalg.norm(c))
    if cnorm <= 1e-15:
        y, _ = _project(sys, _start_vector(sys, params), params)
        return 0.0, PseudoMoments(sys.basis, y[:sys.basis.size])
    u = c / cnorm

    y, rep = _project(sys, _start_vector(sys, params), params)
    if not rep.converged and rep.eq_residual > 1e-3:
        raise SolverFailure(
            f"projection failed to reach the feasible set: eq={rep.eq_residual:.2e}")
    value = float(c @ y)
    best_value, best_y = value, y.copy()

    def offer(vals):
        nonlocal best_value, best_y
        v = float(c @ vals)
        if v > best_value:
            best_value, best_y = v, vals.copy()

    pm = _point_mass_candidate(sys, y, params.proj_tol)
    if pm is not None:
        offer(pm)
    step = params.step_init
    consecutive = 0
    for _ in range(params.max_outer_iters):
        cand, cand_rep = _project(sys, y + step * u, params)
        vc = float(c @ cand)
        if vc > value:
            y, value = cand, vc
            consecutive += 1
            if consecutive >= 3:
                step *= 2.0
                consecutive = 0
            if cand_rep.converged and vc > best_value:
                best_value, best_y = vc, cand.copy()
            pm = _point_mass_candidate(sys, cand, params.proj_tol)
            if pm is not None:
                offer(pm)
        else:
            step *= params.backtrack_factor
            consecutive = 0
            if step < 1e-12 * params.step_init:
                break
    return best_value, PseudoMoments(sys.basis, best_y[:sys.basis.size])


def exact_hypercube_estimate(T, tau, h, n):
    """Exhaustive minimizer of F_h(T - tau x^{(3)}) over x in {-1,+1}^n/sqrt(n).

    Ties go to the lexicographically smallest sign pattern with +1 before -1.
    The per-entry loss takes one of two values (the sign product is +-1), so
    the objective splits into a shared base plus a degree-3 form in the signs.
    """
    if T.order != 3:
        raise ValueError("estimator is defined for third-order tensors")
    if T.dim != n:
        raise ValueError("n does not match the tensor dimension")
    if n > HYPERCUBE_MAX_N:
        raise ValueError(f"n={n} exceeds the enumeration cap {HYPERCUBE_MAX_N}")
    if tau <= 0:
        raise ValueError("tau must be positive")
    c0 = tau * float(n) ** -1.5
    f_plus = huber_value(T.values - c0, h)
    f_minus = huber_value(T.values + c0, h)
    base = float((f_plus + f_minus).sum()) / 2.0
    D = ((f_plus - f_minus) / 2.0).reshape(n * n, n)

    total = 1 << n
    chunk = max(1, (1 << 22) // (n * n))
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)
    best_val = np.inf
    best_code = 0
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.uint64)
        bits = (codes[:, None] >> shifts[None, :]) & np.uint64(1)
        S = 1.0 - 2.0 * bits.astype(np.float64)
        E = (D @ S.T).reshape(n, n, len(codes))
        F = np.einsum("ijc,cj->ic", E, S)
        vals = np.einsum("ic,ci->c", F, S)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_code = start + i
    bits = (np.uint64(best_code) >> shifts) & np.uint64(1)
    v_hat = (1.0 - 2.0 * bits.astype(np.float64)) / np.sqrt(float(n))
    return v_hat, base + best_val
