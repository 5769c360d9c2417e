import math

import numpy as np
import pytest

from obliv.moments import (
    ConstraintSystem,
    PseudoMoments,
    compile_sparse_pca,
    compile_tensor_pca,
    compile_unit_ball,
    dykstra_project,
    extract_signal,
    moment_matrix,
    monomial_basis,
    project_psd,
    system_to_json,
)
from obliv.tensor import rank_one


def test_basis_smallest_cases():
    b = monomial_basis(2, 1)
    assert b.exponents == [(0, 0), (1, 0), (0, 1)]
    assert b.size == 3
    assert monomial_basis(3, 2).size == 10
    assert monomial_basis(10, 3).size == 286


def test_basis_graded_lex_order():
    b = monomial_basis(3, 3)
    degrees = [sum(e) for e in b.exponents]
    assert degrees == sorted(degrees)
    assert b.exponents[0] == (0, 0, 0)
    assert b.size == math.comb(6, 3)
    # within degree 2: x1^2 before x1 x2 before x1 x3 before x2^2 ...
    d2 = [e for e in b.exponents if sum(e) == 2]
    assert d2 == [(2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)]


def test_basis_cap_and_validation():
    with pytest.raises(ValueError):
        monomial_basis(10, 3, max_size=100)
    with pytest.raises(ValueError):
        monomial_basis(0, 2)
    with pytest.raises(ValueError):
        monomial_basis(2, -1)


def test_pseudo_moments_constant_slot():
    b = monomial_basis(2, 2)
    vals = np.zeros(b.size)
    with pytest.raises(ValueError):
        PseudoMoments(b, vals)
    vals[0] = 1.0
    m = PseudoMoments(b, vals)
    assert m.values[0] == 1.0
    with pytest.raises(ValueError):
        PseudoMoments(b, np.ones(b.size - 1))


def test_from_distribution_point_mass():
    b = monomial_basis(3, 4)
    x = np.array([0.5, -1.0, 2.0])
    m = PseudoMoments.from_distribution(b, [x], [1.0])
    E = b.exponent_array()
    assert np.allclose(m.values, np.prod(x[None, :] ** E, axis=1))
    assert np.allclose(m.first_moments(), x)
    assert np.allclose(m.second_moment_matrix(), np.outer(x, x))


def test_mixture_moment_matrix_eigenvalues():
    # (delta_{e1} + delta_{-e1}) / 2 in R^2 at degree 2: odd moments vanish
    b = monomial_basis(2, 2)
    m = PseudoMoments.from_distribution(
        b, [[1.0, 0.0], [-1.0, 0.0]], [0.5, 0.5])
    M = moment_matrix(m)
    assert M.shape == (3, 3)
    assert np.allclose(sorted(np.linalg.eigvalsh(M)), [0.0, 1.0, 1.0])


def test_moment_matrix_entries():
    b = monomial_basis(2, 2)
    m = PseudoMoments.from_distribution(b, [[2.0, 3.0]], [1.0])
    M = moment_matrix(m)
    # rows [1, x1, x2]
    assert M[0, 0] == 1.0
    assert M[1, 0] == 2.0 and M[0, 2] == 3.0
    assert M[1, 1] == 4.0 and M[1, 2] == 6.0 and M[2, 2] == 9.0


def test_project_psd_nearest():
    out = project_psd(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(out, 0.5 * np.ones((2, 2)))
    A = np.diag([2.0, -3.0])
    assert np.allclose(project_psd(A), np.diag([2.0, 0.0]))
    P = project_psd(np.array([[1.0, 0.2], [0.2, 0.5]]))
    assert np.allclose(P, [[1.0, 0.2], [0.2, 0.5]])  # already PSD
    with pytest.raises(ValueError):
        project_psd(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_extract_signal_matches_rank_one():
    b = monomial_basis(3, 6)
    x = np.array([0.3, -0.4, 0.5])
    m = PseudoMoments.from_distribution(b, [x], [1.0])
    T = extract_signal(m, 3)
    assert np.allclose(T.values, rank_one(x, 3).values)


def test_compiled_witnesses_are_feasible():
    for sys_ in (
        compile_tensor_pca(4, 3, 5.0),
        compile_tensor_pca(3, 2, 2.0),
        compile_sparse_pca(6, 2, 100.0),
        compile_sparse_pca(5, 2, 0.8),  # b < 1 branch
        compile_unit_ball(3),
    ):
        eq, ineq, mineig = sys_.residuals(sys_.witness)
        assert eq <= 1e-9 and ineq <= 1e-9 and mineig >= -1e-10


def test_compile_validation():
    with pytest.raises(ValueError):
        compile_tensor_pca(3, 1, 2.0)
    with pytest.raises(ValueError):
        compile_tensor_pca(3, 3, 0.0)
    with pytest.raises(ValueError):
        compile_sparse_pca(4, 5, 100.0)
    with pytest.raises(ValueError):
        compile_sparse_pca(10, 5, 0.5)  # b^2 < k/n cannot carry unit power
    with pytest.raises(ValueError):
        compile_unit_ball(600)  # basis above cap


def test_tensor_system_diagonal_bound():
    sys_ = compile_tensor_pca(2, 2, 4.0)
    assert sys_.meta["diag_bound"] == pytest.approx(0.25)
    sys_ = compile_tensor_pca(8, 3, 57.12210052633033)
    assert sys_.meta["diag_bound"] == pytest.approx(0.06742131526415919, abs=1e-12)


def test_sparse_system_diagonal_bound():
    sys_ = compile_sparse_pca(40, 5, 100.0, max_monomials=200_000)
    assert sys_.meta["diag_bound"] == pytest.approx(2000.0)


def test_sparse_witness_saturates_l1_surrogate():
    # flat k-sparse vector: sum of |second moments| equals k exactly
    sys_ = compile_sparse_pca(6, 3, 100.0)
    for idx, coef, ub, label in sys_.inequalities:
        if label == "l1-surrogate":
            val = float(coef @ sys_.witness[idx])
            assert val == pytest.approx(3.0)
            assert ub == 3.0
            break
    else:
        pytest.fail("surrogate constraint missing")


def test_witness_rejected_when_infeasible():
    b = monomial_basis(2, 2)
    witness = np.zeros(b.size)
    witness[0] = 1.0
    eqs = [(np.array([0]), np.array([1.0]), 2.0, "unit-mass")]
    with pytest.raises(ValueError):
        ConstraintSystem(b, 1, eqs, [], 0, witness, {})


def test_dykstra_fixed_point():
    sys_ = compile_tensor_pca(3, 3, 4.0)
    m = sys_.moments_of(sys_.witness)
    out, rep = dykstra_project(m, sys_)
    assert rep.converged
    assert np.allclose(out.values, m.values, atol=1e-8)


def test_dykstra_restores_feasibility():
    sys_ = compile_tensor_pca(3, 2, 3.0)
    rng = np.random.default_rng(0)
    vals = sys_.witness[:sys_.basis.size] + 0.5 * rng.standard_normal(sys_.basis.size)
    vals[0] = 1.0
    out, rep = dykstra_project(PseudoMoments(sys_.basis, vals), sys_)
    assert rep.converged
    y = np.concatenate([out.values, rep.aux])
    eq, ineq, mineig = sys_.residuals(y)
    assert eq <= 1e-7 and ineq <= 1e-7 and mineig >= -1e-7
    assert out.values[0] == pytest.approx(1.0, abs=1e-9)


def test_dykstra_projection_is_idempotent():
    sys_ = compile_tensor_pca(3, 2, 3.0)
    rng = np.random.default_rng(1)
    vals = sys_.witness[:sys_.basis.size] + 0.3 * rng.standard_normal(sys_.basis.size)
    vals[0] = 1.0
    out1, rep1 = dykstra_project(PseudoMoments(sys_.basis, vals), sys_)
    out2, rep2 = dykstra_project(out1, sys_, aux=rep1.aux)
    assert rep2.converged
    assert np.allclose(out2.values, out1.values, atol=1e-6)
    assert rep2.sweeps <= rep1.sweeps


def test_dykstra_honors_extra_equality():
    # same feasible set plus a pinned first moment; the point mass at
    # (0.1, 0.2, -0.3) witnesses the extended system
    base = compile_tensor_pca(3, 2, 3.0)
    slot = base.basis.index[(1, 0, 0)]
    eqs = base.equalities + [(np.array([slot]), np.array([1.0]), 0.1, "pin-x1")]
    witness = PseudoMoments.from_distribution(
        base.basis, [[0.1, 0.2, -0.3]], [1.0]).values
    sys_ = ConstraintSystem(base.basis, base.psd_degree, eqs, base.inequalities,
                            0, witness, base.meta)
    rng = np.random.default_rng(2)
    vals = witness[:base.basis.size] + 0.2 * rng.standard_normal(base.basis.size)
    vals[0] = 1.0
    out, rep = dykstra_project(PseudoMoments(sys_.basis, vals), sys_)
    assert out.values[slot] == pytest.approx(0.1, abs=1e-9)


def test_dykstra_nonconverged_flag_and_best_iterate():
    sys_ = compile_tensor_pca(3, 2, 3.0)
    rng = np.random.default_rng(3)
    vals = sys_.witness[:sys_.basis.size] + 2.0 * rng.standard_normal(sys_.basis.size)
    vals[0] = 1.0
    m = PseudoMoments(sys_.basis, vals)
    out, rep = dykstra_project(m, sys_, max_iters=2, tol=1e-12)
    assert not rep.converged
    # equalities hold exactly because the affine projection runs last
    y = np.concatenate([out.values, rep.aux])
    eq, _, _ = sys_.residuals(y)
    assert eq <= 1e-9
    assert rep.eq_residual <= 1e-9


def test_dykstra_resume_continues_run():
    # a run truncated mid-flight, resumed from its own iterate and correction
    # terms, must land where the uninterrupted run lands
    sys_ = compile_unit_ball(6)
    rng = np.random.default_rng(4)
    vals = sys_.witness[:sys_.basis.size] + 0.5 * rng.standard_normal(sys_.basis.size)
    vals[0] = 1.0
    m = PseudoMoments(sys_.basis, vals)
    full, full_rep = dykstra_project(m, sys_)
    assert full_rep.converged
    part, part_rep = dykstra_project(m, sys_, max_iters=4)
    assert not part_rep.converged
    rest, rest_rep = dykstra_project(part, sys_, aux=part_rep.aux,
                                     dual=part_rep.dual)
    assert rest_rep.converged
    assert part_rep.sweeps + rest_rep.sweeps == full_rep.sweeps
    assert np.allclose(rest.values, full.values, atol=1e-12)


def test_system_json_shape():
    sys_ = compile_tensor_pca(2, 2, 4.0)
    doc = system_to_json(sys_)
    assert doc["n"] == 2 and doc["basis_degree"] == 4
    assert doc["basis_size"] == sys_.basis.size
    assert doc["meta"]["diag_bound"] == pytest.approx(0.25)
    labels = [row["label"] for row in doc["equalities"]]
    assert "unit-mass" in labels
    for row in doc["inequalities"]:
        assert set(row) == {"terms", "bound", "label"}
        for key in row["terms"]:
            assert key.startswith("aux:") or len(key.split(",")) == 2
