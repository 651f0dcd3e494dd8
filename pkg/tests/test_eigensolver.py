import json

import numpy as np
import pytest

from polystab.discretization import (DiscreteForm, make_grid, mass_from_values,
                                     weighted_stiffness)
from polystab.eigensolver import (MassNotPD, constraint_basis,
                                  m_orthonormality_error, shooting_oracle,
                                  solve_gsep)


def _form(K, M, constraint=None):
    n = K.shape[0]
    return DiscreteForm(K=K, M=M, grid=make_grid(1.0, n - 1),
                        inner_product="test", dofs=np.arange(n),
                        constraint=constraint)


def _laplacian(N):
    g = make_grid(np.pi, N, p=1)
    pts, _ = g.quadrature()
    K = weighted_stiffness(g, lambda r: np.ones_like(r))[1:-1, 1:-1]
    M = mass_from_values(g, np.ones_like(pts))[1:-1, 1:-1]
    return _form(K, M)


def test_identity_pencil():
    ms = solve_gsep(_form(np.eye(5) * 3.0, np.eye(5) * 3.0))
    assert np.allclose(ms.lambdas, 1.0)
    assert np.all(ms.residuals < 1e-15)


def test_laplacian_second_order():
    errs = []
    for N in (40, 80, 160):
        lam = solve_gsep(_laplacian(N), 3).lambdas
        errs.append(np.abs(lam - np.array([1, 4, 9])))
    errs = np.array(errs)
    assert np.all(errs[-1] / np.array([1, 4, 9]) < 1e-3)
    ratios = errs[:-1] / errs[1:]
    assert np.all(np.abs(ratios - 4.0) < 0.1)


def test_vectors_m_orthonormal():
    form = _laplacian(30)
    ms = solve_gsep(form)
    assert m_orthonormality_error(form, ms) < 1e-12
    r = form.K @ ms.vectors - form.M @ ms.vectors * ms.lambdas
    assert np.max(np.abs(r)) < 1e-10 * np.max(ms.lambdas)


def test_k_subset_and_zero():
    form = _laplacian(30)
    assert len(solve_gsep(form, 4)) == 4
    assert len(solve_gsep(form, 1000)) == 29
    empty = solve_gsep(form, 0)
    assert len(empty) == 0 and empty.vectors.shape == (29, 0)


def test_mass_not_pd():
    with pytest.raises(MassNotPD):
        solve_gsep(_form(np.eye(3), np.diag([1.0, 0.0, 1.0])))


def test_constraint_basis_orthonormal():
    c = np.array([1.0, 2.0, 3.0])
    Z = constraint_basis(3, c)
    assert Z.shape == (3, 2)
    assert np.allclose(Z.T @ Z, np.eye(2)) and np.allclose(c @ Z, 0)
    assert np.array_equal(constraint_basis(2, None), np.eye(2))


def test_constraint_removes_kernel():
    # K has the constant as null vector, M = I; zero-sum constraint removes it
    n = 6
    K = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    K[0, 0] = K[-1, -1] = 1.0
    free = solve_gsep(_form(K, np.eye(n)))
    assert free.kernel[0] and abs(free.lambdas[0]) < 1e-14
    con = solve_gsep(_form(K, np.eye(n), constraint=np.ones(n)))
    assert len(con) == n - 1 and con.lambdas[0] > 0.1
    assert np.allclose(np.ones(n) @ con.vectors, 0)


def test_modeset_json():
    ms = solve_gsep(_form(np.diag([1.0, 2.0]), np.eye(2)))
    doc = json.loads(ms.dumps(with_vectors=True))
    assert doc["lambdas"] == [1.0, 2.0] and len(doc["vectors"]) == 2


def test_zero_mask():
    ms = solve_gsep(_form(np.diag([1e-9, 1.0, 2.0]), np.eye(3)))
    assert ms.zero_mask().tolist() == [True, False, False]


def test_shooting_empty_window(eq53):
    assert shooting_oracle(eq53, "A", 1, (3.0, 15.0)) == []


def test_shooting_rejects_bad_input(eq53):
    with pytest.raises(ValueError):
        shooting_oracle(eq53, "A", 1, (2.0, 1.0))
    with pytest.raises(ValueError):
        shooting_oracle(eq53, "Nl", 1, (0.0, 1.0))
    with pytest.raises(ValueError):
        shooting_oracle(eq53, "A", 1, (0.0, np.inf))


def test_degree_zero_eigenvectors_have_zero_mean(eq53):
    from polystab import operators as op
    form = op.assemble_Nl(eq53, make_grid(eq53.R, 100), 0)
    ms = solve_gsep(form, 5)
    means = form.constraint @ ms.vectors
    assert np.max(np.abs(means)) <= 1e-12 * np.abs(form.constraint).sum()


def test_operator_modes_orthonormal_and_accurate(eq53):
    from polystab import operators as op
    grid = make_grid(eq53.R, 200)
    for form in (op.assemble_Lss(eq53, grid), op.assemble_Nl(eq53, grid, 2),
                 op.assemble_A(eq53, grid)):
        ms = solve_gsep(form, 10)
        assert np.all(np.diff(ms.lambdas) >= 0)
        assert np.max(ms.residuals) <= 1e-10
        assert m_orthonormality_error(form, ms) <= 1e-10
