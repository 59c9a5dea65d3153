import numpy as np
import pytest
from conftest import draw_instance, flat

from switchocp.kkt_oracle import (RankDeficientConstraints, SingularKkt, assemble, index_map, kkt_dim,
                                  random_stage_data, reduced_hessian_eigenvalues, reduced_hessian_spectrum,
                                  residual_of, solve_dense)


def test_smallest_instance_layout():
    sd = random_stage_data(np.random.default_rng(0), 1, 1, 1, 0)
    k = assemble(sd)
    assert k.matrix.shape == (5, 5)
    ix = k.index
    assert [ix["lam", 0], ix["x", 0], ix["u", 0], ix["lam", 1], ix["x", 1]] == [slice(i, i + 1) for i in range(5)]
    M = k.matrix
    assert M[0, 1] == -1.0 and M[3, 4] == -1.0
    assert M[3, 1] == pytest.approx(sd.A[0, 0, 0]) and M[3, 2] == pytest.approx(sd.B[0, 0, 0])
    assert M[4, 4] == pytest.approx(sd.QxxN[0, 0])


@pytest.mark.parametrize("nx,nu", [(1, 1), (2, 1), (3, 2)])
def test_dimension_formula(nx, nu):
    sd = random_stage_data(np.random.default_rng(1), nx, nu, 3, 1)
    assert kkt_dim(3, nx, nu, 1) == 8 * nx + 3 * nu + (2 * nx + nu + 1)
    assert assemble(sd).dim == kkt_dim(3, nx, nu, 1)


def test_index_map_is_bijection():
    ix = index_map(7, 2, 1, (2, 5))
    cover = np.concatenate([np.arange(s.start, s.stop) for s in ix.values()])
    np.testing.assert_array_equal(np.sort(cover), np.arange(kkt_dim(7, 2, 1, 2)))


def test_matrix_symmetric():
    k = assemble(random_stage_data(np.random.default_rng(2), 2, 1, 10, 2))
    assert np.max(np.abs(k.matrix - k.matrix.T)) <= 1e-12 * np.max(np.abs(k.matrix))


def test_zero_rhs_zero_direction():
    k = assemble(random_stage_data(np.random.default_rng(3), 2, 1, 6, 1))
    k.rhs[:] = 0.0
    assert np.all(flat(solve_dense(k)) == 0.0)


def test_solve_quality(rng):
    sd, _ = draw_instance(rng, 2, 1, 10, 1)
    k = assemble(sd)
    d = solve_dense(k)
    assert np.linalg.norm(residual_of(k, d)) <= 1e-12 * np.linalg.norm(k.rhs) * 10


def test_singular_matrix_reported():
    sd = random_stage_data(np.random.default_rng(4), 2, 1, 4, 0)
    sd.Quu[:] = 0.0
    sd.Qxu[:] = 0.0
    sd.B[:] = 0.0
    with pytest.raises(SingularKkt):
        solve_dense(assemble(sd))
    with pytest.raises(RankDeficientConstraints):
        k = assemble(sd)
        k.matrix[k.index["lam", 1], :] = 0.0
        reduced_hessian_eigenvalues(k)


def test_convex_data_positive_spectrum():
    # no switch: SPD stage blocks make the reduced Hessian positive definite
    sd = random_stage_data(np.random.default_rng(5), 2, 1, 10, 0)
    assert reduced_hessian_spectrum(assemble(sd)) > 0


def test_reduced_hessian_dimension():
    sd = random_stage_data(np.random.default_rng(6), 2, 1, 5, 1)
    ev = reduced_hessian_eigenvalues(assemble(sd))
    # free directions: inputs plus one switching time (states are pinned by dynamics)
    assert ev.shape == (5 * 1 + 1 + 1,)
