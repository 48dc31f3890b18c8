import numpy as np
import pytest

from bifurcata.errors import DimensionMismatchError, InvalidSpecError, NotSymmetricError
from bifurcata.models import PotentialFamily
from bifurcata.services.families import (
    builtin_family,
    check_gradient_consistency,
    eval_hessian,
    extract_pencil,
    make_bvp_family,
    make_polynomial_family,
)
from bifurcata.services.spectral import generalized_eigenvalues


def test_pitchfork_value_and_derivatives(pitchfork):
    # F = 1/2 (1 - lam) u1^2 + 1/2 u2^2 + 1/4 u1^4
    # -------------------------------------------------------------------------
    lam, u = 1.5, np.array([1.0, 2.0])

    assert pitchfork.value(lam, u) == pytest.approx(2.0)
    np.testing.assert_allclose(pitchfork.gradient(lam, u), [0.5, 2.0])
    np.testing.assert_allclose(pitchfork.hessian(lam, u), [[2.5, 0.0], [0.0, 1.0]])


def test_gradient_vanishes_at_zero(builtin, rng):
    for _ in range(10):
        lam = rng.uniform(-3.0, 3.0, builtin.dim_param)
        gradient = builtin.gradient(lam, np.zeros(builtin.dim_state))
        assert np.all(gradient == 0.0)


def test_gradient_consistency(builtin, rng):
    tol = 1e-6

    for _ in range(50):
        lam = rng.uniform(-2.0, 2.0, builtin.dim_param)
        u = rng.uniform(-1.0, 1.0, builtin.dim_state)

        report = check_gradient_consistency(builtin, lam, u, h=1e-5)

        assert report.gradient_error < tol
        assert report.hessian_error < tol


def test_hessian_is_symmetric(builtin, rng):
    tol = 1e-12

    for _ in range(100):
        lam = rng.uniform(-2.0, 2.0, builtin.dim_param)
        u = rng.uniform(-1.0, 1.0, builtin.dim_state)

        hessian = builtin.hessian(lam, u)

        err = np.max(np.abs(hessian - hessian.T)) / max(1.0, np.max(np.abs(hessian)))
        assert err < tol


def test_dict_terms_match_list_terms():
    listed = make_polynomial_family([((0,), (2,), 0.5), ((1,), (2,), -0.5), ((0,), (4,), 0.25)])
    mapped = make_polynomial_family({((0,), (2,)): 0.5, ((1,), (2,)): -0.5, ((0,), (4,)): 0.25})

    for lam, u in [(0.3, 0.7), (1.2, -0.4)]:
        assert listed.value(lam, u) == pytest.approx(mapped.value(lam, u))


def test_rejects_linear_term():
    with pytest.raises(InvalidSpecError, match='linear'):
        make_polynomial_family([((0,), (1, 0), 1.0), ((0,), (2, 0), 1.0)])


def test_rejects_constant_term():
    with pytest.raises(InvalidSpecError, match='constant'):
        make_polynomial_family([((0,), (0, 0), 1.0)])


def test_rejects_malformed_terms():
    with pytest.raises(InvalidSpecError):
        make_polynomial_family([((0,), (2, 0))])
    with pytest.raises(InvalidSpecError):
        make_polynomial_family([((0,), (2, -1), 1.0)])
    with pytest.raises(InvalidSpecError):
        make_polynomial_family([((0,), (2, 0), float('nan'))])
    with pytest.raises(InvalidSpecError):
        make_polynomial_family([((0,), (2, 0), 1.0), ((0,), (2,), 1.0)])


def test_bvp_rejects_bad_specs():
    with pytest.raises(InvalidSpecError):
        make_bvp_family(1, [0.0, 0.0, 0.5], [0.0, 0.0, 0.5])
    with pytest.raises(InvalidSpecError):
        make_bvp_family(4, [0.0, 0.0, -0.5], [0.0, 0.0, 0.5])
    with pytest.raises(InvalidSpecError, match='linear'):
        make_bvp_family(4, [0.0, 0.0, 0.5], [0.0, 1.0, 0.5])


def test_bvp_lowest_eigenvalue(bvp):
    # discrete Dirichlet Laplacian: 4 (m + 1)^2 sin^2(pi / (2 (m + 1)))
    # -------------------------------------------------------------------------
    m = bvp.dim_state
    expected = 4.0 * (m + 1) ** 2 * np.sin(np.pi / (2 * (m + 1))) ** 2

    geig = generalized_eigenvalues(extract_pencil(bvp))

    assert geig.eigenvalues[0] == pytest.approx(expected, rel=1e-12)
    assert len(geig.eigenvalues) == m


def test_bvp_hessian_at_zero_is_pencil(bvp):
    pencil = extract_pencil(bvp)

    for lam in (0.0, 5.0, 12.5):
        np.testing.assert_allclose(eval_hessian(bvp, lam, np.zeros(bvp.dim_state)),
                                   pencil.operator_at(lam), atol=1e-12)


def test_extract_pencil_polynomial(pitchfork):
    pencil = extract_pencil(pitchfork)

    np.testing.assert_allclose(pencil.base, np.eye(2))
    np.testing.assert_allclose(pencil.hats[0], np.diag([1.0, 0.0]))


def test_extract_pencil_two_parameter(two_parameter):
    pencil = extract_pencil(two_parameter)

    assert pencil.dim_param == 2
    np.testing.assert_allclose(pencil.hats[0], np.diag([1.0, 0.0]))
    np.testing.assert_allclose(pencil.hats[1], np.diag([0.0, 1.0]))


def test_extract_pencil_rejects_nonaffine():
    family = make_polynomial_family([((2,), (2, 0), 1.0), ((0,), (0, 2), 0.5)])

    assert family.pencil is None
    assert extract_pencil(family) is None


def test_extract_pencil_recovers_affine_callable(pitchfork):
    family = PotentialFamily(
        dim_state=2,
        dim_param=1,
        value_fn=pitchfork.value_fn,
        gradient_fn=pitchfork.gradient_fn,
        hessian_fn=pitchfork.hessian_fn,
        name='wrapped',
    )

    pencil = extract_pencil(family)

    assert pencil is not None
    np.testing.assert_allclose(pencil.hats[0], np.diag([1.0, 0.0]))


def test_unknown_builtin():
    with pytest.raises(InvalidSpecError):
        builtin_family('saddle_node')


def test_eval_hessian_rejects_asymmetric():
    family = PotentialFamily(
        dim_state=2,
        dim_param=1,
        value_fn=lambda lam, u: 0.0,
        gradient_fn=lambda lam, u: np.zeros(2),
        hessian_fn=lambda lam, u: np.array([[1.0, 2.0], [0.0, 1.0]]),
    )

    with pytest.raises(NotSymmetricError):
        eval_hessian(family, 0.0, np.zeros(2))


def test_dimension_mismatch(pitchfork):
    with pytest.raises(DimensionMismatchError):
        pitchfork.value(1.0, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatchError):
        pitchfork.gradient([1.0, 2.0], [1.0, 2.0])
