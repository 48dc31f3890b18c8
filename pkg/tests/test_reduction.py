import numpy as np
import pytest

from bifurcata.errors import DimensionMismatchError, NondegenerateError
from bifurcata.services.detector import find_reduced_critical_points
from bifurcata.services.families import builtin_family, extract_pencil
from bifurcata.services.reduction import (
    build_reduced_model,
    dpsi_at_zero,
    parameter_form_q,
    reduced_gradient,
    reduced_hessian_at_zero,
    reduced_value,
    solve_psi,
)
from bifurcata.services.spectral import generalized_eigenvalues


def test_coupled_psi_is_exact(coupled):
    # F = 1/2 (1 - lam) u1^2 + 1/2 u2^2 + u1^2 u2 gives psi(lam, z) = -z^2
    # -------------------------------------------------------------------------
    tol = 1e-10

    model = build_reduced_model(coupled, 1.0)

    assert model.dim_kernel == 1
    for lam in np.linspace(0.9, 1.1, 20):
        for z in np.linspace(-0.1, 0.1, 20):
            solution = solve_psi(model, lam, [z])
            assert abs(solution.w[0] + z ** 2) < tol


def test_coupled_reduced_functional(coupled):
    tol = 1e-10

    model = build_reduced_model(coupled, 1.0)

    for lam, z in [(0.95, 0.08), (1.05, -0.06), (1.0, 0.1)]:
        expected = 0.5 * (1.0 - lam) * z ** 2 - 0.5 * z ** 4
        assert abs(reduced_value(model, lam, [z]) - expected) < tol
        expected_gradient = (1.0 - lam) * z - 2.0 * z ** 3
        assert abs(reduced_gradient(model, lam, [z])[0] - expected_gradient) < tol


def test_reduced_hessian_at_zero(coupled):
    tol = 1e-8

    model = build_reduced_model(coupled, 1.0)

    assert np.max(np.abs(reduced_hessian_at_zero(model, 1.0))) < tol
    np.testing.assert_allclose(reduced_hessian_at_zero(model, 0.8), [[0.2]], atol=1e-12)


@pytest.mark.parametrize('name, lam_star', [
    ('pitchfork', 1.0),
    ('transcritical', 1.0),
    ('coupled', 1.0),
    ('tilted', 0.5),
])
def test_reduced_gradient_matches_finite_difference(name, lam_star):
    tol = 1e-6
    h = 1e-6

    model = build_reduced_model(builtin_family(name), lam_star)

    for lam in (lam_star - 0.01, lam_star + 0.01):
        for z in (-0.05, 0.03):
            fd = (reduced_value(model, lam, [z + h]) - reduced_value(model, lam, [z - h])) / (2.0 * h)
            assert abs(reduced_gradient(model, lam, [z])[0] - fd) < tol


def test_bvp_reduction_at_first_eigenvalue(bvp):
    tol = 1e-6
    h = 1e-6

    lam_star = generalized_eigenvalues(extract_pencil(bvp)).eigenvalues[0]
    model = build_reduced_model(bvp, lam_star)

    assert model.dim_kernel == 1
    assert model.dim_complement == bvp.dim_state - 1
    lam, z = lam_star + 0.1, 0.05
    fd = (reduced_value(model, lam, [z + h]) - reduced_value(model, lam, [z - h])) / (2.0 * h)
    assert abs(reduced_gradient(model, lam, [z])[0] - fd) < tol


def test_tilted_dpsi():
    # Hessian [[1 - lam, 1], [1, 2]] is singular at lam = 1/2
    # -------------------------------------------------------------------------
    tol = 1e-10

    model = build_reduced_model(builtin_family('tilted'), 0.5)
    dpsi = dpsi_at_zero(model, 0.7)

    np.testing.assert_allclose(np.abs(model.kernel_basis[:, 0]), np.array([2.0, 1.0]) / np.sqrt(5.0), atol=1e-12)
    assert abs(abs(dpsi[0, 0]) - 0.08 / 2.46) < tol

    # psi is linear in z for a quadratic family
    h = 1e-3
    fd = solve_psi(model, 0.7, [h]).w / h
    np.testing.assert_allclose(fd, dpsi[:, 0], atol=1e-9)


def test_nondegenerate_point_rejected(pitchfork):
    with pytest.raises(NondegenerateError):
        build_reduced_model(pitchfork, 0.0)


def test_dimension_mismatch(pitchfork):
    model = build_reduced_model(pitchfork, 1.0)

    with pytest.raises(DimensionMismatchError):
        solve_psi(model, 1.0, [0.1, 0.2])


@pytest.mark.parametrize('name, lam_star, dim_kernel', [
    ('pitchfork', 1.0, 1),
    ('two_mode', 1.0, 1),
    ('two_mode', 2.0, 1),
    ('double_pitchfork', 1.0, 2),
    ('two_parameter', [1.0, 1.0], 2),
])
def test_kernel_dimensions(name, lam_star, dim_kernel):
    family = builtin_family(name)

    model = build_reduced_model(family, lam_star)

    assert model.dim_kernel == dim_kernel
    assert model.dim_kernel + model.dim_complement == family.dim_state
    assert model.trust_radius > 0


def test_psi_vanishes_at_zero(pitchfork):
    model = build_reduced_model(pitchfork, 1.0)

    solution = solve_psi(model, 1.3, [0.0])

    assert np.all(solution.w == 0.0)
    assert solution.iterations == 0


def test_parameter_form_two_parameter(two_parameter):
    model = build_reduced_model(two_parameter, [1.0, 1.0])
    pencil = extract_pencil(two_parameter)

    both = parameter_form_q(pencil, model, [2.0, 2.0])
    mixed = parameter_form_q(pencil, model, [2.0, 0.0])

    assert both.commuting
    assert (both.index, both.coindex) == (0, 2)
    assert both.definite
    assert (mixed.index, mixed.coindex) == (1, 1)
    assert not mixed.definite


def test_parameter_form_scaling_and_antisymmetry(two_parameter, rng):
    # Q is linear in lam - lam*
    # -------------------------------------------------------------------------
    tol = 1e-12

    model = build_reduced_model(two_parameter, [1.0, 1.0])
    pencil = extract_pencil(two_parameter)

    for _ in range(10):
        shift = rng.standard_normal(2)
        base = parameter_form_q(pencil, model, model.lam_star + shift).matrix
        scaled = parameter_form_q(pencil, model, model.lam_star + 2.5 * shift).matrix
        flipped = parameter_form_q(pencil, model, model.lam_star - shift)

        assert np.max(np.abs(scaled - 2.5 * base)) < tol
        assert np.max(np.abs(flipped.matrix + base)) < tol
        form = parameter_form_q(pencil, model, model.lam_star + shift)
        assert (flipped.index, flipped.coindex) == (form.coindex, form.index)


def test_parameter_form_non_commuting():
    family = builtin_family('tilted')
    model = build_reduced_model(family, 0.5)

    form = parameter_form_q(extract_pencil(family), model, 1.0)

    # (2/sqrt5) * 0.5 * (2 + 1/12)/sqrt5 = 5/12
    assert not form.commuting
    assert form.matrix[0, 0] == pytest.approx(5.0 / 12.0)
    assert (form.index, form.coindex) == (0, 1)


@pytest.mark.parametrize('name, lam, rho', [
    ('pitchfork', 1.25, 1.0),
    ('coupled', 0.9, 0.5),
])
def test_reduced_critical_points_are_critical(name, lam, rho, settings):
    # zero reduced gradient means a critical point of the full potential
    # -------------------------------------------------------------------------
    family = builtin_family(name)
    model = build_reduced_model(family, 1.0, settings=settings)

    points = find_reduced_critical_points(model, lam, rho, 5, settings)

    assert len(points) == 3
    for z in points:
        solution = solve_psi(model, lam, z)
        tau = settings.psi_tol_rel * (1.0 + np.linalg.norm(family.gradient(lam, model.kernel_basis @ z)))
        assert np.linalg.norm(family.gradient(lam, solution.lifted)) <= 10.0 * tau


def test_coupled_dpsi_vanishes(coupled):
    # B_lam(0) is diagonal, so there is no quadratic coupling at u = 0
    # -------------------------------------------------------------------------
    model = build_reduced_model(coupled, 1.0)

    for lam in (0.8, 1.0, 1.3):
        assert np.max(np.abs(dpsi_at_zero(model, lam))) < 1e-14
