"""Parameterized potential families with exact derivatives.

Polynomial families are the canonical format: every term is a monomial
c * prod(lam_j ** a_j) * prod(u_i ** b_i), differentiated exactly by shifting
exponents. The 1-D Dirichlet model assembles its derivatives by the chain rule
on the difference quotients.
"""
from __future__ import annotations

import logging
from numbers import Integral, Real

import numpy as np
from numpy.polynomial import Polynomial

from bifurcata.errors import InvalidSpecError
from bifurcata.models import (
    GradientCheckReport,
    PencilFamily,
    PotentialFamily,
    as_parameter,
    as_state,
    as_symmetric,
)

logger = logging.getLogger(__name__)


class MonomialTable:
    """Sum of monomials stored as coefficient and exponent arrays"""

    def __init__(self, coeffs, lam_powers, u_powers, dim_param: int, dim_state: int):
        self.coeffs = np.asarray(coeffs, dtype=float).ravel()
        self.lam_powers = np.asarray(lam_powers, dtype=int).reshape(len(self.coeffs), dim_param)
        self.u_powers = np.asarray(u_powers, dtype=int).reshape(len(self.coeffs), dim_state)
        self.dim_param = dim_param
        self.dim_state = dim_state

    def __len__(self):
        return len(self.coeffs)

    def evaluate(self, lam: np.ndarray, u: np.ndarray) -> float:
        if not len(self):
            return 0.0
        lam_part = np.prod(lam ** self.lam_powers, axis=1)
        u_part = np.prod(u ** self.u_powers, axis=1)
        return float(np.dot(self.coeffs, lam_part * u_part))

    def derivative(self, i: int) -> MonomialTable:
        """Exact partial derivative with respect to u_i"""
        mask = self.u_powers[:, i] > 0
        u_powers = self.u_powers[mask].copy()
        coeffs = self.coeffs[mask] * u_powers[:, i]
        u_powers[:, i] -= 1
        return MonomialTable(coeffs, self.lam_powers[mask], u_powers, self.dim_param, self.dim_state)


def _normalize_terms(terms) -> list:
    if isinstance(terms, dict):
        terms = [(lam_powers, u_powers, coeff) for (lam_powers, u_powers), coeff in terms.items()]
    normalized = []
    for position, term in enumerate(terms):
        try:
            lam_powers, u_powers, coeff = term
        except (TypeError, ValueError):
            raise InvalidSpecError(f"term {position} must be (lambda_powers, u_powers, coefficient)")
        lam_powers = tuple(lam_powers) if np.ndim(lam_powers) else (lam_powers,)
        u_powers = tuple(u_powers) if np.ndim(u_powers) else (u_powers,)
        for power in lam_powers + u_powers:
            if isinstance(power, bool) or not isinstance(power, Integral) or power < 0:
                raise InvalidSpecError(f"term {position} has invalid exponent {power!r}")
        if isinstance(coeff, bool) or not isinstance(coeff, Real) or not np.isfinite(coeff):
            raise InvalidSpecError(f"term {position} has invalid coefficient {coeff!r}")
        normalized.append((tuple(int(p) for p in lam_powers), tuple(int(p) for p in u_powers), float(coeff)))
    return normalized


def make_polynomial_family(terms, dim_state=None, dim_param=None, name='polynomial', description=''):
    """
    Build a family from a polynomial coefficient table.

    Args:
        terms: list of (lambda_powers, u_powers, coefficient) triples, or a dict
            mapping (lambda_powers, u_powers) to coefficients
        dim_state: state dimension n (inferred from the terms when omitted)
        dim_param: parameter dimension p (inferred from the terms when omitted)
        name: family name used in reports
        description: free text

    Returns:
        PotentialFamily: family with exact gradient and Hessian

    Raises:
        InvalidSpecError: If a term is constant or linear in u, or the table is malformed
    """
    terms = _normalize_terms(terms)
    if not terms:
        raise InvalidSpecError("polynomial family needs at least one term")

    dim_param = dim_param or len(terms[0][0])
    dim_state = dim_state or len(terms[0][1])
    if dim_param < 1 or dim_state < 1:
        raise InvalidSpecError("polynomial family needs at least one parameter and one state variable")
    for position, (lam_powers, u_powers, _) in enumerate(terms):
        if len(lam_powers) != dim_param or len(u_powers) != dim_state:
            raise InvalidSpecError(
                f"term {position} has {len(lam_powers)} lambda and {len(u_powers)} u exponents, "
                f"expected {dim_param} and {dim_state}"
            )
        if sum(u_powers) < 2:
            raise InvalidSpecError(
                f"term {position} is {'constant' if sum(u_powers) == 0 else 'linear'} in u; "
                "the trivial solution u = 0 requires total u-degree >= 2"
            )

    table = MonomialTable(
        [coeff for _, _, coeff in terms],
        [lam_powers for lam_powers, _, _ in terms],
        [u_powers for _, u_powers, _ in terms],
        dim_param,
        dim_state,
    )
    gradient_tables = [table.derivative(i) for i in range(dim_state)]
    hessian_tables = {
        (i, j): gradient_tables[i].derivative(j)
        for i in range(dim_state)
        for j in range(i, dim_state)
    }

    def value_fn(lam, u):
        return table.evaluate(lam, u)

    def gradient_fn(lam, u):
        return np.array([entry.evaluate(lam, u) for entry in gradient_tables])

    def hessian_fn(lam, u):
        hessian = np.zeros((dim_state, dim_state))
        for (i, j), entry in hessian_tables.items():
            hessian[i, j] = hessian[j, i] = entry.evaluate(lam, u)
        return hessian

    family = PotentialFamily(
        dim_state=dim_state,
        dim_param=dim_param,
        value_fn=value_fn,
        gradient_fn=gradient_fn,
        hessian_fn=hessian_fn,
        name=name,
        description=description,
    )

    # B_lam(0) only sees the quadratic terms; affine in lam means an exact pencil
    quadratic = [lam_powers for lam_powers, u_powers, _ in terms if sum(u_powers) == 2]
    if all(sum(lam_powers) <= 1 for lam_powers in quadratic):
        family = _with_pencil(family, _affine_pencil(family))
    return family


def _affine_pencil(family: PotentialFamily) -> PencilFamily:
    zero_state = np.zeros(family.dim_state)
    base = family.hessian(np.zeros(family.dim_param), zero_state)
    hats = []
    for j in range(family.dim_param):
        unit = np.zeros(family.dim_param)
        unit[j] = 1.0
        hats.append(base - family.hessian(unit, zero_state))
    return PencilFamily(base=base, hats=tuple(hats))


def _with_pencil(family: PotentialFamily, pencil) -> PotentialFamily:
    return PotentialFamily(
        dim_state=family.dim_state,
        dim_param=family.dim_param,
        value_fn=family.value_fn,
        gradient_fn=family.gradient_fn,
        hessian_fn=family.hessian_fn,
        name=family.name,
        description=family.description,
        pencil=pencil,
    )


def _density(coeffs, label: str) -> Polynomial:
    try:
        values = [float(c) for c in coeffs]
    except (TypeError, ValueError):
        raise InvalidSpecError(f"{label} coefficients must be numbers")
    if not values or not all(np.isfinite(values)):
        raise InvalidSpecError(f"{label} coefficients must be finite and non-empty")
    if len(values) > 1 and values[1] != 0.0:
        raise InvalidSpecError(f"{label} has a linear term; the trivial solution requires {label}'(0) = 0")
    return Polynomial(values)


def make_bvp_family(m, w_coeffs, g_coeffs, name='bvp', description=''):
    """
    Build the discretized 1-D Dirichlet model
    F_lam(u) = sum_k h * W((u_{k+1} - u_k) / h) - lam * sum_i h * G(u_i), u_0 = u_{m+1} = 0.

    Args:
        m: number of interior grid points (h = 1 / (m + 1))
        w_coeffs: power-series coefficients of the gradient density W
        g_coeffs: power-series coefficients of the forcing density G

    Returns:
        PotentialFamily: m-dimensional family with a scalar parameter

    Raises:
        InvalidSpecError: If m < 2, a density has a linear term, or W''(0) <= 0
    """
    if isinstance(m, bool) or not isinstance(m, Integral) or m < 2:
        raise InvalidSpecError(f"grid size m must be an integer >= 2, got {m!r}")
    w_density = _density(w_coeffs, 'W')
    g_density = _density(g_coeffs, 'G')
    if w_density.deriv(2)(0.0) <= 0.0:
        raise InvalidSpecError("W''(0) must be positive")

    m = int(m)
    h = 1.0 / (m + 1)
    dw, d2w = w_density.deriv(1), w_density.deriv(2)
    dg, d2g = g_density.deriv(1), g_density.deriv(2)

    # Forward differences including both Dirichlet ends: (m+1) x m
    difference = np.zeros((m + 1, m))
    difference[np.arange(m), np.arange(m)] = 1.0
    difference[np.arange(1, m + 1), np.arange(m)] = -1.0

    def value_fn(lam, u):
        slopes = difference @ u / h
        return float(h * np.sum(w_density(slopes)) - lam[0] * h * np.sum(g_density(u)))

    def gradient_fn(lam, u):
        slopes = difference @ u / h
        return difference.T @ dw(slopes) - lam[0] * h * dg(u)

    def hessian_fn(lam, u):
        slopes = difference @ u / h
        hessian = (difference.T * d2w(slopes)) @ difference / h - lam[0] * h * np.diag(d2g(u))
        return 0.5 * (hessian + hessian.T)

    pencil = PencilFamily(
        base=d2w(0.0) / h * (difference.T @ difference),
        hats=(h * d2g(0.0) * np.eye(m),),
    )
    logger.debug(f"Assembled Dirichlet model with m={m}, h={h:.6g}")
    return PotentialFamily(
        dim_state=m,
        dim_param=1,
        value_fn=value_fn,
        gradient_fn=gradient_fn,
        hessian_fn=hessian_fn,
        name=name,
        description=description or f"1-D Dirichlet model on {m} interior points",
        pencil=pencil,
    )


def eval_hessian(family: PotentialFamily, lam, u) -> np.ndarray:
    """
    Evaluate B_lam(u) and verify it is symmetric.

    Raises:
        DimensionMismatchError: If lam or u has the wrong length
        NotSymmetricError: If the returned Hessian is not symmetric
    """
    return as_symmetric(family.hessian(lam, u), f'Hessian of {family.name}')


def check_gradient_consistency(family: PotentialFamily, lam, u, h=1e-5) -> GradientCheckReport:
    """
    Compare analytic derivatives against central differences.

    Errors are max absolute deviations divided by max(1, max |analytic|).

    Returns:
        GradientCheckReport: gradient-vs-value and Hessian-vs-gradient errors
    """
    lam = as_parameter(lam, family.dim_param)
    u = as_state(u, family.dim_state)
    gradient = family.gradient(lam, u)
    hessian = family.hessian(lam, u)

    fd_gradient = np.zeros_like(gradient)
    fd_hessian = np.zeros_like(hessian)
    for i in range(family.dim_state):
        step = np.zeros_like(u)
        step[i] = h
        fd_gradient[i] = (family.value(lam, u + step) - family.value(lam, u - step)) / (2 * h)
        fd_hessian[:, i] = (family.gradient(lam, u + step) - family.gradient(lam, u - step)) / (2 * h)

    gradient_error = np.max(np.abs(fd_gradient - gradient)) / max(1.0, np.max(np.abs(gradient)))
    hessian_error = np.max(np.abs(fd_hessian - hessian)) / max(1.0, np.max(np.abs(hessian)))
    return GradientCheckReport(gradient_error=float(gradient_error), hessian_error=float(hessian_error))


def extract_pencil(family: PotentialFamily):
    """
    Return the pencil B(0), Bhat_j(0) of a family.

    Families that do not carry one are probed: if B_lam(0) is affine in lam the
    pencil is recovered, otherwise None is returned.
    """
    if family.pencil is not None:
        return family.pencil

    pencil = _affine_pencil(family)
    zero_state = np.zeros(family.dim_state)
    scale = 1.0 + np.linalg.norm(pencil.base)
    for probe in (0.5, -1.3):
        lam = probe * np.linspace(1.0, 2.0, family.dim_param)
        deviation = np.linalg.norm(family.hessian(lam, zero_state) - pencil.operator_at(lam))
        if deviation > 1e-10 * scale:
            logger.debug(f"{family.name}: B_lam(0) is not affine in lam (deviation {deviation:.3e})")
            return None
    return pencil


def _pitchfork():
    return make_polynomial_family(
        [((0,), (2, 0), 0.5), ((1,), (2, 0), -0.5), ((0,), (0, 2), 0.5), ((0,), (4, 0), 0.25)],
        name='pitchfork',
        description='1/2 (1 - lam) u1^2 + 1/2 u2^2 + 1/4 u1^4',
    )


def _mirror_pitchfork():
    return make_polynomial_family(
        [((0,), (2, 0), -0.5), ((1,), (2, 0), 0.5), ((0,), (0, 2), 0.5), ((0,), (4, 0), 0.25)],
        name='mirror_pitchfork',
        description='1/2 (lam - 1) u1^2 + 1/2 u2^2 + 1/4 u1^4',
    )


def _transcritical():
    return make_polynomial_family(
        [((0,), (2, 0), 0.5), ((1,), (2, 0), -0.5), ((0,), (0, 2), 0.5), ((0,), (3, 0), 1.0 / 3.0)],
        name='transcritical',
        description='1/2 (1 - lam) u1^2 + 1/2 u2^2 + 1/3 u1^3',
    )


def _coupled():
    return make_polynomial_family(
        [((0,), (2, 0), 0.5), ((1,), (2, 0), -0.5), ((0,), (0, 2), 0.5), ((0,), (2, 1), 1.0)],
        name='coupled',
        description='1/2 (1 - lam) u1^2 + 1/2 u2^2 + u1^2 u2',
    )


def _quadratic():
    return make_polynomial_family(
        [((0,), (2, 0), 0.5), ((1,), (2, 0), -0.5), ((0,), (0, 2), 0.5)],
        name='quadratic',
        description='1/2 (1 - lam) u1^2 + 1/2 u2^2',
    )


def _tilted():
    return make_polynomial_family(
        [((0,), (2, 0), 0.5), ((1,), (2, 0), -0.5), ((0,), (1, 1), 1.0), ((0,), (0, 2), 1.0)],
        name='tilted',
        description='Hessian [[1 - lam, 1], [1, 2]]',
    )


def _two_mode():
    return make_polynomial_family(
        [
            ((0,), (2, 0), 0.5), ((0,), (0, 2), 1.0),
            ((1,), (2, 0), -0.5), ((1,), (0, 2), -0.5),
            ((0,), (4, 0), 0.25), ((0,), (0, 4), 0.25),
        ],
        name='two_mode',
        description='1/2 u^T diag(1, 2) u - lam/2 |u|^2 + 1/4 (u1^4 + u2^4)',
    )


def _double_pitchfork():
    return make_polynomial_family(
        [
            ((0,), (2, 0, 0), 0.5), ((1,), (2, 0, 0), -0.5),
            ((0,), (0, 2, 0), 0.5), ((1,), (0, 2, 0), -0.5),
            ((0,), (4, 0, 0), 0.25), ((0,), (0, 4, 0), 0.25),
            ((0,), (0, 0, 2), 0.5),
        ],
        name='double_pitchfork',
        description='two decoupled pitchforks sharing lam* = 1 plus a stable mode',
    )


def _two_parameter():
    return make_polynomial_family(
        [
            ((0, 0), (2, 0), 0.5), ((1, 0), (2, 0), -0.5),
            ((0, 0), (0, 2), 0.5), ((0, 1), (0, 2), -0.5),
            ((0, 0), (4, 0), 0.25), ((0, 0), (0, 4), 0.25),
        ],
        name='two_parameter',
        description='1/2 |u|^2 - lam1/2 u1^2 - lam2/2 u2^2 + 1/4 (u1^4 + u2^4)',
    )


def _bvp():
    return make_bvp_family(8, [0.0, 0.0, 0.5], [0.0, 0.0, 0.5, 0.0, -0.25], name='bvp')


BUILTIN_FAMILIES = {
    'pitchfork': _pitchfork,
    'mirror_pitchfork': _mirror_pitchfork,
    'transcritical': _transcritical,
    'coupled': _coupled,
    'quadratic': _quadratic,
    'tilted': _tilted,
    'two_mode': _two_mode,
    'double_pitchfork': _double_pitchfork,
    'two_parameter': _two_parameter,
    'bvp': _bvp,
}


def builtin_family(name: str) -> PotentialFamily:
    """
    Look up a builtin test problem by name.

    Raises:
        InvalidSpecError: If no builtin has that name
    """
    try:
        factory = BUILTIN_FAMILIES[name]
    except KeyError:
        raise InvalidSpecError(f"unknown builtin family '{name}'; known: {', '.join(sorted(BUILTIN_FAMILIES))}")
    return factory()
