"""Parameterized Lyapunov-Schmidt reduction onto Ker B_lam*(0).

With Z spanning the kernel and W its orthogonal complement, the complement
equation W^T grad F(lam, Zz + Ww) = 0 is solved for w = psi(lam, z) and the
reduced functional is z -> F(lam, Zz + W psi(lam, z)).
"""
from __future__ import annotations

import itertools
import logging
import threading
from collections import OrderedDict

import numpy as np
from scipy import linalg

from bifurcata.errors import (
    DimensionMismatchError,
    NondegenerateError,
    OutsideValidityError,
    ReductionFailedError,
)
from bifurcata.models import (
    PencilFamily,
    PotentialFamily,
    PsiSolution,
    QuadraticForm,
    Settings,
    as_parameter,
)
from bifurcata.services.families import eval_hessian
from bifurcata.services.spectral import eigendecompose, inertia

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
CACHE_SIZE = 512
CACHE_DECIMALS = 12
WARM_START_WINDOW = 16


class ReducedModel:
    """Reduced functional of a potential family around a degenerate parameter"""

    def __init__(self, family: PotentialFamily, lam_star, kernel_basis, complement_basis,
                 null_tol: float, trust_radius: float, settings: Settings | None = None):
        """Initialize from a precomputed orthonormal splitting [Z W]"""
        self.family = family
        self.lam_star = as_parameter(lam_star, family.dim_param)
        self.kernel_basis = np.asarray(kernel_basis, dtype=float)
        self.complement_basis = np.asarray(complement_basis, dtype=float)
        self.null_tol = float(null_tol)
        self.trust_radius = float(trust_radius)
        self.settings = settings or Settings()
        self._cache = OrderedDict()
        self._lock = threading.Lock()

    @property
    def dim_kernel(self) -> int:
        return self.kernel_basis.shape[1]

    @property
    def dim_complement(self) -> int:
        return self.complement_basis.shape[1]

    def lift(self, z, w) -> np.ndarray:
        return self.kernel_basis @ z + self.complement_basis @ w

    def _coordinates(self, lam, z) -> tuple[np.ndarray, np.ndarray]:
        lam = as_parameter(lam, self.family.dim_param)
        z = np.atleast_1d(np.asarray(z, dtype=float)).ravel()
        if z.shape[0] != self.dim_kernel:
            raise DimensionMismatchError(f"z has length {z.shape[0]}, expected {self.dim_kernel}")
        return lam, z

    def _cache_key(self, lam, z) -> tuple:
        return tuple(np.round(lam, CACHE_DECIMALS)), tuple(np.round(z, CACHE_DECIMALS))

    def _lookup(self, lam, z) -> tuple[PsiSolution | None, np.ndarray | None]:
        """Return an exact cached solution, or the w of the nearest recent z at the same lam"""
        key = self._cache_key(lam, z)
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key], None
            best, best_distance = None, 0.1 * self.trust_radius
            recent = itertools.islice(reversed(self._cache.items()), WARM_START_WINDOW)
            for (lam_key, _), solution in recent:
                if lam_key != key[0]:
                    continue
                distance = float(np.max(np.abs(solution.z - z)))
                if distance <= best_distance:
                    best, best_distance = solution.w, distance
            return None, best

    def _store(self, lam, z, solution: PsiSolution):
        with self._lock:
            self._cache[self._cache_key(lam, z)] = solution
            while len(self._cache) > CACHE_SIZE:
                self._cache.popitem(last=False)

    def _residual(self, lam, z, w) -> tuple[np.ndarray, np.ndarray]:
        point = self.lift(z, w)
        return self.complement_basis.T @ self.family.gradient(lam, point), point

    def _complement_jacobian(self, lam, point) -> np.ndarray:
        hessian = self.family.hessian(lam, point)
        jacobian = self.complement_basis.T @ hessian @ self.complement_basis
        if np.linalg.cond(jacobian) > MAX_CONDITION:
            raise OutsideValidityError(
                f"complement Jacobian is singular at lambda={lam.tolist()} (left the reduction neighborhood)"
            )
        return jacobian

    def solve_psi(self, lam, z) -> PsiSolution:
        """
        Solve the complement equation for w = psi(lam, z) by damped Newton.

        Args:
            lam: parameter vector near lam*
            z: kernel coordinates

        Returns:
            PsiSolution: w with residual below tau_psi

        Raises:
            OutsideValidityError: If the complement Jacobian becomes singular
            ReductionFailedError: If Newton does not converge (carries the residual trace)
        """
        lam, z = self._coordinates(lam, z)

        if self.dim_complement == 0 or not np.any(z):
            # psi(lam, 0) = 0
            w = np.zeros(self.dim_complement)
            residual, point = self._residual(lam, z, w)
            return PsiSolution(z=z, lam=lam, w=w, lifted=point,
                               residual=float(np.linalg.norm(residual)), iterations=0)

        cached, warm_start = self._lookup(lam, z)
        if cached is not None:
            return cached

        settings = self.settings
        base_gradient = self.family.gradient(lam, self.kernel_basis @ z)
        tolerance = settings.psi_tol if settings.psi_tol is not None else (
            settings.psi_tol_rel * (1.0 + np.linalg.norm(base_gradient)))

        w = np.zeros(self.dim_complement) if warm_start is None else warm_start.copy()
        residual, point = self._residual(lam, z, w)
        norm = float(np.linalg.norm(residual))
        trace = [norm]
        iterations = 0
        while norm > tolerance:
            if iterations >= settings.newton_max_iter:
                logger.error(f"Complement Newton stalled at lambda={lam.tolist()}, z={z.tolist()}: {norm:.3e}")
                raise ReductionFailedError(
                    f"psi did not converge in {settings.newton_max_iter} iterations (residual {norm:.3e})",
                    trace=trace,
                )
            jacobian = self._complement_jacobian(lam, point)
            step = linalg.solve(jacobian, -residual, assume_a='sym')

            # Step halving until the residual decreases
            scale = 1.0
            for _ in range(settings.newton_max_halvings + 1):
                trial_residual, trial_point = self._residual(lam, z, w + scale * step)
                trial_norm = float(np.linalg.norm(trial_residual))
                if trial_norm < norm or trial_norm <= tolerance:
                    break
                scale *= 0.5
            else:
                raise ReductionFailedError(
                    f"step halving failed at residual {norm:.3e}", trace=trace + [trial_norm])

            w = w + scale * step
            residual, point, norm = trial_residual, trial_point, trial_norm
            trace.append(norm)
            iterations += 1

        solution = PsiSolution(z=z, lam=lam, w=w, lifted=point, residual=norm, iterations=iterations)
        self._store(lam, z, solution)
        return solution

    def value(self, lam, z) -> float:
        """Reduced functional L_lam(z) = F(lam, Zz + W psi(lam, z))"""
        solution = self.solve_psi(lam, z)
        return self.family.value(solution.lam, solution.lifted)

    def gradient(self, lam, z) -> np.ndarray:
        """Reduced gradient Z^T grad F(lam, Zz + W psi(lam, z))"""
        solution = self.solve_psi(lam, z)
        return self.kernel_basis.T @ self.family.gradient(solution.lam, solution.lifted)

    def _blocks(self, lam, point):
        hessian = eval_hessian(self.family, lam, point)
        Z, W = self.kernel_basis, self.complement_basis
        return Z.T @ hessian @ Z, Z.T @ hessian @ W, W.T @ hessian @ W

    def hessian(self, lam, z) -> np.ndarray:
        """Reduced Hessian at z as the Schur complement of B at the lifted point on the kernel"""
        solution = self.solve_psi(lam, z)
        kernel_block, mixed_block, complement_block = self._blocks(solution.lam, solution.lifted)
        if self.dim_complement == 0:
            return kernel_block
        if np.linalg.cond(complement_block) > MAX_CONDITION:
            raise OutsideValidityError("complement block W^T B W is singular")
        correction = mixed_block @ linalg.solve(complement_block, mixed_block.T, assume_a='sym')
        reduced = kernel_block - correction
        return 0.5 * (reduced + reduced.T)

    def hessian_at_zero(self, lam) -> np.ndarray:
        return self.hessian(lam, np.zeros(self.dim_kernel))

    def dpsi_at_zero(self, lam) -> np.ndarray:
        """D_z psi(lam, 0) = -(W^T B W)^(-1) W^T B Z with B = B_lam(0)"""
        lam = as_parameter(lam, self.family.dim_param)
        if self.dim_complement == 0:
            return np.zeros((0, self.dim_kernel))
        _, mixed_block, complement_block = self._blocks(lam, np.zeros(self.family.dim_state))
        if np.linalg.cond(complement_block) > MAX_CONDITION:
            raise OutsideValidityError("complement block W^T B W is singular")
        return -linalg.solve(complement_block, mixed_block.T, assume_a='sym')

    def __repr__(self):
        lam = ', '.join(f'{value:.6g}' for value in self.lam_star)
        return f'<ReducedModel {self.family.name} at ({lam}) d={self.dim_kernel}>'


def _trust_radius(family, lam_star, eigenvalues, null_tol, settings: Settings) -> float:
    """0.1 * smallest nonzero |eigenvalue| / Lipschitz estimate of B near 0, capped"""
    nonzero = np.abs(eigenvalues[np.abs(eigenvalues) > null_tol])
    if not nonzero.size:
        return settings.trust_radius_cap

    radius = settings.probe_radius
    reference = family.hessian(lam_star, np.zeros(family.dim_state))
    probes = list(np.eye(family.dim_state)) + list(-np.eye(family.dim_state))
    probes.append(np.ones(family.dim_state) / np.sqrt(family.dim_state))
    lipschitz = max(
        np.linalg.norm(family.hessian(lam_star, radius * probe) - reference, 2) / radius
        for probe in probes
    )
    if lipschitz <= 0.0:
        return settings.trust_radius_cap
    return float(min(settings.trust_radius_cap, 0.1 * float(np.min(nonzero)) / lipschitz))


def build_reduced_model(family: PotentialFamily, lam_star, null_tol=None, settings: Settings | None = None) -> ReducedModel:
    """
    Split R^n at lam* into Z = Ker B_lam*(0) and its complement W.

    Args:
        family: potential family
        lam_star: degenerate parameter vector
        null_tol: zero threshold (default scale-aware)
        settings: numerical settings

    Returns:
        ReducedModel: model ready for psi solves

    Raises:
        NondegenerateError: If B_lam*(0) has trivial kernel
    """
    settings = settings or Settings()
    lam_star = as_parameter(lam_star, family.dim_param)
    if null_tol is None:
        null_tol = settings.null_tol
    operator = eval_hessian(family, lam_star, np.zeros(family.dim_state))
    spectrum = eigendecompose(operator, null_tol)

    kernel = spectrum.kernel_basis()
    if kernel.shape[1] == 0:
        raise NondegenerateError(
            f"B at lambda={lam_star.tolist()} has trivial kernel; no bifurcation is possible there"
        )

    trust_radius = _trust_radius(family, lam_star, spectrum.eigenvalues, spectrum.null_tol, settings)
    logger.info(f"Reduced {family.name} at lambda={lam_star.tolist()}: d={kernel.shape[1]}, "
                f"trust radius {trust_radius:.4g}")
    return ReducedModel(
        family=family,
        lam_star=lam_star,
        kernel_basis=kernel,
        complement_basis=spectrum.complement_basis(),
        null_tol=spectrum.null_tol,
        trust_radius=trust_radius,
        settings=settings,
    )


def solve_psi(model: ReducedModel, lam, z) -> PsiSolution:
    return model.solve_psi(lam, z)


def reduced_value(model: ReducedModel, lam, z) -> float:
    return model.value(lam, z)


def reduced_gradient(model: ReducedModel, lam, z) -> np.ndarray:
    return model.gradient(lam, z)


def reduced_hessian_at_zero(model: ReducedModel, lam) -> np.ndarray:
    return model.hessian_at_zero(lam)


def dpsi_at_zero(model: ReducedModel, lam) -> np.ndarray:
    return model.dpsi_at_zero(lam)


def parameter_form_q(pencil: PencilFamily, model: ReducedModel, lam) -> QuadraticForm:
    """
    Quadratic form Q_lam(z1, z2) = sum_j (lam_j - lam*_j) (Bhat_j(0) z1, z2) on the kernel.

    When B_lam*(0) fails to commute with some Bhat_j(0), z1 is replaced by
    z1 + D_z psi(lam, 0) z1 and the result is symmetrized.

    Returns:
        QuadraticForm: matrix with index (negative count) and coindex (positive count)
    """
    lam = as_parameter(lam, pencil.dim_param)
    shift = lam - model.lam_star
    operator = pencil.operator_at(model.lam_star)
    commuting = all(pencil.commutes(operator, hat) for hat in pencil.hats)

    combined = np.zeros_like(pencil.base)
    for value, hat in zip(shift, pencil.hats):
        combined += value * hat

    Z = model.kernel_basis
    if commuting:
        matrix = Z.T @ combined @ Z
    else:
        corrected = Z + model.complement_basis @ model.dpsi_at_zero(lam)
        product = Z.T @ combined @ corrected
        matrix = 0.5 * (product + product.T)

    coindex, index = inertia(matrix, model.null_tol)
    return QuadraticForm(matrix=matrix, index=index, coindex=coindex, commuting=commuting)
