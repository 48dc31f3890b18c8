from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from bifurcata.errors import DimensionMismatchError, NotSymmetricError

SYMMETRY_TOL = 1e-12


def as_symmetric(entries, name='operator') -> np.ndarray:
    """
    Coerce entries to a dense symmetric matrix.

    Args:
        entries: square array-like
        name: label used in error messages

    Returns:
        np.ndarray: float copy of the matrix

    Raises:
        DimensionMismatchError: If the matrix is not square
        NotSymmetricError: If max |S_ij - S_ji| exceeds 1e-12 * (1 + max|S|)
    """
    matrix = np.array(entries, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {matrix.shape}")
    scale = 1.0 + (np.max(np.abs(matrix)) if matrix.size else 0.0)
    asymmetry = np.max(np.abs(matrix - matrix.T)) if matrix.size else 0.0
    if asymmetry > SYMMETRY_TOL * scale:
        raise NotSymmetricError(f"{name} is not symmetric (asymmetry {asymmetry:.3e})")
    return matrix


def as_parameter(lam, dim_param: int) -> np.ndarray:
    """Coerce a scalar or sequence to a parameter vector of length dim_param"""
    vector = np.atleast_1d(np.asarray(lam, dtype=float)).ravel()
    if vector.shape[0] != dim_param:
        raise DimensionMismatchError(f"parameter has length {vector.shape[0]}, expected {dim_param}")
    return vector


def as_state(u, dim_state: int, name='state') -> np.ndarray:
    vector = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    if vector.shape[0] != dim_state:
        raise DimensionMismatchError(f"{name} has length {vector.shape[0]}, expected {dim_state}")
    return vector


def _floats(values) -> list:
    return [float(v) for v in np.ravel(values)]


def _matrix(values) -> list:
    return [_floats(row) for row in np.atleast_2d(values)] if np.size(values) else []


@dataclass(frozen=True, eq=False)
class PencilFamily:
    """Linear pencil B(0) - sum_j lam_j * Bhat_j(0)"""
    base: np.ndarray
    hats: tuple

    def __post_init__(self):
        base = as_symmetric(self.base, 'pencil base')
        hats = tuple(as_symmetric(hat, f'pencil hat {j + 1}') for j, hat in enumerate(self.hats))
        if not hats:
            raise DimensionMismatchError("pencil needs at least one hat operator")
        for hat in hats:
            if hat.shape != base.shape:
                raise DimensionMismatchError(f"hat shape {hat.shape} differs from base shape {base.shape}")
        object.__setattr__(self, 'base', base)
        object.__setattr__(self, 'hats', hats)

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    @property
    def dim_param(self) -> int:
        return len(self.hats)

    def operator_at(self, lam) -> np.ndarray:
        """Return base - sum_j lam_j * hat_j"""
        lam = as_parameter(lam, self.dim_param)
        result = self.base.copy()
        for value, hat in zip(lam, self.hats):
            result -= value * hat
        return result

    def commutes(self, operator: np.ndarray, hat: np.ndarray) -> bool:
        """Check operator @ hat == hat @ operator within a relative tolerance"""
        scale = (1.0 + np.linalg.norm(operator)) * (1.0 + np.linalg.norm(hat))
        return bool(np.linalg.norm(operator @ hat - hat @ operator) <= 1e-10 * scale)

    def to_dict(self):
        return {
            'base': _matrix(self.base),
            'hats': [_matrix(hat) for hat in self.hats],
        }

    def __repr__(self):
        return f'<PencilFamily n={self.dim} p={self.dim_param}>'


@dataclass(frozen=True, eq=False)
class PotentialFamily:
    """Parameterized potential F(lam, u) with analytic gradient and Hessian"""
    dim_state: int
    dim_param: int
    value_fn: Callable
    gradient_fn: Callable
    hessian_fn: Callable
    name: str = 'unnamed'
    description: str = ''
    pencil: PencilFamily | None = None

    def value(self, lam, u) -> float:
        lam = as_parameter(lam, self.dim_param)
        u = as_state(u, self.dim_state)
        return float(self.value_fn(lam, u))

    def gradient(self, lam, u) -> np.ndarray:
        lam = as_parameter(lam, self.dim_param)
        u = as_state(u, self.dim_state)
        return np.asarray(self.gradient_fn(lam, u), dtype=float)

    def hessian(self, lam, u) -> np.ndarray:
        lam = as_parameter(lam, self.dim_param)
        u = as_state(u, self.dim_state)
        return np.asarray(self.hessian_fn(lam, u), dtype=float)

    def to_dict(self):
        return {
            'name': self.name,
            'description': self.description,
            'dim_state': self.dim_state,
            'dim_param': self.dim_param,
        }

    def __repr__(self):
        return f'<PotentialFamily {self.name} (n={self.dim_state}, p={self.dim_param})>'


@dataclass(frozen=True)
class GradientCheckReport:
    """Finite-difference consistency of a family's derivatives"""
    gradient_error: float
    hessian_error: float

    def to_dict(self):
        return {'gradient_error': self.gradient_error, 'hessian_error': self.hessian_error}


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Ascending eigensystem of a symmetric operator"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    null_tol: float

    def morse(self) -> MorseData:
        mu = int(np.sum(self.eigenvalues < -self.null_tol))
        nu = int(np.sum(np.abs(self.eigenvalues) <= self.null_tol))
        return MorseData(mu=mu, nu=nu, pi=len(self.eigenvalues) - mu - nu)

    def kernel_basis(self) -> np.ndarray:
        return self.eigenvectors[:, np.abs(self.eigenvalues) <= self.null_tol]

    def complement_basis(self) -> np.ndarray:
        return self.eigenvectors[:, np.abs(self.eigenvalues) > self.null_tol]


@dataclass(frozen=True)
class MorseData:
    """Morse index, nullity and positive count"""
    mu: int
    nu: int
    pi: int

    @property
    def dim(self) -> int:
        return self.mu + self.nu + self.pi

    def to_dict(self):
        return {'mu': self.mu, 'nu': self.nu, 'pi': self.pi}


@dataclass(frozen=True, eq=False)
class GeneralizedEigenpair:
    """Eigenvalue lam_k with its eigenspace H_k and the signature of B(0) on H_k"""
    value: float
    basis: np.ndarray
    dim_plus: int
    dim_minus: int

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def to_dict(self):
        return {
            'value': self.value,
            'dim': self.dim,
            'dim_plus': self.dim_plus,
            'dim_minus': self.dim_minus,
        }


@dataclass(frozen=True, eq=False)
class GeneralizedEigenData:
    """Finite generalized eigenvalues of a scalar pencil plus H_0 = Ker(hat)"""
    ROUTE_SPD = 'spd'
    ROUTE_COMMUTING = 'commuting'

    pairs: tuple
    kernel_of_hat: np.ndarray
    kernel_plus: int
    kernel_minus: int
    route: str
    null_tol: float

    @property
    def eigenvalues(self) -> list:
        return [pair.value for pair in self.pairs]

    @property
    def signature_per_space(self) -> list:
        return [(pair.dim_plus, pair.dim_minus) for pair in self.pairs]

    def to_dict(self):
        return {
            'route': self.route,
            'pairs': [pair.to_dict() for pair in self.pairs],
            'dim_kernel_of_hat': int(self.kernel_of_hat.shape[1]),
        }


@dataclass(frozen=True)
class CrossingSample:
    """Tracked eigenvalues of B_lam(0) near zero at one sampled parameter"""
    lam: float
    eig0: tuple
    r: int
    kernel_trivial: bool
    distance: float

    def to_dict(self):
        return {'lambda': self.lam, 'eig0': list(self.eig0), 'r': self.r}


@dataclass(frozen=True)
class CrossingReport:
    """Crossing numbers r+/r- of the 0-group at a candidate parameter"""
    lam_star: float
    samples: tuple
    r_plus: int
    r_minus: int
    parity: int
    nullity: int
    delta_prime_plus: float
    delta_prime_minus: float
    eps_track: float
    null_tol: float
    conditions: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'lambda_star': self.lam_star,
            'r_plus': self.r_plus,
            'r_minus': self.r_minus,
            'parity': self.parity,
            'nullity': self.nullity,
            'delta_prime_plus': self.delta_prime_plus,
            'delta_prime_minus': self.delta_prime_minus,
            'eps_track': self.eps_track if np.isfinite(self.eps_track) else None,
            'conditions': dict(self.conditions),
        }

    def __repr__(self):
        return f'<CrossingReport lam*={self.lam_star:.6g} r+={self.r_plus} r-={self.r_minus}>'


@dataclass(frozen=True)
class TheoremCheck:
    """Condition flags of the crossing-number bifurcation theorem"""
    conditions: dict
    verdict: bool
    report: CrossingReport | None = None

    def to_dict(self):
        return {
            'conditions': dict(self.conditions),
            'verdict': self.verdict,
            'crossing': self.report.to_dict() if self.report else None,
        }


@dataclass(frozen=True, eq=False)
class PsiSolution:
    """Solution w of the complement equation at (lam, z)"""
    z: np.ndarray
    lam: np.ndarray
    w: np.ndarray
    lifted: np.ndarray
    residual: float
    iterations: int


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Parameter form Q on the kernel with its inertia"""
    matrix: np.ndarray
    index: int
    coindex: int
    commuting: bool

    @property
    def nullity(self) -> int:
        return self.matrix.shape[0] - self.index - self.coindex

    @property
    def definite(self) -> bool:
        return self.nullity == 0 and (self.index == 0 or self.coindex == 0)

    def to_dict(self):
        return {
            'matrix': _matrix(self.matrix),
            'index': self.index,
            'coindex': self.coindex,
            'commuting': self.commuting,
        }


@dataclass(frozen=True)
class MorseJumpPattern:
    """Morse indexes on sampled deleted half-neighborhoods of lam*"""
    LEFT_LOW_RIGHT_HIGH = 'LeftLow_RightHigh'
    LEFT_HIGH_RIGHT_LOW = 'LeftHigh_RightLow'
    OTHER = 'Other'

    mu_left: tuple
    mu_right: tuple
    mu_star: int
    nu_star: int
    tag: str
    diagnostic: str = ''

    @property
    def left(self) -> int | None:
        return self.mu_left[0] if len(set(self.mu_left)) == 1 else None

    @property
    def right(self) -> int | None:
        return self.mu_right[0] if len(set(self.mu_right)) == 1 else None

    def to_dict(self):
        return {
            'mu_left': self.left,
            'mu_right': self.right,
            'mu_star': self.mu_star,
            'nu_star': self.nu_star,
            'tag': self.tag,
            'diagnostic': self.diagnostic,
        }


@dataclass(frozen=True)
class CriterionResult:
    """Tri-state outcome of one bifurcation criterion"""
    STATUS_TRUE = 'true'
    STATUS_FALSE = 'false'
    STATUS_INDETERMINATE = 'indeterminate'

    status: str
    detail: dict = field(default_factory=dict)

    @classmethod
    def of(cls, holds: bool, **detail) -> CriterionResult:
        return cls(cls.STATUS_TRUE if holds else cls.STATUS_FALSE, detail)

    @classmethod
    def indeterminate(cls, reason: str, **detail) -> CriterionResult:
        return cls(cls.STATUS_INDETERMINATE, {'reason': reason, **detail})

    @property
    def holds(self) -> bool:
        return self.status == self.STATUS_TRUE

    def to_dict(self):
        return {'status': self.status, 'detail': _jsonable(self.detail)}


@dataclass(frozen=True, eq=False)
class BranchSample:
    """Nontrivial reduced critical points at one sampled parameter"""
    lam: tuple
    side: str
    points: np.ndarray
    lifted: np.ndarray

    @property
    def lifted_norms(self) -> list:
        return [float(np.linalg.norm(row)) for row in self.lifted]

    @property
    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.points, axis=1))) if len(self.points) else 0.0

    def to_dict(self):
        return {
            'lambda': list(self.lam),
            'side': self.side,
            'points': _matrix(self.points),
            'lifted_norms': self.lifted_norms,
        }


@dataclass(frozen=True)
class Z2OrbitCount:
    """Nontrivial antipodal orbit counts on each side of lam*"""
    n_plus: int
    n_minus: int
    dim_kernel: int

    @property
    def bound_holds(self) -> bool:
        return self.n_plus + self.n_minus >= self.dim_kernel

    def to_dict(self):
        return {
            'n_plus': self.n_plus,
            'n_minus': self.n_minus,
            'dim_kernel': self.dim_kernel,
            'bound_holds': self.bound_holds,
        }


@dataclass(frozen=True)
class Classification:
    """Outcome of the Rabinowitz trichotomy test at one candidate"""
    NON_ISOLATED_AT_STAR = 'NonIsolatedAtStar'
    BOTH_SIDES = 'BothSides'
    ONE_SIDED_TWO = 'OneSidedTwo'
    UNCLASSIFIED = 'Unclassified'

    alternative: str
    branches: tuple
    left_counts: tuple
    right_counts: tuple
    star_count: int
    converges_to_zero: bool
    delta: float
    rho: float

    def to_dict(self):
        return {
            'alternative': self.alternative,
            'left_counts': list(self.left_counts),
            'right_counts': list(self.right_counts),
            'star_count': self.star_count,
            'converges_to_zero': self.converges_to_zero,
            'delta': self.delta,
            'rho': self.rho,
        }


@dataclass(frozen=True)
class BifurcationFinding:
    """Everything known about one candidate bifurcation parameter"""
    lam_star: tuple
    nullity: int
    criteria: dict
    morse_jump: MorseJumpPattern | None
    alternative: str
    branches: tuple = ()
    z2: Z2OrbitCount | None = None
    classification: Classification | None = None
    notes: tuple = ()

    def to_dict(self):
        return {
            'lambda_star': list(self.lam_star),
            'nullity': self.nullity,
            'criteria': {name: result.to_dict() for name, result in sorted(self.criteria.items())},
            'morse_jump': self.morse_jump.to_dict() if self.morse_jump else None,
            'alternative': self.alternative,
            'classification': self.classification.to_dict() if self.classification else None,
            'branches': [branch.to_dict() for branch in self.branches],
            'z2': self.z2.to_dict() if self.z2 else None,
            'notes': list(self.notes),
        }

    def __repr__(self):
        lam = ', '.join(f'{value:.6g}' for value in self.lam_star)
        return f'<BifurcationFinding ({lam}) nu={self.nullity} ({self.alternative})>'


@dataclass(frozen=True)
class Settings:
    """Numerical knobs resolved from the active Config class and run overrides"""
    null_tol_rel: float = 1e-8
    null_tol: float | None = None
    isolation_gap_factor: float = 1e3
    crossing_steps: int = 16
    track_tol: float | None = None
    psi_tol_rel: float = 1e-11
    psi_tol: float | None = None
    newton_max_iter: int = 50
    newton_max_halvings: int = 30
    probe_radius: float = 1e-2
    trust_radius_cap: float = 1.0
    critical_grad_tol: float = 1e-9
    critical_max_iter: int = 100
    dedup_radius: float = 1e-7
    iso_radius: float = 1e-5
    side_samples: int = 8
    max_classify_dim: int = 3
    grid_m: int = 5
    delta: float | None = None
    rho: float | None = None
    extremum_radius: float = 0.05
    extremum_points: int = 41
    even_samples: int = 50
    even_tol: float = 1e-10
    jobs: int = 1
    seed: str | None = None

    @classmethod
    def from_config(cls, config_class) -> Settings:
        """Build settings from the upper-case attributes of a Config class"""
        values = {}
        for item in fields(cls):
            key = item.name.upper()
            if hasattr(config_class, key):
                values[item.name] = getattr(config_class, key)
        return cls(**values)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value
