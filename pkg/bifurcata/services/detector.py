"""End-to-end bifurcation analysis of a potential family.

Sweep lam for degenerate Hessians, evaluate the sufficient criteria at each
candidate, classify it by critical point search on the reduced functional and
count antipodal orbits for even families.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import linalg, optimize

from bifurcata.errors import (
    ArgumentError,
    BifurcataError,
    InconclusiveCrossingError,
    InvariantViolationError,
    NoCandidateError,
    NondegenerateError,
    NotEquivariantError,
    OutsideValidityError,
    ReductionFailedError,
    UnsupportedDimensionError,
    UnsupportedPencilError,
)
from bifurcata.models import (
    BifurcationFinding,
    BranchSample,
    Classification,
    CriterionResult,
    MorseJumpPattern,
    PotentialFamily,
    Settings,
    Z2OrbitCount,
    as_parameter,
)
from bifurcata.services.crossing import check_theorem_3_5
from bifurcata.services.families import eval_hessian, extract_pencil
from bifurcata.services.reduction import ReducedModel, build_reduced_model, parameter_form_q
from bifurcata.services.spectral import (
    default_null_tol,
    eigendecompose,
    generalized_eigenvalues,
    inertia,
    is_isolated_eigenvalue,
    isolation_distance,
    morse_data,
)

logger = logging.getLogger(__name__)

STRICT_MIN = 'strict_min'
STRICT_MAX = 'strict_max'
NEITHER = 'neither'

SCALAR_CRITERIA = (
    'thm3_5', 'cor3_7_Id', 'cor3_7_Idprime', 'odd_crossing',
    'cor4_3', 'cor4_4_a', 'cor4_4_b', 'thm3_9_spd', 'extremum_switch',
)
FORM_CRITERIA = ('thm4_9_B', 'thm4_9_Bprime')
PROBE_SCALE = 0.5
BOX_TOL = 1e-9
RANDOM_DIRECTIONS = 16

_LOCAL_FAILURES = (ReductionFailedError, OutsideValidityError)


def _hessian_at_zero(family: PotentialFamily, lam) -> np.ndarray:
    return eval_hessian(family, lam, np.zeros(family.dim_state))


def _line_parameter(family: PotentialFamily, value: float, anchor) -> np.ndarray:
    """Vary the first parameter component, keeping the others at the anchor"""
    lam = np.zeros(family.dim_param) if anchor is None else as_parameter(anchor, family.dim_param).copy()
    lam[0] = value
    return lam


def eigenvalue_trajectory(family: PotentialFamily, lam_range, steps: int, anchor=None):
    """
    Eigenvalues of B_lam(0) on a uniform grid.

    For multiparameter families the first component varies and the others
    stay at the anchor.

    Returns:
        tuple: (grid of steps + 1 values, (steps + 1) x n ascending eigenvalues)
    """
    a, b = (float(value) for value in lam_range)
    if not a < b:
        raise ArgumentError(f"lambda range [{a}, {b}] is degenerate")
    if steps < 2:
        raise ArgumentError(f"steps must be at least 2, got {steps}")
    grid = np.linspace(a, b, steps + 1)
    values = np.array([
        linalg.eigvalsh(_hessian_at_zero(family, _line_parameter(family, lam, anchor)))
        for lam in grid
    ])
    return grid, values


def sweep_candidates(family: PotentialFamily, lam_range, steps: int, null_tol=None) -> list:
    """
    Locate lam in [a, b] where B_lam(0) is degenerate.

    Each ordered eigenvalue curve is bracketed on the grid and refined by
    Brent's method; curves touching zero without a sign change are refined by
    bounded minimization of |eigenvalue|. Roots closer than (b - a) / 1e6 are
    merged.

    Returns:
        list: sorted candidate parameters (possibly empty)

    Raises:
        ArgumentError: If the family has more than one parameter or the range is degenerate
    """
    if family.dim_param != 1:
        raise ArgumentError("sweeps need a scalar parameter; give lambda_star for multiparameter families")
    grid, values = eigenvalue_trajectory(family, lam_range, steps)
    width = (grid[-1] - grid[0]) / 1e6

    def tolerance(row):
        return null_tol if null_tol is not None else default_null_tol(row)

    def ordered_eigenvalue(lam, k):
        return linalg.eigvalsh(_hessian_at_zero(family, lam))[k]

    roots = []
    for k in range(values.shape[1]):
        curve = values[:, k]
        near_zero = [abs(curve[i]) <= tolerance(values[i]) for i in range(len(grid))]
        roots.extend(grid[i] for i in range(len(grid)) if near_zero[i])

        for i in range(len(grid) - 1):
            if near_zero[i] or near_zero[i + 1] or curve[i] * curve[i + 1] >= 0:
                continue
            roots.append(optimize.brentq(ordered_eigenvalue, grid[i], grid[i + 1], args=(k,), xtol=1e-14))

        for i in range(1, len(grid) - 1):
            magnitude = np.abs(curve[i - 1:i + 2])
            if near_zero[i] or not (magnitude[1] < magnitude[0] and magnitude[1] <= magnitude[2]):
                continue
            if curve[i - 1] * curve[i] < 0 or curve[i] * curve[i + 1] < 0:
                continue
            result = optimize.minimize_scalar(
                lambda lam: abs(ordered_eigenvalue(lam, k)),
                bounds=(grid[i - 1], grid[i + 1]),
                method='bounded',
                options={'xatol': width * 1e-3},
            )
            if abs(ordered_eigenvalue(result.x, k)) <= tolerance(values[i]):
                roots.append(float(result.x))

    candidates = []
    for root in sorted(roots):
        if candidates and root - candidates[-1] <= width:
            continue
        if morse_data(_hessian_at_zero(family, root), null_tol).nu >= 1:
            candidates.append(float(root))
    logger.info(f"Sweep of {family.name} on [{grid[0]:.6g}, {grid[-1]:.6g}] found {len(candidates)} candidate(s)")
    return candidates


def _unit(direction, dim_param: int) -> np.ndarray:
    if direction is None:
        direction = np.ones(dim_param)
    direction = as_parameter(direction, dim_param)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        raise ArgumentError("parameter direction must be nonzero")
    return direction / norm


def morse_jump(family: PotentialFamily, lam_star, delta: float, samples=8, null_tol=None,
               direction=None) -> MorseJumpPattern:
    """
    Morse indexes of B_lam(0) on sampled deleted half-neighborhoods of lam*.

    Args:
        family: potential family
        lam_star: candidate parameter
        delta: half-width of the sampled neighborhood
        samples: samples per side
        null_tol: zero threshold
        direction: parameter direction for multiparameter families

    Returns:
        MorseJumpPattern: per-sample indexes and pattern tag

    Raises:
        NoCandidateError: If B_lam*(0) is nondegenerate
    """
    lam_star = as_parameter(lam_star, family.dim_param)
    direction = _unit(direction, family.dim_param)
    star = morse_data(_hessian_at_zero(family, lam_star), null_tol)
    if star.nu == 0:
        raise NoCandidateError(f"B at lambda={lam_star.tolist()} is nondegenerate")

    offsets = [delta * k / samples for k in range(1, samples + 1)]
    mu_left = tuple(morse_data(_hessian_at_zero(family, lam_star - t * direction), null_tol).mu for t in offsets)
    mu_right = tuple(morse_data(_hessian_at_zero(family, lam_star + t * direction), null_tol).mu for t in offsets)

    low, high = star.mu, star.mu + star.nu
    diagnostic = ''
    if len(set(mu_left)) > 1 or len(set(mu_right)) > 1:
        tag = MorseJumpPattern.OTHER
        diagnostic = f"Morse index not constant on a side: left {list(mu_left)}, right {list(mu_right)}"
    elif mu_left[0] == low and mu_right[0] == high:
        tag = MorseJumpPattern.LEFT_LOW_RIGHT_HIGH
    elif mu_left[0] == high and mu_right[0] == low:
        tag = MorseJumpPattern.LEFT_HIGH_RIGHT_LOW
    else:
        tag = MorseJumpPattern.OTHER
        diagnostic = f"indexes {mu_left[0]} | {mu_right[0]} do not jump between {low} and {high}"
    return MorseJumpPattern(
        mu_left=mu_left,
        mu_right=mu_right,
        mu_star=star.mu,
        nu_star=star.nu,
        tag=tag,
        diagnostic=diagnostic,
    )


def default_isolation_delta(family: PotentialFamily, lam_star, pencil=None, neighbors=()) -> float:
    """
    Half the distance from lam* to the nearest other spectral point.

    Falls back to the nearest other candidate, then to 0.25 * (1 + |lam*|).
    """
    lam = float(as_parameter(lam_star, family.dim_param)[0])
    if pencil is not None and family.dim_param == 1:
        try:
            distance = isolation_distance(generalized_eigenvalues(pencil), lam)
            if np.isfinite(distance):
                return 0.5 * distance
        except (UnsupportedPencilError, ArgumentError):
            pass
    others = [abs(other - lam) for other in neighbors if abs(other - lam) > 0]
    if others:
        return 0.5 * min(others)
    return 0.25 * (1.0 + abs(lam))


def classification_delta(delta_iso: float, rho: float, settings: Settings) -> float:
    """Configured delta, else min(delta_iso, rho^2 / 2) so branches stay inside the search box"""
    if settings.delta is not None:
        return settings.delta
    return min(delta_iso, 0.5 * rho ** 2)


def _probe_directions(dim_param: int) -> list:
    directions = []
    for j in range(dim_param):
        unit = np.zeros(dim_param)
        unit[j] = 1.0
        directions.extend([unit, -unit])
    for i, j in itertools.combinations(range(dim_param), 2):
        for sign in (1.0, -1.0):
            combo = np.zeros(dim_param)
            combo[i], combo[j] = 1.0, sign
            directions.extend([combo / np.sqrt(2.0), -combo / np.sqrt(2.0)])
    if dim_param > 1:
        rng = np.random.default_rng(0)
        for vector in rng.standard_normal((RANDOM_DIRECTIONS, dim_param)):
            directions.append(vector / np.linalg.norm(vector))
    return directions


def _crossing_criteria(family, lam: float, settings: Settings, delta: float) -> dict:
    def path(value):
        return _hessian_at_zero(family, value)

    try:
        check = check_theorem_3_5(path, lam, delta, settings.crossing_steps, settings.track_tol, settings.null_tol)
    except InconclusiveCrossingError as e:
        logger.warning(f"Inconclusive crossing at {lam:.12g}: {str(e)}")
        reason = f"inconclusive crossing: {str(e)}"
        return {name: CriterionResult.indeterminate(reason) for name in ('thm3_5', 'cor3_7_Id', 'odd_crossing')}

    samples = [sample.to_dict() for sample in check.report.samples] if check.report else []
    criteria = {'thm3_5': CriterionResult.of(
        check.verdict, conditions=check.conditions,
        crossing=check.report.to_dict() if check.report else None, samples=samples)}
    if check.report is None:
        criteria['cor3_7_Id'] = CriterionResult.of(False, reason='nondegenerate at lambda*')
        criteria['odd_crossing'] = CriterionResult.of(False, reason='nondegenerate at lambda*')
        return criteria

    report = check.report
    conditions = check.conditions
    counts = {'r_plus': report.r_plus, 'r_minus': report.r_minus, 'parity': report.parity}
    criteria['cor3_7_Id'] = CriterionResult.of(
        conditions['v'] and conditions['vii'] and conditions['viii'], **counts)
    criteria['odd_crossing'] = CriterionResult.of((report.r_plus - report.r_minus) % 2 == 1, **counts)
    return criteria


def _pencil_criteria(pencil, lam: float, settings: Settings) -> dict:
    names = ('thm3_9_spd', 'cor4_4_a', 'cor4_4_b', 'cor3_7_Idprime', 'cor4_3')
    if pencil is None:
        return {name: CriterionResult.indeterminate('B_lam(0) is not affine in lambda') for name in names}

    base, hat = pencil.base, pencil.hats[0]
    base_values = linalg.eigvalsh(base)
    tol = settings.null_tol if settings.null_tol is not None else default_null_tol(base_values)
    spectrum = eigendecompose(pencil.operator_at(lam), settings.null_tol)
    kernel = spectrum.kernel_basis()
    dim_kernel = kernel.shape[1]
    eigenvalue = dim_kernel >= 1
    positive_definite = bool(np.min(base_values) > tol)
    invertible = bool(np.min(np.abs(base_values)) > tol)
    commuting = pencil.commutes(base, hat)
    plus, minus = inertia(kernel.T @ base @ kernel, tol)
    definite = eigenvalue and (plus == dim_kernel or minus == dim_kernel)

    criteria = {
        'thm3_9_spd': CriterionResult.of(
            positive_definite and eigenvalue, base_positive_definite=positive_definite, eigenvalue=eigenvalue),
        'cor4_4_a': CriterionResult.of(
            invertible and eigenvalue, base_invertible=invertible, eigenvalue=eigenvalue),
        'cor4_4_b': CriterionResult.of(
            eigenvalue and commuting and definite, commuting=commuting, plus=plus, minus=minus),
        'cor3_7_Idprime': CriterionResult.of(
            invertible and commuting and eigenvalue and plus != minus,
            base_invertible=invertible, commuting=commuting, plus=plus, minus=minus),
    }

    try:
        geig = generalized_eigenvalues(pencil, settings.null_tol)
    except UnsupportedPencilError as e:
        criteria['cor4_3'] = CriterionResult.indeterminate(str(e))
        return criteria
    hat_values = linalg.eigvalsh(hat)
    hat_tol = default_null_tol(hat_values, settings.null_tol_rel)
    semi_positive = bool(np.min(hat_values) >= -hat_tol)
    semi_negative = bool(np.max(hat_values) <= hat_tol)
    try:
        gap = settings.isolation_gap_factor * geig.null_tol
        isolated = is_isolated_eigenvalue(geig, lam, gap)
    except ArgumentError:
        isolated = False
    predicted = None
    if semi_positive:
        predicted = MorseJumpPattern.LEFT_LOW_RIGHT_HIGH
    elif semi_negative:
        predicted = MorseJumpPattern.LEFT_HIGH_RIGHT_LOW
    criteria['cor4_3'] = CriterionResult.of(
        eigenvalue and isolated and predicted is not None,
        isolated=isolated, semi_positive=semi_positive, semi_negative=semi_negative, predicted_pattern=predicted)
    return criteria


def _form_criteria(pencil, model: ReducedModel | None, lam_star: np.ndarray) -> dict:
    if pencil is None:
        return {name: CriterionResult.indeterminate('B_lam(0) is not affine in lambda') for name in FORM_CRITERIA}
    if model is None:
        return {name: CriterionResult.of(False, reason='nondegenerate at lambda*') for name in FORM_CRITERIA}

    try:
        forms = [
            (direction, parameter_form_q(pencil, model, lam_star + PROBE_SCALE * direction))
            for direction in _probe_directions(pencil.dim_param)
        ]
    except _LOCAL_FAILURES as e:
        return {name: CriterionResult.indeterminate(str(e)) for name in FORM_CRITERIA}

    odd = model.dim_kernel % 2 == 1
    commuting = forms[0][1].commuting
    split = next(((d, f) for d, f in forms if f.index != f.coindex), None)
    definite = next(((d, f) for d, f in forms if f.definite), None)

    def witness(found):
        if found is None:
            return {}
        direction, form = found
        return {'direction': direction.tolist(), 'index': form.index, 'coindex': form.coindex}

    return {
        'thm4_9_B': CriterionResult.of(
            odd or (commuting and split is not None),
            dim_kernel=model.dim_kernel, commuting=commuting, **witness(split)),
        'thm4_9_Bprime': CriterionResult.of(
            commuting and definite is not None,
            dim_kernel=model.dim_kernel, commuting=commuting, **witness(definite)),
    }


def _extremum_criterion(model: ReducedModel | None, lam: float, delta: float, settings: Settings) -> CriterionResult:
    if model is None:
        return CriterionResult.of(False, reason='nondegenerate at lambda*')
    if model.dim_kernel > settings.max_classify_dim:
        return CriterionResult.indeterminate(f"kernel dimension {model.dim_kernel} exceeds {settings.max_classify_dim}")
    radius = min(settings.extremum_radius, model.trust_radius)
    try:
        left = [certify_local_extremum(model, lam - t, radius, settings.extremum_points) for t in (delta, 0.5 * delta)]
        right = [certify_local_extremum(model, lam + t, radius, settings.extremum_points) for t in (delta, 0.5 * delta)]
    except _LOCAL_FAILURES as e:
        return CriterionResult.indeterminate(str(e))
    switch = (set(left) == {STRICT_MAX} and set(right) == {STRICT_MIN}) or (
        set(left) == {STRICT_MIN} and set(right) == {STRICT_MAX})
    return CriterionResult.of(switch, left=left, right=right, radius=radius)


def evaluate_criteria(family: PotentialFamily, lam_star, pencil=None, settings: Settings | None = None,
                      delta=None, model: ReducedModel | None = None) -> dict:
    """
    Evaluate every sufficient bifurcation criterion at lam*.

    Args:
        family: potential family
        lam_star: candidate parameter
        pencil: linear pencil (extracted from the family when omitted)
        settings: numerical settings
        delta: isolation half-width (default from the pencil spectrum)
        model: reduced model at lam* (built when omitted)

    Returns:
        dict: criterion name -> CriterionResult; unsupported routes are indeterminate
    """
    settings = settings or Settings()
    lam_star = as_parameter(lam_star, family.dim_param)
    if pencil is None:
        pencil = extract_pencil(family)
    if model is None:
        try:
            model = build_reduced_model(family, lam_star, settings=settings)
        except NondegenerateError:
            model = None

    criteria = {}
    if family.dim_param == 1:
        lam = float(lam_star[0])
        if delta is None:
            delta = default_isolation_delta(family, lam, pencil)
        criteria.update(_crossing_criteria(family, lam, settings, delta))
        criteria.update(_pencil_criteria(pencil, lam, settings))
        rho = settings.rho if settings.rho is not None else (model.trust_radius if model else 0.0)
        criteria['extremum_switch'] = _extremum_criterion(
            model, lam, classification_delta(delta, rho, settings), settings)
    else:
        for name in SCALAR_CRITERIA:
            criteria[name] = CriterionResult.indeterminate('criterion needs a scalar parameter')
    criteria.update(_form_criteria(pencil, model, lam_star))
    return criteria


def _newton_critical(model: ReducedModel, lam, start: np.ndarray, rho: float, settings: Settings, shift=None):
    """Newton on the reduced gradient minus shift @ z; None when the iterate leaves the box or fails"""
    z = start.copy()
    tol = settings.critical_grad_tol
    for _ in range(settings.critical_max_iter):
        try:
            gradient = model.gradient(lam, z)
            hessian = model.hessian(lam, z)
        except _LOCAL_FAILURES:
            return None
        if shift is not None:
            gradient = gradient - shift @ z
            hessian = hessian - shift
        step = linalg.lstsq(hessian, -gradient, cond=1e-12)[0]
        if np.linalg.norm(gradient) <= tol and np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(z)):
            return z + step
        z = z + step
        if np.max(np.abs(z)) > 2.0 * rho:
            return None
    return None


def find_reduced_critical_points(model: ReducedModel, lam, rho: float, m=5, settings: Settings | None = None,
                                 shift=None) -> np.ndarray:
    """
    Multistart Newton for critical points of the reduced functional.

    Starts from the (2m + 1)^d grid on [-rho, rho]^d; converged points outside
    that box are dropped, the rest merged within the dedup radius, and z = 0
    is always included. A d x d
    shift is subtracted from the reduced Hessian (and shift @ z from the
    gradient) when given.

    Returns:
        np.ndarray: k x d array of critical points sorted by norm, then coordinates

    Raises:
        UnsupportedDimensionError: If the kernel dimension exceeds the classification cap
    """
    settings = settings or model.settings
    if model.dim_kernel > settings.max_classify_dim:
        raise UnsupportedDimensionError(
            f"kernel dimension {model.dim_kernel} exceeds {settings.max_classify_dim}")
    lam = as_parameter(lam, model.family.dim_param)
    axis = np.linspace(-rho, rho, 2 * m + 1)

    found = [np.zeros(model.dim_kernel)]
    for start in itertools.product(axis, repeat=model.dim_kernel):
        point = _newton_critical(model, lam, np.array(start), rho, settings, shift)
        if point is None or np.max(np.abs(point)) > rho * (1.0 + BOX_TOL):
            continue
        if all(np.linalg.norm(point - other) > settings.dedup_radius for other in found):
            found.append(point)

    found.sort(key=lambda point: (round(float(np.linalg.norm(point)), 9), tuple(np.round(point, 9))))
    return np.array(found)


def certify_local_extremum(model: ReducedModel, lam, radius=0.05, points=41) -> str:
    """
    Decide by dense grid sampling whether z = 0 is a strict local extremum.

    Returns:
        str: 'strict_min', 'strict_max' or 'neither'

    Raises:
        UnsupportedDimensionError: If the kernel dimension exceeds 3
    """
    if model.dim_kernel > model.settings.max_classify_dim:
        raise UnsupportedDimensionError(f"kernel dimension {model.dim_kernel} too large for grid sampling")
    origin = model.value(lam, np.zeros(model.dim_kernel))
    axis = np.linspace(-radius, radius, points)
    differences = [
        model.value(lam, np.array(point)) - origin
        for point in itertools.product(axis, repeat=model.dim_kernel)
        if any(point)
    ]
    if all(value > 0 for value in differences):
        return STRICT_MIN
    if all(value < 0 for value in differences):
        return STRICT_MAX
    return NEITHER


def _monotone_to_zero(samples: list) -> bool:
    """Max |z| must not grow as lam approaches lam* (samples ordered outer to inner)"""
    norms = [sample.max_norm for sample in samples if len(sample.points)]
    return all(inner <= outer * (1.0 + 1e-9) + 1e-12 for outer, inner in zip(norms, norms[1:]))


def classify_rabinowitz(model: ReducedModel, lam_star, delta: float, rho: float, m=5,
                        settings: Settings | None = None, direction=None) -> Classification:
    """
    Classify a candidate by the observable critical point pattern.

    (i) NonIsolatedAtStar: another critical point within the isolation radius at
        lam*, searched with the rounding residue of the reduced Hessian at 0 removed.
    (iii) OneSidedTwo: one side has >= 2 nontrivial points at every sample, the other none.
    (ii) BothSides: every sample on both sides has a nontrivial point.
    Otherwise Unclassified. Sides are sampled at lam* +- delta * 2^-k along direction.

    Raises:
        UnsupportedDimensionError: If the kernel dimension exceeds the classification cap
    """
    settings = settings or model.settings
    lam_star = as_parameter(lam_star, model.family.dim_param)
    direction = _unit(direction, model.family.dim_param)

    # Reduced Hessian at 0 vanishes at lam* up to rounding; search without that residue
    residue = model.hessian_at_zero(lam_star)
    shift = residue if np.max(np.abs(residue)) <= model.null_tol else None
    star_points = find_reduced_critical_points(model, lam_star, settings.iso_radius, m, settings, shift)
    star_count = int(np.sum(np.linalg.norm(star_points, axis=1) <= settings.iso_radius))

    sides = {'left': [], 'right': []}
    for k in range(settings.side_samples):
        offset = delta * 2.0 ** (-k)
        for side, sign in (('left', -1.0), ('right', 1.0)):
            lam = lam_star + sign * offset * direction
            points = find_reduced_critical_points(model, lam, rho, m, settings)
            nontrivial = np.array([p for p in points if np.linalg.norm(p) > settings.dedup_radius])
            nontrivial = nontrivial.reshape(-1, model.dim_kernel)
            lifted = np.array([model.solve_psi(lam, p).lifted for p in nontrivial]).reshape(-1, model.family.dim_state)
            sides[side].append(BranchSample(lam=tuple(lam.tolist()), side=side, points=nontrivial, lifted=lifted))

    left_counts = tuple(len(sample.points) for sample in sides['left'])
    right_counts = tuple(len(sample.points) for sample in sides['right'])

    if star_count > 1:
        alternative = Classification.NON_ISOLATED_AT_STAR
    elif (min(right_counts) >= 2 and max(left_counts) == 0) or (min(left_counts) >= 2 and max(right_counts) == 0):
        alternative = Classification.ONE_SIDED_TWO
    elif min(left_counts) >= 1 and min(right_counts) >= 1:
        alternative = Classification.BOTH_SIDES
    else:
        alternative = Classification.UNCLASSIFIED

    has_points = any(left_counts) or any(right_counts)
    converges = has_points and _monotone_to_zero(sides['left']) and _monotone_to_zero(sides['right'])
    logger.info(f"Classified lambda*={lam_star.tolist()} as {alternative} (left {list(left_counts)}, right {list(right_counts)})")
    return Classification(
        alternative=alternative,
        branches=tuple(sides['left'] + sides['right'][::-1]),
        left_counts=left_counts,
        right_counts=right_counts,
        star_count=star_count,
        converges_to_zero=bool(converges),
        delta=float(delta),
        rho=float(rho),
    )


def is_even_family(family: PotentialFamily, lam, samples=50, tol=1e-10, radius=1.0) -> bool:
    """Check F(lam, u) = F(lam, -u) at fixed-seed random points"""
    rng = np.random.default_rng(0)
    for u in rng.uniform(-radius, radius, size=(samples, family.dim_state)):
        value = family.value(lam, u)
        if abs(value - family.value(lam, -u)) > tol * (1.0 + abs(value)):
            return False
    return True


def count_z2_orbits(model: ReducedModel, lam, critical_set, settings: Settings | None = None) -> tuple[int, bool]:
    """
    Count nontrivial antipodal orbits {z, -z} in a critical set.

    Returns:
        tuple: (orbit count excluding 0, evenness verdict)

    Raises:
        NotEquivariantError: If the family is not even
    """
    settings = settings or model.settings
    if not is_even_family(model.family, lam, settings.even_samples, settings.even_tol):
        raise NotEquivariantError(f"{model.family.name} is not even under u -> -u")
    points = [np.asarray(p, dtype=float) for p in critical_set if np.linalg.norm(p) > settings.dedup_radius]
    paired = set()
    orbits = 0
    for i, point in enumerate(points):
        if i in paired:
            continue
        orbits += 1
        for j in range(i + 1, len(points)):
            if j not in paired and np.linalg.norm(points[j] + point) <= settings.dedup_radius:
                paired.add(j)
                break
    return orbits, True


def assemble_report(findings) -> list:
    """
    Validate per-candidate findings before emission.

    Raises:
        InvariantViolationError: If a finding has trivial kernel or a positive
            criterion without degeneracy
    """
    assembled = []
    for finding in findings:
        if finding is None:
            continue
        positive = [name for name, result in finding.criteria.items() if result.holds]
        if finding.nullity < 1:
            logger.error(f"Finding at {list(finding.lam_star)} has nullity {finding.nullity} (positive: {positive})")
            raise InvariantViolationError(
                f"finding at lambda={list(finding.lam_star)} has nullity {finding.nullity}; "
                "bifurcation requires a degenerate Hessian")
        assembled.append(finding)
    return assembled


def collect_warnings(findings) -> list:
    """Run warnings in finding order, taken from the notes of each finding"""
    return [note for finding in findings for note in finding.notes]


class DetectorService:
    """Service running the full bifurcation analysis of a family"""

    def __init__(self, settings: Settings | None = None):
        """Initialize with numerical settings"""
        self.settings = settings or Settings()

    def analyze(self, family: PotentialFamily, lam_range=None, steps=200, lam_star=None) -> list:
        """
        Sweep, evaluate criteria and classify every candidate.

        Args:
            family: potential family
            lam_range: [a, b] sweep interval (scalar parameter)
            steps: sweep grid intervals
            lam_star: analyze this parameter instead of sweeping

        Returns:
            list: BifurcationFinding per degenerate candidate, in parameter order

        Raises:
            InvariantViolationError: If a finding is internally inconsistent
        """
        settings = self.settings
        if lam_star is not None:
            candidates = [as_parameter(lam_star, family.dim_param)]
        else:
            candidates = [np.array([lam]) for lam in sweep_candidates(family, lam_range, steps, settings.null_tol)]
        pencil = extract_pencil(family)
        neighbors = [float(c[0]) for c in candidates]

        def analyze_one(candidate):
            return self._analyze_candidate(family, pencil, candidate, neighbors)

        with ThreadPoolExecutor(max_workers=max(1, settings.jobs)) as executor:
            results = list(executor.map(analyze_one, candidates))

        findings = assemble_report(results)
        logger.info(f"Analysis of {family.name} produced {len(findings)} finding(s)")
        return findings

    def _direction(self, family, criteria) -> np.ndarray:
        if family.dim_param == 1:
            return np.ones(1)
        for name in ('thm4_9_Bprime', 'thm4_9_B'):
            result = criteria.get(name)
            if result is not None and result.holds and 'direction' in result.detail:
                return np.asarray(result.detail['direction'])
        return _probe_directions(family.dim_param)[0]

    def _analyze_candidate(self, family, pencil, lam_star, neighbors):
        settings = self.settings
        label = ', '.join(f'{value:.10g}' for value in lam_star)
        notes = []

        nullity = morse_data(_hessian_at_zero(family, lam_star), settings.null_tol).nu
        if nullity == 0:
            logger.warning(f"lambda=({label}) is nondegenerate; skipped")
            return None

        model = build_reduced_model(family, lam_star, settings=settings)
        delta_iso = default_isolation_delta(family, lam_star, pencil, neighbors)
        criteria = evaluate_criteria(family, lam_star, pencil, settings, delta_iso, model)
        for name, result in sorted(criteria.items()):
            if result.status == CriterionResult.STATUS_INDETERMINATE and family.dim_param == 1:
                notes.append(f"lambda*=({label}): {name} indeterminate ({result.detail.get('reason', '')})")

        direction = self._direction(family, criteria)
        pattern = morse_jump(family, lam_star, delta_iso, settings.side_samples, settings.null_tol, direction)

        rho = settings.rho if settings.rho is not None else model.trust_radius
        delta = classification_delta(delta_iso, rho, settings)
        classification = None
        try:
            classification = classify_rabinowitz(model, lam_star, delta, rho, settings.grid_m, settings, direction)
            alternative = classification.alternative
        except UnsupportedDimensionError as e:
            alternative = Classification.UNCLASSIFIED
            notes.append(f"lambda*=({label}): {str(e)}")
        except BifurcataError as e:
            logger.error(f"Classification failed at ({label}): {str(e)}")
            alternative = Classification.UNCLASSIFIED
            notes.append(f"lambda*=({label}): classification failed ({str(e)})")
        if alternative == Classification.UNCLASSIFIED:
            logger.warning(f"lambda*=({label}) is Unclassified")
            notes.append(f"lambda*=({label}): alternative Unclassified (Morse pattern {pattern.tag})")

        z2 = None
        if classification is not None and is_even_family(family, lam_star, settings.even_samples, settings.even_tol):
            left = [count_z2_orbits(model, sample.lam, sample.points, settings)[0]
                    for sample in classification.branches if sample.side == 'left']
            right = [count_z2_orbits(model, sample.lam, sample.points, settings)[0]
                     for sample in classification.branches if sample.side == 'right']
            z2 = Z2OrbitCount(n_plus=min(right), n_minus=min(left), dim_kernel=model.dim_kernel)
            if not z2.bound_holds:
                logger.warning(f"Orbit bound violated at ({label}): {z2.n_plus} + {z2.n_minus} < {z2.dim_kernel}")
                notes.append(f"lambda*=({label}): orbit bound n+ + n- >= dim kernel not observed")

        return BifurcationFinding(
            lam_star=tuple(float(value) for value in lam_star),
            nullity=nullity,
            criteria=criteria,
            morse_jump=pattern,
            alternative=alternative,
            branches=classification.branches if classification else (),
            z2=z2,
            classification=classification,
            notes=tuple(notes),
        )
