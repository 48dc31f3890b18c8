"""Crossing numbers of the 0-group of B_lam(0) along a parameter path.

r(B_lam) counts the eigenvalues that converge to 0 as lam -> lam* and are
negative at lam. The one-sided limits r+ and r- are read off a sampled path
once the count stabilizes.
"""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np
from scipy import linalg

from bifurcata.errors import ArgumentError, InconclusiveCrossingError, NoCandidateError
from bifurcata.models import CrossingReport, CrossingSample, TheoremCheck, as_symmetric
from bifurcata.services.spectral import default_null_tol

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 16
STABLE_WINDOW = 3


def eig0_set(S, eps_track: float) -> list:
    """Eigenvalues of S with absolute value below eps_track, ascending"""
    if not eps_track > 0:
        raise ArgumentError(f"eps_track must be positive, got {eps_track}")
    values = linalg.eigvalsh(as_symmetric(S))
    return [float(value) for value in values if abs(value) < eps_track]


def default_eps_track(eigenvalues, null_tol: float) -> float:
    """Half the smallest nonzero |eigenvalue|, or inf when every eigenvalue is zero"""
    nonzero = np.abs(eigenvalues[np.abs(eigenvalues) > null_tol])
    return 0.5 * float(np.min(nonzero)) if nonzero.size else float('inf')


def _sample(path: Callable, lam: float, reference: np.ndarray, eps_track: float, null_tol: float) -> CrossingSample:
    operator = as_symmetric(path(lam), 'path operator')
    values = linalg.eigvalsh(operator)
    tracked = tuple(float(value) for value in values if abs(value) < eps_track)
    return CrossingSample(
        lam=float(lam),
        eig0=tracked,
        r=sum(1 for value in tracked if value < -null_tol),
        kernel_trivial=bool(np.all(np.abs(values) > null_tol)),
        distance=float(np.linalg.norm(operator - reference, 2)),
    )


def _sample_sides(path, lam_star, delta, steps, eps_track, null_tol, reference):
    """Return (left, right) samples ordered from the innermost outwards"""
    if not delta > 0:
        raise ArgumentError(f"delta must be positive, got {delta}")
    if steps < STABLE_WINDOW:
        raise ArgumentError(f"steps must be at least {STABLE_WINDOW}, got {steps}")
    offsets = [delta * k / steps for k in range(1, steps + 1)]
    left = [_sample(path, lam_star - offset, reference, eps_track, null_tol) for offset in offsets]
    right = [_sample(path, lam_star + offset, reference, eps_track, null_tol) for offset in offsets]
    return left, right


def _stabilized(samples: list, side: str) -> tuple[int, float]:
    """Return (count, lam) at the smallest offset where the count holds for three samples"""
    for k in range(len(samples) - STABLE_WINDOW + 1):
        window = samples[k:k + STABLE_WINDOW]
        if len({sample.r for sample in window}) == 1:
            return window[0].r, window[0].lam
    counts = [sample.r for sample in samples]
    raise InconclusiveCrossingError(f"crossing count on the {side} never stabilizes: {counts}; shrink delta")


def crossing_numbers(hessian_path: Callable, lam_star: float, delta: float, steps=DEFAULT_STEPS,
                     eps_track=None, null_tol=None) -> CrossingReport:
    """
    Compute r+ and r- at lam_star from samples lam_star +- delta * k / steps.

    Args:
        hessian_path: callable lam -> symmetric matrix B_lam(0)
        lam_star: candidate parameter
        delta: half-width of the sampled neighborhood
        steps: samples per side
        eps_track: 0-group window (default half the smallest nonzero |eigenvalue| at lam_star)
        null_tol: zero threshold (default 1e-8 * (1 + max|eig|) at lam_star)

    Returns:
        CrossingReport: counts, parity and conditions (v), (vii), (viii)

    Raises:
        NoCandidateError: If B_{lam_star}(0) is nondegenerate
        InconclusiveCrossingError: If a side count does not stabilize
    """
    reference = as_symmetric(hessian_path(lam_star), 'path operator')
    star_values = linalg.eigvalsh(reference)
    if null_tol is None:
        null_tol = default_null_tol(star_values)
    nullity = int(np.sum(np.abs(star_values) <= null_tol))
    if nullity == 0:
        raise NoCandidateError(f"B at lambda={lam_star:.12g} is nondegenerate (nullity 0)")
    if eps_track is None:
        eps_track = default_eps_track(star_values, null_tol)

    left, right = _sample_sides(hessian_path, lam_star, delta, steps, eps_track, null_tol, reference)
    r_minus, lam_minus = _stabilized(left, 'left')
    r_plus, lam_plus = _stabilized(right, 'right')

    conditions = {
        'v': all(sample.kernel_trivial for sample in left + right),
        'vii': True,
        'viii': r_plus != r_minus,
    }
    report = CrossingReport(
        lam_star=float(lam_star),
        samples=tuple(left[::-1] + right),
        r_plus=r_plus,
        r_minus=r_minus,
        parity=parity_from_counts(r_plus, r_minus),
        nullity=nullity,
        delta_prime_plus=float(lam_plus - lam_star),
        delta_prime_minus=float(lam_star - lam_minus),
        eps_track=float(eps_track),
        null_tol=float(null_tol),
        conditions=conditions,
    )
    logger.debug(f"Crossing at {lam_star:.12g}: r+={r_plus}, r-={r_minus}, nullity={nullity}")
    return report


def parity_from_counts(r_plus: int, r_minus: int) -> int:
    """(-1) ** (r_plus + r_minus)"""
    if r_plus < 0 or r_minus < 0:
        raise ArgumentError("crossing counts must be nonnegative")
    return -1 if (r_plus + r_minus) % 2 else 1


def parity_compact_pencil(K, lam0: float, null_tol=None) -> int:
    """
    Parity of the path K - lam I at lam0 as (-1) ** multiplicity.

    Raises:
        ArgumentError: If lam0 is zero or not an eigenvalue of K
    """
    values = linalg.eigvalsh(as_symmetric(K))
    if null_tol is None:
        null_tol = default_null_tol(values)
    if abs(lam0) <= null_tol:
        raise ArgumentError("lam0 must be a nonzero eigenvalue")
    multiplicity = int(np.sum(np.abs(values - lam0) <= null_tol))
    if multiplicity == 0:
        raise ArgumentError(f"{lam0} is not an eigenvalue of K")
    return -1 if multiplicity % 2 else 1


def _continuity(samples: list, scale: float) -> bool:
    """Distances ||B_lam - B_lam*|| must not increase towards lam*"""
    distances = [sample.distance for sample in samples]
    slack = 1e-12 * scale
    return all(inner <= outer + slack for inner, outer in zip(distances, distances[1:]))


def check_theorem_3_5(hessian_path: Callable, lam_star: float, delta: float, steps=DEFAULT_STEPS,
                      eps_track=None, null_tol=None) -> TheoremCheck:
    """
    Evaluate the crossing-number bifurcation theorem at lam_star.

    Conditions: (v) trivial kernel at every sampled lam != lam_star,
    (vi) ||B_lam(0) - B_lam*(0)|| shrinks towards lam_star, (vii) nontrivial
    kernel at lam_star, (viii) r+ != r-. The verdict is their conjunction.

    Raises:
        InconclusiveCrossingError: If the crossing count does not stabilize
    """
    reference = as_symmetric(hessian_path(lam_star), 'path operator')
    scale = 1.0 + np.linalg.norm(reference, 2)
    try:
        report = crossing_numbers(hessian_path, lam_star, delta, steps, eps_track, null_tol)
    except NoCandidateError:
        values = linalg.eigvalsh(reference)
        tol = null_tol if null_tol is not None else default_null_tol(values)
        track = eps_track if eps_track is not None else default_eps_track(values, tol)
        left, right = _sample_sides(hessian_path, lam_star, delta, steps, track, tol, reference)
        conditions = {
            'v': all(sample.kernel_trivial for sample in left + right),
            'vi': _continuity(left, scale) and _continuity(right, scale),
            'vii': False,
            'viii': False,
        }
        return TheoremCheck(conditions=conditions, verdict=False, report=None)

    left = [sample for sample in report.samples if sample.lam < lam_star][::-1]
    right = [sample for sample in report.samples if sample.lam > lam_star]
    conditions = dict(report.conditions)
    conditions['vi'] = _continuity(left, scale) and _continuity(right, scale)
    verdict = all(conditions[key] for key in ('v', 'vi', 'vii', 'viii'))
    return TheoremCheck(conditions=conditions, verdict=verdict, report=report)
