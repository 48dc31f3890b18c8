from __future__ import annotations

import logging

import numpy as np
from scipy import linalg

from bifurcata.errors import ArgumentError, UnsupportedPencilError
from bifurcata.models import (
    GeneralizedEigenData,
    GeneralizedEigenpair,
    MorseData,
    PencilFamily,
    SpectralData,
    as_symmetric,
)

logger = logging.getLogger(__name__)

SIGN_THRESHOLD = 1e-8
CLUSTER_TOL = 1e-8
DEFAULT_NULL_TOL_REL = 1e-8
ISOLATION_GAP_FACTOR = 1e3


def default_null_tol(eigenvalues, rel=DEFAULT_NULL_TOL_REL) -> float:
    """Scale-aware nullity threshold rel * (1 + spectral radius)"""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    radius = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
    return rel * (1.0 + radius)


def apply_sign_convention(vectors) -> np.ndarray:
    """Flip columns so that their first entry with |entry| > 1e-8 is positive"""
    vectors = np.array(vectors, dtype=float)
    for k in range(vectors.shape[1]):
        significant = np.flatnonzero(np.abs(vectors[:, k]) > SIGN_THRESHOLD)
        if significant.size and vectors[significant[0], k] < 0:
            vectors[:, k] = -vectors[:, k]
    return vectors


def inertia(matrix, tol: float) -> tuple[int, int]:
    """Return (positive count, negative count) of a symmetric matrix"""
    if np.size(matrix) == 0:
        return 0, 0
    values = linalg.eigvalsh(matrix)
    return int(np.sum(values > tol)), int(np.sum(values < -tol))


def eigendecompose(S, null_tol=None) -> SpectralData:
    """
    Full symmetric eigensystem with a deterministic sign convention.

    Args:
        S: symmetric matrix
        null_tol: threshold for zero eigenvalues (default 1e-8 * (1 + max|eig|))

    Returns:
        SpectralData: ascending eigenvalues, orthonormal eigenvectors

    Raises:
        NotSymmetricError: If S is not symmetric
        ArgumentError: If null_tol is not positive
    """
    matrix = as_symmetric(S)
    if null_tol is not None and not null_tol > 0:
        raise ArgumentError(f"null tolerance must be positive, got {null_tol}")
    eigenvalues, eigenvectors = linalg.eigh(matrix)
    if null_tol is None:
        null_tol = default_null_tol(eigenvalues)
    return SpectralData(
        eigenvalues=eigenvalues,
        eigenvectors=apply_sign_convention(eigenvectors),
        null_tol=float(null_tol),
    )


def morse_data(S, null_tol=None) -> MorseData:
    """Morse index, nullity and positive count of a symmetric operator"""
    return eigendecompose(S, null_tol).morse()


def _orthonormal(vectors: np.ndarray) -> np.ndarray:
    if vectors.shape[1] == 0:
        return np.zeros((vectors.shape[0], 0))
    basis, _ = linalg.qr(vectors, mode='economic')
    return apply_sign_convention(basis)


def generalized_eigenvalues(pencil: PencilFamily, null_tol=None) -> GeneralizedEigenData:
    """
    Solve B(0) v = lam Bhat(0) v for a scalar-parameter pencil.

    A positive definite base is handled through J = base^(-1/2) and the
    symmetric problem J hat J; an invertible base commuting with hat through
    L = base^(-1) hat. Finite eigenvalues are lam_k = 1 / kappa_k for the
    nonzero eigenvalues kappa_k; the zero eigenspace is H_0 = Ker(hat).

    Args:
        pencil: PencilFamily with a single hat operator
        null_tol: threshold for singular base and zero inertia

    Returns:
        GeneralizedEigenData: eigenvalues with eigenspaces, H_0 and signatures

    Raises:
        ArgumentError: If the pencil has more than one hat
        UnsupportedPencilError: If base is singular, or indefinite and not commuting
    """
    if pencil.dim_param != 1:
        raise ArgumentError(f"generalized eigenanalysis needs a scalar pencil, got p={pencil.dim_param}")
    base, hat = pencil.base, pencil.hats[0]

    base_values, base_vectors = linalg.eigh(base)
    base_tol = float(null_tol) if null_tol is not None else default_null_tol(base_values)

    if np.min(base_values) > base_tol:
        route = GeneralizedEigenData.ROUTE_SPD
        inv_sqrt = (base_vectors / np.sqrt(base_values)) @ base_vectors.T
        transformed = inv_sqrt @ hat @ inv_sqrt
        kappas, eigvecs = linalg.eigh(0.5 * (transformed + transformed.T))
        vectors = inv_sqrt @ eigvecs
    elif np.min(np.abs(base_values)) <= base_tol:
        raise UnsupportedPencilError("pencil base is not invertible")
    elif pencil.commutes(base, hat):
        route = GeneralizedEigenData.ROUTE_COMMUTING
        reduced = linalg.solve(base, hat, assume_a='sym')
        kappas, vectors = linalg.eigh(0.5 * (reduced + reduced.T))
    else:
        raise UnsupportedPencilError("indefinite pencil base does not commute with hat")

    kappa_tol = DEFAULT_NULL_TOL_REL * (1.0 + np.max(np.abs(kappas)))
    zero = np.abs(kappas) <= kappa_tol
    kernel = _orthonormal(vectors[:, zero])
    kernel_plus, kernel_minus = inertia(kernel.T @ base @ kernel, base_tol)

    values = 1.0 / kappas[~zero]
    finite_vectors = vectors[:, ~zero]
    order = np.argsort(values, kind='stable')
    values, finite_vectors = values[order], finite_vectors[:, order]

    pairs = []
    start = 0
    while start < len(values):
        stop = start + 1
        while stop < len(values) and abs(values[stop] - values[start]) <= CLUSTER_TOL * (1.0 + abs(values[stop])):
            stop += 1
        basis = _orthonormal(finite_vectors[:, start:stop])
        dim_plus, dim_minus = inertia(basis.T @ base @ basis, base_tol)
        pairs.append(GeneralizedEigenpair(
            value=float(np.mean(values[start:stop])),
            basis=basis,
            dim_plus=dim_plus,
            dim_minus=dim_minus,
        ))
        start = stop

    logger.debug(f"Generalized eigenvalues via {route} route: {[pair.value for pair in pairs]}")
    return GeneralizedEigenData(
        pairs=tuple(pairs),
        kernel_of_hat=kernel,
        kernel_plus=kernel_plus,
        kernel_minus=kernel_minus,
        route=route,
        null_tol=base_tol,
    )


def morse_index_spd(geig: GeneralizedEigenData, lam: float) -> int:
    """Sum of dim H_k over lam_k < lam"""
    return sum(pair.dim for pair in geig.pairs if pair.value < lam)


def morse_index_signed(geig: GeneralizedEigenData, lam: float) -> int:
    """
    Sum of dim H_k^+ over lam_k < lam plus dim H_k^- over lam_k > lam.

    H_0 = Ker(hat) is invariant under the whole pencil, so its negative part
    dim H_0^- is added as a constant. The textbook sum leaves this term out;
    it is zero whenever B(0) is positive on H_0.
    """
    below = sum(pair.dim_plus for pair in geig.pairs if pair.value < lam)
    above = sum(pair.dim_minus for pair in geig.pairs if pair.value > lam)
    return below + above + geig.kernel_minus


def _matching_index(geig: GeneralizedEigenData, lam_star: float) -> int:
    for k, value in enumerate(geig.eigenvalues):
        if abs(value - lam_star) <= CLUSTER_TOL * (1.0 + abs(lam_star)):
            return k
    raise ArgumentError(f"{lam_star} is not a generalized eigenvalue of the pencil")


def _other_points(geig: GeneralizedEigenData, lam_star: float) -> list:
    match = _matching_index(geig, lam_star)
    others = [value for k, value in enumerate(geig.eigenvalues) if k != match]
    if geig.kernel_of_hat.shape[1]:
        # lam_0 = 0 stands for H_0 = Ker(hat)
        others.append(0.0)
    return others


def isolation_distance(geig: GeneralizedEigenData, lam_star: float) -> float:
    """Distance from lam_star to the nearest other spectral point (inf if none)"""
    others = _other_points(geig, lam_star)
    return min((abs(value - lam_star) for value in others), default=float('inf'))


def is_isolated_eigenvalue(geig: GeneralizedEigenData, lam_star: float, gap=None) -> bool:
    """
    Check that no other spectral point lies within gap of lam_star.

    Args:
        geig: generalized eigendata
        lam_star: one of the eigenvalues (within 1e-8 relative)
        gap: isolation radius (default 1e3 * null_tol)

    Returns:
        bool: True if lam_star is isolated

    Raises:
        ArgumentError: If lam_star is not an eigenvalue
    """
    if gap is None:
        gap = ISOLATION_GAP_FACTOR * geig.null_tol
    return isolation_distance(geig, lam_star) > gap
