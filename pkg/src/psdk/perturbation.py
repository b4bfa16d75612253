"""First-order perturbation expansions for anchored factors and eigenspaces.

Three expansions live here, each paired with an exact counterpart elsewhere
in the package so callers (and the test suite) can measure the quadratic
remainder directly:

* `lq_first_order` linearizes the triangular-times-orthogonal decomposition
  of `linalg.lq_givens` around an unperturbed pair. The driving object is
  `skew_generator`, the skew-symmetric generator of the rotation induced by
  a perturbation of the triangular factor.
* `karcher_factor_first_order` linearizes the Karcher mean of factor-noise
  samples (`models.factor_noise_samples` + `manifold.karcher_mean`) around
  the noiseless factor.
* `eigvec_first_order` linearizes the top-K eigenvector block of a symmetric
  matrix under a symmetric perturbation, with the tail spectrum entering
  through the usual resolvent weights.

`equivalent_factor_noise` converts a sample covariance's rank-K spectral
surrogate into an additive factor perturbation, which is what lets the
factor expansions above speak about PCA aggregation.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import (
    NonPositiveSpectrumError,
    NotOrthogonalError,
    ShapeMismatchError,
    SingularMatrixError,
    ZeroGapError,
)
from .linalg import (
    IndexSet,
    check_symmetric,
    eigh_topk,
    pivot_threshold,
    procrustes_sign,
)


def strict_upper(mat):
    """Strictly upper-triangular part of a square matrix."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {mat.shape}")
    return np.triu(mat, 1)


def skew_generator(tril, noise):
    """Skew generator of the rotation created by perturbing a triangular factor.

    For lower-triangular `tril` (nonsingular) and a same-shape perturbation
    `noise`, returns U(tril^-1 @ noise) - U(tril^-1 @ noise).T with U the
    strictly-upper projection. The result F is skew-symmetric, linear in
    `noise`, and satisfies ||F||_F <= sqrt(2) ||tril^-1||_2 ||noise||_F.

    Raises
    ------
    SingularMatrixError
        If a diagonal entry of `tril` is numerically zero.
    """
    tril = np.asarray(tril, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if tril.ndim != 2 or tril.shape[0] != tril.shape[1]:
        raise ShapeMismatchError(f"expected a square factor, got shape {tril.shape}")
    if noise.shape != tril.shape:
        raise ShapeMismatchError(
            f"noise shape {noise.shape} does not match factor shape {tril.shape}"
        )
    if np.min(np.abs(np.diag(tril))) <= pivot_threshold(tril):
        raise SingularMatrixError("triangular factor has a numerically zero diagonal")
    scaled = solve_triangular(tril, noise, lower=True)
    upper = np.triu(scaled, 1)
    return upper - upper.T


def lq_first_order(tril, orth, noise):
    """First-order prediction of the perturbed triangular-orthogonal pair.

    Given an exact decomposition M = tril @ orth and a perturbation `noise`
    of M, predicts the factors of M + noise:

        orth_pred = orth + F @ orth
        tril_pred = tril + noise @ orth.T - tril @ F

    with F = skew_generator(tril, noise @ orth.T). Both predictions are
    accurate to second order in the perturbation; callers measure the
    remainder against the exact `linalg.lq_givens(M + noise)`.

    Returns
    -------
    (orth_pred, tril_pred) : pair of ndarray
    """
    tril = np.asarray(tril, dtype=float)
    orth = np.asarray(orth, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if not (tril.shape == orth.shape == noise.shape):
        raise ShapeMismatchError(
            f"shapes differ: {tril.shape}, {orth.shape}, {noise.shape}"
        )
    rotated = noise @ orth.T
    gen = skew_generator(tril, rotated)
    orth_pred = orth + gen @ orth
    tril_pred = tril + rotated - tril @ gen
    return orth_pred, tril_pred


@dataclass
class FactorBlocks:
    """A reduced factor split into its anchor block and the remaining rows.

    `anchor` is the K x K lower-triangular block; `rest` stacks the other
    rows in ascending row order. `assemble` reproduces the original entries
    exactly (same bits, no arithmetic).
    """

    anchor: np.ndarray
    rest: np.ndarray
    index_set: IndexSet
    p: int

    @classmethod
    def from_factor(cls, factor):
        factor.validate()
        return cls(*_split_rows(factor.entries, factor.index_set))

    def assemble(self):
        return _assemble_rows(self.anchor, self.rest, self.index_set, self.p)


@dataclass
class NoiseBlocks:
    """Same row split as FactorBlocks, for unstructured p x K perturbations."""

    anchor: np.ndarray
    rest: np.ndarray
    index_set: IndexSet
    p: int

    @classmethod
    def from_matrix(cls, mat, index_set):
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2:
            raise ShapeMismatchError("expected a 2-d matrix")
        if len(index_set) != mat.shape[1]:
            raise ShapeMismatchError(
                f"index set length {len(index_set)} does not match {mat.shape[1]} columns"
            )
        return cls(*_split_rows(mat, index_set))

    def assemble(self):
        return _assemble_rows(self.anchor, self.rest, self.index_set, self.p)


def _split_rows(mat, index_set):
    p = mat.shape[0]
    index_set.validate_for(p)
    comp = np.asarray(index_set.complement(p), dtype=np.intp)
    return mat[index_set.as_array(), :], mat[comp, :], index_set, p


def _assemble_rows(anchor, rest, index_set, p):
    out = np.empty((p, anchor.shape[1]), dtype=anchor.dtype)
    out[index_set.as_array(), :] = anchor
    comp = np.asarray(index_set.complement(p), dtype=np.intp)
    out[comp, :] = rest
    return out


def karcher_factor_first_order(factor, noises):
    """First-order prediction of the Karcher-mean factor under factor noise.

    For samples built as (N + E_m)(N + E_m).T, the factor of the Karcher mean
    expands around N as

        N + mean(E_m) - N @ skew_generator(R, mean of anchor rows of E_m)

    where R is the anchor block of N. The returned (p, K) array matches the
    exact mean factor to second order in the noise scale; its anchor rows are
    lower triangular up to roundoff by construction.

    Parameters
    ----------
    factor : CholFactor
        The noiseless factor N.
    noises : sequence of ndarray, shape (p, K)
        Unstructured perturbations E_m, one per sample.
    """
    factor.validate()
    noises = [np.asarray(e, dtype=float) for e in noises]
    if not noises:
        raise ShapeMismatchError("need at least one noise matrix")
    for e in noises:
        if e.shape != factor.entries.shape:
            raise ShapeMismatchError(
                f"noise shape {e.shape} does not match factor shape {factor.entries.shape}"
            )
    mean_noise = np.mean(np.stack(noises), axis=0)
    anchor_mean = NoiseBlocks.from_matrix(mean_noise, factor.index_set).anchor
    gen = skew_generator(factor.anchor_block(), anchor_mean)
    return factor.entries + mean_noise - factor.entries @ gen


def eigvec_first_order(values, vectors, rank, noise):
    """First-order top-`rank` eigenvector block of a perturbed symmetric matrix.

    Parameters
    ----------
    values : ndarray, shape (p,)
        Full spectrum of the unperturbed matrix, descending.
    vectors : ndarray, shape (p, p)
        Matching orthonormal eigenvectors, one per column.
    rank : int
        Size of the retained leading block, 1 <= rank <= p.
    noise : ndarray, shape (p, p)
        Symmetric perturbation.

    Returns
    -------
    ndarray, shape (p, rank)
        vectors[:, :rank] plus the first-order correction; column j receives
        -sum_{i > rank} v_i (v_i.T noise v_j) / (values_i - values_j). The
        exact counterpart is the top-`rank` eigenbasis of the perturbed
        matrix, aligned by `linalg.procrustes_sign`.

    Raises
    ------
    ZeroGapError
        If values[rank-1] - values[rank] is at or below the pivot threshold.
    """
    values = np.asarray(values, dtype=float)
    vectors = np.asarray(vectors, dtype=float)
    noise = check_symmetric(noise)
    p = values.shape[0]
    if vectors.shape != (p, p):
        raise ShapeMismatchError(
            f"vectors shape {vectors.shape} does not match {p} eigenvalues"
        )
    if noise.shape != (p, p):
        raise ShapeMismatchError(f"noise shape {noise.shape} does not match p = {p}")
    if not (1 <= rank <= p):
        raise ShapeMismatchError(f"rank {rank} invalid for p = {p}")
    if np.any(np.diff(values) > 0):
        raise ShapeMismatchError("eigenvalues must be sorted descending")
    head = vectors[:, :rank]
    if rank == p:
        return head.copy()
    gap = values[rank - 1] - values[rank]
    if gap <= pivot_threshold(np.diag(values)):
        raise ZeroGapError(
            f"eigengap below the retained block is {gap:.3e}, too small"
        )
    tail = vectors[:, rank:]
    coeffs = tail.T @ (noise @ head)
    denoms = values[rank:, None] - values[None, :rank]
    return head - tail @ (coeffs / denoms)


def equivalent_factor_noise(cov_hat, cov, rank, alignment):
    """Additive factor perturbation equivalent to a covariance estimate.

    Maps a sample covariance `cov_hat` to the p x K matrix

        E = cov_hat @ V_hat @ H @ alignment - cov @ V @ alignment

    where (V, .) and (V_hat, .) are the leading eigenpairs of `cov` and
    `cov_hat` and H is the orthogonal Procrustes sign of V_hat.T @ V. With N
    the reduced factor of the rank-K surrogate of `cov` and `alignment` its
    frame alignment, N + E reproduces the rank-K spectral surrogate of
    `cov_hat` exactly: (N + E)(N + E).T equals V_hat diag(values_hat)^2
    V_hat.T.

    Raises
    ------
    ZeroGapError
        If the eigengap of `cov` below the retained block is numerically zero.
    SingularMatrixError
        Propagated from the Procrustes sign when the bases are orthogonal.
    """
    cov_hat = check_symmetric(cov_hat)
    cov = check_symmetric(cov)
    if cov_hat.shape != cov.shape:
        raise ShapeMismatchError(
            f"covariance shapes differ: {cov_hat.shape} vs {cov.shape}"
        )
    p = cov.shape[0]
    if not (1 <= rank < p):
        raise ShapeMismatchError(f"rank {rank} invalid, need 1 <= rank < p = {p}")
    spectrum = np.linalg.eigvalsh(cov)[::-1]
    gap = spectrum[rank - 1] - spectrum[rank]
    if gap <= pivot_threshold(cov):
        raise ZeroGapError(f"eigengap of the reference covariance is {gap:.3e}")
    pair = eigh_topk(cov, rank)
    pair_hat = eigh_topk(cov_hat, rank)
    sign = procrustes_sign(pair_hat.vectors.T @ pair.vectors)
    return cov_hat @ pair_hat.vectors @ sign @ alignment - cov @ pair.vectors @ alignment


def factor_alignment(factor, pair, tol=1e-8):
    """Orthogonal alignment between a reduced factor and its spectral frame.

    For a factor N of the matrix V diag(values)^2 V.T, returns
    Q = diag(values)^-1 V.T N, the orthogonal matrix with N = V diag(values) Q.

    Raises
    ------
    NonPositiveSpectrumError
        If any provided eigenvalue is not strictly positive.
    NotOrthogonalError
        If the computed alignment fails ||Q.T Q - I||_max <= tol, which
        signals that `factor` and `pair` do not describe the same matrix.
    """
    factor.validate()
    values = np.asarray(pair.values, dtype=float)
    vectors = np.asarray(pair.vectors, dtype=float)
    if values[-1] <= 0.0:
        raise NonPositiveSpectrumError(
            f"alignment needs positive eigenvalues, got min = {values[-1]:.3e}"
        )
    if vectors.shape != factor.entries.shape:
        raise ShapeMismatchError(
            f"spectral frame shape {vectors.shape} does not match factor "
            f"shape {factor.entries.shape}"
        )
    align = (vectors.T @ factor.entries) / values[:, None]
    resid = np.max(np.abs(align.T @ align - np.eye(align.shape[0])))
    if resid > tol:
        raise NotOrthogonalError(
            f"alignment is not orthogonal: ||Q.T Q - I||_max = {resid:.3e}"
        )
    return align
