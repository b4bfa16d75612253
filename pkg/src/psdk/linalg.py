"""Dense linear-algebra kernels for anchored low-rank PSD factorizations.

Everything here works on plain float64 ndarrays. The central object is the
reduced Cholesky factor of a rank-K PSD matrix: a p x K matrix whose rows at
a chosen ordered index set form a lower-triangular block with positive
diagonal. That anchored triangular structure is what the rest of the package
builds on, so the kernels in this module are deliberately small and strict
about validation.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import (
    NonPositiveDiagonalError,
    NonPositiveSpectrumError,
    NotInManifoldError,
    NotSymmetricError,
    ShapeMismatchError,
    SingularMatrixError,
)

# Relative threshold under which a pivot / singular value counts as zero,
# scaled by the max-norm of the matrix being factored.
TAU_PIVOT_REL = 1e-10

# Relative eigenvalue threshold for "numerical rank K" membership tests:
# lambda_{K+1} < TAU_RANK * lambda_K.
TAU_RANK = 1e-6

# Relative tolerance on max|A - A.T| for symmetry checks.
SYM_RTOL = 1e-8


def pivot_threshold(mat):
    """Absolute singularity threshold for `mat`: TAU_PIVOT_REL times its max-norm."""
    mat = np.asarray(mat)
    if mat.size == 0:
        return 0.0
    return TAU_PIVOT_REL * float(np.max(np.abs(mat)))


def check_symmetric(mat, rtol=SYM_RTOL):
    """Raise NotSymmetricError if max|A - A.T| exceeds rtol * max|A|."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {mat.shape}")
    scale = float(np.max(np.abs(mat))) if mat.size else 0.0
    asym = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    if asym > rtol * scale:
        raise NotSymmetricError(
            f"matrix is not symmetric: max|A - A.T| = {asym:.3e} "
            f"(tolerance {rtol * scale:.3e})"
        )
    return mat


@dataclass(frozen=True)
class IndexSet:
    """Ordered, duplicate-free anchor rows of a p x K factor.

    The k-th listed row carries the k-th diagonal entry of the anchored
    lower-triangular block. Order matters: permuting the indices selects a
    different factorization. Indices are 0-based.
    """

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise ShapeMismatchError("index set must contain at least one row")
        if any(i < 0 for i in idx):
            raise ShapeMismatchError(f"negative row index in {idx}")
        if len(set(idx)) != len(idx):
            raise ShapeMismatchError(f"duplicate row index in {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def canonical(cls, rank):
        """The first `rank` rows, in order."""
        return cls(tuple(range(rank)))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, k):
        return self.indices[k]

    def as_array(self):
        return np.asarray(self.indices, dtype=np.intp)

    def validate_for(self, p):
        """Check all indices address rows of a p-row matrix."""
        if max(self.indices) >= p:
            raise ShapeMismatchError(
                f"index set {self.indices} out of range for p = {p}"
            )
        return self

    def complement(self, p):
        """Rows of [0, p) not in the set, ascending."""
        self.validate_for(p)
        member = set(self.indices)
        return tuple(i for i in range(p) if i not in member)


def support_mask(p, rank, index_set):
    """Boolean (p, rank) mask of entries a reduced factor may populate.

    True everywhere except above the diagonal of the anchored block: row
    index_set[k] is False in columns k+1, ..., rank-1.
    """
    index_set.validate_for(p)
    if len(index_set) != rank:
        raise ShapeMismatchError(
            f"index set has {len(index_set)} rows, factor rank is {rank}"
        )
    mask = np.ones((p, rank), dtype=bool)
    for k, row in enumerate(index_set):
        mask[row, k + 1 :] = False
    return mask


@dataclass
class CholFactor:
    """Reduced Cholesky factor: p x K entries plus the anchor index set.

    Invariant (see `validate`): entries[index_set[k], l] == 0 for l > k and
    entries[index_set[k], k] > 0, i.e. the anchor rows form a lower-triangular
    block with positive diagonal.
    """

    entries: np.ndarray
    index_set: IndexSet

    @property
    def p(self):
        return self.entries.shape[0]

    @property
    def rank(self):
        return self.entries.shape[1]

    def anchor_block(self):
        """The K x K lower-triangular block formed by the anchor rows."""
        return self.entries[self.index_set.as_array(), :]

    def validate(self):
        """Raise if the anchored triangular structure is violated."""
        ent = np.asarray(self.entries, dtype=float)
        if ent.ndim != 2:
            raise ShapeMismatchError(f"factor entries must be 2-d, got {ent.ndim}-d")
        if not np.all(np.isfinite(ent)):
            raise ShapeMismatchError("factor entries must be finite")
        p, rank = ent.shape
        if len(self.index_set) != rank:
            raise ShapeMismatchError(
                f"index set has {len(self.index_set)} rows, factor has rank {rank}"
            )
        self.index_set.validate_for(p)
        block = self.anchor_block()
        upper = block[np.triu_indices(rank, 1)]
        if upper.size and np.max(np.abs(upper)) > 0.0:
            raise ShapeMismatchError(
                "anchor rows are not lower triangular: nonzero above the diagonal"
            )
        diag = np.diag(block)
        if np.any(diag <= 0.0):
            raise NonPositiveDiagonalError(
                f"anchored diagonal must be positive, got min = {diag.min():.3e}"
            )
        return self


@dataclass
class SpectralPair:
    """Top-K eigenpair bundle: orthonormal vectors (p x K), values descending."""

    vectors: np.ndarray
    values: np.ndarray


def reduced_cholesky(mat, rank, index_set):
    """Reduced Cholesky factor of a rank-`rank` PSD matrix.

    Computes the unique p x K matrix N with N @ N.T == mat whose anchor rows
    N[index_set, :] are lower triangular with positive diagonal. The anchor
    block is factored by a pivoted-checked Cholesky; the remaining rows follow
    from one triangular solve.

    Parameters
    ----------
    mat : ndarray, shape (p, p)
        Symmetric PSD matrix of numerical rank `rank` whose anchor block
        mat[index_set][:, index_set] is nonsingular.
    rank : int
        Target rank K, 1 <= rank <= p.
    index_set : IndexSet
        Anchor rows, length K.

    Returns
    -------
    CholFactor

    Raises
    ------
    NotSymmetricError
        If max|mat - mat.T| exceeds tolerance.
    NotInManifoldError
        If a Cholesky pivot of the anchor block falls below the relative
        threshold TAU_PIVOT_REL * max|mat|.
    ShapeMismatchError
        On inconsistent dimensions.
    """
    mat = check_symmetric(mat)
    p = mat.shape[0]
    if not (1 <= rank <= p):
        raise ShapeMismatchError(f"rank {rank} invalid for a {p} x {p} matrix")
    if len(index_set) != rank:
        raise ShapeMismatchError(
            f"index set has {len(index_set)} rows, requested rank is {rank}"
        )
    index_set.validate_for(p)

    rows = index_set.as_array()
    block = mat[np.ix_(rows, rows)]
    tril, min_pivot = _cholesky_pivots(block, pivot_threshold(mat))
    if tril is None:
        raise NotInManifoldError(
            f"anchor block pivot {min_pivot:.3e} below threshold "
            f"{pivot_threshold(mat):.3e} for index set {index_set.indices}"
        )

    # N = mat[:, rows] @ inv(tril).T, via one triangular solve.
    entries = solve_triangular(tril, mat[:, rows].T, lower=True).T
    # The anchor rows equal tril up to roundoff; write them exactly so the
    # structural zeros and the positive diagonal hold bit-for-bit.
    entries[rows, :] = tril
    return CholFactor(entries, index_set)


def _cholesky_pivots(block, tau):
    """Lower Cholesky of a small symmetric block with explicit pivot checks.

    Returns (tril, min_pivot); tril is None when some Schur-complement pivot
    drops to `tau` or below.
    """
    k = block.shape[0]
    tril = np.zeros((k, k))
    min_pivot = np.inf
    for j in range(k):
        pivot = block[j, j] - tril[j, :j] @ tril[j, :j]
        min_pivot = min(min_pivot, pivot)
        if pivot <= tau:
            return None, min_pivot
        tril[j, j] = np.sqrt(pivot)
        if j + 1 < k:
            tril[j + 1 :, j] = (block[j + 1 :, j] - tril[j + 1 :, :j] @ tril[j, :j]) / tril[j, j]
    return tril, min_pivot


def annihilation_order(k):
    """Row-major sweep over the strict upper triangle: (0,1), ..., (0,k-1), (1,2), ..."""
    return [(i, j) for i in range(k - 1) for j in range(i + 1, k)]


def lq_givens(mat, order=None):
    """Decompose a nonsingular K x K matrix as R @ Q, R lower triangular.

    R has strictly positive diagonal and Q is orthogonal; the pair is unique.
    Q is built as a product of plane rotations that annihilate the strict
    upper triangle one entry at a time, each rotation chosen so the updated
    diagonal entry is the (nonnegative) hypotenuse of the pair it mixes. A
    final reflection fixes the sign of the last diagonal entry, which no
    annihilation step touches.

    Parameters
    ----------
    mat : ndarray, shape (K, K)
        Nonsingular matrix: smallest singular value above
        TAU_PIVOT_REL * max|mat|.
    order : sequence of (i, j) pairs, optional
        Annihilation order. Defaults to the row-major sweep. Any order that
        visits each strict-upper position once, rows in increasing order,
        produces the same decomposition up to roundoff.

    Returns
    -------
    R : ndarray, shape (K, K)
        Lower triangular, positive diagonal, with R @ Q == mat.
    Q : ndarray, shape (K, K)
        Orthogonal.

    Raises
    ------
    SingularMatrixError
        If `mat` is numerically rank deficient.
    ShapeMismatchError
        If `mat` is not square.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {mat.shape}")
    k = mat.shape[0]
    smin = np.linalg.svd(mat, compute_uv=False)[-1]
    if smin <= pivot_threshold(mat):
        raise SingularMatrixError(
            f"matrix numerically singular: smallest singular value {smin:.3e}"
        )

    if order is None:
        order = annihilation_order(k)
    fac = mat.copy()
    orth = np.eye(k)
    for i, j in order:
        a, b = fac[i, i], fac[i, j]
        hyp = np.hypot(a, b)
        if hyp == 0.0:
            continue
        c, s = a / hyp, b / hyp
        col_i, col_j = fac[:, i].copy(), fac[:, j].copy()
        fac[:, i] = c * col_i + s * col_j
        fac[:, j] = -s * col_i + c * col_j
        fac[i, i] = hyp
        fac[i, j] = 0.0
        row_i, row_j = orth[i, :].copy(), orth[j, :].copy()
        orth[i, :] = c * row_i + s * row_j
        orth[j, :] = -s * row_i + c * row_j

    # No rotation annihilates anything in the last row, so its diagonal entry
    # may come out negative; a reflection of that row restores positivity
    # without disturbing the product.
    if fac[k - 1, k - 1] < 0.0:
        fac[k - 1, k - 1] = -fac[k - 1, k - 1]
        orth[k - 1, :] = -orth[k - 1, :]
    return fac, orth


def eigh_topk(mat, rank, require_positive=False):
    """Leading eigenpairs of a symmetric matrix, with a fixed sign convention.

    Parameters
    ----------
    mat : ndarray, shape (p, p)
        Symmetric matrix.
    rank : int
        Number of leading eigenpairs to return.
    require_positive : bool
        When True, raise if the rank-th eigenvalue is not strictly positive
        (above the relative pivot threshold).

    Returns
    -------
    SpectralPair
        Values sorted descending. Each eigenvector is normalized so its
        largest-magnitude entry is positive; among tied magnitudes the lowest
        row index decides. This makes the output deterministic and
        basis-stable across runs.

    Raises
    ------
    NonPositiveSpectrumError
        When `require_positive` is set and the spectrum fails the check.
    """
    mat = check_symmetric(mat)
    p = mat.shape[0]
    if not (1 <= rank <= p):
        raise ShapeMismatchError(f"rank {rank} invalid for a {p} x {p} matrix")
    values, vectors = np.linalg.eigh(mat)
    values = values[::-1][:rank].copy()
    vectors = vectors[:, ::-1][:, :rank].copy()
    for j in range(rank):
        lead = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[lead, j] < 0.0:
            vectors[:, j] = -vectors[:, j]
    if require_positive and values[-1] <= pivot_threshold(mat):
        raise NonPositiveSpectrumError(
            f"eigenvalue {rank} is {values[-1]:.3e}, not strictly positive"
        )
    return SpectralPair(vectors, values)


def procrustes_sign(mat):
    """Nearest orthogonal matrix in Frobenius norm, via the SVD sign.

    For square `mat` with SVD U S V.T returns U @ V.T, the minimizer of
    ||O - mat||_F over orthogonal O (equivalently the maximizer of
    trace(O.T mat)).

    Raises
    ------
    SingularMatrixError
        If `mat` is numerically singular, in which case the minimizer is not
        unique.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {mat.shape}")
    left, sing, right_t = np.linalg.svd(mat)
    if sing[-1] <= pivot_threshold(mat):
        raise SingularMatrixError(
            f"sign factor undefined: smallest singular value {sing[-1]:.3e}"
        )
    return left @ right_t


def projector_distance(basis_a, basis_b):
    """Frobenius distance between the projectors of two orthonormal bases.

    Computes ||A A.T - B B.T||_F for p x K matrices with orthonormal columns.
    Invariant to right-rotation of either basis, so it compares subspaces.
    """
    basis_a = np.asarray(basis_a, dtype=float)
    basis_b = np.asarray(basis_b, dtype=float)
    if basis_a.ndim != 2 or basis_b.ndim != 2:
        raise ShapeMismatchError("bases must be 2-d arrays")
    if basis_a.shape != basis_b.shape:
        raise ShapeMismatchError(
            f"bases have different shapes {basis_a.shape} and {basis_b.shape}"
        )
    if basis_a.shape[0] < basis_a.shape[1]:
        raise ShapeMismatchError(
            f"expected tall matrices, got shape {basis_a.shape}"
        )
    diff = basis_a @ basis_a.T - basis_b @ basis_b.T
    return float(np.linalg.norm(diff))
