"""Log-Cholesky geometry for fixed-rank PSD matrices with an anchored block.

The space handled here is the set of p x p PSD matrices of rank K whose
rows/columns at a chosen index set form a nonsingular K x K block. Each such
matrix has a unique reduced Cholesky factor anchored at that index set, and
taking logs of the anchored diagonal turns the factor set into a plain linear
space. Pulling the Euclidean metric back through that chart gives closed-form
geodesics, distances, and Frechet (Karcher) means: averaging happens entry-wise
in log coordinates, i.e. arithmetically off the anchored diagonal and
geometrically on it.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .exceptions import (
    EmptyInputError,
    IndexSetMismatchError,
    NotInManifoldError,
    ShapeMismatchError,
)
from .linalg import CholFactor, IndexSet


@dataclass
class LowRankPsd:
    """A rank-K PSD matrix tagged with the index set anchoring its chart.

    Construction does not validate; call `validate` (or `membership`) when
    the tag needs to be trusted.
    """

    matrix: np.ndarray
    rank: int
    index_set: IndexSet

    @property
    def p(self):
        return self.matrix.shape[0]

    def validate(self):
        ok, diag = membership(self.matrix, self.rank, self.index_set)
        if not ok:
            raise NotInManifoldError(_describe_failure(diag, self.index_set))
        return self


@dataclass
class LogCholFactor:
    """Reduced Cholesky factor in log coordinates (anchored diagonal logged)."""

    entries: np.ndarray
    index_set: IndexSet

    @property
    def p(self):
        return self.entries.shape[0]

    @property
    def rank(self):
        return self.entries.shape[1]


def membership(mat, rank, index_set, rtol_rank=linalg.TAU_RANK):
    """Test whether `mat` is PSD of numerical rank `rank` with a nonsingular anchor block.

    Parameters
    ----------
    mat : ndarray, shape (p, p)
    rank : int
    index_set : IndexSet
    rtol_rank : float
        Relative eigenvalue threshold: membership requires
        lambda_{rank+1} < rtol_rank * lambda_rank.

    Returns
    -------
    ok : bool
    diagnostics : dict
        Keys: symmetric, asymmetry, psd_ok, rank_ok, block_ok, lambda_rank,
        lambda_next, min_pivot. Never raises; failures land in the flags.
    """
    mat = np.asarray(mat, dtype=float)
    diag = {
        "symmetric": False,
        "asymmetry": np.inf,
        "psd_ok": False,
        "rank_ok": False,
        "block_ok": False,
        "lambda_rank": np.nan,
        "lambda_next": np.nan,
        "min_pivot": np.nan,
    }
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return False, diag
    p = mat.shape[0]
    if not (1 <= rank <= p) or len(index_set) != rank or max(index_set) >= p:
        return False, diag

    scale = float(np.max(np.abs(mat))) if mat.size else 0.0
    asym = float(np.max(np.abs(mat - mat.T)))
    diag["asymmetry"] = asym
    diag["symmetric"] = asym <= linalg.SYM_RTOL * scale
    if not diag["symmetric"]:
        return False, diag

    values = np.linalg.eigvalsh(mat)[::-1]
    lam_rank = float(values[rank - 1])
    lam_next = float(values[rank]) if rank < p else 0.0
    diag["lambda_rank"] = lam_rank
    diag["lambda_next"] = lam_next
    diag["psd_ok"] = float(values[-1]) >= -linalg.SYM_RTOL * max(abs(values[0]), abs(values[-1]))
    diag["rank_ok"] = lam_rank > 0.0 and (rank == p or lam_next < rtol_rank * lam_rank)

    rows = index_set.as_array()
    block = mat[np.ix_(rows, rows)]
    tril, min_pivot = linalg._cholesky_pivots(block, linalg.pivot_threshold(mat))
    diag["min_pivot"] = float(min_pivot)
    diag["block_ok"] = tril is not None

    ok = diag["symmetric"] and diag["psd_ok"] and diag["rank_ok"] and diag["block_ok"]
    return ok, diag


def _describe_failure(diag, index_set):
    reasons = []
    if not diag["symmetric"]:
        reasons.append(f"asymmetry {diag['asymmetry']:.3e}")
    if not diag["psd_ok"]:
        reasons.append("negative spectrum")
    if not diag["rank_ok"]:
        reasons.append(
            f"rank check failed (lambda_K = {diag['lambda_rank']:.3e}, "
            f"lambda_K+1 = {diag['lambda_next']:.3e})"
        )
    if not diag["block_ok"]:
        reasons.append(
            f"anchor block {tuple(index_set)} singular (min pivot {diag['min_pivot']:.3e})"
        )
    return "membership failed: " + "; ".join(reasons or ["unknown"])


def factorize(psd):
    """Chart map: LowRankPsd -> CholFactor (unique anchored reduced factor).

    Raises NotInManifoldError when the membership test fails.
    """
    psd.validate()
    return linalg.reduced_cholesky(psd.matrix, psd.rank, psd.index_set)


def to_matrix(factor):
    """Inverse chart map: CholFactor -> LowRankPsd via N @ N.T (symmetrized)."""
    factor.validate()
    prod = factor.entries @ factor.entries.T
    prod = 0.5 * (prod + prod.T)
    return LowRankPsd(prod, factor.rank, factor.index_set)


def log_factor(factor):
    """Take logs of the anchored diagonal, keeping every other entry as is."""
    factor.validate()
    entries = np.array(factor.entries, dtype=float, copy=True)
    for k, row in enumerate(factor.index_set):
        entries[row, k] = np.log(entries[row, k])
    return LogCholFactor(entries, factor.index_set)


def exp_factor(log_fac):
    """Inverse of `log_factor`: exponentiate the anchored diagonal."""
    entries = np.array(log_fac.entries, dtype=float, copy=True)
    if entries.ndim != 2 or len(log_fac.index_set) != entries.shape[1]:
        raise ShapeMismatchError("log factor entries inconsistent with index set")
    for k, row in enumerate(log_fac.index_set):
        entries[row, k] = np.exp(entries[row, k])
    return CholFactor(entries, log_fac.index_set).validate()


def log_chol(psd):
    """Full chart: LowRankPsd -> log-coordinate factor."""
    return log_factor(factorize(psd))


def log_chol_inv(log_fac):
    """Full inverse chart: log-coordinate factor -> LowRankPsd."""
    return to_matrix(exp_factor(log_fac))


def karcher_mean(psds):
    """Closed-form Karcher (Frechet) mean of rank-K PSD matrices sharing an anchor.

    The mean minimizes the sum of squared geodesic distances. Because the
    chart is a global isometry onto a linear space, the minimizer is the
    entry-wise average of the log-coordinate factors: arithmetic in the
    off-diagonal entries, geometric in the anchored diagonal.

    Parameters
    ----------
    psds : sequence of LowRankPsd
        Nonempty; all elements must pass membership with the same index set.

    Returns
    -------
    LowRankPsd
        The mean, which again passes membership with the common index set.

    Raises
    ------
    EmptyInputError
        On an empty sequence.
    IndexSetMismatchError
        If the elements carry different index sets or ranks.
    NotInManifoldError
        If any element fails membership; the message names the element.
    """
    psds = list(psds)
    if not psds:
        raise EmptyInputError("karcher_mean needs at least one matrix")
    base = psds[0].index_set
    rank = psds[0].rank
    for m, psd in enumerate(psds):
        if psd.index_set != base or psd.rank != rank:
            raise IndexSetMismatchError(
                f"element {m} has (rank, index set) = ({psd.rank}, {tuple(psd.index_set)}), "
                f"expected ({rank}, {tuple(base)})"
            )
    logs = []
    for m, psd in enumerate(psds):
        try:
            logs.append(log_chol(psd).entries)
        except NotInManifoldError as err:
            raise NotInManifoldError(f"element {m}: {err}") from None
    mean_entries = np.mean(np.stack(logs), axis=0)
    return log_chol_inv(LogCholFactor(mean_entries, base))


def geodesic_distance(psd_a, psd_b):
    """Geodesic distance: Frobenius distance of the log-coordinate factors.

    Both matrices must share the same anchor index set. Symmetric, zero iff
    the matrices are equal, and by construction identical to the Euclidean
    distance between `log_chol` images.
    """
    if psd_a.index_set != psd_b.index_set or psd_a.rank != psd_b.rank:
        raise IndexSetMismatchError(
            "geodesic distance requires a common rank and index set"
        )
    diff = log_chol(psd_a).entries - log_chol(psd_b).entries
    return float(np.linalg.norm(diff))
