"""Geometry-aware averaging of fixed-rank PSD matrices and distributed PCA.

The package works on the set of p x p PSD matrices of rank K whose
restriction to a chosen K-row index set is nonsingular. Such a matrix has a
unique reduced Cholesky factor whose index-set rows form a lower-triangular
block with positive diagonal; taking logs of that diagonal gives a global
chart in which the Karcher mean is an entrywise average, i.e. closed form.

Modules
-------
linalg
    Reduced Cholesky, Givens-based lower-triangular/orthogonal
    decomposition, top-K eigenpairs with a fixed sign convention.
manifold
    Membership tests, the factor/log chart both ways, Karcher mean and
    geodesic distance.
perturbation
    First-order expansions: decomposition under additive noise, the Karcher
    factor under factor noise, invariant subspaces under symmetric noise,
    and the equivalent-noise construction for sample covariances.
models
    Seeded signal and noise generators (counter-style RNG streams).
dpca
    One-shot distributed PCA aggregators and the anchor-row selection
    heuristic.
experiments, cli
    Reproducible experiment drivers with CSV output, and `python -m psdk`.
"""

from .dpca import (
    DpcaResult,
    LocalSummary,
    dpca_bw,
    dpca_fan,
    euclid_rankk_mean,
    find_index,
    full_pca,
    lrc_dpca,
    summarize_covariance,
)
from .exceptions import (
    ConfigError,
    DegenerateRowsError,
    EmptyInputError,
    IndexSetMismatchError,
    InsufficientPointsError,
    NonPositiveDiagonalError,
    NonPositiveSpectrumError,
    NotInManifoldError,
    NotOrthogonalError,
    NotPsdError,
    NotSymmetricError,
    PsdkError,
    ShapeMismatchError,
    SingularMatrixError,
    ZeroGapError,
    ZeroGapWarning,
)
from .experiments import (
    ExperimentConfig,
    RunRecord,
    SlopeFit,
    default_config,
    load_config,
    render_csv,
    run_dpca,
    run_extrinsic,
    run_intrinsic,
    run_perturb_order,
    run_selftest,
    slope_fit,
    write_csv,
)
from .linalg import (
    CholFactor,
    IndexSet,
    SpectralPair,
    annihilation_order,
    eigh_topk,
    lq_givens,
    procrustes_sign,
    projector_distance,
    reduced_cholesky,
    support_mask,
)
from .manifold import (
    LogCholFactor,
    LowRankPsd,
    exp_factor,
    factorize,
    geodesic_distance,
    karcher_mean,
    log_chol,
    log_chol_inv,
    log_factor,
    membership,
    to_matrix,
)
from .models import (
    RngStream,
    SignalSpec,
    build_signal,
    derive_stream_id,
    extrinsic_samples,
    factor_noise_samples,
    gaussian_samples,
    gaussian_svd_signal,
    intrinsic_samples,
    sample_cov,
    spiked_covariance,
)
from .perturbation import (
    FactorBlocks,
    NoiseBlocks,
    eigvec_first_order,
    equivalent_factor_noise,
    factor_alignment,
    karcher_factor_first_order,
    lq_first_order,
    skew_generator,
    strict_upper,
)

__version__ = "0.1.0"

__all__ = [
    "CholFactor",
    "ConfigError",
    "DegenerateRowsError",
    "DpcaResult",
    "EmptyInputError",
    "ExperimentConfig",
    "FactorBlocks",
    "IndexSet",
    "IndexSetMismatchError",
    "InsufficientPointsError",
    "LocalSummary",
    "LogCholFactor",
    "LowRankPsd",
    "NoiseBlocks",
    "NonPositiveDiagonalError",
    "NonPositiveSpectrumError",
    "NotInManifoldError",
    "NotOrthogonalError",
    "NotPsdError",
    "NotSymmetricError",
    "PsdkError",
    "RngStream",
    "RunRecord",
    "ShapeMismatchError",
    "SignalSpec",
    "SingularMatrixError",
    "SlopeFit",
    "SpectralPair",
    "ZeroGapError",
    "ZeroGapWarning",
    "annihilation_order",
    "build_signal",
    "default_config",
    "derive_stream_id",
    "dpca_bw",
    "dpca_fan",
    "eigh_topk",
    "eigvec_first_order",
    "equivalent_factor_noise",
    "euclid_rankk_mean",
    "exp_factor",
    "extrinsic_samples",
    "factor_alignment",
    "factor_noise_samples",
    "factorize",
    "find_index",
    "full_pca",
    "gaussian_samples",
    "gaussian_svd_signal",
    "geodesic_distance",
    "intrinsic_samples",
    "karcher_factor_first_order",
    "karcher_mean",
    "load_config",
    "log_chol",
    "log_chol_inv",
    "log_factor",
    "lq_first_order",
    "lq_givens",
    "lrc_dpca",
    "membership",
    "procrustes_sign",
    "projector_distance",
    "reduced_cholesky",
    "render_csv",
    "run_dpca",
    "run_extrinsic",
    "run_intrinsic",
    "run_perturb_order",
    "run_selftest",
    "sample_cov",
    "skew_generator",
    "slope_fit",
    "spiked_covariance",
    "strict_upper",
    "summarize_covariance",
    "support_mask",
    "to_matrix",
    "write_csv",
]
