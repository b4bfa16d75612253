"""Synthetic data generation: signals, noise models, and seeded RNG streams.

Two noise models produce collections of rank-K PSD matrices around a signal:

* intrinsic: additive i.i.d. Gaussian noise on the supported entries of the
  log-coordinate factor, so samples stay exactly rank K by construction;
* factor noise / extrinsic: unstructured perturbations of the factor itself,
  samples built as (N + E)(N + E).T, optionally observed only through finite
  Gaussian data and a rank-K spectral surrogate of the sample covariance.

All randomness flows through `RngStream`, a pure function of
(master_seed, stream_id), so every experiment repetition can own an
independent, replayable stream.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import manifold
from .exceptions import ConfigError, EmptyInputError, NotInManifoldError, NotPsdError, ShapeMismatchError
from .linalg import IndexSet, check_symmetric, eigh_topk, support_mask
from .manifold import LogCholFactor, LowRankPsd

# Streams pack hierarchical labels (role, grid point, repetition, machine)
# into one integer, little-endian in this base; each label must fit below it.
STREAM_BASE = 1 << 20


def derive_stream_id(*parts):
    """Pack nonneg integer labels (each < STREAM_BASE) into one stream id."""
    if not parts:
        raise ConfigError("derive_stream_id needs at least one label")
    sid = 0
    for part in parts:
        part = int(part)
        if not 0 <= part < STREAM_BASE:
            raise ConfigError(f"stream label {part} outside [0, {STREAM_BASE})")
        sid = sid * STREAM_BASE + part + 1
    return sid


@dataclass(frozen=True)
class RngStream:
    """Replayable random stream: a pure function of (master_seed, stream_id)."""

    master_seed: int
    stream_id: int = 0

    def generator(self):
        seq = np.random.SeedSequence(
            entropy=(int(self.master_seed), int(self.stream_id))
        )
        return np.random.default_rng(seq)


def _as_generator(rng):
    """Accept an RngStream, a numpy Generator, or a plain int seed."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    raise ConfigError(f"cannot interpret {type(rng).__name__} as a random source")


@dataclass(frozen=True)
class SignalSpec:
    """Parameters of a synthetic signal: size, rank, noise level, construction."""

    p: int
    rank: int
    sigma_sq: float
    construction: str = "gaussian_svd"

    def __post_init__(self):
        if not 1 <= self.rank <= self.p:
            raise ConfigError(f"need 1 <= rank <= p, got rank={self.rank}, p={self.p}")
        if self.sigma_sq < 0:
            raise ConfigError(f"sigma_sq must be nonnegative, got {self.sigma_sq}")
        if self.construction not in ("gaussian_svd", "spiked"):
            raise ConfigError(f"unknown construction {self.construction!r}")


def gaussian_svd_signal(p, rank, rng):
    """Rank-K signal from the left singular frame of a square Gaussian matrix.

    Draws a p x p standard Gaussian matrix, keeps its top `rank` left singular
    vectors V and singular values s, and returns V diag(s) V.T tagged with the
    canonical index set.
    """
    gen = _as_generator(rng)
    gauss = gen.normal(size=(p, p))
    left, sing, _ = np.linalg.svd(gauss)
    basis = left[:, :rank]
    mat = (basis * sing[:rank]) @ basis.T
    return LowRankPsd(0.5 * (mat + mat.T), rank, IndexSet.canonical(rank))


def spiked_covariance(p, rank, rng, ridge=0.3):
    """Full-rank spiked covariance: loadings @ loadings.T + ridge * I.

    Loadings are i.i.d. standard Gaussian, p x rank. Returns the covariance
    and an orthonormal basis of its leading `rank`-dimensional eigenspace
    (the span of the loadings), which is the estimation target.
    """
    gen = _as_generator(rng)
    loadings = gen.normal(size=(p, rank))
    cov = loadings @ loadings.T + ridge * np.eye(p)
    cov = 0.5 * (cov + cov.T)
    basis = eigh_topk(cov, rank).vectors
    return cov, basis


def build_signal(spec, rng):
    """Dispatch on `spec.construction`.

    Returns a LowRankPsd for "gaussian_svd" and a (covariance, basis) pair
    for "spiked"; the two constructions target different experiments.
    """
    if spec.construction == "gaussian_svd":
        return gaussian_svd_signal(spec.p, spec.rank, rng)
    return spiked_covariance(spec.p, spec.rank, rng)


def intrinsic_samples(psd, sigma, count, rng):
    """Draw rank-K samples by Gaussian noise in log-factor coordinates.

    Each sample adds i.i.d. N(0, sigma^2) noise to every supported entry of
    the signal's log-coordinate factor (anchored diagonal included, where the
    noise acts multiplicatively after exponentiation) and maps back. Samples
    share the signal's index set and are exactly rank K.

    Parameters
    ----------
    psd : LowRankPsd
    sigma : float
        Noise standard deviation, >= 0.
    count : int
        Number of samples, >= 1.
    rng : RngStream, numpy Generator, or int seed
    """
    if sigma < 0:
        raise ConfigError(f"sigma must be nonnegative, got {sigma}")
    if count < 1:
        raise EmptyInputError("need at least one sample")
    gen = _as_generator(rng)
    base = manifold.log_chol(psd)
    mask = support_mask(psd.p, psd.rank, psd.index_set)
    nnz = int(mask.sum())
    draws = gen.normal(scale=sigma, size=(count, nnz)) if sigma > 0 else np.zeros((count, nnz))
    out = []
    for m in range(count):
        noise = np.zeros((psd.p, psd.rank))
        noise[mask] = draws[m]
        bumped = LogCholFactor(base.entries + noise, psd.index_set)
        out.append(manifold.log_chol_inv(bumped))
    return out


def factor_noise_samples(factor, noises):
    """Build samples (N + E_m)(N + E_m).T from unstructured factor noise.

    Every sample is symmetrized and membership-checked; a failure names the
    offending sample index.

    Parameters
    ----------
    factor : CholFactor
        The signal factor N.
    noises : sequence of ndarray, shape (p, K)

    Returns
    -------
    list of LowRankPsd
    """
    factor.validate()
    noises = list(noises)
    if not noises:
        raise EmptyInputError("need at least one noise matrix")
    out = []
    for m, e in enumerate(noises):
        e = np.asarray(e, dtype=float)
        if e.shape != factor.entries.shape:
            raise ShapeMismatchError(
                f"sample {m}: noise shape {e.shape} does not match factor "
                f"shape {factor.entries.shape}"
            )
        bumped = factor.entries + e
        mat = bumped @ bumped.T
        mat = 0.5 * (mat + mat.T)
        psd = LowRankPsd(mat, factor.rank, factor.index_set)
        ok, diagnostics = manifold.membership(mat, factor.rank, factor.index_set)
        if not ok:
            raise NotInManifoldError(
                f"sample {m}: {manifold._describe_failure(diagnostics, factor.index_set)}"
            )
        out.append(psd)
    return out


def gaussian_samples(cov, n, rng):
    """n i.i.d. rows from N(0, cov), via the Cholesky transform of standard normals.

    Falls back to an eigenvalue square root when `cov` is PSD but singular.
    Raises NotPsdError on genuinely negative spectrum.
    """
    cov = check_symmetric(cov)
    if n < 1:
        raise EmptyInputError("need at least one data point")
    gen = _as_generator(rng)
    try:
        root = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        values, vectors = np.linalg.eigh(cov)
        scale = max(abs(values[0]), abs(values[-1]))
        if values[0] < -1e-8 * scale:
            raise NotPsdError(
                f"covariance has negative eigenvalue {values[0]:.3e}"
            ) from None
        root = vectors * np.sqrt(np.clip(values, 0.0, None))
    z = gen.standard_normal((n, cov.shape[0]))
    return z @ root.T


def sample_cov(data):
    """Uncentered second-moment matrix data.T @ data / n."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise EmptyInputError(f"expected a nonempty (n, p) array, got {data.shape}")
    cov = data.T @ data / data.shape[0]
    return 0.5 * (cov + cov.T)


def extrinsic_samples(psd, sigma_sq, count, rng, n_inner=2000, ridge=0.01):
    """Factor-noise samples observed through finite data.

    For each of `count` draws from the intrinsic model at variance
    `sigma_sq`, simulates `n_inner` Gaussian observations with covariance
    (sample + ridge * I) and returns the rank-K spectral surrogate of the
    empirical second-moment matrix: V_hat diag(values_hat) V_hat.T with the
    top-K eigenpairs, eigenvalues unsquared. Outputs have numerical rank
    exactly K and inherit the signal's index set.
    """
    gen = _as_generator(rng)
    draws = intrinsic_samples(psd, math.sqrt(sigma_sq), count, gen)
    eye = np.eye(psd.p)
    out = []
    for draw in draws:
        data = gaussian_samples(draw.matrix + ridge * eye, n_inner, gen)
        pair = eigh_topk(sample_cov(data), psd.rank, require_positive=True)
        mat = (pair.vectors * pair.values) @ pair.vectors.T
        out.append(LowRankPsd(0.5 * (mat + mat.T), psd.rank, psd.index_set))
    return out
