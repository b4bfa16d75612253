"""Seeded experiment drivers with deterministic CSV output.

Four experiments exercise the library end to end:

* intrinsic_avg: Karcher vs Euclidean averaging of samples drawn in
  log-factor coordinates; error is the Frobenius distance to the signal.
* dpca: one-shot distributed PCA (pooled, Karcher, projector-average,
  surrogate-average aggregators) on spiked-covariance data; error is the
  projector distance to the true eigenspace.
* extrinsic_avg: Karcher vs Euclidean averaging when factor-noise samples
  are only observed through finite Gaussian data.
* perturb_order: measured remainders of the first-order expansions against
  their exact counterparts across a geometric noise-scale grid.

Every repetition owns an RngStream derived from (master_seed, packed labels),
so reruns with the same config are bit-identical regardless of the thread
count. Records are written in job-submission order. The wall_time_ms CSV
column is fixed at 0 to keep output byte-reproducible; measured timings go
to stderr instead.
"""

import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import dpca as dpca_mod
from . import manifold, models, perturbation
from .exceptions import (
    ConfigError,
    DegenerateRowsError,
    InsufficientPointsError,
    NotInManifoldError,
    PsdkError,
)
from .linalg import CholFactor, IndexSet, eigh_topk, lq_givens, projector_distance
from .manifold import LowRankPsd
from .models import RngStream, derive_stream_id

EXPERIMENTS = ("intrinsic_avg", "dpca", "extrinsic_avg", "perturb_order")
INDEX_MODES = ("canonical", "find_index_oracle", "find_index_machine1")

CSV_HEADER = "experiment,method,p,K,M,n,sigma_sq,repetition,seed,error,wall_time_ms"


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; every field maps to one config-file key."""

    experiment: str
    p: int = 100
    K: int = 5
    sigma_sq: float = 1.0
    p_grid: tuple = ()
    M_grid: tuple = ()
    n_grid: tuple = ()
    sigma_grid: tuple = ()
    M_fixed: int = 400
    eps_grid: tuple = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    n_inner: int = 2000
    repetitions: int = 20
    master_seed: int = 0
    index_mode: str = "canonical"
    output_path: str = ""
    threads: int = 1

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}, expected one of {EXPERIMENTS}"
            )
        if self.p < 1 or not 1 <= self.K <= self.p:
            raise ConfigError(f"need 1 <= K <= p, got K={self.K}, p={self.p}")
        if self.sigma_sq < 0:
            raise ConfigError(f"sigma_sq must be nonnegative, got {self.sigma_sq}")
        if not 1 <= self.repetitions < models.STREAM_BASE:
            raise ConfigError(f"repetitions out of range: {self.repetitions}")
        if self.master_seed < 0:
            raise ConfigError(f"master_seed must be nonnegative, got {self.master_seed}")
        if self.threads < 1:
            raise ConfigError(f"threads must be positive, got {self.threads}")
        if self.index_mode not in INDEX_MODES:
            raise ConfigError(
                f"unknown index_mode {self.index_mode!r}, expected one of {INDEX_MODES}"
            )
        if self.index_mode == "find_index_machine1" and self.experiment != "dpca":
            raise ConfigError("index_mode find_index_machine1 needs machines (dpca only)")
        for name in ("p_grid", "M_grid", "n_grid"):
            grid = getattr(self, name)
            if any(int(v) < 1 for v in grid):
                raise ConfigError(f"{name} entries must be positive, got {grid}")
        for p in self.p_grid:
            if p < self.K:
                raise ConfigError(f"p_grid entry {p} smaller than K={self.K}")
        if self.experiment == "intrinsic_avg" and not self.M_grid:
            raise ConfigError("intrinsic_avg needs a nonempty M_grid")
        if self.experiment == "dpca" and (not self.M_grid or not self.n_grid):
            raise ConfigError("dpca needs nonempty M_grid and n_grid")
        if self.experiment == "extrinsic_avg":
            if not self.M_grid and not self.sigma_grid:
                raise ConfigError("extrinsic_avg needs M_grid or sigma_grid")
            if any(s < 0 for s in self.sigma_grid):
                raise ConfigError(f"sigma_grid entries must be nonnegative: {self.sigma_grid}")
            if self.sigma_grid and not 1 <= self.M_fixed < models.STREAM_BASE:
                raise ConfigError(f"M_fixed out of range: {self.M_fixed}")
            if self.n_inner < 1:
                raise ConfigError(f"n_inner must be positive, got {self.n_inner}")
        if self.experiment == "perturb_order":
            if len(self.eps_grid) < 4:
                raise ConfigError("perturb_order needs an eps_grid with >= 4 points")
            if any(e <= 0 for e in self.eps_grid):
                raise ConfigError(f"eps_grid entries must be positive: {self.eps_grid}")
            if self.K < 2:
                raise ConfigError("perturb_order needs K >= 2")
        largest_m = max(list(self.M_grid) + [self.M_fixed if self.sigma_grid else 1])
        if largest_m >= models.STREAM_BASE:
            raise ConfigError(f"machine counts must stay below {models.STREAM_BASE}")
        return self


def default_config(experiment, quick=False):
    """Full-scale defaults per experiment; `quick` shrinks to desk scale."""
    if experiment == "intrinsic_avg":
        cfg = ExperimentConfig(
            experiment,
            p=100,
            sigma_sq=1.0,
            p_grid=(100, 200, 300, 400),
            M_grid=tuple(range(30, 271, 30)),
            repetitions=20,
        )
        if quick:
            cfg = replace(cfg, p=50, p_grid=(50,))
    elif experiment == "dpca":
        cfg = ExperimentConfig(
            experiment,
            p=100,
            sigma_sq=0.0,
            M_grid=(50,),
            n_grid=(500, 1000, 1500, 2000, 2500),
            repetitions=100,
            index_mode="find_index_machine1",
        )
        if quick:
            cfg = replace(
                cfg, p=50, M_grid=(20,), n_grid=(500, 1000, 2000), repetitions=20
            )
    elif experiment == "extrinsic_avg":
        cfg = ExperimentConfig(
            experiment,
            p=100,
            sigma_sq=0.5,
            M_grid=tuple(range(100, 1001, 100)),
            sigma_grid=tuple(round(0.1 * i, 10) for i in range(8)),
            M_fixed=400,
            n_inner=2000,
            repetitions=20,
        )
        if quick:
            cfg = replace(cfg, p=50, M_grid=(100, 400, 1000), sigma_grid=(0.0, 0.7))
    elif experiment == "perturb_order":
        cfg = ExperimentConfig(experiment, p=20, K=5, sigma_sq=0.0, repetitions=20)
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    return cfg


# ---------------------------------------------------------------------------
# config files

_INT_FIELDS = {"p", "K", "M_fixed", "n_inner", "repetitions", "master_seed", "threads"}
_FLOAT_FIELDS = {"sigma_sq"}
_INT_TUPLES = {"p_grid", "M_grid", "n_grid"}
_FLOAT_TUPLES = {"sigma_grid", "eps_grid"}
_STR_FIELDS = {"experiment", "index_mode", "output_path"}


def parse_config_file(path):
    """Read a flat `key = value` file; '#' starts a comment, blanks ignored."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _coerce(key, text):
    try:
        if key in _INT_FIELDS:
            return int(text)
        if key in _FLOAT_FIELDS:
            return float(text)
        if key in _INT_TUPLES:
            return tuple(int(tok) for tok in text.split(",") if tok.strip())
        if key in _FLOAT_TUPLES:
            return tuple(float(tok) for tok in text.split(",") if tok.strip())
        if key in _STR_FIELDS:
            return text
    except ValueError:
        raise ConfigError(f"cannot parse value {text!r} for key {key!r}") from None
    raise ConfigError(f"unknown config key {key!r}")


def load_config(experiment, path=None, quick=False, overrides=None):
    """Defaults for `experiment`, then config-file values, then CLI overrides."""
    cfg = default_config(experiment, quick=quick)
    if path is not None:
        for key, text in parse_config_file(path).items():
            if key == "experiment":
                if text != experiment:
                    print(
                        f"psdk: config file names experiment {text!r}; the "
                        f"command line selects {experiment!r} and wins",
                        file=sys.stderr,
                    )
                continue
            cfg = replace(cfg, **{key: _coerce(key, text)})
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg = replace(cfg, **{key: value})
    return cfg.validate()


# ---------------------------------------------------------------------------
# records and CSV output

@dataclass(frozen=True)
class RunRecord:
    """One method evaluation at one grid point in one repetition."""

    experiment: str
    method: str
    p: int
    K: int
    M: int
    n: int
    sigma_sq: float
    repetition: int
    seed: int
    error: float
    wall_time_ms: float = 0.0


def _fmt_float(x):
    return format(float(x), ".17g")


def render_csv(records):
    """Serialize records; floats carry 17 significant digits, newline is \\n."""
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            ",".join(
                (
                    r.experiment,
                    r.method,
                    str(int(r.p)),
                    str(int(r.K)),
                    str(int(r.M)),
                    str(int(r.n)),
                    _fmt_float(r.sigma_sq),
                    str(int(r.repetition)),
                    str(int(r.seed)),
                    _fmt_float(r.error),
                    _fmt_float(r.wall_time_ms),
                )
            )
        )
    return "\n".join(lines) + "\n"


def write_csv(records, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_csv(records))


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares fit of log(y) against log(x).

    Unpacks as the triple (slope, intercept, r_squared); the number of
    points that survived filtering rides along as an extra field.
    """

    slope: float
    intercept: float
    r_squared: float
    n_points: int

    def __iter__(self):
        return iter((self.slope, self.intercept, self.r_squared))


def slope_fit(points):
    """Log-log OLS fit of a list of (x, y) points.

    Nonpositive pairs are dropped before taking logs. Raises
    InsufficientPointsError when fewer than two points (with distinct x)
    survive.
    """
    points = list(points)
    if not points:
        raise InsufficientPointsError("no points to fit")
    xs = np.asarray([q[0] for q in points], dtype=float)
    ys = np.asarray([q[1] for q in points], dtype=float)
    keep = (xs > 0) & (ys > 0)
    xs, ys = xs[keep], ys[keep]
    if xs.size < 2 or np.unique(xs).size < 2:
        raise InsufficientPointsError(
            f"need >= 2 positive points with distinct x, got {xs.size}"
        )
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = ly - ly.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
    return SlopeFit(float(slope), float(intercept), r2, int(xs.size))


# ---------------------------------------------------------------------------
# runner plumbing

def _stream(cfg, *parts):
    return RngStream(cfg.master_seed, derive_stream_id(*parts))


def _run_ordered(worker, jobs, threads):
    """Run jobs, returning results in submission order regardless of threads."""
    if threads <= 1:
        return [worker(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, job) for job in jobs]
        return [f.result() for f in futures]


def _log(msg):
    print(f"[psdk] {msg}", file=sys.stderr)


def _annotate(err, where):
    return type(err)(f"{where}: {err}")


def _reselect_index(matrices, rank, failed_idx):
    """Anchor rows from the first matrix that fails membership at `failed_idx`.

    Implements the retry policy for Karcher aggregation failures: the
    offending element's own spectral frame drives `find_index`. Returns None
    when nothing fails or no admissible rows exist.
    """
    for mat in matrices:
        if not manifold.membership(mat, rank, failed_idx)[0]:
            pair = eigh_topk(mat, rank)
            try:
                return dpca_mod.find_index(pair.vectors, pair.values, rank)
            except DegenerateRowsError:
                return None
    return None


# ---------------------------------------------------------------------------
# experiment runners

def run_intrinsic(cfg, progress=False):
    """Karcher vs Euclidean averaging under log-factor noise.

    For each p in the p grid and each repetition, draws a fresh signal; for
    each M in the M grid, draws M samples and records the Frobenius error of
    the Karcher mean ("karcher") and of the best rank-K approximation of the
    arithmetic mean ("euclid"). A Karcher mean that fails membership (heavy
    noise can push an anchor pivot below threshold) is retried with
    reselected rows when the index mode permits, else logged and skipped;
    the Euclidean row is recorded either way.
    """
    cfg.validate()
    if cfg.experiment != "intrinsic_avg":
        raise ConfigError(f"config is for {cfg.experiment!r}, not intrinsic_avg")
    p_grid = cfg.p_grid or (cfg.p,)
    sigma = math.sqrt(cfg.sigma_sq)

    signals = {}
    for pi, p in enumerate(p_grid):
        for rep in range(cfg.repetitions):
            sig = models.gaussian_svd_signal(p, cfg.K, _stream(cfg, 0, pi, rep))
            if cfg.index_mode == "find_index_oracle":
                pair = eigh_topk(sig.matrix, cfg.K)
                idx = dpca_mod.find_index(pair.vectors, pair.values, cfg.K)
                sig = LowRankPsd(sig.matrix, cfg.K, idx)
            signals[(pi, rep)] = sig

    jobs = [
        (pi, p, mi, m_count, rep)
        for pi, p in enumerate(p_grid)
        for mi, m_count in enumerate(cfg.M_grid)
        for rep in range(cfg.repetitions)
    ]

    def worker(job):
        pi, p, mi, m_count, rep = job
        tick = time.perf_counter()
        sig = signals[(pi, rep)]
        stream = _stream(cfg, 1, pi, mi, rep)
        where = f"intrinsic_avg grid point p={p}, M={m_count}, repetition {rep}"
        recs = []
        try:
            samples = models.intrinsic_samples(sig, sigma, m_count, stream)
            try:
                mean = _karcher_with_retry(samples, cfg.K, cfg.index_mode, where)
                recs.append(
                    RunRecord("intrinsic_avg", "karcher", p, cfg.K, m_count, 0,
                              cfg.sigma_sq, rep, stream.stream_id,
                              float(np.linalg.norm(mean.matrix - sig.matrix)))
                )
            except NotInManifoldError as err:
                _log(f"{where}: karcher skipped: {err}")
            euclid = dpca_mod.euclid_rankk_mean(samples, cfg.K)
            recs.append(
                RunRecord("intrinsic_avg", "euclid", p, cfg.K, m_count, 0,
                          cfg.sigma_sq, rep, stream.stream_id,
                          float(np.linalg.norm(euclid.matrix - sig.matrix)))
            )
        except PsdkError as err:
            raise _annotate(err, where) from err
        return recs, time.perf_counter() - tick

    return _collect(cfg, jobs, worker, progress,
                    label=lambda job: f"p={job[1]} M={job[3]}")


def run_dpca(cfg, progress=False):
    """One-shot distributed PCA over an (M, n) grid on spiked-covariance data.

    One population covariance is drawn per run. Per repetition and grid
    point, M machines each observe n Gaussian samples; the four aggregators
    run on the same draws and are scored by projector distance to the true
    leading eigenspace. A Karcher aggregation that fails membership is
    logged to stderr and its row skipped; the other methods still report.
    """
    cfg.validate()
    if cfg.experiment != "dpca":
        raise ConfigError(f"config is for {cfg.experiment!r}, not dpca")
    cov, basis = models.spiked_covariance(cfg.p, cfg.K, _stream(cfg, 0, 0, 0))
    oracle_idx = None
    if cfg.index_mode == "find_index_oracle":
        pair = eigh_topk(cov, cfg.K)
        oracle_idx = dpca_mod.find_index(pair.vectors, pair.values, cfg.K)

    grid = [(m_count, n) for m_count in cfg.M_grid for n in cfg.n_grid]
    jobs = [
        (gi, m_count, n, rep)
        for gi, (m_count, n) in enumerate(grid)
        for rep in range(cfg.repetitions)
    ]

    def worker(job):
        gi, m_count, n, rep = job
        tick = time.perf_counter()
        where = f"grid point M={m_count}, n={n}, repetition {rep}"
        try:
            covs = [
                models.sample_cov(
                    models.gaussian_samples(cov, n, _stream(cfg, 2, gi, rep, m))
                )
                for m in range(m_count)
            ]
            summaries = [
                dpca_mod.summarize_covariance(c, cfg.K, m) for m, c in enumerate(covs)
            ]
            if cfg.index_mode == "canonical":
                idx = IndexSet.canonical(cfg.K)
            elif cfg.index_mode == "find_index_oracle":
                idx = oracle_idx
            else:
                idx = dpca_mod.find_index(
                    summaries[0].vectors, summaries[0].values, cfg.K
                )
            results = [dpca_mod.full_pca(covs, cfg.K)]
            surrogates = []
            for s in summaries:
                mat = (s.vectors * s.values**2) @ s.vectors.T
                surrogates.append(0.5 * (mat + mat.T))
            try:
                results.append(dpca_mod.lrc_dpca(summaries, cfg.K, idx))
            except NotInManifoldError as err:
                # A failed aggregation is retried once with rows reselected
                # from the offending machine, unless the config pinned the
                # canonical rows; a second failure skips the row and logs.
                alt = None
                if cfg.index_mode != "canonical":
                    alt = _reselect_index(surrogates, cfg.K, idx)
                done = False
                if alt is not None and alt != idx:
                    try:
                        results.append(dpca_mod.lrc_dpca(summaries, cfg.K, alt))
                        _log(f"dpca {where}: lrc retried with rows {tuple(alt)}")
                        done = True
                    except NotInManifoldError as err2:
                        err = err2
                if not done:
                    _log(f"dpca {where}: lrc skipped: {err}")
            results.append(dpca_mod.dpca_fan(summaries, cfg.K))
            results.append(dpca_mod.dpca_bw(summaries, cfg.K))
        except PsdkError as err:
            raise _annotate(err, where) from err
        seed0 = derive_stream_id(2, gi, rep, 0)
        recs = [
            RunRecord("dpca", res.method, cfg.p, cfg.K, m_count, n,
                      cfg.sigma_sq, rep, seed0,
                      projector_distance(res.basis, basis))
            for res in results
        ]
        return recs, time.perf_counter() - tick

    return _collect(cfg, jobs, worker, progress,
                    label=lambda job: f"M={job[1]} n={job[2]}")


def _karcher_with_retry(samples, rank, index_mode, where):
    """Karcher mean with one row-reselection retry when the mode permits it."""
    try:
        return manifold.karcher_mean(samples)
    except NotInManifoldError:
        if index_mode == "canonical":
            raise
        alt = _reselect_index([s.matrix for s in samples], rank,
                              samples[0].index_set)
        if alt is None or alt == samples[0].index_set:
            raise
        retagged = [LowRankPsd(s.matrix, rank, alt) for s in samples]
        mean = manifold.karcher_mean(retagged)
        _log(f"{where}: karcher retried with rows {tuple(alt)}")
        return mean


def run_extrinsic(cfg, progress=False):
    """Karcher vs Euclidean averaging of data-observed factor-noise samples.

    Two sweeps share one run: the M grid at the configured sigma_sq, then
    the sigma grid at M_fixed. Error is the Frobenius distance between each
    mean and the repetition's signal.
    """
    cfg.validate()
    if cfg.experiment != "extrinsic_avg":
        raise ConfigError(f"config is for {cfg.experiment!r}, not extrinsic_avg")
    grid = [(m_count, cfg.sigma_sq) for m_count in cfg.M_grid]
    grid += [(cfg.M_fixed, s2) for s2 in cfg.sigma_grid]

    signals = {}
    for rep in range(cfg.repetitions):
        sig = models.gaussian_svd_signal(cfg.p, cfg.K, _stream(cfg, 0, rep, 0))
        if cfg.index_mode == "find_index_oracle":
            pair = eigh_topk(sig.matrix, cfg.K)
            idx = dpca_mod.find_index(pair.vectors, pair.values, cfg.K)
            sig = LowRankPsd(sig.matrix, cfg.K, idx)
        signals[rep] = sig

    jobs = [
        (gi, m_count, s2, rep)
        for gi, (m_count, s2) in enumerate(grid)
        for rep in range(cfg.repetitions)
    ]

    def worker(job):
        gi, m_count, s2, rep = job
        tick = time.perf_counter()
        where = f"extrinsic_avg grid point M={m_count}, sigma_sq={s2}, repetition {rep}"
        sig = signals[rep]
        stream = _stream(cfg, 1, gi, rep)
        recs = []
        try:
            samples = models.extrinsic_samples(
                sig, s2, m_count, stream, n_inner=cfg.n_inner
            )
            try:
                mean = _karcher_with_retry(samples, cfg.K, cfg.index_mode, where)
                recs.append(
                    RunRecord("extrinsic_avg", "karcher", cfg.p, cfg.K, m_count,
                              cfg.n_inner, s2, rep, stream.stream_id,
                              float(np.linalg.norm(mean.matrix - sig.matrix)))
                )
            except NotInManifoldError as err:
                _log(f"{where}: karcher skipped: {err}")
            euclid = dpca_mod.euclid_rankk_mean(samples, cfg.K)
            recs.append(
                RunRecord("extrinsic_avg", "euclid", cfg.p, cfg.K, m_count,
                          cfg.n_inner, s2, rep, stream.stream_id,
                          float(np.linalg.norm(euclid.matrix - sig.matrix)))
            )
        except PsdkError as err:
            raise _annotate(err, where) from err
        return recs, time.perf_counter() - tick

    return _collect(cfg, jobs, worker, progress,
                    label=lambda job: f"M={job[1]} sigma_sq={job[2]}")


def run_perturb_order(cfg, progress=False):
    """Remainder magnitudes of the first-order expansions across a noise grid.

    Per repetition, draws one random decomposition instance and one random
    Karcher instance, scales a fixed unit perturbation by each epsilon in
    the grid, and records max-norm remainders: prediction vs exact
    recomputation. The sigma_sq column carries epsilon.
    """
    cfg.validate()
    if cfg.experiment != "perturb_order":
        raise ConfigError(f"config is for {cfg.experiment!r}, not perturb_order")

    jobs = [(kind, rep) for kind in (0, 1) for rep in range(cfg.repetitions)]

    def worker(job):
        kind, rep = job
        tick = time.perf_counter()
        stream = _stream(cfg, kind, rep)
        gen = stream.generator()
        recs = []
        if kind == 0:
            k = cfg.K
            tril = np.tril(gen.normal(size=(k, k)))
            np.fill_diagonal(tril, 1.0 + np.abs(gen.normal(size=k)))
            orth = np.linalg.qr(gen.normal(size=(k, k)))[0]
            noise = gen.normal(size=(k, k))
            noise /= np.max(np.abs(noise))
            base = tril @ orth
            for eps in cfg.eps_grid:
                exact_tri, exact_orth = lq_givens(base + eps * noise)
                pred_orth, pred_tri = perturbation.lq_first_order(
                    tril, orth, eps * noise
                )
                recs.append(
                    RunRecord("perturb_order", "lq_rotation", cfg.p, k, 0, 0,
                              eps, rep, stream.stream_id,
                              float(np.max(np.abs(exact_orth - pred_orth))))
                )
                recs.append(
                    RunRecord("perturb_order", "lq_factor", cfg.p, k, 0, 0,
                              eps, rep, stream.stream_id,
                              float(np.max(np.abs(exact_tri - pred_tri))))
                )
        else:
            p, k, count = cfg.p, cfg.K, 5
            entries = 0.5 * gen.normal(size=(p, k))
            entries[:k, :] = np.tril(entries[:k, :])
            entries[np.arange(k), np.arange(k)] = 1.0 + np.abs(gen.normal(size=k))
            factor = CholFactor(entries, IndexSet.canonical(k)).validate()
            noises = []
            for _ in range(count):
                e = gen.normal(size=(p, k))
                noises.append(e / np.max(np.abs(e)))
            for eps in cfg.eps_grid:
                scaled = [eps * e for e in noises]
                exact = manifold.factorize(
                    manifold.karcher_mean(models.factor_noise_samples(factor, scaled))
                )
                pred = perturbation.karcher_factor_first_order(factor, scaled)
                recs.append(
                    RunRecord("perturb_order", "karcher_factor", p, k, count, 0,
                              eps, rep, stream.stream_id,
                              float(np.max(np.abs(exact.entries - pred))))
                )
        return recs, time.perf_counter() - tick

    return _collect(cfg, jobs, worker, progress,
                    label=lambda job: ("lq", "karcher_factor")[job[0]])


def _collect(cfg, jobs, worker, progress, label):
    outcomes = _run_ordered(worker, jobs, cfg.threads)
    records = []
    elapsed = {}
    for job, (recs, secs) in zip(jobs, outcomes):
        records.extend(recs)
        key = label(job)
        done, total = elapsed.get(key, (0.0, 0))
        elapsed[key] = (done + secs, total + 1)
    if progress:
        for key, (secs, count) in elapsed.items():
            _log(f"{cfg.experiment} {key}: {count} repetitions in {secs:.1f}s")
    return records


RUNNERS = {
    "intrinsic_avg": run_intrinsic,
    "dpca": run_dpca,
    "extrinsic_avg": run_extrinsic,
    "perturb_order": run_perturb_order,
}


# ---------------------------------------------------------------------------
# summaries

def _mean_median(records, key_fn):
    groups = {}
    for rec in records:
        groups.setdefault(key_fn(rec), []).append(rec.error)
    return {
        key: (float(np.mean(errs)), float(np.median(errs)), len(errs))
        for key, errs in sorted(groups.items())
    }


def summarize_records(cfg, records):
    """Human-readable per-grid-point stats and log-log slope fits."""
    lines = [f"{cfg.experiment}: {len(records)} records"]
    if cfg.experiment == "intrinsic_avg":
        stats = _mean_median(records, lambda r: (r.p, r.method, r.M))
        for (p, method) in sorted({(r.p, r.method) for r in records}):
            points = [(m, stats[(p, method, m)][0]) for m in cfg.M_grid]
            fit = slope_fit(points)
            lines.append(
                f"  p={p} method={method}: slope of mean error vs M = "
                f"{fit.slope:.3f} (r2={fit.r_squared:.3f})"
            )
        lines.append("  p M method mean median")
        for (p, method, m), (mean, med, _) in stats.items():
            lines.append(f"  {p} {m} {method} {mean:.6g} {med:.6g}")
    elif cfg.experiment == "dpca":
        stats = _mean_median(records, lambda r: (r.M, r.n, r.method))
        methods = sorted({r.method for r in records})
        if len(cfg.n_grid) > 1:
            for m_count in cfg.M_grid:
                for method in methods:
                    pts = [(n, stats[(m_count, n, method)][0]) for n in cfg.n_grid
                           if (m_count, n, method) in stats]
                    if len(pts) > 1:
                        fit = slope_fit(pts)
                        lines.append(
                            f"  M={m_count} method={method}: slope vs n = "
                            f"{fit.slope:.3f} (r2={fit.r_squared:.3f})"
                        )
        if len(cfg.M_grid) > 1:
            for n in cfg.n_grid:
                for method in methods:
                    pts = [(m_count, stats[(m_count, n, method)][0])
                           for m_count in cfg.M_grid
                           if (m_count, n, method) in stats]
                    if len(pts) > 1:
                        fit = slope_fit(pts)
                        lines.append(
                            f"  n={n} method={method}: slope vs M = "
                            f"{fit.slope:.3f} (r2={fit.r_squared:.3f})"
                        )
        lines.append("  M n method mean median")
        for (m_count, n, method), (mean, med, _) in stats.items():
            lines.append(f"  {m_count} {n} {method} {mean:.6g} {med:.6g}")
    elif cfg.experiment == "extrinsic_avg":
        stats = _mean_median(records, lambda r: (r.M, r.sigma_sq, r.method))
        lines.append("  M sigma_sq method mean median")
        for (m_count, s2, method), (mean, med, _) in stats.items():
            lines.append(f"  {m_count} {s2:g} {method} {mean:.6g} {med:.6g}")
        for (m_count, s2) in sorted({(r.M, r.sigma_sq) for r in records}):
            kk = (m_count, s2, "karcher")
            ee = (m_count, s2, "euclid")
            if kk in stats and ee in stats and stats[ee][0] > 0:
                lines.append(
                    f"  M={m_count} sigma_sq={s2:g}: karcher/euclid mean ratio = "
                    f"{stats[kk][0] / stats[ee][0]:.3f}"
                )
    elif cfg.experiment == "perturb_order":
        for method in sorted({r.method for r in records}):
            slopes = []
            for rep in range(cfg.repetitions):
                pts = [(r.sigma_sq, r.error) for r in records
                       if r.method == method and r.repetition == rep]
                if len(pts) >= 2:
                    try:
                        slopes.append(slope_fit(pts).slope)
                    except InsufficientPointsError:
                        pass
            if slopes:
                arr = np.asarray(slopes)
                lines.append(
                    f"  method={method}: remainder slope over {arr.size} instances "
                    f"min={arr.min():.3f} median={np.median(arr):.3f} max={arr.max():.3f}"
                )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# selftest

def run_selftest():
    """Fast internal consistency battery; returns (all_ok, report_lines)."""
    checks = [
        ("factor round-trip", _selftest_roundtrip),
        ("triangular-orthogonal decomposition", _selftest_lq),
        ("karcher mean identities", _selftest_karcher),
        ("first-order expansions", _selftest_orders),
        ("experiment determinism", _selftest_determinism),
    ]
    lines = []
    all_ok = True
    for name, fn in checks:
        try:
            fn()
            lines.append(f"ok - {name}")
        except Exception as err:  # noqa: BLE001 - report, do not crash
            all_ok = False
            lines.append(f"FAIL - {name}: {err}")
    return all_ok, lines


def _random_factor(gen, p, k, index_set):
    entries = 0.5 * gen.normal(size=(p, k))
    rows = index_set.as_array()
    entries[rows, :] = np.tril(entries[rows, :])
    entries[rows, np.arange(k)] = 0.5 + gen.uniform(0.0, 1.5, size=k)
    return CholFactor(entries, index_set).validate()


def _selftest_roundtrip():
    gen = np.random.default_rng(20240817)
    worst = 0.0
    for _ in range(50):
        p = int(gen.integers(2, 31))
        k = int(gen.integers(1, min(p, 6) + 1))
        rows = gen.permutation(p)[:k]
        idx = IndexSet(tuple(int(i) for i in rows))
        factor = _random_factor(gen, p, k, idx)
        psd = manifold.to_matrix(factor)
        back = manifold.factorize(psd)
        worst = max(worst, float(np.max(np.abs(back.entries - factor.entries))))
    if worst > 1e-8:
        raise AssertionError(f"round-trip error {worst:.3e} above 1e-8")


def _selftest_lq():
    gen = np.random.default_rng(911)
    for _ in range(50):
        k = int(gen.integers(2, 7))
        mat = gen.normal(size=(k, k))
        tri, orth = lq_givens(mat)
        scale = np.max(np.abs(mat))
        if np.max(np.abs(tri @ orth - mat)) > 1e-12 * max(scale, 1.0):
            raise AssertionError("reconstruction failed")
        if np.max(np.abs(orth @ orth.T - np.eye(k))) > 1e-12:
            raise AssertionError("rotation not orthogonal")
        if np.max(np.abs(np.triu(tri, 1))) != 0.0:
            raise AssertionError("factor not lower triangular")
        if np.min(np.diag(tri)) <= 0.0:
            raise AssertionError("factor diagonal not positive")


def _selftest_karcher():
    diag_a = LowRankPsd(np.diag([1.0, 0.0]), 1, IndexSet((0,)))
    diag_b = LowRankPsd(np.diag([4.0, 0.0]), 1, IndexSet((0,)))
    mean = manifold.karcher_mean([diag_a, diag_b])
    if np.max(np.abs(mean.matrix - np.diag([2.0, 0.0]))) > 1e-12:
        raise AssertionError("two-point diagonal mean wrong")
    gen = np.random.default_rng(3)
    factor = _random_factor(gen, 8, 3, IndexSet.canonical(3))
    psd = manifold.to_matrix(factor)
    mean = manifold.karcher_mean([psd, psd, psd])
    if np.max(np.abs(mean.matrix - psd.matrix)) > 1e-10:
        raise AssertionError("mean of copies drifted")


def _selftest_orders():
    gen = np.random.default_rng(77)
    k = 4
    tril = np.tril(gen.normal(size=(k, k)))
    np.fill_diagonal(tril, 1.0 + np.abs(gen.normal(size=k)))
    orth = np.linalg.qr(gen.normal(size=(k, k)))[0]
    noise = gen.normal(size=(k, k))
    noise /= np.max(np.abs(noise))
    rems = []
    for eps in (2e-3, 1e-3):
        exact_tri, exact_orth = lq_givens(tril @ orth + eps * noise)
        pred_orth, pred_tri = perturbation.lq_first_order(tril, orth, eps * noise)
        rems.append(max(np.max(np.abs(exact_orth - pred_orth)),
                        np.max(np.abs(exact_tri - pred_tri))))
    ratio = rems[0] / rems[1]
    if not 3.0 < ratio < 5.0:
        raise AssertionError(f"lq remainder ratio {ratio:.2f} not ~ 4")
    values = np.array([2.0, 1.0])
    vectors = np.eye(2)
    delta = 1e-4
    bump = np.array([[0.0, delta], [delta, 0.0]])
    pred = perturbation.eigvec_first_order(values, vectors, 1, bump)
    if np.max(np.abs(pred - np.array([[1.0], [delta]]))) > 1e-15:
        raise AssertionError("closed-form eigenvector correction wrong")


def _selftest_determinism():
    cfg = ExperimentConfig(
        "dpca", p=12, K=2, sigma_sq=0.0, M_grid=(4,), n_grid=(80,),
        repetitions=3, master_seed=7, index_mode="canonical",
    ).validate()
    first = render_csv(run_dpca(cfg))
    second = render_csv(run_dpca(replace(cfg, threads=2)))
    if first != second:
        raise AssertionError("rerun with different thread count changed the CSV")


# keep the config-field list in sync with the dataclass at import time
_KNOWN_KEYS = {f.name for f in fields(ExperimentConfig)}
assert (
    _INT_FIELDS | _FLOAT_FIELDS | _INT_TUPLES | _FLOAT_TUPLES | _STR_FIELDS
) == _KNOWN_KEYS
