"""Global lengthscale estimation from cheap subsamples.

Block Latin hypercube subsampling keeps both short and long pairwise
distances in play, a random-subsample baseline of matched size, bootstrap
aggregation of per-subsample MLE lengthscales, and the input prescaling that
turns those global estimates into a multi-resolution local fit.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .gp import Hyperparams, _as_design, mle_lengthscales


@dataclass(frozen=True)
class SubsampleSpec:
    """Bootstrap subsampling settings.

    m is the number of blocks per dimension; d, when given, is checked
    against the data. mode "blhs" draws block Latin hypercube subsamples,
    "random" draws uniform ones whose size matches the block expectation
    N m^(1-d). The aggregator combines per-repetition lengthscales.
    """

    m: int
    d: int | None = None
    bootstrap_count: int = 30
    aggregator: str = "median"
    seed: int | None = None
    mode: str = "blhs"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.d is not None and self.d < 1:
            raise ValueError("d must be at least 1")
        if self.bootstrap_count < 1:
            raise ValueError("bootstrap_count must be at least 1")
        if self.aggregator not in ("median", "mean"):
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if self.mode not in ("blhs", "random"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class GlobalScale:
    """Aggregated global lengthscales with their bootstrap provenance.

    lengthscales holds one positive rate per input dimension; provenance is
    the (B, p) matrix of per-repetition estimates, NaN rows marking failed
    repetitions.
    """

    lengthscales: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        prov = np.atleast_2d(np.asarray(self.provenance, dtype=float))
        if np.any(~np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be finite and positive")
        if prov.shape[1] != ls.size:
            raise ValueError("provenance width does not match lengthscales")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "provenance", prov)


def _latin_blocks(m, d, rng):
    """Coordinates of m blocks, one per interval level in each dimension."""
    return np.column_stack([rng.permutation(m) for _ in range(d)])


def blhs_subsample(X, m, seed=None, return_blocks=False):
    """Row indices of one block Latin hypercube subsample.

    Each dimension is split into m equal intervals over its observed range
    (half-open, the last closed, boundary rows assigned downward); of the
    m^d resulting blocks, m are chosen so every interval level appears
    exactly once per dimension, and all rows inside chosen blocks are kept.
    The expected size is N m^(1-d). An all-empty draw is retried once, then
    raised. return_blocks additionally yields the (m, d) chosen interval
    ids.
    """
    X = _as_design(X)
    N, d = X.shape
    if m < 1:
        raise ValueError("m must be at least 1")
    if m == 1:
        idx = np.arange(N)
        return (idx, np.zeros((1, d), dtype=np.intp)) if return_blocks else idx
    if d * math.log(m) >= 62 * math.log(2):
        raise ValueError(f"m^d overflows the block index space (m={m}, d={d})")
    rng = np.random.default_rng(seed)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span[span == 0] = 1.0  # constant column: everything sits in interval 0
    cell = np.minimum(((X - lo) / span * m).astype(np.intp), m - 1)
    weights = m ** np.arange(d, dtype=np.int64)
    codes = cell @ weights
    for attempt in range(2):
        blocks = _latin_blocks(m, d, rng)
        keep = np.isin(codes, blocks @ weights)
        idx = np.flatnonzero(keep)
        if idx.size:
            return (idx, blocks) if return_blocks else idx
    raise ValueError(
        f"all {m} chosen blocks were empty twice in a row; m={m} is too "
        f"large for {N} rows in {d} dimensions")


def random_subsample(X, size, seed=None):
    """size distinct row indices drawn uniformly, in draw order."""
    X = _as_design(X)
    N = X.shape[0]
    if not 1 <= size <= N:
        raise ValueError(f"need 1 <= size <= {N}, got {size}")
    rng = np.random.default_rng(seed)
    return rng.choice(N, size=size, replace=False)


def choose_m(N, d, target=1000):
    """Smallest block count whose expected subsample size is at most target."""
    if N < 1 or target < 1:
        raise ValueError("N and target must be positive")
    if d <= 1:
        return 1  # blocks never shrink a 1d subsample
    m = 1
    while N * m ** (1 - d) > target:
        m += 1
    return m


def _init_scales(X):
    """Median positive squared spacing per dimension, a safe MLE start."""
    n = X.shape[0]
    if n > 1000:
        X = X[:: int(np.ceil(n / 1000.0))]
    out = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        d2 = pdist(X[:, j:j + 1], "sqeuclidean") if X.shape[0] > 1 else np.empty(0)
        pos = d2[d2 > 0]
        out[j] = float(np.median(pos)) if pos.size else 1.0
    return out


def bootstrap_lengthscales(X, Y, spec):
    """Aggregate separable lengthscales over repeated subsample fits.

    Draws spec.bootstrap_count subsamples (block Latin or size-matched
    random), fits per-dimension lengthscales by MLE on each, and aggregates
    per dimension with the configured aggregator. Failed repetitions warn
    and leave a NaN provenance row; more than half failing is an error.
    """
    X = _as_design(X)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if Y.size != X.shape[0]:
        raise ValueError(f"{Y.size} responses for {X.shape[0]} design rows")
    N, p = X.shape
    if spec.d is not None and spec.d != p:
        raise ValueError(f"spec.d={spec.d} but the data has {p} dimensions")
    B = spec.bootstrap_count
    size = max(1, round(N * spec.m ** (1 - p)))
    children = np.random.SeedSequence(spec.seed).spawn(B)
    prov = np.full((B, p), np.nan)
    for b, child in enumerate(children):
        try:
            if spec.mode == "blhs":
                idx = blhs_subsample(X, spec.m, seed=child)
            else:
                idx = random_subsample(X, size, seed=child)
            init = Hyperparams(np.clip(_init_scales(X[idx]), 1e-8, None))
            that = mle_lengthscales(X[idx], Y[idx], init)
            prov[b] = that.lengthscales
        except Exception as err:
            warnings.warn(f"bootstrap repetition {b} failed: {err}",
                          RuntimeWarning, stacklevel=2)
    good = np.flatnonzero(~np.isnan(prov[:, 0]))
    if good.size <= B / 2:
        raise RuntimeError(
            f"only {good.size} of {B} bootstrap repetitions succeeded")
    agg = np.nanmedian if spec.aggregator == "median" else np.nanmean
    return GlobalScale(lengthscales=agg(prov, axis=0), provenance=prov)


def prescale(X, scale):
    """Divide column j by the square root of global lengthscale j.

    scale may be a GlobalScale or a bare vector (or scalar) of positive
    rates. Applied identically to training and prediction inputs, unit
    lengthscales in the scaled space reproduce the global fit exactly.
    """
    X = _as_design(X)
    ls = scale.lengthscales if isinstance(scale, GlobalScale) else \
        np.atleast_1d(np.asarray(scale, dtype=float))
    if np.any(~np.isfinite(ls)) or np.any(ls <= 0):
        raise ValueError("scale must be finite and positive")
    if ls.size == 1:
        ls = np.full(X.shape[1], ls[0])
    if ls.size != X.shape[1]:
        raise ValueError(f"{ls.size} scales for {X.shape[1]} dimensions")
    return X / np.sqrt(ls)
