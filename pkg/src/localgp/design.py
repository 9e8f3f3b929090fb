"""Pointwise local approximate GP prediction.

Nearest-neighbor and greedy variance-reduction local designs around a query
point, optional local lengthscale estimation with a second design pass, and
an embarrassingly parallel surface predictor. The greedy search runs on an
incremental Cholesky state so one selection step costs O((m + t) j) for m
candidates and t targets instead of a fresh cubic factorization.
"""

import math
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.spatial.distance import pdist
from threadpoolctl import threadpool_limits

from .gp import (
    GPModel,
    Hyperparams,
    _as_design,
    build_gp,
    cross_corr,
    mle_lengthscales,
    predict_point,
)

# Candidates whose leave-in variance falls at or below this are duplicates of
# existing design rows for all practical purposes.
V_TOL = 1e-12


class CandidateRejected(RuntimeError):
    """The candidate is numerically indistinguishable from a design row."""


@dataclass(frozen=True)
class SearchConfig:
    """Local-design search settings.

    Parameters
    ----------
    n0, n : int
        Seed size and final design size, 1 <= n0 <= n. n == n0 keeps the
        seed untouched.
    candidate_limit : int, optional
        How many nearest rows are searched; min(N, 1000) when omitted.
    method : {"alc", "nn"}
        Greedy variance-reduction search, or plain nearest neighbors.
    local_mle : bool
        Fit lengthscales on the finished local subset.
    second_stage : bool
        After the local fit, redesign from the seed under the fitted
        lengthscales and fit once more.
    kernel_mode : {"separable", "isotropic"}
        Per-dimension lengthscales, or a single shared one.
    """

    n0: int = 6
    n: int = 50
    candidate_limit: int | None = None
    method: str = "alc"
    local_mle: bool = True
    second_stage: bool = False
    kernel_mode: str = "separable"

    def __post_init__(self):
        if self.method not in ("nn", "alc"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.kernel_mode not in ("separable", "isotropic"):
            raise ValueError(f"unknown kernel_mode {self.kernel_mode!r}")
        if not 1 <= self.n0 <= self.n:
            raise ValueError("need 1 <= n0 <= n")
        if self.candidate_limit is not None and self.candidate_limit < self.n:
            raise ValueError("candidate_limit must cover the final design size")


@dataclass(frozen=True)
class LocalDesign:
    """A fitted local model and the global rows it was built from.

    center is the query point (or the set of points, for joint designs) the
    design serves; indices are distinct global row indices in selection
    order, seed first; local_hyper is what the model was actually fit with.
    """

    center: np.ndarray
    indices: np.ndarray
    model: GPModel
    local_hyper: Hyperparams


def _smallest(d2, n):
    """Indices of the n smallest entries, ordered by (value, index)."""
    total = d2.size
    if n >= total:
        return np.lexsort((np.arange(total), d2))[:n]
    part = np.argpartition(d2, n - 1)[:n]
    tau = d2[part].max()
    pool = np.flatnonzero(d2 <= tau)
    pool = pool[np.lexsort((pool, d2[pool]))]
    return pool[:n]


def nn_design(X, x, n):
    """Indices of the n rows of X nearest to x, ties by lower row index."""
    X = _as_design(X)
    x = np.asarray(x, dtype=float).reshape(-1)
    if not 1 <= n <= X.shape[0]:
        raise ValueError(f"requested {n} neighbors from {X.shape[0]} rows")
    diff = X - x[None, :]
    return _smallest((diff * diff).sum(axis=1), n)


def alc_reduction(model, x, candidate):
    """Drop in predictive variance at x from adding candidate to the design.

    Works on the correlation scale: the profiled amplitude multiplies every
    candidate identically, so it cancels in any argmax. Nonnegative up to
    roundoff; a candidate equal to x itself recovers the full current
    variance at x. Raises CandidateRejected when the candidate's leave-in
    variance is at or below V_TOL.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    candidate = np.asarray(candidate, dtype=float).reshape(1, -1)
    kc = cross_corr(candidate, model.X, model.hyper)[0]
    uc = linalg.solve_triangular(model.chol, kc, lower=True)
    v = (1.0 + model.hyper.nugget) - float(uc @ uc)
    if v <= V_TOL:
        raise CandidateRejected(f"leave-in variance {v:.3g} at or below {V_TOL:g}")
    kx = cross_corr(x, model.X, model.hyper)[0]
    ux = linalg.solve_triangular(model.chol, kx, lower=True)
    c = float(cross_corr(candidate, x, model.hyper)[0, 0])
    s = float(uc @ ux)
    return (c - s) ** 2 / v


# ==== incremental greedy engine =============================================


class _Greedy:
    """Growing-design state for greedy variance-reduction search.

    Maintains the lower Cholesky factor of the member correlation matrix
    alongside whitened cross-correlations against all m candidates (V) and
    all t target points (Wx), the candidate-target projection S = V^T Wx,
    and each candidate's leave-in variance. cand_idx must be ordered so its
    first seed_size entries are the seed rows.

    track_scores=False drops the S and C bookkeeping, which only the
    exhaustive per-candidate scan reads; the optimize-and-snap loop skips
    that O(m t) work per step.
    """

    def __init__(self, X, Y, W, cand_idx, n, hyper, seed_size,
                 track_scores=True):
        cand_idx = np.asarray(cand_idx, dtype=np.intp)
        self.cand_idx = cand_idx
        self.Xc = X[cand_idx]
        self.yc = Y[cand_idx]
        self.W = W
        m = cand_idx.size
        t = W.shape[0]
        seed = build_gp(self.Xc[:seed_size], self.yc[:seed_size], hyper)
        self.hyper = seed.hyper  # nugget may have been escalated
        eta = self.hyper.nugget
        j0 = seed_size
        self.L = np.zeros((n, n))
        self.z = np.zeros(n)
        self.L[:j0, :j0] = seed.chol
        self.z[:j0] = seed.zsolve
        Kmc = cross_corr(self.Xc[:j0], self.Xc, self.hyper)
        # each seed row meets itself among the candidates, by row index
        Kmc[np.arange(j0), np.arange(j0)] += eta
        self.V = np.zeros((n, m))
        self.V[:j0] = linalg.solve_triangular(seed.chol, Kmc, lower=True)
        self.Wx = np.zeros((n, t))
        self.Wx[:j0] = linalg.solve_triangular(
            seed.chol, cross_corr(self.Xc[:j0], W, self.hyper), lower=True)
        self.track_scores = track_scores
        if track_scores:
            self.C = cross_corr(self.Xc, W, self.hyper)
            self.S = self.V[:j0].T @ self.Wx[:j0]
        self.vcand = (1.0 + eta) - (self.V[:j0] ** 2).sum(axis=0)
        self._aw = None  # per-size cache for criterion_and_grad
        self.used = np.zeros(m, dtype=bool)
        self.used[:j0] = True
        self.members = list(range(j0))
        self.j = j0

    @property
    def member_indices(self):
        return self.cand_idx[np.asarray(self.members, dtype=np.intp)]

    def scores(self):
        """Per-candidate mean variance reduction over the targets."""
        if not self.track_scores:
            raise RuntimeError("engine built with track_scores=False")
        num = ((self.C - self.S) ** 2).mean(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            sc = num / self.vcand
        sc[self.used | (self.vcand <= V_TOL)] = -np.inf
        return sc

    def best(self):
        """Top-scoring unused candidate position, ties by lower global index."""
        sc = self.scores()
        top = sc.max()
        if not np.isfinite(top):
            return None
        tied = np.flatnonzero(sc == top)
        return int(tied[np.argmin(self.cand_idx[tied])])

    def append(self, pos):
        """Grow every cached quantity by the candidate at position pos."""
        j = self.j
        piv2 = self.vcand[pos]
        if piv2 <= V_TOL:
            raise CandidateRejected(
                f"leave-in variance {piv2:.3g} at or below {V_TOL:g}")
        piv = math.sqrt(piv2)
        mt = self.V[:j, pos].copy()
        self.L[j, :j] = mt
        self.L[j, j] = piv
        self.z[j] = (self.yc[pos] - mt @ self.z[:j]) / piv
        row = cross_corr(self.Xc[pos:pos + 1], self.Xc, self.hyper)[0]
        row[pos] += self.hyper.nugget  # new member meets itself by row index
        self.V[j] = (row - mt @ self.V[:j]) / piv
        cW = (self.C[pos] if self.track_scores
              else cross_corr(self.Xc[pos:pos + 1], self.W, self.hyper)[0])
        self.Wx[j] = (cW - mt @ self.Wx[:j]) / piv
        if self.track_scores:
            self.S += np.outer(self.V[j], self.Wx[j])
        self.vcand -= self.V[j] ** 2
        self.used[pos] = True
        self.members.append(pos)
        self.j = j + 1
        self._aw = None

    def criterion_and_grad(self, x, want_grad=True):
        """Mean variance reduction over the targets for a free point x.

        Returns (value, gradient); the gradient is None when not requested.
        Unlike candidate scoring this evaluates anywhere in the input space,
        which is what the continuous optimizer needs. The re-whitened
        target block L^{-T} Wx only changes when a member is appended, so
        it is cached across the many evaluations of one continuous search.
        """
        j = self.j
        if want_grad and self._aw is None:
            self._aw = linalg.solve_triangular(
                self.L[:j, :j].T, self.Wx[:j], lower=False)
        return _joint_criterion(x, self.Xc[self.members], self.L[:j, :j],
                                self.Wx[:j], self.W, self.hyper, want_grad,
                                Aw=self._aw)


def _joint_criterion(x, Xm, L, Wx, W, hyper, want_grad=True, Aw=None):
    """Mean variance reduction over W from adding a free point x.

    Xm holds the current member coordinates (j, p), L their lower Cholesky
    factor, and Wx the whitened member-target cross-correlations
    L^{-1} K(Xm, W) of shape (j, t). Aw, if given, must equal L^{-T} Wx;
    passing it saves the solve when many points are scored against one
    design. Returns (value, gradient or None).
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    k = cross_corr(x, Xm, hyper)[0]
    u = linalg.solve_triangular(L, k, lower=True)
    v = (1.0 + hyper.nugget) - float(u @ u)
    if v <= V_TOL:
        raise CandidateRejected(f"leave-in variance {v:.3g} at or below {V_TOL:g}")
    c = cross_corr(x, W, hyper)[0]
    s = u @ Wx
    diff = c - s
    msq = float(diff @ diff) / diff.size
    val = msq / v
    if not want_grad:
        return val, None
    theta = hyper.expand(x.shape[1])
    dk = k[:, None] * (-2.0 * (x - Xm) / theta[None, :])  # (j, p)
    dc = c[:, None] * (-2.0 * (x - W) / theta[None, :])  # (t, p)
    alpha_x = linalg.solve_triangular(L.T, u, lower=False)
    if Aw is None:
        Aw = linalg.solve_triangular(L.T, Wx, lower=False)
    ds = dk.T @ Aw  # (p, t)
    dv = -2.0 * (dk.T @ alpha_x)  # (p,)
    grad = (2.0 / v) * ((dc - ds.T) * diff[:, None]).mean(axis=0) \
        - (dv / v ** 2) * msq
    return val, grad


# ==== public search operations ==============================================


def _default_hyper(X, anchor, kernel_mode, n):
    """Unit separable rates, or the anchor subset's mean squared spacing."""
    if kernel_mode == "separable":
        return Hyperparams(np.ones(X.shape[1]))
    sub = X[nn_design(X, anchor, min(n, X.shape[0]))]
    d2 = pdist(sub, "sqeuclidean") if sub.shape[0] > 1 else np.empty(0)
    scale = float(d2.mean()) if d2.size else 1.0
    return Hyperparams([max(scale, 1e-8)])


def _match_mode(hyper, p, kernel_mode):
    """Reshape incoming lengthscales to the requested kernel mode."""
    ls = hyper.lengthscales
    if kernel_mode == "isotropic" and ls.size != 1:
        # collapse in log space, matching the optimizer's parameterization
        return Hyperparams([float(np.exp(np.log(ls).mean()))], hyper.nugget)
    if kernel_mode == "separable" and ls.size == 1 and p > 1:
        return Hyperparams(np.full(p, ls[0]), hyper.nugget)
    return hyper


def greedy_alc_design(X, Y, x, cfg, hyper=None):
    """Build a local design at x by stepwise variance-reduction search.

    Seeds with the cfg.n0 nearest neighbors of x, then repeatedly adds the
    candidate (among the cfg.candidate_limit nearest rows) with the largest
    predictive-variance reduction at x, extending the factorization in
    place. cfg.method "nn" skips the search and keeps the n nearest rows.
    If every remaining candidate is rejected as numerically redundant the
    search stops early with a warning. hyper omitted gives unit lengthscales
    (separable) or the mean squared spacing of the n nearest neighbors
    (isotropic).
    """
    X = _as_design(X)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if Y.size != X.shape[0]:
        raise ValueError(f"{Y.size} responses for {X.shape[0]} design rows")
    x = np.asarray(x, dtype=float).reshape(-1)
    N = X.shape[0]
    climit = min(N, 1000) if cfg.candidate_limit is None else cfg.candidate_limit
    if not cfg.n <= climit <= N:
        raise ValueError(f"need n <= candidate_limit <= N, got "
                         f"{cfg.n} <= {climit} <= {N}")
    if hyper is None:
        hyper = _default_hyper(X, x, cfg.kernel_mode, cfg.n)
    cand = nn_design(X, x, climit)
    if cfg.method == "nn" or cfg.n == cfg.n0:
        idx = cand[:cfg.n]
        model = build_gp(X[idx], Y[idx], hyper)
        return LocalDesign(center=x.copy(), indices=idx, model=model,
                           local_hyper=model.hyper)
    eng = _Greedy(X, Y, x[None, :], cand, cfg.n, hyper, cfg.n0)
    while eng.j < cfg.n:
        pos = eng.best()
        if pos is None:
            warnings.warn(f"all candidates rejected at design size {eng.j}; "
                          "stopping early", RuntimeWarning, stacklevel=2)
            break
        eng.append(pos)
    idx = eng.member_indices
    model = build_gp(X[idx], Y[idx], eng.hyper)
    return LocalDesign(center=x.copy(), indices=idx, model=model,
                       local_hyper=model.hyper)


def local_mle_and_redesign(X, Y, ld, cfg):
    """Fit local lengthscales on ld's subset, optionally redesigning under them.

    The fit starts at ld.local_hyper, collapsed or broadcast to match
    cfg.kernel_mode, with box bounds derived from the subset's own pairwise
    distances. With cfg.second_stage the design is rebuilt from the
    nearest-neighbor seed under the fitted lengthscales and fit once more.
    """
    X = _as_design(X)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    init = _match_mode(ld.local_hyper, ld.model.p, cfg.kernel_mode)
    that = mle_lengthscales(ld.model.X, ld.model.y, init)
    model = build_gp(ld.model.X, ld.model.y, that)
    if not cfg.second_stage:
        return LocalDesign(ld.center, ld.indices, model, model.hyper)
    stage2 = replace(cfg, local_mle=False, second_stage=False)
    ld2 = greedy_alc_design(X, Y, ld.center, stage2, hyper=model.hyper)
    that2 = mle_lengthscales(ld2.model.X, ld2.model.y, model.hyper)
    model2 = build_gp(ld2.model.X, ld2.model.y, that2)
    return LocalDesign(ld.center, ld2.indices, model2, model2.hyper)


# ==== parallel surface prediction ===========================================


@dataclass(frozen=True)
class PredictResult:
    """Per-point predictive summaries plus per-point failure records.

    Failed rows carry NaN mean/scale2 and dof 0; errors lists (row, message)
    pairs. seconds is the wall time of the whole sweep.
    """

    mean: np.ndarray
    scale2: np.ndarray
    dof: np.ndarray
    errors: list
    seconds: float


def _predict_rows(X, Y, X_test, rows, cfg, hyper):
    # BLAS pinned to one thread so serial and parallel sweeps agree bitwise
    with threadpool_limits(limits=1):
        out = []
        for i in rows:
            x = X_test[i]
            try:
                ld = greedy_alc_design(X, Y, x, cfg, hyper)
                if cfg.local_mle:
                    ld = local_mle_and_redesign(X, Y, ld, cfg)
                pr = predict_point(ld.model, x)
                out.append((pr.mean, pr.scale2, pr.dof, None))
            except Exception as err:  # per-point isolation, batch never aborts
                out.append((math.nan, math.nan, 0,
                            f"{type(err).__name__}: {err}"))
        return out


def predict_surface(X, Y, X_test, cfg, hyper=None, threads=1):
    """Independent local-GP predictions at every row of X_test.

    threads > 1 fans rows out over worker processes in contiguous chunks.
    Each query point is processed in isolation either way, so the output is
    identical regardless of the degree of parallelism.
    """
    tic = time.perf_counter()
    X = _as_design(X)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    X_test = _as_design(X_test)
    if X_test.shape[1] != X.shape[1]:
        raise ValueError(f"query dimension {X_test.shape[1]} does not match "
                         f"design dimension {X.shape[1]}")
    nt = X_test.shape[0]
    rows = np.arange(nt)
    chunks = [rows] if threads <= 1 else \
        [c for c in np.array_split(rows, threads * 4) if c.size]
    if len(chunks) == 1:
        parts = [_predict_rows(X, Y, X_test, chunks[0], cfg, hyper)]
    else:
        parts = Parallel(n_jobs=threads)(
            delayed(_predict_rows)(X, Y, X_test, c, cfg, hyper) for c in chunks)
    mean = np.empty(nt)
    scale2 = np.empty(nt)
    dof = np.zeros(nt, dtype=int)
    errors = []
    for i, (mu, s2, d, msg) in enumerate(it for part in parts for it in part):
        mean[i] = mu
        scale2[i] = s2
        dof[i] = d
        if msg is not None:
            errors.append((i, msg))
    return PredictResult(mean=mean, scale2=scale2, dof=dof, errors=errors,
                         seconds=time.perf_counter() - tic)
