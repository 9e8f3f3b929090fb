"""Dense separable-Gaussian GP core.

Correlation construction, profiled marginal likelihood, lengthscale MLE,
pointwise and joint Student-t prediction, and O(N^2) rank-one extension.
All models are zero-mean with the amplitude profiled out, so every variance
here carries the psi_N/N factor rather than an explicit signal variance.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import pdist

DEFAULT_NUGGET = 1e-6
# Cholesky retry policy: raise the nugget tenfold at most this many times.
MAX_NUGGET_RAISES = 3
# Rank-one pivots at or below this are treated as breakdown.
PIVOT_TOL = 1e-12


class NumericalError(RuntimeError):
    """A factorization or incremental update broke down numerically."""


@dataclass(frozen=True)
class Hyperparams:
    """Per-dimension lengthscales plus a fixed nugget.

    Parameters
    ----------
    lengthscales : array_like
        Squared-distance decay rates theta_k, strictly positive. A length-1
        vector is isotropic: the single rate is shared by every input
        dimension it meets.
    nugget : float
        Nonnegative diagonal inflation eta, applied only to design-vs-itself
        correlation diagonals (by row index, never by coordinate equality).
    """

    lengthscales: np.ndarray
    nugget: float = DEFAULT_NUGGET

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("lengthscales must be a nonempty 1d vector")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be finite and strictly positive")
        eta = float(self.nugget)
        if not (math.isfinite(eta) and eta >= 0):
            raise ValueError("nugget must be finite and nonnegative")
        ls.flags.writeable = False
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "nugget", eta)

    def expand(self, p):
        """Lengthscales broadcast to dimension p."""
        ls = self.lengthscales
        if ls.size == p:
            return ls
        if ls.size == 1:
            return np.full(p, ls[0])
        raise ValueError(f"lengthscales of size {ls.size} do not fit dimension {p}")


def _as_design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("design must be a nonempty 2d array")
    if not np.all(np.isfinite(X)):
        raise ValueError("design contains non-finite entries")
    return X


def cross_corr(A, B, hyper):
    """Correlation matrix exp(-sum_k (a_k - b_k)^2 / theta_k), no nugget."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    ls = hyper.expand(A.shape[1])
    As = A / np.sqrt(ls)
    Bs = B / np.sqrt(ls)
    d2 = (As * As).sum(axis=1)[:, None] + (Bs * Bs).sum(axis=1)[None, :] \
        - 2.0 * (As @ Bs.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2)


def corr_matrix(X, hyper):
    """Design correlation K_N + eta I; the nugget lands by row index."""
    K = cross_corr(X, X, hyper)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0 + hyper.nugget)
    return K


def correlation(x, xprime, hyper, same_row=False):
    """Scalar correlation of two points.

    same_row marks the design-diagonal case (the two arguments are the same
    design row, so the nugget applies); coordinate equality never triggers it.
    """
    val = float(cross_corr(np.atleast_2d(x), np.atleast_2d(xprime), hyper)[0, 0])
    if same_row:
        val += hyper.nugget
    return val


class GPModel:
    """Immutable fitted GP: design, responses, Cholesky factor, cached solves.

    Attributes
    ----------
    X, y : ndarray
        Design matrix (n, p) and response vector (n,).
    hyper : Hyperparams
    chol : ndarray
        Lower-triangular L with L L^T = K_n + eta I.
    alpha : ndarray
        K_n^{-1} y.
    psi : float
        y^T K_n^{-1} y.

    Instances never mutate after construction and are safe to share across
    concurrent readers.
    """

    __slots__ = ("X", "y", "hyper", "chol", "zsolve", "alpha", "psi", "n", "p")

    def __init__(self, X, y, hyper, _chol=None):
        X = _as_design(X).copy()
        y = np.asarray(y, dtype=float).reshape(-1).copy()
        if y.size != X.shape[0]:
            raise ValueError(f"{y.size} responses for {X.shape[0]} design rows")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses contain non-finite entries")
        hyper.expand(X.shape[1])  # dimension check up front
        if _chol is None:
            K = corr_matrix(X, hyper)
            try:
                L = linalg.cholesky(K, lower=True)
            except linalg.LinAlgError as err:
                raise NumericalError(
                    "correlation matrix is not positive definite; "
                    "consider a larger nugget"
                ) from err
        else:
            L = _chol
        z = linalg.solve_triangular(L, y, lower=True)
        alpha = linalg.solve_triangular(L.T, z, lower=False)
        for arr in (X, y, L, z, alpha):
            arr.flags.writeable = False
        self.X = X
        self.y = y
        self.hyper = hyper
        self.chol = L
        self.zsolve = z
        self.alpha = alpha
        self.psi = float(z @ z)
        self.n = X.shape[0]
        self.p = X.shape[1]


def build_gp(design, responses, hyper):
    """Fit a GP, escalating the nugget tenfold (warned, max 3 times) on failure.

    A zero nugget is never escalated: degenerate designs with eta = 0 fail
    outright so callers see the breakdown instead of a silently smoothed fit.
    """
    eta = hyper.nugget
    for attempt in range(MAX_NUGGET_RAISES + 1):
        try:
            return GPModel(design, responses, Hyperparams(hyper.lengthscales, eta))
        except NumericalError:
            if eta <= 0 or attempt == MAX_NUGGET_RAISES:
                raise
            eta *= 10.0
            warnings.warn(
                f"Cholesky failed; raising nugget to {eta:g}", RuntimeWarning,
                stacklevel=2,
            )
    raise AssertionError("unreachable")


def log_marginal_likelihood(model):
    """Profiled log marginal likelihood of the responses under the model."""
    n = model.n
    if model.psi <= 0:
        raise NumericalError("zero response quadratic form; likelihood degenerate")
    logdet = 2.0 * float(np.log(np.diag(model.chol)).sum())
    return (
        math.lgamma(n / 2.0)
        - (n / 2.0) * math.log(2.0 * math.pi)
        - 0.5 * logdet
        - (n / 2.0) * math.log(model.psi / 2.0)
    )


@dataclass(frozen=True)
class Prediction:
    """Student-t predictive summary at one point.

    mean and scale2 parameterize the t density; dof equals the training size.
    variance is the actual second moment, +inf when dof <= 2.
    """

    mean: float
    scale2: float
    dof: int

    @property
    def variance(self):
        if self.dof <= 2:
            return math.inf
        return self.scale2 * self.dof / (self.dof - 2.0)


def predict_point(model, x):
    """Student-t prediction at a single point x."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    k = cross_corr(x, model.X, model.hyper)[0]
    w = linalg.solve_triangular(model.chol, k, lower=True)
    mean = float(k @ model.alpha)
    # K(x, x) = 1: prediction points never carry the nugget
    scale2 = max(model.psi / model.n * (1.0 - float(w @ w)), 0.0)
    return Prediction(mean=mean, scale2=scale2, dof=model.n)


def predict_joint(model, W):
    """Joint Student-t prediction over a set W.

    Returns (mean vector, scale matrix, dof). The scale matrix is
    (psi/n) [K(w, w') - k(w)^T K^{-1} k(w')], symmetrized, with its diagonal
    clamped at zero; multiply by dof/(dof-2) for the covariance proper.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    KW = cross_corr(W, model.X, model.hyper)  # |W| x n
    mean = KW @ model.alpha
    V = linalg.solve_triangular(model.chol, KW.T, lower=True)  # n x |W|
    KWW = cross_corr(W, W, model.hyper)
    KWW = 0.5 * (KWW + KWW.T)
    np.fill_diagonal(KWW, 1.0)
    cov = (model.psi / model.n) * (KWW - V.T @ V)
    cov = 0.5 * (cov + cov.T)
    np.fill_diagonal(cov, np.maximum(np.diag(cov), 0.0))
    return mean, cov, model.n


def extend_gp(model, x_new, y_new):
    """Extend a fit by one (x, y) pair via a rank-one Cholesky update.

    Costs O(n^2). On pivot breakdown the extension falls back to a full
    rebuild, which re-raises if the enlarged design is genuinely degenerate.
    """
    x_new = np.asarray(x_new, dtype=float).reshape(-1)
    if x_new.size != model.p:
        raise ValueError(f"point of dimension {x_new.size}, design has {model.p}")
    Xn = np.vstack([model.X, x_new[None, :]])
    yn = np.append(model.y, float(y_new))
    k = cross_corr(x_new[None, :], model.X, model.hyper)[0]
    m = linalg.solve_triangular(model.chol, k, lower=True)
    piv2 = (1.0 + model.hyper.nugget) - float(m @ m)
    if piv2 <= PIVOT_TOL:
        return build_gp(Xn, yn, model.hyper)
    n = model.n
    L = np.zeros((n + 1, n + 1))
    L[:n, :n] = model.chol
    L[n, :n] = m
    L[n, n] = math.sqrt(piv2)
    return GPModel(Xn, yn, model.hyper, _chol=L)


def chol_psd(S, max_tries=8):
    """Lower Cholesky factor of a symmetric near-PSD matrix.

    Retries with escalating diagonal jitter: 1e-10 times the mean diagonal
    entry, then tenfold per attempt, up to max_tries jittered attempts.
    Eight raises let the ladder absorb roundoff left over from unit-scale
    correlation arithmetic, which stays near 1e-15 in absolute terms even
    when the covariance itself has shrunk to 1e-8 or below.
    """
    S = np.asarray(S, dtype=float)
    try:
        return linalg.cholesky(S, lower=True)
    except linalg.LinAlgError:
        pass
    jitter = max(1e-10 * float(np.trace(S)) / max(S.shape[0], 1), 1e-300)
    eye = np.eye(S.shape[0])
    for _ in range(max_tries):
        try:
            return linalg.cholesky(S + jitter * eye, lower=True)
        except linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("covariance factorization failed after jitter escalation")


# ==== lengthscale MLE =======================================================


def loglik_and_gradient(design, responses, hyper):
    """Log marginal likelihood and its gradient in the lengthscales.

    Returns (ll, grad) where grad has one entry per entry of
    hyper.lengthscales: per-dimension derivatives for a full-length vector,
    the summed (isotropic) derivative for a length-1 vector. The nugget term
    contributes nothing to the gradient because eta is fixed.
    """
    X = _as_design(design)
    model = GPModel(X, responses, hyper)
    n, p = model.n, model.p
    ll = log_marginal_likelihood(model)
    Kinv = linalg.cho_solve((model.chol, True), np.eye(n))
    C = corr_matrix(X, hyper)
    np.fill_diagonal(C, 1.0)  # nugget-free correlation for the derivative
    alpha = model.alpha
    iso = hyper.lengthscales.size == 1
    theta = hyper.expand(p)
    dims = [list(range(p))] if iso else [[d] for d in range(p)]
    grad = np.empty(len(dims))
    for g, group in enumerate(dims):
        D2 = np.zeros((n, n))
        for d in group:
            diff = X[:, d, None] - X[None, :, d]
            D2 += diff * diff
        Kdot = C * (D2 / theta[group[0]] ** 2)
        tr = float((Kinv * Kdot).sum())
        quad = float(alpha @ Kdot @ alpha)
        grad[g] = -0.5 * tr + (n / 2.0) * quad / model.psi
    return ll, grad


def default_lengthscale_bounds(X, isotropic=False):
    """Box bounds for the MLE from pairwise squared-distance quantiles.

    lower = 1e-3 x the 5% quantile of positive squared distances,
    upper = 10 x the maximum; per dimension for separable fits, pooled over
    all dimensions for isotropic ones. Rows are thinned deterministically to
    at most 1000 before the quadratic pairwise pass.
    """
    X = _as_design(X)
    n, p = X.shape
    if n > 1000:
        X = X[:: int(np.ceil(n / 1000.0))]
    cols = [slice(None)] if isotropic else [[d] for d in range(p)]
    out = np.empty((len(cols), 2))
    for i, c in enumerate(cols):
        sub = X[:, c] if isinstance(c, list) else X
        d2 = pdist(sub, "sqeuclidean") if sub.shape[0] > 1 else np.empty(0)
        pos = d2[d2 > 0]
        if pos.size == 0:
            out[i] = (1e-8, 1.0)  # constant column; any rate is as good
            continue
        lo = max(1e-3 * float(np.quantile(pos, 0.05)), 1e-12)
        hi = 10.0 * float(pos.max())
        out[i] = (min(lo, hi * 0.5), hi)
    return out


def mle_lengthscales(design, responses, init, bounds=None, max_iter=200,
                     gtol=1e-6, return_info=False):
    """Maximize the log marginal likelihood over lengthscales, nugget fixed.

    Parameters
    ----------
    init : Hyperparams
        Starting point; a length-1 lengthscale vector requests an isotropic
        fit. The returned Hyperparams keeps init's nugget.
    bounds : ndarray (k, 2), optional
        Box bounds in lengthscale units; derived from the design's pairwise
        squared-distance quantiles when omitted.
    max_iter, gtol
        Quasi-Newton (L-BFGS-B) iteration cap and projected-gradient
        tolerance, applied in log-lengthscale space.
    return_info : bool
        Also return a dict with convergence details.

    Non-convergence warns and returns the best iterate; the result never has
    lower likelihood than init (guarded explicitly).
    """
    X = _as_design(design)
    y = np.asarray(responses, dtype=float).reshape(-1)
    k = init.lengthscales.size
    if bounds is None:
        bounds = default_lengthscale_bounds(X, isotropic=(k == 1))
    bounds = np.asarray(bounds, dtype=float).reshape(k, 2)
    if np.any(bounds <= 0) or np.any(bounds[:, 0] > bounds[:, 1]):
        raise ValueError("bounds must be positive with lower <= upper")
    eta = init.nugget
    theta0 = np.clip(init.lengthscales, bounds[:, 0], bounds[:, 1])
    z0 = np.log(theta0)

    def objective(z):
        try:
            ll, grad = loglik_and_gradient(X, y, Hyperparams(np.exp(z), eta))
        except NumericalError:
            # infeasible corner of the box; send the line search back
            return 1e300, np.zeros_like(z)
        return -ll, -grad * np.exp(z)

    f0 = objective(z0)[0]
    res = optimize.minimize(
        objective, z0, jac=True, method="L-BFGS-B",
        bounds=[(math.log(lo), math.log(hi)) for lo, hi in bounds],
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-13},
    )
    converged = bool(res.success)
    # status 2 with an improved objective is the line search running out of
    # float precision at the optimum; only iteration caps and no-progress
    # stops are worth a warning
    stalled = res.status == 2 and res.fun <= f0
    if not converged and not stalled:
        warnings.warn(
            f"lengthscale optimizer stopped early: {res.message}",
            RuntimeWarning, stacklevel=2,
        )
    zhat = res.x if res.fun <= f0 else z0
    out = Hyperparams(np.exp(zhat), eta)
    if return_info:
        return out, {"converged": converged, "neg_loglik": float(min(res.fun, f0)),
                     "iterations": int(res.nit), "message": str(res.message)}
    return out
