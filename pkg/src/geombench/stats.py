"""Regression engine: OLS/GLM, Pearson tests, ridge CV decoding, and
random-intercept mixed models fit by profiled REML.

Only Gaussian identity-link models are supported; every p-value funnels
through the regularized incomplete beta (Student-t tail) or, for mixed
models, the normal tail via erfc.  Linear algebra uses orthogonal
decompositions (QR / symmetric eigendecomposition); no statistics library
is involved.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GeombenchError


class StatsError(GeombenchError):
    pass


class RankDeficientError(StatsError):
    def __init__(self, message: str, column: Optional[str] = None):
        super().__init__(message)
        self.column = column


class ConvergenceError(StatsError):
    pass


# ---------------------------------------------------------------------------
# Special functions


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    MAXIT, EPS, FPMIN = 300, 1e-14, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), relative tolerance ~1e-12."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """Upper-tail P(T > t) for Student-t with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if math.isnan(t):
        return float("nan")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    if t < 0:
        return 1.0 - student_t_sf(-t, df)
    x = df / (df + t * t)
    return 0.5 * betainc_reg(df / 2.0, 0.5, x)


def t_two_sided(t: float, df: float) -> float:
    return min(1.0, 2.0 * student_t_sf(abs(t), df))


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def normal_two_sided(z: float) -> float:
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# OLS / GLM


@dataclass
class RegressionResult:
    names: tuple
    coef: np.ndarray
    se: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    r2: float
    adj_r2: float
    df_resid: int
    loglik: float
    n: int
    confound_mask: Optional[tuple] = None  # True where a column is a confound

    def by_name(self, name: str) -> dict:
        i = self.names.index(name)
        return {
            "coef": float(self.coef[i]),
            "se": float(self.se[i]),
            "t": float(self.t_stats[i]),
            "p": float(self.p_values[i]),
        }

    def as_dict(self) -> dict:
        out = {
            "columns": [
                {
                    "name": self.names[i],
                    "coef": float(self.coef[i]),
                    "se": float(self.se[i]),
                    "t": float(self.t_stats[i]),
                    "p": float(self.p_values[i]),
                    "confound": bool(self.confound_mask[i]) if self.confound_mask else False,
                }
                for i in range(len(self.names))
            ],
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "df_resid": self.df_resid,
            "loglik": self.loglik,
            "n": self.n,
        }
        return out


def _prepare_design(X, y, add_intercept: bool, names):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 1 and X.shape[1] > 1 and np.asarray(y).shape[0] == X.shape[1]:
        X = X.T
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.shape[0]:
        raise StatsError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    names = list(names)
    if add_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
        names = ["intercept"] + names
    return X, y, tuple(names)


def ols_fit(X, y, add_intercept: bool = True, names=None) -> RegressionResult:
    """Least squares via QR with t-tests per coefficient.

    Raises RankDeficientError (naming the offending column) when the design
    is numerically rank deficient, and StatsError when n <= p.
    """
    X1, y, names = _prepare_design(X, y, add_intercept, names)
    n, p = X1.shape
    if n <= p:
        raise StatsError(f"need n > p, got n={n}, p={p}")
    Q, R = np.linalg.qr(X1)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    bad = np.where(diag <= tol)[0]
    if bad.size:
        raise RankDeficientError(
            f"design is rank deficient at column {names[bad[0]]!r}", names[bad[0]]
        )
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - X1 @ coef
    rss = float(resid @ resid)
    df_resid = n - p
    # a numerically perfect fit makes t ratios 0/0; report exact-zero
    # coefficients as null and the rest as infinitely significant
    perfect = rss <= 1e-24 * n * max(1.0, float(y @ y))
    if perfect:
        rss = 0.0
    sigma2 = rss / df_resid
    Rinv = np.linalg.solve(R, np.eye(p))
    xtx_inv = Rinv @ Rinv.T
    se = np.sqrt(np.maximum(np.diag(xtx_inv), 0.0) * sigma2)
    coef_scale = max(1.0, float(np.max(np.abs(coef))))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(se > 0, coef / se, np.inf * np.sign(coef))
    if perfect:
        null = np.abs(coef) <= 1e-10 * coef_scale
        t_stats = np.where(null, 0.0, np.inf * np.sign(coef))
    p_values = np.array([t_two_sided(float(t), df_resid) for t in t_stats])
    if add_intercept:
        tss = float(np.sum((y - y.mean()) ** 2))
    else:
        tss = float(y @ y)
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / df_resid if add_intercept else r2
    sigma2_mle = rss / n
    loglik = (
        -0.5 * n * (math.log(2 * math.pi * sigma2_mle) + 1.0)
        if sigma2_mle > 0
        else float("inf")
    )
    return RegressionResult(
        names, coef, se, t_stats, p_values, r2, adj_r2, df_resid, loglik, n
    )


def glm_fit(
    X,
    y,
    family: str = "gaussian",
    link: str = "identity",
    confounds=None,
    log_y: bool = False,
    names=None,
    confound_names=None,
) -> RegressionResult:
    """Gaussian identity-link GLM: OLS on [confounds | predictors].

    Other families/links are rejected explicitly.  ``log_y`` applies a
    natural log to the response first (requires positive y).
    """
    if family != "gaussian" or link != "identity":
        raise StatsError(
            f"only the gaussian/identity GLM is implemented; got {family}/{link}"
        )
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 1 and np.asarray(y).shape[0] != 1:
        X = X.T
    y = np.asarray(y, dtype=np.float64).ravel()
    if log_y:
        if np.any(y <= 0):
            raise StatsError("log transform needs positive responses")
        y = np.log(y)
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    if confounds is not None and np.size(confounds):
        C = np.atleast_2d(np.asarray(confounds, dtype=np.float64))
        if C.shape[0] != X.shape[0] and C.shape[1] == X.shape[0]:
            C = C.T
        if confound_names is None:
            confound_names = [f"c{j}" for j in range(C.shape[1])]
        design = np.column_stack([C, X])
        all_names = list(confound_names) + list(names)
        mask = [True] * C.shape[1] + [False] * X.shape[1]
    else:
        design = X
        all_names = list(names)
        mask = [False] * X.shape[1]
    result = ols_fit(design, y, add_intercept=True, names=all_names)
    result.confound_mask = tuple([False] + mask)  # intercept first
    return result


# ---------------------------------------------------------------------------
# Correlation


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p: float
    n: int


def pearson(x, y) -> CorrelationResult:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n = x.shape[0]
    if n != y.shape[0]:
        raise StatsError("x and y lengths differ")
    if n < 3:
        raise StatsError("need n >= 3")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(xc @ xc))
    sy = float(np.sqrt(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise StatsError("zero variance input")
    r = float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))
    if abs(r) >= 1.0:
        return CorrelationResult(r, 0.0, n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return CorrelationResult(r, t_two_sided(t, n - 2), n)


# ---------------------------------------------------------------------------
# Cross-validated ridge decoding


@dataclass(frozen=True)
class DecodeResult:
    r2: float
    folds: int
    ridge_lambda: tuple  # per-fold strengths actually used
    seed: int


def fold_assignments(n: int, folds: int, seed: int) -> np.ndarray:
    """Seeded shuffled fold labels, balanced to within one element."""
    rng = random.Random(seed)
    order = list(range(n))
    rng.shuffle(order)
    labels = np.empty(n, dtype=np.int64)
    for pos, idx in enumerate(order):
        labels[idx] = pos % folds
    return labels


def _ridge_prepare(Z: np.ndarray, yc: np.ndarray):
    """Factorization reused across ridge strengths.

    Primal (p <= n): eigendecomposition of Z'Z; dual otherwise (of ZZ').
    Returns predict(λ, Zq) -> centered predictions.
    """
    n, p = Z.shape
    if p <= n:
        s, V = np.linalg.eigh(Z.T @ Z)
        s = np.maximum(s, 0.0)
        Zty = Z.T @ yc

        def predict(lam, Zq):
            coef = V @ ((V.T @ Zty) / (s + lam))
            return Zq @ coef

    else:
        s, U = np.linalg.eigh(Z @ Z.T)
        s = np.maximum(s, 0.0)

        def predict(lam, Zq):
            alpha = U @ ((U.T @ yc) / (s + lam))
            return Zq @ (Z.T @ alpha)

    return predict


_LAMBDA_GRID_EXPONENTS = (-3, -2, -1, 0, 1, 2, 3)


def cv_decode(
    X,
    y,
    folds: int = 20,
    ridge_lambda: Optional[float] = None,
    seed: int = 0,
) -> DecodeResult:
    """Out-of-fold R-squared of ridge regression from features to targets.

    Features are standardized per training fold.  When no ridge strength is
    given, each outer fold picks one from {1e-3..1e3} x n_features by inner
    5-fold cross-validation on its training split (no leakage).  The pooled
    score is 1 - SSE/SST against the grand mean.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if folds < 2:
        raise StatsError("need at least 2 folds")
    if n < folds:
        raise StatsError(f"need n >= folds, got n={n}, folds={folds}")
    if ridge_lambda is not None and ridge_lambda < 0:
        raise StatsError("ridge strength must be >= 0")
    labels = fold_assignments(n, folds, seed)
    sse = 0.0
    used = []
    for k in range(folds):
        test = labels == k
        train = ~test
        mu = X[train].mean(axis=0)
        sd = X[train].std(axis=0)
        sd[sd == 0] = 1.0
        Ztr = (X[train] - mu) / sd
        Zte = (X[test] - mu) / sd
        ybar = y[train].mean()
        ytr = y[train] - ybar
        if ridge_lambda is None:
            lam = _inner_select(Ztr, ytr, seed=seed * 7919 + k, grid_scale=p)
        else:
            lam = float(ridge_lambda)
        predict = _ridge_prepare(Ztr, ytr)
        pred = predict(max(lam, 1e-12), Zte) + ybar
        sse += float(np.sum((y[test] - pred) ** 2))
        used.append(lam)
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise StatsError("constant response")
    return DecodeResult(1.0 - sse / sst, folds, tuple(used), seed)


def _inner_select(Z, yc, seed: int, grid_scale: float, inner_folds: int = 5) -> float:
    n = Z.shape[0]
    labels = fold_assignments(n, inner_folds, seed)
    grid = [grid_scale * 10.0**e for e in _LAMBDA_GRID_EXPONENTS]
    sse = np.zeros(len(grid))
    for k in range(inner_folds):
        test = labels == k
        train = ~test
        predict = _ridge_prepare(Z[train], yc[train])
        for gi, lam in enumerate(grid):
            pred = predict(lam, Z[test])
            sse[gi] += float(np.sum((yc[test] - pred) ** 2))
    return grid[int(np.argmin(sse))]  # ties break to the smaller strength


# ---------------------------------------------------------------------------
# Random-intercept mixed model (profiled REML)


@dataclass
class MixedModelResult:
    names: tuple
    coef: np.ndarray
    se: np.ndarray
    z_stats: np.ndarray
    p_values: np.ndarray
    sigma_b2: float
    sigma_e2: float
    gamma: float
    marginal_r2: float
    conditional_r2: float
    n: int
    n_groups: int
    boundary: bool  # variance ratio pinned at the search floor

    def by_name(self, name: str) -> dict:
        i = self.names.index(name)
        return {
            "coef": float(self.coef[i]),
            "se": float(self.se[i]),
            "z": float(self.z_stats[i]),
            "p": float(self.p_values[i]),
        }


_LOG_GAMMA_LO, _LOG_GAMMA_HI = -12.0, 12.0
_GOLDEN_TOL = 1e-9


def _golden_min(fn, lo: float, hi: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def lmm_fit(X, y, groups, add_intercept: bool = True, names=None) -> MixedModelResult:
    """Random-intercept model y = X b + u_g + e fit by profiled REML.

    The variance ratio gamma = sigma_b^2 / sigma_e^2 is profiled out and
    maximized by golden-section search on log gamma in [-12, 12] (tolerance
    1e-9); fixed effects come from GLS at the optimum with Wald z tests.
    A search pinned at the upper bracket raises ConvergenceError; the lower
    bracket is reported as sigma_b^2 = 0 with ``boundary`` set.
    """
    X1, y, names = _prepare_design(X, y, add_intercept, names)
    n, p = X1.shape
    group_labels = np.asarray(groups)
    if group_labels.shape[0] != n:
        raise StatsError("groups length must match rows")
    uniq, inverse = np.unique(group_labels, return_inverse=True)
    g = uniq.shape[0]
    if g < 2:
        raise StatsError("need at least 2 groups")
    ols = ols_fit(X1, y, add_intercept=False, names=names)  # rank check

    # per-group sufficient statistics
    sizes = np.bincount(inverse)
    xtx = np.zeros((g, p, p))
    xty = np.zeros((g, p))
    sx = np.zeros((g, p))
    sy = np.zeros(g)
    yty = np.zeros(g)
    for i in range(g):
        rows = inverse == i
        Xg, yg = X1[rows], y[rows]
        xtx[i] = Xg.T @ Xg
        xty[i] = Xg.T @ yg
        sx[i] = Xg.sum(axis=0)
        sy[i] = yg.sum()
        yty[i] = yg @ yg

    def gls_parts(gamma: float):
        w = gamma / (1.0 + gamma * sizes)
        A = xtx.sum(axis=0) - np.einsum("g,gi,gj->ij", w, sx, sx)
        b = xty.sum(axis=0) - (w * sy) @ sx
        q = float(yty.sum() - np.sum(w * sy * sy))
        return A, b, q, w

    def criterion(log_gamma: float) -> float:
        gamma = math.exp(log_gamma)
        A, b, q, _ = gls_parts(gamma)
        try:
            coef = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            return float("inf")
        rss = q - 2.0 * float(coef @ b) + float(coef @ A @ coef)
        if rss <= 0:
            rss = 1e-300
        sigma2 = rss / (n - p)
        sign, logdet_a = np.linalg.slogdet(A)
        if sign <= 0:
            return float("inf")
        logdet_w = float(np.sum(np.log1p(gamma * sizes)))
        return (n - p) * math.log(sigma2) + logdet_w + logdet_a

    u_star = _golden_min(criterion, _LOG_GAMMA_LO, _LOG_GAMMA_HI, _GOLDEN_TOL)
    if u_star >= _LOG_GAMMA_HI - 1e-6 and criterion(_LOG_GAMMA_HI) <= criterion(
        _LOG_GAMMA_HI - 0.5
    ):
        raise ConvergenceError(
            "REML search pinned at the upper variance-ratio bracket"
        )
    boundary = u_star <= _LOG_GAMMA_LO + 1e-6
    gamma = math.exp(u_star)
    A, b, q, _ = gls_parts(gamma)
    try:
        coef = np.linalg.solve(A, b)
        cov_unscaled = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise StatsError("singular GLS system at the REML optimum") from None
    rss = q - 2.0 * float(coef @ b) + float(coef @ A @ coef)
    sigma_e2 = rss / (n - p)
    sigma_b2 = 0.0 if boundary else gamma * sigma_e2
    se = np.sqrt(np.maximum(np.diag(cov_unscaled), 0.0) * sigma_e2)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, coef / se, np.inf * np.sign(coef))
    pvals = np.array([normal_two_sided(float(v)) for v in z])
    fitted = X1 @ coef
    var_fixed = float(np.var(fitted, ddof=1)) if n > 1 else 0.0
    denom = var_fixed + sigma_b2 + sigma_e2
    marginal = var_fixed / denom if denom > 0 else 0.0
    conditional = (var_fixed + sigma_b2) / denom if denom > 0 else 0.0
    return MixedModelResult(
        names=names,
        coef=coef,
        se=se,
        z_stats=z,
        p_values=pvals,
        sigma_b2=float(sigma_b2),
        sigma_e2=float(sigma_e2),
        gamma=float(gamma),
        marginal_r2=float(marginal),
        conditional_r2=float(conditional),
        n=n,
        n_groups=int(g),
        boundary=bool(boundary),
    )


def reml_criterion(X, y, groups, gamma: float, add_intercept: bool = True) -> float:
    """Profiled REML objective (-2 log restricted likelihood, up to a
    constant) at a fixed variance ratio; exposed for optimality checks."""
    X1, y, _ = _prepare_design(X, y, add_intercept, None)
    n, p = X1.shape
    _, inverse = np.unique(np.asarray(groups), return_inverse=True)
    g = inverse.max() + 1
    sizes = np.bincount(inverse)
    A = np.zeros((p, p))
    b = np.zeros(p)
    q = 0.0
    w = gamma / (1.0 + gamma * sizes)
    for i in range(g):
        rows = inverse == i
        Xg, yg = X1[rows], y[rows]
        sxg = Xg.sum(axis=0)
        syg = yg.sum()
        A += Xg.T @ Xg - w[i] * np.outer(sxg, sxg)
        b += Xg.T @ yg - w[i] * syg * sxg
        q += float(yg @ yg) - w[i] * syg * syg
    coef = np.linalg.solve(A, b)
    rss = q - 2.0 * float(coef @ b) + float(coef @ A @ coef)
    sigma2 = rss / (n - p)
    logdet_w = float(np.sum(np.log1p(gamma * sizes)))
    sign, logdet_a = np.linalg.slogdet(A)
    return (n - p) * math.log(sigma2) + logdet_w + logdet_a


# ---------------------------------------------------------------------------
# Slope test (single-predictor specialization)


def slope_test(x, y, names=("slope",)) -> RegressionResult:
    """OLS of y on one predictor plus intercept; the slope row is the test."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    return ols_fit(x, y, add_intercept=True, names=list(names))
