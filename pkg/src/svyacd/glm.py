"""Weighted GLM fitting: gaussian-identity (WLS), binomial-logit and beta-logit.

All solvers work on a design with an intercept prepended to the covariate
matrix, use QR factorizations for the linear algebra, and share the same
convergence rule: relative coefficient change and weighted-mean score both
below ``tol``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import digamma, expit, gammaln, logit, polygamma

GAUSSIAN = "gaussian-identity"
BINOMIAL = "binomial-logit"
BETA = "beta-logit"

TOL = 1e-8
MAX_ITER = 100
SEPARATION_BOUND = 30.0
BETA_EPS = 1e-6
# log-precision ceiling for near-degenerate beta responses
MAX_LOG_PRECISION = np.log(1e10)


class GlmError(ValueError):
    pass


class RankDeficientError(GlmError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(self.columns)}")


class SeparationError(GlmError):
    def __init__(self, coef):
        self.coef = np.asarray(coef)
        super().__init__(
            "complete or quasi-complete separation: logistic coefficients diverged "
            f"(|coef| > {SEPARATION_BOUND:g}) without the score reaching tolerance"
        )


class ConvergenceError(GlmError):
    def __init__(self, msg, coef):
        self.coef = np.asarray(coef)
        super().__init__(msg)


class BoundaryResponseError(GlmError):
    pass


@dataclass(frozen=True)
class GlmFit:
    """Fitted weighted GLM. ``coef`` has the intercept first."""

    family: str
    coef: np.ndarray
    converged: bool
    iterations: int
    dispersion_or_precision: float
    fit_weights: np.ndarray
    names: tuple = ()

    @property
    def n_covariates(self) -> int:
        return self.coef.shape[0] - 1

    def linear_predictor(self, newx) -> np.ndarray:
        return add_intercept(newx, self.n_covariates) @ self.coef

    def predict(self, newx) -> np.ndarray:
        return predict_mean(self, newx)


def add_intercept(x, p: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if p != 0 else x.reshape(-1, 0)
    if p is not None and x.shape[1] != p:
        raise GlmError(f"expected {p} covariate columns, got {x.shape[1]}")
    return np.column_stack([np.ones(x.shape[0]), x])


def _names(x: np.ndarray, names: Optional[Sequence[str]]) -> tuple:
    if names is None:
        names = [f"x{j + 1}" for j in range(x.shape[1] - 1)]
    return ("(Intercept)", *names)


def _check_weights(w, n) -> np.ndarray:
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise GlmError("weights must have one entry per row")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise GlmError("weights must be finite and non-negative")
    if not np.any(w > 0):
        raise GlmError("all weights are zero")
    return w


def check_rank(X: np.ndarray, w: np.ndarray, names: Sequence[str]) -> None:
    """Raise RankDeficientError naming columns that lie in the span of earlier ones."""
    Xw = X[w > 0] * np.sqrt(w[w > 0])[:, None]
    _, R, _ = linalg.qr(Xw, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = max(Xw.shape) * np.finfo(float).eps * (d[0] if d.size else 0.0) * 10
    rank = int(np.sum(d > tol))
    if rank == X.shape[1] and Xw.shape[0] >= X.shape[1]:
        return
    # greedy pass in column order so the intercept is never the one blamed
    kept, bad = [], []
    for j in range(X.shape[1]):
        cand = Xw[:, kept + [j]]
        s = np.linalg.svd(cand, compute_uv=False)
        if s[-1] <= max(cand.shape) * np.finfo(float).eps * s[0] * 10:
            bad.append(names[j])
        else:
            kept.append(j)
    raise RankDeficientError(bad or list(names[rank:]))


def _wls_solve(X, z, w):
    sw = np.sqrt(w)
    Q, R = np.linalg.qr(X * sw[:, None])
    return linalg.solve_triangular(R, Q.T @ (z * sw))


def fit_wls(x, y, w=None, names=None) -> GlmFit:
    """Weighted least squares of ``y`` on ``[1, x]``."""
    y = np.asarray(y, dtype=float)
    X = add_intercept(x)
    w = _check_weights(w, y.shape[0])
    names = _names(X, names)
    check_rank(X, w, names)
    coef = _wls_solve(X, y, w)
    resid = y - X @ coef
    df = w.sum() - X.shape[1]
    dispersion = float(np.sum(w * resid**2) / df) if df > 0 else float("nan")
    return GlmFit(GAUSSIAN, coef, True, 1, dispersion, w, names)


def gaussian_score(X, y, w, coef) -> np.ndarray:
    """Per-row WLS score contributions, shape (n, k)."""
    return (w * (y - X @ coef))[:, None] * X


def logistic_score(X, t, w, coef) -> np.ndarray:
    """Per-row weighted logistic score contributions, shape (n, k)."""
    return (w * (t - expit(X @ coef)))[:, None] * X


def _logistic_loglik(X, t, w, coef):
    eta = X @ coef
    return float(np.sum(w * (t * eta - np.logaddexp(0.0, eta))))


def fit_weighted_logistic(x, t, w=None, names=None, tol=TOL, max_iter=MAX_ITER) -> GlmFit:
    """Weighted logistic regression by IRLS with step-halving.

    Raises SeparationError when coefficients run past the separation bound
    before the score equations are solved.
    """
    t = np.asarray(t, dtype=float)
    X = add_intercept(x)
    w = _check_weights(w, t.shape[0])
    names = _names(X, names)
    if not np.all(np.isin(t, (0.0, 1.0))):
        raise GlmError("logistic response must be binary")
    w1, w0 = w[t == 1].sum(), w[t == 0].sum()
    if w1 <= 0 or w0 <= 0:
        raise GlmError("both response classes need positive total weight")
    check_rank(X, w, names)
    wsum = w.sum()

    coef = np.zeros(X.shape[1])
    coef[0] = np.log(w1 / w0)
    ll = _logistic_loglik(X, t, w, coef)
    for it in range(1, max_iter + 1):
        p = expit(X @ coef)
        v = w * p * (1 - p)
        if not np.any(v > 0):
            raise SeparationError(coef)
        try:
            step = _wls_solve(X, (t - p) / np.where(v > 0, p * (1 - p), 1.0), v)
        except (np.linalg.LinAlgError, ValueError):
            raise SeparationError(coef) from None
        scale = 1.0
        new = coef + step
        new_ll = _logistic_loglik(X, t, w, new)
        while new_ll < ll - 1e-12 * abs(ll) and scale > 1e-10:
            scale /= 2
            new = coef + scale * step
            new_ll = _logistic_loglik(X, t, w, new)
        change = np.max(np.abs(new - coef)) / max(1.0, np.max(np.abs(new)))
        coef, ll = new, new_ll
        score = np.max(np.abs(logistic_score(X, t, w, coef).sum(axis=0))) / wsum
        if change < tol and score < tol:
            return GlmFit(BINOMIAL, coef, True, it, 1.0, w, names)
        if np.max(np.abs(coef)) > SEPARATION_BOUND:
            raise SeparationError(coef)
    raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations", coef)


# -- beta regression -------------------------------------------------------

def _beta_parts(X, u, coef, log_phi):
    mu = expit(X @ coef)
    phi = np.exp(log_phi)
    ystar = logit(u)
    mustar = digamma(mu * phi) - digamma((1 - mu) * phi)
    return mu, phi, ystar, mustar


def beta_loglik(X, u, w, coef, log_phi) -> float:
    mu = expit(X @ coef)
    phi = np.exp(log_phi)
    ll = (gammaln(phi) - gammaln(mu * phi) - gammaln((1 - mu) * phi)
          + (mu * phi - 1) * np.log(u) + ((1 - mu) * phi - 1) * np.log1p(-u))
    return float(np.sum(w * ll))


def beta_score(X, u, w, coef, log_phi) -> np.ndarray:
    """Per-row beta score contributions w.r.t. (coef, log precision), shape (n, k+1)."""
    mu, phi, ystar, mustar = _beta_parts(X, u, coef, log_phi)
    s_mu = phi * (ystar - mustar) * mu * (1 - mu)
    s_phi = phi * (mu * (ystar - mustar) + np.log1p(-u) - digamma((1 - mu) * phi) + digamma(phi))
    return np.column_stack([(w * s_mu)[:, None] * X, w * s_phi])


def _beta_hessian(X, u, w, coef, log_phi):
    mu, phi, ystar, mustar = _beta_parts(X, u, coef, log_phi)
    t1, t0, tp = polygamma(1, mu * phi), polygamma(1, (1 - mu) * phi), polygamma(1, phi)
    m1 = mu * (1 - mu)
    l_mu = phi * (ystar - mustar)
    l_mumu = -phi**2 * (t1 + t0)
    l_phi = mu * (ystar - mustar) + np.log1p(-u) - digamma((1 - mu) * phi) + digamma(phi)
    l_phiphi = tp - mu**2 * t1 - (1 - mu) ** 2 * t0
    l_muphi = (ystar - mustar) - phi * (mu * t1 - (1 - mu) * t0)
    h_ee = l_mumu * m1**2 + l_mu * m1 * (1 - 2 * mu)
    h_zz = l_phiphi * phi**2 + l_phi * phi
    h_ez = l_muphi * m1 * phi
    k = X.shape[1]
    H = np.empty((k + 1, k + 1))
    H[:k, :k] = (X * (w * h_ee)[:, None]).T @ X
    H[:k, k] = H[k, :k] = X.T @ (w * h_ez)
    H[k, k] = np.sum(w * h_zz)
    # expected information, used when the observed Hessian is not negative definite
    F = np.empty_like(H)
    F[:k, :k] = (X * (w * phi**2 * (t1 + t0) * m1**2)[:, None]).T @ X
    F[:k, k] = F[k, :k] = X.T @ (w * phi**2 * (mu * t1 - (1 - mu) * t0) * m1)
    F[k, k] = np.sum(w * phi**2 * (mu**2 * t1 + (1 - mu) ** 2 * t0 - tp))
    return H, F


def fit_beta_glm(x, u, w=None, names=None, tol=TOL, max_iter=MAX_ITER) -> GlmFit:
    """Beta regression with logit mean link and constant precision.

    Maximizes the weighted beta log-likelihood in (coef, log precision) by
    Newton steps with step-halving. Responses must be strictly inside (0, 1);
    clamp to ``[BETA_EPS, 1 - BETA_EPS]`` first. When a logit-linear mean
    reproduces every response exactly the precision is unbounded and the fit
    is returned with infinite precision.
    """
    u = np.asarray(u, dtype=float)
    X = add_intercept(x)
    w = _check_weights(w, u.shape[0])
    names = _names(X, names)
    if np.any(u <= 0) or np.any(u >= 1):
        raise BoundaryResponseError(
            f"beta responses must lie strictly in (0, 1); clamp to [{BETA_EPS:g}, {1 - BETA_EPS:g}] first"
        )
    check_rank(X, w, names)
    wsum = w.sum()
    k = X.shape[1]

    ystar = logit(u)
    coef = _wls_solve(X, ystar, w)
    resid = ystar - X @ coef
    if np.max(np.abs(resid[w > 0])) <= 1e-10 * (1 + np.max(np.abs(ystar))):
        return GlmFit(BETA, coef, True, 0, float("inf"), w, names)

    mu = expit(X @ coef)
    df = max(wsum - k, 1.0)
    sigma2 = np.sum(w * resid**2) / df * (mu * (1 - mu)) ** 2
    phi0 = np.sum(w * mu * (1 - mu) / sigma2) / wsum - 1
    theta = np.append(coef, np.log(max(phi0, 1.0)))
    capped = False
    ll = beta_loglik(X, u, w, theta[:k], theta[k])
    for it in range(1, max_iter + 1):
        g = beta_score(X, u, w, theta[:k], theta[k]).sum(axis=0)
        H, F = _beta_hessian(X, u, w, theta[:k], theta[k])
        if capped:
            g, H, F = g[:k], H[:k, :k], F[:k, :k]
        try:
            np.linalg.cholesky(-H)
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(F, g)
        if capped:
            step = np.append(step, 0.0)
        scale, new = 1.0, theta + step
        new[k] = min(new[k], MAX_LOG_PRECISION)
        new_ll = beta_loglik(X, u, w, new[:k], new[k])
        while (not np.isfinite(new_ll) or new_ll < ll - 1e-12 * abs(ll)) and scale > 1e-10:
            scale /= 2
            new = theta + scale * step
            new[k] = min(new[k], MAX_LOG_PRECISION)
            new_ll = beta_loglik(X, u, w, new[:k], new[k])
        if new[k] >= MAX_LOG_PRECISION:
            capped = True
        change = np.max(np.abs(new - theta)) / max(1.0, np.max(np.abs(new)))
        theta, ll = new, new_ll
        score = beta_score(X, u, w, theta[:k], theta[k]).sum(axis=0)
        if capped:
            score = score[:k]
        if change < tol and np.max(np.abs(score)) / wsum < tol:
            return GlmFit(BETA, theta[:k], True, it, float(np.exp(theta[k])), w, names)
    raise ConvergenceError(f"beta regression did not converge in {max_iter} iterations", theta)


def predict_mean(fit: GlmFit, newx) -> np.ndarray:
    """Response-scale predictions: x'coef for identity, expit(x'coef) for logit links."""
    eta = fit.linear_predictor(newx)
    if fit.family == GAUSSIAN:
        return eta
    return expit(eta)
