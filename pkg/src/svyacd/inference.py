"""M-estimation inference: stacked estimating equations and sandwich variances.

Scaling convention: psi_bar(theta) = n^-1 sum_i psi_i(theta),
M = -d psi_bar / d theta, phi_i = M^-1 psi_i, and the IID covariance is
n^-2 sum_i phi_i phi_i'. The stratified-cluster version replaces the
outer-product sum by the between-PSU variation of PSU totals of phi
within strata, scaled by J_k / (J_k - 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from .estimators import (
    PI_BAR_METHODS,
    REGRESSIONS,
    AcdEstimate,
    Analysis,
    mean_parts,
    point_estimate,
    regression_design,
    regression_weights,
    required_blocks,
    trim_bounds,
)

IID = "iid"
STRATIFIED = "stratified"
LONELY_POLICIES = ("error", "centerAtGrandMean", "collapseStrata")
COND_LIMIT = 1e12


class InferenceError(ValueError):
    pass


@dataclass
class EstimatingSystem:
    """theta-hat, the per-row estimating function and component labels.

    ``psi(theta)`` returns an (n, m) array whose column sums vanish at the
    fitted ``theta``. With ``n_absent`` > 0 the unit of analysis is the
    population: ``n_absent`` unselected units each contribute the vector
    ``psi_absent(theta)`` and averages run over n + n_absent units.
    """

    theta: np.ndarray
    psi: Callable[[np.ndarray], np.ndarray]
    labels: list
    blocks: dict
    n_absent: int = 0
    psi_absent: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def m(self) -> int:
        return self.theta.shape[0]

    def psi_sum(self, theta=None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        total = self.psi(theta).sum(axis=0)
        if self.n_absent:
            total = total + self.n_absent * self.psi_absent(theta)
        return total

    def n_units(self, n: int) -> int:
        return n + self.n_absent

    def psi_bar(self, theta=None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        rows = self.psi(theta)
        return self.psi_sum(theta) / self.n_units(rows.shape[0])

    def block_of(self, j: int) -> str:
        for name, sl in self.blocks.items():
            if sl.start <= j < sl.stop:
                return name
        return "?"


@dataclass
class SurveyDesign:
    """Stratum and PSU membership for every row."""

    stratum: np.ndarray
    psu: np.ndarray

    def __post_init__(self):
        self.stratum = np.asarray(self.stratum)
        self.psu = np.asarray(self.psu)
        if self.stratum.shape != self.psu.shape or self.stratum.ndim != 1:
            raise InferenceError("stratum and psu labels must be 1-D and aligned")

    @classmethod
    def from_dataset(cls, data) -> "SurveyDesign":
        if data.stratum_id is None:
            raise InferenceError("dataset has no stratum labels")
        psu = data.psu_id if data.psu_id is not None else np.arange(data.n)
        return cls(data.stratum_id, psu)

    def groups(self):
        """Dict stratum -> list of row-index arrays, one per PSU."""
        out = {}
        for k in np.unique(self.stratum):
            rows = np.flatnonzero(self.stratum == k)
            psus = self.psu[rows]
            out[k] = [rows[psus == j] for j in np.unique(psus)]
        return out


@dataclass
class VarianceEstimate:
    vcov: np.ndarray
    mode: str
    labels: Optional[list] = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0, None))


# -- stacking -----------------------------------------------------------------

def stack_system(analysis: Analysis, method: str, estimate: Optional[AcdEstimate] = None) -> EstimatingSystem:
    """Stack nuisance-model scores with the estimand equations for ``method``.

    Layout: [nuisance blocks..., mu(1), mu(0), ACD] for group-mean methods,
    [nuisance blocks..., regression coefficients, ACD] for regression ones.
    """
    estimate = estimate or point_estimate(method, analysis)
    fitted = analysis.params()
    names = required_blocks(method, analysis)
    blocks, pieces, labels, start = {}, [], [], 0
    for name in names:
        v = np.asarray(fitted[name], dtype=float)
        blocks[name] = slice(start, start + v.size)
        pieces.append(v)
        labels += [f"{name}[{i}]" for i in range(v.size)]
        start += v.size
    n = analysis.data.n
    y = analysis.data.y

    def unpack(theta):
        p = dict(fitted)
        for name, sl in blocks.items():
            p[name] = theta[sl]
        return p

    if method in REGRESSIONS:
        X = regression_design(method, analysis)
        k = X.shape[1]
        nu_hat = analysis.nuisance()
        coef = _wls_coef(X, y, regression_weights(method, analysis, nu_hat))
        blocks["reg"] = slice(start, start + k)
        blocks["acd"] = slice(start + k, start + k + 1)
        pieces += [coef, [estimate.acd]]
        labels += [f"reg[{i}]" for i in range(k)] + ["ACD"]
        reg, acd_ix = blocks["reg"], start + k

        def psi(theta):
            p = unpack(theta)
            nu = analysis.nuisance(p) if names else nu_hat
            cols = [analysis.block_scores(b, p) for b in names]
            w = regression_weights(method, analysis, nu)
            beta = theta[reg]
            cols.append((w * (y - X @ beta))[:, None] * X)
            cols.append(np.full((n, 1), beta[1] - theta[acd_ix]))
            return np.hstack(cols)
    else:
        nu_hat = analysis.nuisance()
        bounds = {a: trim_bounds(method, a, analysis, nu_hat) for a in (1, 0)}
        pb_hat = analysis.sel.pi_bar
        random_n = _random_n(analysis, method)
        if random_n:
            # pi_bar = n / N solves sum over all N units of (S_j - pi_bar) = 0
            blocks["pi_bar"] = slice(start, start + 1)
            pieces.append([pb_hat])
            labels.append("pi_bar")
            start += 1
        pb_ix = start - 1
        blocks["mu1"] = slice(start, start + 1)
        blocks["mu0"] = slice(start + 1, start + 2)
        blocks["acd"] = slice(start + 2, start + 3)
        pieces += [[estimate.mu1, estimate.mu0, estimate.acd]]
        labels += ["mu(1)", "mu(0)", "ACD"]
        i1 = start

        def psi(theta):
            p = unpack(theta)
            nu = analysis.nuisance(p)
            cols = [analysis.block_scores(b, p) for b in names]
            if random_n:
                cols.append(np.full((n, 1), 1.0 - theta[pb_ix]))
            for j, a in enumerate((1, 0)):
                num, den = mean_parts(method, a, analysis, nu, bounds[a])
                if random_n:
                    # proposed summands are proportional to pi_bar
                    num = num * (theta[pb_ix] / pb_hat)
                cols.append((num - den * theta[i1 + j])[:, None])
            cols.append(np.full((n, 1), theta[i1] - theta[i1 + 1] - theta[i1 + 2]))
            return np.hstack(cols)

    theta = np.concatenate([np.atleast_1d(np.asarray(v, dtype=float)) for v in pieces])
    system = EstimatingSystem(theta, psi, labels, blocks)
    if method not in REGRESSIONS and random_n:
        system.n_absent = int(analysis.data.pop_size) - n
        m = theta.size

        def psi_absent(th):
            out = np.zeros(m)
            out[pb_ix] = -th[pb_ix]
            return out

        system.psi_absent = psi_absent
    if psi(theta).shape[1] != theta.size:
        raise InferenceError("estimating function length does not match theta")
    return system


def _random_n(analysis: Analysis, method: str) -> bool:
    return (analysis.spec.random_n and method in PI_BAR_METHODS and analysis.spec.pi_bar is None
            and analysis.data.pop_size is not None)


def _wls_coef(X, y, w):
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return coef


# -- Jacobian and sandwich ----------------------------------------------------

def numeric_jacobian(system: EstimatingSystem, theta=None, check: bool = True) -> np.ndarray:
    """M = -d psi_bar / d theta by coordinatewise central differences."""
    theta = np.asarray(system.theta if theta is None else theta, dtype=float)
    m = theta.size
    h0 = np.cbrt(np.finfo(float).eps)
    M = np.empty((m, m))
    for j in range(m):
        h = h0 * max(1.0, abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        M[:, j] = -(system.psi_bar(up) - system.psi_bar(dn)) / (up[j] - dn[j])
    if not np.all(np.isfinite(M)):
        raise InferenceError("Jacobian has non-finite entries")
    if check:
        _check_conditioning(M, system)
    return M


def _check_conditioning(M, system):
    u, s, vt = np.linalg.svd(M)
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    if cond > COND_LIMIT:
        v = np.abs(vt[-1])
        blocks = getattr(system, "blocks", None) or {}
        mass = {name: float(np.sum(v[sl] ** 2)) for name, sl in blocks.items()}
        worst = max(mass, key=mass.get) if mass else "?"
        raise InferenceError(
            f"estimating-equation Jacobian is nearly singular (condition {cond:.3g}); "
            f"near-dependence concentrated in block {worst!r}"
        )


def influence_values(system: EstimatingSystem, theta=None, M=None) -> np.ndarray:
    """phi_i = M^-1 psi_i for every row, shape (n, m)."""
    theta = system.theta if theta is None else theta
    M = numeric_jacobian(system, theta) if M is None else M
    return np.linalg.solve(M, system.psi(theta).T).T


def sandwich_variance(system: EstimatingSystem, theta=None, design: Optional[SurveyDesign] = None,
                      lonely_psu: str = "error", M=None) -> VarianceEstimate:
    """IID sandwich (design None) or stratified-cluster linearization variance."""
    theta = system.theta if theta is None else theta
    M = numeric_jacobian(system, theta) if M is None else M
    phi = influence_values(system, theta, M)
    n = phi.shape[0]
    if design is None:
        V = phi.T @ phi
        if system.n_absent:
            pa = np.linalg.solve(M, system.psi_absent(theta))
            V = V + system.n_absent * np.outer(pa, pa)
        V = V / system.n_units(n) ** 2
        mode = IID
    elif system.n_absent:
        raise InferenceError("a random sample size is only supported with the iid variance")
    else:
        V = stratified_cluster_vcov(phi, design, lonely_psu) / n**2
        mode = STRATIFIED
    V = (V + V.T) / 2
    return VarianceEstimate(V, mode, list(system.labels))


def stratified_cluster_vcov(phi: np.ndarray, design: SurveyDesign, lonely_psu: str = "error") -> np.ndarray:
    """sum_k J_k/(J_k-1) sum_j (t_jk - tbar_k)(t_jk - tbar_k)' of PSU totals t_jk."""
    if lonely_psu not in LONELY_POLICIES:
        raise InferenceError(f"unknown lonely-PSU policy {lonely_psu!r}")
    if design.stratum.shape[0] != phi.shape[0]:
        raise InferenceError("design labels do not match the number of rows")
    groups = design.groups()
    totals = {k: np.array([phi[rows].sum(axis=0) for rows in psus]) for k, psus in groups.items()}
    lonely = [k for k, t in totals.items() if t.shape[0] < 2]
    if lonely and lonely_psu == "error":
        raise InferenceError(f"strata with a single PSU: {lonely[:5]}; choose a lonely-PSU policy")
    if lonely and lonely_psu == "collapseStrata":
        totals = _collapse(totals)
        lonely = [k for k, t in totals.items() if t.shape[0] < 2]
        if lonely:
            raise InferenceError("cannot collapse strata: fewer than two PSUs in the whole design")
    m = phi.shape[1]
    V = np.zeros((m, m))
    grand = np.vstack(list(totals.values())).mean(axis=0)
    for t in totals.values():
        J = t.shape[0]
        if J < 2:
            d = t - grand
            V += d.T @ d
            continue
        d = t - t.mean(axis=0)
        V += J / (J - 1) * (d.T @ d)
    return V


def _collapse(totals: dict) -> dict:
    """Merge each single-PSU stratum into its neighbour in sorted label order."""
    keys = sorted(totals, key=str)
    merged = {k: [totals[k]] for k in keys}
    order = list(keys)
    for k in keys:
        if sum(t.shape[0] for t in merged.get(k, [])) >= 2 or k not in merged:
            continue
        i = order.index(k)
        if len(order) < 2:
            break
        target = order[i + 1] if i + 1 < len(order) else order[i - 1]
        merged[target] = merged[target] + merged.pop(k)
        order.remove(k)
    return {k: np.vstack(v) for k, v in merged.items()}


def wald_ci(estimate: float, se: float, alpha: float = 0.05):
    """Two-sided normal interval estimate +/- z_{1-alpha/2} se."""
    if se < 0:
        raise ValueError("standard error must be non-negative")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    z = norm.ppf(1 - alpha / 2)
    return float(estimate - z * se), float(estimate + z * se)
