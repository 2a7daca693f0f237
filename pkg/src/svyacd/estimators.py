"""Group means and average controlled difference (ACD) estimators.

Three proposed estimators standardize to the population covariate
distribution while accounting for selection that depends on the group:

* ``OM``   : n^-1 sum g_a(x_i) pi_bar / pi(x_i)
* ``IPW1`` : n^-1 sum I(a_i=a) y_i pi_bar / (e^w_a(x_i) pi(a, x_i))
* ``IPW2`` : n^-1 sum I(a_i=a) y_i pi_bar / (e_a(x_i) pi(x_i))

where e_a is the within-sample propensity, e^w_a the survey-weighted one,
pi(a, x) the selection probability and pi(x) its marginal over groups.
The comparison approaches are the usual regression, IPTW and naive
g-computation analyses.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .data import Dataset
from .glm import GlmFit, add_intercept, beta_score, fit_weighted_logistic, fit_wls, gaussian_score, logistic_score
from .selection import (
    BETA_EPS,
    KNOWN,
    MODELED,
    PROB_FLOOR,
    SelectionModel,
    build_selection_model,
    marginal_selection_prob,
    modeled_probs,
    selection_design,
)

PROPOSED = ("OM", "IPW1", "IPW2")
COMPARISON = ("SLR", "MR", "IPTW_HT", "SVY_MR", "IPTW_MR", "IPTW_SVY_MR", "WIPTW_SVY_MR", "NAIVE_G")
METHODS = PROPOSED + COMPARISON
# survey-weighted regression on the true outcome form; simulation comparator
ORACLE = "ORACLE"

INTERACTED = "interacted"
ADDITIVE = "additive"
_OM_FORMS = {"interacted": INTERACTED, "additive": ADDITIVE, "misspecified_additive": ADDITIVE}

REGRESSIONS = {
    # tag: (include covariates, propensity used for IPT weights, multiply by sel_weight)
    "SLR": (False, None, False),
    "MR": (True, None, False),
    "SVY_MR": (True, None, True),
    "IPTW_MR": (True, "ps_sample", False),
    "IPTW_SVY_MR": (True, "ps_sample", True),
    "WIPTW_SVY_MR": (True, "ps_pop", True),
}


class PositivityError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Model choices shared by every estimator in a battery.

    Covariate lists of None mean "all dataset columns". ``om_form`` is
    ``"interacted"`` (separate outcome regression per group) or
    ``"additive"`` (one regression on A and X, misspecified under
    heterogeneity). ``trim`` is an optional quantile q for symmetric
    winsorizing of inverse-probability factors at [q, 1-q].
    ``random_n`` marks Bernoulli (Poisson) selection from a population of
    known size, where the sample size and hence pi_bar = n / N are random;
    the variance then carries pi_bar as an estimated parameter.
    """

    om_form: str = INTERACTED
    ps_covariates: Optional[tuple] = None
    om_covariates: Optional[tuple] = None
    sel_covariates: Optional[tuple] = None
    selection_mode: str = KNOWN
    pi_bar: Optional[float] = None
    max_clamped_frac: float = 0.05
    trim: Optional[float] = None
    pi_func: Optional[Callable] = None
    clamp: float = PROB_FLOOR
    random_n: bool = False

    def __post_init__(self):
        form = _OM_FORMS.get(self.om_form)
        if form is None:
            raise ValueError(f"unknown outcome model form {self.om_form!r}")
        object.__setattr__(self, "om_form", form)
        for name in ("ps_covariates", "om_covariates", "sel_covariates"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(v))
        if self.trim is not None and not 0 < self.trim < 0.5:
            raise ValueError("trim quantile must lie in (0, 0.5)")


@dataclass(frozen=True)
class PropensityPair:
    e_sample: GlmFit  # Pr(A=1 | S=1, X), unweighted
    e_pop: GlmFit  # Pr(A=1 | X), weighted by sel_weight


@dataclass
class AcdEstimate:
    method: str
    acd: float
    mu1: Optional[float] = None
    mu0: Optional[float] = None
    se: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {k: getattr(self, k) for k in ("method", "acd", "mu1", "mu0", "se", "ci_low", "ci_high")}
        row.update(self.diagnostics)
        return row


@dataclass
class Nuisance:
    e_sample: np.ndarray
    e_pop: np.ndarray
    pi1: np.ndarray
    pi0: np.ndarray
    pi_obs: np.ndarray
    pi_x: np.ndarray
    g1: Optional[np.ndarray] = None
    g0: Optional[np.ndarray] = None
    oracle: Optional[tuple] = None


def fit_propensities(data: Dataset, covariates: Optional[Sequence[str]] = None) -> PropensityPair:
    x = data.cols(covariates)
    names = covariates if covariates is not None else data.columns
    return PropensityPair(
        e_sample=fit_weighted_logistic(x, data.a, None, names=names),
        e_pop=fit_weighted_logistic(x, data.a, data.sel_weight, names=names),
    )


def check_positivity(prop: PropensityPair, data: Dataset, covariates=None) -> None:
    x = data.cols(covariates)
    for fit, label in ((prop.e_sample, "within-sample"), (prop.e_pop, "survey-weighted")):
        e = fit.predict(x)
        if np.any(e <= 0) or np.any(e >= 1):
            raise PositivityError(f"{label} propensities reach 0 or 1")


def fit_outcome_models(data: Dataset, spec: ModelSpec) -> dict:
    x = data.cols(spec.om_covariates)
    names = spec.om_covariates if spec.om_covariates is not None else data.columns
    if spec.om_form == INTERACTED:
        return {
            "om1": fit_wls(x[data.a == 1], data.y[data.a == 1], names=names),
            "om0": fit_wls(x[data.a == 0], data.y[data.a == 0], names=names),
        }
    return {"om": fit_wls(np.column_stack([data.a, x]), data.y, names=("A", *names))}


def _oracle_design(data: Dataset, a, covariates=None) -> np.ndarray:
    a = np.broadcast_to(np.asarray(a, dtype=float), (data.n,))
    x = data.cols(covariates)
    return add_intercept(np.column_stack([a, x, a[:, None] * x]))


@dataclass(frozen=True)
class Analysis:
    """All fitted nuisance models for one dataset and model specification."""

    data: Dataset
    spec: ModelSpec
    prop: PropensityPair
    sel: SelectionModel
    outcome: dict
    oracle_fit: Optional[GlmFit] = None

    # -- parameter blocks -------------------------------------------------
    @property
    def sel_estimated(self) -> bool:
        fit = self.sel.beta_fit
        return (self.sel.mode == MODELED and fit is not None
                and np.isfinite(fit.dispersion_or_precision))

    def params(self) -> dict:
        p = {"ps_sample": self.prop.e_sample.coef, "ps_pop": self.prop.e_pop.coef}
        for k, fit in self.outcome.items():
            p[k] = fit.coef
        if self.sel_estimated:
            p["sel"] = np.append(self.sel.beta_fit.coef, np.log(self.sel.beta_fit.dispersion_or_precision))
        if self.oracle_fit is not None:
            p["om_oracle"] = self.oracle_fit.coef
        return p

    @property
    def om_blocks(self) -> tuple:
        return tuple(self.outcome)

    def nuisance(self, params: Optional[dict] = None) -> Nuisance:
        p = self.params() if params is None else params
        data, spec = self.data, self.spec
        xps = add_intercept(data.cols(spec.ps_covariates))
        e_s = expit(xps @ p["ps_sample"])
        e_p = expit(xps @ p["ps_pop"])
        if "sel" in p:
            pi1, pi0, _ = modeled_probs(data, p["sel"][:-1], self.sel.covariates, spec.clamp)
            pi_obs = np.where(data.a == 1, pi1, pi0)
        else:
            pi1, pi0, pi_obs = self.sel.pi1, self.sel.pi0, self.sel.pi_obs
        pi_x = marginal_selection_prob(pi1, pi0, e_p)
        g1 = g0 = None
        xo = data.cols(spec.om_covariates)
        if "om1" in p:
            g1 = add_intercept(xo) @ p["om1"]
            g0 = add_intercept(xo) @ p["om0"]
        elif "om" in p:
            g1 = add_intercept(np.column_stack([np.ones(data.n), xo])) @ p["om"]
            g0 = add_intercept(np.column_stack([np.zeros(data.n), xo])) @ p["om"]
        oracle = None
        if "om_oracle" in p:
            oracle = (_oracle_design(data, 1, spec.om_covariates) @ p["om_oracle"],
                      _oracle_design(data, 0, spec.om_covariates) @ p["om_oracle"])
        return Nuisance(e_s, e_p, pi1, pi0, pi_obs, pi_x, g1, g0, oracle)

    def block_scores(self, name: str, params: dict) -> np.ndarray:
        """Per-row estimating-equation contributions of a nuisance block."""
        data, spec = self.data, self.spec
        if name in ("ps_sample", "ps_pop"):
            X = add_intercept(data.cols(spec.ps_covariates))
            w = np.ones(data.n) if name == "ps_sample" else data.sel_weight
            return logistic_score(X, data.a, w, params[name])
        if name in ("om1", "om0"):
            X = add_intercept(data.cols(spec.om_covariates))
            w = (data.a == (1 if name == "om1" else 0)).astype(float)
            return gaussian_score(X, data.y, w, params[name])
        if name == "om":
            X = add_intercept(np.column_stack([data.a, data.cols(spec.om_covariates)]))
            return gaussian_score(X, data.y, np.ones(data.n), params[name])
        if name == "om_oracle":
            X = _oracle_design(data, data.a, spec.om_covariates)
            return gaussian_score(X, data.y, data.sel_weight, params[name])
        if name == "sel":
            X = selection_design(data, data.a, self.sel.covariates)
            u = np.clip(1.0 / data.sel_weight, BETA_EPS, 1 - BETA_EPS)
            return beta_score(X, u, np.ones(data.n), params[name][:-1], params[name][-1])
        raise KeyError(name)

    def with_om_form(self, form: str) -> "Analysis":
        spec = replace(self.spec, om_form=form)
        return replace(self, spec=spec, outcome=fit_outcome_models(self.data, spec))

    def with_oracle(self) -> "Analysis":
        X = _oracle_design(self.data, self.data.a, self.spec.om_covariates)[:, 1:]
        return replace(self, oracle_fit=fit_wls(X, self.data.y, self.data.sel_weight))


def prepare(data: Dataset, spec: Optional[ModelSpec] = None) -> Analysis:
    """Fit propensity, selection and outcome models for ``data``."""
    spec = spec or ModelSpec()
    prop = fit_propensities(data, spec.ps_covariates)
    check_positivity(prop, data, spec.ps_covariates)
    ew1 = prop.e_pop.predict(data.cols(spec.ps_covariates))
    sel = build_selection_model(data, spec.selection_mode, ew1, spec.pi_bar,
                                spec.sel_covariates, spec.pi_func, spec.clamp)
    if sel.n_clamped > spec.max_clamped_frac * 2 * data.n:
        raise PositivityError(
            f"{sel.n_clamped} selection probabilities clamped, above the allowed fraction "
            f"{spec.max_clamped_frac:g}"
        )
    return Analysis(data, spec, prop, sel, fit_outcome_models(data, spec))


PI_BAR_METHODS = ("OM", "IPW1", "IPW2")


# -- method definitions -------------------------------------------------------

def required_blocks(method: str, analysis: Analysis) -> list:
    sel = ["sel"] if analysis.sel_estimated else []
    if method == "OM":
        return ["ps_pop", *sel, *analysis.om_blocks]
    if method == "IPW1":
        return ["ps_pop", *sel]
    if method == "IPW2":
        return ["ps_sample", "ps_pop", *sel]
    if method == "IPTW_HT":
        return ["ps_sample"]
    if method == "NAIVE_G":
        return list(analysis.om_blocks)
    if method == ORACLE:
        return ["om_oracle"]
    if method in REGRESSIONS:
        ps = REGRESSIONS[method][1]
        return [ps] if ps else []
    raise ValueError(f"unknown method {method!r}")


def ipw_factor(method: str, a: int, nu: Nuisance, pi_bar: float) -> np.ndarray:
    """Per-row inverse-probability factor applied to I(a_i=a) y_i."""
    if method == "IPW1":
        e = nu.e_pop if a == 1 else 1 - nu.e_pop
        return pi_bar / (e * nu.pi_obs)
    if method == "IPW2":
        e = nu.e_sample if a == 1 else 1 - nu.e_sample
        return pi_bar / (e * nu.pi_x)
    if method == "IPTW_HT":
        return 1.0 / (nu.e_sample if a == 1 else 1 - nu.e_sample)
    raise ValueError(method)


def mean_parts(method: str, a: int, analysis: Analysis, nu: Nuisance, bounds=None):
    """Numerator and denominator contributions with mu(a) = sum(num) / sum(den)."""
    data = analysis.data
    pi_bar = analysis.sel.pi_bar
    ones = np.ones(data.n)
    if method == "OM":
        g = nu.g1 if a == 1 else nu.g0
        return g * pi_bar / nu.pi_x, ones
    if method in ("IPW1", "IPW2", "IPTW_HT"):
        f = ipw_factor(method, a, nu, pi_bar)
        if bounds is not None:
            f = np.clip(f, *bounds)
        return (data.a == a) * data.y * f, ones
    if method == "NAIVE_G":
        g = nu.g1 if a == 1 else nu.g0
        return data.sel_weight * g, data.sel_weight
    if method == ORACLE:
        return data.sel_weight * nu.oracle[1 - a], data.sel_weight
    raise ValueError(f"{method} is not a group-mean estimator")


def trim_bounds(method: str, a: int, analysis: Analysis, nu: Nuisance):
    q = analysis.spec.trim
    if q is None or method not in ("IPW1", "IPW2", "IPTW_HT"):
        return None
    f = ipw_factor(method, a, nu, analysis.sel.pi_bar)[analysis.data.a == a]
    return float(np.quantile(f, q)), float(np.quantile(f, 1 - q))


def regression_design(method: str, analysis: Analysis) -> np.ndarray:
    data = analysis.data
    use_x = REGRESSIONS[method][0]
    cols = [data.a] + ([data.cols(analysis.spec.om_covariates)] if use_x else [])
    return add_intercept(np.column_stack(cols))


def regression_weights(method: str, analysis: Analysis, nu: Nuisance) -> np.ndarray:
    data = analysis.data
    _, ps, svy = REGRESSIONS[method]
    w = np.ones(data.n)
    if ps is not None:
        e = nu.e_sample if ps == "ps_sample" else nu.e_pop
        w = np.where(data.a == 1, 1 / e, 1 / (1 - e))
    if svy:
        w = w * data.sel_weight
    return w


def _kish(f) -> float:
    f = np.asarray(f, dtype=float)
    return float(f.sum() ** 2 / np.sum(f**2)) if f.size and np.any(f) else 0.0


def estimate_mu(method: str, a: int, analysis: Analysis) -> float:
    nu = analysis.nuisance()
    num, den = mean_parts(method, a, analysis, nu, trim_bounds(method, a, analysis, nu))
    return float(num.sum() / den.sum())


def point_estimate(method: str, analysis: Analysis) -> AcdEstimate:
    """ACD point estimate and diagnostics, without inference."""
    nu = analysis.nuisance()
    data = analysis.data
    diag = {"n": data.n, "n_clamped": analysis.sel.n_clamped}
    if method in REGRESSIONS:
        X = regression_design(method, analysis)
        w = regression_weights(method, analysis, nu)
        fit = fit_wls(X[:, 1:], data.y, w)
        diag["ess"] = _kish(w)
        return AcdEstimate(method, float(fit.coef[1]), diagnostics=diag)
    mus = {}
    for a in (1, 0):
        bounds = trim_bounds(method, a, analysis, nu)
        num, den = mean_parts(method, a, analysis, nu, bounds)
        mus[a] = float(num.sum() / den.sum())
        if method in ("IPW1", "IPW2", "IPTW_HT"):
            f = ipw_factor(method, a, nu, analysis.sel.pi_bar)[data.a == a]
            diag[f"ess{a}"] = _kish(f)
            if bounds is not None:
                diag[f"trimmed{a}"] = int(np.count_nonzero((f < bounds[0]) | (f > bounds[1])))
        elif method == "OM":
            diag[f"ess{a}"] = _kish(analysis.sel.pi_bar / nu.pi_x)
    return AcdEstimate(method, mus[1] - mus[0], mus[1], mus[0], diagnostics=diag)


def estimate_acd(method: str, analysis: Analysis, inference: bool = True, design=None,
                 alpha: float = 0.05, lonely_psu: str = "error") -> AcdEstimate:
    """ACD for ``method``; with ``inference`` attaches a sandwich SE and Wald CI."""
    est = point_estimate(method, analysis)
    if inference:
        from .inference import sandwich_variance, stack_system, wald_ci

        system = stack_system(analysis, method, est)
        var = sandwich_variance(system, design=design, lonely_psu=lonely_psu)
        est.se = float(var.se[-1])
        est.ci_low, est.ci_high = wald_ci(est.acd, est.se, alpha)
    return est


def comparison_estimators(which: Sequence[str], analysis: Analysis, inference: bool = True,
                          design=None, alpha: float = 0.05, lonely_psu: str = "error") -> list:
    out = []
    for method in which:
        if method not in COMPARISON:
            raise ValueError(f"{method!r} is not a comparison approach")
        out.append(estimate_acd(method, analysis, inference, design, alpha, lonely_psu))
    return out
