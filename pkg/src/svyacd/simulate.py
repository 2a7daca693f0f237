"""Monte Carlo study: super-population, repeated selection, method battery.

A population of N individuals is generated once per study; each replicate
draws S ~ Bernoulli(Pr(S=1|A,X)) from it and runs the estimator battery
on the selected rows, with selection weights 1 / Pr(S=1|A,X).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from .data import Dataset
from .estimators import ADDITIVE, COMPARISON, ORACLE, PROPOSED, ModelSpec, estimate_acd, prepare

log = logging.getLogger(__name__)

OM_ADDITIVE = "OM_ADDITIVE"
DEFAULT_METHODS = (*PROPOSED, *COMPARISON, ORACLE)
SENSITIVITY_METHODS = (ORACLE, "OM", OM_ADDITIVE, "IPW1", "IPW2")
SENSITIVITY_GAMMAS = (0.0, 0.01, 0.05, 0.1, 0.5)
MAX_RESAMPLE = 10
# "population": g-computation from the least-squares fit of the true outcome
# form on all N individuals (the finite-population ACD every replicate targets);
# "model": mean of gamma_A + gamma_AX x, free of outcome noise
TRUTHS = ("population", "model")
# counterfactual selection probabilities: the known design (integrating the
# per-person noise) or a beta GLM of 1 / weight on (A, X)
SELECTIONS = ("design", "beta")

# (tau_X, beta_A, beta_X) switched on per setting
SETTING_TOGGLES = {
    1: (0, 0, 0),
    2: (1, 0, 0),
    3: (0, 1, 0),
    4: (1, 1, 0),
    5: (0, 0, 1),
    6: (1, 0, 1),
    7: (0, 1, 1),
    8: (1, 1, 1),
}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    N: int = 100_000
    tau0: float = -1.0
    tauX: float = 0.0
    beta0: float = -4.5
    betaA: float = 0.0
    betaX: float = 0.0
    gamma0: float = 1.0
    gammaA: float = 1.0
    gammaX: float = 1.0
    gammaAX: float = 0.1
    sigmaS: float = 0.1
    sigmaO: float = 1.0
    n_reps: int = 200
    seed: int = 20240101
    setting_id: Optional[int] = None
    methods: tuple = DEFAULT_METHODS
    alpha: float = 0.05
    truth: str = "population"
    selection: str = "design"

    def __post_init__(self):
        if self.N <= 0:
            raise ValueError("N must be positive")
        if self.sigmaS < 0 or self.sigmaO < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if self.truth not in TRUTHS:
            raise ValueError(f"truth must be one of {TRUTHS}")
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")
        object.__setattr__(self, "methods", tuple(self.methods))

    @classmethod
    def for_setting(cls, setting: int, on: float = 1.0, **overrides) -> "SimConfig":
        """Config for one of the eight settings; ``on`` is the magnitude of active toggles."""
        if setting not in SETTING_TOGGLES:
            raise ValueError(f"setting must be 1..8, got {setting}")
        tx, ba, bx = SETTING_TOGGLES[setting]
        base = dict(tauX=on * tx, betaA=on * ba, betaX=on * bx, setting_id=setting)
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class Population:
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    pr_s: np.ndarray
    true_acd: float
    model_acd: float = float("nan")


@dataclass
class SimResult:
    config: SimConfig
    true_acd: float
    summary: pd.DataFrame
    per_rep: pd.DataFrame
    failures: dict = field(default_factory=dict)
    resamples: int = 0

    def metric(self, method: str, column: str) -> float:
        return float(self.summary.loc[method, column])


def generate_population(config: SimConfig, rng: np.random.Generator) -> Population:
    c = config
    x = rng.normal(1.0, 1.0, c.N)
    a = rng.binomial(1, expit(c.tau0 + c.tauX * x))
    eps_s = rng.normal(0.0, c.sigmaS, c.N)
    pr_s = expit(c.beta0 + c.betaA * a + c.betaX * x + eps_s)
    y = c.gamma0 + c.gammaX * x + c.gammaA * a + c.gammaAX * a * x + rng.normal(0.0, c.sigmaO, c.N)
    model_acd = float(np.mean(c.gammaA + c.gammaAX * x))
    true_acd = population_acd(x, a, y) if c.truth == "population" else model_acd
    return Population(x, a, y, pr_s, true_acd, model_acd)


def population_acd(x, a, y) -> float:
    """Finite-population ACD: interacted least squares on everyone, then g-computation."""
    X = np.column_stack([np.ones_like(x), a, x, a * x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(coef[1] + coef[3] * np.mean(x))


def draw_sample(pop: Population, rng: np.random.Generator, counter: Optional[list] = None) -> Dataset:
    """Select S ~ Bernoulli(pr_s); retries when a group has fewer than two rows."""
    for attempt in range(MAX_RESAMPLE):
        s = rng.random(pop.pr_s.shape[0]) < pop.pr_s
        counts = np.bincount(pop.a[s], minlength=2)
        if counts.min() >= 2:
            return Dataset(y=pop.y[s], a=pop.a[s], x=pop.x[s, None], sel_weight=1.0 / pop.pr_s[s],
                           columns=("X",), pop_size=pop.x.shape[0])
        if counter is not None:
            counter[0] += 1
    raise SimulationError(f"sample lacked one group in {MAX_RESAMPLE} consecutive draws")


def design_pi(config: SimConfig, nodes: int = 20):
    """Pr(S=1 | A=a, X=x) = E[expit(beta0 + betaA a + betaX x + eps_S)] by Gauss-Hermite."""
    z, wt = np.polynomial.hermite_e.hermegauss(nodes)
    wt = wt / wt.sum()
    c = config

    def pi(a, x):
        eta = c.beta0 + c.betaA * a + c.betaX * np.asarray(x, dtype=float).reshape(-1)
        return expit(eta[:, None] + c.sigmaS * z) @ wt

    return pi


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([seed, rep + 1])


def run_replicate(pop: Population, config: SimConfig, rep: int, counter=None) -> list:
    """Rows (one per method) for a single replicate; failures carry an ``error`` field."""
    data = draw_sample(pop, rep_rng(config.seed, rep), counter)
    rows = []
    try:
        # Bernoulli selection: n, and so pi_bar = n / N, vary across draws
        spec = ModelSpec(pi_func=design_pi(config) if config.selection == "design" else None, random_n=True)
        analysis = prepare(data, spec)
    except Exception as exc:  # recorded, never dropped silently
        return [dict(rep=rep, method=m, n=data.n, error=f"{type(exc).__name__}: {exc}") for m in config.methods]
    variants = {}
    for method in config.methods:
        try:
            if method == OM_ADDITIVE:
                if ADDITIVE not in variants:
                    variants[ADDITIVE] = analysis.with_om_form(ADDITIVE)
                est = estimate_acd("OM", variants[ADDITIVE], alpha=config.alpha)
            elif method == ORACLE:
                if ORACLE not in variants:
                    variants[ORACLE] = analysis.with_oracle()
                est = estimate_acd(ORACLE, variants[ORACLE], alpha=config.alpha)
            else:
                est = estimate_acd(method, analysis, alpha=config.alpha)
        except Exception as exc:
            rows.append(dict(rep=rep, method=method, n=data.n, error=f"{type(exc).__name__}: {exc}"))
            continue
        covered = est.ci_low <= pop.true_acd <= est.ci_high
        rows.append(dict(rep=rep, method=method, n=data.n, estimate=est.acd, se=est.se,
                         ci_low=est.ci_low, ci_high=est.ci_high, covered=covered, error=""))
    return rows


def summarize(per_rep: pd.DataFrame, true_acd: float, methods: Sequence[str]) -> pd.DataFrame:
    ok = per_rep[per_rep["error"] == ""]
    out = []
    for method in methods:
        d = ok[ok["method"] == method].sort_values("rep")
        est = d["estimate"].to_numpy(dtype=float)
        if est.size == 0:
            out.append(dict(method=method, n_ok=0))
            continue
        mean = float(np.mean(est))
        out.append(dict(
            method=method,
            n_ok=int(est.size),
            true_acd=true_acd,
            mean_estimate=mean,
            bias=mean - true_acd,
            percent_bias=100.0 * (mean - true_acd) / true_acd,
            analytic_se=float(np.mean(d["se"])),
            median_se=float(np.median(d["se"])),
            mc_se=float(np.std(est, ddof=1)) if est.size > 1 else 0.0,
            mse=float(np.mean((est - true_acd) ** 2)),
            coverage=float(np.mean(d["covered"].astype(bool))),
        ))
    return pd.DataFrame(out).set_index("method")


def run_study(config: SimConfig, progress: bool = False) -> SimResult:
    """Generate the population, run every replicate and aggregate metrics."""
    pop = generate_population(config, np.random.default_rng([config.seed, 0]))
    counter = [0]
    rows = []
    for rep in range(config.n_reps):
        rows.extend(run_replicate(pop, config, rep, counter))
        if progress and (rep + 1) % 25 == 0:
            log.info("replicate %d/%d", rep + 1, config.n_reps)
    per_rep = pd.DataFrame(rows)
    if "error" not in per_rep:
        per_rep["error"] = ""
    failures = per_rep[per_rep["error"] != ""].groupby("method").size().to_dict()
    for m, k in failures.items():
        log.warning("%s failed in %d replicates", m, k)
    summary = summarize(per_rep, pop.true_acd, config.methods)
    return SimResult(config, pop.true_acd, summary, per_rep, failures, counter[0])


def run_sensitivity(base: SimConfig, gammas: Sequence[float] = SENSITIVITY_GAMMAS,
                    methods: Sequence[str] = SENSITIVITY_METHODS) -> dict:
    """Repeat a study over outcome heterogeneity values gamma_AX."""
    return {g: run_study(replace(base, gammaAX=g, methods=tuple(methods))) for g in gammas}


def config_dict(config: SimConfig) -> dict:
    d = asdict(config)
    d["methods"] = list(config.methods)
    return d
