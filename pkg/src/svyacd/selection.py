"""Sample-selection probabilities Pr(S=1 | A, X), Pr(S=1 | X) and Pr(S=1)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .data import Dataset
from .glm import BETA_EPS, GlmFit, add_intercept, fit_beta_glm

KNOWN = "known"
MODELED = "modeled"
PROB_FLOOR = 1e-6


class SelectionError(ValueError):
    pass


def marginal_selection_prob(pi1, pi0, ew1):
    """Pr(S=1|x) = Pr(S=1|A=1,x) Pr(A=1|x) + Pr(S=1|A=0,x) Pr(A=0|x)."""
    pi1, pi0, ew1 = (np.asarray(v, dtype=float) for v in (pi1, pi0, ew1))
    for v, name in ((pi1, "pi1"), (pi0, "pi0"), (ew1, "ew1")):
        if np.any(v < 0) or np.any(v > 1):
            raise SelectionError(f"{name} must lie in [0, 1]")
    if np.any(pi1 <= 0) or np.any(pi0 <= 0):
        raise SelectionError("selection probabilities must be positive")
    out = pi1 * ew1 + pi0 * (1 - ew1)
    return out if out.ndim else float(out)


def clamp_probs(p, floor: float = PROB_FLOOR):
    """Clamp to [floor, 1]; returns (clamped, number of entries changed)."""
    p = np.asarray(p, dtype=float)
    out = np.clip(p, floor, 1.0)
    return out, int(np.count_nonzero(out != p))


def selection_design(data: Dataset, a, covariates: Optional[Sequence[str]] = None) -> np.ndarray:
    """Beta-GLM design rows [1, a, X_sel] with the group column set to ``a``."""
    a = np.broadcast_to(np.asarray(a, dtype=float), (data.n,))
    return add_intercept(np.column_stack([a, data.cols(covariates)]))


@dataclass(frozen=True)
class SelectionModel:
    """Selection probabilities evaluated on the sampled rows.

    ``pi1[i]`` and ``pi0[i]`` are Pr(S=1 | A=1, x_i) and Pr(S=1 | A=0, x_i);
    ``pi_obs[i]`` is the probability at the observed group a_i. In known
    mode ``pi_obs`` equals ``1 / sel_weight`` and only the counterfactual
    entries come from the beta fit.
    """

    mode: str
    pi1: np.ndarray
    pi0: np.ndarray
    pi_obs: np.ndarray
    pi_x: np.ndarray
    pi_bar: float
    ew1: np.ndarray
    beta_fit: Optional[GlmFit] = None
    covariates: Optional[tuple] = None
    n_clamped: int = 0

    def pi_ax(self, a: int) -> np.ndarray:
        return self.pi1 if a == 1 else self.pi0

    def with_propensity(self, ew1) -> "SelectionModel":
        """Recompute the marginal Pr(S=1|x) for a new Pr(A=1|x)."""
        pi_x = marginal_selection_prob(self.pi1, self.pi0, ew1)
        return SelectionModel(self.mode, self.pi1, self.pi0, self.pi_obs, pi_x, self.pi_bar,
                              np.asarray(ew1), self.beta_fit, self.covariates, self.n_clamped)


def modeled_probs(data: Dataset, coef, covariates=None, floor=PROB_FLOOR):
    """(pi1, pi0, n_clamped) from beta-GLM mean coefficients."""
    pi1, c1 = clamp_probs(expit(selection_design(data, 1, covariates) @ coef), floor)
    pi0, c0 = clamp_probs(expit(selection_design(data, 0, covariates) @ coef), floor)
    return pi1, pi0, c1 + c0


def resolve_pi_bar(data: Dataset, pi_bar: Optional[float] = None) -> float:
    if pi_bar is not None:
        if not 0 < pi_bar <= 1:
            raise SelectionError("pi_bar must lie in (0, 1]")
        return float(pi_bar)
    if data.pop_size is None:
        raise SelectionError("Pr(S=1) needs either the population size N or an explicit pi_bar")
    return data.n / data.pop_size


def fit_selection_glm(data: Dataset, covariates=None, weights=None) -> GlmFit:
    u = np.clip(1.0 / data.sel_weight, BETA_EPS, 1 - BETA_EPS)
    z = np.column_stack([data.a, data.cols(covariates)])
    names = ("A", *(covariates if covariates is not None else data.columns))
    return fit_beta_glm(z, u, weights, names=names)


def build_selection_model(
    data: Dataset,
    mode: str,
    ew1,
    pi_bar: Optional[float] = None,
    covariates: Optional[Sequence[str]] = None,
    pi_func: Optional[Callable] = None,
    floor: float = PROB_FLOOR,
) -> SelectionModel:
    """Assemble selection probabilities for every sampled row.

    Parameters
    ----------
    mode : "known" or "modeled"
    ew1 : survey-weighted propensity Pr(A=1 | x_i) per row, used to
        marginalize over the group.
    pi_bar : overall Pr(S=1); defaults to n / N.
    covariates : beta-GLM covariates besides A (default: all columns).
    pi_func : optional exact design function ``pi_func(a, x) -> probs``;
        replaces the beta fit for counterfactual (and, in modeled mode,
        observed) probabilities.
    """
    mode = mode.lower()
    if mode not in (KNOWN, MODELED):
        raise SelectionError(f"unknown selection mode {mode!r}")
    pi_bar = resolve_pi_bar(data, pi_bar)
    covariates = tuple(covariates) if covariates is not None else None

    fit = None
    if pi_func is not None:
        pi1, c1 = clamp_probs(pi_func(1, data.cols(covariates)), floor)
        pi0, c0 = clamp_probs(pi_func(0, data.cols(covariates)), floor)
        n_clamped = c1 + c0
    else:
        fit = fit_selection_glm(data, covariates)
        pi1, pi0, n_clamped = modeled_probs(data, fit.coef, covariates, floor)

    if mode == KNOWN:
        obs, c = clamp_probs(1.0 / data.sel_weight, floor)
        n_clamped += c
        pi1 = np.where(data.a == 1, obs, pi1)
        pi0 = np.where(data.a == 0, obs, pi0)
    pi_obs = np.where(data.a == 1, pi1, pi0)
    ew1 = np.asarray(ew1, dtype=float)
    pi_x = marginal_selection_prob(pi1, pi0, ew1)
    return SelectionModel(mode, pi1, pi0, pi_obs, pi_x, pi_bar, ew1, fit, covariates, n_clamped)
