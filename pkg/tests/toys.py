"""Small hand-built datasets shared by unit and acceptance tests."""

import numpy as np

from svyacd.data import Dataset

# exact selection probabilities pi(a, x) on a 2 x 2 design
TOY_PI = {(1, 0): 0.5, (0, 0): 0.25, (1, 1): 0.2, (0, 1): 0.1}


def toy_pi(a, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    return np.array([TOY_PI[(a, int(v))] for v in x])


def saturated_toy() -> Dataset:
    """Eight rows, two per (a, x) cell, weights 1 / pi(a, x); sum of weights 42."""
    a = np.array([1, 1, 0, 0, 1, 1, 0, 0])
    x = np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=float)
    y = np.array([3.0, 5.0, 1.0, 2.0, 7.0, 4.0, 2.5, 0.5])
    w = np.array([1 / TOY_PI[(ai, int(xi))] for ai, xi in zip(a, x)])
    return Dataset(y=y, a=a, x=x[:, None], sel_weight=w, columns=("X",), pop_size=int(round(w.sum())))


def toy_hand_means():
    """mu(a) by enumeration: sum_x ybar(a, x) * W_x / W, W_x the weight total of cell x."""
    d = saturated_toy()
    x = d.x[:, 0]
    W = d.sel_weight.sum()
    out = {}
    for a in (1, 0):
        out[a] = sum(d.y[(d.a == a) & (x == v)].mean() * d.sel_weight[x == v].sum() / W for v in (0, 1))
    return out


def binary_x_data(n=60, seed=0, weight=None, y=None) -> Dataset:
    """Saturated binary covariate with every (a, x) cell populated."""
    rng = np.random.default_rng(seed)
    x = np.repeat([0.0, 1.0], n // 2)
    a = np.tile([0, 1, 1, 0, 0, 1, 0, 0, 1, 0], n // 10)
    yy = 1 + x + a + rng.normal(size=n) if y is None else np.broadcast_to(y, (n,)).astype(float)
    w = np.full(n, 4.0) if weight is None else weight
    return Dataset(y=yy, a=a, x=x[:, None], sel_weight=w, columns=("X",), pop_size=int(round(np.sum(w))))


def continuous_data(n=300, seed=0) -> Dataset:
    """Confounded, group-dependent selection with a continuous covariate."""
    rng = np.random.default_rng(seed)
    x = rng.normal(1, 1, n)
    a = rng.binomial(1, 1 / (1 + np.exp(-(-0.5 + 0.8 * x))))
    pr = 1 / (1 + np.exp(-(-2 + 0.5 * a + 0.4 * x + rng.normal(0, 0.1, n))))
    y = 1 + x + a + 0.2 * a * x + rng.normal(size=n)
    return Dataset(y=y, a=a, x=x[:, None], sel_weight=1 / pr, columns=("X",), pop_size=int(n / pr.mean()))
