"""Independent likelihood oracles for the GLM test fixtures.

Each fixture is maximized by brute force: a coarse grid, a fine grid of
step 1e-3 around the best coarse cell, then Nelder-Mead on a
log-likelihood written with scipy.stats densities. Nothing here imports
svyacd. The printed values are frozen into tests/test_glm.py.
"""

import numpy as np
from scipy import optimize, stats
from scipy.special import expit

LOGISTIC_FIXTURES = {
    "six_row_binary_x": dict(
        x=[0, 0, 0, 1, 1, 1], t=[0, 1, 0, 1, 1, 0], w=[1, 2, 1, 1, 2, 1]),
    "twelve_row_continuous": dict(
        x=[-1.2, -0.7, -0.3, 0.0, 0.2, 0.4, 0.5, 0.9, 1.1, 1.4, 1.8, 2.3],
        t=[0, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 1],
        w=[1.0, 0.5, 2.0, 1.5, 1.0, 1.0, 3.0, 0.7, 1.2, 1.0, 2.5, 0.8]),
}

BETA_FIXTURES = {
    "intercept_only": dict(x=None, u=[0.2, 0.3, 0.4], w=None),
    "ten_row_slope": dict(
        x=[0.0, 0.3, 0.5, 0.8, 1.0, 1.3, 1.5, 1.9, 2.2, 2.5],
        u=[0.12, 0.2, 0.15, 0.3, 0.28, 0.4, 0.35, 0.55, 0.5, 0.7],
        w=[1.0, 2.0, 1.0, 0.5, 1.5, 1.0, 2.0, 1.0, 0.8, 1.2]),
}


def logistic_ll(beta, x, t, w):
    p = expit(beta[0] + beta[1] * x)
    return np.sum(w * stats.bernoulli.logpmf(t, p))


def logistic_grid(x, t, w):
    x, t, w = map(np.asarray, (x, t, w))
    # coarse grid over [-5, 5]^2
    g = np.arange(-5, 5 + 1e-9, 0.05)
    b0, b1 = np.meshgrid(g, g, indexing="ij")
    eta = b0[..., None] + b1[..., None] * x
    ll = np.sum(w * (t * eta - np.logaddexp(0, eta)), axis=-1)
    i, j = np.unravel_index(np.argmax(ll), ll.shape)
    # fine grid at step 1e-3 around the coarse optimum
    f0 = np.arange(g[i] - 0.1, g[i] + 0.1, 1e-3)
    f1 = np.arange(g[j] - 0.1, g[j] + 0.1, 1e-3)
    b0, b1 = np.meshgrid(f0, f1, indexing="ij")
    eta = b0[..., None] + b1[..., None] * x
    ll = np.sum(w * (t * eta - np.logaddexp(0, eta)), axis=-1)
    i, j = np.unravel_index(np.argmax(ll), ll.shape)
    start = np.array([f0[i], f1[j]])
    res = optimize.minimize(lambda b: -logistic_ll(b, x, t, w), start, method="Nelder-Mead",
                            options=dict(xatol=1e-12, fatol=1e-14, maxiter=20000))
    return res.x


def beta_ll(par, x, u, w):
    # par = (b0, b1, log phi) or (b0, log phi)
    if x is None:
        mu, phi = expit(par[0]), np.exp(par[1])
    else:
        mu, phi = expit(par[0] + par[1] * x), np.exp(par[2])
    return np.sum(w * stats.beta.logpdf(u, mu * phi, (1 - mu) * phi))


def beta_grid(x, u, w):
    u = np.asarray(u, float)
    w = np.ones_like(u) if w is None else np.asarray(w, float)
    x = None if x is None else np.asarray(x, float)
    if x is None:
        # 2-D grid over (mean, log precision)
        m = np.arange(0.01, 0.99, 0.001)
        lp = np.arange(-2, 6, 0.01)
        M, P = np.meshgrid(m, lp, indexing="ij")
        phi = np.exp(P)[..., None]
        ll = np.sum(w * stats.beta.logpdf(u, M[..., None] * phi, (1 - M[..., None]) * phi), axis=-1)
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        start = np.array([np.log(m[i] / (1 - m[i])), lp[j]])
    else:
        g0 = np.arange(-5, 5, 0.05)
        g1 = np.arange(-5, 5, 0.05)
        lp = np.arange(0, 6, 0.1)
        B0, B1, P = np.meshgrid(g0, g1, lp, indexing="ij")
        mu = expit(B0[..., None] + B1[..., None] * x)
        phi = np.exp(P)[..., None]
        ll = np.sum(w * stats.beta.logpdf(u, mu * phi, (1 - mu) * phi), axis=-1)
        i, j, k = np.unravel_index(np.argmax(ll), ll.shape)
        start = np.array([g0[i], g1[j], lp[k]])
    obj = lambda p: -beta_ll(p, x, u, w)
    res = optimize.minimize(obj, start, method="Nelder-Mead",
                            options=dict(xatol=1e-12, fatol=1e-14, maxiter=50000, maxfev=50000))
    # restart once from the optimum to shake off simplex stalls
    res = optimize.minimize(obj, res.x, method="Nelder-Mead",
                            options=dict(xatol=1e-12, fatol=1e-14, maxiter=50000, maxfev=50000))
    return res.x


def main():
    np.set_printoptions(precision=12)
    for name, f in LOGISTIC_FIXTURES.items():
        print("logistic", name, repr(logistic_grid(**f).round(9).tolist()))
    for name, f in BETA_FIXTURES.items():
        print("beta", name, repr(beta_grid(**f).round(9).tolist()))


if __name__ == "__main__":
    main()
