"""Independent Monte Carlo reference values.

These deliberately avoid the package's quadrature so that agreement is a
genuine cross-check rather than a restatement.
"""

import numpy as np

N_DRAWS = 10_000_000
_CHUNK = 1_000_000


def _mc_mean(fn, seed):
    rng = np.random.default_rng(seed)
    total = total_sq = 0.0
    for _ in range(N_DRAWS // _CHUNK):
        v = fn(rng.standard_normal(_CHUNK))
        total += v.sum()
        total_sq += (v * v).sum()
    mean = total / N_DRAWS
    var = total_sq / N_DRAWS - mean * mean
    return mean, np.sqrt(var / N_DRAWS)


def mc_mse_g(a, seed=2024):
    """Sample mean and standard error of (1 - tanh(a + sqrt(a) xi))^2."""
    return _mc_mean(lambda xi: (1.0 - np.tanh(a + np.sqrt(a) * xi)) ** 2, seed)


def mc_biawgn_capacity(gamma, seed=7):
    """Mutual information of BPSK over y = sqrt(gamma) u + n, estimated from
    log2 p(y|u) - log2 p(y) with u = +1 (symmetric channel)."""
    def info(n):
        y = np.sqrt(gamma) + n
        # log p(y|+1)/p(y) = log 2 - log(1 + exp(-2 sqrt(gamma) y))
        return 1.0 - np.logaddexp(0.0, -2.0 * np.sqrt(gamma) * y) / np.log(2.0)
    return _mc_mean(info, seed)
