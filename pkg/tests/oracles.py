"""Slow, loop-based reference computations used as independent test oracles."""

import math

import numpy as np


def phi(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def trapezoid(f, grid):
    return sum((grid[j + 1] - grid[j]) * (f[j] + f[j + 1]) / 2 for j in range(len(grid) - 1))


def loo_kernel_loglik(eta, b):
    """sum_i log[ 1/(m-1) sum_{j != i} phi((eta_i - eta_j)/b)/b ] by plain loops."""
    m = len(eta)
    total = 0.0
    for i in range(m):
        s = sum(phi((eta[i] - eta[j]) / b) / b for j in range(m) if j != i)
        total += math.log(s / (m - 1))
    return total


def ar_filter(eps, rho):
    p = len(rho)
    return [eps[j] - sum(rho[w] * eps[j - w - 1] for w in range(p)) for j in range(p, len(eps))]


def nw(x, y, h, x0, skip=None):
    num = den = 0.0
    for i, (xi, yi) in enumerate(zip(x, y)):
        if i == skip:
            continue
        w = phi((xi - x0) / h)
        num += w * yi
        den += w
    return num / den


def log_ig(x, a, b):
    return a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(x) - b / x


def log_posterior(theta, index, y, a=1.0, b=0.05):
    """IG(a, b) priors, uniform AR prior, LOO NW residuals and kernel likelihood."""
    h2, b2, *rho = theta
    if h2 <= 0 or b2 <= 0 or any(abs(r) >= 1 for r in rho):
        return -math.inf
    h = math.sqrt(h2)
    eps = [y[i] - nw(index, y, h, index[i], skip=i) for i in range(len(y))]
    eta = ar_filter(eps, rho)
    lp = log_ig(h2, a, b) + log_ig(b2, a, b) - len(rho) * math.log(2)
    return lp + loo_kernel_loglik(eta, math.sqrt(b2))


def sample_autocov(x, lag):
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    return float(xc[: x.size - lag] @ xc[lag:] / x.size)
