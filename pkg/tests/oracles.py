"""Reference computations written independently of the package internals.

Each oracle uses the plainest available formula (scalar loops, quadrature,
brute-force restarts) so that agreement with the vectorized implementation
is meaningful.
"""

import math

import numpy as np


def normal_pdf_2d(x, mu, cov):
    """Bivariate normal density from the textbook formula, scalar arithmetic."""
    a, b, c, d = cov[0][0], cov[0][1], cov[1][0], cov[1][1]
    det = a * d - b * c
    inv = ((d / det, -b / det), (-c / det, a / det))
    dx = (x[0] - mu[0], x[1] - mu[1])
    maha = (
        dx[0] * (inv[0][0] * dx[0] + inv[0][1] * dx[1])
        + dx[1] * (inv[1][0] * dx[0] + inv[1][1] * dx[1])
    )
    return math.exp(-0.5 * maha) / (2.0 * math.pi * math.sqrt(det))


def mixture_pdf(x, weights, means, covs):
    return sum(w * normal_pdf_2d(x, m, c) for w, m, c in zip(weights, means, covs))


def responsibilities(x, weights, means, covs):
    terms = [w * normal_pdf_2d(x, m, c) for w, m, c in zip(weights, means, covs)]
    total = sum(terms)
    return [t / total for t in terms]


def input_responsibilities(q, weights, means, covs):
    terms = []
    for w, m, c in zip(weights, means, covs):
        var = c[0][0]
        terms.append(w * math.exp(-0.5 * (q - m[0]) ** 2 / var) / math.sqrt(2 * math.pi * var))
    total = sum(terms)
    return [t / total for t in terms]


def quadrature_conditional(q, weights, means, covs, n=4001):
    """``E[y | x=q]`` and ``Var[y | x=q]`` by trapezoid integration over y.

    The grid spans +/- 8 marginal standard deviations around every
    component's output mean.
    """
    lo = min(m[1] - 8 * math.sqrt(c[1][1]) for m, c in zip(means, covs))
    hi = max(m[1] + 8 * math.sqrt(c[1][1]) for m, c in zip(means, covs))
    y = np.linspace(lo, hi, n)
    p = np.zeros_like(y)
    for w, m, c in zip(weights, means, covs):
        cov = np.asarray(c, dtype=float)
        inv = np.linalg.inv(cov)
        dx = q - m[0]
        dy = y - m[1]
        maha = inv[0, 0] * dx * dx + 2 * inv[0, 1] * dx * dy + inv[1, 1] * dy * dy
        p += w * np.exp(-0.5 * maha) / (2 * np.pi * np.sqrt(np.linalg.det(cov)))
    z = np.trapezoid(p, y)
    mean = np.trapezoid(y * p, y) / z
    var = np.trapezoid((y - mean) ** 2 * p, y) / z
    return float(mean), float(var)


def gaussian_conditioning(mu, cov, q):
    """Closed-form conditional of a bivariate normal on its first coordinate."""
    mean = mu[1] + cov[1][0] / cov[0][0] * (q - mu[0])
    var = cov[1][1] - cov[1][0] * cov[0][1] / cov[0][0]
    return mean, var


def random_mixture(rng, k, spread=3.0):
    """Well-conditioned random 2-D mixture: correlation |rho| <= 0.8."""
    weights = rng.dirichlet(np.full(k, 2.0))
    weights = weights / weights.sum()
    means = rng.uniform(-spread, spread, size=(k, 2))
    covs = []
    for _ in range(k):
        sx, sy = rng.uniform(0.3, 1.5, size=2)
        rho = rng.uniform(-0.8, 0.8)
        covs.append([[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]])
    return weights, means, np.array(covs)


def best_of_seeds(fit, data, k, seeds):
    """Highest final log-likelihood over independent restarts."""
    return max(fit(data, k, seed=s)[1].log_likelihood_trace[-1] for s in seeds)


def play_operator(qs, width, z0=0.0):
    """Backlash state sequence by direct iteration of the dead-zone rule."""
    z = z0
    out = []
    for q in qs:
        if q - z > width / 2:
            z = q - width / 2
        elif z - q > width / 2:
            z = q + width / 2
        out.append(z)
    return out


def cubic_inverse(gamma, a, b, lo, hi):
    """Inverse of ``a*z + b*z**3`` by plain interval halving."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if a * mid + b * mid**3 < gamma:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
