"""Full-covariance Gaussian mixtures fitted by Expectation-Maximization.

Densities are evaluated in the log domain throughout. Fitting runs on
standardized coordinates (per-dimension z-scores) and maps the result back,
which keeps k-means seeding and the covariance ridge insensitive to the very
different scales of control input and angle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import (
    DegenerateDensity,
    DimensionMismatch,
    FitError,
    ModelFormatError,
    SingularCovariance,
    TooFewPoints,
)

log = logging.getLogger(__name__)

FORMAT_TAG = "gmmodel v1"
RIDGE = 1e-6
EIG_FLOOR = 1e-9
KMEANS_ITERS = 20
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianComponent:
    pi: float
    mu: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """``K`` weighted Gaussians in ``D`` dimensions.

    Parameters are stacked: ``weights`` is ``(K,)``, ``means`` ``(K, D)``,
    ``covariances`` ``(K, D, D)``.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)
    _log_det: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        c = np.asarray(self.covariances, dtype=float).reshape(len(m), m.shape[1], m.shape[1])
        if len(w) != len(m) or len(w) < 1:
            raise DimensionMismatch("weights and means disagree on K")
        if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
            raise FitError(f"mixture weights must lie in [0, 1] and sum to 1 (sum={w.sum()!r})")
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            raise SingularCovariance("covariance is not positive definite") from None
        for name, arr in (("weights", w), ("means", m), ("covariances", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(
            self, "_log_det", 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        )

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(float(p), m, s) for p, m, s in zip(self.weights, self.means, self.covariances)]

    def _as_points(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected points of dimension {self.dim}, got {x.shape[-1]}")
        return x, single

    def component_log_densities(self, x) -> np.ndarray:
        """``log pi_k + log N(x | mu_k, Sigma_k)`` as an ``(n, K)`` array."""
        x, _ = self._as_points(x)
        diff = x[:, None, :] - self.means[None, :, :]  # (n, K, D)
        # Solve L y = diff for each component.
        y = np.empty_like(diff)
        for k in range(self.n_components):
            y[:, k, :] = solve_triangular(self._chol[k], diff[:, k, :].T, lower=True).T
        maha = np.einsum("nkd,nkd->nk", y, y)
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return log_w - 0.5 * (self.dim * LOG_2PI + self._log_det + maha)

    def log_density(self, x):
        x, single = self._as_points(x)
        out = logsumexp(self.component_log_densities(x), axis=1)
        return out[0] if single else out

    def density(self, x):
        """Mixture density ``sum_k pi_k N(x | mu_k, Sigma_k)``."""
        return np.exp(self.log_density(x))

    def responsibilities(self, x) -> np.ndarray:
        """Posterior component probabilities for each point (rows sum to one)."""
        x, single = self._as_points(x)
        if not np.all(np.isfinite(x)):
            raise DegenerateDensity("non-finite point")
        lp = self.component_log_densities(x)
        out = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
        return out[0] if single else out

    def log_likelihood(self, data) -> float:
        return float(np.sum(self.log_density(data)))

    def n_parameters(self) -> int:
        k, d = self.n_components, self.dim
        return (k - 1) + k * d + k * d * (d + 1) // 2

    def affine(self, scale, shift) -> GaussianMixture:
        """Mixture of ``scale * x + shift`` (per-dimension positive scale)."""
        s = np.asarray(scale, dtype=float)
        return GaussianMixture(
            self.weights.copy(),
            self.means * s + shift,
            self.covariances * np.outer(s, s),
        )

    # serialization
    def to_text(self, header_lines=()) -> str:
        lines = [FORMAT_TAG, *header_lines, f"{self.n_components} {self.dim}"]
        for p, m, s in zip(self.weights, self.means, self.covariances):
            vals = [p, *m, *s.ravel()]
            lines.append(" ".join(f"{v:.17g}" for v in vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> tuple[GaussianMixture, list[str]]:
        """Parse :meth:`to_text` output; returns the mixture and extra header lines."""
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != FORMAT_TAG:
            raise ModelFormatError(f"unsupported model format: {lines[0] if lines else '<empty>'!r}")
        i = 1
        extra = []
        while i < len(lines) and not lines[i][0].isdigit():
            extra.append(lines[i])
            i += 1
        try:
            k, d = (int(v) for v in lines[i].split())
            rows = [[float(v) for v in ln.split()] for ln in lines[i + 1 : i + 1 + k]]
        except (ValueError, IndexError):
            raise ModelFormatError("malformed model body") from None
        if len(rows) != k or any(len(r) != 1 + d + d * d for r in rows):
            raise ModelFormatError("component rows do not match the declared K and D")
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1 : 1 + d], arr[:, 1 + d :].reshape(k, d, d)), extra


@dataclass
class FitReport:
    log_likelihood_trace: list[float]
    iterations: int
    converged: bool
    seed: int

    def to_text(self) -> str:
        lines = [
            f"seed {self.seed}",
            f"iterations {self.iterations}",
            f"converged {str(self.converged).lower()}",
            f"final_log_likelihood {self.log_likelihood_trace[-1]:.17g}",
            "log_likelihood_trace " + " ".join(f"{v:.17g}" for v in self.log_likelihood_trace),
        ]
        return "\n".join(lines) + "\n"


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(len(x))
        else:
            idx = rng.choice(len(x), p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, iters: int = KMEANS_ITERS):
    """Lloyd iterations from k-means++ seeds; returns ``(centers, labels)``."""
    centers = _kmeans_pp(x, k, rng)
    labels = np.zeros(len(x), dtype=int)
    for _ in range(iters):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return centers, labels


def _regularize(cov: np.ndarray) -> np.ndarray:
    d = cov.shape[-1]
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    ridge = RIDGE * np.trace(cov, axis1=-2, axis2=-1) / d
    cov = cov + ridge[:, None, None] * np.eye(d)
    vals, vecs = np.linalg.eigh(cov)
    if np.any(vals < EIG_FLOOR):
        vals = np.maximum(vals, EIG_FLOOR)
        cov = np.einsum("kij,kj,klj->kil", vecs, vals, vecs)
    return cov


def _m_step(x: np.ndarray, resp: np.ndarray):
    nk = resp.sum(axis=0)
    if np.any(nk <= 0):
        # An emptied component keeps a sliver of mass so the weights stay valid.
        resp = resp + 1e-300
        nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    means = resp.T @ x / nk[:, None]
    diff = x[:, None, :] - means[None, :, :]
    cov = np.einsum("nk,nki,nkj->kij", resp, diff, diff) / nk[:, None, None]
    return weights, means, _regularize(cov)


def fit_em(
    data,
    n_components: int,
    seed: int = 0,
    max_iters: int = 500,
    tol: float = 1e-7,
) -> tuple[GaussianMixture, FitReport]:
    """Fit a full-covariance mixture with EM from a k-means++ start.

    Convergence is declared when the total log-likelihood improves by less
    than ``tol`` between iterations. The result does not depend on the order
    of ``data``.

    Raises
    ------
    TooFewPoints
        Fewer points than components.
    SingularCovariance
        Non-finite data defeated the covariance floor.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("data must be an (n, D) array")
    if n_components < 1:
        raise FitError("need at least one component")
    if len(x) < n_components:
        raise TooFewPoints(f"{len(x)} points for {n_components} components")
    if not np.all(np.isfinite(x)):
        raise SingularCovariance("data contains non-finite values")

    # Canonical row order makes the fit permutation invariant.
    x = x[np.lexsort(x.T[::-1])]
    center = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    z = (x - center) / scale

    rng = np.random.default_rng(seed)
    _, labels = kmeans(z, n_components, rng)
    resp = np.zeros((len(z), n_components))
    resp[np.arange(len(z)), labels] = 1.0
    weights, means, covs = _m_step(z, resp)

    trace: list[float] = []
    converged = False
    iterations = 0
    best = None
    for iterations in range(1, max_iters + 2):
        gm = GaussianMixture(weights, means, covs)
        lp = gm.component_log_densities(z)
        norm = logsumexp(lp, axis=1, keepdims=True)
        ll = float(norm.sum())
        if trace and ll < trace[-1]:
            # The covariance ridge makes the M-step inexact, so near the optimum
            # a step can lose a sliver of likelihood; keep the better parameters.
            gm = best
            iterations -= 1
            converged = True
            break
        trace.append(ll)
        best = gm
        if iterations > max_iters:
            iterations = max_iters
            break
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            converged = True
            break
        weights, means, covs = _m_step(z, np.exp(lp - norm))

    if not np.all(np.isfinite(trace)):
        raise SingularCovariance("log-likelihood became non-finite")
    # Likelihoods in original units differ by the constant log-Jacobian.
    jac = float(np.sum(np.log(scale))) * len(x)
    report = FitReport([t - jac for t in trace], iterations, converged, seed)
    log.debug("EM K=%d seed=%d: %d iterations, converged=%s", n_components, seed, iterations, converged)
    return gm.affine(scale, center), report


def information_criteria(gm: GaussianMixture, data) -> tuple[float, float]:
    """``(BIC, AIC)`` of ``gm`` on ``data``."""
    x = np.asarray(data, dtype=float)
    if len(x) == 0:
        raise TooFewPoints("empty data")
    ll = gm.log_likelihood(x)
    p = gm.n_parameters()
    return -2.0 * ll + p * math.log(len(x)), -2.0 * ll + 2.0 * p


@dataclass(frozen=True)
class CriteriaRow:
    k: int
    bic: float
    aic: float


def select_k(data, k_range: tuple[int, int], seed: int = 0, **fit_kwargs):
    """Fit every ``K`` in the inclusive ``k_range`` and pick the BIC/AIC minimizers.

    Returns ``(best_k_bic, best_k_aic, table)``. A ``K`` whose fit fails is
    left out of the table.
    """
    x = np.asarray(data, dtype=float)
    k_lo, k_hi = k_range
    if not 1 <= k_lo <= k_hi or k_hi > max(1, len(x) // 10):
        raise FitError(f"k_range {k_range} must lie within [1, {len(x) // 10}]")
    table = []
    for k in range(k_lo, k_hi + 1):
        try:
            gm, _ = fit_em(x, k, seed=seed, **fit_kwargs)
        except FitError as exc:
            log.warning("K=%d failed: %s", k, exc)
            continue
        table.append(CriteriaRow(k, *information_criteria(gm, x)))
    if not table:
        raise FitError("no K in range could be fitted")
    best_bic = min(table, key=lambda r: r.bic).k
    best_aic = min(table, key=lambda r: r.aic).k
    return best_bic, best_aic, table
