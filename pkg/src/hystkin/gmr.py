"""Gaussian mixture regression on a two-dimensional ``(q, gamma)`` mixture.

Conditioning each component on the input gives a per-component linear
predictor; the mixture prediction blends them with the input
responsibilities ``h_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ModelFormatError, NonFiniteInput, SingularInputVariance
from .gmm import GaussianMixture

EXTRAPOLATION_SIGMAS = 2.0


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float
    weights: np.ndarray
    extrapolated: bool = False


@dataclass(frozen=True, eq=False)
class GmrModel:
    """A trained mixture plus the input/output split used for conditioning."""

    mixture: GaussianMixture
    input_index: int = 0
    output_index: int = 1
    _mu_i: np.ndarray = field(init=False, repr=False)
    _mu_o: np.ndarray = field(init=False, repr=False)
    _var_i: np.ndarray = field(init=False, repr=False)
    _slope: np.ndarray = field(init=False, repr=False)
    _cond_var: np.ndarray = field(init=False, repr=False)
    _log_norm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gm = self.mixture
        if gm.dim != 2 or {self.input_index, self.output_index} != {0, 1}:
            raise ModelFormatError("GMR needs a 2-D mixture with one input and one output index")
        i, o = self.input_index, self.output_index
        cov = gm.covariances
        var_i = cov[:, i, i]
        if np.any(var_i <= 0):
            raise SingularInputVariance("a component has zero input variance")
        slope = cov[:, o, i] / var_i
        values = {
            "_mu_i": gm.means[:, i],
            "_mu_o": gm.means[:, o],
            "_var_i": var_i,
            "_slope": slope,
            "_cond_var": cov[:, o, o] - slope * cov[:, i, o],
            "_log_norm": np.log(gm.weights) - 0.5 * (np.log(2 * math.pi) + np.log(var_i)),
        }
        for name, arr in values.items():
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.mixture.n_components

    @property
    def input_envelope(self) -> tuple[float, float]:
        sd = np.sqrt(self._var_i)
        return (
            float(np.min(self._mu_i - EXTRAPOLATION_SIGMAS * sd)),
            float(np.max(self._mu_i + EXTRAPOLATION_SIGMAS * sd)),
        )

    def component_conditional(self, k: int, q: float) -> tuple[float, float]:
        """Mean and variance of the output of component ``k`` given input ``q``."""
        mean = self._mu_o[k] + self._slope[k] * (q - self._mu_i[k])
        return float(mean), float(self._cond_var[k])

    def _log_h(self, q: np.ndarray) -> np.ndarray:
        lp = self._log_norm - 0.5 * (q[:, None] - self._mu_i) ** 2 / self._var_i
        return lp - logsumexp(lp, axis=1, keepdims=True)

    def input_responsibilities(self, q) -> np.ndarray:
        q_arr = np.atleast_1d(np.asarray(q, dtype=float))
        if not np.all(np.isfinite(q_arr)):
            raise NonFiniteInput(f"input must be finite, got {q!r}")
        h = np.exp(self._log_h(q_arr))
        return h[0] if np.ndim(q) == 0 else h

    def predict_many(self, q) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``(mean, variance)`` for an array of inputs."""
        q = np.asarray(q, dtype=float)
        h = self.input_responsibilities(np.atleast_1d(q))
        cond_mean = self._mu_o + self._slope * (np.atleast_1d(q)[:, None] - self._mu_i)
        mean = np.sum(h * cond_mean, axis=1)
        var = np.sum(h**2 * self._cond_var, axis=1)
        return mean.reshape(q.shape), var.reshape(q.shape)

    def predict_mean(self, q):
        return self.predict_many(q)[0]

    def predict(self, q: float) -> Prediction:
        """Blend of component conditionals; variance is weighted by ``h_k**2``."""
        if not math.isfinite(q):
            raise NonFiniteInput(f"input must be finite, got {q!r}")
        h = self.input_responsibilities(float(q))
        cond_mean = self._mu_o + self._slope * (q - self._mu_i)
        lo, hi = self.input_envelope
        return Prediction(
            mean=float(h @ cond_mean),
            variance=float((h**2) @ self._cond_var),
            weights=h,
            extrapolated=not lo <= q <= hi,
        )

    def to_text(self) -> str:
        return self.mixture.to_text([f"gmr input={self.input_index} output={self.output_index}"])

    @classmethod
    def from_text(cls, text: str) -> GmrModel:
        gm, extra = GaussianMixture.from_text(text)
        idx = {"input": 0, "output": 1}
        for line in extra:
            parts = line.split()
            if parts[0] != "gmr":
                raise ModelFormatError(f"unknown header line {line!r}")
            try:
                for part in parts[1:]:
                    key, val = part.split("=")
                    idx[key] = int(val)
            except ValueError:
                raise ModelFormatError(f"bad gmr header {line!r}") from None
        return cls(gm, idx["input"], idx["output"])
