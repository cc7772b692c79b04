"""Synthetic hysteretic plant: a play (backlash) operator followed by a cubic gain.

The plant is the ground truth the learned models are checked against. Its
branches have closed-form inverses, so every inverse-kinematics result can be
verified by forward evaluation.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .dataset import Branch, CycleDataset
from .errors import HystkinError, OutOfBounds, Unreachable

SPAN_DEG = 45.0


@dataclass(frozen=True)
class CubicGain:
    """Monotone map ``gamma = a*z + b*z**3`` from effective input to degrees."""

    a: float
    b: float = 0.0

    def __call__(self, z):
        return self.a * z + self.b * z**3

    def derivative(self, z):
        return self.a + 3.0 * self.b * np.square(z)

    def inverse(self, gamma: float, lo: float, hi: float) -> float:
        f = lambda z: self(z) - gamma  # noqa: E731
        return bisect(f, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)

    @classmethod
    def calibrated(cls, width: float, a: float = 40.0, span: float = SPAN_DEG, reach: float = 1.0):
        """Pick ``b`` so that ``gamma(reach - width/2) == span``."""
        s = reach - width / 2.0
        return cls(a=a, b=(span - a * s) / s**3)


PRESETS = {
    "yaw-like": 0.04,
    "pitch-like": 0.12,
}


@dataclass
class BacklashPlant:
    """Play operator of width ``width`` driving ``gain``; additive Gaussian noise.

    Mutable and single-owner: :meth:`step` advances ``state_z`` and the noise
    stream. Use :meth:`clone` to get an independent copy for another thread.
    """

    width: float
    gain: CubicGain
    noise_sigma: float = 0.0
    seed: int = 0
    q_min: float = -1.0
    q_max: float = 1.0
    state_z: float = 0.0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.width < 0 or self.noise_sigma < 0:
            raise HystkinError("width and noise_sigma must be non-negative")
        grid = np.linspace(self.q_min, self.q_max, 101)
        if np.any(self.gain.derivative(grid) <= 0):
            raise HystkinError("gain curve must be strictly increasing on the input range")
        self._rng = np.random.default_rng(self.seed)

    @classmethod
    def preset(cls, name: str, noise_sigma: float = 0.15, seed: int = 0) -> BacklashPlant:
        try:
            width = PRESETS[name]
        except KeyError:
            raise HystkinError(
                f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}"
            ) from None
        return cls(width, CubicGain.calibrated(width), noise_sigma, seed)

    def clone(self, seed: int | None = None) -> BacklashPlant:
        out = copy.deepcopy(self)
        if seed is not None:
            out.seed = seed
            out._rng = np.random.default_rng(seed)
        return out

    def reset(self, z: float = 0.0) -> None:
        self.state_z = z
        self._rng = np.random.default_rng(self.seed)

    def step(self, q: float) -> float:
        if not self.q_min <= q <= self.q_max:
            raise OutOfBounds(f"q={q!r} outside [{self.q_min}, {self.q_max}]")
        half = self.width / 2.0
        self.state_z = min(max(self.state_z, q - half), q + half)
        gamma = float(self.gain(self.state_z))
        if self.noise_sigma > 0:
            gamma += self.noise_sigma * float(self._rng.standard_normal())
        return gamma

    def drive(self, qs) -> float:
        """Step through ``qs`` in order and return the last output."""
        gamma = float("nan")
        for q in qs:
            gamma = self.step(float(q))
        return gamma

    # Steady-state branch curves (noise free).
    def ascending(self, q):
        z = np.maximum(np.asarray(q, dtype=float) - self.width / 2.0, self.q_min + self.width / 2.0)
        return self.gain(z)

    def descending(self, q):
        z = np.minimum(np.asarray(q, dtype=float) + self.width / 2.0, self.q_max - self.width / 2.0)
        return self.gain(z)

    @property
    def angle_range(self) -> tuple[float, float]:
        half = self.width / 2.0
        return float(self.gain(self.q_min + half)), float(self.gain(self.q_max - half))

    def analytic_inverse(self, gamma_des: float, direction: Branch) -> float:
        """Input that yields ``gamma_des`` on the given steady-state branch."""
        lo, hi = self.angle_range
        if not lo <= gamma_des <= hi:
            raise Unreachable(f"gamma_des={gamma_des!r} outside [{lo}, {hi}]")
        half = self.width / 2.0
        z = self.gain.inverse(gamma_des, self.q_min + half, self.q_max - half)
        return z + half if direction is Branch.ASCENDING else z - half


def sweep_inputs(steps: int, amplitude: float) -> np.ndarray:
    """One triangle-wave period: ``steps/2`` steps up from ``-amplitude``, ``steps/2`` back."""
    half = steps // 2
    up = -amplitude + 2.0 * amplitude * np.arange(half + 1) / half
    return np.concatenate([up, up[-2:0:-1]])


def generate_dataset(
    plant: BacklashPlant,
    cycles: int,
    steps: int,
    amplitude: float = 1.0,
    warmup: bool = False,
) -> CycleDataset:
    """Drive ``plant`` through ``cycles`` reciprocating sweeps and record every step.

    The plant state carries over between cycles. With ``warmup`` an unrecorded
    sweep is run first so the data starts on the steady-state loop.
    """
    if cycles < 1 or steps < 4 or steps % 2:
        raise HystkinError("need cycles >= 1 and an even steps >= 4")
    qs = sweep_inputs(steps, amplitude)
    if warmup:
        plant.drive(qs)
    q = np.tile(qs, cycles)
    gamma = np.array([plant.step(float(v)) for v in q])
    return CycleDataset.from_arrays(
        np.repeat(np.arange(cycles), steps),
        np.tile(np.arange(steps), cycles),
        q,
        gamma,
        plant.q_min,
        plant.q_max,
    )
