"""Three-curve hysteresis model and hysteresis-compensated inverse kinematics.

The model holds a direction-agnostic *nominal* regression plus one regression
per sweep direction (*cw* for ascending input, *ccw* for descending). The
inverse solver first iterates on the nominal curve and then refines on the
branch that matches the direction the input is moving in.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CycleDataset, _atomic_write_text, split_cycles
from .errors import (
    EmptyBranch,
    HystkinError,
    ModelFormatError,
    NonFiniteTarget,
    StepFailure,
    Unreachable,
)
from .gmm import FitReport, fit_em
from .gmr import GmrModel, Prediction

log = logging.getLogger(__name__)

DEADBAND = 1e-4
PROBE_STEP = 1e-5
MAX_BACKTRACKS = 30
FLAT_FRACTION = 0.1
BUNDLE_FILES = ("nominal", "cw", "ccw")

NOMINAL, CW, CCW = 0, 1, -1
_BRANCH_NAMES = {NOMINAL: "nominal", CW: "cw", CCW: "ccw"}


@dataclass(frozen=True, eq=False)
class HysteresisModel:
    nominal: GmrModel
    cw: GmrModel
    ccw: GmrModel
    q_min: float
    q_max: float
    epsilon: float = 0.05

    def __post_init__(self):
        if not self.q_min < self.q_max:
            raise HystkinError(f"need q_min < q_max, got [{self.q_min}, {self.q_max}]")

    @property
    def k_nominal(self) -> int:
        return self.nominal.n_components

    @property
    def k_cw(self) -> int:
        return self.cw.n_components

    @property
    def k_ccw(self) -> int:
        return self.ccw.n_components

    def branch(self, direction: int) -> GmrModel:
        """Regression for a motion direction: +1 cw, -1 ccw, 0 nominal."""
        if direction > 0:
            return self.cw
        if direction < 0:
            return self.ccw
        return self.nominal

    def nominal_gain(self, n: int = 101) -> float:
        """Median finite-difference slope of the nominal curve (degrees per unit q)."""
        q = np.linspace(self.q_min, self.q_max, n)
        return float(np.median(np.diff(self.nominal.predict_mean(q)) / np.diff(q)))

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in BUNDLE_FILES:
            _atomic_write_text(d / name, getattr(self, name).to_text())
        meta = f"q_min {self.q_min!r}\nq_max {self.q_max!r}\nepsilon {self.epsilon!r}\n"
        _atomic_write_text(d / "meta", meta)

    @classmethod
    def load(cls, directory) -> HysteresisModel:
        d = Path(directory)
        try:
            models = {name: GmrModel.from_text((d / name).read_text(encoding="utf-8")) for name in BUNDLE_FILES}
            meta = dict(line.split(None, 1) for line in (d / "meta").read_text(encoding="utf-8").splitlines() if line.strip())
            return cls(
                **models,
                q_min=float(meta["q_min"]),
                q_max=float(meta["q_max"]),
                epsilon=float(meta.get("epsilon", 0.05)),
            )
        except (KeyError, ValueError) as exc:
            raise ModelFormatError(f"{directory}: bad model bundle ({exc})") from None


def train_hysteresis_model(
    train: CycleDataset,
    k_nominal: int = 9,
    k_cw: int = 9,
    k_ccw: int = 9,
    seed: int = 0,
    **fit_kwargs,
) -> tuple[HysteresisModel, dict[str, FitReport]]:
    """Fit the nominal model on every sample and one model per branch.

    Returns the model and the per-curve EM reports keyed ``nominal``/``cw``/``ccw``.
    """
    if train.cycles < 2:
        raise HystkinError(f"need at least 2 training cycles, got {train.cycles}")
    asc, desc = split_cycles(train)
    fits = {}
    for name, pts, k in (
        ("nominal", train.points, k_nominal),
        ("cw", asc.points, k_cw),
        ("ccw", desc.points, k_ccw),
    ):
        if len(pts) < k:
            raise EmptyBranch(f"{name} branch has {len(pts)} points for K={k}")
        fits[name] = fit_em(pts, k, seed=seed, **fit_kwargs)
    model = HysteresisModel(
        GmrModel(fits["nominal"][0]),
        GmrModel(fits["cw"][0]),
        GmrModel(fits["ccw"][0]),
        train.q_min,
        train.q_max,
    )
    return model, {name: rep for name, (_, rep) in fits.items()}


def direction_of(q: float, q_prev: float, deadband: float = DEADBAND) -> int:
    if q > q_prev + deadband:
        return CW
    if q < q_prev - deadband:
        return CCW
    return NOMINAL


def predict_directional(model: HysteresisModel, q: float, q_prev: float) -> Prediction:
    """Predict with the branch selected by the motion from ``q_prev`` to ``q``."""
    if not (math.isfinite(q) and math.isfinite(q_prev)):
        raise NonFiniteTarget("inputs must be finite")
    return model.branch(direction_of(q, q_prev)).predict(q)


def armijo_step(objective_at, q: float, direction: float, alpha_0: float, c: float = 1e-4, beta: float = 0.5) -> float:
    """Backtracking step length with the sufficient-decrease test.

    Tries ``alpha_0 * beta**n`` for ``n = 0..30`` and returns the first that
    satisfies ``f(q + a*d) <= f(q) - c*a*|d|*s``, with ``s`` the finite
    difference decrease rate of ``f`` along ``sign(d)``.

    Raises
    ------
    StepFailure
        ``d`` is not a descent direction or no trial length is accepted.
    """
    if direction == 0 or not alpha_0 > 0:
        raise StepFailure("need a non-zero direction and a positive initial step")
    f0 = objective_at(q)
    slope = (f0 - objective_at(q + PROBE_STEP * math.copysign(1.0, direction))) / PROBE_STEP
    if not slope > 0:
        raise StepFailure("direction does not decrease the objective")
    alpha = alpha_0
    for _ in range(MAX_BACKTRACKS + 1):
        if objective_at(q + alpha * direction) <= f0 - c * alpha * abs(direction) * slope:
            return alpha
        alpha *= beta
    raise StepFailure("no step length gave sufficient decrease")


@dataclass
class SolverState:
    """Mutable solver context carried between successive inverse solves.

    ``q_prev`` and ``direction`` describe where the actuator was left; the
    next solve starts from there.
    """

    q_prev: float = 0.0
    direction: int = NOMINAL
    epsilon: float = 0.05
    max_iters: int = 200
    alpha_0: float | None = None
    armijo_c: float = 1e-4
    armijo_beta: float = 0.5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise HystkinError("epsilon must be positive")
        if not (0 < self.armijo_beta < 1 and 0 < self.armijo_c < 1):
            raise HystkinError("Armijo parameters must lie in (0, 1)")


@dataclass
class InverseSolution:
    q_star: float
    gamma_achieved: float
    iterations: int
    branch_trace: list[str] = field(default_factory=list)
    converged: bool = False
    q_trace: list[float] = field(default_factory=list)

    def trace_summary(self) -> str:
        """Run-length encoded branch trace, e.g. ``cw*4|ccw*2``."""
        runs: list[list] = []
        for name in self.branch_trace:
            if runs and runs[-1][0] == name:
                runs[-1][1] += 1
            else:
                runs.append([name, 1])
        return "|".join(f"{n}*{k}" for n, k in runs)


def _local_slope(gmr: GmrModel, q: float, lo: float, hi: float, h: float = 1e-4) -> float:
    a, b = max(lo, q - h), min(hi, q + h)
    ya, yb = gmr.predict_mean(np.array([a, b]))
    return float((yb - ya) / (b - a))


def _alpha_0(model: HysteresisModel, state: SolverState) -> float:
    if state.alpha_0 is not None:
        return state.alpha_0
    return 1.0 / abs(model.nominal_gain())


def _barrier_cost(gmr, gamma_des, q, clip, epsilon):
    """Squared residual on ``gmr``, infinite once the target is overshot.

    Overshooting would reverse the motion and hop onto the other branch, so
    such trial points are rejected and the line search backtracks instead.
    """
    side = math.copysign(1.0, gamma_des - gmr.predict(q).mean)

    def cost(v):
        r = gamma_des - gmr.predict(clip(v)).mean
        if r * side < 0 and abs(r) >= epsilon:
            return math.inf
        return 0.5 * r * r

    return cost


def _backtrack_decrease(cost, q, step, alpha_0, beta):
    f0 = cost(q)
    alpha = alpha_0
    for _ in range(MAX_BACKTRACKS + 1):
        if cost(q + alpha * step) < f0:
            return alpha
        alpha *= beta
    return 0.0


def _descend(model, gmr_for, gamma_des, q, alpha_0, state, on_iter=None):
    """Damped fixed-point iteration ``q += a * (gamma_des - gamma(q))``.

    ``gmr_for(direction)`` picks the regression for a motion direction.
    Returns ``(q, gamma, iterations, converged)``.
    """
    lo, hi = model.q_min, model.q_max
    clip = lambda v: min(max(v, lo), hi)  # noqa: E731
    gain = model.nominal_gain()
    direction = state.direction
    for it in range(state.max_iters + 1):
        gmr = gmr_for(direction)
        gamma = gmr.predict(q).mean
        if on_iter is not None:
            on_iter(direction, q)
        resid = gamma_des - gamma
        if abs(resid) < state.epsilon:
            return q, gamma, it, True
        if it == state.max_iters:
            break
        # Slopes much shallower than the overall gain are flat stretches whose
        # sign is noise; only a clearly negative slope flips the update.
        slope = _local_slope(gmr, q, lo, hi)
        if abs(slope) < FLAT_FRACTION * abs(gain):
            slope = gain
        step = resid if slope >= 0 else -resid
        step_dir = CW if step > 0 else CCW
        cost = _barrier_cost(gmr_for(step_dir), gamma_des, q, clip, state.epsilon)
        try:
            alpha = armijo_step(cost, q, step, alpha_0, state.armijo_c, state.armijo_beta)
        except StepFailure:
            # A bump on a flat stretch defeats the local test; the fixed-point
            # step may still clear it.
            alpha = _backtrack_decrease(cost, q, step, alpha_0, state.armijo_beta)
            if alpha == 0.0:
                break
        q_new = clip(q + alpha * step)
        if abs(q_new - q) > DEADBAND:
            direction = step_dir
        q = q_new
    return q, gamma, it, False


def nominal_inverse(model: HysteresisModel, gamma_des: float, state: SolverState) -> float:
    """Input that reaches ``gamma_des`` on the nominal curve, starting at ``state.q_prev``.

    Does not modify ``state``.
    """
    if not math.isfinite(gamma_des):
        raise NonFiniteTarget(f"target must be finite, got {gamma_des!r}")
    q, gamma, _, ok = _descend(
        model, lambda _d: model.nominal, gamma_des, state.q_prev, _alpha_0(model, state), state
    )
    if not ok and (q <= model.q_min or q >= model.q_max):
        raise Unreachable(
            f"nominal model cannot reach {gamma_des!r} (stopped at {gamma!r}, q={q!r})", q=q
        )
    return q


def solve_inverse(model: HysteresisModel, state: SolverState, gamma_des: float) -> InverseSolution:
    """Hysteresis-compensated inverse kinematics; updates ``state`` in place.

    Starting from the nominal solution, each iterate is scored with the cw
    model while the input rises and the ccw model while it falls. Step
    lengths come from :func:`armijo_step` and iterates are clamped to
    ``[q_min, q_max]``. Unreachable targets return the best-effort input with
    ``converged=False``.
    """
    if not math.isfinite(gamma_des):
        raise NonFiniteTarget(f"target must be finite, got {gamma_des!r}")
    alpha_0 = _alpha_0(model, state)

    here = model.branch(state.direction).predict(state.q_prev).mean
    if abs(gamma_des - here) < state.epsilon:
        return InverseSolution(state.q_prev, here, 0, [], True, [])

    try:
        q0 = nominal_inverse(model, gamma_des, state)
    except Unreachable as exc:
        q0 = exc.q
    first = direction_of(q0, state.q_prev)
    start = SolverState(
        q_prev=q0,
        direction=first if first != NOMINAL else state.direction,
        epsilon=state.epsilon,
        max_iters=state.max_iters,
        armijo_c=state.armijo_c,
        armijo_beta=state.armijo_beta,
    )
    trace: list[str] = []
    dirs: list[int] = []
    qs: list[float] = []

    def record(d, q):
        trace.append(_BRANCH_NAMES[d])
        dirs.append(d)
        qs.append(q)

    q, gamma, iters, ok = _descend(model, model.branch, gamma_des, q0, alpha_0, start, record)
    state.q_prev = q
    state.direction = dirs[-1] if dirs else state.direction
    if not ok:
        log.info("target %.4g not reached: stopped at q=%.6g, gamma=%.6g", gamma_des, q, gamma)
    return InverseSolution(q, gamma, iters, trace, ok, qs)


@dataclass
class Evaluation:
    rmse_nominal: float
    rmse_compensated: float
    improvement_pct: float
    per_sample: dict[str, np.ndarray]


def rmse(err) -> float:
    return float(np.sqrt(np.mean(np.square(err))))


def evaluate(model: HysteresisModel, test: CycleDataset) -> Evaluation:
    """Nominal vs direction-aware prediction error on recorded test cycles.

    The motion direction of each sample comes from the recorded input
    sequence (``q[n] - q[n-1]``); the first sample borrows the direction of
    the step that follows it.
    """
    if len(test) == 0:
        raise HystkinError("empty test set")
    q = test.q
    q_prev = np.empty_like(q)
    q_prev[1:] = q[:-1]
    q_prev[0] = q[0] - (q[1] - q[0]) if len(q) > 1 else q[0]
    dirs = np.where(q > q_prev + DEADBAND, CW, np.where(q < q_prev - DEADBAND, CCW, NOMINAL))

    pred_nom = model.nominal.predict_mean(q)
    pred_comp = np.empty_like(q)
    for d in (NOMINAL, CW, CCW):
        m = dirs == d
        if np.any(m):
            pred_comp[m] = model.branch(d).predict_mean(q[m])

    err_nom = pred_nom - test.gamma
    err_comp = pred_comp - test.gamma
    r_nom, r_comp = rmse(err_nom), rmse(err_comp)
    improvement = 100.0 * (1.0 - r_comp / r_nom) if r_nom > 0 else 0.0
    per_sample = {
        "cycle_id": test.cycle_id,
        "step_index": test.step_index,
        "q": q,
        "gamma": test.gamma,
        "branch": np.array([_BRANCH_NAMES[int(d)] for d in dirs]),
        "pred_nominal": pred_nom,
        "pred_compensated": pred_comp,
        "err_nominal": err_nom,
        "err_compensated": err_comp,
    }
    return Evaluation(r_nom, r_comp, improvement, per_sample)


def tip_error_um(rmse_deg: float, arm_length_mm: float = 3.0) -> float:
    """Arc-length tip error in micrometres for an angular error in degrees."""
    return math.radians(rmse_deg) * arm_length_mm * 1000.0
