"""Cyclic input/angle datasets: CSV ingestion, validation and branch splitting.

A dataset is a sequence of reciprocating cycles. Each cycle holds the same
number of samples ``(q, gamma)`` where ``q`` is the normalized control input
and ``gamma`` the measured bending angle in degrees.
"""

from __future__ import annotations

import csv
import enum
import logging
import os
import tempfile
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import (
    DuplicateStep,
    InvalidSplit,
    MissingColumn,
    MultipleTurningPoints,
    NonNumericField,
    OutOfBounds,
    RaggedCycles,
)

log = logging.getLogger(__name__)

COLUMNS = ("cycle_id", "step_index", "q", "gamma")
SMOOTHING_WINDOW = 5


class Sample(NamedTuple):
    q: float
    gamma: float
    cycle_id: int
    step_index: int


class Branch(enum.Enum):
    """Motion direction of a sample; cw is the ascending sweep."""

    ASCENDING = "cw"
    DESCENDING = "ccw"


@dataclass(frozen=True, eq=False)
class CycleDataset:
    """Validated samples sorted by ``(cycle_id, step_index)``.

    Stored column-wise; ``samples`` materializes the row view.
    """

    cycle_id: np.ndarray
    step_index: np.ndarray
    q: np.ndarray
    gamma: np.ndarray
    q_min: float
    q_max: float

    def __post_init__(self):
        for name in COLUMNS:
            arr = getattr(self, name)
            arr.setflags(write=False)
        _validate(self)

    @classmethod
    def from_arrays(cls, cycle_id, step_index, q, gamma, q_min, q_max):
        cycle_id = np.asarray(cycle_id, dtype=np.int64)
        step_index = np.asarray(step_index, dtype=np.int64)
        q = np.asarray(q, dtype=float)
        gamma = np.asarray(gamma, dtype=float)
        order = np.lexsort((step_index, cycle_id))
        return cls(
            cycle_id[order].copy(),
            step_index[order].copy(),
            q[order].copy(),
            gamma[order].copy(),
            float(q_min),
            float(q_max),
        )

    def __len__(self):
        return len(self.q)

    @property
    def cycle_ids(self) -> np.ndarray:
        return np.unique(self.cycle_id)

    @property
    def cycles(self) -> int:
        return len(self.cycle_ids)

    @property
    def points_per_cycle(self) -> int:
        return len(self) // self.cycles

    @property
    def samples(self) -> list[Sample]:
        return [
            Sample(float(q), float(g), int(c), int(s))
            for q, g, c, s in zip(self.q, self.gamma, self.cycle_id, self.step_index)
        ]

    @property
    def points(self) -> np.ndarray:
        """Data points as an ``(n, 2)`` array of ``[q, gamma]`` rows."""
        return np.column_stack([self.q, self.gamma])

    def select_cycles(self, ids) -> CycleDataset:
        mask = np.isin(self.cycle_id, np.asarray(ids))
        return CycleDataset.from_arrays(
            self.cycle_id[mask],
            self.step_index[mask],
            self.q[mask],
            self.gamma[mask],
            self.q_min,
            self.q_max,
        )

    def cycle_slices(self):
        """Yield ``(cycle_id, slice)`` pairs into the column arrays."""
        n = self.points_per_cycle
        for i, cid in enumerate(self.cycle_ids):
            yield int(cid), slice(i * n, (i + 1) * n)


def _validate(ds: CycleDataset) -> None:
    n = len(ds.q)
    if not (len(ds.cycle_id) == len(ds.step_index) == len(ds.gamma) == n):
        raise RaggedCycles("column lengths differ")
    if n == 0:
        raise RaggedCycles("dataset has no cycles")
    if not ds.q_min < ds.q_max:
        raise OutOfBounds(f"empty input range [{ds.q_min}, {ds.q_max}]")
    if np.any(ds.cycle_id < 0) or np.any(ds.step_index < 0):
        raise NonNumericField("cycle_id and step_index must be non-negative")
    if not (np.all(np.isfinite(ds.q)) and np.all(np.isfinite(ds.gamma))):
        raise NonNumericField("q and gamma must be finite")
    bad = (ds.q < ds.q_min) | (ds.q > ds.q_max)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise OutOfBounds(
            f"q={ds.q[i]!r} (cycle {ds.cycle_id[i]}, step {ds.step_index[i]}) "
            f"outside [{ds.q_min}, {ds.q_max}]"
        )
    ids, counts = np.unique(ds.cycle_id, return_counts=True)
    if np.any(counts != counts[0]):
        raise RaggedCycles(
            "cycle lengths differ: "
            + ", ".join(f"{c}:{k}" for c, k in zip(ids.tolist(), counts.tolist()))
        )
    same_cycle = ds.cycle_id[1:] == ds.cycle_id[:-1]
    if np.any(same_cycle & (np.diff(ds.step_index) <= 0)):
        raise DuplicateStep("step_index must be strictly increasing within a cycle")


def _parse(value: str, kind, column: str, lineno: int):
    try:
        if kind is int:
            return int(value)
        return float(value)
    except ValueError:
        raise NonNumericField(
            f"line {lineno}: column {column!r} has non-numeric value {value!r}"
        ) from None


def load_csv(path, q_min: float, q_max: float) -> CycleDataset:
    """Read a ``cycle_id,step_index,q,gamma`` CSV file.

    Raises
    ------
    MissingColumn, NonNumericField, RaggedCycles, OutOfBounds
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MissingColumn(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        idx = [header.index(c) for c in COLUMNS]
        kinds = (int, int, float, float)
        cols: list[list] = [[], [], [], []]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise NonNumericField(f"line {lineno}: expected {len(header)} fields")
            for out, j, kind, name in zip(cols, idx, kinds, COLUMNS):
                out.append(_parse(row[j].strip(), kind, name, lineno))
    return CycleDataset.from_arrays(*cols, q_min=q_min, q_max=q_max)


def _atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_csv_text(ds: CycleDataset) -> str:
    lines = [",".join(COLUMNS)]
    for c, s, q, g in zip(ds.cycle_id, ds.step_index, ds.q, ds.gamma):
        lines.append(f"{int(c)},{int(s)},{float(q)!r},{float(g)!r}")
    return "\n".join(lines) + "\n"


def write_csv(ds: CycleDataset, path) -> None:
    """Write ``ds`` with LF endings and shortest round-trip float repr."""
    _atomic_write_text(path, to_csv_text(ds))


def _turning_index(q: np.ndarray) -> int:
    if len(q) < 2:
        return len(q) - 1
    smooth = uniform_filter1d(q, size=SMOOTHING_WINDOW, mode="nearest")
    dq = np.sign(np.diff(smooth))
    dq = dq[dq != 0]
    if np.count_nonzero(dq[1:] != dq[:-1]) > 1:
        raise MultipleTurningPoints("more than one reversal of the input direction")
    # The smoothed peak can sit a sample or two off a sharp raw peak; refine
    # within the filter window.
    center = int(np.argmax(smooth))
    half = SMOOTHING_WINDOW // 2
    lo = max(0, center - half)
    return lo + int(np.argmax(q[lo : center + half + 1]))


def branch_labels(ds: CycleDataset) -> np.ndarray:
    """Per-sample :class:`Branch` labels, aligned with the column arrays.

    Samples up to and including the (smoothed) input maximum of a cycle are
    ascending; the remainder descending.
    """
    labels = np.empty(len(ds), dtype=object)
    for cid, sl in ds.cycle_slices():
        q = ds.q[sl]
        turn = _turning_index(q)
        if turn == len(q) - 1:
            log.warning("cycle %d has no descending half", cid)
        lab = np.full(len(q), Branch.DESCENDING, dtype=object)
        lab[: turn + 1] = Branch.ASCENDING
        labels[sl] = lab
    return labels


@dataclass(frozen=True, eq=False)
class BranchSamples:
    """Samples that carry a single branch label."""

    label: Branch
    cycle_id: np.ndarray
    step_index: np.ndarray
    q: np.ndarray
    gamma: np.ndarray

    def __len__(self):
        return len(self.q)

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.q, self.gamma])


def split_cycles(ds: CycleDataset) -> tuple[BranchSamples, BranchSamples]:
    """Split every cycle at its turning point into ascending and descending parts."""
    labels = branch_labels(ds)
    out = []
    for label in (Branch.ASCENDING, Branch.DESCENDING):
        m = labels == label
        out.append(
            BranchSamples(label, ds.cycle_id[m], ds.step_index[m], ds.q[m], ds.gamma[m])
        )
    return out[0], out[1]


def train_test_split(ds: CycleDataset, train_cycles: int) -> tuple[CycleDataset, CycleDataset]:
    """First ``train_cycles`` cycles (by id) for training, the rest for testing."""
    ids = ds.cycle_ids
    if not 0 < train_cycles < len(ids):
        raise InvalidSplit(
            f"train_cycles must be in [1, {len(ids) - 1}], got {train_cycles}"
        )
    return ds.select_cycles(ids[:train_cycles]), ds.select_cycles(ids[train_cycles:])
