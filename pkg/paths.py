"""Closed path systems of a periodic evolution.

After one period T the zero set returns to itself up to a relabelling. The
relabelling is a permutation whose cycles give the multiplicity M of each
closed path; the lifted displacement over M periods gives its winding numbers.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from errors import ClassificationError, ConfigError, DomainError, InsufficientCoverageError

logger = logging.getLogger(__name__)

COVERAGE_SLACK = 1e-9


@dataclass(frozen=True)
class Cycle:
    members: tuple
    M: int
    winding: tuple

    def to_dict(self):
        return {"members": list(self.members), "M": self.M, "winding": list(self.winding)}


@dataclass(frozen=True)
class PathClassification:
    permutation: tuple
    cycles: tuple
    period: float
    max_residual: float = 0.0

    @property
    def d(self):
        return len(self.permutation)

    @property
    def cycle_type(self):
        return Counter(c.M for c in self.cycles)

    def to_dict(self):
        return {
            "cycles": [c.to_dict() for c in self.cycles],
            "permutation": list(self.permutation),
            "period": self.period,
            "max_residual": self.max_residual,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            cycles = tuple(Cycle(tuple(c["members"]), int(c["M"]), tuple(c["winding"])) for c in data["cycles"])
            return cls(tuple(data["permutation"]), cycles, float(data.get("period", 0.0)),
                       float(data.get("max_residual", 0.0)))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError("classification", f"malformed classification: {e}") from e


def _cycles_of(permutation):
    seen = set()
    cycles = []
    for start in range(len(permutation)):
        if start in seen:
            continue
        members = [start]
        seen.add(start)
        nxt = permutation[start]
        while nxt != start:
            members.append(nxt)
            seen.add(nxt)
            nxt = permutation[nxt]
        cycles.append(members)
    return cycles


def _require_coverage(bundle, t):
    if t > bundle.times[-1] + COVERAGE_SLACK * max(1.0, t):
        raise InsufficientCoverageError(
            f"paths end at t={bundle.times[-1]:.6g} but t={t:.6g} is needed")


def classify(bundle, T, match_tol=None):
    """Permutation, cycles and winding numbers of the paths for period T."""
    cell = bundle.cell
    side = cell.side
    match_tol = 1e-3 * side if match_tol is None else match_tol
    _require_coverage(bundle, T)

    start = bundle.lifted[0]
    after = bundle.position(bundle.times[0] + T)
    cost = cell.lattice_distance(after[:, None], start[None, :])
    rows, cols = linear_sum_assignment(cost)
    permutation = tuple(int(m) for m in cols[np.argsort(rows)])
    residuals = cost[np.arange(bundle.d), list(permutation)]
    worst = float(residuals.max())
    if worst > match_tol:
        raise ClassificationError(
            f"zero set at t=T does not match t=0 (worst distance {worst:.3e} > {match_tol:.3e}); dt may be too large")

    cycles = []
    for members in _cycles_of(permutation):
        M = len(members)
        _require_coverage(bundle, M * T)
        shift = (bundle.position(bundle.times[0] + M * T)[members[0]] - start[members[0]]) / side
        winding = (int(round(shift.real)), int(round(shift.imag)))
        off = abs(shift - complex(*winding)) * side
        if off > match_tol:
            raise ClassificationError(f"path {members[0]} does not close after {M} periods (gap {off:.3e})")
        worst = max(worst, off)
        cycles.append(Cycle(tuple(members), M, winding))

    result = PathClassification(permutation, tuple(cycles), float(T), worst)
    logger.info("Classified %d paths: %s", bundle.d,
                ", ".join(f"{list(c.members)} M={c.M} w={c.winding}" for c in cycles))
    return result


# ── Comparison ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ClassificationDiff:
    """Cycle-type difference between two classifications of the same d.

    removed/added are multisets of multiplicities; joins and splits relate
    labelled cycles and are informational only.
    """
    removed: dict = field(default_factory=dict)
    added: dict = field(default_factory=dict)
    joins: tuple = ()
    splits: tuple = ()

    @property
    def is_empty(self):
        return not self.removed and not self.added

    def describe(self):
        if self.is_empty:
            return ["cycle structure unchanged"]
        lines = [f"{members} (M={[len(m) for m in parts]}) joined into one path with M={len(members)}"
                 for members, parts in self.joins]
        lines += [f"{members} (M={len(members)}) split into M={[len(m) for m in parts]}"
                  for members, parts in self.splits]
        if not lines:
            lines.append(f"removed {self.removed}, added {self.added}")
        return lines

    def to_dict(self):
        return {
            "removed": {str(k): v for k, v in self.removed.items()},
            "added": {str(k): v for k, v in self.added.items()},
            "joins": [{"cycle": list(m), "from": [list(p) for p in parts]} for m, parts in self.joins],
            "splits": [{"cycle": list(m), "into": [list(p) for p in parts]} for m, parts in self.splits],
        }


def _regroup(cycles, others):
    """For each cycle, the cycles of `others` that its members are spread over, when more than one."""
    owner = {n: c.members for c in others for n in c.members}
    found = []
    for c in cycles:
        parts = []
        for n in c.members:
            if owner[n] not in parts:
                parts.append(owner[n])
        if len(parts) > 1:
            found.append((c.members, tuple(parts)))
    return tuple(found)


def compare_classifications(a, b):
    if a.d != b.d:
        raise DomainError(f"cannot compare classifications of d={a.d} and d={b.d}")
    type_a, type_b = a.cycle_type, b.cycle_type
    removed = dict(type_a - type_b)
    added = dict(type_b - type_a)
    joins = _regroup(b.cycles, a.cycles) if removed or added else ()
    splits = _regroup(a.cycles, b.cycles) if removed or added else ()
    return ClassificationDiff(removed, added, joins, splits)
