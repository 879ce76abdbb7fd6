"""Correlation and CHSH estimation over trial records, with post-selection.

The estimators are plain mergeable counters: any partition of the records,
aggregated in any order, yields the same report.  Empty setting cells are a
hard error rather than a silent NaN, because post-selection can starve
cells and silence there would corrupt a conclusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Union

from .measure import AnalyzerAngle, BsmOutcome, as_angle

# Cell roles in S = E(a,b) - E(a,b') + E(a',b) + E(a',b'); the minus sign
# sits on the (a, b') cell.  Fixed convention; reports carry |S| alongside.
_CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))
_CELL_SIGNS = {(0, 0): +1.0, (0, 1): -1.0, (1, 0): +1.0, (1, 1): +1.0}


class InsufficientDataError(ValueError):
    """A requested estimate has an empty setting cell after filtering."""


class UndefinedPredictionError(ValueError):
    """No closed-form correlation exists for the requested outcome label."""


@dataclass(frozen=True)
class SelectionFilter:
    """Deterministic record predicate used for post-selection."""

    description: str
    predicate: Callable[[object], bool]

    @staticmethod
    def none() -> "SelectionFilter":
        return SelectionFilter("none", lambda record: True)

    @staticmethod
    def bsm_equals(label: Union[BsmOutcome, str]) -> "SelectionFilter":
        wanted = label.value if isinstance(label, BsmOutcome) else str(label)
        return SelectionFilter(f"bsm={wanted}", lambda record: record.bsm_label == wanted)

    @staticmethod
    def custom(description: str, predicate: Callable[[object], bool]) -> "SelectionFilter":
        return SelectionFilter(description, predicate)

    def keeps(self, record) -> bool:
        return self.predicate(record)


@dataclass(frozen=True)
class CorrelationEstimate:
    """E = (N++ + N-- - N+- - N-+)/N with binomial standard error."""

    e_value: float
    n: int
    std_err: float

    def to_json_dict(self) -> dict:
        return {"e": self.e_value, "n": self.n, "std_err": self.std_err}


def _estimate_from_counts(aligned: int, opposed: int) -> CorrelationEstimate:
    n = aligned + opposed
    e = (aligned - opposed) / n
    return CorrelationEstimate(e, n, math.sqrt(max(0.0, 1.0 - e * e) / n))


@dataclass(frozen=True)
class ChshReport:
    """Four correlations, the combined S statistic, and selection bookkeeping."""

    e_ab: CorrelationEstimate
    e_ab_prime: CorrelationEstimate
    e_a_prime_b: CorrelationEstimate
    e_a_prime_b_prime: CorrelationEstimate
    s_value: float
    s_std_err: float
    filter_description: str
    kept: int
    total: int

    @property
    def s_abs(self) -> float:
        return abs(self.s_value)

    def to_json_dict(self) -> dict:
        return {
            "e_ab": self.e_ab.to_json_dict(),
            "e_ab_prime": self.e_ab_prime.to_json_dict(),
            "e_a_prime_b": self.e_a_prime_b.to_json_dict(),
            "e_a_prime_b_prime": self.e_a_prime_b_prime.to_json_dict(),
            "s": self.s_value,
            "s_abs": self.s_abs,
            "s_std_err": self.s_std_err,
            "filter": self.filter_description,
            "kept": self.kept,
            "total": self.total,
        }


def _tally(records: Iterable, selection: SelectionFilter):
    """One streaming pass: per-cell (aligned, opposed) counts plus totals."""
    counts = {cell: [0, 0] for cell in _CELLS}
    total = kept = 0
    for record in records:
        total += 1
        if not selection.keeps(record):
            continue
        kept += 1
        cell = (record.setting0_index, record.setting3_index)
        if cell not in counts:
            raise ValueError(f"setting indices {cell} outside the two-by-two design")
        counts[cell][0 if record.outcome0 == record.outcome3 else 1] += 1
    return counts, kept, total


def correlation(
    records: Iterable,
    setting_pair: tuple[int, int],
    selection: Union[SelectionFilter, None] = None,
) -> CorrelationEstimate:
    """Estimate E for one setting cell over the filtered records."""
    selection = selection or SelectionFilter.none()
    pair = (int(setting_pair[0]), int(setting_pair[1]))
    if pair not in _CELL_SIGNS:
        raise ValueError(f"setting pair {pair} outside the two-by-two design")
    counts, _, _ = _tally(records, selection)
    aligned, opposed = counts[pair]
    if aligned + opposed == 0:
        raise InsufficientDataError(
            f"no records in setting cell {pair} with filter {selection.description}"
        )
    return _estimate_from_counts(aligned, opposed)


def chsh_from_counts(
    cell_counts: dict[tuple[int, int], tuple[int, int]],
    filter_description: str,
    kept: int,
    total: int,
) -> ChshReport:
    """Combine per-cell (aligned, opposed) counts into a report.

    This is the mergeable-counter core: counts summed across any partition
    of the records give the identical report.  Raises on any empty cell.
    """
    estimates = {}
    for cell in _CELLS:
        aligned, opposed = cell_counts[cell]
        if aligned + opposed == 0:
            raise InsufficientDataError(
                f"no records in setting cell {cell} with filter {filter_description}"
            )
        estimates[cell] = _estimate_from_counts(aligned, opposed)

    s = sum(_CELL_SIGNS[cell] * estimates[cell].e_value for cell in _CELLS)
    s_err = math.sqrt(sum(estimates[cell].std_err ** 2 for cell in _CELLS))
    return ChshReport(
        e_ab=estimates[(0, 0)],
        e_ab_prime=estimates[(0, 1)],
        e_a_prime_b=estimates[(1, 0)],
        e_a_prime_b_prime=estimates[(1, 1)],
        s_value=float(s),
        s_std_err=float(s_err),
        filter_description=filter_description,
        kept=kept,
        total=total,
    )


def chsh(records: Iterable, selection: Union[SelectionFilter, None] = None) -> ChshReport:
    """Single-pass CHSH estimate: S = E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
    selection = selection or SelectionFilter.none()
    counts, kept, total = _tally(records, selection)
    cell_counts = {cell: (counts[cell][0], counts[cell][1]) for cell in _CELLS}
    return chsh_from_counts(cell_counts, selection.description, kept, total)


def predicted_correlation(
    bsm: BsmOutcome,
    alpha: Union[AnalyzerAngle, float],
    delta: Union[AnalyzerAngle, float],
) -> float:
    """Closed-form E(alpha, delta) for photons (0,3) given a resolving outcome.

    psi- and phi+ carry the angle difference, psi+ and phi- the angle sum;
    the psi states anticorrelate at equal angles, the phi states correlate.
    The coarse OTHER bucket mixes phi+ and phi-, whose correlations cancel
    at generic angles, so no single closed form applies.
    """
    a = as_angle(alpha).radians
    d = as_angle(delta).radians
    bsm = BsmOutcome(bsm)
    if bsm is BsmOutcome.PSI_MINUS:
        return -math.cos(2.0 * (a - d))
    if bsm is BsmOutcome.PSI_PLUS:
        return -math.cos(2.0 * (a + d))
    if bsm is BsmOutcome.PHI_PLUS:
        return math.cos(2.0 * (a - d))
    if bsm is BsmOutcome.PHI_MINUS:
        return math.cos(2.0 * (a + d))
    raise UndefinedPredictionError(
        "the coarse 'other' outcome has no single closed-form correlation"
    )
