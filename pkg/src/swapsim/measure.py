"""Projective polarization and Bell-basis measurements with seeded sampling.

Sampling contract: every random choice is made by inverse CDF over a fixed
outcome order (binary: +1 then -1; full Bell: psi-, psi+, phi-, phi+;
partial Bell: psi-, psi+, other), driven by uniforms from a counter-based
stream.  Identical (seed, stream) pairs therefore reproduce identical
outcome sequences on any platform, and distinct streams are independent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np

from .qstate import BellKind, PureState, bell_state

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1

# Outcome of a two-port polarization analyzer: +1 transmitted, -1 reflected.
BinaryOutcome = int

_DEGENERATE_BRANCH = 1e-15  # sampled branches must carry real probability


@dataclass(frozen=True)
class AnalyzerAngle:
    """Polarizer orientation in degrees, canonicalized to [0, 180).

    A polarization analyzer is invariant under a half turn, so angles are
    stored mod 180; 181 degrees and 1 degree are the same setting.
    """

    degrees: float

    def __post_init__(self) -> None:
        value = float(self.degrees)
        if not np.isfinite(value):
            raise ValueError(f"angle must be finite, got {value!r}")
        object.__setattr__(self, "degrees", value % 180.0)

    @property
    def radians(self) -> float:
        return float(np.deg2rad(self.degrees))


def as_angle(value: Union[AnalyzerAngle, float]) -> AnalyzerAngle:
    if isinstance(value, AnalyzerAngle):
        return value
    return AnalyzerAngle(float(value))


class BsmMode(Enum):
    """Bell-state analyzer capability: all four outcomes, or the two-resolving optical version."""

    FULL = "full"
    PARTIAL = "partial"


class BsmOutcome(Enum):
    """Result label of a joint Bell measurement.

    OTHER is the coarse-grained bucket of a partial analyzer that cannot
    split phi- from phi+.
    """

    PSI_MINUS = "psi-minus"
    PSI_PLUS = "psi-plus"
    PHI_MINUS = "phi-minus"
    PHI_PLUS = "phi-plus"
    OTHER = "other"

    @property
    def bell_kind(self) -> Union[BellKind, None]:
        """Matching BellKind, or None for the unresolved bucket."""
        if self is BsmOutcome.OTHER:
            return None
        return BellKind(self.value)


_FULL_OUTCOMES = (
    BsmOutcome.PSI_MINUS,
    BsmOutcome.PSI_PLUS,
    BsmOutcome.PHI_MINUS,
    BsmOutcome.PHI_PLUS,
)
_PARTIAL_OUTCOMES = (BsmOutcome.PSI_MINUS, BsmOutcome.PSI_PLUS, BsmOutcome.OTHER)


def bsm_outcomes(mode: BsmMode) -> tuple[BsmOutcome, ...]:
    """Outcome labels of a Bell analyzer in canonical sampling order."""
    return _FULL_OUTCOMES if BsmMode(mode) is BsmMode.FULL else _PARTIAL_OUTCOMES


class RandomSource:
    """Counter-based uniform stream keyed by (seed, stream).

    Wraps a Philox counter generator, so streams with distinct keys are
    statistically independent and a given key always yields the same
    sequence of doubles.  Cheap enough to create one per trial.
    """

    __slots__ = ("seed", "stream", "_gen")

    def __init__(self, seed: int, stream: int = 0) -> None:
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self) -> float:
        """Next double in [0, 1)."""
        return float(self._gen.random())

    def uniforms(self, count: int) -> np.ndarray:
        """Next ``count`` doubles; consumes the same stream as repeated uniform()."""
        return self._gen.random(int(count))


def polarization_observable(theta: Union[AnalyzerAngle, float]) -> tuple[np.ndarray, np.ndarray]:
    """Projectors (P_plus, P_minus) for a linear analyzer at ``theta``.

    P_plus projects onto cos(theta)|H> + sin(theta)|V>; P_minus onto the
    orthogonal ket.  P_plus - P_minus is the ±1 observable with matrix
    [[cos 2theta, sin 2theta], [sin 2theta, -cos 2theta]].
    """
    t = as_angle(theta).radians
    c, s = np.cos(t), np.sin(t)
    p_plus = np.array([[c * c, c * s], [c * s, s * s]])
    p_minus = np.array([[s * s, -c * s], [-c * s, c * c]])
    return p_plus, p_minus


def _bell_projector(kind: BellKind) -> np.ndarray:
    amps = bell_state(kind).amplitudes
    return np.outer(amps, amps.conj())


_BELL_PROJECTORS = {kind: _bell_projector(kind) for kind in BellKind}
_OTHER_PROJECTOR = _BELL_PROJECTORS[BellKind.PHI_MINUS] + _BELL_PROJECTORS[BellKind.PHI_PLUS]


def bell_projectors(mode: BsmMode) -> dict[BsmOutcome, np.ndarray]:
    """4x4 projectors of the analyzer's outcomes, keyed in sampling order.

    In partial mode the OTHER projector spans the whole phi-+ subspace, so the
    three projectors still resolve the identity.
    """
    if BsmMode(mode) is BsmMode.FULL:
        return {o: _BELL_PROJECTORS[o.bell_kind] for o in _FULL_OUTCOMES}
    return {
        BsmOutcome.PSI_MINUS: _BELL_PROJECTORS[BellKind.PSI_MINUS],
        BsmOutcome.PSI_PLUS: _BELL_PROJECTORS[BellKind.PSI_PLUS],
        BsmOutcome.OTHER: _OTHER_PROJECTOR,
    }


def _check_qubit(num_qubits: int, qubit: int) -> None:
    if not 0 <= qubit < num_qubits:
        raise ValueError(f"qubit {qubit} out of range for {num_qubits}-qubit register")


def _apply_single(amps: np.ndarray, n: int, qubit: int, mat: np.ndarray) -> np.ndarray:
    tens = amps.reshape((2,) * n)
    tens = np.moveaxis(np.tensordot(mat, tens, axes=([1], [qubit])), 0, qubit)
    return tens.reshape(-1)


def _apply_pair(amps: np.ndarray, n: int, i: int, j: int, mat4: np.ndarray) -> np.ndarray:
    # mat4 rows/columns are indexed 2*q_i + q_j, matching the global convention
    # that the lower-numbered qubit is the more significant bit.
    op = mat4.reshape(2, 2, 2, 2)
    tens = amps.reshape((2,) * n)
    tens = np.moveaxis(np.tensordot(op, tens, axes=([2, 3], [i, j])), (0, 1), (i, j))
    return tens.reshape(-1)


def _norm_sq(amps: np.ndarray) -> float:
    return float(np.vdot(amps, amps).real)


def measure_qubit(
    state: PureState,
    qubit: int,
    theta: Union[AnalyzerAngle, float],
    rng: RandomSource,
) -> tuple[BinaryOutcome, PureState]:
    """Measure one qubit through a linear analyzer and collapse the register.

    Draws a single uniform; returns the ±1 outcome with Born probability
    and the renormalized post-measurement state.
    """
    n = state.num_qubits
    _check_qubit(n, qubit)
    p_plus_op, p_minus_op = polarization_observable(theta)

    branch_plus = _apply_single(state.amplitudes, n, qubit, p_plus_op)
    p_plus = min(max(_norm_sq(branch_plus), 0.0), 1.0)
    if rng.uniform() < p_plus:
        outcome, branch = +1, branch_plus
    else:
        outcome, branch = -1, _apply_single(state.amplitudes, n, qubit, p_minus_op)
    weight = _norm_sq(branch)
    if weight < _DEGENERATE_BRANCH:
        raise ValueError("sampled a zero-probability branch; state inconsistent")
    return outcome, PureState(n, branch / np.sqrt(weight))


def _clamped(probs: Sequence[float], context: str) -> list[float]:
    """Clamp tiny negative probabilities to zero; anything worse is an error."""
    out = []
    for p in probs:
        if p < 0.0:
            if p < -1e-12:
                raise ValueError(f"negative probability {p!r} in {context}")
            log.debug("clamped probability %r to 0 in %s", p, context)
            p = 0.0
        out.append(float(p))
    return out


def _pick(outcomes: Sequence, cums: Sequence[float], u: float):
    for outcome, edge in zip(outcomes, cums):
        if u < edge:
            return outcome
    return outcomes[-1]  # u beyond the last edge only by float dust


def bell_measurement(
    state: PureState,
    qubits: tuple[int, int],
    mode: BsmMode,
    rng: RandomSource,
) -> tuple[BsmOutcome, PureState]:
    """Joint Bell-basis measurement on a qubit pair.

    Full mode resolves all four Bell outcomes; partial mode resolves only
    psi- and psi+, lumping the phi-+ subspace into OTHER.  Draws a single
    uniform and collapses onto the selected outcome's subspace.
    """
    i, j = (int(qubits[0]), int(qubits[1]))
    n = state.num_qubits
    _check_qubit(n, i)
    _check_qubit(n, j)
    if i == j:
        raise ValueError("bell measurement needs two distinct qubits")

    projectors = bell_projectors(mode)
    order = bsm_outcomes(mode)
    branches = [_apply_pair(state.amplitudes, n, i, j, projectors[o]) for o in order]
    probs = _clamped([_norm_sq(b) for b in branches], "bell measurement")
    cums = np.cumsum(probs)

    outcome = _pick(order, cums, rng.uniform())
    branch = branches[order.index(outcome)]
    weight = _norm_sq(branch)
    if weight < _DEGENERATE_BRANCH:
        raise ValueError("sampled a zero-probability branch; state inconsistent")
    return outcome, PureState(n, branch / np.sqrt(weight))


@dataclass(frozen=True)
class PolarizationSpec:
    """Plan step: analyzer at ``angle`` on one qubit; outcomes +1/-1."""

    qubit: int
    angle: AnalyzerAngle

    def __post_init__(self) -> None:
        object.__setattr__(self, "angle", as_angle(self.angle))


@dataclass(frozen=True)
class BellSpec:
    """Plan step: joint Bell analyzer on a qubit pair."""

    qubits: tuple[int, int]
    mode: BsmMode = BsmMode.FULL

    def __post_init__(self) -> None:
        pair = (int(self.qubits[0]), int(self.qubits[1]))
        if pair[0] == pair[1]:
            raise ValueError("bell spec needs two distinct qubits")
        object.__setattr__(self, "qubits", pair)
        object.__setattr__(self, "mode", BsmMode(self.mode))


MeasurementSpec = Union[PolarizationSpec, BellSpec]


def _spec_branches(spec: MeasurementSpec, n: int):
    """Yield (outcome, apply) pairs for one plan step, in sampling order."""
    if isinstance(spec, PolarizationSpec):
        _check_qubit(n, spec.qubit)
        p_plus_op, p_minus_op = polarization_observable(spec.angle)
        return [
            (+1, lambda a, op=p_plus_op: _apply_single(a, n, spec.qubit, op)),
            (-1, lambda a, op=p_minus_op: _apply_single(a, n, spec.qubit, op)),
        ]
    if isinstance(spec, BellSpec):
        i, j = spec.qubits
        _check_qubit(n, i)
        _check_qubit(n, j)
        projectors = bell_projectors(spec.mode)
        return [
            (o, lambda a, op=projectors[o]: _apply_pair(a, n, i, j, op))
            for o in bsm_outcomes(spec.mode)
        ]
    raise TypeError(f"unknown measurement spec: {spec!r}")


def _spec_outcomes(spec: MeasurementSpec) -> tuple:
    if isinstance(spec, PolarizationSpec):
        return (+1, -1)
    return bsm_outcomes(spec.mode)


def outcome_distribution(state: PureState, plan: Iterable[MeasurementSpec]) -> dict[tuple, float]:
    """Exact joint distribution of a sequence of measurements.

    Walks every branch of the plan in order, multiplying Born probabilities.
    The result maps each full outcome tuple (one entry per plan step, in plan
    order) to its probability; impossible combinations appear with 0.0 so the
    key set is the full cartesian product of step outcomes.
    """
    steps = tuple(plan)
    if not steps:
        return {(): 1.0}
    n = state.num_qubits
    table: dict[tuple, float] = {}

    def fill_zeros(prefix: tuple, depth: int) -> None:
        if depth == len(steps):
            table[prefix] = 0.0
            return
        for outcome in _spec_outcomes(steps[depth]):
            fill_zeros(prefix + (outcome,), depth + 1)

    def walk(amps: np.ndarray, prefix: tuple, joint: float) -> None:
        depth = len(prefix)
        if depth == len(steps):
            table[prefix] = joint
            return
        for outcome, apply in _spec_branches(steps[depth], n):
            branch = apply(amps)
            p = _clamped([_norm_sq(branch)], "outcome distribution")[0]
            if p == 0.0:
                fill_zeros(prefix + (outcome,), depth + 1)
            else:
                walk(branch / np.sqrt(p), prefix + (outcome,), joint * p)

    walk(state.amplitudes, (), 1.0)
    return table
