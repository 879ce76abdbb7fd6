"""Orchestration of the four-photon swapping experiment, trial by trial.

Each trial prepares psi-(0,1) (x) psi-(2,3), draws one of two analyzer
settings per outer photon, then applies the joint Bell measurement on
photons (1,2) and the two polarization measurements in a configurable
temporal order.  "Time" here is logical: ordering is the sequence in which
collapses are applied, which is exactly the thing the order-invariance
checks exercise.

Randomness contract, fixed: trial t uses the stream (config.seed, t).  The
draw order within a trial is setting for photon 0, setting for photon 3
(u < 0.5 picks index 0), then one draw per measurement in the applied
order.  Sampling walks the exact conditional distribution of the trial's
measurement sequence (same branch enumeration as the exact tables), so a
batch is reproducible from (config, seed) alone on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterator

import numpy as np

from .entanglement import TwoQubitMetrics, metrics_for
from .measure import (
    AnalyzerAngle,
    BellSpec,
    BsmMode,
    BsmOutcome,
    PolarizationSpec,
    RandomSource,
    as_angle,
    bell_projectors,
    bsm_outcomes,
    outcome_distribution,
)
from .qstate import BellKind, DensityMatrix, PureState, bell_state, partial_trace, prepare_swap_input, tensor

_BSM_PAIR = (1, 2)  # the inner photons, one from each source pair
_DRAWS_PER_TRIAL = 5  # setting0, setting3, then three measurement draws


class Ordering(Enum):
    """Temporal placement of the joint measurement relative to the outer ones."""

    BSM_FIRST = "bsm-first"
    POLARIZATIONS_FIRST = "pol-first"


def _angle_pair(value) -> tuple[AnalyzerAngle, AnalyzerAngle]:
    first, second = value
    return (as_angle(first), as_angle(second))


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one batch.

    ``angles0`` are the two candidate settings (a, a') for photon 0 and
    ``angles3`` the pair (b, b') for photon 3; each trial picks one of each
    uniformly at random (the only setting policy supported).  ``visibility``
    degrades each source pair to V|psi-><psi-| + (1-V) I/4; the default 1.0
    is the ideal experiment.
    """

    angles0: tuple[AnalyzerAngle, AnalyzerAngle] = (AnalyzerAngle(0.0), AnalyzerAngle(45.0))
    angles3: tuple[AnalyzerAngle, AnalyzerAngle] = (AnalyzerAngle(22.5), AnalyzerAngle(67.5))
    trials: int = 1
    ordering: Ordering = Ordering.BSM_FIRST
    bsm_mode: BsmMode = BsmMode.FULL
    seed: int = 0
    setting_policy: str = "uniform"
    visibility: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "angles0", _angle_pair(self.angles0))
        object.__setattr__(self, "angles3", _angle_pair(self.angles3))
        object.__setattr__(self, "ordering", Ordering(self.ordering))
        object.__setattr__(self, "bsm_mode", BsmMode(self.bsm_mode))
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "seed", int(self.seed))
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        for name, pair in (("angles0", self.angles0), ("angles3", self.angles3)):
            if pair[0].degrees == pair[1].degrees:
                raise ValueError(f"{name} must hold two distinct settings, got {pair}")
        if self.setting_policy != "uniform":
            raise ValueError(f"only the uniform setting policy exists, got {self.setting_policy!r}")
        vis = float(self.visibility)
        if not 0.0 <= vis <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {vis}")
        object.__setattr__(self, "visibility", vis)

    def _table_key(self) -> tuple:
        """Everything the per-trial distribution depends on (not trials/seed)."""
        return (self.angles0, self.angles3, self.ordering, self.bsm_mode, self.visibility)


@dataclass(frozen=True, slots=True)
class TrialRecord:
    """One simulated run, complete enough to redo any analysis."""

    trial_id: int
    ordering: Ordering
    setting0_index: int
    setting0_deg: float
    setting3_index: int
    setting3_deg: float
    outcome0: int
    outcome3: int
    bsm: BsmOutcome
    events: tuple[str, ...]

    @property
    def bsm_label(self) -> str:
        return self.bsm.value

    def to_json_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "ordering": self.ordering.value,
            "setting0_index": self.setting0_index,
            "setting0_deg": float(f"{self.setting0_deg:.12g}"),
            "setting3_index": self.setting3_index,
            "setting3_deg": float(f"{self.setting3_deg:.12g}"),
            "outcome0": self.outcome0,
            "outcome3": self.outcome3,
            "bsm": self.bsm.value,
            "events": list(self.events),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrialRecord":
        outcome0, outcome3 = int(doc["outcome0"]), int(doc["outcome3"])
        if outcome0 not in (-1, +1) or outcome3 not in (-1, +1):
            raise ValueError(f"outcomes must be +-1, got {outcome0}, {outcome3}")
        return cls(
            trial_id=int(doc["trial_id"]),
            ordering=Ordering(doc["ordering"]),
            setting0_index=int(doc["setting0_index"]),
            setting0_deg=float(doc["setting0_deg"]),
            setting3_index=int(doc["setting3_index"]),
            setting3_deg=float(doc["setting3_deg"]),
            outcome0=outcome0,
            outcome3=outcome3,
            bsm=BsmOutcome(doc["bsm"]),
            events=tuple(doc["events"]),
        )


@dataclass(frozen=True)
class StageSnapshot:
    """Reduced state of photons (0,3) at one logical stage of the protocol."""

    stage: str
    rho03: DensityMatrix
    metrics: TwoQubitMetrics


_EVENTS_BSM_FIRST = ("bsm", "pol0", "pol3")
_EVENTS_POL_FIRST = ("pol0", "pol3", "bsm")


def _preparation_components(visibility: float) -> tuple[tuple[float, PureState], ...]:
    """The source state as a pure-state mixture.

    Each degraded pair V psi- + (1-V) I/4 is rewritten as a Bell-diagonal
    mixture (weight V + (1-V)/4 on psi-, (1-V)/4 on each other kind), so the
    four-photon state is a weighted sum over at most 16 pure products.
    """
    if visibility == 1.0:
        return ((1.0, prepare_swap_input()),)
    base = (1.0 - visibility) / 4.0
    weights = {kind: base for kind in BellKind}
    weights[BellKind.PSI_MINUS] += visibility
    components = []
    for kind_a, w_a in weights.items():
        for kind_b, w_b in weights.items():
            w = w_a * w_b
            if w > 0.0:
                components.append((w, tensor(bell_state(kind_a), bell_state(kind_b))))
    return tuple(components)


def _measurement_plan(key: tuple, i0: int, i3: int):
    angles0, angles3, ordering, bsm_mode, _ = key
    pol0 = PolarizationSpec(0, angles0[i0])
    pol3 = PolarizationSpec(3, angles3[i3])
    joint = BellSpec(_BSM_PAIR, bsm_mode)
    if ordering is Ordering.BSM_FIRST:
        return (joint, pol0, pol3)
    return (pol0, pol3, joint)


@lru_cache(maxsize=16)
def _setting_joints(key: tuple) -> dict[tuple[int, int], dict[tuple, float]]:
    """Exact per-setting joint distribution, keyed by plan order of the config."""
    visibility = key[4]
    joints: dict[tuple[int, int], dict[tuple, float]] = {}
    for i0 in (0, 1):
        for i3 in (0, 1):
            plan = _measurement_plan(key, i0, i3)
            merged: dict[tuple, float] = {}
            for weight, component in _preparation_components(visibility):
                for outcomes, p in outcome_distribution(component, plan).items():
                    merged[outcomes] = merged.get(outcomes, 0.0) + weight * p
            joints[(i0, i3)] = merged
    return joints


def _step_outcomes(key: tuple, depth: int) -> tuple:
    _, _, ordering, bsm_mode, _ = key
    pol_depths = (1, 2) if ordering is Ordering.BSM_FIRST else (0, 1)
    if depth in pol_depths:
        return (+1, -1)
    return bsm_outcomes(bsm_mode)


@lru_cache(maxsize=16)
def _sampling_tables(key: tuple):
    """Inverse-CDF tables of the chain-rule conditionals of each setting's joint.

    tables[(i0, i3)] is a triple of levels; level d maps an outcome prefix to
    (outcomes, cumulative probabilities) for the d-th measurement in plan
    order.  run_trial and run_batch both walk these, so the two entry points
    are bit-identical by construction.
    """
    joints = _setting_joints(key)
    tables = {}
    for pair, joint in joints.items():
        margin1: dict[tuple, float] = {}
        margin2: dict[tuple, float] = {}
        for outcomes, p in joint.items():
            margin1[outcomes[:1]] = margin1.get(outcomes[:1], 0.0) + p
            margin2[outcomes[:2]] = margin2.get(outcomes[:2], 0.0) + p

        def cdf(prefix: tuple, depth: int, margins: dict, total: float):
            probs = [margins.get(prefix + (o,), 0.0) / total for o in _step_outcomes(key, depth)]
            return (_step_outcomes(key, depth), tuple(np.cumsum(probs)))

        level0 = {(): cdf((), 0, margin1, 1.0)}
        level1 = {p1: cdf(p1, 1, margin2, m) for p1, m in margin1.items() if m > 0.0}
        level2 = {p2: cdf(p2, 2, joint, m) for p2, m in margin2.items() if m > 0.0}
        tables[pair] = (level0, level1, level2)
    return tables


def _pick(outcomes: tuple, cums: tuple, u: float):
    for outcome, edge in zip(outcomes, cums):
        if u < edge:
            return outcome
    return outcomes[-1]


def _trial_from_tables(config: ExperimentConfig, tables, trial_id: int) -> TrialRecord:
    draws = RandomSource(config.seed, trial_id).uniforms(_DRAWS_PER_TRIAL)
    i0 = 0 if draws[0] < 0.5 else 1
    i3 = 0 if draws[1] < 0.5 else 1

    level0, level1, level2 = tables[(i0, i3)]
    first = _pick(*level0[()], draws[2])
    second = _pick(*level1[(first,)], draws[3])
    third = _pick(*level2[(first, second)], draws[4])

    if config.ordering is Ordering.BSM_FIRST:
        bsm, outcome0, outcome3 = first, second, third
        events = _EVENTS_BSM_FIRST
    else:
        outcome0, outcome3, bsm = first, second, third
        events = _EVENTS_POL_FIRST

    return TrialRecord(
        trial_id=trial_id,
        ordering=config.ordering,
        setting0_index=i0,
        setting0_deg=config.angles0[i0].degrees,
        setting3_index=i3,
        setting3_deg=config.angles3[i3].degrees,
        outcome0=outcome0,
        outcome3=outcome3,
        bsm=bsm,
        events=events,
    )


def run_trial(config: ExperimentConfig, trial_id: int) -> TrialRecord:
    """Simulate one trial; identical (config, seed, trial_id) gives an identical record."""
    if trial_id < 0:
        raise ValueError(f"trial_id must be >= 0, got {trial_id}")
    return _trial_from_tables(config, _sampling_tables(config._table_key()), trial_id)


def run_batch(config: ExperimentConfig) -> Iterator[TrialRecord]:
    """Lazily yield trials 0..config.trials-1 in canonical trial_id order."""
    tables = _sampling_tables(config._table_key())
    for trial_id in range(config.trials):
        yield _trial_from_tables(config, tables, trial_id)


def exact_joint_distribution(
    config: ExperimentConfig,
) -> dict[tuple[int, int, int, int, BsmOutcome], float]:
    """Exact probability of every (setting0, setting3, outcome0, outcome3, bsm) cell.

    Computed by branch enumeration, never sampling; cells impossible under
    the state appear with probability 0.0.  Keys use setting indices; both
    settings carry the uniform 1/4 weight of the per-trial random choice.
    """
    joints = _setting_joints(config._table_key())
    bsm_first = config.ordering is Ordering.BSM_FIRST
    table: dict[tuple[int, int, int, int, BsmOutcome], float] = {}
    for (i0, i3), joint in joints.items():
        for outcomes, p in joint.items():
            if bsm_first:
                bsm, o0, o3 = outcomes
            else:
                o0, o3, bsm = outcomes
            table[(i0, i3, o0, o3, bsm)] = 0.25 * p
    return table


def _embed_on_bsm_pair(op4: np.ndarray) -> np.ndarray:
    # qubit 0 (x) pair (1,2) (x) qubit 3, with qubit 0 most significant
    eye = np.eye(2)
    return np.kron(np.kron(eye, op4), eye)


def preparation_density(config: ExperimentConfig) -> DensityMatrix:
    """Full four-photon source state for the configured visibility."""
    entries = np.zeros((16, 16), dtype=complex)
    for weight, component in _preparation_components(config.visibility):
        entries += weight * np.outer(component.amplitudes, component.amplitudes.conj())
    return DensityMatrix(4, entries)


def stage_entanglement_report(config: ExperimentConfig) -> list[StageSnapshot]:
    """Reduced (0,3) state before the joint measurement and after each outcome.

    The pre stage always appears.  Conditional stages are reported for the
    bsm-first ordering, where the joint measurement really does act on the
    undisturbed state; one snapshot per outcome of the configured analyzer.
    """
    rho_full = preparation_density(config)
    pre = partial_trace(rho_full, (0, 3))
    snapshots = [StageSnapshot("pre-bsm", pre, metrics_for(pre))]
    if config.ordering is not Ordering.BSM_FIRST:
        return snapshots

    projectors = bell_projectors(config.bsm_mode)
    for outcome in bsm_outcomes(config.bsm_mode):
        proj = _embed_on_bsm_pair(projectors[outcome])
        unnormalized = proj @ rho_full.entries @ proj
        prob = float(np.trace(unnormalized).real)
        if prob < 1e-12:  # unreachable outcome; nothing to report
            continue
        conditional = DensityMatrix(4, unnormalized / prob)
        reduced = partial_trace(conditional, (0, 3))
        snapshots.append(StageSnapshot(f"post-bsm:{outcome.value}", reduced, metrics_for(reduced)))
    return snapshots
