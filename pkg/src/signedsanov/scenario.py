"""Measurement scenarios, empirical models and their phase-space realizations."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import DimensionMismatch, Infeasible, MissingContext, SolverStall
from .measures import ProbDist, SignedMeasure, total_variation_weight

NO_SIGNALING_TOL = 1e-9


@dataclass(frozen=True)
class MeasurementScenario:
    """Parties, their measurement labels, and the shared outcome labels.

    Measurements are flattened in party order (for the Bell scenario:
    a, a', b, b'); that order fixes the phase-space digit positions.
    """

    parties: tuple
    measurements: tuple
    outcomes: tuple

    def __init__(self, parties: Sequence[str], measurements: Sequence[Sequence[str]],
                 outcomes: Sequence = (0, 1)):
        parties = tuple(parties)
        measurements = tuple(tuple(m) for m in measurements)
        outcomes = tuple(outcomes)
        if not parties:
            raise ValueError("a scenario needs at least one party")
        if len(measurements) != len(parties):
            raise ValueError("one measurement list per party is required")
        if any(len(m) == 0 for m in measurements):
            raise ValueError("every party needs at least one measurement")
        flat = [x for m in measurements for x in m]
        if len(set(flat)) != len(flat):
            raise ValueError("measurement labels must be unique across parties")
        if len(outcomes) < 2 or len(set(outcomes)) != len(outcomes):
            raise ValueError("each measurement needs at least two distinct outcomes")
        object.__setattr__(self, "parties", parties)
        object.__setattr__(self, "measurements", measurements)
        object.__setattr__(self, "outcomes", outcomes)

    @property
    def flat_measurements(self) -> tuple:
        return tuple(x for m in self.measurements for x in m)

    def contexts(self) -> list[tuple]:
        """All maximal contexts: one measurement per party, in product order."""
        return list(itertools.product(*self.measurements))

    def joint_outcomes(self, size: int | None = None) -> list[tuple]:
        """Joint outcomes of a context, in lexicographic order."""
        k = len(self.parties) if size is None else size
        return list(itertools.product(self.outcomes, repeat=k))

    def check_context(self, context: Sequence[str]) -> tuple:
        context = tuple(context)
        if len(context) != len(self.parties):
            raise MissingContext(f"context {context} must name one measurement per party")
        for party_meas, label in zip(self.measurements, context):
            if label not in party_meas:
                raise MissingContext(f"measurement {label!r} does not belong to its party")
        return context


@dataclass(frozen=True)
class PhaseSpace:
    """Deterministic outcome assignments, indexed positionally.

    State ``i`` decodes to the base-``len(outcomes)`` digits of ``i``, most
    significant digit first, in the scenario's flattened measurement order.
    """

    scenario: MeasurementScenario
    states: tuple

    def __len__(self):
        return len(self.states)

    def decode(self, index: int) -> dict:
        return dict(zip(self.scenario.flat_measurements, self.states[index]))

    @property
    def labels(self) -> tuple:
        return tuple(f"w{i}" for i in range(len(self.states)))


def canonical_phase_space(scenario: MeasurementScenario) -> PhaseSpace:
    k = len(scenario.flat_measurements)
    # itertools.product enumerates with the last position varying fastest,
    # which is exactly the most-significant-digit-first positional encoding
    states = tuple(itertools.product(scenario.outcomes, repeat=k))
    return PhaseSpace(scenario, states)


def states_consistent_with(space: PhaseSpace, context: Sequence[str], joint_outcome: Sequence) -> list[int]:
    scenario = space.scenario
    context = scenario.check_context(context)
    joint_outcome = tuple(joint_outcome)
    if len(joint_outcome) != len(context):
        raise ValueError("joint outcome length must match the context")
    pos = [scenario.flat_measurements.index(m) for m in context]
    return [i for i, s in enumerate(space.states)
            if all(s[p] == o for p, o in zip(pos, joint_outcome))]


@dataclass(frozen=True)
class EmpiricalModel:
    """Outcome probability tables, one row per measurement context.

    Each row is a `ProbDist` over the joint outcomes of its context in
    lexicographic order.
    """

    scenario: MeasurementScenario
    rows: tuple  # of (context, ProbDist) pairs

    def __init__(self, scenario: MeasurementScenario, rows: Mapping | Iterable):
        items = rows.items() if isinstance(rows, Mapping) else rows
        outcome_labels = tuple(scenario.joint_outcomes())
        built = []
        seen = set()
        for context, probs in items:
            context = scenario.check_context(context)
            if context in seen:
                raise ValueError(f"duplicate context {context}")
            seen.add(context)
            if not isinstance(probs, ProbDist):
                probs = ProbDist([float(x) for x in probs], outcome_labels)
            if probs.labels != outcome_labels:
                raise DimensionMismatch(f"row {context} has {len(probs)} entries, "
                                        f"expected {len(outcome_labels)}")
            built.append((context, probs))
        if not built:
            raise ValueError("an empirical model needs at least one row")
        object.__setattr__(self, "scenario", scenario)
        object.__setattr__(self, "rows", tuple(built))

    @property
    def contexts(self) -> list[tuple]:
        return [c for c, _ in self.rows]

    def row(self, context: Sequence[str]) -> ProbDist:
        context = tuple(context)
        for c, p in self.rows:
            if c == context:
                return p
        raise MissingContext(f"model has no row for context {context}")


@dataclass(frozen=True)
class NoSignalingReport:
    passed: bool
    max_gap: float
    worst_pair: tuple | None  # (context, context, party subset) of the largest gap


def no_signaling_check(model: EmpiricalModel, tol: float = NO_SIGNALING_TOL) -> NoSignalingReport:
    """Compare marginals of every proper party subset across contexts.

    For two parties this is the usual condition that each party's marginal
    does not depend on the other's measurement choice.
    """
    scenario = model.scenario
    present = set(model.contexts)
    for c in scenario.contexts():
        if c not in present:
            raise MissingContext(f"context {c} absent from model")

    n_parties = len(scenario.parties)
    joint = scenario.joint_outcomes()
    worst, worst_pair = 0.0, None
    for r in range(1, n_parties):
        for subset in itertools.combinations(range(n_parties), r):
            sub_outcomes = scenario.joint_outcomes(r)
            seen: dict = {}
            for context, dist in model.rows:
                key = tuple(context[i] for i in subset)
                marg = np.zeros(len(sub_outcomes))
                for p, outcome in zip(dist.probs, joint):
                    marg[sub_outcomes.index(tuple(outcome[i] for i in subset))] += p
                if key not in seen:
                    seen[key] = (context, marg)
                    continue
                ref_context, ref = seen[key]
                gap = float(np.abs(marg - ref).max())
                if gap > worst:
                    worst, worst_pair = gap, (ref_context, context, tuple(scenario.parties[i] for i in subset))
    return NoSignalingReport(worst <= tol, worst, worst_pair)


def _constraint_system(model: EmpiricalModel, space: PhaseSpace):
    """Rows: one per (context, joint outcome), plus the normalization row."""
    rows, rhs = [], []
    for context, dist in model.rows:
        for outcome, p in zip(model.scenario.joint_outcomes(), dist.probs):
            a = np.zeros(len(space))
            a[states_consistent_with(space, context, outcome)] = 1.0
            rows.append(a)
            rhs.append(p)
    rows.append(np.ones(len(space)))
    rhs.append(1.0)
    return np.array(rows), np.array(rhs)


def realization_residual(lam: SignedMeasure, model: EmpiricalModel) -> float:
    space = canonical_phase_space(model.scenario)
    if len(lam) != len(space):
        raise DimensionMismatch(f"measure has {len(lam)} weights, phase space has {len(space)} states")
    A, b = _constraint_system(model, space)
    # the normalization row is a SignedMeasure invariant, not a model constraint
    return float(np.abs(A[:-1] @ lam.weights - b[:-1]).max())


@dataclass(frozen=True)
class Realization:
    lam: SignedMeasure
    model: EmpiricalModel
    residual: float

    @property
    def total_weight(self) -> float:
        return total_variation_weight(self.lam)


def realize_minimal(model: EmpiricalModel, max_iter: int = 10_000) -> Realization:
    """Signed realization of ``model`` with the least total weight.

    Solves ``min sum(lam+ + lam-)`` subject to the realization constraints on
    ``lam = lam+ - lam-`` with HiGHS. Tiny solver noise (below 1e-13) is
    snapped to zero before the measure is built.
    """
    space = canonical_phase_space(model.scenario)
    A, b = _constraint_system(model, space)
    n = len(space)
    res = linprog(np.ones(2 * n), A_eq=np.hstack([A, -A]), b_eq=b,
                  bounds=(0, None), method="highs", options={"maxiter": max_iter})
    if res.status == 1:
        raise SolverStall(res.message)
    if res.status == 2:
        raise Infeasible("model admits no signed realization (is it signaling?)")
    if res.status != 0:
        raise SolverStall(res.message)
    lam = res.x[:n] - res.x[n:]
    lam[np.abs(lam) < 1e-13] = 0.0
    measure = SignedMeasure(lam, space.labels)
    return Realization(measure, model, realization_residual(measure, model))


def has_nonnegative_realization(model: EmpiricalModel, tol: float = 1e-9) -> bool:
    """Feasibility of a classical (non-negative) realization via NNLS."""
    space = canonical_phase_space(model.scenario)
    A, b = _constraint_system(model, space)
    _, rnorm = nnls(A, b)
    return bool(rnorm <= tol)


# -- fixtures --------------------------------------------------------------

BELL_SCENARIO = MeasurementScenario(("Alice", "Bob"), (("a", "a'"), ("b", "b'")), (0, 1))

_BELL_ROWS = {
    ("a", "b"): (0.5, 0.0, 0.0, 0.5),
    ("a'", "b"): (0.375, 0.125, 0.125, 0.375),
    ("a", "b'"): (0.375, 0.125, 0.125, 0.375),
    ("a'", "b'"): (0.125, 0.375, 0.375, 0.125),
}

_BELL_LAMBDA = (0.25, 0.125, 0.0, 0.0, 0.125, 0.0, 0.0, 0.0,
                0.0, 0.0, -0.125, 0.25, 0.0, 0.0, 0.25, 0.125)


def bell_fixture() -> tuple[EmpiricalModel, SignedMeasure]:
    """The Bell-state table and its signed realization with total weight 5/4.

    Every row of the table is symmetric under swapping the middle two joint
    outcomes, so the column order of the published table and the
    lexicographic order used here give the same vectors.
    """
    model = EmpiricalModel(BELL_SCENARIO, _BELL_ROWS)
    lam = SignedMeasure(_BELL_LAMBDA, canonical_phase_space(BELL_SCENARIO).labels)
    return model, lam


def pr_box_model() -> EmpiricalModel:
    """Popescu-Rohrlich box: correlated outcomes except anti-correlated on (a', b')."""
    corr = (0.5, 0.0, 0.0, 0.5)
    anti = (0.0, 0.5, 0.5, 0.0)
    rows = {c: (anti if c == ("a'", "b'") else corr) for c in BELL_SCENARIO.contexts()}
    return EmpiricalModel(BELL_SCENARIO, rows)


# -- JSON ------------------------------------------------------------------

def parse_probability(value) -> float:
    """Parse a decimal number, a decimal string, or a rational string like ``"1/8"``."""
    if isinstance(value, bool):
        raise ValueError("booleans are not probabilities")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    raise ValueError(f"cannot parse probability {value!r}")


def model_from_dict(data: dict) -> EmpiricalModel:
    """Build a model from the JSON schema.

    ``{"parties": [...], "measurements": [[...], ...], "outcomes": [...],
    "rows": [{"context": [...], "probs": [...]}, ...]}``
    """
    scenario = MeasurementScenario(data["parties"], data["measurements"], data.get("outcomes", (0, 1)))
    rows = [(tuple(r["context"]), [parse_probability(x) for x in r["probs"]]) for r in data["rows"]]
    return EmpiricalModel(scenario, rows)


def model_to_dict(model: EmpiricalModel) -> dict:
    s = model.scenario
    return {
        "parties": list(s.parties),
        "measurements": [list(m) for m in s.measurements],
        "outcomes": list(s.outcomes),
        "rows": [{"context": list(c), "probs": [float(x) for x in d.probs]} for c, d in model.rows],
    }


def load_model(path) -> EmpiricalModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
