"""Pattern specifications and their compilation to finite state machines.

A pattern is a sequence of steps. Positive steps either bind one event
(``single``) or ``k`` events with pairwise distinct identities (``any_k``).
Negated steps sit between positive steps: a matching event seen while the
partial match waits for the following positive step abandons it.

Each unit of progress (a ``single`` step, or one contributor of an ``any_k``
step) is one transition, so a pattern with ``T`` units has ``T + 1`` states
and the last one is final. State ids are global: the states of the ``i``-th
pattern of a :class:`PatternSet` start after all states of earlier patterns.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .events import Event
from .guards import Guard, GuardFn


class PatternError(ValueError):
    """Invalid pattern specification."""


class Policy(str, Enum):
    ANY_MATCH = "skip_till_any_match"
    NEXT_MATCH = "skip_till_next_match"


class StepKind(str, Enum):
    SINGLE = "single"
    ANY_K = "any_k"
    NEGATED = "negated"


@dataclass(frozen=True)
class Step:
    kind: StepKind
    types: frozenset[int]
    guard: Guard | None = None
    k: int = 1
    identity: str | None = None  # any_k only; None means distinct event types

    @property
    def positive(self) -> bool:
        return self.kind is not StepKind.NEGATED

    @property
    def units(self) -> int:
        if self.kind is StepKind.NEGATED:
            return 0
        return self.k if self.kind is StepKind.ANY_K else 1

    def to_json(self) -> dict:
        obj = {"kind": self.kind.value, "types": sorted(self.types)}
        if self.guard is not None:
            obj["guard"] = self.guard.text
        if self.kind is StepKind.ANY_K:
            obj["k"] = self.k
            if self.identity:
                obj["identity"] = self.identity
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Step":
        guard = obj.get("guard")
        return cls(StepKind(obj.get("kind", "single")), frozenset(int(t) for t in obj["types"]),
                   Guard(guard) if guard else None, int(obj.get("k", 1)), obj.get("identity"))


def single(*types: int, guard: str | None = None) -> Step:
    return Step(StepKind.SINGLE, frozenset(types), Guard(guard) if guard else None)


def negated(*types: int, guard: str | None = None) -> Step:
    return Step(StepKind.NEGATED, frozenset(types), Guard(guard) if guard else None)


def any_k(k: int, *types: int, guard: str | None = None, identity: str | None = None) -> Step:
    return Step(StepKind.ANY_K, frozenset(types), Guard(guard) if guard else None, k, identity)


@dataclass(frozen=True)
class PatternSpec:
    pattern_id: int
    steps: tuple[Step, ...]
    weight: float = 1.0
    policy: Policy = Policy.ANY_MATCH

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "policy", Policy(self.policy))

    @classmethod
    def seq(cls, pattern_id: int, *steps: Step | int, weight: float = 1.0,
            policy: Policy | str = Policy.ANY_MATCH) -> "PatternSpec":
        """Shorthand: integers become single steps over that type."""
        built = tuple(single(s) if isinstance(s, int) else s for s in steps)
        return cls(pattern_id, built, weight, Policy(policy))

    @property
    def unit_count(self) -> int:
        return sum(s.units for s in self.steps)

    def validate(self) -> None:
        pid = self.pattern_id
        if not self.steps:
            raise PatternError(f"pattern {pid}: no steps")
        if not any(s.positive for s in self.steps):
            raise PatternError(f"pattern {pid}: needs at least one positive step")
        if not self.weight > 0:
            raise PatternError(f"pattern {pid}: weight must be positive")
        if not self.steps[0].positive:
            raise PatternError(f"pattern {pid}: step 0 is negated; a pattern cannot start with negation")
        if not self.steps[-1].positive:
            raise PatternError(
                f"pattern {pid}: step {len(self.steps) - 1} is negated; a pattern cannot end with negation")
        for i, s in enumerate(self.steps):
            if not s.types:
                raise PatternError(f"pattern {pid}: step {i} has an empty type set")
            if s.kind is StepKind.ANY_K and not 1 <= s.k <= len(s.types):
                raise PatternError(f"pattern {pid}: step {i} any_k needs 1 <= k <= {len(s.types)}, got {s.k}")
            if s.guard is not None:
                for ref in s.guard.bound_steps:
                    if ref >= i:
                        raise PatternError(f"pattern {pid}: step {i} guard references later step {ref}")
                    if self.steps[ref].kind is not StepKind.SINGLE:
                        raise PatternError(
                            f"pattern {pid}: step {i} guard references step {ref}, which is not a single step")

    def to_json(self) -> dict:
        return {"id": self.pattern_id, "weight": self.weight, "policy": self.policy.value,
                "steps": [s.to_json() for s in self.steps]}

    @classmethod
    def from_json(cls, obj: dict) -> "PatternSpec":
        return cls(int(obj["id"]), tuple(Step.from_json(s) for s in obj["steps"]),
                   float(obj.get("weight", 1.0)), Policy(obj.get("policy", Policy.ANY_MATCH.value)))


class Transition(Enum):
    NO_CHANGE = 0
    ADVANCE = 1
    COMPLETE = 2
    ABANDON = 3


class Outcome(NamedTuple):
    kind: Transition
    next_state: int | None = None


NO_CHANGE = Outcome(Transition.NO_CHANGE)
ABANDON = Outcome(Transition.ABANDON)


@dataclass(frozen=True)
class _Unit:
    step_index: int
    types: frozenset[int]
    guard: GuardFn | None
    distinct_from: tuple[int, ...]  # binding slots of earlier contributors of the same any_k step
    identity: str | None
    counted: bool  # part of an any_k step


@dataclass(frozen=True)
class _Negation:
    step_index: int
    types: frozenset[int]
    guard: GuardFn | None


@dataclass(frozen=True)
class StateMachine:
    spec: PatternSpec
    offset: int
    units: tuple[_Unit, ...]
    negations: tuple[tuple[_Negation, ...], ...]  # per non-final local state
    outcomes: tuple[Outcome, ...] = field(repr=False, default=())

    @property
    def pattern_id(self) -> int:
        return self.spec.pattern_id

    @property
    def weight(self) -> float:
        return self.spec.weight

    @property
    def policy(self) -> Policy:
        return self.spec.policy

    @property
    def state_count(self) -> int:
        return len(self.units) + 1

    @property
    def initial(self) -> int:
        return self.offset

    @property
    def final(self) -> int:
        return self.offset + len(self.units)

    @property
    def states(self) -> range:
        return range(self.offset, self.offset + self.state_count)

    @property
    def pm_states(self) -> range:
        """Non-final states, the states a partial match can be in."""
        return range(self.offset, self.final)

    def step(self, state: int, bindings: Sequence[Event], event: Event) -> Outcome:
        """Outcome of matching ``event`` against a partial match at ``state``.

        Negation is checked first: an event that both abandons and advances a
        partial match abandons it.
        """
        local = state - self.offset
        if not 0 <= local < len(self.units):
            raise ValueError(f"state {state} is not a partial-match state of pattern {self.pattern_id}")
        et = event.event_type
        for neg in self.negations[local]:
            if et in neg.types and (neg.guard is None or neg.guard(event, bindings)):
                return ABANDON
        unit = self.units[local]
        if et not in unit.types:
            return NO_CHANGE
        if unit.guard is not None and not unit.guard(event, bindings):
            return NO_CHANGE
        if unit.counted:
            ident = _identity(event, unit.identity)
            if ident is None:
                return NO_CHANGE
            for slot in unit.distinct_from:
                if _identity(bindings[slot], unit.identity) == ident:
                    return NO_CHANGE
        return self.outcomes[local]


def _identity(event: Event, attr: str | None):
    if attr is None:
        return event.event_type
    return event.attributes.get(attr)


def compile_pattern(spec: PatternSpec, offset: int = 0) -> StateMachine:
    """Compile ``spec`` into a state machine whose states start at ``offset``."""
    spec.validate()
    slot_of_step: dict[int, int] = {}
    slot = 0
    for i, s in enumerate(spec.steps):
        if s.kind is StepKind.SINGLE:
            slot_of_step[i] = slot
        slot += s.units

    units: list[_Unit] = []
    negs: list[list[_Negation]] = []
    pending: list[_Negation] = []
    for i, s in enumerate(spec.steps):
        guard = s.guard.compile(slot_of_step) if s.guard is not None else None
        if s.kind is StepKind.NEGATED:
            pending.append(_Negation(i, s.types, guard))
            continue
        first = len(units)
        for c in range(s.units):
            distinct = tuple(range(first, first + c))
            units.append(_Unit(i, s.types, guard, distinct, s.identity, s.kind is StepKind.ANY_K))
            negs.append(pending if c == 0 else [])
            pending = []
    outcomes = tuple(
        Outcome(Transition.COMPLETE) if j == len(units) - 1 else Outcome(Transition.ADVANCE, offset + j + 1)
        for j in range(len(units)))
    return StateMachine(spec, offset, tuple(units), tuple(tuple(n) for n in negs), outcomes)


def compile(spec: PatternSpec, offset: int = 0) -> StateMachine:  # noqa: A001
    return compile_pattern(spec, offset)


class PatternSet:
    """Compiled patterns with disjoint global state numbering."""

    def __init__(self, specs: Iterable[PatternSpec]):
        self.specs = tuple(specs)
        ids = [s.pattern_id for s in self.specs]
        if len(set(ids)) != len(ids):
            raise PatternError(f"duplicate pattern ids in {ids}")
        if not self.specs:
            raise PatternError("no patterns")
        machines = []
        offset = 0
        for spec in self.specs:
            m = compile_pattern(spec, offset)
            machines.append(m)
            offset += m.state_count
        self.machines: tuple[StateMachine, ...] = tuple(machines)
        self.state_total = offset
        self.pm_states: tuple[int, ...] = tuple(s for m in machines for s in m.pm_states)
        # dense index over non-final states, -1 for final states
        index = [-1] * offset
        for k, s in enumerate(self.pm_states):
            index[s] = k
        self.gamma_index: tuple[int, ...] = tuple(index)
        self.machine_of_state: tuple[StateMachine, ...] = tuple(
            m for m in machines for _ in m.states)
        self.weights = {m.pattern_id: m.weight for m in machines}

    @property
    def gamma_count(self) -> int:
        """Number of partial-match states over all patterns (K)."""
        return len(self.pm_states)

    def __iter__(self):
        return iter(self.machines)

    def __len__(self):
        return len(self.machines)

    def to_json(self) -> list:
        return [s.to_json() for s in self.specs]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PatternSet":
        obj = json.loads(Path(path).read_text())
        if isinstance(obj, dict):
            obj = obj["patterns"]
        return cls(PatternSpec.from_json(o) for o in obj)


def step(machine: StateMachine, state: int, bindings: Sequence[Event], event: Event) -> Outcome:
    return machine.step(state, bindings, event)
