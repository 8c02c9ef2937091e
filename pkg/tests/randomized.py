"""Random small CEP instances for oracle comparisons."""
import random

from hspice.events import Event, WindowSpec
from hspice.patterns import PatternSpec, Policy, any_k, negated, single

GUARDS = [None, None, "attr(v) >= 2", "attr(v) < 2", "attr(v) * 2 - 3 > 0"]


def _guard(rng, index, first_single):
    if index > 0 and first_single and rng.random() < 0.2:
        return "attr(v) >= bound(0, v)"
    return rng.choice(GUARDS)


def random_pattern(rng, pid, type_count, kind=None):
    kind = kind or rng.choice(["seq", "repeat", "negation", "any"])
    types = list(range(type_count))
    policy = rng.choice(list(Policy))
    if kind == "seq":
        steps = [single(rng.choice(types), guard=_guard(rng, i, True)) for i in range(rng.randint(1, 3))]
    elif kind == "repeat":
        t = rng.choice(types)
        steps = [single(t, guard=_guard(rng, 0, True)), single(t, guard=_guard(rng, 1, True))]
        if rng.random() < 0.5:
            steps.append(single(rng.choice(types)))
    elif kind == "negation":
        steps = [single(rng.choice(types), guard=_guard(rng, 0, True)),
                 negated(*rng.sample(types, rng.randint(1, 2)), guard=_guard(rng, 1, True)),
                 single(rng.choice(types), guard=_guard(rng, 2, True))]
    else:
        pool = rng.sample(types, rng.randint(2, type_count))
        k = rng.randint(1, min(3, len(pool)))
        steps = [single(rng.choice(types)),
                 any_k(k, *pool, identity=rng.choice([None, "id"]), guard=rng.choice(GUARDS))]
    return PatternSpec(pid, tuple(steps), weight=rng.choice([1.0, 2.0]), policy=policy)


def random_instance(rng: random.Random, kinds=None):
    type_count = rng.randint(2, 4)
    n = rng.randint(1, 3)
    if kinds is None:
        kinds = [None] * n
    specs = [random_pattern(rng, pid + 1, type_count, kind) for pid, kind in enumerate(kinds)]
    ws = rng.randint(1, 10)
    slide = rng.randint(1, ws)
    if rng.random() < 0.75:
        window = WindowSpec.count(ws, slide)
    else:
        window = WindowSpec.time(ws, slide)
    length = rng.randint(0, 2 * ws + 4)
    events = []
    ts = 0
    for i in range(length):
        ts += rng.choice([0, 1, 1, 2])
        events.append(Event(i, ts * 1_000_000, rng.randrange(type_count),
                            {"v": float(rng.randint(0, 3)), "id": float(rng.randint(0, 2))}))
    return specs, window, events
