"""Hand-written observation fixtures."""
from hspice.patterns import PatternSet, PatternSpec
from hspice.stats import CompletionObservation, ContributionObservation

A, B = 0, 1
S0, S1, S2 = 0, 1, 2


def six_pm_patterns(weight=1.0):
    return PatternSet([PatternSpec.seq(1, A, B, weight=weight)])


def six_pm_observations():
    """Six PMs, seq(A;B), ws=5: the contribution and completion tables.

    (type, position, state, PMs processed, PMs contributed to)
    """
    rows = [
        (A, 0, S0, [1, 2, 3, 4, 5, 6], [1, 2]),
        (A, 2, S0, [3, 4, 5, 6], [3, 4]),
        (A, 3, S0, [5, 6], [5, 6]),
        (B, 3, S1, [1, 2, 3, 4], [1]),
        (B, 4, S1, [2, 3, 4, 5, 6], [2, 3]),
    ]
    obs = []
    for t, p, s, processed, contributed in rows:
        for pm in processed:
            after = (s + 1) if pm in contributed else s
            obs.append(ContributionObservation(pm, s, after, t, p, 0))
    obs += [CompletionObservation(pm, 0, pm <= 3) for pm in range(1, 7)]
    return obs
