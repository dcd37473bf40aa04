"""Parameter-version selection rules for cyclic schedules.

A rule decides, per (micro_batch i, stage j), whether a task of training step
t reads the current stage parameters (version t) or the previous ones
(version t-1). The staggered start of micro-batch i makes a fresh read of
stage j physically possible only when i + j >= n + 1: stage j's step-t update
completes exactly one time step before that task begins.
"""

from __future__ import annotations

from dataclasses import dataclass


class InfeasibleRuleError(ValueError):
    def __init__(self, micro_batch: int, stage: int, n: int):
        self.micro_batch = micro_batch
        self.stage = stage
        super().__init__(
            f"rule demands a fresh read at (i={micro_batch}, j={stage}) but with "
            f"n={n} the stage update completes only after that task starts"
        )


def fresh_read_possible(micro_batch: int, stage: int, n: int) -> bool:
    return micro_batch + stage >= n + 1


@dataclass(frozen=True)
class UpdateRule:
    """Version rule as an explicit fresh/stale table.

    fresh[i-1][j-1] is True when micro-batch i reads stage j at the current
    version. The two named rules are the extreme cases: max_delay reads
    everything stale, min_delay reads fresh wherever the stagger permits.
    """

    name: str
    fresh: tuple[tuple[bool, ...], ...]

    @property
    def n(self) -> int:
        return len(self.fresh)

    def reads_fresh(self, micro_batch: int, stage: int) -> bool:
        return self.fresh[micro_batch - 1][stage - 1]

    def version_read(self, micro_batch: int, stage: int, training_step: int) -> int:
        if self.reads_fresh(micro_batch, stage):
            return training_step
        return training_step - 1

    def stale_read_count(self) -> int:
        return sum(row.count(False) for row in self.fresh)

    def check_feasible(self) -> None:
        n = self.n
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if self.reads_fresh(i, j) and not fresh_read_possible(i, j, n):
                    raise InfeasibleRuleError(i, j, n)


def max_delay_rule(n: int) -> UpdateRule:
    """Every read is stale; one barrier per training step."""
    return UpdateRule("cdp-v1", tuple((False,) * n for _ in range(n)))


def min_delay_rule(n: int) -> UpdateRule:
    """Fresh read wherever feasible: fresh iff j >= n - i + 1."""
    return UpdateRule(
        "cdp-v2",
        tuple(
            tuple(fresh_read_possible(i, j, n) for j in range(1, n + 1))
            for i in range(1, n + 1)
        ),
    )


def generic_rule(fresh: list[list[bool]], name: str = "generic") -> UpdateRule:
    rule = UpdateRule(name, tuple(tuple(bool(x) for x in row) for row in fresh))
    if any(len(row) != rule.n for row in rule.fresh):
        raise ValueError("rule table must be square")
    rule.check_feasible()
    return rule


def rule_by_name(name: str, n: int) -> UpdateRule:
    if name in ("cdp-v1", "v1"):
        return max_delay_rule(n)
    if name in ("cdp-v2", "v2"):
        return min_delay_rule(n)
    raise ValueError(f"unknown rule name: {name!r}")
