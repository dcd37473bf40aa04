"""Numerical execution of the update rules with version bookkeeping.

The engine is sequential and deterministic: it simulates the staggered
schedule's version choices without needing parallel execution. Gradients
are accumulated in ascending micro-batch order and summation order is part
of the contract, so identical (seed, config) runs are bit-identical.

Version convention: theta_1 is the initialization (version 1) and training
step t produces version t+1. Stale reads at t=1 use version 0, a bootstrap
alias of the initialization, so every rule takes the identical first step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..rules import UpdateRule, max_delay_rule, min_delay_rule
from ..schedule import TaskKind, Timeline
from .models import NonFiniteGradientError, ToyTask

RULE_DP = "dp"


@dataclass
class VersionedParams:
    """Two retained parameter versions plus per-step gradient accumulators."""

    current: list[np.ndarray]
    previous: list[np.ndarray]
    step: int  # version tag of `current`

    @staticmethod
    def initial(params: Sequence[np.ndarray]) -> "VersionedParams":
        return VersionedParams(
            current=[p.copy() for p in params],
            previous=[p.copy() for p in params],
            step=1,
        )


def grad_stagewise(model, stage_params, batch) -> tuple[float, list[np.ndarray]]:
    """Per-stage gradients of one micro-batch loss at the given (possibly
    mixed-version) stage parameters."""
    x, y = batch
    return model.loss_and_grads(stage_params, x, y)


def _resolve_rule(rule: Union[str, UpdateRule], n: int) -> Optional[UpdateRule]:
    if isinstance(rule, UpdateRule):
        if rule.n != n:
            raise ValueError("rule size does not match task")
        rule.check_feasible()
        return rule
    if rule == RULE_DP:
        return None
    if rule in ("cdp-v1", "v1"):
        return max_delay_rule(n)
    if rule in ("cdp-v2", "v2"):
        return min_delay_rule(n)
    raise ValueError(f"unknown rule {rule!r}")


def _advance(
    model,
    state: VersionedParams,
    batches,
    lr: float,
    rule: Optional[UpdateRule],
    trace: Optional[list],
    momentum: float = 0.0,
    velocity: Optional[list] = None,
) -> tuple[VersionedParams, float]:
    n = len(batches)
    t = state.step
    acc: Optional[list[np.ndarray]] = None
    loss_sum = 0.0
    for i in range(1, n + 1):
        if rule is None:
            stage_params = state.current
            versions = [t] * len(state.current)
        else:
            stage_params = [
                state.current[j - 1] if rule.reads_fresh(i, j) else state.previous[j - 1]
                for j in range(1, len(state.current) + 1)
            ]
            versions = [
                rule.version_read(i, j, t) for j in range(1, len(state.current) + 1)
            ]
        if trace is not None:
            for j, v in enumerate(versions, start=1):
                trace.append((t, i, j, v))
        loss, grads = grad_stagewise(model, stage_params, batches[i - 1])
        loss_sum += loss
        if acc is None:
            acc = [g.copy() for g in grads]
        else:
            for a, g in zip(acc, grads):
                a += g
    scale = lr / n
    if momentum and velocity is not None:
        for v, a in zip(velocity, acc):
            v *= momentum
            v += a / n
        new = [c - lr * v for c, v in zip(state.current, velocity)]
    else:
        new = [c - scale * a for c, a in zip(state.current, acc)]
    for j, p in enumerate(new, start=1):
        if not np.all(np.isfinite(p)):
            raise NonFiniteGradientError(j, "update")
    return (
        VersionedParams(current=new, previous=state.current, step=t + 1),
        loss_sum / n,
    )


def step_dp(model, state: VersionedParams, batches, lr: float) -> tuple[VersionedParams, float]:
    """One synchronous step: all micro-batch gradients at the current
    version, averaged, applied."""
    return _advance(model, state, batches, lr, rule=None, trace=None)


def step_cdp(
    model, state: VersionedParams, batches, lr: float, rule: Union[str, UpdateRule]
) -> tuple[VersionedParams, float]:
    """One cyclic step: micro-batch i reads each stage at the version the
    rule prescribes, gradients are averaged and applied to the current
    version."""
    resolved = _resolve_rule(rule, len(batches))
    if resolved is None:
        raise ValueError("use step_dp for the synchronous rule")
    return _advance(model, state, batches, lr, rule=resolved, trace=None)


@dataclass
class RuleRun:
    rule: str
    losses: list[float] = field(default_factory=list)
    final_params: Optional[list[np.ndarray]] = None
    diverged_at: Optional[int] = None
    trace: Optional[list] = None


@dataclass
class ExperimentResult:
    runs: dict[str, RuleRun]
    steps: int
    seed: int

    def final_losses(self) -> dict[str, float]:
        return {
            name: run.losses[-1] for name, run in self.runs.items() if run.losses
        }

    def max_pairwise_divergence(self) -> float:
        names = list(self.runs)
        worst = 0.0
        for a in range(len(names)):
            for b in range(a + 1, len(names)):
                la, lb = self.runs[names[a]].losses, self.runs[names[b]].losses
                for va, vb in zip(la, lb):
                    worst = max(worst, abs(va - vb))
        return worst


def run_experiment(
    task: ToyTask,
    rules: Sequence[Union[str, UpdateRule]] = (RULE_DP, "cdp-v1", "cdp-v2"),
    steps: int = 100,
    lr: Union[float, Callable[[int], float]] = 0.1,
    momentum: float = 0.0,
    record_trace: bool = False,
    divergence_limit: float = 1e12,
) -> ExperimentResult:
    """Run every rule from the same initialization on the same data order.

    Loss at step t is the mean of the n micro-batch losses evaluated during
    that step. A run that produces a non-finite or runaway loss stops and
    records the step index.
    """
    lr_of = lr if callable(lr) else (lambda t: lr)
    runs: dict[str, RuleRun] = {}
    for rule in rules:
        name = rule if isinstance(rule, str) else rule.name
        resolved = _resolve_rule(rule, task.n) if name != RULE_DP else None
        state = VersionedParams.initial(task.init_params())
        velocity = (
            [np.zeros_like(p) for p in state.current] if momentum else None
        )
        run = RuleRun(rule=name, trace=[] if record_trace else None)
        for t in range(1, steps + 1):
            batches = task.micro_batches(t)
            try:
                state, loss = _advance(
                    task.model,
                    state,
                    batches,
                    lr_of(t),
                    rule=resolved,
                    trace=run.trace,
                    momentum=momentum,
                    velocity=velocity,
                )
            except NonFiniteGradientError:
                run.diverged_at = t
                break
            run.losses.append(loss)
            if not np.isfinite(loss) or abs(loss) > divergence_limit:
                run.diverged_at = t
                break
        run.final_params = state.current
        runs[name] = run
    return ExperimentResult(runs=runs, steps=steps, seed=task.seed)


def schedule_consistency_check(
    tl: Timeline, trace: Sequence[tuple]
) -> tuple[bool, Optional[tuple]]:
    """Check the engine's version choices against a built timeline.

    The trace carries (t, i, j, version) entries; every entry must match the
    param_version of the corresponding forward task. Returns the first
    mismatch if any.
    """
    expected = {
        (t.training_step, t.micro_batch, t.stage): t.param_version
        for t in tl.tasks
        if t.kind is TaskKind.FORWARD
    }
    for t, i, j, version in trace:
        want = expected.get((t, i, j))
        if want is None:
            continue
        if want != version:
            return False, (t, i, j, version, want)
    return True, None
