"""Communication scheduling on time-step boundaries.

Pure timeline transformations: each scheduler returns a new timeline with
events attached, no real I/O anywhere. The placement rule for cyclic
gradient traffic is fixed and deterministic: a stage's partial gradient
departs on the boundary immediately after the backward that produced or
augmented it, hopping to the worker holding the next contribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .events import ALL_DEVICES, CommEvent, CommKind
from .profiles import ModelProfile, ParallelismConfig, Scheme
from .schedule import (
    Task,
    TaskKind,
    Timeline,
    build_cdp_timeline,
    build_dp_timeline,
    build_mp_timeline,
    build_pp_timeline,
    build_zero_timeline,
    stage_at_phase,
    tree_depth,
)


def _require(tl: Timeline, schemes, what: str) -> None:
    if tl.scheme not in schemes:
        raise ValueError(f"{what} expects one of {[s.value for s in schemes]}")


def schedule_cdp_ring_reduce(tl: Timeline, profile: ModelProfile) -> Timeline:
    """Ring reduce for staggered workers.

    After worker w finishes a backward of stage j it sends the accumulated
    stage-j partial to worker w+1 (mod n). The last contributor's hop hands
    the complete sum to the updating worker one boundary before the earliest
    task that may read the new version. Every worker sends each stage's
    payload exactly once per training step, and no worker sends or receives
    more than once per boundary.
    """
    _require(tl, (Scheme.MULTI_GPU_CDP, Scheme.ZERO_CDP), "ring reduce")
    n = tl.n
    if n < 2:
        return tl
    events = []
    for t in tl.tasks:
        if t.kind is not TaskKind.BACKWARD:
            continue
        w = t.micro_batch
        events.append(
            CommEvent(
                boundary=t.end,
                kind=CommKind.GRADIENT_REDUCE,
                src=f"w{w}",
                dst=f"w{w % n + 1}",
                payload=profile.stage_params[t.stage - 1],
                stage=t.stage,
                micro_batch=w,
            )
        )
    return tl.with_events(events)


def schedule_dp_allreduce(tl: Timeline, profile: ModelProfile) -> Timeline:
    """One collective gradient all-reduce at the end of each training step."""
    _require(tl, (Scheme.MULTI_GPU_DP, Scheme.ZERO_DP), "all-reduce scheduling")
    n = tl.n
    if n < 2:
        return tl
    pass_len = tl.pass_length
    events = [
        CommEvent(
            boundary=t * pass_len,
            kind=CommKind.COLLECTIVE_ALL_REDUCE,
            src=ALL_DEVICES,
            dst=ALL_DEVICES,
            payload=profile.total_params,
            stage=0,
            participants=n,
            depth=tree_depth(n),
        )
        for t in range(1, tl.cfg.training_steps + 1)
    ]
    return tl.with_events(events)


def schedule_zero_transfers(tl: Timeline, cyclic: bool, profile: ModelProfile) -> Timeline:
    """Model-state movement for state-sharded workers.

    Non-cyclic: every step computes one stage on all workers, so its owner
    broadcasts the states each step. Cyclic: exactly one worker touches a
    stage per step, so its states hop point-to-point to the next user and
    are freed at the source; only the owner keeps a persistent copy.
    """
    _require(tl, (Scheme.ZERO_DP, Scheme.ZERO_CDP), "state-transfer scheduling")
    if cyclic != (tl.scheme is Scheme.ZERO_CDP):
        raise ValueError("cyclic flag does not match the timeline's scheme")
    n = tl.n
    if n < 2:
        return tl
    events = []
    if not cyclic:
        pass_len = tl.pass_length
        for g in range(1, tl.horizon + 1):
            s = stage_at_phase((g - 1) % pass_len + 1, n)
            events.append(
                CommEvent(
                    boundary=g - 1,
                    kind=CommKind.BROADCAST,
                    src=f"w{s}",
                    dst=ALL_DEVICES,
                    payload=profile.stage_params[s - 1],
                    stage=s,
                    participants=n,
                    depth=tree_depth(n),
                )
            )
        return tl.with_events(events)

    user_at = {(t.start, t.stage): t.device for t in tl.tasks}
    for s in range(1, n + 1):
        holder = f"w{s}"
        for g in range(1, tl.horizon + 1):
            user = user_at.get((g, s))
            if user is None or user == holder:
                continue
            events.append(
                CommEvent(
                    boundary=g - 1,
                    kind=CommKind.STATE_TRANSFER,
                    src=holder,
                    dst=user,
                    payload=profile.stage_params[s - 1],
                    stage=s,
                )
            )
            holder = user
    return tl.with_events(events)


def scheduled_timeline(
    cfg: ParallelismConfig, profile: ModelProfile, rule="cdp-v2"
) -> Timeline:
    """Build the timeline for any scheme with all its comm events attached."""
    scheme = cfg.scheme
    if scheme is Scheme.SINGLE_GPU_DP:
        return build_dp_timeline(cfg)
    if scheme is Scheme.SINGLE_GPU_CDP:
        return build_cdp_timeline(cfg, rule)
    if scheme is Scheme.MULTI_GPU_DP:
        return schedule_dp_allreduce(build_dp_timeline(cfg), profile)
    if scheme is Scheme.MULTI_GPU_CDP:
        return schedule_cdp_ring_reduce(build_cdp_timeline(cfg, rule), profile)
    if scheme is Scheme.DP_WITH_MP:
        return build_mp_timeline(cfg, profile, cyclic=False)
    if scheme is Scheme.CDP_WITH_MP:
        return build_mp_timeline(cfg, profile, cyclic=True)
    if scheme is Scheme.PP:
        return build_pp_timeline(cfg, rule, profile)
    if scheme is Scheme.ZERO_DP:
        tl = build_zero_timeline(cfg, profile, cyclic=False)
        return schedule_dp_allreduce(schedule_zero_transfers(tl, False, profile), profile)
    if scheme is Scheme.ZERO_CDP:
        tl = build_zero_timeline(cfg, profile, cyclic=True)
        return schedule_cdp_ring_reduce(schedule_zero_transfers(tl, True, profile), profile)
    raise ValueError(f"unhandled scheme {scheme}")


@dataclass(frozen=True)
class BoundaryStats:
    sends: int
    receives: int
    max_depth: int


@dataclass(frozen=True)
class BalanceReport:
    per_boundary: dict
    max_sends: int
    min_sends: int
    mean_sends: Fraction
    deep_boundaries: tuple[int, ...]
    cyclic_depth_flags: tuple[int, ...]

    @property
    def empty(self) -> bool:
        return not self.per_boundary


def balance_report(tl: Timeline) -> BalanceReport:
    """Per-boundary send/receive histogram and dependency-depth summary.

    Collectives count one send and one receive per participant. Boundaries
    whose depth exceeds 1 are listed, and flagged separately when the scheme
    is cyclic (where every boundary must stay point-to-point).
    """
    per_boundary: dict[int, BoundaryStats] = {}
    grouped: dict[int, list[CommEvent]] = {}
    for e in tl.comm_events:
        grouped.setdefault(e.boundary, []).append(e)
    for b, evs in sorted(grouped.items()):
        sends = sum(1 if e.is_point_to_point else e.participants for e in evs)
        receives = sends
        depth = max(e.depth for e in evs)
        per_boundary[b] = BoundaryStats(sends, receives, depth)
    if per_boundary:
        counts = [s.sends for s in per_boundary.values()]
        max_sends, min_sends = max(counts), min(counts)
        mean_sends = Fraction(sum(counts), len(counts))
    else:
        max_sends = min_sends = 0
        mean_sends = Fraction(0)
    deep = tuple(b for b, s in sorted(per_boundary.items()) if s.max_depth > 1)
    flags = deep if tl.scheme.is_cyclic else ()
    return BalanceReport(per_boundary, max_sends, min_sends, mean_sends, deep, flags)


@dataclass(frozen=True)
class ReductionCheck:
    stage: int
    training_step: int
    complete_at: Optional[int]
    first_fresh_read: Optional[int]
    ok: bool


def verify_gradient_reduction(tl: Timeline) -> list[ReductionCheck]:
    """Symbolic replay of the gradient-reduce traffic.

    Tags every micro-batch contribution and follows the point-to-point hops;
    a (stage, step) passes when some device assembles all n contributions
    strictly before the first task reads the version that update produces.
    No numerics involved.
    """
    n = tl.n
    hops = [e for e in tl.comm_events if e.kind is CommKind.GRADIENT_REDUCE]
    backwards = [t for t in tl.tasks if t.kind is TaskKind.BACKWARD]
    by_end: dict[tuple, Task] = {}
    for t in backwards:
        by_end[(t.device, t.stage, t.end, t.micro_batch)] = t

    first_read: dict[tuple, int] = {}
    for t in tl.tasks:
        key = (t.stage, t.param_version)
        if t.param_version >= 2:
            first_read[key] = min(first_read.get(key, t.start), t.start)

    held: dict[tuple, set] = {}
    complete_at: dict[tuple, int] = {}

    def note_complete(stage, step, when):
        key = (stage, step)
        if key not in complete_at:
            complete_at[key] = when

    moments = sorted(
        {t.end for t in backwards} | {e.boundary for e in hops}
    )
    hops_by_boundary: dict[int, list[CommEvent]] = {}
    for e in hops:
        hops_by_boundary.setdefault(e.boundary, []).append(e)
    backs_by_end: dict[int, list[Task]] = {}
    for t in backwards:
        backs_by_end.setdefault(t.end, []).append(t)

    for m in moments:
        for t in backs_by_end.get(m, ()):
            key = (t.device, t.stage, t.training_step)
            held.setdefault(key, set()).add(t.micro_batch)
            if len(held[key]) == n:
                note_complete(t.stage, t.training_step, m)
        for e in hops_by_boundary.get(m, ()):
            src_task = by_end.get((e.src, e.stage, e.boundary, e.micro_batch))
            if src_task is None:
                continue
            step = src_task.training_step
            carried = held.get((e.src, e.stage, step), set())
            dst_key = (e.dst, e.stage, step)
            held.setdefault(dst_key, set()).update(carried)
            if len(held[dst_key]) == n:
                note_complete(e.stage, step, m)

    checks = []
    steps = sorted({t.training_step for t in backwards})
    for step in steps:
        for stage in range(1, n + 1):
            done = complete_at.get((stage, step))
            read = first_read.get((stage, step + 1))
            ok = done is not None and (read is None or done < read)
            checks.append(ReductionCheck(stage, step, done, read, ok))
    return checks
