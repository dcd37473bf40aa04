"""Execution timelines: who computes what, when, on which device.

All builders share one geometry. A training step is a forward sweep over the
n stages followed by the backward sweep, 2n unit time steps in all. In the
cyclic schemes micro-batch i runs the same pass shifted 2(i-1) steps later,
which tiles the time axis with no idle slots once every worker has started.

Time steps are global 1-based integers; a task covers [start, end]. Versions
follow the update rules in `rules`: tasks of training step t read stage
parameters tagged t (fresh) or t-1 (stale), and version v of a stage comes
into existence strictly after the last backward contribution of step v-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Optional

from .events import CommEvent, CommKind, ALL_DEVICES
from .profiles import ModelProfile, ParallelismConfig, Scheme
from .rules import UpdateRule, min_delay_rule


class TaskKind(str, Enum):
    FORWARD = "F"
    BACKWARD = "B"


class ParamModel(str, Enum):
    """How a device holds parameters, for memory accounting.

    REPLICA: a full model copy is always resident.
    RESIDENT: a stage's replica slot is held from its forward through its
    backward (colocated workers on one GPU).
    OWNED: only the stages assigned to the device are resident.
    """

    REPLICA = "replica"
    RESIDENT = "resident"
    OWNED = "owned"


@dataclass(frozen=True)
class Device:
    id: str
    gpu: int
    capacity: Optional[int]  # max concurrently held (micro-batch, stage) activations
    param_model: ParamModel
    owned_stages: tuple[int, ...] = ()


@dataclass(frozen=True)
class Task:
    kind: TaskKind
    micro_batch: int
    stage: int
    training_step: int
    param_version: int
    device: str
    start: int
    duration: int = 1

    @property
    def end(self) -> int:
        return self.start + self.duration - 1

    def key(self) -> tuple:
        return (self.kind, self.micro_batch, self.stage, self.training_step)


@dataclass(frozen=True)
class Timeline:
    scheme: Scheme
    cfg: ParallelismConfig
    devices: tuple[Device, ...]
    tasks: tuple[Task, ...]
    comm_events: tuple[CommEvent, ...]
    horizon: int
    slots: dict = field(repr=False, hash=False, compare=False, default_factory=dict)

    @staticmethod
    def from_parts(scheme, cfg, devices, tasks, events=(), horizon=None) -> "Timeline":
        tasks = tuple(sorted(tasks, key=lambda t: (t.start, t.device)))
        if horizon is None:
            horizon = max((t.end for t in tasks), default=0)
        slots = {}
        for t in tasks:
            for step in range(t.start, t.end + 1):
                slots.setdefault((t.device, step), t)
        return Timeline(
            scheme=scheme,
            cfg=cfg,
            devices=tuple(devices),
            tasks=tasks,
            comm_events=tuple(sorted(events, key=lambda e: (e.boundary, e.src, e.stage))),
            horizon=horizon,
            slots=slots,
        )

    def with_events(self, extra) -> "Timeline":
        merged = tuple(
            sorted(
                self.comm_events + tuple(extra),
                key=lambda e: (e.boundary, e.src, e.stage),
            )
        )
        return replace(self, comm_events=merged)

    def device_by_id(self, device_id: str) -> Device:
        return next(d for d in self.devices if d.id == device_id)

    @property
    def n(self) -> int:
        return self.cfg.n

    @property
    def pass_length(self) -> int:
        w = self.cfg.cost_weights
        return self.n * (w.forward_cost + w.backward_cost)

    def steady_window(self) -> tuple[int, int]:
        """Step range [lo, hi] where every worker is past its warm-up pass."""
        w = self.cfg.cost_weights
        lo = max(self.pass_length, 2 * w.forward_cost * (self.n - 1)) + 1
        hi = self.pass_length * self.cfg.training_steps
        return lo, hi

    def task_index(self) -> dict:
        return {t.key(): t for t in self.tasks}

    def gpu_count(self) -> int:
        return len({d.gpu for d in self.devices})


def tree_depth(participants: int) -> int:
    """Dependent communication rounds for a tree-shaped collective."""
    return max(1, math.ceil(math.log2(participants))) if participants > 1 else 0


def stage_at_phase(phase: int, n: int) -> int:
    """Stage touched at local phase 1..2n of a pass (unit weights)."""
    return phase if phase <= n else 2 * n + 1 - phase


def _local_starts(n: int, fc: int, bc: int, j: int) -> tuple[int, int]:
    f_start = (j - 1) * fc + 1
    b_start = n * fc + (n - j) * bc + 1
    return f_start, b_start


def _boundary_share(profile: ModelProfile) -> Fraction:
    """Per-sample activation payload of one internal stage boundary."""
    n = profile.n_stages
    if n < 2:
        return Fraction(0)
    return Fraction(profile.boundary_act_per_sample, n - 1)


def _require_scheme(cfg: ParallelismConfig, allowed) -> None:
    if cfg.scheme not in allowed:
        raise ValueError(f"scheme {cfg.scheme.value} not supported by this builder")


def _resolve_rule(rule, n: int) -> UpdateRule:
    if isinstance(rule, str):
        from .rules import rule_by_name

        rule = rule_by_name(rule, n)
    if rule.n != n:
        raise ValueError(f"rule is sized for n={rule.n}, config has n={n}")
    rule.check_feasible()
    return rule


def build_dp_timeline(cfg: ParallelismConfig) -> Timeline:
    """Synchronous schedule: all micro-batches sweep the stages in lockstep.

    Every training step spans exactly 2n unit steps and every task of step t
    reads version t.
    """
    _require_scheme(cfg, (Scheme.SINGLE_GPU_DP, Scheme.MULTI_GPU_DP))
    n, w = cfg.n, cfg.cost_weights
    single = cfg.scheme.is_single_gpu
    devices = [
        Device(
            id=f"w{i}",
            gpu=0 if single else i - 1,
            capacity=None if single else n,
            param_model=ParamModel.RESIDENT if single else ParamModel.REPLICA,
        )
        for i in range(1, n + 1)
    ]
    pass_len = n * (w.forward_cost + w.backward_cost)
    tasks = []
    for t in range(1, cfg.training_steps + 1):
        base = (t - 1) * pass_len
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                f_start, b_start = _local_starts(n, w.forward_cost, w.backward_cost, j)
                tasks.append(
                    Task(TaskKind.FORWARD, i, j, t, t, f"w{i}", base + f_start, w.forward_cost)
                )
                tasks.append(
                    Task(TaskKind.BACKWARD, i, j, t, t, f"w{i}", base + b_start, w.backward_cost)
                )
    return Timeline.from_parts(cfg.scheme, cfg, devices, tasks, horizon=cfg.training_steps * pass_len)


def _cdp_tasks(cfg: ParallelismConfig, rule: UpdateRule, device_of) -> tuple[list, int]:
    """Staggered tasks for all cyclic schemes; placement via device_of(i, j, t)."""
    n, w = cfg.n, cfg.cost_weights
    pass_len = n * (w.forward_cost + w.backward_cost)
    stagger = 2 * w.forward_cost
    tasks = []
    for t in range(1, cfg.training_steps + 1):
        base = (t - 1) * pass_len
        for i in range(1, n + 1):
            offset = stagger * (i - 1)
            for j in range(1, n + 1):
                f_start, b_start = _local_starts(n, w.forward_cost, w.backward_cost, j)
                version = rule.version_read(i, j, t)
                dev = device_of(i, j, t)
                tasks.append(
                    Task(TaskKind.FORWARD, i, j, t, version, dev, base + offset + f_start, w.forward_cost)
                )
                tasks.append(
                    Task(TaskKind.BACKWARD, i, j, t, version, dev, base + offset + b_start, w.backward_cost)
                )
    horizon = cfg.training_steps * pass_len + stagger * (n - 1)
    return tasks, horizon


def build_cdp_timeline(cfg: ParallelismConfig, rule="cdp-v2") -> Timeline:
    """Cyclic schedule: micro-batch i starts 2(i-1) steps after micro-batch 1.

    Worker passes tile the time axis, so from the second training step on
    every slot is occupied. The rule resolves each task's parameter version;
    rules demanding fresh reads the stagger cannot provide are rejected.
    """
    _require_scheme(cfg, (Scheme.SINGLE_GPU_CDP, Scheme.MULTI_GPU_CDP))
    n = cfg.n
    rule = _resolve_rule(rule, n)
    single = cfg.scheme.is_single_gpu
    devices = [
        Device(
            id=f"w{i}",
            gpu=0 if single else i - 1,
            capacity=None if single else n,
            param_model=ParamModel.RESIDENT if single else ParamModel.REPLICA,
        )
        for i in range(1, n + 1)
    ]
    tasks, horizon = _cdp_tasks(cfg, rule, lambda i, j, t: f"w{i}")
    return Timeline.from_parts(cfg.scheme, cfg, devices, tasks, horizon=horizon)


def build_pp_timeline(
    cfg: ParallelismConfig, rule="cdp-v2", profile: Optional[ModelProfile] = None
) -> Timeline:
    """Pipeline placement: the cyclic schedule collapsed onto one device per
    stage, which lands as the alternating one-forward-one-backward pattern.

    Device j keeps the activations of up to n-j+1 in-flight micro-batches.
    Passing a profile also records the boundary activation hand-offs.
    """
    _require_scheme(cfg, (Scheme.PP,))
    w = cfg.cost_weights
    if w.forward_cost != w.backward_cost:
        raise ValueError("pipeline placement requires equal forward and backward costs")
    n = cfg.n
    rule = _resolve_rule(rule, n)
    devices = [
        Device(id=f"p{j}", gpu=j - 1, capacity=n, param_model=ParamModel.OWNED, owned_stages=(j,))
        for j in range(1, n + 1)
    ]
    tasks, horizon = _cdp_tasks(cfg, rule, lambda i, j, t: f"p{j}")
    tl = Timeline.from_parts(cfg.scheme, cfg, devices, tasks, horizon=horizon)
    if profile is not None:
        if profile.n_stages != n:
            raise ValueError("profile stage count must equal n")
        tl = attach_forward_handoffs(tl, profile)
    return tl


def attach_forward_handoffs(tl: Timeline, profile: ModelProfile) -> Timeline:
    """Activation hand-offs after each forward of a non-final stage."""
    n = tl.n
    if n < 2:
        return tl
    share = _boundary_share(profile) * tl.cfg.micro_batch_size
    index = tl.task_index()
    events = []
    if share == 0:
        return tl
    for t in tl.tasks:
        if t.kind is not TaskKind.FORWARD or t.stage >= n:
            continue
        nxt = index[(TaskKind.FORWARD, t.micro_batch, t.stage + 1, t.training_step)]
        if nxt.device == t.device:
            continue
        events.append(
            CommEvent(
                boundary=t.end,
                kind=CommKind.ACTIVATION_HANDOFF,
                src=t.device,
                dst=nxt.device,
                payload=share,
                stage=t.stage,
                micro_batch=t.micro_batch,
            )
        )
    return tl.with_events(events)


def build_mp_timeline(cfg: ParallelismConfig, profile: ModelProfile, cyclic: bool) -> Timeline:
    """Stage-partitioned placement, one stage's worth of model per device.

    Non-cyclic: an n x n device grid, device (i, j) dedicated to micro-batch
    i and stage j; only n devices compute at any step. Cyclic: stage j gets a
    pool of n-j+1 devices shared by the rotating micro-batches, n(n+1)/2
    devices in all, each holding at most one micro-batch's activations.
    """
    _require_scheme(cfg, (Scheme.DP_WITH_MP, Scheme.CDP_WITH_MP))
    if cyclic != (cfg.scheme is Scheme.CDP_WITH_MP):
        raise ValueError("cyclic flag does not match the configured scheme")
    if not cfg.cost_weights.is_unit:
        raise ValueError("model-partitioned builders require unit cost weights")
    if profile.n_stages != cfg.n:
        raise ValueError("profile stage count must equal n")
    n = cfg.n
    pass_len = 2 * n
    gpu = 0
    devices = []
    grad_events = []

    if not cyclic:
        ids = {}
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                ids[(i, j)] = f"r{i}s{j}"
                devices.append(
                    Device(
                        id=ids[(i, j)],
                        gpu=gpu,
                        capacity=1,
                        param_model=ParamModel.OWNED,
                        owned_stages=(j,),
                    )
                )
                gpu += 1
        tasks = []
        for t in range(1, cfg.training_steps + 1):
            base = (t - 1) * pass_len
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    tasks.append(Task(TaskKind.FORWARD, i, j, t, t, ids[(i, j)], base + j))
                    tasks.append(
                        Task(TaskKind.BACKWARD, i, j, t, t, ids[(i, j)], base + 2 * n - j + 1)
                    )
            if n > 1:
                for j in range(1, n + 1):
                    grad_events.append(
                        CommEvent(
                            boundary=base + pass_len,
                            kind=CommKind.COLLECTIVE_ALL_REDUCE,
                            src=ALL_DEVICES,
                            dst=ALL_DEVICES,
                            payload=profile.stage_params[j - 1],
                            stage=j,
                            participants=n,
                            depth=tree_depth(n),
                        )
                    )
        tl = Timeline.from_parts(
            cfg.scheme, cfg, devices, tasks, horizon=cfg.training_steps * pass_len
        )
        return attach_forward_handoffs(tl.with_events(grad_events), profile)

    # Cyclic: pool of n-j+1 devices per stage, rotated by contribution order.
    pool_ids = {}
    for j in range(1, n + 1):
        pool = n - j + 1
        for k in range(pool):
            pool_ids[(j, k)] = f"s{j}g{k + 1}"
            devices.append(
                Device(
                    id=pool_ids[(j, k)],
                    gpu=gpu,
                    capacity=1,
                    param_model=ParamModel.OWNED,
                    owned_stages=(j,),
                )
            )
            gpu += 1

    def device_of(i, j, t):
        pool = n - j + 1
        m = (t - 1) * n + (i - 1)
        return pool_ids[(j, m % pool)]

    rule = min_delay_rule(n)
    tasks, horizon = _cdp_tasks(cfg, rule, device_of)
    index = {t.key(): t for t in tasks}
    for t in range(1, cfg.training_steps + 1):
        for j in range(1, n + 1):
            pool = n - j + 1
            if pool < 2:
                continue
            # Each pool device accumulates its own contributions locally and
            # forwards the partial sum right after its last backward of the
            # step; the chain ends at the device applying the update.
            for i in range(j, n):
                b = index[(TaskKind.BACKWARD, i, j, t)]
                nxt = index[(TaskKind.BACKWARD, i + 1, j, t)]
                grad_events.append(
                    CommEvent(
                        boundary=b.end,
                        kind=CommKind.GRADIENT_REDUCE,
                        src=b.device,
                        dst=nxt.device,
                        payload=profile.stage_params[j - 1],
                        stage=j,
                        micro_batch=i,
                    )
                )
    tl = Timeline.from_parts(cfg.scheme, cfg, devices, tasks, horizon=horizon)
    return attach_forward_handoffs(tl.with_events(grad_events), profile)


def build_zero_timeline(cfg: ParallelismConfig, profile: ModelProfile, cyclic: bool) -> Timeline:
    """State-sharded workers: task placement matches plain DP or CDP, but each
    worker owns just one stage's model states and fetches the rest.

    Returns task placement only; `comm.schedule_zero_transfers` attaches the
    state broadcasts (non-cyclic) or point-to-point state hops (cyclic).
    """
    _require_scheme(cfg, (Scheme.ZERO_DP, Scheme.ZERO_CDP))
    if cyclic != (cfg.scheme is Scheme.ZERO_CDP):
        raise ValueError("cyclic flag does not match the configured scheme")
    if not cfg.cost_weights.is_unit:
        raise ValueError("state-sharded builders require unit cost weights")
    if profile.n_stages != cfg.n:
        raise ValueError("profile stage count must equal n")
    n = cfg.n
    pass_len = 2 * n
    devices = [
        Device(
            id=f"w{i}",
            gpu=i - 1,
            capacity=n,
            param_model=ParamModel.OWNED,
            owned_stages=(i,),
        )
        for i in range(1, n + 1)
    ]
    if not cyclic:
        tasks = []
        for t in range(1, cfg.training_steps + 1):
            base = (t - 1) * pass_len
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    tasks.append(Task(TaskKind.FORWARD, i, j, t, t, f"w{i}", base + j))
                    tasks.append(Task(TaskKind.BACKWARD, i, j, t, t, f"w{i}", base + 2 * n - j + 1))
        return Timeline.from_parts(
            cfg.scheme, cfg, devices, tasks, horizon=cfg.training_steps * pass_len
        )

    tasks, horizon = _cdp_tasks(cfg, min_delay_rule(n), lambda i, j, t: f"w{i}")
    return Timeline.from_parts(cfg.scheme, cfg, devices, tasks, horizon=horizon)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_kind(self, kind: str) -> list[Violation]:
        return [v for v in self.violations if v.kind == kind]


def validate_timeline(tl: Timeline) -> ValidationReport:
    """Check dependency legality of a timeline.

    Flags, as data rather than exceptions: forward/backward sweep order,
    backward-after-forward, reads of parameter versions that do not exist
    yet, more than one task per device slot, a backward placed on a device
    other than its forward's, and per-device activation capacity overflow.
    """
    violations: list[Violation] = []
    index = tl.task_index()

    def bad(kind, msg):
        violations.append(Violation(kind, msg))

    # One task per device per step.
    seen: dict = {}
    for t in tl.tasks:
        for step in range(t.start, t.end + 1):
            other = seen.get((t.device, step))
            if other is not None and other is not t:
                bad(
                    "device-conflict",
                    f"device {t.device} runs two tasks at step {step}",
                )
            else:
                seen[(t.device, step)] = t

    # Sweep ordering and forward-before-backward, per micro-batch and step.
    for t in tl.tasks:
        i, j, s = t.micro_batch, t.stage, t.training_step
        if t.kind is TaskKind.FORWARD and j > 1:
            prev = index.get((TaskKind.FORWARD, i, j - 1, s))
            if prev is None or prev.end >= t.start:
                bad("forward-order", f"forward ({i},{j},{s}) not preceded by stage {j - 1}")
        if t.kind is TaskKind.BACKWARD:
            fwd = index.get((TaskKind.FORWARD, i, j, s))
            if fwd is None or fwd.end >= t.start:
                bad("forward-before-backward", f"backward ({i},{j},{s}) precedes its forward")
            elif fwd.device != t.device:
                bad(
                    "activation-locality",
                    f"backward ({i},{j},{s}) runs on {t.device} but its forward ran on {fwd.device}",
                )
            if j < tl.n:
                nxt = index.get((TaskKind.BACKWARD, i, j + 1, s))
                if nxt is None or nxt.end >= t.start:
                    bad("backward-order", f"backward ({i},{j},{s}) not preceded by stage {j + 1}")

    # Version existence: version v of stage j is usable strictly after the
    # last backward contribution of training step v-1 to stage j.
    version_ready: dict = {}
    for t in tl.tasks:
        if t.kind is TaskKind.BACKWARD:
            key = (t.stage, t.training_step + 1)
            version_ready[key] = max(version_ready.get(key, 0), t.end)
    for t in tl.tasks:
        v = t.param_version
        if v <= 1:
            continue
        ready = version_ready.get((t.stage, v))
        if ready is None:
            bad(
                "stale-read",
                f"task ({t.micro_batch},{t.stage},{t.training_step}) reads version {v} "
                "that is never produced",
            )
        elif t.start <= ready:
            bad(
                "stale-read",
                f"task ({t.micro_batch},{t.stage},{t.training_step}) reads version {v} "
                f"at step {t.start}, available only after step {ready}",
            )

    # Activation capacity per device: a record lives from its forward's start
    # through its backward's end.
    intervals: dict = {}
    for t in tl.tasks:
        key = (t.micro_batch, t.stage, t.training_step)
        if t.kind is TaskKind.FORWARD:
            intervals.setdefault(key, [t.device, t.start, None])
        else:
            rec = intervals.get(key)
            if rec is not None:
                rec[2] = t.end
    per_device: dict = {}
    for dev, start, end in intervals.values():
        if end is None:
            end = tl.horizon
        per_device.setdefault(dev, []).append((start, end))
    for d in tl.devices:
        if d.capacity is None:
            continue
        deltas: dict = {}
        for start, end in per_device.get(d.id, ()):
            deltas[start] = deltas.get(start, 0) + 1
            deltas[end + 1] = deltas.get(end + 1, 0) - 1
        held = 0
        for step in sorted(deltas):
            held += deltas[step]
            if held > d.capacity:
                bad(
                    "capacity",
                    f"device {d.id} holds {held} activation records at step {step}, "
                    f"capacity {d.capacity}",
                )
                break

    return ValidationReport(tuple(violations))
