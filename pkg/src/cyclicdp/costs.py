"""Memory and communication accounting, two independent ways.

`closed_form_costs` evaluates the per-scheme cost formulas for homogeneous
stage splits; `measure_costs` walks a built timeline and tallies the same
quantities from first principles. `verify_table1` checks the two agree
exactly, in rational arithmetic, for every scheme and stage count.

Residency convention: a stage's activations (and, on colocated single-GPU
workers, its parameter replica slot) count as held from the start of the
forward step through the end of the backward step, inclusive. The volume
field is the payload crossing device boundaries per training step, divided
by the micro-batch count n; collectives count once per participant.
Model-state traffic is tallied separately and is not part of the volume
field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from typing import Optional, Sequence, Union

from .comm import scheduled_timeline
from .events import CommKind
from .profiles import (
    ALL_SCHEMES,
    ModelProfile,
    ParallelismConfig,
    Scheme,
    make_homogeneous_profile,
)
from .schedule import ParamModel, TaskKind, Timeline, tree_depth, validate_timeline

Memory = Union[int, Fraction]

COMM_DEGENERATE_FIELDS = (
    "comm_volume_per_training_step",
    "state_comm_volume_per_training_step",
    "max_comm_steps_per_boundary",
)


@dataclass(frozen=True)
class CostReport:
    peak_activation_memory_per_device: Memory
    steady_activation_memory_per_device: Memory
    parameter_memory_per_device: Memory
    comm_volume_per_training_step: Memory
    max_comm_steps_per_boundary: int
    device_count: int
    idle_fraction: Fraction
    steady_activation_min: Optional[Memory] = None
    activation_trough: Optional[Memory] = None
    parameter_memory_shared: Optional[Memory] = None
    state_comm_volume_per_training_step: Memory = 0
    busy_devices_per_step: Optional[int] = None
    deep_boundary_count: Optional[int] = None
    collective_boundary_count: Optional[int] = None
    degenerate_fields: tuple[str, ...] = ()


def closed_form_costs(cfg: ParallelismConfig, profile: ModelProfile) -> CostReport:
    """Evaluate the analytical cost table row for the configured scheme.

    Only defined for homogeneous profiles (equal stages). At n=1 the
    communication entries are formula values flagged degenerate: with one
    worker nothing is actually exchanged.
    """
    if profile.n_stages != cfg.n:
        raise ValueError("profile stage count must equal n")
    if not profile.is_homogeneous:
        raise ValueError("closed forms apply to homogeneous profiles only")
    n = cfg.n
    b = cfg.micro_batch_size
    pp = profile.total_params
    pa = profile.total_acts_per_sample
    pi = profile.boundary_act_per_sample
    act = b * pa
    log_steps = tree_depth(n)
    p2p_steps = 1 if n > 1 else 0
    degenerate = COMM_DEGENERATE_FIELDS if n == 1 else ()
    scheme = cfg.scheme

    def report(
        activation,
        param,
        volume,
        steps,
        devices,
        idle,
        shared=None,
        state_volume=0,
    ):
        return CostReport(
            peak_activation_memory_per_device=activation,
            steady_activation_memory_per_device=activation,
            parameter_memory_per_device=param,
            comm_volume_per_training_step=volume,
            max_comm_steps_per_boundary=steps,
            device_count=devices,
            idle_fraction=idle,
            parameter_memory_shared=shared,
            state_comm_volume_per_training_step=state_volume,
            busy_devices_per_step=n,
            degenerate_fields=degenerate if devices > 1 or n == 1 else (),
        )

    zero = Fraction(0)
    if scheme is Scheme.SINGLE_GPU_DP:
        return report(n * act, n * pp, 0, 0, 1, zero, shared=pp)
    if scheme is Scheme.SINGLE_GPU_CDP:
        half = Fraction(n + 1, 2)
        return report(half * act, half * pp, 0, 0, 1, zero, shared=pp)
    if scheme is Scheme.MULTI_GPU_DP:
        return report(act, pp, pp, log_steps, n, zero)
    if scheme is Scheme.MULTI_GPU_CDP:
        return report(act, pp, pp, p2p_steps, n, zero)
    if scheme is Scheme.DP_WITH_MP:
        return report(
            Fraction(act, n),
            Fraction(pp, n),
            pp + b * pi,
            log_steps,
            n * n,
            Fraction(n - 1, n),
        )
    if scheme is Scheme.CDP_WITH_MP:
        return report(
            Fraction(act, n),
            Fraction(pp, n),
            Fraction((n - 1) * pp, 2 * n) + b * pi,
            p2p_steps,
            n * (n + 1) // 2,
            Fraction(n - 1, n + 1),
        )
    if scheme is Scheme.PP:
        return report(act, Fraction(pp, n), b * pi, p2p_steps, n, zero)
    if scheme is Scheme.ZERO_DP:
        return report(
            act, Fraction(pp, n), pp, log_steps, n, zero, state_volume=2 * pp
        )
    if scheme is Scheme.ZERO_CDP:
        return report(
            act,
            Fraction(pp, n),
            pp,
            p2p_steps,
            n,
            zero,
            state_volume=Fraction(2 * (n - 1) * pp, n),
        )
    raise ValueError(f"unhandled scheme {scheme}")


def _activation_records(tl: Timeline):
    """(device, start, end, stage) for each held activation interval."""
    pending: dict = {}
    records = []
    for t in tl.tasks:
        key = (t.micro_batch, t.stage, t.training_step)
        if t.kind is TaskKind.FORWARD:
            pending[key] = t
        else:
            fwd = pending.get(key)
            start = fwd.start if fwd is not None else t.start
            dev = fwd.device if fwd is not None else t.device
            records.append((dev, start, t.end, t.stage))
    return records


def _series_from_intervals(intervals, horizon: int):
    """Prefix-summed per-step totals from weighted [start, end] intervals."""
    deltas = [0] * (horizon + 2)
    for start, end, weight in intervals:
        start = max(1, start)
        end = min(horizon, end)
        if end < start:
            continue
        deltas[start] += weight
        deltas[end + 1] -= weight
    series = [0] * (horizon + 1)
    acc = 0
    for g in range(1, horizon + 1):
        acc += deltas[g]
        series[g] = acc
    return series


def measure_costs(tl: Timeline, profile: ModelProfile) -> CostReport:
    """Tally memory and communication directly from a built timeline.

    Needs at least three training steps: per-step statistics come from the
    steady region (second step on) and communication counts come from one
    full steady window of boundaries.
    """
    cfg = tl.cfg
    if profile.n_stages != cfg.n:
        raise ValueError("profile stage count must equal n")
    if cfg.training_steps < 3:
        raise ValueError("measurement needs training_steps >= 3")
    n = cfg.n
    b = cfg.micro_batch_size
    horizon = tl.horizon
    lo, hi = tl.steady_window()
    pass_len = tl.pass_length

    gpus = sorted({d.gpu for d in tl.devices})
    gpu_of = {d.id: d.gpu for d in tl.devices}

    records = _activation_records(tl)
    act_intervals: dict = {g: [] for g in gpus}
    for dev, start, end, stage in records:
        act_intervals[gpu_of[dev]].append(
            (start, end, b * profile.stage_acts_per_sample[stage - 1])
        )

    peak = 0
    steady_max = 0
    steady_min = None
    trough = None
    for g in gpus:
        series = _series_from_intervals(act_intervals[g], horizon)
        peak = max(peak, max(series[1:], default=0))
        window = series[lo : hi + 1]
        if window:
            steady_max = max(steady_max, max(window))
            wmin = min(window)
            steady_min = wmin if steady_min is None else max(steady_min, wmin)
        # Residency between steps: alive at boundary g when the forward is
        # done by g and the backward ends after g.
        boundary_deltas = [0] * (horizon + 2)
        for dev, start, end, stage in records:
            if gpu_of[dev] != g:
                continue
            f_end = start + cfg.cost_weights.forward_cost - 1
            if end > f_end:
                boundary_deltas[f_end] += b * profile.stage_acts_per_sample[stage - 1]
                boundary_deltas[end] -= b * profile.stage_acts_per_sample[stage - 1]
        acc = 0
        held = [0] * (horizon + 1)
        for g2 in range(1, horizon + 1):
            acc += boundary_deltas[g2]
            held[g2] = acc
        bwindow = held[lo : hi + 1]
        if bwindow:
            bmin = min(bwindow)
            trough = bmin if trough is None else max(trough, bmin)

    # Parameter memory per GPU: constant replicas/owned shares plus, on
    # colocated workers, per-stage replica slots held across each pass.
    param_const = {g: 0 for g in gpus}
    param_intervals: dict = {g: [] for g in gpus}
    resident_devices = set()
    for d in tl.devices:
        if d.param_model is ParamModel.REPLICA:
            param_const[d.gpu] += profile.total_params
        elif d.param_model is ParamModel.OWNED:
            param_const[d.gpu] += sum(
                profile.stage_params[s - 1] for s in d.owned_stages
            )
        else:
            resident_devices.add(d.id)
    for dev, start, end, stage in records:
        if dev in resident_devices:
            param_intervals[gpu_of[dev]].append(
                (start, end, profile.stage_params[stage - 1])
            )
    param_peak = 0
    for g in gpus:
        series = _series_from_intervals(param_intervals[g], horizon)
        window = series[lo : hi + 1] or [0]
        param_peak = max(param_peak, param_const[g] + max(window))

    # Communication over one steady window of boundaries.
    b0 = (cfg.training_steps - 2) * pass_len
    b1 = (cfg.training_steps - 1) * pass_len
    volume = Fraction(0)
    state_volume = Fraction(0)
    depth_by_boundary: dict = {}
    collective_boundaries = set()
    for e in tl.comm_events:
        if not (b0 < e.boundary <= b1):
            continue
        contribution = Fraction(e.payload) * e.volume_multiplicity
        if e.is_state:
            state_volume += contribution
        else:
            volume += contribution
        depth_by_boundary[e.boundary] = max(
            depth_by_boundary.get(e.boundary, 0), e.depth
        )
        if not e.is_point_to_point:
            collective_boundaries.add(e.boundary)
    volume /= n
    state_volume /= n
    max_steps = max(depth_by_boundary.values(), default=0)
    deep = sum(1 for d in depth_by_boundary.values() if d > 1)

    # Occupancy over the steady window, at timeline-device granularity.
    busy_by_step: dict = {}
    occupied = 0
    for (dev, step), _task in tl.slots.items():
        if lo <= step <= hi:
            occupied += 1
            busy_by_step.setdefault(step, set()).add(dev)
    total_slots = len(tl.devices) * (hi - lo + 1)
    idle = Fraction(1) - Fraction(occupied, total_slots)
    busy_counts = [len(v) for v in busy_by_step.values()] or [0]

    return CostReport(
        peak_activation_memory_per_device=peak,
        steady_activation_memory_per_device=steady_max,
        parameter_memory_per_device=param_peak,
        comm_volume_per_training_step=volume,
        max_comm_steps_per_boundary=max_steps,
        device_count=tl.gpu_count(),
        idle_fraction=idle,
        steady_activation_min=steady_min,
        activation_trough=trough,
        parameter_memory_shared=profile.total_params
        if cfg.scheme.is_single_gpu
        else None,
        state_comm_volume_per_training_step=state_volume,
        busy_devices_per_step=max(busy_counts),
        deep_boundary_count=deep,
        collective_boundary_count=len(collective_boundaries),
    )


@dataclass(frozen=True)
class Table1Params:
    total_params: int = 480
    total_acts: int = 4800
    boundary_acts: int = 240
    batch: int = 2


@dataclass(frozen=True)
class Table1Row:
    scheme: Scheme
    n: int
    closed: CostReport
    measured: CostReport
    equal: bool
    mismatches: tuple[str, ...] = ()
    degenerate_fields: tuple[str, ...] = ()


_EXACT_FIELDS = (
    "peak_activation_memory_per_device",
    "steady_activation_memory_per_device",
    "parameter_memory_per_device",
    "device_count",
    "idle_fraction",
    "busy_devices_per_step",
)
_COMM_FIELDS = (
    "comm_volume_per_training_step",
    "state_comm_volume_per_training_step",
)


def compare_reports(closed: CostReport, measured: CostReport, n: int) -> tuple[bool, tuple[str, ...]]:
    """Exact equality for memory/volume/count cells; bound-consistency for
    comm steps (equality when the stated bound is point-to-point)."""
    mismatches = []
    for name in _EXACT_FIELDS:
        if getattr(closed, name) != getattr(measured, name):
            mismatches.append(name)
    degenerate = set(closed.degenerate_fields)
    for name in _COMM_FIELDS:
        if name in degenerate:
            continue
        if getattr(closed, name) != getattr(measured, name):
            mismatches.append(name)
    if "max_comm_steps_per_boundary" not in degenerate:
        c, m = closed.max_comm_steps_per_boundary, measured.max_comm_steps_per_boundary
        if c <= 1:
            if m != c:
                mismatches.append("max_comm_steps_per_boundary")
        elif not (1 <= m <= c):
            mismatches.append("max_comm_steps_per_boundary")
    return (not mismatches), tuple(mismatches)


def verify_table1(
    n_values: Sequence[int],
    params: Table1Params = Table1Params(),
    schemes: Sequence[Scheme] = ALL_SCHEMES,
    training_steps: int = 4,
    rule: str = "cdp-v2",
) -> list[Table1Row]:
    """Cross-check closed forms against timeline measurement.

    Builds every (scheme, n) timeline with its comm events, validates it,
    measures it, and compares with the closed forms. A validation failure
    counts as a mismatch rather than an exception.
    """
    rows = []
    for n in n_values:
        if n < 1:
            raise ValueError("n values must be >= 1")
        profile = make_homogeneous_profile(
            n, params.total_params, params.total_acts, params.boundary_acts
        )
        for scheme in schemes:
            cfg = ParallelismConfig(
                scheme=scheme,
                n=n,
                micro_batch_size=params.batch,
                training_steps=training_steps,
            )
            tl = scheduled_timeline(cfg, profile, rule)
            closed = closed_form_costs(cfg, profile)
            measured = measure_costs(tl, profile)
            equal, mismatches = compare_reports(closed, measured, n)
            report = validate_timeline(tl)
            if not report.ok:
                equal = False
                mismatches = mismatches + ("timeline-validation",)
            rows.append(
                Table1Row(
                    scheme=scheme,
                    n=n,
                    closed=closed,
                    measured=measured,
                    equal=equal,
                    mismatches=mismatches,
                    degenerate_fields=closed.degenerate_fields,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# Activation-memory extrapolation from a single-pass profile.


def pass_series(profile: ModelProfile, batch: int = 1) -> list[int]:
    """Activation memory over one forward-backward pass, one sample per step.

    Rises by one stage's activations per forward step, holds the stage being
    walked back, and releases stage by stage on the way down.
    """
    acts = [a * batch for a in profile.stage_acts_per_sample]
    n = len(acts)
    up = []
    total = 0
    for a in acts:
        total += a
        up.append(total)
    down = [sum(acts[:k]) for k in range(n, 0, -1)]
    return up + down


def triangular_series(n: int, unit: int = 1) -> list[int]:
    """Pass series of an n-stage homogeneous model: the symmetric triangle."""
    return pass_series(
        make_homogeneous_profile(n, n, n * unit, 0), batch=1
    )


def extrapolate_series(
    series: Sequence[Memory], n: int, mode: str
) -> tuple[list[Fraction], Fraction]:
    """Per-worker activation series for n workers running one pass profile.

    mode "dp": all workers aligned, the per-worker series is the input.
    mode "cdp": workers evenly staggered over the pass, so the per-worker
    series is the average of n copies of the input, cyclically shifted by
    k/n of the pass duration. Returns (series, peak).
    """
    if not series:
        raise ValueError("series must be non-empty")
    length = len(series)
    if mode == "dp":
        out = [Fraction(v) for v in series]
        return out, max(out)
    if mode != "cdp":
        raise ValueError("mode must be 'dp' or 'cdp'")
    if length % n:
        raise ValueError(f"series length {length} is not divisible by n={n}")
    shift = length // n
    out = []
    for tau in range(length):
        total = sum(series[(tau + k * shift) % length] for k in range(n))
        out.append(Fraction(total, n))
    return out, max(out)


def peak_ratio(series: Sequence[Memory], n: int) -> Fraction:
    """Peak of the staggered per-worker series over the aligned peak."""
    _, dp_peak = extrapolate_series(series, n, "dp")
    _, cdp_peak = extrapolate_series(series, n, "cdp")
    if dp_peak == 0:
        raise ValueError("series peak is zero")
    return cdp_peak / dp_peak


@dataclass(frozen=True)
class ExtrapolationRow:
    n: int
    dp_peak: Fraction
    cdp_peak: Fraction
    ratio: Fraction


def extrapolation_report(
    series: Sequence[Memory], n_values: Sequence[int]
) -> list[ExtrapolationRow]:
    rows = []
    for n in n_values:
        _, dp_peak = extrapolate_series(series, n, "dp")
        _, cdp_peak = extrapolate_series(series, n, "cdp")
        rows.append(ExtrapolationRow(n, dp_peak, cdp_peak, cdp_peak / dp_peak))
    return rows


def builtin_heterogeneous_profile() -> ModelProfile:
    """32-stage profile with activation memory decreasing through depth,
    shipped for the extrapolation comparison against homogeneous stages."""
    from .profiles import profile_from_dict

    text = resources.files("cyclicdp").joinpath("data/resnet_like_profile.json").read_text()
    return profile_from_dict(json.loads(text))
