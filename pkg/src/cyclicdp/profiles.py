"""Model cost profiles and parallelism configurations.

Memory quantities are exact non-negative integers (abstract units or bytes).
They are never floats: every downstream accounting check relies on exact
equality, with `fractions.Fraction` used wherever a quantity is split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class ProfileError(ValueError):
    """Raised for schema or invariant violations, with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class Scheme(str, Enum):
    SINGLE_GPU_DP = "single-gpu-dp"
    SINGLE_GPU_CDP = "single-gpu-cdp"
    MULTI_GPU_DP = "multi-gpu-dp"
    MULTI_GPU_CDP = "multi-gpu-cdp"
    DP_WITH_MP = "dp-mp"
    CDP_WITH_MP = "cdp-mp"
    PP = "pp"
    ZERO_DP = "zero-dp"
    ZERO_CDP = "zero-cdp"

    @property
    def is_cyclic(self) -> bool:
        return self in (
            Scheme.SINGLE_GPU_CDP,
            Scheme.MULTI_GPU_CDP,
            Scheme.CDP_WITH_MP,
            Scheme.PP,
            Scheme.ZERO_CDP,
        )

    @property
    def is_single_gpu(self) -> bool:
        return self in (Scheme.SINGLE_GPU_DP, Scheme.SINGLE_GPU_CDP)

    @property
    def uses_model_partition(self) -> bool:
        return self in (Scheme.DP_WITH_MP, Scheme.CDP_WITH_MP, Scheme.PP)

    @property
    def is_zero(self) -> bool:
        return self in (Scheme.ZERO_DP, Scheme.ZERO_CDP)


ALL_SCHEMES = tuple(Scheme)


@dataclass(frozen=True)
class CostWeights:
    """Duration of one stage pass, in time-step units."""

    forward_cost: int = 1
    backward_cost: int = 1

    def __post_init__(self):
        if self.forward_cost < 1 or self.backward_cost < 1:
            raise ValueError("cost weights must be positive integers")

    @property
    def is_unit(self) -> bool:
        return self.forward_cost == 1 and self.backward_cost == 1


@dataclass(frozen=True)
class ModelProfile:
    """Per-stage memory footprint of a stage-partitioned model.

    stage_params[j] is the parameter (plus optimizer state) memory of stage j,
    stage_acts_per_sample[j] the activation memory one sample leaves on stage j,
    and boundary_act_per_sample the total activation volume one sample moves
    across all internal stage boundaries during a forward pass.
    """

    stage_params: tuple[int, ...]
    stage_acts_per_sample: tuple[int, ...]
    boundary_act_per_sample: int

    def __post_init__(self):
        object.__setattr__(self, "stage_params", tuple(self.stage_params))
        object.__setattr__(
            self, "stage_acts_per_sample", tuple(self.stage_acts_per_sample)
        )
        if len(self.stage_params) == 0:
            raise ProfileError("stages", "at least one stage is required")
        if len(self.stage_params) != len(self.stage_acts_per_sample):
            raise ProfileError("stages", "params and activation lists differ in length")
        for name, values in (
            ("params", self.stage_params),
            ("acts_per_sample", self.stage_acts_per_sample),
        ):
            for idx, v in enumerate(values):
                if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                    raise ProfileError(
                        f"stages[{idx}].{name}", "must be a non-negative integer"
                    )
        b = self.boundary_act_per_sample
        if not isinstance(b, int) or isinstance(b, bool) or b < 0:
            raise ProfileError(
                "boundary_act_per_sample", "must be a non-negative integer"
            )
        if b > sum(self.stage_acts_per_sample):
            raise ProfileError(
                "boundary_act_per_sample",
                "must not exceed the total activation memory per sample",
            )

    @property
    def n_stages(self) -> int:
        return len(self.stage_params)

    @property
    def total_params(self) -> int:
        return sum(self.stage_params)

    @property
    def total_acts_per_sample(self) -> int:
        return sum(self.stage_acts_per_sample)

    @property
    def is_homogeneous(self) -> bool:
        return (
            len(set(self.stage_params)) == 1
            and len(set(self.stage_acts_per_sample)) == 1
        )


@dataclass(frozen=True)
class ParallelismConfig:
    """Scheme selection plus the shared stage/micro-batch count n."""

    scheme: Scheme
    n: int
    micro_batch_size: int = 1
    training_steps: int = 4
    cost_weights: CostWeights = field(default_factory=CostWeights)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.micro_batch_size < 1:
            raise ValueError("micro_batch_size must be >= 1")
        if self.training_steps < 1:
            raise ValueError("training_steps must be >= 1")


def make_homogeneous_profile(
    n: int, total_params: int, total_acts: int, boundary_acts: int
) -> ModelProfile:
    """Build an n-stage profile with equal stages.

    Totals must divide evenly by n; uneven splits are rejected rather than
    rounded so that exact accounting checks stay exact.
    """
    if n < 1:
        raise ProfileError("n", "must be >= 1")
    for name, v in (
        ("total_params", total_params),
        ("total_acts", total_acts),
        ("boundary_acts", boundary_acts),
    ):
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ProfileError(name, "must be a non-negative integer")
    if boundary_acts > total_acts:
        raise ProfileError("boundary_acts", "must not exceed total_acts")
    if total_params % n or total_acts % n:
        raise ProfileError(
            "n", f"totals must divide evenly by n={n} for a homogeneous profile"
        )
    return ModelProfile(
        stage_params=(total_params // n,) * n,
        stage_acts_per_sample=(total_acts // n,) * n,
        boundary_act_per_sample=boundary_acts,
    )


_STAGE_KEYS = {"params", "acts_per_sample"}
_TOP_KEYS = {"stages", "boundary_act_per_sample"}


def profile_from_dict(doc: Any) -> ModelProfile:
    """Validate a parsed profile document. Unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ProfileError("$", "profile document must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ProfileError(sorted(unknown)[0], "unknown key")
    missing = _TOP_KEYS - set(doc)
    if missing:
        raise ProfileError(sorted(missing)[0], "missing key")
    stages = doc["stages"]
    if not isinstance(stages, list) or not stages:
        raise ProfileError("stages", "must be a non-empty array")
    params = []
    acts = []
    for idx, entry in enumerate(stages):
        if not isinstance(entry, dict):
            raise ProfileError(f"stages[{idx}]", "must be an object")
        bad = set(entry) - _STAGE_KEYS
        if bad:
            raise ProfileError(f"stages[{idx}].{sorted(bad)[0]}", "unknown key")
        for key, out in (("params", params), ("acts_per_sample", acts)):
            if key not in entry:
                raise ProfileError(f"stages[{idx}].{key}", "missing key")
            v = entry[key]
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ProfileError(
                    f"stages[{idx}].{key}", "must be a non-negative integer"
                )
            out.append(v)
    return ModelProfile(
        stage_params=tuple(params),
        stage_acts_per_sample=tuple(acts),
        boundary_act_per_sample=doc["boundary_act_per_sample"],
    )


def profile_to_dict(profile: ModelProfile) -> dict:
    return {
        "stages": [
            {"params": p, "acts_per_sample": a}
            for p, a in zip(profile.stage_params, profile.stage_acts_per_sample)
        ],
        "boundary_act_per_sample": profile.boundary_act_per_sample,
    }


def load_profile(source: str) -> ModelProfile:
    """Parse a profile from a JSON text or a path to a JSON file."""
    text = source
    if not source.lstrip().startswith("{"):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError("$", f"invalid JSON: {exc}") from exc
    return profile_from_dict(doc)


def emit_profile(profile: ModelProfile) -> str:
    return json.dumps(profile_to_dict(profile), indent=2) + "\n"
