"""Communication events attached to time-step boundaries.

Boundary b sits between time steps b and b+1: an event at boundary b departs
after step b completes and its payload is usable from step b+1 on.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

ALL_DEVICES = "*"

Memory = Union[int, Fraction]


class CommKind(str, Enum):
    GRADIENT_REDUCE = "gradient-reduce"
    ACTIVATION_HANDOFF = "activation-handoff"
    STATE_TRANSFER = "state-transfer"
    COLLECTIVE_ALL_REDUCE = "collective-all-reduce"
    BROADCAST = "broadcast"


POINT_TO_POINT_KINDS = (
    CommKind.GRADIENT_REDUCE,
    CommKind.ACTIVATION_HANDOFF,
    CommKind.STATE_TRANSFER,
)

STATE_KINDS = (CommKind.STATE_TRANSFER, CommKind.BROADCAST)


@dataclass(frozen=True)
class CommEvent:
    boundary: int
    kind: CommKind
    src: str
    dst: str
    payload: Memory
    stage: int
    micro_batch: Optional[int] = None
    participants: int = 2
    depth: int = 1

    def __post_init__(self):
        if self.payload <= 0:
            raise ValueError("event payload must be positive")
        if self.kind in POINT_TO_POINT_KINDS and self.src == self.dst:
            raise ValueError("point-to-point event needs distinct src and dst")

    @property
    def is_point_to_point(self) -> bool:
        return self.kind in POINT_TO_POINT_KINDS

    @property
    def is_state(self) -> bool:
        return self.kind in STATE_KINDS

    @property
    def volume_multiplicity(self) -> int:
        """Payload copies crossing links: once for point-to-point, once per
        participant for collectives."""
        return 1 if self.is_point_to_point else self.participants
