"""Driver-activity label set: one normal class plus nine dangerous actions."""

from __future__ import annotations

from enum import Enum


class ActivityLabel(Enum):
    """The ten driving-behaviour classes recognised by the toolkit."""

    NORMAL = "Normal"
    DRINKING = "Drinking"
    FETCHING_FORWARD = "FetchingForward"
    STEERING_ANOMALY = "SteeringAnomaly"
    NODDING = "Nodding"
    YAWNING = "Yawning"
    PICKING_DROPS = "PickingDrops"
    USING_PHONE = "UsingPhone"
    TURNING_BACK = "TurningBack"
    TALKING_LEFT = "TalkingLeft"

    @property
    def is_dangerous(self) -> bool:
        return self is not ActivityLabel.NORMAL

    @classmethod
    def from_name(cls, name: str) -> "ActivityLabel":
        """Parse a label from its canonical string (case-insensitive)."""
        for label in cls:
            if label.value.lower() == name.lower():
                return label
        raise ValueError(
            f"unknown activity {name!r}; expected one of "
            + ", ".join(label.value for label in cls)
        )


#: The nine dangerous classes, in the fixed order used by classifier heads.
DANGEROUS_LABELS: tuple[ActivityLabel, ...] = tuple(
    label for label in ActivityLabel if label.is_dangerous
)

#: Index of each dangerous class in classifier outputs.
DANGEROUS_INDEX: dict[ActivityLabel, int] = {
    label: i for i, label in enumerate(DANGEROUS_LABELS)
}
