from enum import IntEnum


class EventClass(IntEnum):
    Normal = 0
    HarshAccel = 1
    HarshBrake = 2
    HarshTurn = 3

    @property
    def slug(self) -> str:
        return _SLUGS[self]

    @classmethod
    def from_slug(cls, slug: str) -> "EventClass":
        for event_class, event_slug in _SLUGS.items():
            if event_slug == slug.strip().lower():
                return event_class
        raise ValueError(f"Unknown event class : {slug}")


_SLUGS = {
    EventClass.Normal: "normal",
    EventClass.HarshAccel: "harsh_accel",
    EventClass.HarshBrake: "harsh_brake",
    EventClass.HarshTurn: "harsh_turn",
}

NUM_CLASSES = len(EventClass)

# highest priority first
AGGRESSIVE_PRIORITY = (
    EventClass.HarshTurn,
    EventClass.HarshBrake,
    EventClass.HarshAccel,
)
