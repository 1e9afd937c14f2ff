from collections import defaultdict
from dataclasses import dataclass
from enum import Enum, auto
from typing import Any, Callable


class EventType(Enum):
    """
    Lifecycle of one simulation run. Payloads:
        RUN_STARTED: the ScenarioConfig being run
        SLOT_COMPLETED: the SlotRecord of the slot
        RUN_FINISHED: the MetricsReport of the run
        RUN_ABORTED: the exception that stopped the run
    """

    RUN_STARTED = auto()
    SLOT_COMPLETED = auto()
    RUN_FINISHED = auto()
    RUN_ABORTED = auto()


@dataclass(frozen=True)
class Event:
    type: EventType
    data: Any = None


Handler = Callable[[Event], None]


class EventManager:
    """
    Pub/sub bus owned by a single simulation run. Handlers are called in
    subscription order so journal writes stay deterministic.
    """

    def __init__(self):
        self._handlers: defaultdict[EventType, list[Handler]] = defaultdict(
            list
        )

    def subscribe(self, event_type: EventType, handler: Handler) -> None:
        handlers = self._handlers[event_type]
        if handler not in handlers:
            handlers.append(handler)

    def unsubscribe(self, event_type: EventType, handler: Handler) -> None:
        """Does nothing for a handler that is not subscribed."""
        handlers = self._handlers[event_type]
        if handler in handlers:
            handlers.remove(handler)

    def subscriber_count(self, event_type: EventType) -> int:
        return len(self._handlers[event_type])

    def publish(self, event: Event) -> int:
        """
        Delivers the event and returns how many handlers received it.
        Handlers may unsubscribe while being called.
        """
        handlers = list(self._handlers[event.type])
        for handler in handlers:
            handler(event)
        return len(handlers)
