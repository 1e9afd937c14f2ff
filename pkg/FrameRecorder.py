import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Optional

from EventManager import Event, EventManager, EventType

if TYPE_CHECKING:
    from Simulator import SlotRecord

log = logging.getLogger(__name__)

# Field order of every journal line.
JOURNAL_FIELDS = (
    "slot_index",
    "frame_index",
    "timestamp_ms",
    "encoded_size_bits",
    "quality_tier",
    "gop_position",
)


class JournalIOError(OSError):
    """
    Raised when the frame journal cannot be written. Aborts the run.
    """


@dataclass(frozen=True)
class FrameJournalEntry:
    slot_index: int
    frame_index: int
    timestamp_ms: float
    encoded_size_bits: float
    quality_tier: str
    gop_position: int


def frames_for_slot(
    record: "SlotRecord", frames_per_slot: int
) -> list[FrameJournalEntry]:
    """
    Splits one slot's net bit volume into equally sized frames. The GOP
    restarts at the slot boundary since settings are re-applied every slot.
    """
    size = record.net_bitrate_bps / frames_per_slot
    frame_interval = 1000.0 / frames_per_slot
    return [
        FrameJournalEntry(
            slot_index=record.slot_index,
            frame_index=frame_index,
            timestamp_ms=record.slot_index * 1000.0
            + frame_index * frame_interval,
            encoded_size_bits=size,
            quality_tier=record.quality_tier.value,
            gop_position=frame_index % record.gop_size,
        )
        for frame_index in range(frames_per_slot)
    ]


class FrameRecorder:
    """
    Server-side recording engine reduced to a frame journal: one JSON line
    per frame and a footer with the totals once the run is finalized.
    Without a path the entries are kept in memory.
    """

    def __init__(
        self,
        frames_per_slot: int,
        path: Optional[str] = None,
        enabled: bool = True,
    ):
        """
        Args:
            frames_per_slot: Frames emitted for every one-second slot
            path: Journal file, None to keep entries in memory
            enabled: When False nothing is recorded and no file is created
        """
        self.frames_per_slot = frames_per_slot
        self.path = Path(path) if path is not None else None
        self.enabled = enabled
        self.entries: list[FrameJournalEntry] = []
        self.total_frames = 0
        self.total_bits = 0.0
        self.finalized = False
        self._file = None

    def attach(self, event_manager: EventManager) -> None:
        event_manager.subscribe(
            EventType.SLOT_COMPLETED, self._on_slot_completed
        )
        event_manager.subscribe(EventType.RUN_FINISHED, self._on_run_finished)
        event_manager.subscribe(EventType.RUN_ABORTED, self._on_run_aborted)

    def _on_slot_completed(self, event: Event):
        self.record_frames(event.data)

    def _on_run_finished(self, event: Event):
        self.finalize()

    def _on_run_aborted(self, event: Event):
        self.abort()

    @property
    def total_bytes(self) -> float:
        return self.total_bits / 8

    def _write(self, payload: dict) -> None:
        try:
            if self._file is None:
                self._file = open(self.path, "w")
            self._file.write(json.dumps(payload) + "\n")
        except OSError as e:
            raise JournalIOError(
                f"cannot write frame journal {self.path}: {e}"
            ) from e

    def record_frames(self, record: "SlotRecord") -> list[FrameJournalEntry]:
        """
        Appends the frames of one slot to the journal.
        """
        if not self.enabled:
            return []
        if self.finalized:
            raise JournalIOError("frame journal is already finalized")

        entries = frames_for_slot(record, self.frames_per_slot)
        for entry in entries:
            if self.path is None:
                self.entries.append(entry)
            else:
                self._write(asdict(entry))
            self.total_frames += 1
            self.total_bits += entry.encoded_size_bits
        return entries

    def finalize(self) -> None:
        """
        Writes the footer and closes the sink.
        """
        if not self.enabled or self.finalized:
            return
        self.finalized = True
        if self.path is None:
            return

        self._write(
            {
                "footer": True,
                "total_frames": self.total_frames,
                "total_bytes": self.total_bytes,
            }
        )
        try:
            self._file.close()
        except OSError as e:
            raise JournalIOError(
                f"cannot close frame journal {self.path}: {e}"
            ) from e
        log.info(
            f"Recording completed: {self.total_frames} frames, "
            f"{self.total_bytes:.0f} bytes in {self.path}"
        )

    def abort(self) -> None:
        """
        Closes the sink without a footer, so a journal cut short by a failed
        run is told apart from a complete one.
        """
        if self.finalized:
            return
        self.finalized = True
        if self._file is None:
            return
        try:
            self._file.close()
        except OSError as e:
            log.warning(f"Cannot close frame journal {self.path}: {e}")
        log.warning(
            f"Recording aborted after {self.total_frames} frames, "
            f"{self.path} has no footer"
        )


def read_journal(path) -> tuple[list[FrameJournalEntry], dict]:
    """
    Reads a frame journal back into entries and its footer.
    """
    entries = []
    footer = {}
    with open(path) as f:
        for line in f:
            payload = json.loads(line)
            if payload.get("footer"):
                footer = payload
            else:
                entries.append(FrameJournalEntry(**payload))
    return entries, footer
