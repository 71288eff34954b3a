"""Case-complete segmentation of a partition under a byte budget.

Greedy first-fit over cases in ascending lexicographic iid order. A case is
never split across segments; when adding the next case would push the open
segment past the budget, the open segment is sealed and a new one started.
Sizes are measured on the canonical wire encoding (see ``wire``), so
``seg_size`` binds to exactly the bytes a segment occupies on the wire
before encryption.

A single case bigger than the budget still ships, alone, in an over-budget
segment (a warning is emitted and the iid reported in the plan); with
``strict=True`` that case raises ``OversizedCase`` instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, List, Tuple

from .model import EventLog, extract_case, iid_set
from .wire import EMPTY_LOG_SIZE, encode_log

__all__ = [
    "SegmenterError",
    "InvalidSegSize",
    "OversizedCase",
    "SegmentPlan",
    "size_of",
    "segment_event_log",
]


class SegmenterError(Exception):
    pass


class InvalidSegSize(SegmenterError):
    pass


class OversizedCase(SegmenterError):
    pass


def size_of(log: EventLog) -> int:
    """Byte size of the log's canonical wire encoding."""
    return len(encode_log(log))


@dataclass(frozen=True)
class SegmentPlan:
    """Ordered segments plus the budget they were planned against."""

    segments: Tuple[EventLog, ...]
    seg_size: int
    oversized_iids: Tuple[str, ...] = ()

    def total_events(self) -> int:
        return sum(len(seg) for seg in self.segments)


def segment_event_log(
    partition: EventLog,
    iids: Iterable[str],
    seg_size: int,
    *,
    strict: bool = False,
) -> SegmentPlan:
    """Plan case-complete segments for the requested iids.

    ``iids`` must all occur in the partition. Returned segments are nonempty,
    each requested case lands in exactly one segment, case order inside a
    segment is canonical, and any segment holding two or more cases fits the
    budget.
    """
    if seg_size <= 0:
        raise InvalidSegSize("seg_size must be positive, got %d" % seg_size)
    requested = sorted(set(iids))
    known = iid_set(partition)
    missing = [iid for iid in requested if iid not in known]
    if missing:
        raise SegmenterError("iids not in partition: %s" % ", ".join(missing))

    segments: List[EventLog] = []
    oversized: List[str] = []
    open_events: List = []
    open_size = EMPTY_LOG_SIZE

    def seal() -> None:
        nonlocal open_events, open_size
        if open_events:
            segments.append(EventLog(tuple(open_events)))
            open_events = []
            open_size = EMPTY_LOG_SIZE

    for iid in requested:
        case = extract_case(partition, iid)
        case_size = size_of(case)
        if case_size > seg_size:
            if strict:
                raise OversizedCase(
                    "case %s needs %d bytes, budget is %d" % (iid, case_size, seg_size)
                )
            warnings.warn(
                "case %s (%d bytes) exceeds seg_size %d; shipping alone over budget"
                % (iid, case_size, seg_size),
                stacklevel=2,
            )
            oversized.append(iid)
        if open_size + case_size > seg_size:
            seal()
        # Merging a case into the open segment costs its encoding minus the
        # shared envelope constant, so the running size stays exact.
        open_events.extend(case.events)
        open_events.sort(key=lambda ev: (ev.timestamp, ev.provisioner_id, ev.event_id))
        open_size += case_size - EMPTY_LOG_SIZE
    seal()
    return SegmentPlan(
        segments=tuple(segments),
        seg_size=seg_size,
        oversized_iids=tuple(oversized),
    )
