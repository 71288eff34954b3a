"""Event-log file I/O and organizational splitting.

CSV schema: header ``case,activity,timestamp`` plus optional columns. A
``timestamp`` is either integer epoch milliseconds or an ISO-8601 string
(accepted at ingestion only; logs always store milliseconds). Recognized
optional columns: ``org`` (provisioner id) and ``event_id``; anything else
lands in the event's extras, so save/load round-trips losslessly. The case
column may carry a different label per organization (``iid_column``).

The XES reader covers the subset needed for public logs: trace-level
``concept:name`` as the iid, event-level ``concept:name`` and
``time:timestamp``; remaining event string attributes become extras.
"""

from __future__ import annotations

import csv
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .model import Event, EventLog, log_from_events, merge_all

__all__ = [
    "LogIoError",
    "MissingAttribute",
    "UnparsableTimestamp",
    "MissingOrg",
    "parse_timestamp",
    "format_timestamp",
    "load_csv",
    "save_csv",
    "load_xes",
    "load_log",
    "split_log",
    "ProvisionerRef",
    "load_provisioner_refs",
    "save_provisioner_refs",
]


class LogIoError(Exception):
    pass


class MissingAttribute(LogIoError):
    pass


class UnparsableTimestamp(LogIoError):
    pass


class MissingOrg(LogIoError):
    pass


_RESERVED_COLUMNS = ("activity", "timestamp", "org", "event_id")


def parse_timestamp(value: str) -> int:
    """Epoch milliseconds from an integer string or ISO-8601 timestamp."""
    text = value.strip()
    if not text:
        raise UnparsableTimestamp("empty timestamp")
    try:
        return int(text)
    except ValueError:
        pass
    iso = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError as exc:
        raise UnparsableTimestamp(value) from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def format_timestamp(ms: int) -> str:
    dt = datetime.fromtimestamp(ms / 1000.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"


def load_csv(path, *, iid_column: str = "case", org: Optional[str] = None) -> EventLog:
    path = Path(path)
    default_org = org if org is not None else path.stem
    events: List[Event] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return EventLog(())
        for name in (iid_column, "activity", "timestamp"):
            if name not in reader.fieldnames:
                raise MissingAttribute("column %r not in %s" % (name, path))
        extra_cols = [
            c for c in reader.fieldnames if c not in _RESERVED_COLUMNS and c != iid_column
        ]
        for row_no, row in enumerate(reader):
            iid = row[iid_column]
            event_id = row.get("event_id") or "%s-r%06d" % (default_org, row_no)
            provisioner = row.get("org") or default_org
            extras = tuple(
                sorted((c, row[c]) for c in extra_cols if row.get(c) not in (None, ""))
            )
            events.append(
                Event(
                    event_id=event_id,
                    iid=iid,
                    activity=row["activity"],
                    timestamp=parse_timestamp(row["timestamp"]),
                    provisioner_id=provisioner,
                    extras=extras,
                )
            )
    return log_from_events(events)


def save_csv(log: EventLog, path, *, iid_column: str = "case") -> None:
    extra_keys = sorted({k for ev in log for k, _ in ev.extras})
    header = [iid_column, "activity", "timestamp", "org", "event_id"] + extra_keys
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for ev in log:
            extras = ev.extras_dict()
            writer.writerow(
                [ev.iid, ev.activity, str(ev.timestamp), ev.provisioner_id, ev.event_id]
                + [extras.get(k, "") for k in extra_keys]
            )


def _xes_attrs(elem) -> Dict[str, str]:
    out = {}
    for child in elem:
        tag = child.tag.rsplit("}", 1)[-1]
        if tag in ("string", "date", "int", "float", "boolean", "id"):
            key = child.get("key")
            if key is not None:
                out[key] = child.get("value", "")
    return out


def load_xes(path, *, iid_attribute: str = "concept:name", org: Optional[str] = None) -> EventLog:
    path = Path(path)
    default_org = org if org is not None else path.stem
    tree = ET.parse(str(path))
    root = tree.getroot()
    events: List[Event] = []
    counter = 0
    for trace in root:
        if trace.tag.rsplit("}", 1)[-1] != "trace":
            continue
        trace_attrs = _xes_attrs(trace)
        iid = trace_attrs.get(iid_attribute)
        if iid is None:
            raise MissingAttribute("trace without %r in %s" % (iid_attribute, path))
        for ev_elem in trace:
            if ev_elem.tag.rsplit("}", 1)[-1] != "event":
                continue
            attrs = _xes_attrs(ev_elem)
            if "concept:name" not in attrs:
                raise MissingAttribute("event without concept:name in %s" % path)
            if "time:timestamp" not in attrs:
                raise MissingAttribute("event without time:timestamp in %s" % path)
            extras = tuple(
                sorted(
                    (k, v)
                    for k, v in attrs.items()
                    if k not in ("concept:name", "time:timestamp")
                )
            )
            events.append(
                Event(
                    event_id="%s-x%06d" % (default_org, counter),
                    iid=iid,
                    activity=attrs["concept:name"],
                    timestamp=parse_timestamp(attrs["time:timestamp"]),
                    provisioner_id=attrs.get("org:group", default_org),
                    extras=extras,
                )
            )
            counter += 1
    return log_from_events(events)


def load_log(path, *, fmt: Optional[str] = None, iid_column: str = "case", org: Optional[str] = None) -> EventLog:
    path = Path(path)
    if fmt is None:
        fmt = "xes" if path.suffix.lower() == ".xes" else "csv"
    if fmt == "csv":
        return load_csv(path, iid_column=iid_column, org=org)
    if fmt == "xes":
        return load_xes(path, iid_attribute=iid_column if iid_column != "case" else "concept:name", org=org)
    raise LogIoError("unknown log format %r" % fmt)


def split_log(log: EventLog, org_map: Mapping[str, str]) -> Dict[str, EventLog]:
    """Partition a log by the organization performing each activity.

    Every activity in the log must be mapped. Events are relabeled with the
    mapped org as their provisioner id (ids and everything else preserved),
    so merging the partitions back gives the input exactly whenever the
    input's provisioner ids already agree with the map.
    """
    unmapped = sorted(set(log.activities()) - set(org_map))
    if unmapped:
        raise MissingOrg("activities without an org: %s" % ", ".join(unmapped))
    buckets: Dict[str, List[Event]] = {}
    for ev in log:
        org = org_map[ev.activity]
        moved = (
            ev
            if ev.provisioner_id == org
            else Event(ev.event_id, ev.iid, ev.activity, ev.timestamp, org, ev.extras)
        )
        buckets.setdefault(org, []).append(moved)
    return {org: log_from_events(evs) for org, evs in sorted(buckets.items())}


@dataclass(frozen=True)
class ProvisionerRef:
    """Pointer to one provisioner: who it is, where, and how it names cases."""

    org_id: str
    endpoint: str
    iid_attribute_label: str = "case"


def load_provisioner_refs(path) -> List[ProvisionerRef]:
    with Path(path).open() as fh:
        data = json.load(fh)
    refs = []
    for entry in data:
        for key in ("org_id", "endpoint"):
            if key not in entry:
                raise MissingAttribute("provisioner reference missing %r" % key)
        refs.append(
            ProvisionerRef(
                org_id=entry["org_id"],
                endpoint=entry["endpoint"],
                iid_attribute_label=entry.get("iid_attribute_label", "case"),
            )
        )
    return refs


def save_provisioner_refs(refs: Iterable[ProvisionerRef], path) -> None:
    doc = [
        {
            "org_id": r.org_id,
            "endpoint": r.endpoint,
            "iid_attribute_label": r.iid_attribute_label,
        }
        for r in refs
    ]
    with Path(path).open("w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
