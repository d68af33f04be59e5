"""Domain types for observational traces plus JSON-lines I/O.

A trace is one subject's time-ordered sequence of events over ``[0, tau]``,
where every event carries an outcome measurement, an action, or both.  The
on-disk format is UTF-8 JSON lines, one trace per line::

    {"id": str, "tau": number, "events": [{"t": number, "y": number?, "a": str?}]}

Missing ``y``/``a`` keys mean "absent".  All types are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import DomainError, ParseError, TraceValidationError

__all__ = [
    "Event",
    "Trace",
    "History",
    "ActionPlan",
    "Dataset",
    "parse_traces",
    "write_traces",
    "truncate_history",
]


@dataclass(frozen=True)
class Event:
    """One timestamped mark: outcome value and/or action type.

    ``z_y``/``z_a`` (presence indicators) are derived from ``y``/``a`` being
    non-null; an event with neither is invalid.
    """

    t: float
    y: float | None = None
    a: str | None = None

    def __post_init__(self):
        if self.y is None and self.a is None:
            raise TraceValidationError(
                f"event at t={self.t} carries neither outcome nor action"
            )
        if not math.isfinite(self.t):
            raise TraceValidationError(f"event time {self.t} is not finite")
        if self.y is not None and not math.isfinite(self.y):
            raise TraceValidationError(f"outcome {self.y} at t={self.t} is not finite")

    @property
    def z_y(self) -> bool:
        return self.y is not None

    @property
    def z_a(self) -> bool:
        return self.a is not None


def _check_events(events, tau, trace_id):
    prev = -math.inf
    for ev in events:
        if not 0.0 <= ev.t <= tau:
            raise TraceValidationError(
                f"event time {ev.t} outside [0, {tau}]", trace_id=trace_id
            )
        if ev.t <= prev:
            raise TraceValidationError(
                f"events not strictly sorted at t={ev.t}", trace_id=trace_id
            )
        prev = ev.t


@dataclass(frozen=True)
class Trace:
    """One subject's events, strictly sorted by time, within ``[0, tau]``."""

    id: str
    tau: float
    events: tuple[Event, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if self.tau <= 0 or not math.isfinite(self.tau):
            raise TraceValidationError(
                f"horizon tau={self.tau} must be positive and finite", trace_id=self.id
            )
        _check_events(self.events, self.tau, self.id)

    def outcome_events(self) -> tuple[Event, ...]:
        return tuple(ev for ev in self.events if ev.z_y)

    def action_events(self) -> tuple[Event, ...]:
        return tuple(ev for ev in self.events if ev.z_a)


@dataclass(frozen=True)
class History:
    """All events of a trace strictly before ``cut_time`` (left limit)."""

    trace_id: str
    cut_time: float
    events: tuple[Event, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        for ev in self.events:
            if ev.t >= self.cut_time:
                raise TraceValidationError(
                    f"history event at t={ev.t} not before cut {self.cut_time}",
                    trace_id=self.trace_id,
                )

    def outcomes(self) -> tuple[list[float], list[float]]:
        """(times, values) of the outcome measurements in this history."""
        pts = [(ev.t, ev.y) for ev in self.events if ev.z_y]
        return [t for t, _ in pts], [y for _, y in pts]

    def actions(self) -> list[tuple[str, float]]:
        """(action_type, time) pairs observed in this history."""
        return [(ev.a, ev.t) for ev in self.events if ev.z_a]


@dataclass(frozen=True)
class ActionPlan:
    """Proposed future actions as (action_type, time) pairs.

    Times must be strictly increasing; when the plan is attached to a query
    at time ``t``, every action time must exceed ``t`` (checked at query
    time, not here).  The empty plan is the "do nothing" counterfactual.
    """

    actions: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "actions", tuple((str(a), float(t)) for a, t in self.actions)
        )
        prev = -math.inf
        for a, t in self.actions:
            if t <= prev:
                raise DomainError(f"plan times not strictly increasing at t={t}")
            prev = t


@dataclass(frozen=True)
class Dataset:
    """A collection of traces plus the action-type vocabulary.

    The vocabulary always covers every action type appearing in the traces;
    it may be a strict superset (types known to the model but unused here).
    """

    traces: tuple[Trace, ...]
    action_vocabulary: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        seen = {ev.a for tr in self.traces for ev in tr.events if ev.z_a}
        object.__setattr__(
            self, "action_vocabulary", frozenset(self.action_vocabulary) | seen
        )

    def __len__(self) -> int:
        return len(self.traces)


def truncate_history(trace: Trace, t: float) -> History:
    """Events of ``trace`` strictly before ``t``, as a :class:`History`.

    The cut is a left limit: an event at exactly ``t`` is excluded.
    Idempotent in the sense that re-truncating at the same ``t`` changes
    nothing.
    """
    if not 0.0 <= t <= trace.tau:
        raise DomainError(f"cut time {t} outside [0, {trace.tau}]")
    return History(
        trace_id=trace.id,
        cut_time=t,
        events=tuple(ev for ev in trace.events if ev.t < t),
    )


def _event_from_record(rec, line, trace_id):
    if not isinstance(rec, dict):
        raise ParseError(f"event record must be an object, got {type(rec).__name__}", line)
    if "t" not in rec:
        raise ParseError("event record missing required key 't'", line)
    y = rec.get("y")
    a = rec.get("a")
    try:
        return Event(t=float(rec["t"]), y=None if y is None else float(y),
                     a=None if a is None else str(a))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, TraceValidationError):
            raise
        raise ParseError(f"bad event field types: {exc}", line) from exc


def parse_traces(path) -> Dataset:
    """Read and validate a JSON-lines trace file.

    Raises :class:`ParseError` (with the line number) for malformed records
    and :class:`TraceValidationError` (naming the trace) for invariant
    violations.
    """
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line_no) from exc
            if not isinstance(rec, dict):
                raise ParseError("trace record must be an object", line_no)
            for key in ("id", "tau", "events"):
                if key not in rec:
                    raise ParseError(f"trace record missing key {key!r}", line_no)
            events = [
                _event_from_record(e, line_no, rec["id"]) for e in rec["events"]
            ]
            traces.append(Trace(id=str(rec["id"]), tau=float(rec["tau"]),
                                events=tuple(events)))
    return Dataset(traces=tuple(traces))


def _event_to_record(ev: Event) -> dict:
    rec = {"t": ev.t}
    if ev.z_y:
        rec["y"] = ev.y
    if ev.z_a:
        rec["a"] = ev.a
    return rec


def write_traces(dataset: Dataset, path) -> None:
    """Write a dataset in the JSON-lines format; inverse of :func:`parse_traces`."""
    with open(path, "w", encoding="utf-8") as fh:
        for tr in dataset.traces:
            rec = {
                "id": tr.id,
                "tau": tr.tau,
                "events": [_event_to_record(ev) for ev in tr.events],
            }
            fh.write(json.dumps(rec) + "\n")
