"""Reference monitor: flow checks, receive-side tainting, audit log.

A send is allowed iff the source label, after automatically applying every
held capability, flows to the destination label. Receiving tainted data
raises the receiver's label: content-channel messages join in their full
label, timing-only messages join in only the lifted (pure-timing) form.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

from .kernel import Engine, MonitorFault, TraceKind, TraceRecord
from .labels import CapabilitySet, Label


class Channel(Enum):
    CONTENT = "content"
    TIMING_ONLY = "timing_only"


class MonitorMode(Enum):
    RECORD_AND_DROP = "record"
    FATAL = "fatal"


@dataclass(frozen=True)
class FlowDecision:
    allowed: bool
    effective: Label
    residual: Tuple[str, ...]

    def __post_init__(self) -> None:
        assert not (self.allowed and self.residual)


def blocking_tags(effective: Label, dst: Label) -> Tuple[str, ...]:
    """Canonical names of the tags that keep ``effective`` out of ``dst``."""
    blocked = [u for u in effective.content if u not in dst.content]
    for user, freq in effective.timing.items():
        bound = dst.timing.get(user)
        if bound is None or bound < freq:
            blocked.append(f"{user}:{freq}")
    return tuple(sorted(blocked))


def check_send(src_label: Label, caps: CapabilitySet, dst_label: Label) -> FlowDecision:
    """Decide one flow; total function, never raises."""
    effective = src_label.declassify(caps)
    if effective.flows_to(dst_label):
        return FlowDecision(True, effective, ())
    return FlowDecision(False, effective, blocking_tags(effective, dst_label))


def apply_receive(receiver: Label, msg_label: Label, channel: Channel) -> Label:
    """Receiver's label after accepting a message on the given channel."""
    if channel is Channel.TIMING_ONLY:
        return receiver.join(msg_label.lift_to_timing())
    return receiver.join(msg_label)


class Monitor:
    """Stateful wrapper that records every decision into the trace."""

    def __init__(self, mode: MonitorMode = MonitorMode.RECORD_AND_DROP):
        self.mode = mode
        self._decisions: List[TraceRecord] = []

    def decide(
        self,
        sim: Engine,
        at: str,
        src: str,
        dst: str,
        src_label: Label,
        caps: CapabilitySet,
        dst_label: Label,
        **detail: str,
    ) -> FlowDecision:
        """Check src->dst and emit a MonitorAllow/MonitorDeny record at
        ``at`` (the enforcing entity). Fatal mode raises on deny."""
        decision = check_send(src_label, caps, dst_label)
        kind = TraceKind.MONITOR_ALLOW if decision.allowed else TraceKind.MONITOR_DENY
        record = sim.emit(
            kind,
            at,
            label=src_label,
            src=src,
            dst=dst,
            dst_label=str(dst_label),
            effective=str(decision.effective),
            residual=",".join(decision.residual),
            **detail,
        )
        self._decisions.append(record)
        if not decision.allowed and self.mode is MonitorMode.FATAL:
            raise MonitorFault(f"flow denied at {at}: {record.detail['residual']}", record)
        return decision

    def audit_log(self) -> Tuple[TraceRecord, ...]:
        """Every decision record, in execution order."""
        return tuple(self._decisions)

    def denials(self) -> Tuple[TraceRecord, ...]:
        return tuple(r for r in self._decisions if r.kind is TraceKind.MONITOR_DENY)
