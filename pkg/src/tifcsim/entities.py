"""The simulated cloud: jobs, gateways, compute cores, schedulers, pacers.

Each entity is a state machine driven by kernel events. Per tick, the event
phases give a fixed interaction order: job arrivals land at gateways, pacers
fire, the scheduler decides, the core runs one timeslice, gateways deliver.

Cores execute jobs deterministically: a job's result payload is a pure
function of its input bits, independent of when and how its slices were
interleaved. Only completion *timing* can carry other users' information,
which is what the labels track.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, Optional, Sequence, Tuple, Union

from .kernel import ConfigError, Engine, Entity, Phase, SimError, TraceKind
from .labels import EMPTY_CAPS, INFINITY, CapabilitySet, Frequency, Label
from .monitor import Channel, FlowDecision, Monitor, apply_receive


def result_payload(payload_bits: str) -> str:
    """Deterministic digest standing in for an arbitrary computation.

    Depends on the job's input bits only, never on execution timing.
    """
    return hashlib.sha256(b"result:" + payload_bits.encode("ascii")).hexdigest()[:16]


def check_process_label(label: Label) -> Label:
    """Runnable processes must carry unbounded timing taint for every
    content tag (control flow can encode any content bit into timing)."""
    for user in label.content:
        if label.timing.get(user) != INFINITY:
            raise SimError(
                f"process label {label} lacks unbounded timing tag for {user!r}"
            )
    return label


def _check_bits(bits: str) -> str:
    if bits.strip("01") != "":
        raise ConfigError(f"payload must be a bit string, got {bits!r}")
    return bits


@dataclass
class Job:
    """One compute job: an owner, a slice budget, and secret payload bits."""

    job_id: str
    owner: str
    work: int
    payload_bits: str
    label: Label
    demand_visible: bool = True
    remaining: int = field(init=False)
    completed_at: Optional[int] = None

    def __post_init__(self) -> None:
        if self.work < 1:
            raise ConfigError(f"job {self.job_id}: work must be >= 1")
        _check_bits(self.payload_bits)
        check_process_label(self.label)
        self.remaining = self.work


@dataclass(frozen=True)
class JobRequest:
    owner: str
    work: int
    payload_bits: str
    job_id: str
    demand_visible: bool = True


@dataclass(frozen=True)
class Message:
    payload: str
    label: Label
    channel: Channel
    msg_id: str
    owner: str
    sent_at: int


def max_label(users: Iterable[str]) -> Label:
    """All users' content and unbounded timing taint."""
    users = list(users)
    return Label(users, {u: INFINITY for u in users})


class Gateway(Entity):
    """Per-customer boundary node.

    Stamps incoming requests with the owner's full taint and decides, with
    its declassification capabilities, whether results may leave toward the
    customer (who accepts only their own taint).
    """

    phase = Phase.GATEWAY

    def __init__(
        self,
        owner: str,
        users: Sequence[str],
        monitor: Monitor,
        caps: CapabilitySet = EMPTY_CAPS,
    ):
        super().__init__(f"gw_{owner}")
        self.owner = owner
        self.monitor = monitor
        self.caps = caps
        self.stamp = Label((owner,), {owner: INFINITY})
        self.accept_label = self.stamp
        # Results come back with any user's timing taint attached.
        self.clearance = Label((owner,), {u: INFINITY for u in users})
        self.core: Optional["ComputeCore"] = None

    def handle(self, sim: Engine, payload: tuple) -> None:
        if payload[0] == "arrive":
            self.ingress(sim, payload[1])
        elif payload[0] == "result":
            self.egress(sim, payload[1])

    def ingress(self, sim: Engine, request: JobRequest) -> Job:
        if request.owner != self.owner:
            raise ConfigError(
                f"{self.id} cannot accept a request from {request.owner!r}"
            )
        job = Job(
            job_id=request.job_id,
            owner=request.owner,
            work=request.work,
            payload_bits=request.payload_bits,
            label=self.stamp,
            demand_visible=request.demand_visible,
        )
        sim.emit(TraceKind.JOB_ARRIVE, self.id, label=job.label,
                 job=job.job_id, owner=job.owner, work=job.work)
        assert self.core is not None, "gateway not wired to a core"
        msg_id = f"job_{job.job_id}"
        sim.emit(TraceKind.MSG_SEND, self.id, label=job.label,
                 msg=msg_id, to=self.core.id)
        decision = self.monitor.decide(
            sim, at=self.core.id, src=self.id, dst=self.core.id,
            src_label=job.label, caps=EMPTY_CAPS,
            dst_label=self.core.clearance, msg=msg_id,
        )
        if decision.allowed:
            self.core.receive_job(sim, job, msg_id)
        return job

    def egress(self, sim: Engine, msg: Message) -> FlowDecision:
        decision = self.monitor.decide(
            sim, at=self.id, src=self.id, dst=f"user_{self.owner}",
            src_label=msg.label, caps=self.caps,
            dst_label=self.accept_label, msg=msg.msg_id,
        )
        if decision.allowed:
            sim.emit(TraceKind.MSG_RECV, self.id, label=msg.label,
                     msg=msg.msg_id, to=self.owner, payload=msg.payload,
                     sent_at=msg.sent_at)
        return decision


class ComputeCore(Entity):
    """A core with isolated per-customer job queues ("slots").

    Runs at most one job slice per tick: its own fixed user when private,
    otherwise whichever user the scheduler's control message named for the
    current tick. Control messages are timing-only: they taint every live
    job's timing, never its content.
    """

    phase = Phase.CORE

    def __init__(
        self,
        entity_id: str,
        users: Sequence[str],
        monitor: Monitor,
        fixed_user: Optional[str] = None,
    ):
        super().__init__(entity_id)
        self.users = tuple(users)
        self.monitor = monitor
        self.fixed_user = fixed_user
        self.slots: Dict[str, Deque[Job]] = {u: deque() for u in self.users}
        self.clearance = max_label(self.users)
        self.demand_label = max_label(self.users)
        self.routes: Dict[str, Union["Pacer", Gateway]] = {}
        self._command: Optional[Tuple[int, str]] = None
        self._last_slice_tick = -1

    def receive_job(self, sim: Engine, job: Job, msg_id: str) -> None:
        if job.owner not in self.slots:
            raise ConfigError(f"{self.id} has no slot for {job.owner!r}")
        sim.emit(TraceKind.MSG_RECV, self.id, label=job.label,
                 msg=msg_id, owner=job.owner)
        self.slots[job.owner].append(job)

    def demand_snapshot(self) -> Dict[str, bool]:
        """Per-user boolean: any visible queued or running work."""
        return {
            u: any(j.demand_visible for j in q) for u, q in self.slots.items()
        }

    def receive_control(self, sim: Engine, user: str, ctrl_label: Label,
                        msg_id: str) -> None:
        sim.emit(TraceKind.MSG_RECV, self.id, label=ctrl_label,
                 msg=msg_id, user=user)
        self._taint_jobs(sim, ctrl_label)
        self._command = (sim.now, user)
        sim.schedule(sim.now, self, ("slice",))

    def _taint_jobs(self, sim: Engine, ctrl_label: Label) -> None:
        for queue in self.slots.values():
            for job in queue:
                tainted = apply_receive(job.label, ctrl_label, Channel.TIMING_ONLY)
                if tainted != job.label:
                    job.label = check_process_label(tainted)
                    sim.emit(TraceKind.LABEL_CHANGE, self.id, label=job.label,
                             job=job.job_id, owner=job.owner)

    def handle(self, sim: Engine, payload: tuple) -> None:
        if payload[0] != "slice":
            return
        if self.fixed_user is not None:
            self.run_slice(sim, self.fixed_user)
            sim.schedule(sim.now + 1, self, ("slice",))
        elif self._command is not None and self._command[0] == sim.now:
            self.run_slice(sim, self._command[1])

    def run_slice(self, sim: Engine, user: str) -> None:
        if user not in self.slots:
            raise ConfigError(f"{self.id} has no slot for {user!r}")
        if self._last_slice_tick == sim.now:
            return
        self._last_slice_tick = sim.now
        queue = self.slots[user]
        if not queue:
            return
        job = queue[0]
        sim.emit(TraceKind.SLICE_START, self.id, label=job.label,
                 job=job.job_id, owner=user, remaining=job.remaining)
        job.remaining -= 1
        sim.emit(TraceKind.SLICE_END, self.id, label=job.label,
                 job=job.job_id, owner=user, remaining=job.remaining)
        if job.remaining == 0:
            queue.popleft()
            job.completed_at = sim.now
            digest = result_payload(job.payload_bits)
            sim.emit(TraceKind.JOB_COMPLETE, self.id, label=job.label,
                     job=job.job_id, owner=user, result=digest)
            msg = Message(
                payload=digest,
                label=job.label,
                channel=Channel.CONTENT,
                msg_id=f"res_{job.job_id}",
                owner=user,
                sent_at=sim.now,
            )
            self._send_result(sim, msg)

    def _send_result(self, sim: Engine, msg: Message) -> None:
        target = self.routes[msg.owner]
        sim.emit(TraceKind.MSG_SEND, self.id, label=msg.label,
                 msg=msg.msg_id, to=target.id)
        if isinstance(target, Pacer):
            decision = self.monitor.decide(
                sim, at=target.id, src=self.id, dst=target.id,
                src_label=msg.label, caps=EMPTY_CAPS,
                dst_label=target.clearance, msg=msg.msg_id,
            )
            if decision.allowed:
                target.enqueue(sim, msg)
        else:
            # Gateway route: the egress decision is the guard.
            sim.schedule(sim.now, target, ("result", msg))


class Pacer(Entity):
    """FIFO queue whose output releases at most one message per clock tick.

    The clock fires at ``first_tick`` and every period after; a release
    downgrades the message's timing tags to the pacer's frequency. Between
    ticks nothing leaves, so the queue's observable emptiness carries at
    most one bit per period.
    """

    phase = Phase.PACER

    def __init__(
        self,
        owner: str,
        freq: Frequency,
        users: Sequence[str],
        monitor: Monitor,
        downstream: Gateway,
        first_tick: Optional[int] = None,
    ):
        super().__init__(f"pacer_{owner}")
        if freq.is_infinite or freq.numerator != 1:
            raise ConfigError(
                f"pacer frequency must be 1/k for a whole number of ticks, got {freq}"
            )
        self.owner = owner
        self.freq = freq
        self.period = freq.denominator
        self.first_tick = self.period if first_tick is None else first_tick
        if self.first_tick < 0:
            raise ConfigError("pacer first tick must be >= 0")
        self.monitor = monitor
        self.downstream = downstream
        self.clearance = Label((owner,), {u: INFINITY for u in users})
        self.queue: Deque[Message] = deque()

    def enqueue(self, sim: Engine, msg: Message) -> None:
        sim.emit(TraceKind.MSG_RECV, self.id, label=msg.label,
                 msg=msg.msg_id, queued=len(self.queue) + 1)
        self.queue.append(msg)

    def handle(self, sim: Engine, payload: tuple) -> None:
        if payload[0] != "tick":
            return
        self.tick(sim)
        sim.schedule(sim.now + self.period, self, ("tick",))

    def tick(self, sim: Engine) -> Optional[Message]:
        """Release the head message, if any, with downgraded timing tags."""
        if not self.queue:
            return None
        msg = self.queue.popleft()
        released = Message(
            payload=msg.payload,
            label=msg.label.pace_down(self.freq),
            channel=msg.channel,
            msg_id=msg.msg_id,
            owner=msg.owner,
            sent_at=msg.sent_at,
        )
        sim.emit(TraceKind.PACER_RELEASE, self.id, label=released.label,
                 msg=released.msg_id, queued=len(self.queue))
        sim.schedule(sim.now, self.downstream, ("result", released))
        return released


def offer_demand(sim: Engine, monitor: Monitor, core: ComputeCore,
                 scheduler: "Scheduler") -> FlowDecision:
    """Attempt the core -> scheduler demand flow through the monitor.

    Demand derives from every customer's job state, so the message carries
    all users' taint; an empty-labeled scheduler must be denied it.
    """
    msg_id = f"demand@{sim.now}"
    sim.emit(TraceKind.MSG_SEND, core.id, label=core.demand_label,
             msg=msg_id, to=scheduler.id)
    decision = monitor.decide(
        sim, at=scheduler.id, src=core.id, dst=scheduler.id,
        src_label=core.demand_label, caps=EMPTY_CAPS,
        dst_label=scheduler.clearance, msg=msg_id,
    )
    if decision.allowed:
        sim.emit(TraceKind.MSG_RECV, scheduler.id, label=core.demand_label,
                 msg=msg_id)
    return decision


class Scheduler(Entity):
    """Base: ticks every tick, names a user, commands the core."""

    phase = Phase.SCHEDULER

    def __init__(self, entity_id: str, core: ComputeCore, monitor: Monitor,
                 label: Label):
        super().__init__(entity_id)
        self.core = core
        self.monitor = monitor
        self.label = label
        self.clearance = label

    def decide(self, sim: Engine) -> Optional[str]:
        raise NotImplementedError

    def handle(self, sim: Engine, payload: tuple) -> None:
        if payload[0] != "tick":
            return
        user = self.decide(sim)
        if user is not None:
            self.send_control(sim, user)
        sim.schedule(sim.now + 1, self, ("tick",))

    def send_control(self, sim: Engine, user: str) -> None:
        msg_id = f"ctl@{sim.now}"
        sim.emit(TraceKind.MSG_SEND, self.id, label=self.label,
                 msg=msg_id, user=user, to=self.core.id)
        decision = self.monitor.decide(
            sim, at=self.core.id, src=self.id, dst=self.core.id,
            src_label=self.label, caps=EMPTY_CAPS,
            dst_label=self.core.clearance, msg=msg_id,
        )
        if decision.allowed:
            self.core.receive_control(sim, user, self.label, msg_id)


class ReservationScheduler(Scheduler):
    """Fixed rotation, blind to demand; empty label by construction.

    The rotation grants slices whether or not the user has work, so the
    slice-owner sequence is a pure function of time.
    """

    def __init__(self, core: ComputeCore, monitor: Monitor,
                 rotation: Sequence[str]):
        super().__init__("sched", core, monitor, Label())
        if not rotation:
            raise ConfigError("reservation rotation must be non-empty")
        self.rotation = tuple(rotation)

    def decide(self, sim: Engine) -> Optional[str]:
        return self.rotation[sim.now % len(self.rotation)]


class DemandScheduler(Scheduler):
    """Work-conserving: runs the first user in its fixed order with queued
    work. Carries every user's content and timing taint, which is what
    permits it to see demand at all."""

    def __init__(self, core: ComputeCore, monitor: Monitor,
                 order: Sequence[str]):
        super().__init__("sched", core, monitor, max_label(core.users))
        if not order:
            raise ConfigError("scheduler order must be non-empty")
        self.order = tuple(order)

    def decide(self, sim: Engine) -> Optional[str]:
        if not offer_demand(sim, self.monitor, self.core, self).allowed:
            return None
        demand = self.core.demand_snapshot()
        for user in self.order:
            if demand.get(user):
                return user
        return None
