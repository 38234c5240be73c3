"""Builders and assertions for the three multi-tenant labeling scenarios.

* dedicated   - private per-customer cores; isolation by partitioning.
* reservation - one shared core under a demand-blind fixed rotation with an
                empty-labeled scheduler.
* statmux     - one shared core under a demand-driven scheduler carrying all
                users' taint, with per-customer pacers and cross-gateway
                timing declassifiers bounding the resulting leak.

``run_paired`` runs the same scenario with a short and a long second-user
job and diffs what the first user can observe at their gateway.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .entities import (
    ComputeCore,
    DemandScheduler,
    Gateway,
    JobRequest,
    Pacer,
    ReservationScheduler,
    Scheduler,
)
from .kernel import ConfigError, Engine, Phase, TraceKind, TraceRecord
from .labels import INFINITY, Capability, CapabilitySet, Frequency, Label
from .monitor import Monitor, MonitorMode


@dataclass(frozen=True)
class JobSpec:
    owner: str
    work: int
    payload: str = ""
    arrival: int = 0
    demand_visible: bool = True


@dataclass(frozen=True)
class SchedulerSpec:
    kind: str  # "reservation" | "demand"
    users: Tuple[str, ...]  # rotation or priority order


@dataclass(frozen=True)
class PacerSpec:
    freq: Frequency
    first_tick: Optional[int] = None


@dataclass(frozen=True)
class ScenarioConfig:
    users: Tuple[str, ...] = ("A", "B")
    cores: str = "shared"  # "shared" | "private"
    scheduler: Optional[SchedulerSpec] = None
    pacer: Optional[PacerSpec] = None
    grants: Mapping[str, Tuple[Capability, ...]] = field(default_factory=dict)
    jobs: Tuple[JobSpec, ...] = ()
    horizon: int = 200
    seed: int = 0
    monitor_mode: MonitorMode = MonitorMode.RECORD_AND_DROP

    def validate(self) -> "ScenarioConfig":
        if not self.users or len(set(self.users)) != len(self.users):
            raise ConfigError("users must be non-empty and unique")
        if self.cores not in ("shared", "private"):
            raise ConfigError(f"cores must be 'shared' or 'private', got {self.cores!r}")
        if self.cores == "shared" and self.scheduler is None:
            raise ConfigError("a shared core needs a scheduler")
        if self.cores == "private" and self.scheduler is not None:
            raise ConfigError("private cores take no scheduler")
        if self.scheduler is not None:
            if self.scheduler.kind not in ("reservation", "demand"):
                raise ConfigError(f"unknown scheduler kind {self.scheduler.kind!r}")
            if not self.scheduler.users or not set(self.scheduler.users) <= set(self.users):
                raise ConfigError("scheduler users must be a non-empty subset of users")
        if self.pacer is not None:
            f = self.pacer.freq
            if f.is_infinite or f.numerator != 1:
                raise ConfigError(f"pacer frequency must be 1/k, got {f}")
        for u, caps in self.grants.items():
            if u not in self.users:
                raise ConfigError(f"grant for unknown user {u!r}")
            for cap in caps:
                if cap.user not in self.users:
                    raise ConfigError(f"capability over unknown user {cap.user!r}")
        for spec in self.jobs:
            if spec.owner not in self.users:
                raise ConfigError(f"job owner {spec.owner!r} not in users")
            if spec.work < 1:
                raise ConfigError("job work must be >= 1")
            if not (0 <= spec.arrival < self.horizon):
                raise ConfigError("job arrival must lie within the horizon")
            if spec.payload.strip("01"):
                raise ConfigError("job payload must be a bit string")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        return self

    def classify(self) -> str:
        """Name the topology this config realizes."""
        if self.cores == "private" and self.pacer is None:
            return "dedicated"
        if self.cores == "shared" and self.scheduler is not None:
            if self.scheduler.kind == "reservation" and self.pacer is None:
                return "reservation"
            if self.scheduler.kind == "demand" and self.pacer is not None:
                return "statmux"
        return "custom"

    # -- serialization ------------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "users": list(self.users),
            "cores": self.cores,
            "scheduler": (
                None
                if self.scheduler is None
                else {"kind": self.scheduler.kind, "users": list(self.scheduler.users)}
            ),
            "pacer": (
                None
                if self.pacer is None
                else {"f": str(self.pacer.freq), "first_tick": self.pacer.first_tick}
            ),
            "grants": {
                u: [str(c) for c in caps] for u, caps in sorted(self.grants.items())
            },
            "jobs": [
                {
                    "owner": j.owner,
                    "work": j.work,
                    "payload": j.payload,
                    "arrival": j.arrival,
                    "demand_visible": j.demand_visible,
                }
                for j in self.jobs
            ],
            "horizon": self.horizon,
            "seed": self.seed,
            "monitor_mode": self.monitor_mode.value,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, indent=2)

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "ScenarioConfig":
        try:
            scheduler = None
            if obj.get("scheduler"):
                scheduler = SchedulerSpec(
                    kind=obj["scheduler"]["kind"],
                    users=tuple(obj["scheduler"]["users"]),
                )
            pacer = None
            if obj.get("pacer"):
                pacer = PacerSpec(
                    freq=Frequency.parse(obj["pacer"]["f"]),
                    first_tick=obj["pacer"].get("first_tick"),
                )
            grants = {
                u: tuple(Capability.parse(c) for c in caps)
                for u, caps in obj.get("grants", {}).items()
            }
            jobs = tuple(
                JobSpec(
                    owner=j["owner"],
                    work=j["work"],
                    payload=j.get("payload", ""),
                    arrival=j.get("arrival", 0),
                    demand_visible=j.get("demand_visible", True),
                )
                for j in obj.get("jobs", ())
            )
            cfg = cls(
                users=tuple(obj["users"]),
                cores=obj.get("cores", "shared"),
                scheduler=scheduler,
                pacer=pacer,
                grants=grants,
                jobs=jobs,
                horizon=obj.get("horizon", 200),
                seed=obj.get("seed", 0),
                monitor_mode=MonitorMode(obj.get("monitor_mode", "record")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad scenario config: {exc}") from exc
        return cfg.validate()


DEFAULT_PACER_FREQ = Frequency(1, 5)
DEFAULT_JOBS = (JobSpec("A", 4, "1011"), JobSpec("B", 2, "0110"))


def build_scenario(
    kind: str,
    users: Sequence[str] = ("A", "B"),
    freq: Optional[Frequency] = None,
    jobs: Optional[Sequence[JobSpec]] = None,
    horizon: int = 200,
    seed: int = 0,
    monitor_mode: MonitorMode = MonitorMode.RECORD_AND_DROP,
    pacer_present: bool = True,
) -> ScenarioConfig:
    """Construct one of the three canonical topologies.

    ``statmux`` requires a pacer frequency; ``pacer_present=False`` builds
    the ablated variant (demand scheduler, rate-f grants, but no pacer on
    the result path) used to show the monitor catching the unpaced flow.
    """
    users = tuple(users)
    job_list = tuple(jobs) if jobs is not None else tuple(
        j for j in DEFAULT_JOBS if j.owner in users
    )
    common = dict(users=users, jobs=job_list, horizon=horizon, seed=seed,
                  monitor_mode=monitor_mode)
    if kind == "dedicated":
        return ScenarioConfig(cores="private", **common).validate()
    if kind == "reservation":
        return ScenarioConfig(
            cores="shared",
            scheduler=SchedulerSpec("reservation", users),
            **common,
        ).validate()
    if kind == "statmux":
        if freq is None:
            raise ConfigError("statmux requires a pacer frequency")
        grants = {
            u: tuple(Capability(other, freq) for other in users if other != u)
            for u in users
        }
        return ScenarioConfig(
            cores="shared",
            scheduler=SchedulerSpec("demand", users),
            pacer=PacerSpec(freq) if pacer_present else None,
            grants=grants,
            **common,
        ).validate()
    raise ConfigError(f"unknown scenario kind {kind!r}")


@dataclass
class ScenarioRun:
    config: ScenarioConfig
    trace: List[TraceRecord]
    monitor: Monitor
    engine: Engine


def wire(cfg: ScenarioConfig, sink=None) -> Tuple[Engine, Monitor, Dict[str, object]]:
    """Instantiate entities for a validated config and schedule the initial
    events (arrivals, scheduler/core ticks, pacer clock)."""
    cfg.validate()
    engine = Engine(sink=sink)
    monitor = Monitor(cfg.monitor_mode)
    parts: Dict[str, object] = {}

    gateways = {
        u: engine.add(
            Gateway(u, cfg.users, monitor, CapabilitySet(cfg.grants.get(u, ())))
        )
        for u in cfg.users
    }
    parts.update({gw.id: gw for gw in gateways.values()})

    cores: Dict[str, ComputeCore] = {}
    if cfg.cores == "shared":
        core = engine.add(ComputeCore("core", cfg.users, monitor))
        for u in cfg.users:
            cores[u] = core
        parts[core.id] = core
    else:
        for u in cfg.users:
            core = engine.add(ComputeCore(f"core_{u}", (u,), monitor, fixed_user=u))
            cores[u] = core
            parts[core.id] = core
            engine.schedule(0, core, ("slice",))

    for u in cfg.users:
        gateways[u].core = cores[u]

    if cfg.pacer is not None:
        for u in cfg.users:
            pacer = engine.add(
                Pacer(u, cfg.pacer.freq, cfg.users, monitor, gateways[u],
                      first_tick=cfg.pacer.first_tick)
            )
            cores[u].routes[u] = pacer
            parts[pacer.id] = pacer
            engine.schedule(pacer.first_tick, pacer, ("tick",))
    else:
        for u in cfg.users:
            cores[u].routes[u] = gateways[u]

    if cfg.scheduler is not None:
        shared = cores[cfg.users[0]]
        if cfg.scheduler.kind == "reservation":
            sched: Scheduler = ReservationScheduler(shared, monitor, cfg.scheduler.users)
        else:
            sched = DemandScheduler(shared, monitor, cfg.scheduler.users)
        engine.add(sched)
        parts[sched.id] = sched
        engine.schedule(0, sched, ("tick",))

    counters = {u: 0 for u in cfg.users}
    for spec in cfg.jobs:
        job_id = f"{spec.owner}{counters[spec.owner]}"
        counters[spec.owner] += 1
        request = JobRequest(
            owner=spec.owner,
            work=spec.work,
            payload_bits=spec.payload,
            job_id=job_id,
            demand_visible=spec.demand_visible,
        )
        engine.schedule(spec.arrival, gateways[spec.owner], ("arrive", request),
                        phase=Phase.ARRIVAL)
    return engine, monitor, parts


def run_scenario(cfg: ScenarioConfig, sink=None) -> ScenarioRun:
    engine, monitor, _ = wire(cfg, sink=sink)
    trace = engine.run_until(cfg.horizon)
    return ScenarioRun(config=cfg, trace=trace, monitor=monitor, engine=engine)


# -- trace queries ----------------------------------------------------------


def boundary_records(trace: Sequence[TraceRecord], user: str) -> List[TraceRecord]:
    """Deliveries visible to ``user`` at their gateway."""
    return [
        r
        for r in trace
        if r.kind is TraceKind.MSG_RECV and r.entity == f"gw_{user}"
    ]


@dataclass(frozen=True)
class RecordSelector:
    """Picks the ``occurrence``-th record matching kind/entity/detail."""

    kind: Optional[TraceKind] = None
    entity: Optional[str] = None
    detail: Mapping[str, str] = field(default_factory=dict)
    occurrence: int = 0

    def matches(self, record: TraceRecord) -> bool:
        if self.kind is not None and record.kind is not self.kind:
            return False
        if self.entity is not None and record.entity != self.entity:
            return False
        return all(record.detail.get(k) == v for k, v in self.detail.items())

    def find(self, trace: Sequence[TraceRecord]) -> Optional[TraceRecord]:
        hits = [r for r in trace if self.matches(r)]
        if self.occurrence < len(hits):
            return hits[self.occurrence]
        return None

    def describe(self) -> str:
        parts = []
        if self.kind is not None:
            parts.append(self.kind.value)
        if self.entity is not None:
            parts.append(f"at {self.entity}")
        if self.detail:
            parts.append(",".join(f"{k}={v}" for k, v in sorted(self.detail.items())))
        parts.append(f"#{self.occurrence}")
        return " ".join(parts)


@dataclass(frozen=True)
class LabelCheck:
    selector: RecordSelector
    expected: Label
    actual: Optional[Label]
    ok: bool
    message: str


def assert_labels(
    trace: Sequence[TraceRecord],
    expectations: Sequence[Tuple[RecordSelector, Label]],
) -> List[LabelCheck]:
    """Exact label equality per selector; a missing record is a failure."""
    checks = []
    for selector, expected in expectations:
        record = selector.find(trace)
        if record is None:
            checks.append(LabelCheck(selector, expected, None, False,
                                     f"no record matches {selector.describe()}"))
        elif record.label != expected:
            checks.append(LabelCheck(
                selector, expected, record.label, False,
                f"{selector.describe()}: expected {expected}, got {record.label}"))
        else:
            checks.append(LabelCheck(selector, expected, record.label, True, "ok"))
    return checks


def default_label_expectations(cfg: ScenarioConfig) -> List[Tuple[RecordSelector, Label]]:
    """The labels each canonical topology promises on the first user's
    first result."""
    first = cfg.users[0]
    job = f"{first}0"
    kind = cfg.classify()
    own_only = Label((first,), {first: INFINITY})
    if kind in ("dedicated", "reservation"):
        return [
            (RecordSelector(TraceKind.MSG_RECV, f"gw_{first}",
                            {"msg": f"res_{job}"}), own_only),
        ]
    if kind == "statmux":
        assert cfg.pacer is not None
        full = Label((first,), {u: INFINITY for u in cfg.users})
        paced = full.pace_down(cfg.pacer.freq)
        return [
            (RecordSelector(TraceKind.MSG_SEND, "core", {"msg": f"res_{job}"}), full),
            (RecordSelector(TraceKind.PACER_RELEASE, f"pacer_{first}",
                            {"msg": f"res_{job}"}), paced),
            (RecordSelector(TraceKind.MSG_RECV, f"gw_{first}",
                            {"msg": f"res_{job}"}), paced),
        ]
    if (cfg.cores == "shared" and cfg.scheduler is not None
            and cfg.scheduler.kind == "demand" and cfg.pacer is None):
        # Pacer-removed multiplexing: still expect the delivery, carrying
        # every user's unbounded taint. The monitor denying it is exactly
        # what this expectation is meant to surface.
        full = Label((first,), {u: INFINITY for u in cfg.users})
        return [
            (RecordSelector(TraceKind.MSG_RECV, f"gw_{first}",
                            {"msg": f"res_{job}"}), full),
        ]
    return []


# -- paired runs -------------------------------------------------------------


@dataclass
class PairedRunReport:
    """Short-vs-long comparison at the first user's boundary."""

    scenario: str
    vary_user: str
    short_work: int
    long_work: int
    run_short: ScenarioRun
    run_long: ScenarioRun
    alice_diff: List[dict]
    label_checks: List[LabelCheck]
    isolation_required: bool
    boundary_ok: Optional[bool]

    @property
    def passed(self) -> bool:
        if any(not c.ok for c in self.label_checks):
            return False
        if self.isolation_required and self.alice_diff:
            return False
        if self.boundary_ok is False:
            return False
        return True

    def to_json_obj(self, include_traces: bool = False) -> dict:
        obj = {
            "scenario": self.scenario,
            "vary_user": self.vary_user,
            "short_work": self.short_work,
            "long_work": self.long_work,
            "isolation_required": self.isolation_required,
            "alice_diff": self.alice_diff,
            "boundary_ok": self.boundary_ok,
            "label_checks": [
                {
                    "selector": c.selector.describe(),
                    "expected": str(c.expected),
                    "actual": None if c.actual is None else str(c.actual),
                    "ok": c.ok,
                    "message": c.message,
                }
                for c in self.label_checks
            ],
            "passed": self.passed,
        }
        if include_traces:
            obj["trace_short"] = [json.loads(r.to_json()) for r in self.run_short.trace]
            obj["trace_long"] = [json.loads(r.to_json()) for r in self.run_long.trace]
        return obj

    def to_text(self) -> str:
        lines = [
            f"scenario {self.scenario}: vary {self.vary_user} work "
            f"{self.short_work} vs {self.long_work}",
            f"isolation required: {self.isolation_required}; "
            f"boundary-visible diffs: {len(self.alice_diff)}",
        ]
        if self.boundary_ok is not None:
            lines.append(f"deliveries on pacer boundaries: {self.boundary_ok}")
        for c in self.label_checks:
            lines.append(f"label {'ok  ' if c.ok else 'FAIL'} {c.message}"
                         if not c.ok else f"label ok   {c.selector.describe()} = {c.expected}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        lines.append("")
        lines.append(f"-- schedule, {self.vary_user} short ({self.short_work}) --")
        lines.append(render_schedule(self.run_short.trace, self.run_short.config))
        lines.append(f"-- schedule, {self.vary_user} long ({self.long_work}) --")
        lines.append(render_schedule(self.run_long.trace, self.run_long.config))
        return "\n".join(lines)


def run_paired(
    cfg: ScenarioConfig,
    short_work: int,
    long_work: int,
    vary_user: Optional[str] = None,
) -> PairedRunReport:
    """Run with the varied user's jobs at ``short_work`` then ``long_work``
    slices and diff the first user's gateway deliveries."""
    if short_work == long_work:
        raise ConfigError("paired runs need distinct short and long work")
    vary = vary_user if vary_user is not None else cfg.users[min(1, len(cfg.users) - 1)]

    def with_work(work: int) -> ScenarioConfig:
        jobs = tuple(
            dataclasses.replace(j, work=work) if j.owner == vary else j
            for j in cfg.jobs
        )
        return dataclasses.replace(cfg, jobs=jobs)

    run_short = run_scenario(with_work(short_work))
    run_long = run_scenario(with_work(long_work))

    observer = cfg.users[0]
    short_view = [r.to_json() for r in boundary_records(run_short.trace, observer)]
    long_view = [r.to_json() for r in boundary_records(run_long.trace, observer)]
    diff = []
    for i in range(max(len(short_view), len(long_view))):
        s = short_view[i] if i < len(short_view) else None
        l = long_view[i] if i < len(long_view) else None
        if s != l:
            diff.append({"index": i, "short": s, "long": l})

    kind = cfg.classify()
    checks = assert_labels(run_short.trace, default_label_expectations(with_work(short_work)))
    checks += assert_labels(run_long.trace, default_label_expectations(with_work(long_work)))

    boundary_ok: Optional[bool] = None
    if cfg.pacer is not None:
        period = cfg.pacer.freq.denominator
        first = cfg.pacer.first_tick if cfg.pacer.first_tick is not None else period
        ticks = [
            r.t
            for run in (run_short, run_long)
            for r in boundary_records(run.trace, observer)
        ]
        boundary_ok = all((t - first) % period == 0 for t in ticks)

    return PairedRunReport(
        scenario=kind,
        vary_user=vary,
        short_work=short_work,
        long_work=long_work,
        run_short=run_short,
        run_long=run_long,
        alice_diff=diff,
        label_checks=checks,
        isolation_required=kind in ("dedicated", "reservation"),
        boundary_ok=boundary_ok,
    )


# -- ASCII schedule chart -----------------------------------------------------


def render_schedule(trace: Sequence[TraceRecord], cfg: ScenarioConfig,
                    width: Optional[int] = None) -> str:
    """Rows of core occupancy per user plus delivery marks per gateway.

    '#'-cells are executed slices, 'R' marks a delivery reaching the
    customer, 'X' a denied delivery attempt.
    """
    slices: Dict[Tuple[str, str], List[int]] = {}
    for r in trace:
        if r.kind is TraceKind.SLICE_START:
            slices.setdefault((r.entity, r.detail["owner"]), []).append(r.t)
    deliveries: Dict[str, List[int]] = {u: [] for u in cfg.users}
    denials: Dict[str, List[int]] = {u: [] for u in cfg.users}
    for u in cfg.users:
        for r in trace:
            if r.entity != f"gw_{u}":
                continue
            if r.kind is TraceKind.MSG_RECV:
                deliveries[u].append(r.t)
            elif r.kind is TraceKind.MONITOR_DENY:
                denials[u].append(r.t)

    drawn = [t for ts in slices.values() for t in ts]
    drawn += [t for ts in deliveries.values() for t in ts]
    drawn += [t for ts in denials.values() for t in ts]
    last = max(drawn, default=0)
    width = width if width is not None else min(cfg.horizon, last + 2)

    def row(marks: Mapping[int, str]) -> str:
        return "".join(marks.get(t, ".") for t in range(width))

    name_w = max(
        [len(f"{c}/{u}") for c, u in slices] + [len(f"out:{u}") for u in cfg.users] + [5]
    )
    tens = "".join(str((t // 10) % 10) if t % 10 == 0 else " " for t in range(width))
    ones = "".join(str(t % 10) for t in range(width))
    lines = [f"{'tick':<{name_w}} {tens}", f"{'':<{name_w}} {ones}"]
    for (core, user) in sorted(slices):
        lines.append(f"{f'{core}/{user}':<{name_w}} "
                     + row({t: "#" for t in slices[(core, user)]}))
    for u in cfg.users:
        marks = {t: "R" for t in deliveries[u]}
        marks.update({t: "X" for t in denials[u]})
        lines.append(f"{f'out:{u}':<{name_w}} " + row(marks))
    return "\n".join(lines)
