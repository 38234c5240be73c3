from pathlib import Path

import pytest

from tifcsim.kernel import ConfigError, TraceKind, trace_to_jsonl
from tifcsim.labels import Capability, Frequency, Label
from tifcsim.scenarios import (
    JobSpec,
    PacerSpec,
    RecordSelector,
    ScenarioConfig,
    SchedulerSpec,
    assert_labels,
    boundary_records,
    build_scenario,
    default_label_expectations,
    render_schedule,
    run_paired,
    run_scenario,
)

DATA = Path(__file__).parent / "data"
F15 = Frequency(1, 5)


# -- config building and validation -------------------------------------------


def test_dedicated_shape():
    cfg = build_scenario("dedicated")
    assert cfg.cores == "private"
    assert cfg.scheduler is None and cfg.pacer is None
    assert cfg.classify() == "dedicated"


def test_reservation_shape():
    cfg = build_scenario("reservation")
    assert cfg.cores == "shared"
    assert cfg.scheduler == SchedulerSpec("reservation", ("A", "B"))
    assert cfg.classify() == "reservation"


def test_statmux_shape():
    cfg = build_scenario("statmux", freq=F15)
    assert cfg.pacer == PacerSpec(F15)
    assert cfg.scheduler.kind == "demand"
    assert cfg.grants["A"] == (Capability("B", F15),)
    assert cfg.grants["B"] == (Capability("A", F15),)
    assert cfg.classify() == "statmux"


def test_statmux_requires_frequency():
    with pytest.raises(ConfigError):
        build_scenario("statmux")


def test_unknown_scenario_kind():
    with pytest.raises(ConfigError):
        build_scenario("mainframe")


@pytest.mark.parametrize(
    "mutation",
    [
        dict(users=()),
        dict(users=("A", "A")),
        dict(cores="quantum"),
        dict(cores="shared", scheduler=None),
        dict(scheduler=SchedulerSpec("lottery", ("A",))),
        dict(scheduler=SchedulerSpec("demand", ("Z",))),
        dict(pacer=PacerSpec(Frequency(2, 3))),
        dict(jobs=(JobSpec("Z", 1),)),
        dict(jobs=(JobSpec("A", 0),)),
        dict(jobs=(JobSpec("A", 1, arrival=999),)),
        dict(jobs=(JobSpec("A", 1, payload="xyz"),)),
        dict(horizon=0),
        dict(grants={"Z": (Capability("A"),)}),
    ],
)
def test_config_validation_rejects(mutation):
    base = dict(
        users=("A", "B"),
        cores="shared",
        scheduler=SchedulerSpec("demand", ("A", "B")),
        jobs=(JobSpec("A", 1, "1"),),
        horizon=50,
    )
    base.update(mutation)
    with pytest.raises(ConfigError):
        ScenarioConfig(**base).validate()


def test_config_json_roundtrip():
    cfg = build_scenario("statmux", freq=F15, horizon=77, seed=9)
    assert ScenarioConfig.from_json_obj(cfg.to_json_obj()) == cfg


def test_config_canonical_json_stable():
    cfg = build_scenario("reservation")
    assert cfg.canonical_json() == cfg.canonical_json()


# -- runs ------------------------------------------------------------------------


def test_runs_are_deterministic():
    for kind in ("dedicated", "reservation", "statmux"):
        cfg = build_scenario(kind, freq=F15)
        a = trace_to_jsonl(run_scenario(cfg).trace)
        b = trace_to_jsonl(run_scenario(cfg).trace)
        assert a == b, kind


@pytest.mark.parametrize("kind", ["dedicated", "reservation", "statmux"])
def test_trace_matches_golden_file(kind):
    cfg = build_scenario(kind, freq=F15)
    got = trace_to_jsonl(run_scenario(cfg).trace)
    assert got == (DATA / f"{kind}.jsonl").read_text(encoding="utf-8")


@pytest.mark.parametrize("kind", ["dedicated", "reservation", "statmux"])
def test_every_receive_has_a_prior_send_or_release(kind):
    run = run_scenario(build_scenario(kind, freq=F15))
    seen = {}
    for r in run.trace:
        msg = r.detail.get("msg")
        if r.kind in (TraceKind.MSG_SEND, TraceKind.PACER_RELEASE):
            seen.setdefault(msg, r.t)
        elif r.kind is TraceKind.MSG_RECV:
            assert msg in seen and seen[msg] <= r.t, r.to_json()


def test_monitor_decisions_appear_in_trace():
    run = run_scenario(build_scenario("statmux", freq=F15, horizon=30))
    allows = [r for r in run.trace if r.kind is TraceKind.MONITOR_ALLOW]
    assert allows
    assert run.monitor.audit_log()
    assert not run.monitor.denials()  # paced path is clean


# -- paired runs --------------------------------------------------------------------


def test_dedicated_isolation_bit_identical():
    report = run_paired(build_scenario("dedicated"), 2, 7)
    assert report.alice_diff == []
    assert report.passed


def test_reservation_isolation_bit_identical():
    report = run_paired(build_scenario("reservation"), 2, 7)
    assert report.alice_diff == []
    assert report.passed


def test_statmux_deliveries_on_boundaries_with_paced_labels():
    report = run_paired(build_scenario("statmux", freq=F15), 2, 7)
    assert report.boundary_ok is True
    assert all(c.ok for c in report.label_checks)
    assert report.passed
    for run in (report.run_short, report.run_long):
        for r in boundary_records(run.trace, "A"):
            assert r.label == Label.parse("{A/A:1/5,B:1/5}")


def test_statmux_without_pacer_denied_at_gateway():
    cfg = build_scenario("statmux", freq=F15, pacer_present=False)
    run = run_scenario(cfg)
    denials = [r for r in run.trace
               if r.kind is TraceKind.MONITOR_DENY and r.entity == "gw_A"]
    assert len(denials) >= 1
    assert denials[0].detail["residual"] == "B:inf"
    assert boundary_records(run.trace, "A") == []


def test_paired_requires_distinct_works():
    with pytest.raises(ConfigError):
        run_paired(build_scenario("dedicated"), 3, 3)


def test_paired_report_serializes():
    report = run_paired(build_scenario("dedicated"), 2, 7)
    obj = report.to_json_obj(include_traces=True)
    assert obj["passed"] is True
    assert obj["trace_short"][0]["kind"] == "JobArrive"
    text = report.to_text()
    assert "PASS" in text and "schedule" in text


# -- label assertions ------------------------------------------------------------------


def test_three_user_statmux_generalizes():
    cfg = build_scenario(
        "statmux",
        users=("A", "B", "C"),
        freq=F15,
        jobs=(JobSpec("A", 2, "1"), JobSpec("B", 3, "0"), JobSpec("C", 1, "1")),
        horizon=60,
    )
    assert cfg.grants["A"] == (Capability("B", F15), Capability("C", F15))
    run = run_scenario(cfg)
    pre_pacer = RecordSelector(TraceKind.MSG_SEND, "core", {"msg": "res_A0"})
    rec = pre_pacer.find(run.trace)
    assert rec.label == Label.parse("{A/A:inf,B:inf,C:inf}")
    for r in boundary_records(run.trace, "A"):
        assert r.label == Label.parse("{A/A:1/5,B:1/5,C:1/5}")
        assert r.t % 5 == 0
    assert not run.monitor.denials()


def test_default_expectations_cover_statmux_path():
    cfg = build_scenario("statmux", freq=F15)
    run = run_scenario(cfg)
    checks = assert_labels(run.trace, default_label_expectations(cfg))
    assert [c.ok for c in checks] == [True, True, True]


def test_assert_labels_reports_missing_selector():
    cfg = build_scenario("dedicated")
    run = run_scenario(cfg)
    checks = assert_labels(run.trace, [
        (RecordSelector(TraceKind.PACER_RELEASE, "pacer_A"), Label.parse("{-/-}")),
    ])
    assert not checks[0].ok
    assert "no record matches" in checks[0].message


def test_assert_labels_reports_wrong_label():
    cfg = build_scenario("dedicated")
    run = run_scenario(cfg)
    checks = assert_labels(run.trace, [
        (RecordSelector(TraceKind.MSG_RECV, "gw_A"), Label.parse("{-/-}")),
    ])
    assert not checks[0].ok
    assert "expected {-/-}" in checks[0].message


# -- chart ---------------------------------------------------------------------------------


def test_render_dedicated_rows_disjoint():
    cfg = build_scenario("dedicated")
    chart = render_schedule(run_scenario(cfg).trace, cfg)
    rows = {l.split()[0] for l in chart.splitlines()[2:]}
    # each private core hosts exactly its own user, never the other's
    assert {"core_A/A", "core_B/B"} <= rows
    assert "core_A/B" not in rows and "core_B/A" not in rows


def test_render_shared_core_interleaves_users():
    cfg = build_scenario("reservation")
    chart = render_schedule(run_scenario(cfg).trace, cfg)
    lines = {l.split()[0]: l.split()[-1] for l in chart.splitlines()[2:]}
    a_row, b_row = lines["core/A"], lines["core/B"]
    # one core: never two users in the same timeslice
    assert not any(x == "#" and y == "#" for x, y in zip(a_row, b_row))


def test_render_marks_deliveries_and_denials():
    cfg = build_scenario("statmux", freq=F15)
    chart = render_schedule(run_scenario(cfg).trace, cfg)
    assert "R" in chart
    ablated = build_scenario("statmux", freq=F15, pacer_present=False)
    chart2 = render_schedule(run_scenario(ablated).trace, ablated)
    assert "X" in chart2
