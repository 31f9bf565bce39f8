import json
import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from neurokey.errors import ScenarioError
from neurokey.mission_failsafe import (
    Delivered,
    EventKind,
    FailsafeState,
    Mode,
    Node,
    Policy,
    ScenarioConfig,
    UavKinematics,
    Waypoint,
    builtin_scenario,
    liveness_bound,
    run_scenario,
    step_uav,
)
from neurokey.secure_link import Command, CommandKind, FrameType, KeyChangeAck, Verdict

GCS, ATTACKER = 0x0001, 0x0BAD


def _goto(x, y, index=1, verdict=Verdict.TRUSTED, src=GCS):
    return Delivered(FrameType.COMMAND, src, Command(CommandKind.GOTO, index, x, y).encode(), verdict)


def _enroute(policy=Policy.RTL, waypoints=((20.0, 0.0),)):
    mission = tuple(Waypoint(x, y, i) for i, (x, y) in enumerate(waypoints, start=1))
    return FailsafeState(mode=Mode.EN_ROUTE, target_index=1, policy=policy, mission=mission)


def _kinds(events):
    return [k for k, _ in events]


def _run_ticks(state, kin, inboxes, ticks, dt):
    trace = []
    for tick in range(1, ticks + 1):
        step = step_uav(state, kin, inboxes.get(tick, []), tick, dt)
        state, kin = step.state, step.kinematics
        trace.append((tick, kin.position, step))
    return state, kin, trace


class TestStepUav:
    def test_reaches_waypoint_after_ten_ticks(self):
        kin = UavKinematics((0.0, 0.0), 2.0, (0.0, 0.0))
        _, kin, trace = _run_ticks(_enroute(), kin, {}, 10, 1.0)
        reached = [t for t, _, s in trace if EventKind.WAYPOINT_REACHED in _kinds(s.events)]
        assert reached == [10]
        assert kin.position == (20.0, 0.0)
        assert EventKind.MISSION_COMPLETE in _kinds(trace[-1][2].events)

    def test_per_tick_displacement(self):
        kin = UavKinematics((0.0, 0.0), 2.0, (0.0, 0.0))
        _, _, trace = _run_ticks(_enroute(), kin, {}, 9, 1.0)
        assert [p for _, p, _ in trace] == [(2.0 * t, 0.0) for t in range(1, 10)]

    def test_foreign_frame_triggers_rtl_same_tick(self):
        kin = UavKinematics((0.0, 0.0), 2.0, (0.0, 0.0))
        inbox = {5: [_goto(500, 500, verdict=Verdict.FOREIGN, src=ATTACKER)]}
        state, kin, trace = _run_ticks(_enroute(waypoints=((100.0, 0.0),)), kin, inbox, 5, 1.0)
        kinds = _kinds(trace[-1][2].events)
        assert kinds[:3] == [EventKind.FOREIGN_DETECTED, EventKind.GPS_LOCKED, EventKind.RTL_ENGAGED]
        assert state.mode is Mode.RETURNING_TO_LAUNCH and state.gps_locked
        # the attacker's waypoint never enters the mission
        assert [(w.x, w.y) for w in state.mission] == [(100.0, 0.0)]

    def test_rtl_flies_home_and_stops(self):
        kin = UavKinematics((0.0, 0.0), 2.0, (0.0, 0.0))
        inbox = {5: [_goto(500, 500, verdict=Verdict.FOREIGN, src=ATTACKER)]}
        state, kin, trace = _run_ticks(_enroute(waypoints=((100.0, 0.0),)), kin, inbox, 20, 1.0)
        home_ticks = [t for t, _, s in trace if EventKind.RETURNED_HOME in _kinds(s.events)]
        assert home_ticks == [9]  # 8 m out at tick 4, back at 2 m per tick
        assert state.mode is Mode.HOME and kin.position == (0.0, 0.0)

    def test_home_ignores_commands(self):
        state = FailsafeState(mode=Mode.HOME, gps_locked=True)
        kin = UavKinematics((0.0, 0.0), 2.0, (0.0, 0.0))
        step = step_uav(state, kin, [_goto(5, 5)], 1, 1.0)
        assert step.state.mode is Mode.HOME and step.kinematics == kin
        assert EventKind.COMMAND_IGNORED in _kinds(step.events)

    def test_rekey_hover_trace(self):
        kin = UavKinematics((0.0, 0.0), 2.0, (0.0, 0.0))
        ack = Delivered(FrameType.KEY_CHANGE_ACK, GCS, KeyChangeAck(bytes(16), bytes(range(16))).encode(), Verdict.TRUSTED)
        inboxes = {5: [_goto(500, 500, verdict=Verdict.FOREIGN, src=ATTACKER)], 9: [ack]}
        state, kin, trace = _run_ticks(_enroute(Policy.REKEY, ((40.0, 0.0),)), kin, inboxes, 30, 1.0)
        by_tick = {t: (p, s) for t, p, s in trace}
        assert _kinds(by_tick[5][1].events) == [
            EventKind.FOREIGN_DETECTED, EventKind.GPS_LOCKED, EventKind.KEY_CHANGE_REQUESTED]
        assert by_tick[5][1].outbound == [(FrameType.KEY_CHANGE_REQUEST, b"")]
        assert {by_tick[t][0] for t in range(4, 10)} == {(8.0, 0.0)}
        assert EventKind.REKEYED in _kinds(by_tick[9][1].events)
        assert by_tick[9][1].new_key == bytes(range(16))
        assert by_tick[10][0] == (10.0, 0.0)
        assert state.mission_complete and kin.position == (40.0, 0.0)

    def test_awaiting_rekey_ignores_further_foreign_frames(self):
        state = replace(_enroute(Policy.REKEY), mode=Mode.AWAITING_REKEY, gps_locked=True, interrupted_target=1)
        kin = UavKinematics((3.0, 0.0), 2.0, (0.0, 0.0))
        step = step_uav(state, kin, [_goto(9, 9, verdict=Verdict.FOREIGN, src=ATTACKER)], 1, 1.0)
        assert step.events == [] and step.outbound == []
        assert step.kinematics.position == (3.0, 0.0)

    def test_malformed_command_is_ignored(self):
        kin = UavKinematics((0.0, 0.0), 2.0, (0.0, 0.0))
        bad = Delivered(FrameType.COMMAND, GCS, b"\x09", Verdict.TRUSTED)
        step = step_uav(_enroute(), kin, [bad], 1, 1.0)
        assert _kinds(step.events)[0] is EventKind.COMMAND_IGNORED
        assert step.kinematics.position == (2.0, 0.0)

    def test_trusted_goto_starts_mission(self):
        kin = UavKinematics((0.0, 0.0), 1.0, (0.0, 0.0))
        step = step_uav(FailsafeState(), kin, [_goto(0, 10)], 1, 1.0)
        assert step.state.mode is Mode.EN_ROUTE and step.kinematics.position == (0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100), st.integers(1, 4), st.sampled_from([Mode.EN_ROUTE, Mode.HOVERING]))
def test_foreign_goto_never_moves_target(x, y, index, mode):
    state = replace(_enroute(waypoints=((10.0, 10.0), (20.0, 0.0), (0.0, 30.0), (5.0, 5.0))), mode=mode)
    kin = UavKinematics((1.0, 1.0), 3.0, (0.0, 0.0))
    step = step_uav(state, kin, [_goto(x, y, index, Verdict.FOREIGN, ATTACKER)], 1, 0.5)
    assert step.state.mission == state.mission
    assert step.state.mode is Mode.RETURNING_TO_LAUNCH
    assert step.kinematics.position == kin.position


class TestScenarioConfig:
    def test_load_bundled(self):
        cfg = builtin_scenario("A")
        assert len(cfg.waypoints) == 6 and cfg.policy is Policy.RTL
        assert cfg.attack.trigger == "after_waypoint" and cfg.attack.value == 3

    def test_rejects_duplicate_addresses(self):
        doc = {"waypoints": [{"x": 1, "y": 1}], "addresses": {"gcs": 1, "uav": 1, "attacker": 3}}
        with pytest.raises(ScenarioError):
            ScenarioConfig.from_dict(doc).validate()

    def test_rejects_empty_mission_and_bad_policy(self):
        with pytest.raises(ScenarioError):
            ScenarioConfig.from_dict({"waypoints": []}).validate()
        with pytest.raises(ScenarioError):
            ScenarioConfig.from_dict({"waypoints": [{"x": 1, "y": 1}], "policy": "panic"})

    def test_unknown_bundled_scenario(self):
        with pytest.raises(ScenarioError):
            builtin_scenario("Z")


def _uav_events(result):
    return [e for e in result.events if e.node is Node.UAV]


def _first(result, kind, detail=None):
    return next(i for i, e in enumerate(result.events)
                if e.kind is kind and e.node is Node.UAV and (detail is None or e.detail == detail))


@pytest.fixture(scope="module")
def scenario_c():
    return run_scenario(builtin_scenario("C"))


class TestScenarios:
    def test_gcs_sends_one_goto_per_waypoint(self):
        result = run_scenario(replace(builtin_scenario("A"), attack=None))
        gotos = [e for e in result.events if e.node is Node.GCS and e.kind is EventKind.FRAME_SENT]
        assert len(gotos) == 6 and all(e.detail.startswith("COMMAND") for e in gotos)

    def test_attack_starts_tick_after_waypoint(self):
        result = run_scenario(builtin_scenario("A"))
        reached = result.events[_first(result, EventKind.WAYPOINT_REACHED, "3")].tick
        first_attack = next(e.tick for e in result.events if e.node is Node.ATTACKER)
        assert first_attack == reached + 1
        assert result.events[_first(result, EventKind.FOREIGN_DETECTED)].tick == reached + 1

    def test_timeout_is_an_outcome(self):
        result = run_scenario(replace(builtin_scenario("A"), max_ticks=5))
        assert result.timed_out and result.events[-1].kind is EventKind.TIMEOUT

    def test_rekey_exactly_one_rotation(self, scenario_c):
        gcs_rekeys = [e for e in scenario_c.events if e.node is Node.GCS and e.kind is EventKind.REKEYED]
        assert len(gcs_rekeys) == 1
        assert scenario_c.final_uav_key != scenario_c.initial_key

    def test_post_rekey_telemetry_reaches_gcs(self, scenario_c):
        rekey_tick = scenario_c.events[_first(scenario_c, EventKind.REKEYED)].tick
        assert any(t > rekey_tick for t, _ in scenario_c.gcs_telemetry)

    def test_old_key_frames_dropped_after_rekey(self, scenario_c):
        rekey_tick = scenario_c.events[_first(scenario_c, EventKind.REKEYED)].tick
        after = [e for e in scenario_c.events
                 if e.node is Node.UAV and e.tick > rekey_tick and "src=0x0bad" in e.detail]
        assert after and all(e.kind is EventKind.FRAME_DROPPED and e.detail.startswith("BadMic") for e in after)

    def test_outputs_formats(self, scenario_c, tmp_path):
        scenario_c.write(tmp_path / "e.jsonl", tmp_path / "t.csv")
        lines = (tmp_path / "e.jsonl").read_text().splitlines()
        assert [json.loads(line)["seq"] for line in lines] == list(range(len(lines)))
        rows = (tmp_path / "t.csv").read_text().splitlines()
        assert rows[0] == "tick,x,y,mode" and rows[1].startswith("0,")

    @pytest.mark.parametrize("name", ["A", "B", "C"])
    def test_invariants(self, name):
        cfg = builtin_scenario(name)
        result = run_scenario(cfg)
        step = cfg.speed_mps * cfg.tick_seconds + 1e-9
        for (_, x0, y0, _), (_, x1, y1, _) in zip(result.trajectory, result.trajectory[1:]):
            assert math.hypot(x1 - x0, y1 - y0) <= step
        kinds = [e.kind for e in _uav_events(result)]
        for reaction in (EventKind.RTL_ENGAGED, EventKind.KEY_CHANGE_REQUESTED):
            if reaction in kinds:
                assert kinds.index(EventKind.GPS_LOCKED) < kinds.index(reaction)
        order = [(e.tick, e.seq) for e in result.events]
        assert order == sorted(order)


@settings(max_examples=15, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-80, 80), st.floats(-80, 80)), min_size=1, max_size=5),
    st.floats(1.0, 8.0),
    st.sampled_from([0.05, 0.1, 0.2]),
)
def test_attacker_free_liveness(points, speed, dt):
    cfg = ScenarioConfig(waypoints=tuple(points), speed_mps=speed, tick_seconds=dt,
                         seeds={"eeg_subject": 2, "enroll": 5})
    result = run_scenario(cfg)
    assert result.outcome == EventKind.MISSION_COMPLETE.value
    assert result.trajectory[-1][0] <= liveness_bound(cfg)
