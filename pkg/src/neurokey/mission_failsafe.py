"""Deterministic tick simulator of a ground station, a UAV and an attacker.

The UAV reacts to any authenticated frame whose source is not the ground
station, either by returning to launch or by holding position while a new
session key is negotiated. Each tick runs in fixed order: ground station,
attacker, link delivery, UAV.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

from .eeg_signal import EegRecord, load_record, subject_tones, synthesize_beta
from .errors import BadMic, FrameError, PayloadError, Replay, ScenarioError
from .key_manager import EnrollmentRecord, PipelineConfig, enroll, reproduce_key, rotate_key
from .secure_link import (
    Command,
    CommandKind,
    FrameType,
    KeyChangeAck,
    LinkEndpoint,
    SecureFrame,
    Telemetry,
    Verdict,
    decode_frame,
    encode_frame,
)

ARRIVAL_RADIUS_M = 0.5
DEFAULT_TICK_SECONDS = 0.1


class Mode(str, Enum):
    EN_ROUTE = "EnRoute"
    HOVERING = "Hovering"
    RETURNING_TO_LAUNCH = "ReturningToLaunch"
    HOME = "Home"
    AWAITING_REKEY = "AwaitingRekey"


class Policy(str, Enum):
    RTL = "rtl"
    REKEY = "rekey"


class Node(str, Enum):
    GCS = "Gcs"
    UAV = "Uav"
    ATTACKER = "Attacker"


class EventKind(str, Enum):
    FRAME_SENT = "FrameSent"
    FRAME_DELIVERED = "FrameDelivered"
    FRAME_DROPPED = "FrameDropped"
    FOREIGN_DETECTED = "ForeignDetected"
    GPS_LOCKED = "GpsLocked"
    RTL_ENGAGED = "RtlEngaged"
    KEY_CHANGE_REQUESTED = "KeyChangeRequested"
    REKEYED = "Rekeyed"
    WAYPOINT_REACHED = "WaypointReached"
    MISSION_COMPLETE = "MissionComplete"
    RETURNED_HOME = "ReturnedHome"
    COMMAND_IGNORED = "CommandIgnored"
    TIMEOUT = "Timeout"


TERMINAL_EVENTS = (EventKind.MISSION_COMPLETE, EventKind.RETURNED_HOME)

# Modes in which a foreign frame no longer changes anything.
_FAILSAFE_MODES = (Mode.RETURNING_TO_LAUNCH, Mode.HOME, Mode.AWAITING_REKEY)


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    index: int

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ScenarioError("waypoint coordinates must be finite")
        if self.index < 1:
            raise ScenarioError("waypoint index must be positive")


@dataclass(frozen=True)
class UavKinematics:
    position: tuple[float, float]
    speed_mps: float
    home: tuple[float, float]


@dataclass(frozen=True)
class FailsafeState:
    mode: Mode = Mode.HOVERING
    target_index: int | None = None
    gps_locked: bool = False
    policy: Policy = Policy.RTL
    mission: tuple[Waypoint, ...] = ()
    interrupted_target: int | None = None
    mission_complete: bool = False


@dataclass(frozen=True)
class SimEvent:
    tick: int
    seq: int
    node: Node
    kind: EventKind
    detail: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {"tick": self.tick, "seq": self.seq, "node": self.node.value,
             "kind": self.kind.value, "detail": self.detail},
            separators=(",", ":"),
        )


@dataclass(frozen=True)
class Delivered:
    """A frame that passed MIC and replay checks at the receiver."""

    frame_type: FrameType
    src: int
    payload: bytes
    verdict: Verdict


@dataclass
class UavStep:
    state: FailsafeState
    kinematics: UavKinematics
    outbound: list[tuple[FrameType, bytes]] = field(default_factory=list)
    events: list[tuple[EventKind, str]] = field(default_factory=list)
    new_key: bytes | None = None


def _move_toward(pos, goal, max_step):
    dx, dy = goal[0] - pos[0], goal[1] - pos[1]
    dist = math.hypot(dx, dy)
    if dist <= max_step:
        return (float(goal[0]), float(goal[1])), 0.0
    f = max_step / dist
    return (pos[0] + dx * f, pos[1] + dy * f), dist - max_step


def _add_waypoint(mission: tuple[Waypoint, ...], wp: Waypoint) -> tuple[Waypoint, ...]:
    kept = [w for w in mission if w.index != wp.index]
    return tuple(sorted(kept + [wp], key=lambda w: w.index))


def step_uav(
    state: FailsafeState,
    kinematics: UavKinematics,
    inbox: list[Delivered],
    tick: int,
    tick_seconds: float = DEFAULT_TICK_SECONDS,
) -> UavStep:
    """One tick of the UAV: failsafe reaction to the inbox, then motion."""
    out = UavStep(state, kinematics)
    events = out.events
    hold = False

    foreign = [d for d in inbox if d.verdict is Verdict.FOREIGN]
    if foreign and state.mode not in _FAILSAFE_MODES:
        events.append((EventKind.FOREIGN_DETECTED, f"src={foreign[0].src:#06x}"))
        # LockGPS comes first in both failsafe procedures
        state = replace(state, gps_locked=True)
        events.append((EventKind.GPS_LOCKED, f"home={kinematics.home[0]:.3f},{kinematics.home[1]:.3f}"))
        if state.policy is Policy.RTL:
            state = replace(state, mode=Mode.RETURNING_TO_LAUNCH)
            events.append((EventKind.RTL_ENGAGED, "target=home"))
        else:
            interrupted = state.target_index if state.mode is Mode.EN_ROUTE else None
            state = replace(state, mode=Mode.AWAITING_REKEY, interrupted_target=interrupted)
            out.outbound.append((FrameType.KEY_CHANGE_REQUEST, b""))
            events.append((EventKind.KEY_CHANGE_REQUESTED, f"interrupted={interrupted}"))
        hold = True

    for item in inbox:
        if item.verdict is not Verdict.TRUSTED:
            continue
        if item.frame_type is FrameType.COMMAND:
            try:
                cmd = Command.decode(item.payload)
            except PayloadError as exc:
                events.append((EventKind.COMMAND_IGNORED, str(exc)))
                continue
            state = _apply_command(state, cmd, events)
        elif item.frame_type is FrameType.KEY_CHANGE_ACK:
            if state.mode is not Mode.AWAITING_REKEY:
                events.append((EventKind.COMMAND_IGNORED, "unsolicited KeyChangeAck"))
                continue
            try:
                ack = KeyChangeAck.decode(item.payload)
            except PayloadError as exc:
                events.append((EventKind.COMMAND_IGNORED, str(exc)))
                continue
            out.new_key = ack.new_key
            resume = state.interrupted_target
            state = replace(
                state,
                mode=Mode.EN_ROUTE if resume is not None else Mode.HOVERING,
                target_index=resume,
                interrupted_target=None,
            )
            events.append((EventKind.REKEYED, f"reference={ack.reference[:4].hex()}"))
            hold = True

    if not hold:
        state, kinematics = _advance(state, kinematics, tick_seconds, events)

    out.state, out.kinematics = state, kinematics
    return out


def _apply_command(state: FailsafeState, cmd: Command, events) -> FailsafeState:
    if state.mode in (Mode.HOME, Mode.AWAITING_REKEY):
        events.append((EventKind.COMMAND_IGNORED, f"{cmd.kind.name} while {state.mode.value}"))
        return state
    if cmd.kind is CommandKind.GOTO:
        mission = _add_waypoint(state.mission, Waypoint(cmd.x, cmd.y, cmd.index))
        state = replace(state, mission=mission, mission_complete=False)
        if state.mode is Mode.HOVERING and state.target_index is None:
            state = replace(state, mode=Mode.EN_ROUTE, target_index=mission[0].index)
        return state
    if state.mode is Mode.RETURNING_TO_LAUNCH:
        events.append((EventKind.COMMAND_IGNORED, f"{cmd.kind.name} during return to launch"))
        return state
    if cmd.kind is CommandKind.HOVER:
        return replace(state, mode=Mode.HOVERING)
    if cmd.kind is CommandKind.RETURN_TO_LAUNCH:
        return replace(state, mode=Mode.RETURNING_TO_LAUNCH)
    if cmd.kind is CommandKind.RESUME and state.target_index is not None:
        return replace(state, mode=Mode.EN_ROUTE)
    return state


def _advance(state, kinematics, tick_seconds, events):
    step = kinematics.speed_mps * tick_seconds
    if state.mode is Mode.EN_ROUTE:
        wp = next((w for w in state.mission if w.index == state.target_index), None)
        if wp is None:
            return replace(state, mode=Mode.HOVERING), kinematics
        pos, left = _move_toward(kinematics.position, (wp.x, wp.y), step)
        kinematics = replace(kinematics, position=pos)
        if left <= ARRIVAL_RADIUS_M:
            events.append((EventKind.WAYPOINT_REACHED, str(wp.index)))
            later = [w.index for w in state.mission if w.index > wp.index]
            if later:
                state = replace(state, target_index=later[0])
            else:
                state = replace(state, mode=Mode.HOVERING, target_index=None, mission_complete=True)
                events.append((EventKind.MISSION_COMPLETE, f"waypoints={len(state.mission)}"))
    elif state.mode is Mode.RETURNING_TO_LAUNCH:
        pos, left = _move_toward(kinematics.position, kinematics.home, step)
        kinematics = replace(kinematics, position=pos)
        if left <= ARRIVAL_RADIUS_M:
            state = replace(state, mode=Mode.HOME)
            events.append((EventKind.RETURNED_HOME, f"{pos[0]:.3f},{pos[1]:.3f}"))
    return state, kinematics


# --- scenario configuration ---------------------------------------------------

@dataclass(frozen=True)
class AttackConfig:
    trigger: str  # "after_waypoint" | "at_tick"
    value: int
    target: tuple[float, float] = (500.0, -500.0)

    def __post_init__(self):
        if self.trigger not in ("after_waypoint", "at_tick"):
            raise ScenarioError(f"unknown attack trigger {self.trigger!r}")
        if self.value < 0:
            raise ScenarioError("attack trigger value must be non-negative")


@dataclass(frozen=True)
class ScenarioConfig:
    waypoints: tuple[tuple[float, float], ...]
    home: tuple[float, float] = (0.0, 0.0)
    tick_seconds: float = DEFAULT_TICK_SECONDS
    max_ticks: int = 20000
    speed_mps: float = 5.0
    policy: Policy = Policy.RTL
    link_delay_ticks: int = 0
    gcs_address: int = 0x0001
    uav_address: int = 0x0002
    attacker_address: int = 0x0BAD
    attack: AttackConfig | None = None
    enrollment_file: str | None = None
    eeg_record_file: str | None = None
    seeds: dict[str, int] = field(default_factory=dict)
    telemetry_every: int = 10

    def validate(self) -> None:
        if not self.waypoints:
            raise ScenarioError("a scenario needs at least one waypoint")
        addrs = (self.gcs_address, self.uav_address, self.attacker_address)
        if len(set(addrs)) != 3:
            raise ScenarioError("node addresses must be distinct")
        if not all(0 <= a < 0xFFFF for a in addrs):
            raise ScenarioError("node addresses must be in 0x0000-0xFFFE")
        if not (self.tick_seconds > 0 and self.speed_mps > 0):
            raise ScenarioError("tick_seconds and speed_mps must be positive")
        if self.max_ticks < 1 or self.link_delay_ticks < 0 or self.telemetry_every < 1:
            raise ScenarioError("max_ticks, link_delay_ticks or telemetry_every out of range")
        for x, y in (*self.waypoints, self.home):
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ScenarioError("coordinates must be finite")

    def seed(self, name: str, default: int) -> int:
        return int(self.seeds.get(name, default))

    @classmethod
    def from_dict(cls, doc: dict[str, Any], base_dir: str | Path | None = None) -> "ScenarioConfig":
        try:
            addresses = doc.get("addresses", {})
            attack = doc.get("attack")
            base = Path(base_dir) if base_dir is not None else None

            def _path(key):
                value = doc.get(key)
                if value is None or base is None or Path(value).is_absolute():
                    return value
                return str(base / value)

            cfg = cls(
                waypoints=tuple((float(w["x"]), float(w["y"])) for w in doc["waypoints"]),
                home=(float(doc.get("home", {}).get("x", 0.0)), float(doc.get("home", {}).get("y", 0.0))),
                tick_seconds=float(doc.get("tick_seconds", DEFAULT_TICK_SECONDS)),
                max_ticks=int(doc.get("max_ticks", 20000)),
                speed_mps=float(doc.get("speed_mps", 5.0)),
                policy=Policy(doc.get("policy", "rtl")),
                link_delay_ticks=int(doc.get("link_delay_ticks", 0)),
                gcs_address=_addr(addresses.get("gcs", 0x0001)),
                uav_address=_addr(addresses.get("uav", 0x0002)),
                attacker_address=_addr(addresses.get("attacker", 0x0BAD)),
                attack=None if attack is None else AttackConfig(
                    trigger=attack["trigger"],
                    value=int(attack["value"]),
                    target=tuple(attack.get("target", (500.0, -500.0))),
                ),
                enrollment_file=_path("enrollment_file"),
                eeg_record_file=_path("eeg_record_file"),
                seeds={k: int(v) for k, v in doc.get("seeds", {}).items()},
                telemetry_every=int(doc.get("telemetry_every", 10)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid scenario config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
        return cls.from_dict(doc, base_dir=path.parent)


def _addr(value) -> int:
    return int(value, 0) if isinstance(value, str) else int(value)


def liveness_bound(config: ScenarioConfig) -> float:
    """Ticks an attacker-free mission may take: path/(speed*tick) + |waypoints|."""
    path, here = 0.0, config.home
    for wp in config.waypoints:
        path += math.dist(here, wp)
        here = wp
    return path / (config.speed_mps * config.tick_seconds) + len(config.waypoints)


# --- nodes ----------------------------------------------------------------------

class EventLog:
    def __init__(self):
        self.events: list[SimEvent] = []

    def add(self, tick: int, node: Node, kind: EventKind, detail: str = "") -> None:
        self.events.append(SimEvent(tick, len(self.events), node, kind, detail))


def _open_inbox(endpoint: LinkEndpoint, frames, tick, node, log) -> list[Delivered]:
    delivered = []
    for frame in frames:
        try:
            payload, verdict = endpoint.receive(frame)
        except (BadMic, Replay) as exc:
            log.add(tick, node, EventKind.FRAME_DROPPED,
                    f"{type(exc).__name__} src={frame.src:#06x} ctr={frame.frame_counter}")
            continue
        log.add(tick, node, EventKind.FRAME_DELIVERED,
                f"{frame.frame_type.name} src={frame.src:#06x} ctr={frame.frame_counter} {verdict.value}")
        delivered.append(Delivered(frame.frame_type, frame.src, payload, verdict))
    return delivered


class GroundStation:
    def __init__(self, config: ScenarioConfig, key: bytes, eeg: EegRecord, pipeline: PipelineConfig):
        self.config = config
        self.endpoint = LinkEndpoint(config.gcs_address, key, config.uav_address)
        self.eeg = eeg
        self.pipeline = pipeline
        self.mission_sent = False
        self.rotations = 0
        self.enrollment: EnrollmentRecord | None = None
        self.telemetry: list[tuple[int, Telemetry]] = []

    def step(self, frames, tick: int, log: EventLog) -> list[SecureFrame]:
        out = []
        inbox = _open_inbox(self.endpoint, frames, tick, Node.GCS, log)
        if not self.mission_sent:
            for i, (x, y) in enumerate(self.config.waypoints, start=1):
                cmd = Command(CommandKind.GOTO, i, x, y)
                out.append(self.endpoint.send(FrameType.COMMAND, cmd.encode()))
            self.mission_sent = True
        for item in inbox:
            if item.verdict is not Verdict.TRUSTED:
                continue
            if item.frame_type is FrameType.TELEMETRY:
                try:
                    self.telemetry.append((tick, Telemetry.decode(item.payload)))
                except PayloadError:
                    pass
            elif item.frame_type is FrameType.KEY_CHANGE_REQUEST:
                out.extend(self._rekey(tick, log))
        for frame in out:
            log.add(tick, Node.GCS, EventKind.FRAME_SENT,
                    f"{frame.frame_type.name} ctr={frame.frame_counter}")
        return out

    def _rekey(self, tick, log) -> list[SecureFrame]:
        self.rotations += 1
        seed = self.config.seed("rekey", 1000) + self.rotations
        key, enrollment = rotate_key(self.eeg, self.pipeline, seed)
        self.enrollment = enrollment
        # the only secret shared with the UAV at this point is the old key
        ack = KeyChangeAck(enrollment.key_check, key.bytes)
        frame = self.endpoint.send(FrameType.KEY_CHANGE_ACK, ack.encode())
        self.endpoint.install_key(key.bytes)
        log.add(tick, Node.GCS, EventKind.REKEYED, f"fingerprint={enrollment.fingerprint}")
        return [frame]


class Attacker:
    """Holds the original session key and impersonates a controller from its own address."""

    def __init__(self, config: ScenarioConfig, known_key: bytes):
        self.config = config
        self.attack = config.attack
        self.endpoint = LinkEndpoint(config.attacker_address, known_key, config.uav_address)
        self.active_from: int | None = None
        self._seen = 0

    def observe(self, events: list[SimEvent]) -> None:
        fresh, self._seen = events[self._seen:], len(events)
        if self.attack is None or self.active_from is not None:
            return
        if self.attack.trigger == "at_tick":
            self.active_from = self.attack.value
            return
        for ev in fresh:
            if ev.node is Node.UAV and ev.kind is EventKind.WAYPOINT_REACHED and int(ev.detail) == self.attack.value:
                self.active_from = ev.tick + 1
                return

    def step(self, tick: int, log: EventLog) -> list[SecureFrame]:
        if self.active_from is None or tick < self.active_from:
            return []
        tx, ty = self.attack.target
        cmd = Command(CommandKind.GOTO, 1, float(tx), float(ty))
        frame = self.endpoint.send(FrameType.COMMAND, cmd.encode())
        log.add(tick, Node.ATTACKER, EventKind.FRAME_SENT, f"COMMAND ctr={frame.frame_counter}")
        return [frame]


class Uav:
    def __init__(self, config: ScenarioConfig, key: bytes):
        self.config = config
        self.endpoint = LinkEndpoint(config.uav_address, key, config.gcs_address)
        self.state = FailsafeState(policy=config.policy)
        self.kinematics = UavKinematics(config.home, config.speed_mps, config.home)

    def step(self, frames, tick: int, log: EventLog) -> list[SecureFrame]:
        inbox = _open_inbox(self.endpoint, frames, tick, Node.UAV, log)
        result = step_uav(self.state, self.kinematics, inbox, tick, self.config.tick_seconds)
        self.state, self.kinematics = result.state, result.kinematics
        for kind, detail in result.events:
            log.add(tick, Node.UAV, kind, detail)
        out = [self.endpoint.send(ft, payload) for ft, payload in result.outbound]
        if result.new_key is not None:
            self.endpoint.install_key(result.new_key)
        if tick % self.config.telemetry_every == 0:
            x, y = self.kinematics.position
            telemetry = Telemetry(x, y, self.state.mode.value)
            out.append(self.endpoint.send(FrameType.TELEMETRY, telemetry.encode()))
        for frame in out:
            log.add(tick, Node.UAV, EventKind.FRAME_SENT, f"{frame.frame_type.name} ctr={frame.frame_counter}")
        return out


class Link:
    """Delays wire images by a fixed number of ticks; delivery order is send order."""

    def __init__(self, delay: int):
        self.delay = delay
        self._queue: list[tuple[int, int, int, bytes]] = []
        self._seq = 0

    def send(self, frames, tick: int) -> None:
        for frame in frames:
            self._queue.append((tick + self.delay, self._seq, frame.dst, encode_frame(frame)))
            self._seq += 1

    def deliver(self, tick: int, dst: int) -> list[SecureFrame]:
        due = [item for item in self._queue if item[0] <= tick and item[2] == dst]
        self._queue = [item for item in self._queue if not (item[0] <= tick and item[2] == dst)]
        frames = []
        for _, _, _, wire in sorted(due):
            try:
                frames.append(decode_frame(wire))
            except FrameError:
                continue
        return frames


# --- running --------------------------------------------------------------------

@dataclass
class ScenarioResult:
    events: list[SimEvent]
    trajectory: list[tuple[int, float, float, str]]
    outcome: str
    initial_key: bytes = field(repr=False, default=b"")
    final_uav_key: bytes = field(repr=False, default=b"")
    gcs_telemetry: list[tuple[int, Telemetry]] = field(default_factory=list)

    @property
    def timed_out(self) -> bool:
        return self.outcome == EventKind.TIMEOUT.value

    def events_jsonl(self) -> str:
        return "".join(ev.to_json() + "\n" for ev in self.events)

    def trajectory_csv(self) -> str:
        rows = ["tick,x,y,mode"]
        rows += [f"{t},{x:.6f},{y:.6f},{mode}" for t, x, y, mode in self.trajectory]
        return "\n".join(rows) + "\n"

    def write(self, events_path: str | Path, trajectory_path: str | Path) -> None:
        Path(events_path).write_text(self.events_jsonl(), encoding="utf-8")
        Path(trajectory_path).write_text(self.trajectory_csv(), encoding="utf-8")


def _session_material(config: ScenarioConfig, pipeline: PipelineConfig) -> tuple[bytes, EegRecord]:
    if config.eeg_record_file:
        eeg = load_record(config.eeg_record_file)
    else:
        subject = config.seed("eeg_subject", 1)
        eeg = synthesize_beta(config.seed("eeg_session", 0), 4.0, tones=subject_tones(subject),
                              noise_std=0.5, subject_id=f"synthetic-{subject}")
    if config.enrollment_file:
        key = reproduce_key(eeg, EnrollmentRecord.load(config.enrollment_file))
    else:
        key, _ = enroll(eeg, pipeline, config.seed("enroll", 0))
    return key.bytes, eeg


def run_scenario(config: ScenarioConfig, pipeline: PipelineConfig | None = None) -> ScenarioResult:
    config.validate()
    pipeline = pipeline or PipelineConfig()
    key, eeg = _session_material(config, pipeline)

    log = EventLog()
    gcs = GroundStation(config, key, eeg, pipeline)
    uav = Uav(config, key)
    attacker = Attacker(config, key)
    link = Link(config.link_delay_ticks)
    trajectory = [(0, *uav.kinematics.position, uav.state.mode.value)]
    outcome = EventKind.TIMEOUT.value

    for tick in range(1, config.max_ticks + 1):
        link.send(gcs.step(link.deliver(tick, config.gcs_address), tick, log), tick)
        attacker.observe(log.events)
        link.send(attacker.step(tick, log), tick)
        before = len(log.events)
        link.send(uav.step(link.deliver(tick, config.uav_address), tick, log), tick)
        trajectory.append((tick, *uav.kinematics.position, uav.state.mode.value))
        finished = [ev for ev in log.events[before:] if ev.kind in TERMINAL_EVENTS]
        if finished:
            outcome = finished[0].kind.value
            break
    else:
        log.add(config.max_ticks, Node.UAV, EventKind.TIMEOUT, f"max_ticks={config.max_ticks}")

    return ScenarioResult(
        events=log.events,
        trajectory=trajectory,
        outcome=outcome,
        initial_key=key,
        final_uav_key=uav.endpoint.key,
        gcs_telemetry=gcs.telemetry,
    )


SCENARIO_DIR = Path(__file__).with_name("scenarios")


def builtin_scenario(name: str) -> ScenarioConfig:
    """Load one of the bundled scenario files ('A', 'B' or 'C')."""
    path = SCENARIO_DIR / f"scenario_{name.lower()}.json"
    if not path.exists():
        raise ScenarioError(f"no bundled scenario {name!r}")
    return ScenarioConfig.load(path)
