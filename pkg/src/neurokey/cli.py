"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 authentication failure,
3 scenario timeout.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bch import parse_code_spec
from .eeg_signal import load_record
from .errors import (
    AuthenticationError,
    BadMic,
    FrameError,
    NeurokeyError,
    Replay,
    ScenarioError,
)
from .key_manager import EnrollmentRecord, PipelineConfig, enroll, reproduce_key
from .mission_failsafe import ScenarioConfig, run_scenario
from .secure_link import FrameType, decode_frame, open_frame

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_AUTH = 2
EXIT_TIMEOUT = 3

log = logging.getLogger("neurokey")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _hex_bytes(text: str) -> bytes:
    try:
        return bytes.fromhex(text.replace(" ", "").replace(":", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex string: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neurokey", description="EEG-derived link keys and UAV failsafe simulation")
    parser.add_argument("--timestamps", dest="timestamps", action="store_true",
                        help="prefix diagnostics with wall-clock timestamps")
    parser.add_argument("--no-timestamps", dest="timestamps", action="store_false")
    parser.set_defaults(timestamps=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("enroll", help="derive a key and write the public enrollment record")
    p.add_argument("--eeg", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", required=True, type=_u64)
    p.add_argument("--degree", type=int, default=8)
    p.add_argument("--c", type=float, default=100.0)
    p.add_argument("--theta", type=float, default=4.0)
    p.add_argument("--code", default="127,64")
    p.add_argument("--window", type=float, default=2.0, help="window length T in seconds")
    p.add_argument("--amplitude", type=float, default=10.0, help="amplitude multiplier A")
    p.add_argument("--emit-key-hex", action="store_true", help="print the raw key (testing only)")

    p = sub.add_parser("reproduce", help="re-derive the key from a fresh recording")
    p.add_argument("--eeg", required=True, type=Path)
    p.add_argument("--enrollment", required=True, type=Path)
    p.add_argument("--emit-key-hex", action="store_true", help="print the raw key (testing only)")

    p = sub.add_parser("simulate", help="run a failsafe scenario")
    p.add_argument("--scenario", required=True, type=Path)
    p.add_argument("--events", required=True, type=Path)
    p.add_argument("--trajectory", required=True, type=Path)

    p = sub.add_parser("frame", help="decode (and optionally open) a wire frame")
    p.add_argument("--bytes", dest="wire", required=True, type=_hex_bytes)
    p.add_argument("--key", type=_hex_bytes)
    p.add_argument("--peer", type=lambda s: int(s, 0), default=0x0001,
                   help="address the receiver trusts (default 0x0001)")
    return parser


def _require_file(path: Path) -> None:
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")


def cmd_enroll(args) -> int:
    _require_file(args.eeg)
    try:
        config = PipelineConfig(
            degree=args.degree, c=args.c, theta=args.theta, code=parse_code_spec(args.code),
            window_seconds=args.window, amplitude_multiplier=args.amplitude,
        )
        config.validate()
    except NeurokeyError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_USAGE
    record = load_record(args.eeg)
    try:
        key, enrollment = enroll(record, config, args.seed)
    except NeurokeyError as exc:
        log.error("enrollment failed: %s", exc)
        return EXIT_AUTH
    enrollment.save(args.out)
    print(f"fingerprint {enrollment.fingerprint}")
    if args.emit_key_hex:
        print(key.hex())
    return EXIT_OK


def cmd_reproduce(args) -> int:
    _require_file(args.eeg)
    _require_file(args.enrollment)
    enrollment = EnrollmentRecord.load(args.enrollment)
    record = load_record(args.eeg)
    try:
        key = reproduce_key(record, enrollment)
    except AuthenticationError as exc:
        log.error("authentication failed: %s", exc)
        return EXIT_AUTH
    except NeurokeyError as exc:
        log.error("reproduction failed: %s", exc)
        return EXIT_AUTH
    print(f"fingerprint {enrollment.fingerprint}")
    if args.emit_key_hex:
        print(key.hex())
    return EXIT_OK


def cmd_simulate(args) -> int:
    _require_file(args.scenario)
    config = ScenarioConfig.load(args.scenario)
    result = run_scenario(config)
    result.write(args.events, args.trajectory)
    print(f"outcome {result.outcome} after {result.trajectory[-1][0]} ticks")
    if result.timed_out:
        log.error("scenario timed out after %d ticks", config.max_ticks)
        return EXIT_TIMEOUT
    return EXIT_OK


def cmd_frame(args) -> int:
    try:
        frame = decode_frame(args.wire)
    except FrameError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_USAGE
    print(f"type {FrameType(frame.frame_type).name}")
    print(f"src {frame.src:#06x}")
    print(f"dst {frame.dst:#06x}")
    print(f"counter {frame.frame_counter}")
    print(f"ciphertext {frame.ciphertext.hex()}")
    print(f"mic {frame.mic.hex()}")
    if args.key is None:
        return EXIT_OK
    if len(args.key) != 16:
        log.error("key must be 16 bytes (32 hex characters)")
        return EXIT_USAGE
    try:
        plaintext, verdict = open_frame(frame, args.key, args.peer)
    except (BadMic, Replay) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_AUTH
    print(f"plaintext {plaintext.decode('utf-8', errors='backslashreplace')}")
    print(f"plaintext_hex {plaintext.hex()}")
    print(f"verdict {verdict.value}")
    return EXIT_OK


_COMMANDS = {
    "enroll": cmd_enroll,
    "reproduce": cmd_reproduce,
    "simulate": cmd_simulate,
    "frame": cmd_frame,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    fmt = "%(asctime)s %(levelname)s %(message)s" if args.timestamps else "%(levelname)s %(message)s"
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(fmt))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.INFO)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except ScenarioError as exc:
        log.error("bad scenario: %s", exc)
        return EXIT_USAGE
    except NeurokeyError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
