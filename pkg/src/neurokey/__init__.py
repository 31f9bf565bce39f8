"""EEG-derived session keys for a UAV control link, with a failsafe simulator."""

from .eeg_signal import EegRecord, extract_beta, load_record, synthesize_beta
from .key_manager import EnrollmentRecord, PipelineConfig, SessionKey, enroll, reproduce_key, rotate_key
from .mission_failsafe import ScenarioConfig, run_scenario

__version__ = "0.1.0"

__all__ = [
    "EegRecord",
    "EnrollmentRecord",
    "PipelineConfig",
    "ScenarioConfig",
    "SessionKey",
    "enroll",
    "extract_beta",
    "load_record",
    "reproduce_key",
    "rotate_key",
    "run_scenario",
    "synthesize_beta",
]
