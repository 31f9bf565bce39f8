"""Synthetic subjects shared by the test modules."""
import numpy as np
from neurokey.eeg_signal import EegRecord, subject_tones, synthesize_beta

DURATION_S = 4.0


def subject_record(subject: int, session: int = 0, noise_std: float = 0.5) -> EegRecord:
    return synthesize_beta(
        seed=1000 * subject + session,
        duration_s=DURATION_S,
        tones=subject_tones(subject),
        noise_std=noise_std,
        subject_id=f"subject-{subject}",
        task_label="arithmetic",
    )


def perturbed(record: EegRecord, seed: int, std: float) -> EegRecord:
    """Same reading plus fresh gaussian noise, as a later session would look."""
    noise = np.random.default_rng(seed).normal(0.0, std, len(record))
    return EegRecord(record.samples + noise, record.sample_rate_hz, record.subject_id, record.task_label)
