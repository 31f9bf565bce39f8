import numpy as np
import pytest

from tests.helpers import perturbed, subject_record
from neurokey.errors import AuthenticationError, ConfigError, RecordFormatError
from neurokey.fuzzy_extractor import extract_randomness, quantize
from neurokey.key_manager import (
    EnrollmentRecord,
    PipelineConfig,
    SessionKey,
    enroll,
    feature_levels,
    masked_features,
    reproduce_key,
    rotate_key,
    verify_key,
)


class TestEnroll:
    def test_deterministic(self, base_record):
        k1, r1 = enroll(base_record, PipelineConfig(), seed=7)
        k2, r2 = enroll(base_record, PipelineConfig(), seed=7)
        assert k1 == k2
        assert r1.to_bytes() == r2.to_bytes()

    def test_key_is_sixteen_bytes(self, enrolled):
        key, record = enrolled
        assert len(key.bytes) == 16
        assert len(record.selection_indices) * record.hash_keys[0].output_bits == 128

    def test_indices_strictly_increasing_and_in_range(self, enrolled):
        _, record = enrolled
        idx = record.selection_indices
        assert list(idx) == sorted(set(idx))
        assert 1 <= idx[0] and idx[-1] <= record.dimension

    def test_distinct_subjects_distinct_keys(self):
        keys = {enroll(subject_record(s), seed=s).__getitem__(0).bytes for s in range(100, 200)}
        assert len(keys) == 100

    def test_session_key_length_enforced(self):
        with pytest.raises(ValueError):
            SessionKey(b"short")

    def test_config_validation(self, base_record):
        with pytest.raises(ConfigError):
            enroll(base_record, PipelineConfig(q=3), seed=1)
        with pytest.raises(ConfigError):
            enroll(base_record, PipelineConfig(degree=12), seed=1)

    def test_concatenation_order(self, base_record, enrolled):
        key, record = enrolled
        w = masked_features(base_record, record.mask, record.params)
        pieces = []
        for j in record.selection_indices:
            q = quantize(w[j - 1], record.quantizer_bounds[j - 1], record.code)
            pieces.append(extract_randomness(q, record.hash_keys[j - 1]).value)
        as_int = int.from_bytes(key.bytes, "big")
        for pos, r in enumerate(pieces):
            assert (as_int >> (96 - 32 * pos)) & 0xFFFFFFFF == r


class TestReproduce:
    def test_exact_record(self, base_record, enrolled):
        key, record = enrolled
        assert reproduce_key(base_record, record) == key

    def test_small_noise(self, base_record, enrolled):
        key, record = enrolled
        base = np.array(feature_levels(base_record, record))
        sel = np.array(record.selection_indices) - 1
        for i in range(30):
            fresh = perturbed(base_record, i, 0.01)
            assert np.abs(np.array(feature_levels(fresh, record)) - base)[sel].max() <= record.code.t
            assert reproduce_key(fresh, record) == key

    def test_cross_subject_rejected(self):
        rejected = 0
        for s in range(20, 125):
            _, record = enroll(subject_record(s), seed=s)
            try:
                reproduce_key(subject_record(s + 500, session=1), record)
            except AuthenticationError:
                rejected += 1
        assert rejected == 105

    def test_round_trip_survives_serialization(self, base_record, enrolled, tmp_path):
        key, record = enrolled
        record.save(tmp_path / "e.nkey")
        loaded = EnrollmentRecord.load(tmp_path / "e.nkey")
        assert loaded.to_bytes() == record.to_bytes()
        assert reproduce_key(base_record, loaded) == key


class TestRotate:
    def test_hundred_rotations_distinct(self, base_record):
        keys = [rotate_key(base_record, seed=1000 + i)[0].bytes for i in range(100)]
        assert len(set(keys)) == 100

    def test_rotation_deterministic(self, base_record):
        a = rotate_key(base_record, seed=55)
        b = rotate_key(base_record, seed=55)
        assert a[0] == b[0] and a[1].to_bytes() == b[1].to_bytes()

    def test_old_key_fails_new_record(self, base_record, enrolled):
        old_key, _ = enrolled
        new_key, new_record = rotate_key(base_record, seed=8)
        assert verify_key(new_key, new_record)
        assert not verify_key(old_key, new_record)


class TestRecordFormat:
    def test_layout_and_magic(self, enrolled):
        _, record = enrolled
        blob = record.to_bytes()
        assert blob[:4] == b"NKEY" and blob[4] == 1

    def test_no_key_window_in_record(self, enrolled):
        key, record = enrolled
        blob = record.to_bytes()
        assert all(blob[i:i + 16] != key.bytes for i in range(len(blob) - 15))
        assert key.bytes not in blob

    @pytest.mark.parametrize("cut", [0, 3, 5, 40, -1])
    def test_truncated_record_rejected(self, enrolled, cut):
        blob = enrolled[1].to_bytes()
        with pytest.raises(RecordFormatError):
            EnrollmentRecord.from_bytes(blob[:cut])

    def test_bad_magic(self, enrolled):
        blob = bytearray(enrolled[1].to_bytes())
        blob[0] ^= 1
        with pytest.raises(RecordFormatError):
            EnrollmentRecord.from_bytes(bytes(blob))

    def test_fingerprint_is_public_tag_prefix(self, enrolled):
        _, record = enrolled
        assert record.fingerprint == record.key_check[:4].hex()
