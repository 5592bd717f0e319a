import numpy as np
import pytest

from ssvepmaze import eegio
from ssvepmaze.eegio import (
    DatasetSplit,
    EegRecording,
    LabeledExample,
    RecordingFormatError,
    TrialMarker,
    label_of_frequency,
    read_recording,
    split_dataset,
    write_recording,
)


def make_recording(n_samples=1024, n_channels=1, trials=None, fs=256):
    rng = np.random.default_rng(1)
    data = rng.standard_normal((n_samples, n_channels))
    labels = ["Oz", "O1", "O2", "Pz"][:n_channels]
    return EegRecording(fs_hz=fs, channel_labels=labels, data=data,
                        trials=trials or [])


class TestRecordingRoundTrip:
    def test_field_echo(self, tmp_path):
        rec = make_recording(trials=[TrialMarker(0, 512, 9.25)])
        p = tmp_path / "a.rec"
        write_recording(rec, p)
        r2 = read_recording(p)
        assert r2.fs_hz == 256
        assert r2.n_samples == 1024
        assert r2.channel_labels == ["Oz"]
        assert len(r2.trials) == 1

    def test_bitwise_round_trip(self, tmp_path):
        rec = make_recording(trials=[TrialMarker(0, 100, 9.25),
                                     TrialMarker(100, 924, 13.25)])
        p = tmp_path / "a.rec"
        write_recording(rec, p)
        r2 = read_recording(p)
        assert np.array_equal(r2.data, rec.data)
        assert r2.trials == rec.trials

    def test_two_channels_interleaved(self, tmp_path):
        rec = make_recording(n_channels=2)
        p = tmp_path / "a.rec"
        write_recording(rec, p)
        r2 = read_recording(p)
        assert r2.n_channels == 2
        assert np.array_equal(r2.data, rec.data)
        # format is time-major: sample 0 channel 1 precedes sample 1 channel 0
        raw = p.read_bytes()
        off = 16 + 2 * 8 + 12
        flat = np.frombuffer(raw, dtype="<f8", offset=off)
        assert flat[1] == rec.data[0, 1]

    def test_empty_trials(self, tmp_path):
        p = tmp_path / "a.rec"
        write_recording(make_recording(), p)
        assert read_recording(p).trials == []

    def test_marker_out_of_bounds(self):
        with pytest.raises(ValueError, match="out of bounds"):
            make_recording(trials=[TrialMarker(512, 1024, 9.25)])

    def test_marker_out_of_bounds_in_file(self, tmp_path):
        rec = make_recording(trials=[TrialMarker(0, 1024, 9.25)])
        p = tmp_path / "a.rec"
        write_recording(rec, p)
        raw = bytearray(p.read_bytes())
        # bump the trial length field past the sample count
        import struct
        struct.pack_into("<Q", raw, 16 + 8 + 12 + 8, 2048)
        p.write_bytes(bytes(raw))
        with pytest.raises(RecordingFormatError, match="out of bounds"):
            read_recording(p)

    def test_non_finite_sample_rejected(self):
        data = np.zeros((16, 1))
        data[3, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            EegRecording(fs_hz=256, channel_labels=["Oz"], data=data)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "a.rec"
        p.write_bytes(b"NOTAMAGI" + b"\x00" * 64)
        with pytest.raises(RecordingFormatError, match="magic"):
            read_recording(p)

    def test_truncated_payload(self, tmp_path):
        rec = make_recording()
        p = tmp_path / "a.rec"
        write_recording(rec, p)
        p.write_bytes(p.read_bytes()[:-16])
        with pytest.raises(RecordingFormatError, match="truncated"):
            read_recording(p)


class TestLabelOfFrequency:
    def test_lowest(self):
        assert label_of_frequency(9.25, [9.25, 11.25, 13.25]) == 0

    def test_highest(self):
        assert label_of_frequency(13.25, [9.25, 11.25, 13.25]) == 2

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown"):
            label_of_frequency(10.0, [9.25, 11.25, 13.25])

    def test_indexing_by_ascending_frequency(self):
        assert label_of_frequency(11.25, [13.25, 9.25, 11.25]) == 1


def fake_examples(counts):
    out = []
    for c, n in enumerate(counts):
        out.extend(LabeledExample(features=np.zeros(3), class_index=c)
                   for _ in range(n))
    return out


class TestSplitDataset:
    def test_7650_gives_6120_1530(self):
        split = split_dataset(fake_examples([2550, 2550, 2550]), 0.8, 0)
        assert len(split.train) == 6120
        assert len(split.test) == 1530

    def test_deterministic(self):
        ex = fake_examples([20, 20, 20])
        a = split_dataset(ex, 0.8, 7)
        b = split_dataset(ex, 0.8, 7)
        assert [id(e) for e in a.train] == [id(e) for e in b.train]
        assert [id(e) for e in a.test] == [id(e) for e in b.test]

    def test_stratified_30(self):
        split = split_dataset(fake_examples([10, 10, 10]), 0.8, 3)
        for c in range(3):
            assert sum(e.class_index == c for e in split.train) == 8
            assert sum(e.class_index == c for e in split.test) == 2

    def test_disjoint_and_complete(self):
        ex = fake_examples([13, 9, 21])
        split = split_dataset(ex, 0.7, 5)
        ids_train = {id(e) for e in split.train}
        ids_test = {id(e) for e in split.test}
        assert not ids_train & ids_test
        assert len(ids_train | ids_test) == len(ex)

    def test_stratification_bound(self):
        ex = fake_examples([50, 30, 20])
        split = split_dataset(ex, 0.8, 11)
        n_all, n_train = len(ex), len(split.train)
        for c in range(3):
            p_train = sum(e.class_index == c for e in split.train) / n_train
            p_all = sum(e.class_index == c for e in ex) / n_all
            assert abs(p_train - p_all) <= 1.0 / n_train + 1e-12

    def test_tiny_class_rejected(self):
        with pytest.raises(ValueError, match="fewer than 2"):
            split_dataset(fake_examples([5, 1]), 0.8, 0)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            split_dataset(fake_examples([4, 4]), 1.0, 0)
