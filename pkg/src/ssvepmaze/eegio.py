"""EEG recording container, binary file format, labels, and dataset splits.

Recording file layout (little-endian throughout):

    magic   8 bytes  b"SSVEPREC"
    version u16      currently 1
    fs_hz   u32
    n_chan  u16
    labels  n_chan * 8 bytes ASCII, space-padded
    n_samp  u64
    n_trial u32
    trials  n_trial * (u64 onset, u64 length, f64 stim_freq_hz)
    data    n_samp * n_chan f64, time-major channel-interleaved

Splits use numpy's PCG64 generator seeded directly, so a (seed, example
order) pair reproduces the same split everywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SSVEPREC"
VERSION = 1

DEFAULT_CLASS_FREQS = (9.25, 11.25, 13.25)


class RecordingFormatError(ValueError):
    """Malformed canonical recording file."""


@dataclass(frozen=True)
class TrialMarker:
    onset_sample: int
    length_samples: int
    stim_freq_hz: float

    def __post_init__(self):
        if self.onset_sample < 0:
            raise ValueError(f"negative trial onset {self.onset_sample}")
        if self.length_samples <= 0:
            raise ValueError(f"non-positive trial length {self.length_samples}")


@dataclass
class EegRecording:
    fs_hz: int
    channel_labels: list[str]
    data: np.ndarray  # [n_samples, n_channels], microvolts
    trials: list[TrialMarker] = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if self.fs_hz <= 0:
            raise ValueError(f"fs_hz must be positive, got {self.fs_hz}")
        if self.data.shape[1] != len(self.channel_labels):
            raise ValueError(
                f"data has {self.data.shape[1]} channels but "
                f"{len(self.channel_labels)} labels given"
            )
        if self.data.shape[1] < 1:
            raise ValueError("need at least one channel")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite sample in recording data")
        for t in self.trials:
            if t.onset_sample + t.length_samples > self.n_samples:
                raise ValueError(
                    f"marker out of bounds: onset {t.onset_sample} + length "
                    f"{t.length_samples} exceeds {self.n_samples} samples"
                )

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def channel(self, label: str) -> np.ndarray:
        try:
            idx = self.channel_labels.index(label)
        except ValueError:
            raise KeyError(f"no channel named {label!r}") from None
        return self.data[:, idx]


def write_recording(rec: EegRecording, path) -> None:
    """Write a recording in the canonical binary format."""
    labels = []
    for lab in rec.channel_labels:
        enc = lab.encode("ascii")
        if len(enc) > 8:
            raise ValueError(f"channel label {lab!r} longer than 8 bytes")
        labels.append(enc.ljust(8))
    header = MAGIC + struct.pack("<HIH", VERSION, rec.fs_hz, rec.n_channels)
    body = bytearray(header)
    for enc in labels:
        body += enc
    body += struct.pack("<QI", rec.n_samples, len(rec.trials))
    for t in rec.trials:
        body += struct.pack("<QQd", t.onset_sample, t.length_samples, t.stim_freq_hz)
    body += np.ascontiguousarray(rec.data, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def read_recording(path) -> EegRecording:
    """Read a canonical recording file; validates all invariants."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise RecordingFormatError("bad magic: not a canonical recording file")
    version, fs_hz, n_chan = struct.unpack_from("<HIH", raw, 8)
    if version != VERSION:
        raise RecordingFormatError(f"unsupported version {version}")
    off = 16
    labels = []
    for _ in range(n_chan):
        if off + 8 > len(raw):
            raise RecordingFormatError("truncated channel label table")
        labels.append(raw[off : off + 8].decode("ascii").rstrip(" "))
        off += 8
    if off + 12 > len(raw):
        raise RecordingFormatError("truncated header")
    n_samp, n_trial = struct.unpack_from("<QI", raw, off)
    off += 12
    trials = []
    for _ in range(n_trial):
        if off + 24 > len(raw):
            raise RecordingFormatError("truncated trial table")
        onset, length, freq = struct.unpack_from("<QQd", raw, off)
        off += 24
        if onset + length > n_samp:
            raise RecordingFormatError(
                f"marker out of bounds: onset {onset} + length {length} "
                f"exceeds {n_samp} samples"
            )
        trials.append(TrialMarker(onset, length, freq))
    expect = n_samp * n_chan * 8
    if len(raw) - off < expect:
        raise RecordingFormatError("truncated sample payload")
    data = np.frombuffer(raw, dtype="<f8", count=n_samp * n_chan, offset=off)
    data = data.reshape(n_samp, n_chan).copy()
    if not np.all(np.isfinite(data)):
        raise RecordingFormatError("non-finite sample in payload")
    return EegRecording(fs_hz=fs_hz, channel_labels=labels, data=data, trials=trials)


@dataclass(frozen=True)
class LabeledExample:
    features: "object"  # dsp.FeatureVector; kept loose to avoid an import cycle
    class_index: int


@dataclass
class DatasetSplit:
    train: list[LabeledExample]
    test: list[LabeledExample]
    seed: int


def label_of_frequency(f: float, class_freqs) -> int:
    """Map a stimulus frequency to its class index.

    Classes are indexed by ascending frequency: with the default set,
    9.25 Hz -> 0, 11.25 Hz -> 1, 13.25 Hz -> 2.
    """
    ordered = sorted(class_freqs)
    for i, cf in enumerate(ordered):
        if abs(f - cf) <= 1e-9:
            return i
    raise ValueError(f"unknown stimulus frequency {f} Hz (classes: {ordered})")


def split_dataset(examples, train_fraction: float, seed: int) -> DatasetSplit:
    """Stratified deterministic train/test split.

    Per class, a PCG64(seed)-shuffled permutation is cut at
    round(n_class * train_fraction), so class proportions are preserved
    within one example.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0,1), got {train_fraction}")
    if not examples:
        raise ValueError("empty example list")
    by_class: dict[int, list[int]] = {}
    for i, ex in enumerate(examples):
        by_class.setdefault(ex.class_index, []).append(i)
    rng = np.random.Generator(np.random.PCG64(seed))
    train_idx: list[int] = []
    test_idx: list[int] = []
    for c in sorted(by_class):
        idx = np.asarray(by_class[c])
        if idx.size < 2:
            raise ValueError(f"class {c} has fewer than 2 examples")
        perm = rng.permutation(idx.size)
        n_train = int(round(idx.size * train_fraction))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_idx.extend(idx[perm[:n_train]].tolist())
        test_idx.extend(idx[perm[n_train:]].tolist())
    train_idx.sort()
    test_idx.sort()
    return DatasetSplit(
        train=[examples[i] for i in train_idx],
        test=[examples[i] for i in test_idx],
        seed=seed,
    )
