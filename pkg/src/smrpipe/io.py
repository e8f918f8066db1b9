"""EPB1 epoch-file format and montage channel selection.

File layout (all integers little-endian):

    magic "EPB1"
    u16  version (= 1)
    u16  subject_id
    u32  n_epochs
    u16  n_channels
    u32  n_samples
    f64  sample_rate_hz
    u16  name_count, then per name: u16 byte length + UTF-8 bytes
    u8   label per epoch (0=left, 1=right, 2=rest)
    f64  samples, epoch-major then channel-major

The float payload is written verbatim from the in-memory matrices, so a
write/read round trip is bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model import (ClassLabel, Epoch, PipelineError, Provenance,
                    SubjectDataset)

MAGIC = b"EPB1"
VERSION = 1

# Sensorimotor montage used when reducing a full recording to the motor
# cortex strip. The exact electrode set is configurable everywhere.
DEFAULT_MOTOR_CHANNELS = (
    "FC3", "FC4", "C1", "C2", "C3", "C4", "Cz", "CP3", "CP4", "CPz",
)


class BadMagic(PipelineError):
    pass


class TruncatedPayload(PipelineError):
    pass


class LabelOutOfRange(PipelineError):
    pass


class ShapeMismatch(PipelineError):
    pass


class UnknownChannel(PipelineError):
    pass


class IoFailure(PipelineError):
    pass


@dataclass(frozen=True)
class EpochFileHeader:
    version: int
    subject_id: int
    n_epochs: int
    n_channels: int
    n_samples: int
    sample_rate_hz: float
    channel_names: tuple[str, ...]
    labels: tuple[int, ...]


@dataclass(frozen=True)
class ChannelSelection:
    """Ordered montage labels to keep, resolved against a channel table.

    Always exactly 10 labels: the pipeline's channel-reduction contract.
    """

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if len(set(names)) != len(names):
            raise ValueError("duplicate channel names in selection")
        if len(names) != 10:
            raise ValueError(f"selection must hold 10 names, got {len(names)}")
        object.__setattr__(self, "names", names)

    def resolve(self, channel_names: tuple[str, ...]) -> list[int]:
        table = {name: i for i, name in enumerate(channel_names)}
        indices = []
        for name in self.names:
            if name not in table:
                raise UnknownChannel(f"channel {name!r} not in recording")
            indices.append(table[name])
        return indices


def default_selection() -> ChannelSelection:
    return ChannelSelection(DEFAULT_MOTOR_CHANNELS)


def select_channels(dataset: SubjectDataset,
                    selection: ChannelSelection) -> SubjectDataset:
    """Reduce every epoch to the selected channels, in selection order."""
    indices = selection.resolve(dataset.channel_names)
    out = []
    for e in dataset.epochs:
        out.append(Epoch(e.subject_id, e.label, e.data[indices, :],
                         e.sample_rate_hz, selection.names))
    return dataset.with_epochs(out)


_FIXED_HEADER = struct.Struct("<4sHHIHId")


def write_epoch_file(dataset: SubjectDataset, path) -> None:
    """Serialize a dataset to the EPB1 layout. Deterministic byte-for-byte."""
    if dataset.subject_id > 0xFFFF:
        raise IoFailure(f"subject id {dataset.subject_id} exceeds u16")
    parts = [_FIXED_HEADER.pack(MAGIC, VERSION, dataset.subject_id,
                                dataset.n_epochs, dataset.n_channels,
                                dataset.n_samples, dataset.sample_rate_hz)]
    parts.append(struct.pack("<H", len(dataset.channel_names)))
    for name in dataset.channel_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(bytes(int(e.label) for e in dataset.epochs))
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
            for e in dataset.epochs:
                fh.write(np.ascontiguousarray(e.data, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


class _Cursor:
    """Bounds-checked reader over the file bytes."""

    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedPayload(
                f"{self.path}: need {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct("<" + fmt)
        return s.unpack(self.take(s.size))

    def remaining(self) -> int:
        return len(self.buf) - self.pos


def read_header(path) -> EpochFileHeader:
    """Parse and validate the header of an EPB1 file."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return _parse(buf, path)[0]


def _parse(buf: bytes, path) -> tuple[EpochFileHeader, np.ndarray]:
    cur = _Cursor(buf, path)
    magic = cur.take(4)
    if magic != MAGIC:
        raise BadMagic(f"{path}: magic {magic!r}, expected {MAGIC!r}")
    (version, subject_id, n_epochs, n_channels,
     n_samples) = cur.unpack("HHIHI")
    if version != VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    (rate,) = cur.unpack("d")
    if not (rate > 0 and np.isfinite(rate)):
        raise ShapeMismatch(f"{path}: bad sample rate {rate}")
    (name_count,) = cur.unpack("H")
    if name_count != n_channels:
        raise ShapeMismatch(
            f"{path}: {name_count} channel names for {n_channels} channels")
    names = []
    for _ in range(name_count):
        (length,) = cur.unpack("H")
        names.append(cur.take(length).decode("utf-8"))
    labels = np.frombuffer(cur.take(n_epochs), dtype=np.uint8)
    if labels.size and labels.max(initial=0) > max(int(c) for c in ClassLabel):
        bad = int(labels.max())
        raise LabelOutOfRange(f"{path}: label {bad} out of range")
    payload_len = n_epochs * n_channels * n_samples * 8
    raw = cur.take(payload_len)
    if cur.pos != len(buf):
        raise ShapeMismatch(
            f"{path}: {len(buf) - cur.pos} trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f8").reshape(n_epochs, n_channels,
                                                   n_samples)
    header = EpochFileHeader(version, subject_id, n_epochs, n_channels,
                             n_samples, rate, tuple(names),
                             tuple(int(x) for x in labels))
    return header, data


def read_epoch_file(path, provenance: Provenance = Provenance.REAL
                    ) -> SubjectDataset:
    """Load an EPB1 file into a validated SubjectDataset."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    header, data = _parse(buf, path)
    if header.n_epochs == 0:
        raise ShapeMismatch(f"{path}: file holds zero epochs")
    epochs = []
    for i in range(header.n_epochs):
        epochs.append(Epoch(header.subject_id, ClassLabel(header.labels[i]),
                            data[i], header.sample_rate_hz,
                            header.channel_names))
    return SubjectDataset(header.subject_id, tuple(epochs), provenance)
