"""Three-phase voltage waveform records: data model, JSONL I/O, preprocessing."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

SAMPLES_PER_CYCLE = 256
TARGET_CYCLES = 16
MIN_CYCLES = 8
CHANNELS = ("va", "vb", "vc")


class EventLabel(str, enum.Enum):
    NORMAL = "normal"
    SAG = "sag"
    SWELL = "swell"
    INTERRUPTION = "interruption"
    TRANSIENT = "transient"
    HARMONICS = "harmonics"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, value):
        if value is None or isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown event label {value!r}") from None


@dataclass(frozen=True, eq=False)
class WaveformRecord:
    """One three-phase voltage capture.

    Channels are float64 arrays of ``samples_per_cycle * n_cycles`` samples,
    in volts before :func:`per_unit_scale` and per-unit afterwards.
    """

    id: str
    samples_per_cycle: int
    n_cycles: int
    va: np.ndarray
    vb: np.ndarray
    vc: np.ndarray
    label: Optional[EventLabel] = None
    base_peak: Optional[float] = None
    padded_from_cycles: Optional[int] = None

    def __post_init__(self):
        if self.samples_per_cycle <= 0 or self.n_cycles <= 0:
            raise ValueError(f"{self.id}: samples_per_cycle and n_cycles must be positive")
        n = self.samples_per_cycle * self.n_cycles
        for name in CHANNELS:
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1 or arr.shape[0] != n:
                raise ValueError(f"{self.id}: channel {name} has {arr.size} samples, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{self.id}: channel {name} contains non-finite samples")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "label", EventLabel.parse(self.label))
        if self.base_peak is not None and not self.base_peak > 0:
            raise ValueError(f"{self.id}: base_peak must be positive")

    @property
    def n_samples(self):
        return self.samples_per_cycle * self.n_cycles

    @property
    def channels(self):
        """(3, n_samples) view used by the autoencoder."""
        return np.stack([self.va, self.vb, self.vc])

    def __eq__(self, other):
        if not isinstance(other, WaveformRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.samples_per_cycle == other.samples_per_cycle
            and self.n_cycles == other.n_cycles
            and self.label == other.label
            and self.base_peak == other.base_peak
            and self.padded_from_cycles == other.padded_from_cycles
            and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in CHANNELS)
        )

    def to_dict(self):
        d = {
            "id": self.id,
            "samples_per_cycle": self.samples_per_cycle,
            "n_cycles": self.n_cycles,
            "label": None if self.label is None else self.label.value,
            "base_peak": self.base_peak,
            "va": self.va.tolist(),
            "vb": self.vb.tolist(),
            "vc": self.vc.tolist(),
        }
        if self.padded_from_cycles is not None:
            d["padded_from_cycles"] = self.padded_from_cycles
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=str(d["id"]),
            samples_per_cycle=int(d["samples_per_cycle"]),
            n_cycles=int(d["n_cycles"]),
            va=np.asarray(d["va"], dtype=np.float64),
            vb=np.asarray(d["vb"], dtype=np.float64),
            vc=np.asarray(d["vc"], dtype=np.float64),
            label=d.get("label"),
            base_peak=None if d.get("base_peak") is None else float(d["base_peak"]),
            padded_from_cycles=d.get("padded_from_cycles"),
        )


@dataclass
class Dataset:
    records: list = field(default_factory=list)
    split: Optional[tuple] = None  # (train_ids, val_ids, test_ids)

    def __post_init__(self):
        self.records = list(self.records)
        ids = self.ids
        if len(set(ids)) != len(ids):
            raise ValueError("dataset record ids must be unique")
        if self.split is not None:
            known = set(ids)
            seen = set()
            for part in self.split:
                for rid in part:
                    if rid not in known:
                        raise ValueError(f"split id {rid!r} is not in the dataset")
                    if rid in seen:
                        raise ValueError(f"split id {rid!r} appears twice")
                    seen.add(rid)
            self.split = tuple(list(p) for p in self.split)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def ids(self):
        return [r.id for r in self.records]

    @property
    def labels(self):
        return [r.label for r in self.records]

    def subset(self, ids):
        by_id = {r.id: r for r in self.records}
        return Dataset([by_id[i] for i in ids])

    def part(self, name):
        """Records of the 'train', 'val' or 'test' split, in split order."""
        if self.split is None:
            raise ValueError("dataset has no split")
        idx = {"train": 0, "val": 1, "test": 2}[name]
        return self.subset(self.split[idx])

    def tensor(self, dtype=np.float64):
        """Stacked (n, 3, n_samples) array of all records."""
        if not self.records:
            return np.zeros((0, 3, SAMPLES_PER_CYCLE * TARGET_CYCLES), dtype=dtype)
        return np.stack([r.channels for r in self.records]).astype(dtype, copy=False)


# --------------------------------------------------------------------------
# JSON Lines I/O

def write_jsonl(dataset: Dataset | Iterable[WaveformRecord], path):
    records = dataset.records if isinstance(dataset, Dataset) else list(dataset)
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), separators=(",", ":")))
            fh.write("\n")


def iter_jsonl(path):
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from None


def read_jsonl(path) -> Dataset:
    return Dataset([WaveformRecord.from_dict(d) for d in iter_jsonl(path)])


# --------------------------------------------------------------------------
# Preprocessing

def _with_channels(record, va, vb, vc, **changes):
    n_cycles = changes.pop("n_cycles", record.n_cycles)
    return replace(record, va=va, vb=vb, vc=vc, n_cycles=n_cycles, **changes)


def cycle_peaks(signal, samples_per_cycle):
    """Peak |v| of each whole cycle."""
    return np.abs(np.asarray(signal).reshape(-1, samples_per_cycle)).max(axis=1)


def per_unit_scale(record: WaveformRecord, base: Optional[float] = None) -> WaveformRecord:
    """Divide every channel by ``base``.

    Without an explicit base, the base is the median per-cycle peak of phase A,
    which ignores a minority of sagged or swollen cycles.  A record that already
    carries ``base_peak`` is treated as scaled and returned unchanged.
    """
    if record.n_samples == 0:
        raise ValueError("per_unit_scale: empty record")
    if base is None:
        if record.base_peak is not None:
            return record
        base = float(np.median(cycle_peaks(record.va, record.samples_per_cycle)))
        if not base > 0:
            raise ValueError("degenerate base")
    elif not base > 0:
        raise ValueError("per_unit_scale: base must be positive")
    base = float(base)
    return _with_channels(
        record, record.va / base, record.vb / base, record.vc / base, base_peak=base
    )


def zero_pad_to(record: WaveformRecord, target_cycles: int = TARGET_CYCLES) -> WaveformRecord:
    """Append zeros to every channel until the record is ``target_cycles`` long."""
    if record.n_cycles > target_cycles:
        raise ValueError(
            f"{record.id}: {record.n_cycles} cycles exceeds target {target_cycles}; "
            "records are never truncated"
        )
    origin = record.padded_from_cycles or record.n_cycles
    extra = (target_cycles - record.n_cycles) * record.samples_per_cycle
    if extra == 0:
        return replace(record, padded_from_cycles=origin)
    pad = np.zeros(extra)
    return _with_channels(
        record,
        np.concatenate([record.va, pad]),
        np.concatenate([record.vb, pad]),
        np.concatenate([record.vc, pad]),
        n_cycles=target_cycles,
        padded_from_cycles=origin,
    )


def filter_min_length(dataset: Dataset, min_cycles: int = MIN_CYCLES) -> Dataset:
    # a padded record keeps its original length for this test
    keep = [r for r in dataset if (r.padded_from_cycles or r.n_cycles) >= min_cycles]
    return Dataset(keep)


def preprocess(dataset: Dataset, min_cycles=MIN_CYCLES, target_cycles=TARGET_CYCLES,
               base: Optional[float] = None) -> Dataset:
    """filter -> per-unit -> pad, dropping records longer than the target."""
    out = []
    for r in filter_min_length(dataset, min_cycles):
        if r.n_cycles > target_cycles:
            raise ValueError(f"{r.id}: longer than {target_cycles} cycles")
        out.append(zero_pad_to(per_unit_scale(r, base), target_cycles))
    return Dataset(out)


def flatten(record: WaveformRecord) -> np.ndarray:
    """Channel-major vector [va | vb | vc] of a preprocessed record."""
    expected = SAMPLES_PER_CYCLE * TARGET_CYCLES
    if record.n_samples != expected:
        raise ValueError(f"flatten: expected {expected} samples per channel, got {record.n_samples}")
    return np.concatenate([record.va, record.vb, record.vc])


def unflatten(vector, template: WaveformRecord) -> WaveformRecord:
    v = np.asarray(vector, dtype=np.float64)
    n = template.n_samples
    if v.shape != (3 * n,):
        raise ValueError(f"unflatten: expected length {3 * n}, got {v.shape}")
    return _with_channels(template, v[:n], v[n:2 * n], v[2 * n:])


def split(dataset: Dataset, ratios: Sequence[float] = (0.70, 0.15, 0.15), seed: int = 0) -> Dataset:
    """Seeded shuffle then contiguous train/val/test cut.

    Part sizes are ``floor(ratio * n)``; the remainder goes to train.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three non-negative values summing to 1, got {ratios}")
    n = len(dataset)
    if n < 3:
        raise ValueError("split needs at least 3 records")
    # guard floor against representation error (0.7 * 30 = 20.999...)
    sizes = [int(math.floor(r * n + 1e-9)) for r in ratios]
    sizes[0] += n - sum(sizes)
    order = np.random.default_rng(seed).permutation(n)
    ids = [dataset.records[i].id for i in order]
    a, b = sizes[0], sizes[0] + sizes[1]
    return Dataset(dataset.records, split=(ids[:a], ids[a:b], ids[b:]))
