"""Seeded generator of IEEE-1159-style three-phase PQ event waveforms.

Every record draws from its own PCG64 stream seeded by
``SeedSequence([seed, ordinal])``, so a record depends only on the global
seed and its position, never on how many records were generated before it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional

import numpy as np

from pqcluster.waveform_data import SAMPLES_PER_CYCLE, Dataset, EventLabel, WaveformRecord

PHASES = ("A", "B", "C")
PHASE_OFFSETS = (0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0)

SAG_RANGE = (0.1, 0.9)
SWELL_RANGE = (1.1, 1.8)
INTERRUPTION_MAX = 0.1
AMPLITUDE_RANGE = (0.95, 1.05)
TRANSIENT_FREQ_RANGE = (300.0, 1500.0)
TRANSIENT_TAU_RANGE = (3e-3, 12e-3)  # seconds
TRANSIENT_MAG_RANGE = (0.5, 1.5)
# captures are meter-triggered: events start shortly after the pre-trigger
ONSET_RANGE = (1.5, 3.5)  # cycles
PHASE_COUNT_WEIGHTS = (1 / 3, 1 / 3, 1 / 3)  # P(1, 2 or 3 phases affected)
HARMONIC_RANGES = {3: (0.06, 0.15), 5: (0.04, 0.10), 7: (0.02, 0.06)}


@dataclass(frozen=True)
class Transient:
    t0: float         # onset, seconds from record start
    freq: float       # Hz
    tau: float        # decay constant, seconds
    magnitude: float  # p.u.

    def __post_init__(self):
        lo, hi = TRANSIENT_FREQ_RANGE
        if not lo <= self.freq <= hi:
            raise ValueError(f"transient frequency {self.freq} outside [{lo}, {hi}] Hz")
        if self.tau <= 0:
            raise ValueError("transient decay must be positive")


@dataclass(frozen=True)
class EventParams:
    label: EventLabel
    alpha: float = 1.0
    start_cycle: float = 0.0
    end_cycle: float = 0.0
    phases_affected: FrozenSet[str] = frozenset(PHASES)
    transient: Optional[Transient] = None
    harmonics: Dict[int, float] = field(default_factory=dict)
    amplitude: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "label", EventLabel.parse(self.label))
        object.__setattr__(self, "phases_affected", frozenset(self.phases_affected))
        if not self.phases_affected <= set(PHASES):
            raise ValueError(f"unknown phases {set(self.phases_affected) - set(PHASES)}")
        if self.label is EventLabel.SAG and not SAG_RANGE[0] <= self.alpha < SAG_RANGE[1]:
            raise ValueError(f"sag alpha {self.alpha} outside [0.1, 0.9)")
        if self.label is EventLabel.SWELL and not SWELL_RANGE[0] < self.alpha <= SWELL_RANGE[1]:
            raise ValueError(f"swell alpha {self.alpha} outside (1.1, 1.8]")
        if self.label is EventLabel.INTERRUPTION and not 0 <= self.alpha < INTERRUPTION_MAX:
            raise ValueError(f"interruption alpha {self.alpha} must be < 0.1")
        if self.label in (EventLabel.SAG, EventLabel.SWELL, EventLabel.INTERRUPTION):
            if not 0 <= self.start_cycle < self.end_cycle:
                raise ValueError("event interval must satisfy 0 <= start < end")
        if any(h not in HARMONIC_RANGES for h in self.harmonics):
            raise ValueError("harmonic orders must be 3, 5 or 7")


@dataclass
class GenConfig:
    seed: int = 0
    f0: float = 60.0
    samples_per_cycle: int = SAMPLES_PER_CYCLE
    n_cycles: int = 16
    noise_std: float = 0.01
    class_mix: Dict[EventLabel, int] = field(default_factory=dict)
    short_fraction: float = 0.0  # share of records captured with 8 cycles

    def __post_init__(self):
        self.class_mix = {EventLabel.parse(k): int(v) for k, v in self.class_mix.items()}
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.f0 <= 0:
            raise ValueError("f0 must be > 0")
        if any(v < 0 for v in self.class_mix.values()):
            raise ValueError("class counts must be >= 0")
        if self.n_cycles not in (8, 16):
            raise ValueError("n_cycles must be 8 or 16")
        if not 0 <= self.short_fraction <= 1:
            raise ValueError("short_fraction must lie in [0, 1]")

    @classmethod
    def balanced(cls, count_per_class, **kw):
        return cls(class_mix={lab: count_per_class for lab in EventLabel}, **kw)


def record_rng(seed, ordinal):
    """Independent generator for record ``ordinal`` under global ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), ordinal])))


def gen_waveform(params: EventParams, cfg: GenConfig, n_cycles, rng=None):
    """Return the (3, n) p.u. sample array for ``params``."""
    spc = cfg.samples_per_cycle
    n = spc * n_cycles
    t = np.arange(n) / (spc * cfg.f0)
    cyc = np.arange(n) / spc
    in_event = (cyc >= params.start_cycle) & (cyc < params.end_cycle)
    out = np.empty((3, n))
    for p, (name, phi) in enumerate(zip(PHASES, PHASE_OFFSETS)):
        theta = 2.0 * math.pi * cfg.f0 * t + phi
        affected = name in params.phases_affected
        m = np.where(in_event, params.alpha, 1.0) if affected else 1.0
        v = params.amplitude[p] * m * np.sin(theta)
        for h, mag in sorted(params.harmonics.items()):
            v = v + mag * np.sin(h * theta)
        tr = params.transient
        if tr is not None and affected:
            dt = t - tr.t0
            on = dt >= 0
            v = v + np.where(on, tr.magnitude * np.exp(-np.where(on, dt, 0.0) / tr.tau)
                             * np.sin(2.0 * math.pi * tr.freq * dt), 0.0)
        out[p] = v
    if cfg.noise_std > 0:
        if rng is None:
            raise ValueError("noise requested but no rng given")
        out += rng.normal(0.0, cfg.noise_std, size=out.shape)
    return out


def gen_record(params: EventParams, cfg: GenConfig, rng=None, record_id="rec", n_cycles=None):
    n_cycles = cfg.n_cycles if n_cycles is None else n_cycles
    if params.end_cycle > n_cycles:
        raise ValueError("event ends after the record")
    w = gen_waveform(params, cfg, n_cycles, rng)
    return WaveformRecord(
        id=record_id,
        samples_per_cycle=cfg.samples_per_cycle,
        n_cycles=n_cycles,
        va=w[0], vb=w[1], vc=w[2],
        label=params.label,
    )


def _random_phases(rng):
    k = int(rng.choice([1, 2, 3], p=PHASE_COUNT_WEIGHTS))
    return frozenset(rng.choice(PHASES, size=k, replace=False).tolist())


def _interval(rng, n_cycles):
    # touch fewer than half the cycles so the median cycle peak stays nominal
    longest = min(8.0, n_cycles / 2.0 - 2.0)
    dur = rng.uniform(1.0, max(longest, 1.0))
    start = min(rng.uniform(*ONSET_RANGE), n_cycles - dur)
    return start, start + dur


def draw_params(label: EventLabel, rng, n_cycles, f0=60.0) -> EventParams:
    """Sample event parameters uniformly within the class bounds."""
    label = EventLabel.parse(label)
    amp = tuple(rng.uniform(*AMPLITUDE_RANGE, size=3).tolist())
    kw = {"label": label, "amplitude": amp}
    if label in (EventLabel.SAG, EventLabel.SWELL, EventLabel.INTERRUPTION):
        if label is EventLabel.SAG:
            alpha = rng.uniform(*SAG_RANGE)
        elif label is EventLabel.SWELL:
            alpha = rng.uniform(*SWELL_RANGE)
            if alpha <= SWELL_RANGE[0]:
                alpha = SWELL_RANGE[1]
        else:
            alpha = rng.uniform(0.0, INTERRUPTION_MAX)
        start, end = _interval(rng, n_cycles)
        kw.update(alpha=alpha, start_cycle=start, end_cycle=end, phases_affected=_random_phases(rng))
    elif label is EventLabel.TRANSIENT:
        t0 = rng.uniform(*ONSET_RANGE) / f0
        kw.update(
            phases_affected=_random_phases(rng),
            transient=Transient(
                t0=t0,
                freq=rng.uniform(*TRANSIENT_FREQ_RANGE),
                tau=rng.uniform(*TRANSIENT_TAU_RANGE),
                magnitude=rng.uniform(*TRANSIENT_MAG_RANGE),
            ),
        )
    elif label is EventLabel.HARMONICS:
        kw["harmonics"] = {h: rng.uniform(lo, hi) for h, (lo, hi) in HARMONIC_RANGES.items()}
    return EventParams(**kw)


def gen_dataset(cfg: GenConfig) -> Dataset:
    """Generate ``cfg.class_mix`` records, ordered by label then ordinal."""
    total = sum(cfg.class_mix.values())
    if total < 1:
        raise ValueError("class_mix must request at least one record")
    records = []
    ordinal = 0
    for label in EventLabel:
        for _ in range(cfg.class_mix.get(label, 0)):
            rng = record_rng(cfg.seed, ordinal)
            n_cycles = 8 if rng.random() < cfg.short_fraction else cfg.n_cycles
            params = draw_params(label, rng, n_cycles, cfg.f0)
            records.append(gen_record(params, cfg, rng, f"rec-{ordinal:06d}", n_cycles))
            ordinal += 1
    return Dataset(records)
