"""Forward simulation of the experiment into detector time-tag streams."""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .belltest import optimal_settings
from .optics import OFFSETS, CouplerRatios, joint_distribution
from .quantum_core import PhaseVector

CHANNELS = ("A0", "A1", "A2", "B0", "B1", "B2")
CHANNEL_INDEX = {name: i for i, name in enumerate(CHANNELS)}
PS_PER_S = 1e12
THREADS_ENV = "QUTRIT_BELL_THREADS"


@dataclass(frozen=True)
class ScanStep:
    theta: float
    alice: PhaseVector
    bob: PhaseVector


def scan_schedule(
    n_steps: int,
    theta_max: float = 2 * math.pi,
    bob: PhaseVector | None = None,
    long_ratio: float = 2.0,
) -> tuple[ScanStep, ...]:
    """Evenly spaced scan of Alice's phases (theta, long_ratio * theta); Bob is fixed.

    ``long_ratio`` other than 2 breaks the phase lock on purpose.
    """
    if int(n_steps) != n_steps or n_steps < 2:
        raise ValueError(f"n_steps must be an integer >= 2, got {n_steps!r}")
    if not math.isfinite(theta_max) or theta_max <= 0:
        raise ValueError(f"theta_max must be positive and finite, got {theta_max!r}")
    bob = bob if bob is not None else optimal_settings().B1
    return tuple(
        ScanStep(float(t), PhaseVector(float(t), float(long_ratio * t)), bob)
        for t in np.linspace(0.0, theta_max, int(n_steps))
    )


@dataclass(frozen=True)
class SimConfig:
    """Physical and run parameters.  Times in picoseconds, rates per second."""

    pair_rate: float = 1e4
    duration_per_step: float = 10.0
    delta_tau: float = 1200.0
    jitter_sigma: float = 100.0
    efficiency_A: float = 0.1
    efficiency_B: float = 0.1
    dark_rate_per_detector: float = 100.0
    lambda_true: float = 1.0
    couplers_A: CouplerRatios | tuple[CouplerRatios, CouplerRatios] = field(default_factory=CouplerRatios)
    couplers_B: CouplerRatios | tuple[CouplerRatios, CouplerRatios] = field(default_factory=CouplerRatios)
    scan: tuple[ScanStep, ...] = field(default_factory=lambda: scan_schedule(24, 2 * math.pi))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scan", tuple(self.scan))
        self.validate()

    def validate(self) -> None:
        for name in ("pair_rate", "dark_rate_per_detector", "jitter_sigma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        if not self.duration_per_step > 0:
            raise ValueError(f"duration_per_step must be > 0, got {self.duration_per_step!r}")
        for name in ("efficiency_A", "efficiency_B", "lambda_true"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if not self.delta_tau > 5 * self.jitter_sigma:
            raise ValueError(
                f"peaks are not separable: delta_tau={self.delta_tau} ps must exceed "
                f"5 * jitter_sigma = {5 * self.jitter_sigma} ps"
            )
        if not self.scan:
            raise ValueError("scan must contain at least one step")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")

    @property
    def step_ps(self) -> int:
        return int(round(self.duration_per_step * PS_PER_S))


class TimeTagStream:
    """Detection records as parallel arrays, ordered by (time, channel)."""

    def __init__(self, channels, times):
        self.channels = np.asarray(channels, dtype=np.int8)
        self.times = np.asarray(times, dtype=np.int64)
        if self.channels.shape != self.times.shape or self.times.ndim != 1:
            raise ValueError("channels and times must be 1-d arrays of equal length")
        if self.channels.size and (self.channels.min() < 0 or self.channels.max() >= len(CHANNELS)):
            raise ValueError("channel index out of range")

    @classmethod
    def from_records(cls, records) -> "TimeTagStream":
        """Build from ``(channel_name, time_ps)`` pairs, sorting them."""
        records = list(records)
        chans = [CHANNEL_INDEX[c] for c, _ in records]
        times = [t for _, t in records]
        return cls(chans, times).sorted()

    def __len__(self):
        return int(self.times.size)

    def __eq__(self, other):
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return np.array_equal(self.channels, other.channels) and np.array_equal(self.times, other.times)

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.times) >= 0))

    def sorted(self) -> "TimeTagStream":
        order = np.lexsort((self.channels, self.times))
        return TimeTagStream(self.channels[order], self.times[order])

    def channel_times(self, channel: str | int) -> np.ndarray:
        idx = CHANNEL_INDEX[channel] if isinstance(channel, str) else channel
        return self.times[self.channels == idx]

    def records(self):
        for c, t in zip(self.channels, self.times):
            yield CHANNELS[c], int(t)

    def to_csv(self, path) -> None:
        names = np.array(CHANNELS)[self.channels]
        with open(path, "w", newline="\n") as fh:
            fh.write("channel,time_ps\n")
            if len(self):
                fh.write("\n".join(f"{c},{t}" for c, t in zip(names.tolist(), self.times.tolist())))
                fh.write("\n")

    @classmethod
    def from_csv(cls, path) -> "TimeTagStream":
        """Parse a stream file; malformed or unordered lines raise with their line number."""
        chans, times = [], []
        last = None
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "channel,time_ps":
                raise ValueError(f"{path}:1: expected header 'channel,time_ps', got {header!r}")
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 2 or parts[0] not in CHANNEL_INDEX:
                    raise ValueError(f"{path}:{lineno}: malformed record {line!r}")
                try:
                    t = int(parts[1])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: time_ps is not an integer: {parts[1]!r}") from None
                if last is not None and t < last:
                    raise ValueError(f"{path}:{lineno}: time_ps decreases ({t} < {last})")
                last = t
                chans.append(CHANNEL_INDEX[parts[0]])
                times.append(t)
        return cls(chans, times)


@dataclass(frozen=True)
class StepRecord:
    step_index: int
    theta: float
    t_start_ps: int
    t_end_ps: int
    lambda_true: float


def write_manifest(steps: list[StepRecord], path) -> None:
    Path(path).write_text(json.dumps([s.__dict__ for s in steps], indent=1))


def read_manifest(path) -> list[StepRecord]:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    steps = []
    for i, entry in enumerate(raw):
        try:
            steps.append(
                StepRecord(
                    step_index=int(entry["step_index"]),
                    theta=float(entry["theta"]),
                    t_start_ps=int(entry["t_start_ps"]),
                    t_end_ps=int(entry["t_end_ps"]),
                    lambda_true=float(entry["lambda_true"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: manifest entry {i} is invalid: {exc}") from None
        if steps[-1].t_end_ps <= steps[-1].t_start_ps:
            raise ValueError(f"{path}: manifest entry {i} has an empty time interval")
    return steps


@dataclass
class TruthRecord:
    steps: tuple[ScanStep, ...]
    lambda_true: float
    peak_weights: np.ndarray  # (n_steps, 5): fraction of detected pairs per offset
    expected: np.ndarray  # (n_steps, 5, 3, 3): P(j, k | offset), Werner noise included
    manifest: list[StepRecord]


def noisy_distribution(config: SimConfig, step: ScanStep) -> np.ndarray:
    """(offset, j, k) distribution of detected pairs after the Werner admixture.

    With probability 1 - lambda the output pair is replaced by a uniform draw;
    the path-pair timing is kept.
    """
    pure = joint_distribution(step.alice, step.bob, config.couplers_A, config.couplers_B)
    weights = pure.sum(axis=(1, 2))
    lam = config.lambda_true
    return lam * pure + (1 - lam) * weights[:, None, None] / 9


def _simulate_step(config: SimConfig, index: int, t_start: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([config.seed, index])
    step = config.scan[index]
    span = config.step_ps
    dist = noisy_distribution(config, step)

    n_pairs = rng.poisson(config.pair_rate * config.duration_per_step)
    ea, eb = config.efficiency_A, config.efficiency_B
    n_both, n_a, n_b, _ = rng.multinomial(n_pairs, [ea * eb, ea * (1 - eb), (1 - ea) * eb, (1 - ea) * (1 - eb)])

    chans, times = [], []

    # both photons detected: draw the full (offset, j, k) cell
    cells = rng.choice(dist.size, size=n_both, p=dist.ravel())
    n_idx, j, k = np.unravel_index(cells, dist.shape)
    t0 = t_start + rng.random(n_both) * span
    offsets = np.asarray(OFFSETS)[n_idx] * config.delta_tau
    chans += [j, 3 + k]
    times += [t0, t0 + offsets]

    # one photon lost: only the surviving party's output marginal matters
    t0 = t_start + rng.random(n_a) * span
    chans.append(rng.choice(3, size=n_a, p=dist.sum(axis=(0, 2))))
    times.append(t0)
    t0 = t_start + rng.random(n_b) * span
    chans.append(3 + rng.choice(3, size=n_b, p=dist.sum(axis=(0, 1))))
    times.append(t0)

    t = np.concatenate(times)
    t = t + rng.normal(0.0, config.jitter_sigma, t.size) if config.jitter_sigma > 0 else t
    c = np.concatenate(chans)

    n_dark = rng.poisson(config.dark_rate_per_detector * config.duration_per_step, len(CHANNELS))
    dark_c = np.repeat(np.arange(len(CHANNELS)), n_dark)
    dark_t = t_start + rng.random(dark_c.size) * span

    c = np.concatenate([c, dark_c]).astype(np.int8)
    t = np.rint(np.concatenate([t, dark_t])).astype(np.int64)
    return c, t


def _worker_count(n_tasks: int) -> int:
    env = os.environ.get(THREADS_ENV)
    try:
        cap = int(env) if env else 1
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return max(1, min(cap, n_tasks))


def simulate_run(config: SimConfig) -> tuple[TimeTagStream, TruthRecord]:
    """Simulate every scan step back to back and merge into one sorted stream.

    Each step draws from its own RNG substream keyed by (seed, step index), so
    results do not depend on the worker count.
    """
    config.validate()
    span = config.step_ps
    starts = [i * span for i in range(len(config.scan))]
    workers = _worker_count(len(starts))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda i: _simulate_step(config, i, starts[i]), range(len(starts))))
    else:
        parts = [_simulate_step(config, i, s) for i, s in enumerate(starts)]
    stream = TimeTagStream(
        np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    ).sorted()

    manifest = [
        StepRecord(i, step.theta, starts[i], starts[i] + span, config.lambda_true)
        for i, step in enumerate(config.scan)
    ]
    dists = np.array([noisy_distribution(config, s) for s in config.scan])
    weights = dists.sum(axis=(2, 3))
    truth = TruthRecord(
        steps=config.scan,
        lambda_true=config.lambda_true,
        peak_weights=weights,
        expected=np.divide(
            dists, weights[:, :, None, None], out=np.zeros_like(dists), where=weights[:, :, None, None] > 0
        ),
        manifest=manifest,
    )
    return stream, truth
