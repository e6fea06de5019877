import math

import numpy as np
import pytest

from qutrit_bell.analysis import HistogramSpec, count_coincidences
from qutrit_bell.belltest import optimal_settings
from qutrit_bell.montecarlo import (
    CHANNELS,
    ScanStep,
    SimConfig,
    TimeTagStream,
    read_manifest,
    scan_schedule,
    simulate_run,
    write_manifest,
)
from qutrit_bell.optics import central_table

BELL = optimal_settings()


def single_step(alice, bob, **kw):
    kw.setdefault("duration_per_step", 1.0)
    return SimConfig(scan=(ScanStep(0.0, alice, bob),), **kw)


def test_scan_schedule():
    steps = scan_schedule(4, 2 * math.pi)
    assert [s.theta for s in steps] == pytest.approx([0, 2 * math.pi / 3, 4 * math.pi / 3, 2 * math.pi])
    assert all(s.alice.is_locked() for s in steps)
    assert all(s.bob == BELL.B1 for s in steps)
    assert all((s.alice + s.bob).is_locked() for s in steps)
    with pytest.raises(ValueError):
        scan_schedule(1, 1.0)


def test_broken_lock_schedule():
    steps = scan_schedule(5, 2.0, long_ratio=1.5)
    assert not any(s.alice.is_locked() for s in steps[1:])


@pytest.mark.parametrize(
    "kw",
    [
        {"pair_rate": -1},
        {"efficiency_A": 1.2},
        {"lambda_true": -0.1},
        {"delta_tau": 400.0, "jitter_sigma": 100.0},
        {"duration_per_step": 0.0},
    ],
)
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_determinism():
    cfg = SimConfig(pair_rate=2e5, duration_per_step=0.01, dark_rate_per_detector=1e3,
                    scan=scan_schedule(6), seed=11)
    s1, _ = simulate_run(cfg)
    s2, _ = simulate_run(cfg)
    assert s1 == s2
    s3, _ = simulate_run(SimConfig(**{**cfg.__dict__, "seed": 12}))
    assert not s1 == s3


def test_worker_count_does_not_change_output(monkeypatch):
    cfg = SimConfig(pair_rate=1e5, duration_per_step=0.01, scan=scan_schedule(5), seed=3)
    s1, _ = simulate_run(cfg)
    monkeypatch.setenv("QUTRIT_BELL_THREADS", "3")
    s2, _ = simulate_run(cfg)
    assert s1 == s2


def test_stream_sorted_and_valid():
    s, truth = simulate_run(SimConfig(pair_rate=1e5, duration_per_step=0.02, scan=scan_schedule(4)))
    assert s.is_sorted()
    assert set(np.unique(s.channels)) <= set(range(len(CHANNELS)))
    assert np.allclose(truth.expected.sum(axis=(2, 3)), 1.0)
    assert len(truth.manifest) == 4


def test_bell_ratio():
    # ratio of (4 + 2 sqrt 3)/27 to 1/27
    cfg = single_step(BELL.A1, BELL.B1, pair_rate=3e5, dark_rate_per_detector=0, efficiency_A=1, efficiency_B=1,
                      lambda_true=1.0, seed=2)
    s, truth = simulate_run(cfg)
    data = count_coincidences(s, HistogramSpec(), truth.manifest)
    a, b = data.central[0, 0, 0], data.central[0, 0, 1]
    ratio = a / b
    sigma = ratio * math.sqrt(1 / a + 1 / b)
    assert abs(ratio - (4 + 2 * math.sqrt(3))) < 3 * sigma


def test_dark_counts_only():
    cfg = single_step(BELL.A1, BELL.B1, pair_rate=0, dark_rate_per_detector=5e4, seed=4)
    s, truth = simulate_run(cfg)
    assert len(s) > 0
    spec = HistogramSpec()
    data = count_coincidences(s, spec, truth.manifest)
    # accidentals only: same expectation in every window, equal to the off-peak estimate
    na = data.singles[0, :3]
    nb = data.singles[0, 3:]
    expected = np.outer(na, nb) * spec.window_ps / cfg.step_ps
    central = data.central[0]
    assert np.all(np.abs(central - expected) <= 4 * np.sqrt(expected) + 1)


def test_central_frequencies_converge():
    alice, bob = BELL.A2, BELL.B1
    lam = 0.9
    cfg = single_step(alice, bob, pair_rate=1e6, dark_rate_per_detector=0, efficiency_A=1, efficiency_B=1,
                      lambda_true=lam, seed=9)
    s, truth = simulate_run(cfg)
    data = count_coincidences(s, HistogramSpec(), truth.manifest)
    counts = data.central[0]
    n = counts.sum()
    p = central_table(lam, alice, bob).probs
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) <= 4 * se)
    assert np.allclose(truth.expected[0, 2], p, atol=1e-12)


def test_peak_areas():
    cfg = single_step(BELL.A1, BELL.B1, pair_rate=2e5, dark_rate_per_detector=0, efficiency_A=1, efficiency_B=1,
                      seed=5)
    s, truth = simulate_run(cfg)
    data = count_coincidences(s, HistogramSpec(), truth.manifest)
    areas = data.counts[0].sum(axis=(1, 2))
    expected = areas.sum() * np.array([1, 2, 3, 2, 1]) / 9
    assert np.all(np.abs(areas - expected) <= 4 * np.sqrt(expected))


def test_csv_round_trip(tmp_path):
    s, truth = simulate_run(SimConfig(pair_rate=1e5, duration_per_step=0.01, scan=scan_schedule(3), seed=1))
    s.to_csv(tmp_path / "t.csv")
    assert TimeTagStream.from_csv(tmp_path / "t.csv") == s
    write_manifest(truth.manifest, tmp_path / "m.json")
    assert read_manifest(tmp_path / "m.json") == truth.manifest
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "channel,time_ps"


@pytest.mark.parametrize(
    "body, lineno",
    [("A0,5\nC3,7\n", 3), ("A0,5\nB1,x\n", 3), ("A0,5\nB1,4\n", 3), ("A0;5\n", 2)],
)
def test_csv_errors_name_line(tmp_path, body, lineno):
    p = tmp_path / "bad.csv"
    p.write_text("channel,time_ps\n" + body)
    with pytest.raises(ValueError, match=f":{lineno}:"):
        TimeTagStream.from_csv(p)


def test_step_substreams_independent_of_scan_length():
    a, _ = simulate_run(SimConfig(pair_rate=1e5, duration_per_step=0.01, scan=scan_schedule(3), seed=8))
    b, _ = simulate_run(SimConfig(pair_rate=1e5, duration_per_step=0.01, scan=scan_schedule(3)[:2], seed=8))
    end = int(0.01e12)
    assert np.array_equal(a.times[a.times < end - 5000], b.times[b.times < end - 5000])
