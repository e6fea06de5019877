"""JSON run configuration: simulation, histogram geometry and output paths."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .analysis import HistogramSpec
from .montecarlo import SimConfig, scan_schedule
from .optics import CouplerRatios
from .quantum_core import PhaseVector


class ConfigError(ValueError):
    pass


SIM_KEYS = {
    "pair_rate", "duration_per_step", "delta_tau", "jitter_sigma", "efficiency_A", "efficiency_B",
    "dark_rate_per_detector", "lambda_true", "couplers_A", "couplers_B", "scan", "seed",
}
SCAN_KEYS = {"n_steps", "theta_max", "long_ratio", "bob"}
HIST_KEYS = {"bin_width", "range", "window_half_width", "background_intervals"}
OUT_KEYS = {"dir", "stream", "manifest", "report", "fringe", "histogram"}


@dataclass
class ScanConfig:
    n_steps: int = 24
    theta_max: float = 2 * math.pi
    long_ratio: float = 2.0
    bob: tuple[float, float] = (math.pi / 6, math.pi / 3)


@dataclass
class OutputPaths:
    dir: str = "out"
    stream: str = "timetags.csv"
    manifest: str = "manifest.json"
    report: str = "report.json"
    fringe: str = "fringe.csv"
    histogram: str = "histogram.csv"

    def path(self, name: str) -> Path:
        return Path(self.dir) / getattr(self, name)


@dataclass
class RunConfig:
    sim: dict = field(default_factory=dict)
    scan: ScanConfig = field(default_factory=ScanConfig)
    histogram: dict = field(default_factory=dict)
    output: OutputPaths = field(default_factory=OutputPaths)

    def sim_config(self) -> SimConfig:
        params = dict(self.sim)
        for key in ("couplers_A", "couplers_B"):
            if key in params:
                params[key] = _parse_couplers(params[key], key)
        try:
            scan = scan_schedule(self.scan.n_steps, self.scan.theta_max,
                                 PhaseVector(*self.scan.bob), self.scan.long_ratio)
            return SimConfig(**params, scan=scan)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid simulation settings: {exc}") from None

    def histogram_spec(self, delta_tau: float | None = None) -> HistogramSpec:
        dt = delta_tau if delta_tau is not None else self.sim.get("delta_tau", SimConfig.delta_tau)
        params = dict(self.histogram)
        if params.get("background_intervals") is not None:
            params["background_intervals"] = tuple(tuple(iv) for iv in params["background_intervals"])
        try:
            return HistogramSpec(delta_tau=dt, **params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid histogram settings: {exc}") from None

    def with_overrides(self, *, seed=None, out=None, steps=None, lam=None) -> "RunConfig":
        sim = dict(self.sim)
        if seed is not None:
            sim["seed"] = seed
        if lam is not None:
            sim["lambda_true"] = lam
        scan = replace(self.scan, n_steps=steps) if steps is not None else self.scan
        output = replace(self.output, dir=out) if out is not None else self.output
        return RunConfig(sim=sim, scan=scan, histogram=dict(self.histogram), output=output)


def _check_keys(obj, allowed: set, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    return obj


def _parse_couplers(value, where):
    try:
        if isinstance(value, dict):
            _check_keys(value, {"input", "output"}, where)
            return (CouplerRatios(tuple(value["input"])), CouplerRatios(tuple(value["output"])))
        return CouplerRatios(tuple(value))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from None


def parse_config(doc: dict) -> RunConfig:
    _check_keys(doc, {"sim", "histogram", "output"}, "config")
    sim = dict(_check_keys(doc.get("sim", {}), SIM_KEYS, "sim"))
    scan_doc = _check_keys(sim.pop("scan", {}), SCAN_KEYS, "sim.scan")
    hist = _check_keys(doc.get("histogram", {}), HIST_KEYS, "histogram")
    out = _check_keys(doc.get("output", {}), OUT_KEYS, "output")
    for key, value in sim.items():
        if key in ("couplers_A", "couplers_B"):
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"sim.{key} must be a number, got {value!r}")
    scan = ScanConfig(**scan_doc)
    try:
        scan.bob = tuple(scan.bob)
    except TypeError:
        raise ConfigError("sim.scan.bob must be a list of two phases") from None
    if len(scan.bob) != 2:
        raise ConfigError("sim.scan.bob must hold two phases (medium, long)")
    cfg = RunConfig(sim=sim, scan=scan, histogram=dict(hist), output=OutputPaths(**out))
    # fail early rather than after a long simulation
    cfg.sim_config()
    cfg.histogram_spec()
    return cfg


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return parse_config(doc)


def default_config_dict() -> dict:
    """The built-in defaults as a complete config document."""
    sim = {f.name: getattr(SimConfig, f.name) for f in fields(SimConfig)
           if f.name not in ("couplers_A", "couplers_B", "scan")}
    sim["couplers_A"] = list(CouplerRatios().split)
    sim["couplers_B"] = list(CouplerRatios().split)
    s = ScanConfig()
    sim["scan"] = {"n_steps": s.n_steps, "theta_max": s.theta_max, "long_ratio": s.long_ratio, "bob": list(s.bob)}
    return {
        "sim": sim,
        "histogram": {"bin_width": 50.0, "range": None, "window_half_width": None, "background_intervals": None},
        "output": {f.name: f.default for f in fields(OutputPaths)},
    }
