"""Coincidence post-selection, fringe fitting and the Bell report.

Coincidences are counted per scan step and detector pair in windows centred
on each of the five arrival-time peaks.  Accidental background is measured
concurrently from off-peak intervals of the same time-difference axis.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import lombscargle

from . import belltest
from .montecarlo import CHANNELS, StepRecord, TimeTagStream
from .optics import OFFSETS

log = logging.getLogger(__name__)

PAIRS = tuple((j, k) for j in range(3) for k in range(3))


def pair_name(j: int, k: int) -> str:
    return f"A{j}B{k}"


class NoCoincidencesError(ValueError):
    pass


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class HistogramSpec:
    """Binning and window geometry, all in picoseconds.

    ``range`` is the half-width of the histogram axis.  ``background_intervals``
    are ``(lo, hi)`` ranges of ``|t_B - t_A|`` used to sample accidentals;
    both signs are used.  ``None`` picks defaults scaled to ``delta_tau``.
    """

    delta_tau: float = 1200.0
    bin_width: float = 50.0
    range: float | None = None
    window_half_width: float | None = None
    background_intervals: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        dt = self.delta_tau
        if not dt > 0:
            raise ValueError(f"delta_tau must be positive, got {dt!r}")
        if self.range is None:
            object.__setattr__(self, "range", 3 * dt)
        if self.window_half_width is None:
            object.__setattr__(self, "window_half_width", dt / 3)
        if self.background_intervals is None:
            object.__setattr__(self, "background_intervals", ((3 * dt, 8 * dt),))
        object.__setattr__(
            self, "background_intervals", tuple((float(a), float(b)) for a, b in self.background_intervals)
        )
        if not self.bin_width > 0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width!r}")
        if not self.range > 0:
            raise ValueError(f"range must be positive, got {self.range!r}")
        if not 0 < self.window_half_width < dt / 2:
            raise ValueError(
                f"window_half_width must lie in (0, delta_tau/2) so windows do not overlap, "
                f"got {self.window_half_width!r}"
            )
        outer_edge = 2 * dt + self.window_half_width
        for lo, hi in self.background_intervals:
            if not hi > lo:
                raise ValueError(f"background interval ({lo}, {hi}) is empty")
            if lo < outer_edge:
                raise ValueError(
                    f"background interval ({lo}, {hi}) overlaps the peak windows (which end at {outer_edge} ps)"
                )

    @property
    def window_ps(self) -> int:
        w = int(math.floor(self.window_half_width))
        return 2 * w + 1

    @property
    def background_width_ps(self) -> int:
        return sum(2 * (int(round(hi)) - int(round(lo))) for lo, hi in self.background_intervals)


def _per_channel(stream: TimeTagStream) -> list[np.ndarray]:
    if not stream.is_sorted():
        raise ValueError("time-tag stream must be sorted by time")
    return [stream.channel_times(c) for c in range(len(CHANNELS))]


def _pair_differences(ta: np.ndarray, tb: np.ndarray, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
    """All (a, b) with ``lo <= tb[b] - ta[a] < hi``; returns A indices and differences."""
    if ta.size == 0 or tb.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    first = np.searchsorted(tb, ta + lo)
    n = np.searchsorted(tb, ta + hi) - first
    total = int(n.sum())
    owner = np.repeat(np.arange(ta.size), n)
    # position of each match within its owner's run
    run_start = np.repeat(np.cumsum(n) - n, n)
    idx = np.repeat(first, n) + (np.arange(total) - run_start)
    return owner, tb[idx] - ta[owner]


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray  # (3, 3, n_bins), indexed by Alice output, Bob output

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    def total(self) -> np.ndarray:
        return self.counts.sum(axis=(0, 1))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pair", "bin_center_ps", "count"])
            centers = self.bin_centers
            for j, k in PAIRS:
                for c, n in zip(centers, self.counts[j, k]):
                    w.writerow([pair_name(j, k), f"{c:g}", int(n)])


def build_histogram(stream: TimeTagStream, spec: HistogramSpec) -> Histogram:
    """Histogram of ``t_B - t_A`` for every (A, B) detector combination."""
    chans = _per_channel(stream)
    half = spec.range
    # bins centred on integer multiples of the bin width
    n_half = int(math.ceil(half / spec.bin_width))
    edges = spec.bin_width * (np.arange(-n_half, n_half + 2) - 0.5)
    counts = np.zeros((3, 3, edges.size - 1), dtype=np.int64)
    lo_off, hi_off = int(math.floor(edges[0])), int(math.ceil(edges[-1])) + 1
    for j in range(3):
        for k in range(3):
            _, dt = _pair_differences(chans[j], chans[3 + k], lo_off, hi_off)
            counts[j, k] = np.histogram(dt, bins=edges)[0]
    return Histogram(edges, counts)


@dataclass
class FringeData:
    """Per-step coincidence counts for the whole scan.

    ``counts[s, n + 2, j, k]`` counts pairs in the window around offset n.
    ``background`` is the accidental count expected in one window, estimated
    from the off-peak intervals, and ``background_var`` its variance.
    """

    theta: np.ndarray
    counts: np.ndarray
    background: np.ndarray
    background_var: np.ndarray
    singles: np.ndarray  # (n_steps, 6)
    durations_ps: np.ndarray
    window_ps: int
    empty_steps: list[int] = field(default_factory=list)

    @property
    def central(self) -> np.ndarray:
        return self.counts[:, 2]

    def offset(self, n: int) -> np.ndarray:
        return self.counts[:, n + 2]

    def class_counts(self, cls: int, offset: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Counts, background and background variance summed over pairs with ``(j - k) % 3 == cls``."""
        sel = [(j, k) for j, k in PAIRS if (j - k) % 3 == cls]
        c = sum(self.counts[:, offset + 2, j, k] for j, k in sel)
        b = sum(self.background[:, j, k] for j, k in sel)
        v = sum(self.background_var[:, j, k] for j, k in sel)
        return c, b, v

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "theta", "pair", "counts", "background"])
            for s, th in enumerate(self.theta):
                for j, k in PAIRS:
                    w.writerow([s, repr(float(th)), pair_name(j, k), int(self.central[s, j, k]),
                                f"{self.background[s, j, k]:.6g}"])


def count_coincidences(stream: TimeTagStream, spec: HistogramSpec, manifest: list[StepRecord]) -> FringeData:
    """Windowed coincidence and off-peak background counts per step and pair.

    An event pair belongs to the step containing its Alice timestamp.
    """
    if not manifest:
        raise ValueError("manifest has no steps")
    bounds = sorted((m.t_start_ps, m.t_end_ps) for m in manifest)
    for (s0, e0), (s1, e1) in zip(bounds, bounds[1:]):
        if s1 < e0:
            raise ValueError(f"manifest steps overlap: [{s0}, {e0}) and [{s1}, {e1})")
    chans = _per_channel(stream)
    w = int(math.floor(spec.window_half_width))
    dt = spec.delta_tau
    bg_ranges = [(int(round(lo)), int(round(hi))) for lo, hi in spec.background_intervals]
    bg_scale = spec.window_ps / spec.background_width_ps

    n_steps = len(manifest)
    counts = np.zeros((n_steps, 5, 3, 3), dtype=np.int64)
    bg_raw = np.zeros((n_steps, 3, 3), dtype=np.int64)
    singles = np.zeros((n_steps, 6), dtype=np.int64)
    starts = np.array([m.t_start_ps for m in manifest])
    ends = np.array([m.t_end_ps for m in manifest])
    order = np.argsort(starts)
    reach = int(math.ceil(max([max(abs(lo), abs(hi)) for lo, hi in bg_ranges] + [2 * dt + w]))) + 2

    def step_of(t):
        # -1 for tags outside every step
        i = np.searchsorted(starts[order], t, side="right") - 1
        s = np.where(i >= 0, order[np.clip(i, 0, None)], -1)
        inside = (s >= 0) & (t < ends[np.clip(s, 0, None)])
        return np.where(inside, s, -1)

    for c in range(6):
        st = step_of(chans[c])
        singles[:, c] = np.bincount(st[st >= 0], minlength=n_steps)
    empty = [manifest[s].step_index for s in range(n_steps) if singles[s].sum() == 0]

    for j in range(3):
        ta = chans[j]
        a_step = step_of(ta)
        for k in range(3):
            owner, diff = _pair_differences(ta, chans[3 + k], -reach, reach + 1)
            st = a_step[owner]
            keep = st >= 0
            st, diff = st[keep], diff[keep]
            for i, n in enumerate(OFFSETS):
                centre = int(round(n * dt))
                hit = (diff >= centre - w) & (diff <= centre + w)
                counts[:, i, j, k] = np.bincount(st[hit], minlength=n_steps)
            hit = np.zeros(diff.shape, dtype=bool)
            for lo, hi in bg_ranges:
                hit |= ((diff >= lo) & (diff < hi)) | ((diff > -hi) & (diff <= -lo))
            bg_raw[:, j, k] = np.bincount(st[hit], minlength=n_steps)
    if empty:
        warnings.warn(f"scan steps without any detections: {empty}", stacklevel=2)
    return FringeData(
        theta=np.array([m.theta for m in manifest]),
        counts=counts,
        background=bg_raw * bg_scale,
        background_var=bg_raw * bg_scale**2,
        singles=singles,
        durations_ps=np.array([m.t_end_ps - m.t_start_ps for m in manifest]),
        window_ps=spec.window_ps,
        empty_steps=empty,
    )


@dataclass
class FitResult:
    lambda_hat: float
    sigma_lambda: float
    amplitude: float
    phase_offset: float
    background: float
    chi2_per_dof: float
    phase_class: int = 0
    phase_identifiable: bool = True
    sigma_phase: float = float("nan")
    n_points: int = 0

    def model(self, theta) -> np.ndarray:
        return fringe_model(np.asarray(theta, float), self.amplitude, self.lambda_hat,
                            self.phase_offset, self.phase_class)

    @property
    def maximum_theta(self) -> float:
        """Scan phase of this fringe's maximum, in [0, 2 pi)."""
        return float((-self.phase_offset - 2 * np.pi * self.phase_class / 3) % (2 * np.pi))


def fringe_model(theta, amplitude, lam, phase_offset, phase_class=0):
    """Expected counts ``N [3 + 2 lam (cos T_m + cos T_l + cos(T_m - T_l))]`` under the 2:1 lock."""
    x = theta + phase_offset
    t_m = x + 2 * np.pi * phase_class / 3
    t_l = 2 * x + 4 * np.pi * phase_class / 3
    return amplitude * (3 + 2 * lam * (np.cos(t_m) + np.cos(t_l) + np.cos(t_m - t_l)))


LAMBDA_UPPER = 1.05


def fit_fringe(
    theta,
    counts,
    *,
    background=0.0,
    background_var=0.0,
    phase_class: int = 0,
    n_starts: int = 8,
    n_reweight: int = 3,
) -> FitResult:
    """Weighted least-squares fit of one fringe for the mixing parameter.

    ``background`` (scalar or per step) is subtracted from the counts before
    fitting; pass 0 for the raw result.  The floor is never a free parameter
    because an additive constant is degenerate with the fringe contrast.
    Weights are Poisson variances of the model prediction, refined over
    ``n_reweight`` passes.
    """
    theta = np.asarray(theta, dtype=float)
    counts = np.asarray(counts, dtype=float)
    bkg = np.broadcast_to(np.asarray(background, dtype=float), counts.shape)
    bvar = np.broadcast_to(np.asarray(background_var, dtype=float), counts.shape)
    if theta.shape != counts.shape or theta.ndim != 1:
        raise ValueError("theta and counts must be 1-d arrays of equal length")
    if theta.size < 6:
        raise ValueError(f"need at least 6 scan steps to fit a fringe, got {theta.size}")
    if np.ptp(theta) < 2 * np.pi * (1 - 1e-9):
        raise ValueError(f"scan spans {np.ptp(theta):.3f} rad; at least one period (2 pi) is required")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    y = counts - bkg
    if not np.any(counts > 0):
        raise NoCoincidencesError("no coincidences in the fitted window")

    var = np.maximum(counts, 1.0) + bvar

    def residuals(p, sd):
        return (fringe_model(theta, p[0], p[1], p[2], phase_class) - y) / sd

    n0 = max(y.mean() / 3, 1e-9)
    lower, upper = [0.0, 0.0, -np.inf], [np.inf, LAMBDA_UPPER, np.inf]
    best = None
    for passno in range(n_reweight + 1):
        sd = np.sqrt(var)
        if best is None:
            starts = [(n0, 0.5, p0) for p0 in np.linspace(0, 2 * np.pi, n_starts, endpoint=False)]
        else:
            starts = [best.x]
        cands = []
        for x0 in starts:
            try:
                cands.append(least_squares(residuals, x0, args=(sd,), bounds=(lower, upper), method="trf",
                                           x_scale=[n0, 0.1, 0.1], xtol=1e-14, ftol=1e-14, gtol=1e-14))
            except ValueError as exc:
                log.debug("fit start %s failed: %s", x0, exc)
        cands = [c for c in cands if c.status > 0]
        if not cands:
            raise FitError(f"fringe fit did not converge from any of {len(starts)} starts (pass {passno})")
        best = min(cands, key=lambda r: r.cost)
        model = fringe_model(theta, *best.x, phase_class)
        var = np.maximum(model + bkg, 1e-9) + bvar

    jac = best.jac
    jtj = jac.T @ jac
    cov = np.linalg.pinv(jtj)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    lam = float(best.x[1])
    chi2 = float(np.sum(best.fun**2))
    dof = max(theta.size - 3, 1)
    identifiable = bool(np.linalg.matrix_rank(jtj) == 3 and lam > 3 * sig[1])
    if not identifiable:
        log.info("fringe phase is not identifiable (lambda=%.3g, sigma=%.3g)", lam, sig[1])
    return FitResult(
        lambda_hat=lam,
        sigma_lambda=float(sig[1]),
        amplitude=float(best.x[0]),
        phase_offset=float(best.x[2] % (2 * np.pi)),
        background=float(np.mean(bkg)),
        chi2_per_dof=chi2 / dof,
        phase_class=phase_class,
        phase_identifiable=identifiable,
        sigma_phase=float(sig[2]),
        n_points=int(theta.size),
    )


def fit_class(data: FringeData, cls: int = 0, *, net: bool, fixed_phase: bool = True) -> FitResult:
    """Fit the pooled fringe of one detector class (pairs with ``j - k = cls`` mod 3).

    With ``fixed_phase=False`` the class-dependent phase is left to the free
    phase offset, which is how the three-way symmetry is measured.
    """
    c, b, v = data.class_counts(cls)
    return fit_fringe(data.theta, c, background=b if net else 0.0, background_var=v if net else 0.0,
                      phase_class=cls if fixed_phase else 0)


def fit_pair(data: FringeData, j: int, k: int, *, net: bool) -> FitResult:
    c = data.central[:, j, k]
    return fit_fringe(data.theta, c,
                      background=data.background[:, j, k] if net else 0.0,
                      background_var=data.background_var[:, j, k] if net else 0.0,
                      phase_class=(j - k) % 3)


@dataclass(frozen=True)
class ResultRow:
    lam: float
    sigma_lambda: float
    I3: float
    sigma_I: float
    V3: float
    sigma_V: float
    sigma_violation: float


def result_row(lam: float, sigma_lambda: float) -> ResultRow:
    """Bell value, qutrit visibility and significance implied by a fitted mixing parameter."""
    # fitted values may overshoot 1 by noise; the formulas stay meaningful there
    strict = lam <= 1.0
    I = belltest.lambda_scaling(lam) if strict else lam * belltest.I3_MAX
    V = belltest.visibility_from_lambda(3, lam) if strict else 3 * lam / (2 + lam)
    s_I, s_V = belltest.propagate_lambda_error(3, min(lam, 1.0), sigma_lambda)
    if not strict:
        s_V = sigma_lambda * 6 / (2 + lam) ** 2
    return ResultRow(
        lam=float(lam),
        sigma_lambda=float(sigma_lambda),
        I3=float(I),
        sigma_I=float(s_I),
        V3=float(V),
        sigma_V=float(s_V),
        sigma_violation=float(belltest.violation_sigma(I, s_I)) if s_I > 0 else float("nan"),
    )


@dataclass
class BellReport:
    raw: ResultRow
    net: ResultRow
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"raw": asdict(self.raw), "net": asdict(self.net), "metadata": self.metadata}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def compute_report(raw: FitResult, net: FitResult, metadata: dict | None = None) -> BellReport:
    meta = dict(metadata or {})
    # the published convention quotes the raw lambda uncertainty for the net value too
    meta.setdefault("net_with_raw_sigma", asdict(result_row(net.lambda_hat, raw.sigma_lambda)))
    return BellReport(raw=result_row(raw.lambda_hat, raw.sigma_lambda),
                      net=result_row(net.lambda_hat, net.sigma_lambda), metadata=meta)


def pair_consistency(data: FringeData, reference: FitResult, n_sigma: float = 3.0) -> dict:
    """Net fits of all nine pairs, checked against the designated class fit."""
    out = {}
    ok = True
    for j, k in PAIRS:
        try:
            f = fit_pair(data, j, k, net=True)
        except (FitError, NoCoincidencesError) as exc:
            out[pair_name(j, k)] = {"error": str(exc)}
            ok = False
            continue
        agree = abs(f.lambda_hat - reference.lambda_hat) <= n_sigma * math.hypot(f.sigma_lambda, reference.sigma_lambda)
        ok &= agree
        out[pair_name(j, k)] = {"lambda": f.lambda_hat, "sigma_lambda": f.sigma_lambda, "agrees": bool(agree)}
    return {"consistent": bool(ok), "pairs": out}


def analyze(stream: TimeTagStream, spec: HistogramSpec, manifest: list[StepRecord],
            *, designated_class: int = 0, cross_check: bool = True) -> tuple[BellReport, FringeData, FitResult, FitResult]:
    """Full pipeline: windows, raw/net fits of the designated class, report."""
    data = count_coincidences(stream, spec, manifest)
    if data.central.sum() == 0:
        raise NoCoincidencesError("no coincidences in the central-peak window")
    raw = fit_class(data, designated_class, net=False)
    net = fit_class(data, designated_class, net=True)
    meta = {
        "designated_class": designated_class,
        "n_steps": int(len(manifest)),
        "window_ps": int(spec.window_ps),
        "background_intervals_ps": [list(iv) for iv in spec.background_intervals],
        "central_counts_total": int(data.central.sum()),
        "background_per_window_total": float(data.background.sum()),
        "singles_total": int(data.singles.sum()),
        "raw_chi2_per_dof": raw.chi2_per_dof,
        "net_chi2_per_dof": net.chi2_per_dof,
    }
    if cross_check:
        meta["pair_cross_check"] = pair_consistency(data, net)
    return compute_report(raw, net, meta), data, raw, net


@dataclass
class SatelliteCheck:
    passed: bool | None  # None when the fringes are too weak to decide
    rate_plus: float  # fringe cycles per 2 pi of scan phase, +delta_tau peak
    rate_minus: float
    significance_plus: float
    significance_minus: float
    tolerance: float

    @property
    def conclusive(self) -> bool:
        return self.passed is not None


def _fringe_rate(theta: np.ndarray, ys: list[np.ndarray], rates: np.ndarray) -> tuple[float, float]:
    """Peak of the summed Lomb-Scargle periodogram and the fringe amplitude significance."""
    power = np.zeros_like(rates)
    for y in ys:
        if np.ptp(y) > 0:
            power += lombscargle(theta, y - y.mean(), rates)
    i = int(np.argmax(power))
    if 0 < i < rates.size - 1:
        a, b, c = power[i - 1:i + 2]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        rate = rates[i] + shift * (rates[1] - rates[0])
    else:
        rate = rates[i]
    # amplitude significance from a linear sinusoid fit at the peak rate
    z2 = 0.0
    X = np.column_stack([np.cos(rate * theta), np.sin(rate * theta), np.ones_like(theta)])
    for y in ys:
        sd = np.sqrt(np.maximum(y, 1.0))
        coef, *_ = np.linalg.lstsq(X / sd[:, None], y / sd, rcond=None)
        cov = np.linalg.pinv((X / sd[:, None]).T @ (X / sd[:, None]))
        amp = coef[:2]
        z2 += float(amp @ np.linalg.pinv(cov[:2, :2]) @ amp)
    return float(rate), math.sqrt(z2)


def satellite_rates(data: FringeData, tolerance: float = 0.05, min_significance: float = 5.0) -> SatelliteCheck:
    if np.ptp(data.theta) <= 0:
        raise ValueError("scan does not vary the phase")
    rates = np.linspace(0.1, 4.0, 4000)
    found = {}
    for n in (1, -1):
        ys = [data.class_counts(c, offset=n)[0].astype(float) for c in range(3)]
        if sum(y.sum() for y in ys) < 10 * len(data.theta):
            raise ValueError(f"too few counts in the {n:+d} delta_tau window to estimate a fringe rate")
        found[n] = _fringe_rate(data.theta, ys, rates)
    (rp, zp), (rm, zm) = found[1], found[-1]
    if min(zp, zm) < min_significance:
        passed = None
    else:
        passed = abs(rp - rm) <= tolerance * 0.5 * (rp + rm)
    return SatelliteCheck(passed, rp, rm, zp, zm, tolerance)


def verify_satellite_rate(stream: TimeTagStream, spec: HistogramSpec, manifest: list[StepRecord],
                          tolerance: float = 0.05) -> SatelliteCheck:
    """Certify the 2:1 phase lock from the fringe rates in the +/- delta_tau peaks.

    Both satellite fringes run at one cycle per 2 pi of scan phase exactly
    when the long arm is scanned at twice the medium arm.
    """
    return satellite_rates(count_coincidences(stream, spec, manifest), tolerance)
