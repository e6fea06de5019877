"""Command line entry point: ``qutrit-bell {simulate,analyze,belltable}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import belltest
from .analysis import NoCoincidencesError, analyze, build_histogram, result_row
from .config import ConfigError, RunConfig, load_config
from .montecarlo import TimeTagStream, read_manifest, simulate_run, write_manifest

REFERENCE_ROWS = {"raw": (0.848, 0.008), "net": (0.969, 0.008)}


def reference_table() -> dict:
    """Headline numbers from the closed forms and the published mixing parameters."""
    lc3 = belltest.critical_lambda(3)
    table = {
        "I3_max": belltest.I3_MAX,
        "local_bound": belltest.LOCAL_BOUND,
        "critical_lambda_d2": belltest.critical_lambda(2),
        "critical_lambda_d3": lc3,
        "critical_visibility_d3": belltest.visibility_from_lambda(3, lc3),
    }
    for name, (lam, sig) in REFERENCE_ROWS.items():
        row = result_row(lam, sig)
        table[name] = {"lambda": row.lam, "sigma_lambda": row.sigma_lambda, "I3": row.I3, "sigma_I": row.sigma_I,
                       "V3": row.V3, "sigma_V": row.sigma_V, "sigma_violation": row.sigma_violation}
    return table


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(seed=args.seed, out=args.out, steps=args.steps, lam=args.lam)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    sim = cfg.sim_config()
    stream, truth = simulate_run(sim)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    stream.to_csv(cfg.output.path("stream"))
    write_manifest(truth.manifest, cfg.output.path("manifest"))
    print(f"events={len(stream)} steps={len(truth.manifest)} seed={sim.seed}")
    print(f"stream={cfg.output.path('stream')} manifest={cfg.output.path('manifest')}")
    return 0


def cmd_analyze(args) -> int:
    cfg = _load(args)
    stream_path = Path(args.stream) if args.stream else cfg.output.path("stream")
    manifest_path = Path(args.manifest) if args.manifest else cfg.output.path("manifest")
    stream = TimeTagStream.from_csv(stream_path)
    manifest = read_manifest(manifest_path)
    if len(stream) == 0:
        raise NoCoincidencesError(f"{stream_path}: no coincidences (the stream is empty)")
    spec = cfg.histogram_spec()
    report, data, _, _ = analyze(stream, spec, manifest)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(cfg.output.path("report"))
    data.to_csv(cfg.output.path("fringe"))
    build_histogram(stream, spec).to_csv(cfg.output.path("histogram"))
    for name, row in (("raw", report.raw), ("net", report.net)):
        print(f"{name}: lambda={row.lam:.4f}±{row.sigma_lambda:.4f} I3={row.I3:.4f}±{row.sigma_I:.4f} "
              f"V3={row.V3:.4f}±{row.sigma_V:.4f} violation={row.sigma_violation:.1f} sigma")
    print(f"report={cfg.output.path('report')}")
    return 0


def cmd_belltable(args) -> int:
    table = reference_table()
    if args.json:
        print(json.dumps(table, indent=2))
        return 0
    print(f"I3 maximum (lambda=1)        {table['I3_max']:.5f}")
    print(f"critical lambda, d=2         {table['critical_lambda_d2']:.6f}")
    print(f"critical lambda, d=3         {table['critical_lambda_d3']:.6f}")
    print(f"critical visibility V(3)     {table['critical_visibility_d3']:.6f}")
    print(f"{'':6}{'lambda':>14}{'I3':>18}{'V(3)':>18}{'violation':>11}")
    for name in ("raw", "net"):
        r = table[name]
        print(f"{name:6}{r['lambda']:>8.3f} ± {r['sigma_lambda']:.3f}{r['I3']:>10.3f} ± {r['sigma_I']:.3f}"
              f"{r['V3']:>10.3f} ± {r['sigma_V']:.3f}{r['sigma_violation']:>9.1f} σ")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qutrit-bell", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--steps", type=int, help="number of scan steps (overrides the config)")
        p.add_argument("--lambda", dest="lam", type=float, help="true mixing parameter (overrides the config)")

    p = sub.add_parser("simulate", help="simulate a phase scan into a time-tag stream")
    run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="fit a time-tag stream and write the Bell report")
    run_flags(p)
    p.add_argument("--stream", help="time-tag CSV (default: from the config's output section)")
    p.add_argument("--manifest", help="step manifest JSON (default: from the config's output section)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("belltable", help="print the headline numbers from closed forms")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a text table")
    p.set_defaults(func=cmd_belltable)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NoCoincidencesError, ValueError, OSError) as exc:
        print(f"qutrit-bell {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
