"""Command-line entry point: ``pilotwave run|validate|presets|report``.

Exit status: 0 when every check passed, 1 when a run finished but some
check failed (or a recomputed report disagrees), 3 on any error, in which case
``error.json`` is written to the output directory when one was given.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import io
from .equilibrium import estimate_atypical_rate
from .errors import ConfigurationError, PilotWaveError
from .experiments import PRESETS
from .grid import RegionSpec
from .scenario import SEED_MAX, parse_scenario, scenario_schema

EMIT_CHOICES = ("trajectories", "histograms", "fields", "plots")
DEFAULT_EMIT = ("trajectories", "histograms")
EXIT_OK, EXIT_CHECKS_FAILED, EXIT_ERROR = 0, 1, 3

log = logging.getLogger("pilotwave")


@dataclass
class RunConfig:
    source: str
    trajectories: int | None = None
    seed: int | None = None
    out: str = "run"
    snapshot_stride: int = 10
    emit: frozenset = field(default_factory=lambda: frozenset(DEFAULT_EMIT))
    threads: int = 1

    def __post_init__(self):
        if self.seed is not None and not 0 <= self.seed <= SEED_MAX:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.snapshot_stride < 1:
            raise ConfigurationError(f"snapshot stride must be >= 1, got {self.snapshot_stride}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        bad = set(self.emit) - set(EMIT_CHOICES)
        if bad:
            raise ConfigurationError(f"unknown emit flag(s) {sorted(bad)}; choose from {EMIT_CHOICES}")


def parse_emit(text: str) -> frozenset:
    items = {t.strip() for t in text.split(",") if t.strip()}
    if items == {"none"}:
        return frozenset()
    if items == {"all"}:
        return frozenset(EMIT_CHOICES)
    return frozenset(items)


def _writable_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise ConfigurationError(f"output directory {path!r} is not writable")
    return path


def run(config: RunConfig) -> int:
    """Execute one scenario and write its artifacts; returns the exit status."""
    spec = parse_scenario(config.source, trajectories=config.trajectories, seed=config.seed)
    out = _writable_dir(config.out)
    preset = PRESETS[spec.preset]
    log.info("running %s with %d trajectories, seed %d", spec.preset, spec.trajectories, spec.seed)
    report = preset.run(spec.params, spec.ensemble_spec(), threads=config.threads)
    # With every emit flag off the run leaves report.json alone; it already echoes the scenario.
    io.write_report(out, report, timing=bool(config.emit))
    if config.emit:
        with open(os.path.join(out, "scenario.json"), "w") as fh:
            fh.write(spec.to_json())
    ens = report.ensemble
    if "trajectories" in config.emit and ens is not None:
        io.write_trajectories(os.path.join(out, "trajectories.csv"), ens, config.snapshot_stride)
    if "histograms" in config.emit and report.histograms:
        io.write_histograms(os.path.join(out, "histograms.csv"), report.histograms)
    if "fields" in config.emit:
        for name, f in sorted(report.fields.items()):
            io.write_field(os.path.join(out, f"field_{name}"), f)
    if "plots" in config.emit:
        from .plots import write_plots
        write_plots(out, report)
    for c in report.checks:
        log.info("%-32s %s", c.name, "pass" if c.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_CHECKS_FAILED


def recompute(out: str) -> dict:
    """Recompute region rates and histogram counts from the stored trajectory table."""
    with open(os.path.join(out, "report.json")) as fh:
        stored = json.load(fh)
    path = os.path.join(out, "trajectories.csv")
    if not os.path.exists(path):
        raise ConfigurationError(f"{out}: no trajectories.csv to recompute from (run with --emit trajectories)")
    ens = io.read_trajectories(path)
    result = {"trajectories": len(ens), "rates": {}, "histograms": {}, "consistent": True}
    for name, e in stored.get("empirical", {}).items():
        if "region" not in e:
            continue
        region = RegionSpec.from_dict(stored["regions"][e["region"]])
        est = estimate_atypical_rate(ens.final, region)
        same = est.count == e["count"] and est.n == e["n"]
        result["rates"][name] = {**est.to_dict(), "matches_stored": same}
        result["consistent"] &= same
    hpath = os.path.join(out, "histograms.csv")
    if os.path.exists(hpath):
        for name, h in io.read_histograms(hpath).items():
            counts = np.histogram(ens.final[:, h.axis], bins=h.edges)[0]
            same = bool(np.array_equal(counts, h.counts))
            tv = 0.5 * float(np.sum(np.abs(counts / counts.sum() - h.expected / h.expected.sum())))
            result["histograms"][name] = {"counts": counts.tolist(), "tv": tv, "matches_stored": same}
            result["consistent"] &= same
    return result


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pilotwave", description="Pilot-wave trajectory experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a preset or scenario file")
    r.add_argument("source", help="preset name or scenario JSON path")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--trajectories", type=int, default=None)
    r.add_argument("--out", default="run")
    r.add_argument("--snapshot-stride", type=int, default=10,
                   help="write every k-th trajectory sample (the final one is always kept)")
    r.add_argument("--emit", default=",".join(DEFAULT_EMIT),
                   help=f"comma list from {', '.join(EMIT_CHOICES)}, or 'all' / 'none'")
    r.add_argument("--threads", type=int, default=1)

    v = sub.add_parser("validate", help="check a scenario and print it fully resolved")
    v.add_argument("source", nargs="?")
    v.add_argument("--schema", action="store_true", help="print the scenario JSON schema instead")

    p = sub.add_parser("presets", help="list built-in presets")
    p.add_argument("--json", action="store_true")

    rp = sub.add_parser("report", help="recompute statistics from a run directory's trajectory table")
    rp.add_argument("out")
    return ap


def _error(exc: Exception, out: str | None) -> int:
    rec = exc.record() if isinstance(exc, PilotWaveError) else {"error": "io", "type": type(exc).__name__,
                                                                 "message": str(exc)}
    if out:
        try:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "error.json"), "w") as fh:
                fh.write(io.dumps(rec))
        except OSError:
            pass
    print(json.dumps(rec), file=sys.stderr)
    return EXIT_ERROR


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = getattr(args, "out", None)
    try:
        if args.verb == "run":
            cfg = RunConfig(args.source, args.trajectories, args.seed, args.out, args.snapshot_stride,
                            parse_emit(args.emit), args.threads)
            status = run(cfg)
            with open(os.path.join(cfg.out, "report.json")) as fh:
                rep = json.load(fh)
            for c in rep["checks"]:
                print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
            return status
        if args.verb == "validate":
            if args.schema:
                print(json.dumps(scenario_schema(), indent=2, sort_keys=True))
                return EXIT_OK
            if not args.source:
                raise ConfigurationError("validate needs a preset name or scenario file")
            print(parse_scenario(args.source).to_json(), end="")
            return EXIT_OK
        if args.verb == "presets":
            rows = [{"name": n, "trajectories": p.trajectories, "claim": p.claim, "predicates": list(p.predicates)}
                    for n, p in sorted(PRESETS.items())]
            if args.json:
                print(json.dumps(rows, indent=2))
            else:
                for row in rows:
                    print(f"{row['name']:<24} N={row['trajectories']:<7} {row['claim']}")
            return EXIT_OK
        result = recompute(args.out)
        with open(os.path.join(args.out, "recomputed.json"), "w") as fh:
            fh.write(io.dumps(result))
        print(io.dumps(result), end="")
        return EXIT_OK if result["consistent"] else EXIT_CHECKS_FAILED
    except (PilotWaveError, OSError) as exc:
        return _error(exc, out)


if __name__ == "__main__":
    sys.exit(main())
