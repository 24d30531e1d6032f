"""Command-line front end: ``qpv verify`` and ``qpv bench``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

from .engine import Options, Verifier
from .smt import SolverConfig, SolverError, find_solver

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class RunConfig:
    paths: List[str]
    solver: Optional[str] = None
    timeout: float = 10.0
    jobs: int = 1
    seed: int = 0
    no_triggers: bool = False
    no_memoize: bool = False
    strict_inhale_injectivity: bool = False
    debug_invariants: bool = False
    reverse_heap: bool = False
    dump_smt: Optional[str] = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.jobs < 1:
            raise ValueError("parallelism must be at least 1")

    def solver_config(self, prefix: str) -> SolverConfig:
        return SolverConfig(path=self.solver, timeout_ms=int(self.timeout * 1000), seed=self.seed,
                            triggers=not self.no_triggers, dump_dir=self.dump_smt, dump_prefix=prefix)

    def options(self) -> Options:
        return Options(memoize=not self.no_memoize,
                       strict_inhale_injectivity=self.strict_inhale_injectivity,
                       debug_invariants=self.debug_invariants, reverse_heap=self.reverse_heap)


@dataclass
class Record:
    """One line of the machine-readable report."""
    file: str
    method: str
    verdict: str            # verified | failed | error
    error_kind: str = ""
    position: str = ""
    millis: float = 0.0
    message: str = ""
    checks: int = 0
    quantifiers: int = 0
    value_maps: int = 0


@dataclass
class Report:
    records: List[Record] = field(default_factory=list)
    file_millis: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if any(r.verdict == "error" for r in self.records):
            return EXIT_USAGE
        if any(r.verdict == "failed" for r in self.records):
            return EXIT_FAIL
        return EXIT_OK

    def lines(self, with_times=True) -> List[str]:
        out = []
        for r in self.records:
            d = asdict(r)
            if not with_times:
                d.pop("millis")
            out.append(json.dumps(d, sort_keys=True))
        return out


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _load(path: str):
    from .checker import load
    with open(path) as fh:
        return load(fh.read())


def _verify_task(cfg: RunConfig, path: str, method: str) -> Record:
    try:
        prog = _load(path)
        v = Verifier(prog, cfg.solver_config(_stem(path)), cfg.options())
        o = v.verify_method(method)
    except Exception as e:      # worker boundary: report rather than crash the pool
        return Record(path, method, "error", "internal", "", 0.0, "%s: %s" % (type(e).__name__, e))
    rec = Record(path, method, "verified", millis=round(o.millis, 1), checks=o.checks,
                 quantifiers=o.quantifiers, value_maps=o.value_maps)
    if o.error is not None:
        rec.verdict = "error" if o.error.kind == "solver.failure" else "failed"
        rec.error_kind = o.error.kind
        rec.position = str(o.error.pos)
        rec.message = o.error.message
    return rec


def _input_errors(path: str, e: Exception) -> List[Record]:
    """Parse, macro and well-formedness errors as positioned records."""
    problems = getattr(e, "errors", None) or [e]
    out = []
    for p in problems:
        pos = str(getattr(p, "pos", "") or "")
        msg = str(p)
        if pos and msg.startswith(pos + ": "):
            msg = msg[len(pos) + 2:]
        out.append(Record(path, "", "error", "input", pos, 0.0, msg))
    return out


def run(cfg: RunConfig) -> Report:
    """Verify every method of every input file."""
    report = Report()
    tasks = []
    slots = []          # per file: list of record slots, or a ready error record
    for path in cfg.paths:
        try:
            prog = _load(path)
        except OSError as e:
            slots.append((path, [Record(path, "", "error", "io", "", 0.0, str(e))]))
            continue
        except Exception as e:
            slots.append((path, _input_errors(path, e)))
            continue
        names = [m.name for m in prog.methods]
        slots.append((path, names))
        tasks.extend((path, n) for n in names)
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            futs = {t: ex.submit(_verify_task, cfg, *t) for t in tasks}
            results = {t: f.result() for t, f in futs.items()}
    else:
        results = {t: _verify_task(cfg, *t) for t in tasks}
    for path, items in slots:
        if items and isinstance(items[0], Record):
            report.records.extend(items)
            continue
        recs = [results[(path, n)] for n in items]
        report.records.extend(recs)
        report.file_millis[path] = sum(r.millis for r in recs)
    return report


def format_text(report: Report) -> str:
    lines = []
    for r in report.records:
        if r.verdict == "verified":
            lines.append("%s: %s verified (%.0f ms, %d checks)" % (r.file, r.method, r.millis, r.checks))
        elif r.method:
            lines.append("%s:%s: %s [%s] %s" % (r.file, r.position, r.method, r.error_kind, r.message))
        else:
            lines.append("%s:%s: [%s] %s" % (r.file, r.position, r.error_kind, r.message))
    ok = sum(r.verdict == "verified" for r in report.records)
    failed = sum(r.verdict == "failed" for r in report.records)
    errors = sum(r.verdict == "error" for r in report.records)
    lines.append("%d verified, %d failed, %d errors; %d checks, %d quantifiers, %d value maps"
                 % (ok, failed, errors, sum(r.checks for r in report.records),
                    sum(r.quantifiers for r in report.records),
                    sum(r.value_maps for r in report.records)))
    return "\n".join(lines)


def bench(cfg: RunConfig, repetitions: int) -> List[dict]:
    """Per-file wall time over repeated runs, with failure counts."""
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    rows = []
    for path in cfg.paths:
        times, failures, status = [], 0, "ok"
        for _ in range(repetitions):
            t0 = time.monotonic()
            rep = run(RunConfig(**dict(asdict(cfg), paths=[path])))
            times.append((time.monotonic() - t0) * 1000)
            failures = sum(r.verdict != "verified" for r in rep.records)
            if any(r.error_kind in ("io", "input") for r in rep.records):
                status = "io-error"
        row = {"file": path, "runs": repetitions, "mean_ms": statistics.mean(times),
               "failures": failures, "status": status}
        if repetitions > 1:
            row["stddev_ms"] = statistics.stdev(times)
        rows.append(row)
    return rows


def format_bench(rows: List[dict]) -> str:
    has_sd = any("stddev_ms" in r for r in rows)
    head = "%-40s %10s" % ("file", "mean ms") + (" %10s" % "stddev" if has_sd else "") + " %8s" % "failures"
    out = [head]
    for r in rows:
        line = "%-40s %10.1f" % (r["file"], r["mean_ms"])
        if has_sd:
            line += " %10.1f" % r["stddev_ms"]
        line += " %8d" % r["failures"]
        if r["status"] != "ok":
            line += "  (%s)" % r["status"]
        out.append(line)
    out.append("spurious failures: %d" % sum(r["failures"] for r in rows if r["status"] == "ok"))
    return "\n".join(out)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("files", nargs="+")
    common.add_argument("--solver", help="solver binary (default: $QPV_SOLVER or z3)")
    common.add_argument("--timeout", type=float, default=10.0, help="per-check timeout in seconds")
    common.add_argument("-j", "--jobs", type=int, default=1, help="methods verified in parallel")
    common.add_argument("--seed", type=int, default=0, help="solver random seed")
    common.add_argument("--no-triggers", action="store_true", help="emit no patterns at all")
    common.add_argument("--no-memoize", action="store_true", help="disable summary caching")
    common.add_argument("--strict-inhale-injectivity", action="store_true",
                        help="also check receiver injectivity when inhaling")
    common.add_argument("--debug-invariants", action="store_true",
                        help="check internal invariants with extra solver queries")
    common.add_argument("--reverse-heap", action="store_true", help="reverse chunk order (testing)")
    common.add_argument("--dump-smt", metavar="DIR", help="write a replayable script per failed check")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qpv", description="Verifier for programs with quantified permissions.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="verify files")
    v.add_argument("--format", choices=["text", "jsonl"], default="text")
    v.add_argument("--no-times", action="store_true", help="omit timings from jsonl records")
    b = sub.add_parser("bench", parents=[common], help="time repeated verification runs")
    b.add_argument("-n", type=int, default=3, help="repetitions")
    b.add_argument("--format", choices=["text", "json"], default="text")
    b.add_argument("--ablation", action="append", default=[],
                   choices=["no-triggers", "no-memoize"],
                   help="also time the files with this feature disabled (repeatable)")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(paths=args.files, solver=args.solver, timeout=args.timeout, jobs=args.jobs,
                        seed=args.seed, no_triggers=args.no_triggers, no_memoize=args.no_memoize,
                        strict_inhale_injectivity=args.strict_inhale_injectivity,
                        debug_invariants=args.debug_invariants, reverse_heap=args.reverse_heap,
                        dump_smt=args.dump_smt)
        find_solver(cfg.solver)
    except (ValueError, SolverError) as e:
        print("qpv: %s" % e, file=sys.stderr)
        return EXIT_USAGE
    if args.command == "bench":
        configs = [("base", cfg)] + [
            (name, replace(cfg, **{name.replace("-", "_"): True})) for name in args.ablation]
        tables = {}
        try:
            for name, c in configs:
                tables[name] = bench(c, args.n)
        except ValueError as e:
            print("qpv: %s" % e, file=sys.stderr)
            return EXIT_USAGE
        if args.format == "json":
            print(json.dumps(tables if args.ablation else tables["base"], indent=2))
        else:
            print("\n\n".join("== %s\n%s" % (name, format_bench(rows)) if args.ablation
                               else format_bench(rows) for name, rows in tables.items()))
        return EXIT_OK
    report = run(cfg)
    if args.format == "jsonl":
        print("\n".join(report.lines(with_times=not args.no_times)))
    else:
        print(format_text(report))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
