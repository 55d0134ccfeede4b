"""Command-line scenario runner.

    chbohm run <scenario.toml | bundled name> [--out DIR] [--seed N] [--threads N]
    chbohm list
    chbohm check [--out DIR] [--threads N]

Flags can also be given through the environment as CHBOHM_OUT, CHBOHM_SEED
and CHBOHM_THREADS; a command-line flag wins over the environment, which
wins over the scenario file.

Exit codes: 0 success, 1 ``check`` found a failed claim or a
non-reproducible output, 2 scenario error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import filecmp
import logging
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from . import output
from .errors import NodeEncountered, NodeRegion, ScenarioParseError
from .experiments import RUNNERS
from .scenario import Scenario, load_scenario, parse_scenario

EXIT_OK, EXIT_CHECK_FAILED, EXIT_SCENARIO, EXIT_NUMERICAL = 0, 1, 2, 3
ENV_PREFIX = "CHBOHM_"

log = logging.getLogger("chbohm")


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("chbohm") / "scenarios"
    return {Path(p.name).stem: Path(str(p)) for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".toml")}


def resolve_scenario(ref: str) -> Scenario:
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    bundled = bundled_scenarios()
    if path.stem in bundled and path.suffix in ("", ".toml"):
        p = bundled[path.stem]
        return parse_scenario(p.read_text(), f"<bundled>/{p.name}")
    raise ScenarioParseError(f"no scenario file {ref!r} and no bundled scenario named {path.stem!r}")


def _env(name: str, cast, default=None):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ScenarioParseError(f"{ENV_PREFIX}{name}={raw!r} is not a valid {cast.__name__}") from None


def _u64(raw: str) -> int:
    v = int(raw)
    if not 0 <= v < 2**64:
        raise ValueError(f"{raw} is not an unsigned 64-bit integer")
    return v


def _positive(raw: str) -> int:
    v = int(raw)
    if v < 1:
        raise ValueError(f"{raw} is not a positive integer")
    return v


def run_scenario(sc: Scenario, out: Path, seed: Optional[int] = None, threads: int = 1) -> tuple[int, dict]:
    """Run every experiment of ``sc`` into ``out``; returns (exit code, summary)."""
    if seed is not None:
        sc.seed = seed
    out.mkdir(parents=True, exist_ok=True)
    summary = {"scenario": sc.name, "description": sc.description, "paper_claim": sc.claim,
               "seed": sc.seed, "experiments": {}}
    code = EXIT_OK
    for name in sc.experiments:
        log.info("%s: running %s", sc.name, name)
        try:
            outcome = RUNNERS[name](sc, out, threads)
        except (NodeEncountered, NodeRegion) as exc:
            report = {"scenario": sc.name, "experiment": name, "paper_claim": sc.claim,
                      "pass": False, "numerical_failure": str(exc)}
            output.write_json(out / f"{name}.json", report)
            summary["experiments"][name] = False
            code = EXIT_NUMERICAL
            continue
        report = {
            "scenario": sc.name, "experiment": name, "paper_claim": sc.claim, "seed": sc.seed,
            "pass": outcome.passed, "checks": outcome.checks, "result": outcome.result,
            "numerical_failure": outcome.numerical_failure,
        }
        output.write_json(out / f"{name}.json", report)
        summary["experiments"][name] = outcome.passed
        if outcome.numerical_failure is not None:
            log.error("%s: %s", name, outcome.numerical_failure)
            code = EXIT_NUMERICAL
        for c in outcome.checks:
            log.info("  [%s] %s", "pass" if c["pass"] else "FAIL", c["name"])
    summary["pass"] = all(summary["experiments"].values())
    output.write_json(out / "summary.json", summary)
    return code, summary


def cmd_run(args) -> int:
    sc = resolve_scenario(args.scenario)
    seed = args.seed if args.seed is not None else _env("SEED", _u64)
    threads = args.threads or _env("THREADS", _positive, 1)
    out = args.out or _env("OUT", str) or sc.output_dir or str(Path("out") / sc.name)
    code, summary = run_scenario(sc, Path(out), seed, threads)
    status = "pass" if summary["pass"] else "FAIL"
    print(f"{sc.name}: {status} ({len(summary['experiments'])} experiments) -> {out}")
    return code


def cmd_list(args) -> int:
    for name, path in bundled_scenarios().items():
        sc = parse_scenario(path.read_text(), path.name)
        print(f"{name:<24} {sc.description}")
    return EXIT_OK


def _same_tree(a: Path, b: Path) -> list[str]:
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if files_a != files_b:
        return ["<file list differs>"]
    return [str(p) for p in files_a if not filecmp.cmp(a / p, b / p, shallow=False)]


def cmd_check(args) -> int:
    threads = args.threads or _env("THREADS", _positive, 1)
    base = args.out or _env("OUT", str)
    with tempfile.TemporaryDirectory(prefix="chbohm-check-") as tmp:
        root = Path(base) if base else Path(tmp)
        rows, worst = [], EXIT_OK
        for name, path in bundled_scenarios().items():
            codes, passed = [], True
            for rep in ("a", "b"):
                sc = parse_scenario(path.read_text(), path.name)
                code, summary = run_scenario(sc, root / rep / name, None, threads)
                codes.append(code)
                passed = passed and summary["pass"]
            diff = _same_tree(root / "a" / name, root / "b" / name)
            rows.append((name, passed, not diff, max(codes), diff))
            if max(codes) != EXIT_OK:
                worst = max(worst, max(codes))
            elif diff or not passed:
                worst = max(worst, EXIT_CHECK_FAILED)
    print(f"{'scenario':<24} {'claims':<7} {'reproducible':<13} exit")
    for name, passed, same, code, diff in rows:
        print(f"{name:<24} {'pass' if passed else 'FAIL':<7} {'yes' if same else 'NO':<13} {code}")
        for d in diff:
            print(f"    differs: {d}")
    return worst


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chbohm", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario", help="scenario TOML file or bundled scenario name")
    run.add_argument("--out", help="output directory (env CHBOHM_OUT)")
    run.add_argument("--seed", type=_u64, help="random seed, overrides the scenario (env CHBOHM_SEED)")
    run.add_argument("--threads", type=_positive, help="worker threads; never changes results (env CHBOHM_THREADS)")
    run.set_defaults(func=cmd_run)

    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(func=cmd_list)

    chk = sub.add_parser("check", help="run all bundled scenarios twice and compare outputs byte for byte")
    chk.add_argument("--out", help="keep outputs here instead of a temporary directory")
    chk.add_argument("--threads", type=_positive)
    chk.set_defaults(func=cmd_check)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
