"""Command-line driver: vm, run, analyze, bench, report."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .bench import kernels as corpus
from .bench.suites import TestSuite, build_suite, load_suite, run_case
from .evo import Edit, SearchConfig, SearchError, evaluate_program, evolve, materialize
from .evo.search import read_generation_log
from .evo.variation import Fitness
from .mir import ParseError, parse, print_program, verify
from .simtvm import DEFAULT_COST_MODEL, CostModel, LaunchConfig, format_trace, launch

EXIT_OK, EXIT_USAGE, EXIT_FAULT, EXIT_VALIDATION = 0, 1, 2, 3

DESK_SEARCH = {"population_size": 64, "generations": 50}

log = logging.getLogger("evomir")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- shared helpers ---------------------------------------------------------

def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def load_program(ref: str):
    """A corpus kernel name or a path to IR text."""
    if ref in corpus.KERNELS and not os.path.exists(ref):
        return corpus.load_kernel(ref), ref
    try:
        with open(ref) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read program {ref}: {exc.strerror}") from None
    try:
        prog = parse(text)
    except ParseError as exc:
        raise UsageError(f"{ref}: {exc}") from None
    problems = verify(prog)
    if problems:
        raise UsageError(f"{ref}: invalid program: {problems[0]}")
    return prog, Path(ref).stem


def _kernel_of(prog, name: str) -> str:
    meta = dict(prog.metadata)
    kernel = meta.get("kernel", name)
    return kernel if kernel in corpus.FAMILY else name


def load_cost_model(path) -> CostModel:
    if not path:
        return DEFAULT_COST_MODEL
    try:
        return CostModel.from_json(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cost model {path}: {exc}") from None


def default_search_suite(kernel: str) -> TestSuite:
    """Desk-scale fitness suite used by ``run`` when no suite file is given."""
    from .bench.suites import gen_grid_suite, gen_sw_suite
    family = corpus.FAMILY[kernel]
    if family == "sw":
        return gen_sw_suite(n_pairs=8, lengths=(16, 48), seed=7, heldout_pairs=4,
                            heldout_lengths=(128, 192), kernel=kernel)
    if family == "diffusion":
        return gen_grid_suite((16, 16), steps=6, seeds=(0, 1), kernel=kernel)
    return gen_grid_suite((12, 12), steps=8, seeds=(0,), replicates=5, kernel=kernel)


def _suite_for(args, prog, name) -> TestSuite:
    kernel = _kernel_of(prog, name)
    if getattr(args, "suite", None):
        try:
            with open(args.suite) as fh:
                data = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"suite {args.suite}: {exc}") from None
        family = data.get("family")
        if corpus.FAMILY.get(kernel) != family:
            # an external program: encode the suite for the family's default kernel layout
            kernel = data.get("kernel") if corpus.FAMILY.get(data.get("kernel")) == family else None
        return build_suite(data, kernel, data.get("name"))
    if kernel not in corpus.FAMILY:
        raise UsageError("a --suite file is required for programs outside the corpus")
    return default_search_suite(kernel)


def manifest(config: dict, corpus_files=(), seeds=None, command: str = "") -> dict:
    return {
        "tool": "evomir",
        "tool_version": __version__,
        "config_hash": _sha(_canonical(config)),
        "corpus_version": corpus.CORPUS_VERSION,
        "corpus": {name: _sha(corpus.kernel_path(name).read_text()) for name in corpus_files},
        "seeds": seeds or {},
        "command": command,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def _write(path: Path, text: str):
    path.write_text(text)


# -- vm ---------------------------------------------------------------------

def _parse_kv(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"expected NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = int(v)
        except ValueError:
            raise UsageError(f"argument {k} must be an integer") from None
    return out


def cmd_vm(args) -> int:
    prog, name = load_program(args.program)
    cost = load_cost_model(args.cost_model)
    if args.suite:
        suite = _suite_for(args, prog, name)
        rows, code = [], EXIT_OK
        traces = []
        for case in suite.cases(args.partition):
            res = run_case(prog, case, suite.validator, cost, keep_results=True)
            if res.reason == "timeout" or res.reason.startswith("fault"):
                status = res.reason.split(":")[0]
            else:
                status = "completed"
            row = {"case": case.name, "passed": res.passed, "status": status,
                   "cycles": res.cycles if status == "completed" else None,
                   "reason": res.reason or None}
            rows.append(row)
            if row["status"] != "completed":
                code = EXIT_FAULT
            elif not res.passed and code == EXIT_OK:
                code = EXIT_VALIDATION
            if args.trace and res.results:
                r = launch(prog, case.launch, case.inputs, case.args, case.seeds[0],
                           cost_model=cost, trace=True)
                traces.append(f"# case {case.name}\n" + format_trace(r))
        done = [r["cycles"] for r in rows if r["cycles"] is not None]
        out = {"program": name, "suite": suite.name, "partition": args.partition,
               "status": "completed" if code != EXIT_FAULT else "fault",
               "cycles": sum(done) / len(done) if done else None, "cases": rows}
        if args.trace:
            _write(Path(args.trace), "".join(traces))
        print(json.dumps(out, indent=1, sort_keys=True))
        return code
    try:
        inputs = json.loads(args.inputs) if args.inputs else {}
    except ValueError as exc:
        raise UsageError(f"--inputs is not JSON: {exc}") from None
    try:
        cfg = LaunchConfig(args.blocks, args.threads, args.warp_size)
        res = launch(prog, cfg, inputs, _parse_kv(args.arg), args.launch_seed,
                     cost_model=cost, trace=bool(args.trace))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.trace:
        _write(Path(args.trace), format_trace(res))
    print(json.dumps(res.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK if res.completed else EXIT_FAULT


# -- run --------------------------------------------------------------------

def _search_config(args) -> SearchConfig:
    data = dict(DESK_SEARCH)
    path = args.search_config or args.config
    if path:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"config {path}: {exc}") from None
        data.update(loaded.get("search", loaded))
    if args.seed is not None:
        data["seed"] = args.seed
    for key in ("generations", "population_size"):
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    try:
        return SearchConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"search config: {exc}") from None


def cmd_run(args) -> int:
    prog, name = load_program(args.program)
    suite = _suite_for(args, prog, name)
    config = _search_config(args)
    cost = load_cost_model(args.cost_model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed_text = print_program(prog)
    run_config = {"search": config.to_dict(), "suite": suite.to_dict(), "seed_program": seed_text,
                  "cost_model": cost.table()}
    _write(out / "seed.ir", seed_text)
    _write(out / "suite.json", suite.to_json())
    _write(out / "cost_model.json", json.dumps(cost.table(), indent=1, sort_keys=True))
    _write(out / "config.json", json.dumps(config.to_dict(), indent=1, sort_keys=True))
    kernels = [name] if name in corpus.KERNELS else []
    man = manifest(run_config, kernels, {"search": config.seed}, "run")
    _write(out / "manifest.json", json.dumps(man, indent=1, sort_keys=True))
    try:
        result = evolve(prog, suite, config, cost_model=cost, jobs=args.jobs,
                        log_path=out / "generations.jsonl", checkpoint_path=out / "checkpoint.json",
                        resume=args.resume)
    except SearchError as exc:
        print(f"evomir run: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    best = result.best_variant
    _write(out / "best.ir", print_program(best.program))
    _write(out / "edits.json", json.dumps([e.to_dict() for e in best.edits], indent=1))
    heldout = None
    if suite.heldout and not args.skip_heldout:
        fit = evaluate_program(best.program, suite, cost_model=cost, partition="heldout")
        heldout = {"passed": isinstance(fit, Fitness),
                   "reason": None if isinstance(fit, Fitness) else f"{fit.reason} ({fit.test})"}
    summary = {
        "seed_cycles": result.seed_fitness.mean_cycles,
        "best_cycles": best.fitness.mean_cycles if best.valid else None,
        "speedup": result.speedup,
        "edits": [e.uid for e in best.edits],
        "generations": len(result.generation_log),
        "cycle_budget": result.cycle_budget,
        "heldout": heldout,
    }
    _write(out / "result.json", json.dumps(summary, indent=1, sort_keys=True))
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


# -- analyze ----------------------------------------------------------------

def _load_run(run: Path):
    try:
        prog = parse((run / "seed.ir").read_text())
        suite = load_suite(run / "suite.json")
        edits = [Edit.from_dict(d) for d in json.loads((run / "edits.json").read_text())]
        cost = CostModel.from_json(run / "cost_model.json")
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"{run} is not a complete run directory: {exc}") from None
    log_path = run / "generations.jsonl"
    gen_log = read_generation_log(log_path) if log_path.exists() else None
    return prog, suite, edits, cost, gen_log


def cmd_analyze(args) -> int:
    from .postopt import MAX_ENUMERATED, ProgramOracle, analyze
    run = Path(args.run)
    prog, suite, edits, cost, gen_log = _load_run(run)
    stages = {k: getattr(args, k) for k in ("minimize", "separate", "clusters", "history")}
    if not any(stages.values()):
        stages = dict.fromkeys(stages, True)
    oracle = ProgramOracle(prog, edits, suite, cost_model=cost)
    try:
        materialize(prog, edits)
    except Exception as exc:  # edits.json does not belong to seed.ir
        raise UsageError(f"edits do not apply to the seed program: {exc}") from None
    if stages["clusters"]:
        # run the earlier stages first to size the epistatic set
        pre = analyze(edits, oracle, prog, gen_log, minimize=stages["minimize"], separate=True,
                      clusters=False, history=False, theta=args.theta, tol=args.tol)
        if len(pre.epistatic) > MAX_ENUMERATED:
            print(f"evomir analyze: {len(pre.epistatic)} epistatic edits exceed the limit of "
                  f"{MAX_ENUMERATED}; minimize first", file=sys.stderr)
            return EXIT_USAGE
    try:
        report = analyze(edits, oracle, prog, gen_log, theta=args.theta, tol=args.tol,
                         jobs=args.jobs, **stages)
    except ValueError as exc:
        print(f"evomir analyze: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "analysis.json", report.to_json())
    _write(out / "graph.dot", report.to_dot())
    _write(out / "subsets.csv", report.to_csv())
    man = manifest({"run": _sha((run / "manifest.json").read_text()) if (run / "manifest.json").exists()
                    else "", "stages": stages, "theta": args.theta, "tol": args.tol}, (), {}, "analyze")
    _write(out / "analysis_manifest.json", json.dumps(man, indent=1, sort_keys=True))
    for stage in report.stages:
        log.info("stage %s done", stage)
    print(json.dumps({"stages": report.stages, "weaks": report.weaks,
                      "independent": sorted(report.independent or {}),
                      "epistatic": report.epistatic,
                      "clusters": [list(c) for c in report.graph.clusters] if report.graph else None,
                      "dependency_edges": [list(e) for e in report.graph.edges] if report.graph else None,
                      "first_generation": ({str(k): v for k, v in report.history.first_seen.items()}
                                           if report.history else None)},
                     sort_keys=True))
    return EXIT_OK


# -- bench ------------------------------------------------------------------

def validation_suites():
    """Suites used by ``bench --validate`` and ``--baseline``."""
    from .bench.suites import gen_grid_suite, gen_sw_suite
    out = []
    for k in ("sw_naive", "sw_tuned"):
        out.append((k, gen_sw_suite(n_pairs=6, lengths=(16, 64), seed=11, heldout_pairs=1,
                                    heldout_lengths=(96, 128), kernel=k)))
    for k in ("grid_diffusion_checked", "grid_diffusion_padded"):
        out.append((k, gen_grid_suite((32, 32), steps=8, seeds=(0, 1), heldout_dims=(40, 40),
                                      kernel=k)))
    out.append(("tcell_walk", gen_grid_suite((16, 16), steps=8, seeds=(0,), kernel="tcell_walk")))
    return out


def cmd_bench(args) -> int:
    if args.list:
        for k in corpus.KERNELS:
            print(f"{k}\t{corpus.FAMILY[k]}\t{corpus.kernel_path(k)}")
        return EXIT_OK
    if args.make_suite:
        from .bench.suites import gen_grid_suite, gen_sw_suite
        kind = args.make_suite
        seed = args.seed if args.seed is not None else 0
        if kind == "sw":
            suite = gen_sw_suite(args.pairs, (args.min_len, args.max_len), seed,
                                 heldout_pairs=args.heldout_pairs,
                                 heldout_lengths=(args.heldout_min_len, args.heldout_max_len))
        elif kind in ("diffusion", "tcell"):
            kernel = "grid_diffusion_padded" if kind == "diffusion" else "tcell_walk"
            suite = gen_grid_suite((args.width, args.height), args.steps, tuple(range(seed, seed + args.grids)),
                                   kernel=kernel)
        else:
            raise UsageError(f"unknown suite kind {kind}")
        text = suite.to_json()
        if args.out:
            _write(Path(args.out), text)
        else:
            print(text)
        return EXIT_OK
    if not (args.validate or args.baseline):
        raise UsageError("choose one of --list, --validate, --baseline, --make-suite")
    cost = load_cost_model(args.cost_model)
    rows, failures = [], 0
    for kernel, suite in validation_suites():
        prog = corpus.load_kernel(kernel)
        problems = verify(prog)
        if problems:
            print(f"{kernel}: {problems[0]}", file=sys.stderr)
            failures += 1
            continue
        cases = suite.cases("all" if args.validate else "fitness")
        cycles = []
        for case in cases:
            res = run_case(prog, case, suite.validator, cost)
            if not res.passed:
                print(f"{kernel}/{case.name}: {res.reason}", file=sys.stderr)
                failures += 1
            elif case in suite.fitness:
                cycles.append(res.cycles)
            if args.validate:
                log.info("%s %s %s", kernel, case.name, "ok" if res.passed else res.reason)
        mean = sum(cycles) / len(cycles) if cycles else None
        rows.append((kernel, suite.name, mean))
    if args.baseline:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kernel", "suite", "cycles"])
        for kernel, sname, mean in rows:
            w.writerow([kernel, sname, "" if mean is None else f"{mean:.1f}"])
        if args.out:
            _write(Path(args.out), buf.getvalue())
        print(buf.getvalue(), end="")
    if args.validate:
        print("validate: " + ("ok" if failures == 0 else f"{failures} failure(s)"))
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


# -- report -----------------------------------------------------------------

def cmd_report(args) -> int:
    run = Path(args.run)
    try:
        summary = json.loads((run / "result.json").read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"{run}: no run result ({exc})") from None
    lines = [f"run: {run}",
             f"seed cycles: {summary['seed_cycles']:.1f}",
             f"best cycles: {summary['best_cycles']:.1f}" if summary["best_cycles"] else "best: none",
             f"speedup: {summary['speedup']:.2f}x over {summary['generations']} generations",
             f"edits in best variant: {len(summary['edits'])}"]
    if summary.get("heldout"):
        h = summary["heldout"]
        lines.append("held-out tests: " + ("pass" if h["passed"] else f"FAIL {h['reason']}"))
    log_path = run / "generations.jsonl"
    if log_path.exists():
        recs = read_generation_log(log_path)
        lines.append("generation  best        mean        valid")
        for r in recs:
            best = "-" if r.best_fitness is None else f"{r.best_fitness:.1f}"
            mean = "-" if r.mean_fitness is None else f"{r.mean_fitness:.1f}"
            lines.append(f"{r.generation:>10}  {best:<10}  {mean:<10}  {r.validity_rate:.2f}")
    analysis = run / "analysis.json"
    if analysis.exists():
        a = json.loads(analysis.read_text())
        lines.append(f"weak edits: {a['weaks']}")
        if a["independent"] is not None:
            lines.append("independent: " + ", ".join(f"{d['edit']} ({d['perf_incr'] * 100:.2f}%)"
                                                     for d in a["independent"]))
        lines.append(f"epistatic: {a['epistatic']}")
        for c in a.get("clusters") or []:
            imp = "failed" if c["improvement"] is None else f"{c['improvement'] * 100:.2f}%"
            lines.append(f"cluster {c['edits']}: {imp}")
        for i, j in a.get("dependency_edges") or []:
            lines.append(f"  {i} requires {j}")
        for uid, note in sorted(a.get("annotations", {}).items(), key=lambda kv: int(kv[0])):
            lines.append(f"  {note}")
    print("\n".join(lines))
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def global_flags(top: bool) -> argparse.ArgumentParser:
        # subcommands accept the global flags too, without clobbering values
        # given before the subcommand name
        keep = {} if top else {"default": argparse.SUPPRESS}
        g = _Parser(add_help=False)
        g.add_argument("--seed", type=int, help="run seed", **({"default": None} | keep))
        g.add_argument("--jobs", type=int, help="parallel evaluations", **({"default": 1} | keep))
        g.add_argument("--cost-model", help="JSON cost table overriding the defaults",
                       **({"default": None} | keep))
        g.add_argument("--config", help="JSON config file", **({"default": None} | keep))
        g.add_argument("-v", "--verbose", action="store_true", **({"default": False} | keep))
        return g

    common = global_flags(False)
    p = _Parser(prog="evomir", description="Evolutionary optimization of SIMT kernels.",
                parents=[global_flags(True)])
    p.add_argument("--version", action="version", version=f"evomir {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    vm = sub.add_parser("vm", parents=[common], help="execute a program on the VM")
    vm.add_argument("program", help="IR file or corpus kernel name")
    vm.add_argument("--suite", help="suite JSON; runs every test of --partition")
    vm.add_argument("--partition", default="fitness", choices=("fitness", "heldout", "all"))
    vm.add_argument("--inputs", help='inline global inputs, e.g. \'{"A": [0, 1]}\'')
    vm.add_argument("--arg", action="append", metavar="NAME=VALUE", help="kernel argument")
    vm.add_argument("--blocks", type=int, default=1)
    vm.add_argument("--threads", type=int, default=32)
    vm.add_argument("--warp-size", type=int, default=32)
    vm.add_argument("--launch-seed", type=int, default=0, help="seed of the rand streams")
    vm.add_argument("--trace", help="write the execution trace here")

    run = sub.add_parser("run", parents=[common], help="evolve a program")
    run.add_argument("program", help="IR file or corpus kernel name")
    run.add_argument("--suite", help="suite JSON (default: built-in desk suite for corpus kernels)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--search-config", help="SearchConfig JSON")
    run.add_argument("--generations", type=int)
    run.add_argument("--population-size", type=int)
    run.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    run.add_argument("--skip-heldout", action="store_true")

    an = sub.add_parser("analyze", parents=[common], help="post-hoc analysis of a run")
    an.add_argument("run", help="run directory")
    an.add_argument("--minimize", action="store_true")
    an.add_argument("--separate", action="store_true")
    an.add_argument("--clusters", action="store_true")
    an.add_argument("--history", action="store_true")
    an.add_argument("--theta", type=float, default=0.01)
    an.add_argument("--tol", type=float, default=0.01)
    an.add_argument("--out", help="output directory (default: the run directory)")

    be = sub.add_parser("bench", parents=[common], help="corpus listing, validation, baselines")
    be.add_argument("--list", action="store_true")
    be.add_argument("--validate", action="store_true")
    be.add_argument("--baseline", action="store_true")
    be.add_argument("--make-suite", choices=("sw", "diffusion", "tcell"))
    be.add_argument("--out")
    be.add_argument("--pairs", type=int, default=64)
    be.add_argument("--min-len", type=int, default=16)
    be.add_argument("--max-len", type=int, default=64)
    be.add_argument("--heldout-pairs", type=int, default=16)
    be.add_argument("--heldout-min-len", type=int, default=128)
    be.add_argument("--heldout-max-len", type=int, default=256)
    be.add_argument("--width", type=int, default=32)
    be.add_argument("--height", type=int, default=32)
    be.add_argument("--steps", type=int, default=8)
    be.add_argument("--grids", type=int, default=4)

    rp = sub.add_parser("report", parents=[common], help="summarize a run directory")
    rp.add_argument("run")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("evomir: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    handler = {"vm": cmd_vm, "run": cmd_run, "analyze": cmd_analyze, "bench": cmd_bench,
               "report": cmd_report}[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"evomir {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
