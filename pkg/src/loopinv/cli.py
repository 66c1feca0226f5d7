"""Command line interface.

Commands: solve, gen, bench, check, serve.  Exit codes: 0 ok,
1 unsolved/failed, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import random
import sys
import time

from . import bench as bench_mod
from .formulas import Formula
from .parser import ParseError, parse_formula, parse_task, print_task, \
    render_formula
from .semantics import bounded_soundness, check_obligations
from .teacher import count_soft_violations, teach


def _load_task(path: str):
    text = pathlib.Path(path).read_text()
    return parse_task(text)


def cmd_solve(args) -> int:
    try:
        task = _load_task(args.file)
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.replay:
        from .engine import run_trace
        from .solver import make_solver
        trace = [int(t) for t in args.replay.split(",") if t != ""]
        st = run_trace(make_solver(task), (), trace)
        print(f"replay: {st.status} (reward {st.reward})")
        if st.status == "succeeded":
            inv = st.result.invariant
            print(f"invariant: {render_formula(inv)}")
            ok = bench_mod.verify_solution(task, inv)
            print(f"re-verified: {'yes' if ok else 'NO'}")
            return 0 if ok else 1
        return 1

    rep = bench_mod.solve_task(task, sims=args.sims, step_budget=args.steps,
                               timeout=args.timeout, greedy=args.greedy,
                               seed=args.seed)
    if rep.solved:
        print(f"invariant: {rep.invariant_text}")
        print(f"re-verified: yes (events {rep.events}, reward {rep.reward}, "
              f"{rep.steps} steps)")
        if not args.stable_output:
            print(f"time: {rep.wall_time:.2f}s")
        print(f"trace: {','.join(map(str, rep.trace))}")
        return 0
    print(f"unsolved ({rep.status})")
    return 1


def problem_record(p, idx: int) -> dict:
    rec = {
        "id": idx,
        "task_text": print_task(p.task, p.render),
        "inv_lin": render_formula(p.inv_lin) if p.inv_lin is not None else None,
        "inv_main": render_formula(p.inv_main) if p.inv_main is not None else None,
        "inv_aux": render_formula(p.inv_aux) if p.inv_aux is not None else None,
        "constraints": {k: (list(v) if isinstance(v, tuple) else v)
                        for k, v in vars(p.constraints).items()},
        "violations": sorted(p.violations),
        "seed": p.seed,
    }
    return rec


def cmd_gen(args) -> int:
    out_path = pathlib.Path(args.out) if args.out else None
    lines = []
    t0 = time.time()
    for i in range(args.count):
        seed = args.seed + i
        p = teach(seed, sims=args.sims, greedy=args.sims <= 0,
                  no_transform=args.no_transform)
        rec = problem_record(p, i)
        if args.export_solver:
            task = p.task
            from dataclasses import replace
            stripped = replace(task, invariants=())
            rec["task_text"] = print_task(stripped, p.render)
            for k in ("inv_lin", "inv_main", "inv_aux"):
                rec.pop(k)
        lines.append(json.dumps(rec, sort_keys=True))
    text = "\n".join(lines) + "\n"
    if out_path:
        out_path.write_text(text)
        msg = f"wrote {args.count} problems to {out_path}"
        if not args.stable_output:
            msg += f" in {time.time() - t0:.1f}s"
        print(msg)
    else:
        sys.stdout.write(text)
    return 0


def _iter_bench_tasks(path: pathlib.Path):
    if path.is_dir():
        for f in sorted(path.glob("*.imp")):
            yield f.name, parse_task(f.read_text())
    else:
        for i, line in enumerate(path.read_text().splitlines()):
            if not line.strip():
                continue
            rec = json.loads(line)
            yield f"#{rec.get('id', i)}", parse_task(rec["task_text"])


def cmd_bench(args) -> int:
    path = pathlib.Path(args.path)
    if not path.exists():
        print(f"error: {path} not found", file=sys.stderr)
        return 2
    tasks = list(_iter_bench_tasks(path))
    rep = bench_mod.run_bench(tasks, sims=args.sims, timeout=args.timeout,
                              workers=args.workers, step_budget=args.steps)
    for name, r in zip(rep.names, rep.reports):
        status = "solved" if r.solved else r.status
        line = f"{name}: {status}"
        if r.solved:
            line += f"  {r.invariant_text}"
        if not args.stable_output:
            line += f"  ({r.wall_time:.2f}s)"
        print(line)
    print(rep.summary() if not args.stable_output else
          f"solved {rep.solved}/{rep.total} ({100 * rep.solve_rate:.1f}%)")
    return 0 if rep.solved == rep.total else 1


def cmd_check(args) -> int:
    try:
        task = _load_task(args.file)
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.invariant:
        try:
            inv: Formula = parse_formula(args.invariant)
        except ParseError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    elif task.invariants:
        from .formulas import conj
        inv = conj(list(task.invariants))
    else:
        print("error: no invariant given (use --invariant)", file=sys.stderr)
        return 2

    results = check_obligations(task, inv)
    all_ok = True
    for name, res in results.items():
        line = f"{name}: {res.verdict}"
        if res.refuted:
            line += f"  counterexample {res.witness()}"
        print(line)
        all_ok &= res.proved
    if all_ok:
        cex = bounded_soundness(task)
        if cex is not None:
            print(f"bounded soundness violation: {cex}")
            all_ok = False
        else:
            print("bounded soundness: ok")
    return 0 if all_ok else 1


def cmd_serve(args) -> int:
    from .service import serve
    serve(port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loopinv")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="synthesize a loop invariant")
    p.add_argument("file")
    p.add_argument("--sims", type=int, default=None,
                   help="MCTS simulations per step (default: ladder)")
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--greedy", action="store_true",
                   help="no search: follow the highest-prior choice")
    p.add_argument("--replay", default=None,
                   help="comma-separated choice indices to replay")
    p.add_argument("--stable-output", action="store_true")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("gen", help="generate verified problems")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--sims", type=int, default=0,
                   help="teacher MCTS simulations per step (0 = greedy)")
    p.add_argument("--no-transform", action="store_true")
    p.add_argument("--export-solver", action="store_true",
                   help="strip reference invariants from the output")
    p.add_argument("--stable-output", action="store_true")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("bench", help="solve a directory or JSONL of problems")
    p.add_argument("path")
    p.add_argument("--sims", type=int, default=None)
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--stable-output", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("check", help="check an invariant against a task")
    p.add_argument("file")
    p.add_argument("--invariant", default=None)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("serve", help="run the interactive session service")
    p.add_argument("--port", type=int, default=8731)
    p.set_defaults(fn=cmd_serve)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
