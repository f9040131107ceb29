"""Command-line front end.

Thin orchestration over the library: every subcommand parses arguments,
calls the corresponding functions, and writes text/CSV/binary artifacts.
All parallelism lives inside the runtime; benchmark points run one after
another so their timings never interfere.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .cases import (case_plan, generate_case, load_case, save_case,
                    with_load_ratio)
from .dumps import read_dump, write_dump
from .errors import WcnsflowError
from .metrics import (RunMetrics, from_timeline, metrics_from_csv,
                      metrics_to_csv, render_report)
from .partition import plan_from_text, plan_to_text
from .runner import (best_ratio, model_schedule, run_case, run_socket_rank,
                     strong_scaling, sweep_load_ratio, weak_scaling)
from .schedule import Timeline, timeline_report


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _addresses(text: str) -> dict[int, tuple[str, int]]:
    out = {}
    for i, item in enumerate(v for v in text.split(",") if v):
        host, _, port = item.rpartition(":")
        out[i] = (host or "127.0.0.1", int(port))
    return out


def _load(args) -> tuple:
    case = load_case(args.case)
    if getattr(args, "max_iters", None) is not None:
        case = replace(case, controls=replace(case.controls,
                                              max_iters=args.max_iters))
    if getattr(args, "load_ratio", None) is not None:
        case = with_load_ratio(case, args.load_ratio)
    if getattr(args, "seed", None) is not None:
        case = replace(case, seed=args.seed)
    plan = None
    if getattr(args, "plan", None):
        with open(args.plan, "r", encoding="utf-8") as fh:
            plan = plan_from_text(fh.read())
    return case, plan


def _cmd_gen(args) -> int:
    kwargs = {}
    if args.n:
        vals = _ints(args.n)
        if args.kind == "uniform":
            kwargs["n"] = tuple(vals) if len(vals) == 3 else (vals[0],) * 3
        else:
            kwargs["n"] = vals[0] if len(vals) == 1 else tuple(vals)
    for name in ("blocks", "max_iters", "nodes", "columns", "cross"):
        v = getattr(args, name)
        if v is not None:
            kwargs[name] = v
    for name in ("cfl", "t_end", "fixed_dt", "load_ratio", "mach"):
        v = getattr(args, name)
        if v is not None:
            kwargs[name] = v
    if args.kind in ("uniform", "corner"):
        kwargs.pop("t_end", None)
        kwargs.pop("fixed_dt", None)
    if args.kind != "corner":
        for k in ("nodes", "columns", "cross", "load_ratio", "mach"):
            kwargs.pop(k, None)
    if args.kind == "sod":
        kwargs.pop("blocks", None)
        if "n" in kwargs:
            kwargs["nx"] = kwargs.pop("n")
    if args.kind == "wave":
        kwargs.pop("max_iters", None)
        kwargs.pop("cfl", None)
    case = generate_case(args.kind, **kwargs)
    if args.seed is not None:
        case = replace(case, seed=args.seed)
    if args.ranks is not None:
        topo = case.topology
        if args.kind != "corner":
            topo = replace(topo, nodes=1, cpu_per_node=args.ranks,
                           coproc_per_node=0)
        case = replace(case, ranks=args.ranks, topology=topo,
                       target_blocks=max(case.target_blocks or 1,
                                         args.ranks))
    save_case(case, args.out)
    print(f"wrote {args.out} ({case.kind}, zone {case.zone.shape}, "
          f"{case.zone.cells} cells, {case.ranks} ranks)")
    return 0


def _cmd_partition(args) -> int:
    case, _ = _load(args)
    if args.ranks is not None:
        case = replace(case, ranks=args.ranks)
    if args.blocks is not None:
        case = replace(case, target_blocks=args.blocks, cuts=None)
    plan = case_plan(case)
    text = plan_to_text(plan)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    for rank in range(plan.ranks):
        blocks = plan.blocks_of_rank(rank)
        cells = sum(b.cells for b in blocks)
        by_group = {g.id: (g.device_class, len(g.block_ids))
                    for g in plan.groups_of_rank(rank)}
        print(f"# rank {rank}: {len(blocks)} blocks, {cells} cells, "
              f"groups {by_group}", file=sys.stderr)
    return 0


def _cmd_run(args) -> int:
    case, plan = _load(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.transport == "socket":
        if args.rank is None or not args.addresses:
            raise WcnsflowError("socket mode needs --rank and --addresses")
        outcome = run_socket_rank(case, args.rank,
                                  _addresses(args.addresses),
                                  overlap=not args.no_overlap,
                                  coalesce=not args.naive_exchange,
                                  tile=args.tile, max_workers=args.workers)
        if outcome is None:
            print(f"rank {args.rank} done")
            return 0
    elif args.model_only:
        if plan is None:
            plan = case_plan(case)
        steps = max(case.controls.max_iters, 1)
        tl = model_schedule(case, plan, steps=steps,
                            overlap=not args.no_overlap,
                            coalesce=not args.naive_exchange)
        metrics = from_timeline(case.name, tl, total_cells=plan.total_cells,
                                iterations=steps, wall_seconds=0.0)
        print(timeline_report(tl))
        print(render_report([metrics]))
        tl.to_csv(str(out_dir / "timeline.csv"))
        metrics_to_csv([metrics], str(out_dir / "metrics.csv"))
        return 0
    else:
        outcome = run_case(case, plan, overlap=not args.no_overlap,
                           coalesce=not args.naive_exchange, tile=args.tile,
                           max_workers=args.workers, best_of=args.best_of)

    print(f"{case.name}: {outcome.iterations} iterations, "
          f"t = {outcome.sim_time:.6g}, "
          f"{'converged' if outcome.converged else 'finished'}, "
          f"wall {outcome.wall_seconds:.4f} s, "
          f"{outcome.metrics.mcups:.2f} MCUPS")
    write_dump(str(out_dir / "fields.bin"), outcome.fields)
    metrics_to_csv([outcome.metrics], str(out_dir / "metrics.csv"))
    if outcome.norm_history:
        with open(out_dir / "residuals.csv", "w", encoding="utf-8") as fh:
            fh.write("iteration,residual_norm\n")
            for i, v in enumerate(outcome.norm_history):
                fh.write(f"{i},{v!r}\n")
    if outcome.timeline is not None:
        outcome.timeline.to_csv(str(out_dir / "timeline.csv"))
        print(timeline_report(outcome.timeline))
    return 0


def _cmd_sweep_ratio(args) -> int:
    case, _ = _load(args)
    if case.coprocessor is None:
        print("single-device topology: ratio has no effect, flat curve")
    ratios = _floats(args.ratios)
    points = sweep_load_ratio(case, ratios, steps=args.steps,
                              overlap=not args.no_overlap,
                              coalesce=not args.naive_exchange)
    plan = case_plan(case)
    rows = []
    for p in points:
        m = RunMetrics(label=f"{case.name}-r{p.ratio:g}",
                       total_cells=plan.total_cells, iterations=args.steps,
                       wall_seconds=0.0, timing_source="model",
                       model_seconds=p.hetero_seconds,
                       extra=f"speedup={p.speedup:.4f}")
        rows.append(m)
        print(f"ratio {p.ratio:5.2f}  model {p.hetero_seconds*1e3:8.3f} ms  "
              f"cpu-only {p.cpu_only_seconds*1e3:8.3f} ms  "
              f"speedup {p.speedup:.3f}  {m.mcups:9.2f} MCUPS")
    best = best_ratio(points)
    print(f"best ratio {best.ratio:g} (speedup {best.speedup:.3f})")
    if args.out:
        metrics_to_csv(rows, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_bench(args) -> int:
    case, _ = _load(args)
    ranks = _ints(args.ranks) if args.ranks else [1, 2, 4, 8]
    rows: list[RunMetrics] = []
    if args.mode == "weak":
        if case.kind != "corner":
            raise WcnsflowError("weak mode scales the corner case; "
                                "use --case with kind corner")
        base = case
        rows = weak_scaling(
            lambda r: replace(
                generate_case(
                    "corner", nodes=r,
                    columns=base.zone.shape[0] // base.topology.nodes,
                    cross=base.zone.shape[1],
                    load_ratio=base.load_ratio,
                    max_iters=base.controls.max_iters),
                seed=base.seed),
            ranks, steps=args.steps)
        base_time = rows[0].model_seconds / rows[0].iterations
        for r, m in zip(ranks, rows):
            per = m.model_seconds / m.iterations
            print(f"ranks {r:3d}: {per*1e3:9.3f} ms/step  "
                  f"variation {abs(per-base_time)/base_time*100:5.2f}%  "
                  f"{m.mcups:9.2f} MCUPS")
    elif args.mode == "strong":
        rows = strong_scaling(case, ranks, steps=args.steps)
        t0 = rows[0].model_seconds
        for r, m in zip(ranks, rows):
            speedup = t0 / m.model_seconds
            eff = speedup / (r / ranks[0])
            m.extra = f"speedup={speedup:.3f};efficiency={eff:.3f}"
            print(f"ranks {r:3d}: {m.model_seconds*1e3:9.3f} ms  "
                  f"speedup {speedup:6.3f}  efficiency {eff:5.3f}")
    elif args.mode == "comm":
        plan = case_plan(case)
        tuned = model_schedule(case, plan, steps=args.steps,
                               overlap=True, coalesce=True)
        naive = model_schedule(case, plan, steps=args.steps,
                               overlap=False, coalesce=False)
        for label, tl in (("tuned", tuned), ("naive", naive)):
            m = from_timeline(f"{case.name}-{label}", tl,
                              total_cells=plan.total_cells,
                              iterations=args.steps, wall_seconds=0.0,
                              extra=f"comp_stall_ratio="
                                    f"{tl.comp_stall_ratio():.4g}")
            rows.append(m)
            print(f"{label}: makespan {tl.makespan*1e3:9.3f} ms  "
                  f"comp/comm {tl.comp_stall_ratio():.3g}  "
                  f"hidden {tl.hidden_comm_fraction*100:.1f}%")
    elif args.mode == "matrix":
        workers = _ints(args.workers_list) if args.workers_list else [1, 2, 4]
        for r in ranks:
            for w in workers:
                topo = replace(case.topology, nodes=1, cpu_per_node=r,
                               coproc_per_node=0)
                blocks = max(case.target_blocks or 1, r)
                variant = replace(case, ranks=r, topology=topo,
                                  coprocessor=None, target_blocks=blocks,
                                  cuts=None if blocks > (case.target_blocks
                                                         or 1) else case.cuts,
                                  name=f"{case.name}-p{r}t{w}")
                outcome = run_case(variant, best_of=args.best_of,
                                   max_workers=w, model=False)
                rows.append(outcome.metrics)
                print(f"procs {r} x threads {w}: "
                      f"{outcome.wall_seconds:.4f} s  "
                      f"{outcome.metrics.mcups:9.2f} MCUPS")
    else:
        raise WcnsflowError(f"unknown bench mode {args.mode!r}")
    if args.out:
        metrics_to_csv(rows, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_report(args) -> int:
    rows: list[RunMetrics] = []
    for path in args.metrics or []:
        rows.extend(metrics_from_csv(path))
    if rows or args.metrics:
        print(render_report(rows))
    if args.timeline:
        print(timeline_report(Timeline.from_csv(args.timeline)))
    if args.dump:
        dump = read_dump(args.dump)
        print(f"{args.dump}: {len(dump)} blocks")
        for bid in sorted(dump):
            data = dump[bid]
            print(f"  block {bid}: interior {data.shape[1:]}, "
                  f"rho [{data[0].min():.6g}, {data[0].max():.6g}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wcnsflow",
        description="Multi-block compressible-flow mini-solver "
                    "and benchmark harness.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a case file")
    g.add_argument("--kind", required=True,
                   choices=("uniform", "wave", "sod", "corner"))
    g.add_argument("--out", required=True)
    g.add_argument("--n", help="grid size: one int or nx,ny,nz")
    g.add_argument("--blocks", type=int)
    g.add_argument("--ranks", type=int)
    g.add_argument("--max-iters", dest="max_iters", type=int)
    g.add_argument("--cfl", type=float)
    g.add_argument("--t-end", dest="t_end", type=float)
    g.add_argument("--fixed-dt", dest="fixed_dt", type=float)
    g.add_argument("--nodes", type=int, help="corner: machine nodes")
    g.add_argument("--columns", type=int, help="corner: columns per node")
    g.add_argument("--cross", type=int, help="corner: cross-section width")
    g.add_argument("--load-ratio", dest="load_ratio", type=float)
    g.add_argument("--mach", type=float)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=_cmd_gen)

    q = sub.add_parser("partition", help="emit the partition plan for a case")
    q.add_argument("--case", required=True)
    q.add_argument("--ranks", type=int)
    q.add_argument("--blocks", type=int)
    q.add_argument("--load-ratio", dest="load_ratio", type=float)
    q.add_argument("--out")
    q.set_defaults(func=_cmd_partition)

    r = sub.add_parser("run", help="run a case and write dumps + metrics")
    r.add_argument("--case", required=True)
    r.add_argument("--plan")
    r.add_argument("--out-dir", dest="out_dir", default=".")
    r.add_argument("--best-of", dest="best_of", type=int, default=1)
    r.add_argument("--max-iters", dest="max_iters", type=int)
    r.add_argument("--load-ratio", dest="load_ratio", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--tile", type=int)
    r.add_argument("--no-overlap", dest="no_overlap", action="store_true")
    r.add_argument("--naive-exchange", dest="naive_exchange",
                   action="store_true")
    r.add_argument("--model-only", dest="model_only", action="store_true")
    r.add_argument("--transport", choices=("inproc", "socket"),
                   default="inproc")
    r.add_argument("--rank", type=int)
    r.add_argument("--addresses", help="host:port,host:port,... by rank")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep-ratio",
                       help="model the case across load ratios")
    s.add_argument("--case", required=True)
    s.add_argument("--ratios", required=True, help="comma list, e.g. 0.5,0.75")
    s.add_argument("--steps", type=int, default=2)
    s.add_argument("--max-iters", dest="max_iters", type=int)
    s.add_argument("--no-overlap", dest="no_overlap", action="store_true")
    s.add_argument("--naive-exchange", dest="naive_exchange",
                   action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_sweep_ratio)

    b = sub.add_parser("bench", help="scaling and exchange benchmarks")
    b.add_argument("--case", required=True)
    b.add_argument("--mode", required=True,
                   choices=("weak", "strong", "comm", "matrix"))
    b.add_argument("--ranks", help="comma list of rank counts")
    b.add_argument("--steps", type=int, default=2)
    b.add_argument("--max-iters", dest="max_iters", type=int)
    b.add_argument("--best-of", dest="best_of", type=int, default=1)
    b.add_argument("--workers-list", dest="workers_list",
                   help="matrix mode: comma list of worker counts")
    b.add_argument("--out")
    b.set_defaults(func=_cmd_bench)

    t = sub.add_parser("report", help="render metrics/timeline/dump files")
    t.add_argument("--metrics", nargs="*")
    t.add_argument("--timeline")
    t.add_argument("--dump")
    t.set_defaults(func=_cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WcnsflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
