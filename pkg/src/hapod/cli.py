"""Command line front end: gen, run, verify, bench.

Exit codes: 0 success, 1 usage or I/O problems, 2 a verification check
failed, 3 the numerics fell over (blow-up, non-finite data).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import io as hio
from .datagen import BurgersConfig, GenerationError, burgers_snapshots, synthetic_decay
from .hierarchy import LeafAssignment, actual_mean_error, assign_tolerances, distribute_columns, run_hapod
from .parallel import critical_path_time, peak_resident_modes, run_parallel
from .pod import InnerProductSpace, ModeSet, PodBackend, pod, truncation_rank
from .tree import RootedTree, build_balanced, build_chain, build_star, derive_maps, format_tree_text, parse_tree_text

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_NUMERIC = 3

MODES_FILE = "modes.hpd"
SIGMAS_FILE = "sigmas.txt"
REPORT_FILE = "report.tsv"
SUMMARY_FILE = "summary.txt"
TREE_FILE = "tree.txt"
RIGHT_FILE = "right_factor.hpd"


class _Parser(argparse.ArgumentParser):
    # argparse uses exit code 2 for usage errors; this tool reserves 2 for
    # verification failures, so remap
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunManifest:
    """Everything that determines a run's outputs; echoed into summary.txt."""

    input: str
    out: str
    eps_star: float
    omega: float
    topology: str
    blocks: int | None
    block_size: int | None
    depth: int | None
    backend: str
    workers: int
    seed: int | None
    track_right_factor: bool


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, bool):
        return "1" if v else "0"
    if v is None:
        return ""
    return str(v)


def _write_kv(path, pairs) -> None:
    with open(path, "w") as fh:
        for key, val in pairs:
            fh.write(f"{key}={_fmt(val)}\n")


def _read_kv(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, val = line.partition("=")
            out[key] = val
    return out


def _refuse_existing(paths, force: bool):
    if force:
        return
    for p in paths:
        if Path(p).exists():
            raise FileExistsError(f"{p} exists; pass --force to overwrite")


# ---------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    out = Path(args.output)
    sidecar = Path(str(out) + ".meta")
    _refuse_existing([out, sidecar], args.force)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "burgers":
        cfg = BurgersConfig(
            grid_size=args.grid_size,
            step_count=args.steps,
            time_step=args.time_step,
            spark_probability=args.spark_prob,
            spark_max=args.spark_max,
            seed=args.seed,
        )
        block, stats = burgers_snapshots(cfg, with_stats=True)
        meta = [
            ("kind", "burgers"),
            ("grid_size", cfg.grid_size),
            ("step_count", cfg.step_count),
            ("time_step", cfg.time_step),
            ("spark_probability", cfg.spark_probability),
            ("spark_max", cfg.spark_max),
            ("seed", cfg.seed),
            ("spark_count", stats["spark_count"]),
            ("spark_steps", ",".join(str(int(s)) for s in stats["spark_steps"])),
        ]
    else:
        block = synthetic_decay(args.rows, args.cols, args.decay_rate, args.seed)
        meta = [
            ("kind", "synthetic"),
            ("rows", args.rows),
            ("cols", args.cols),
            ("decay_rate", args.decay_rate),
            ("seed", args.seed),
        ]
    hio.write_matrix(out, block.values, block.space.weights)
    _write_kv(sidecar, meta)
    print(f"wrote {out} ({block.values.shape[0]}x{block.values.shape[1]}) and {sidecar}")
    return EXIT_OK


# ---------------------------------------------------------------- run


def _pick_topology(manifest: RunManifest, total_columns: int) -> RootedTree:
    name = manifest.topology
    if name.startswith("file:"):
        path = name[len("file:") :]
        return parse_tree_text(Path(path).read_text())
    depth = manifest.depth
    if ":" in name:
        name, _, suffix = name.partition(":")
        try:
            depth = int(suffix)
        except ValueError:
            raise ValueError(f"bad topology depth suffix in {manifest.topology!r}") from None
    if manifest.blocks is not None and manifest.block_size is not None:
        raise ValueError("pass --blocks or --block-size, not both")
    if manifest.blocks is not None:
        k = manifest.blocks
    elif manifest.block_size is not None:
        k = max(1, math.ceil(total_columns / manifest.block_size))
    else:
        raise ValueError("pick a leaf split with --blocks or --block-size")
    if k < 1:
        raise ValueError("need at least one block")
    if name == "star":
        return build_star(k)
    if name == "chain":
        return build_chain(k)
    if name == "balanced":
        return build_balanced(k, depth if depth is not None else 2)
    raise ValueError(f"unknown topology {manifest.topology!r} (star, chain, balanced[:depth], file:PATH)")


def _leaf_ranges(tree: RootedTree, leaves: LeafAssignment) -> dict[int, tuple[int, int]]:
    order = derive_maps(tree).leaf_order
    ranges = {}
    at = 0
    for leaf in order:
        c = leaves.blocks[leaf].count
        ranges[leaf] = (at, at + c)
        at += c
    return ranges


def _write_report(path, reports, ranges) -> None:
    cols = [
        "node", "level", "is_leaf", "input_count", "subordinate_count",
        "local_epsilon", "output_mode_count", "discarded_tail_energy",
        "wall_time", "col_start", "col_end",
    ]
    with open(path, "w") as fh:
        fh.write("\t".join(cols) + "\n")
        for r in reports:
            span = ranges.get(r.node)
            fh.write(
                "\t".join(
                    [
                        str(r.node),
                        str(r.level),
                        "1" if r.is_leaf else "0",
                        str(r.input_count),
                        str(r.subordinate_count),
                        repr(float(r.local_epsilon)),
                        str(r.output_mode_count),
                        repr(float(r.discarded_tail_energy)),
                        repr(float(r.wall_time)),
                        str(span[0]) if span else "",
                        str(span[1]) if span else "",
                    ]
                )
                + "\n"
            )


def _read_report(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            rows.append(dict(zip(header, parts)))
    return rows


def _streaming_mean_error(input_path, modes: ModeSet) -> float:
    """Second pass over the stored snapshots: mean squared projection residual."""
    p = Path(input_path)
    if p.suffix.lower() == ".csv":
        return actual_mean_error(hio.load_snapshots(p), modes)
    total = 0.0
    seen = 0
    for cols in hio.iter_columns(p):
        coeff = modes.space.gram(modes.modes, cols)
        resid = cols - modes.modes @ coeff
        total += float(np.sum(modes.space.norms_sq(resid)))
        seen += cols.shape[1]
    return total / seen if seen else 0.0


def cmd_run(args) -> int:
    manifest = RunManifest(
        input=args.input,
        out=args.out,
        eps_star=args.eps_star,
        omega=args.omega,
        topology=args.topology,
        blocks=args.blocks,
        block_size=args.block_size,
        depth=args.depth,
        backend=args.backend,
        workers=args.workers,
        seed=args.seed,
        track_right_factor=args.track_right_factor,
    )
    block = hio.load_snapshots(manifest.input)
    if block.count == 0:
        raise ValueError(f"{manifest.input}: no snapshot columns")
    tree = _pick_topology(manifest, block.count)
    maps = derive_maps(tree)
    leaves = distribute_columns(tree, block, block_size=manifest.block_size, maps=maps)
    tol = assign_tolerances(tree, leaves, manifest.eps_star, manifest.omega)
    backend = PodBackend(manifest.backend)

    outdir = Path(manifest.out)
    if outdir.exists() and any(outdir.iterdir()) and not args.force:
        raise FileExistsError(f"{outdir} exists and is not empty; pass --force to overwrite")
    outdir.mkdir(parents=True, exist_ok=True)

    ranges = _leaf_ranges(tree, leaves)
    started = time.perf_counter()
    result, stats = run_parallel(
        tree, leaves, tol, backend, manifest.workers,
        track_right_factor=manifest.track_right_factor,
    )
    wall = time.perf_counter() - started

    hio.write_matrix(outdir / MODES_FILE, result.modes.modes, block.space.weights)
    hio.write_floats(outdir / SIGMAS_FILE, result.modes.sigmas)
    (outdir / TREE_FILE).write_text(format_tree_text(tree))
    _write_report(outdir / REPORT_FILE, result.reports, ranges)
    if result.right_factor is not None:
        hio.write_matrix(outdir / RIGHT_FILE, result.right_factor)

    mean_error = _streaming_mean_error(manifest.input, result.modes)
    summary = [
        ("input", manifest.input),
        ("snapshot_count", block.count),
        ("dimension", block.space.dimension),
        ("weighted", block.space.weights is not None),
        ("topology", manifest.topology),
        ("depth", maps.depth),
        ("blocks", len(maps.leaf_order)),
        ("block_size", manifest.block_size),
        ("eps_star", float(manifest.eps_star)),
        ("omega", float(manifest.omega)),
        ("backend", manifest.backend),
        ("workers", manifest.workers),
        ("seed", manifest.seed),
        ("track_right_factor", manifest.track_right_factor),
        ("apriori_error_bound", result.apriori_error_bound),
        ("mean_error", mean_error),
        ("mode_count", result.mode_count),
        ("max_intermediate_modes", result.max_intermediate_modes(include_leaves=False)),
        ("peak_resident_modes", stats.peak_resident_modes),
        ("critical_path_time", stats.critical_path_time),
        ("total_node_time", stats.total_node_time),
        ("wall_time", wall),
    ]
    _write_kv(outdir / SUMMARY_FILE, summary)
    print(
        f"{result.mode_count} modes for {block.count} snapshots; "
        f"mean error {mean_error:.6g} <= target {manifest.eps_star**2:.6g}; "
        f"a-priori bound {result.apriori_error_bound:.6g}; outputs in {outdir}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- verify


def _oracle_count(values: np.ndarray, space: InnerProductSpace, epsilon: float) -> int:
    """Mode count of one flat POD at the given tolerance, via dense SVD."""
    if epsilon == 0.0:
        return values.shape[1]
    if values.shape[1] == 0:
        return 0
    svals = scipy.linalg.svdvals(space.weigh(values))
    return truncation_rank(svals, epsilon)


def cmd_verify(args) -> int:
    results = Path(args.results)
    for name in (SUMMARY_FILE, REPORT_FILE, SIGMAS_FILE, MODES_FILE, TREE_FILE):
        if not (results / name).exists():
            raise FileNotFoundError(f"{results / name}: missing result file")
    summary = _read_kv(results / SUMMARY_FILE)
    eps_star = float(summary["eps_star"])
    omega = float(summary["omega"])

    input_path = Path(args.input)
    if input_path.suffix.lower() != ".csv":
        rows, cols, _ = hio.read_matrix_header(input_path)
        if rows * cols > args.cap:
            print(
                f"refusing dense verification: {rows}x{cols} = {rows * cols} entries "
                f"exceeds the cap of {int(args.cap)} (raise with --cap)",
                file=sys.stderr,
            )
            return EXIT_USAGE
    snapshots = hio.load_snapshots(input_path)
    if snapshots.values.size > args.cap:
        print(
            f"refusing dense verification: {snapshots.values.size} entries exceed "
            f"the cap of {int(args.cap)} (raise with --cap)",
            file=sys.stderr,
        )
        return EXIT_USAGE
    space = snapshots.space

    mode_values, mode_weights = hio.read_matrix(results / MODES_FILE)
    if (mode_weights is None) != (space.weights is None) or (
        mode_weights is not None and not np.array_equal(mode_weights, space.weights)
    ):
        print("check weights: FAIL (modes file and input disagree on inner product)")
        return EXIT_VERIFY
    sigmas = hio.read_floats(results / SIGMAS_FILE)
    tree = parse_tree_text((results / TREE_FILE).read_text())
    report = _read_report(results / REPORT_FILE)

    checks: list[tuple[str, bool, str]] = []

    ok_sig = (
        sigmas.size == mode_values.shape[1]
        and bool(np.all(np.isfinite(sigmas)))
        and bool(np.all(sigmas >= 0.0))
        and (sigmas.size < 2 or bool(np.all(np.diff(sigmas) <= 0.0)))
    )
    checks.append(
        ("sigmas-file", ok_sig,
         f"{sigmas.size} values for {mode_values.shape[1]} modes, finite/nonnegative/sorted")
    )

    finite_modes = bool(np.all(np.isfinite(mode_values)))
    if finite_modes and mode_values.shape[1]:
        g = space.gram(mode_values, mode_values)
        drift = float(np.max(np.abs(g - np.eye(mode_values.shape[1]))))
    else:
        drift = 0.0 if finite_modes else float("inf")
    checks.append(("modes-orthonormal", drift <= 1e-8, f"max Gramian drift {drift:.3e}"))
    if not finite_modes:
        for name, ok, detail in checks:
            print(f"check {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        print("verification failed: modes-orthonormal (non-finite modes)", file=sys.stderr)
        return EXIT_VERIFY

    modes = ModeSet(space, sigmas if ok_sig else np.ones(mode_values.shape[1]), mode_values)
    mean_err = _streaming_mean_error(input_path, modes)
    checks.append(
        ("mean-error", mean_err <= eps_star * eps_star,
         f"measured {mean_err:.6g} vs target {eps_star * eps_star:.6g}")
    )

    root_budget = math.sqrt(snapshots.count) * omega * eps_star
    root_oracle = _oracle_count(snapshots.values, space, root_budget)
    checks.append(
        ("root-mode-bound", mode_values.shape[1] <= root_oracle,
         f"{mode_values.shape[1]} modes vs flat-POD count {root_oracle} at its budget")
    )

    maps = derive_maps(tree)
    spans = {int(r["node"]): (int(r["col_start"]), int(r["col_end"])) for r in report if r["col_start"]}
    worst = ""
    ok_nodes = True
    for r in report:
        node = int(r["node"])
        if node == tree.root:
            continue
        eps_local = float(r["local_epsilon"])
        cols = [spans[leaf] for leaf in maps.subtree_nodes[node] if leaf in spans]
        pieces = [snapshots.values[:, a:b] for a, b in sorted(cols)]
        sub = np.hstack(pieces) if pieces else np.zeros((space.dimension, 0))
        bound = _oracle_count(sub, space, eps_local)
        if int(r["output_mode_count"]) > bound:
            ok_nodes = False
            worst = f"node {node}: {r['output_mode_count']} modes exceed flat-POD count {bound}"
            break
    checks.append(("node-mode-bounds", ok_nodes, worst or "every non-root node within its flat-POD count"))

    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        print(f"check {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    if failed:
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    print("verification passed")
    return EXIT_OK


# ---------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes:
        raise ValueError("no sizes given")
    topologies = [t.strip() for t in args.topologies.split(",") if t.strip()]
    rows = ["size\ttopology\tdepth\tblock\tseq_time\tcritical_path_time\tpeak_modes"]
    for size in sizes:
        data = synthetic_decay(args.rows, size, args.decay_rate, args.seed)
        flat_eps = math.sqrt(size) * args.eps_star
        started = time.perf_counter()
        flat = pod(data, flat_eps, PodBackend("gram"))
        flat_time = time.perf_counter() - started
        rows.append(
            f"{size}\tpod\t1\t{size}\t{repr(flat_time)}\t{repr(flat_time)}\t{flat.count}"
        )
        blocks = max(1, math.ceil(size / args.block_size))
        for name in topologies:
            if name == "star":
                tree = build_star(blocks)
            elif name == "chain":
                tree = build_chain(blocks)
            elif name == "balanced":
                tree = build_balanced(blocks, args.depth)
            else:
                raise ValueError(f"unknown topology {name!r} in --topologies")
            maps = derive_maps(tree)
            leaves = distribute_columns(tree, data, block_size=args.block_size, maps=maps)
            tol = assign_tolerances(tree, leaves, args.eps_star, args.omega)
            started = time.perf_counter()
            result = run_hapod(tree, leaves, tol, PodBackend("gram"))
            seq_time = time.perf_counter() - started
            rows.append(
                "\t".join(
                    [
                        str(size), name, str(maps.depth), str(args.block_size),
                        repr(seq_time),
                        repr(critical_path_time(result.reports)),
                        str(peak_resident_modes(tree, result.reports)),
                    ]
                )
            )
    table = "\n".join(rows) + "\n"
    if args.output:
        Path(args.output).write_text(table)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(table)
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hapod", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate snapshot data")
    gen_sub = gen.add_subparsers(dest="kind", required=True)
    gb = gen_sub.add_parser("burgers", help="forced 1-d Burgers trajectory")
    gb.add_argument("--grid-size", type=int, default=500)
    gb.add_argument("--steps", type=int, default=10000)
    gb.add_argument("--time-step", type=float, default=1e-4)
    gb.add_argument("--spark-prob", type=float, default=1e-3)
    gb.add_argument("--spark-max", type=float, default=0.2)
    gs = gen_sub.add_parser("synthetic", help="random matrix with prescribed spectrum")
    gs.add_argument("--rows", type=int, required=True)
    gs.add_argument("--cols", type=int, required=True)
    gs.add_argument("--decay-rate", type=float, required=True)
    for g in (gb, gs):
        g.add_argument("--seed", type=int, default=0)
        g.add_argument("-o", "--output", required=True)
        g.add_argument("--force", action="store_true")
        g.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="compress a snapshot file")
    run.add_argument("input")
    run.add_argument("--out", required=True, help="results directory")
    run.add_argument("--eps-star", type=float, required=True, help="mean-error target")
    run.add_argument("--omega", type=float, default=0.75)
    run.add_argument("--topology", required=True, help="star | chain | balanced[:depth] | file:PATH")
    run.add_argument("--blocks", type=int, default=None)
    run.add_argument("--block-size", type=int, default=None)
    run.add_argument("--depth", type=int, default=None)
    run.add_argument("--backend", choices=("gram", "svd"), default="gram")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--track-right-factor", action="store_true")
    run.add_argument("--force", action="store_true")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="recompute dense POD and check the bounds")
    ver.add_argument("results", help="directory written by run")
    ver.add_argument("input", help="the snapshot file that was compressed")
    ver.add_argument("--cap", type=float, default=5e7,
                     help="refuse dense recomputation beyond this many matrix entries")
    ver.set_defaults(func=cmd_verify)

    ben = sub.add_parser("bench", help="time flat POD against tree HAPOD")
    ben.add_argument("--rows", type=int, default=500)
    ben.add_argument("--sizes", required=True, help="comma-separated snapshot counts")
    ben.add_argument("--block-size", type=int, default=100)
    ben.add_argument("--depth", type=int, default=2)
    ben.add_argument("--topologies", default="balanced", help="comma list of star,chain,balanced")
    ben.add_argument("--decay-rate", type=float, default=0.02)
    ben.add_argument("--eps-star", type=float, default=1e-3)
    ben.add_argument("--omega", type=float, default=0.75)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("-o", "--output", default=None)
    ben.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except GenerationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
