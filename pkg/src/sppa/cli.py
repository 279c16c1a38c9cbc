"""``sppa`` command line: ingest, split, statistics, fusion and heatmaps.

Every subcommand accepts ``--config FILE`` holding ``key=value`` lines whose
keys are option names (dashes or underscores); explicit flags win.  Each
command writes its declared outputs atomically plus a run manifest.

Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

from . import __version__
from ._io import atomic_write, manifest_text
from .benchmark import BenchmarkConfig, run_benchmark
from .colocation import (
    GlobalClqTable,
    LclqConfig,
    global_clq,
    lclq_vectors,
    mean_lclq,
    second_order_table,
    training_subset,
    vectors_to_csv,
)
from .core import (
    DataError,
    check_split_covers,
    export_csv,
    read_dataset,
    read_split_file,
    split_dataset,
    write_splits,
)
from .fusion import (
    SOURCES,
    FusionWeights,
    ProbTable,
    evaluate,
    fit_weights,
    fuse,
    predict,
    read_prob_table,
)
from .heatmap import format_kv, parse_kv, pgm_bytes, raster_csv, raster_meta, read_raster
from .intensity import GridSpec, KdeConfig, default_bandwidth, first_order_table, intensity_raster
from .synth import RNG_NAME, OracleSpec, csr_dataset, noisy_visual_table, segregated_dataset


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --- argument helpers -------------------------------------------------------

def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _truthy(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _add_kde(p, prefix="kde"):
    p.add_argument(f"--{prefix}-h", type=float, help="bandwidth (default: 5%% of bbox diagonal)")
    p.add_argument("--cutoff", type=float, default=5.0, help="truncation radius in bandwidths")
    p.add_argument("--no-truncation", action="store_true", help="sum over every point")


def _add_lclq(p):
    p.add_argument("--lclq-h", "--h", dest="lclq_h", type=float, help="LCLQ bandwidth (default: 5%% of bbox diagonal)")
    p.add_argument("--self-correction", action="store_true", help="use (N_Y-1)/(N-1) for the anchor's own category")


def _kde_cfg(args, ds) -> KdeConfig:
    h = args.kde_h if args.kde_h is not None else default_bandwidth(ds.bbox)
    return KdeConfig(h, args.cutoff, not _truthy(args.no_truncation))


def _lclq_cfg(args, ds) -> LclqConfig:
    h = args.lclq_h if args.lclq_h is not None else default_bandwidth(ds.bbox)
    return LclqConfig(h, args.cutoff, not _truthy(args.no_truncation), self_correction=_truthy(args.self_correction))


def _load_splits(args, ds):
    if not getattr(args, "splits", None):
        return None
    split = read_split_file(args.splits)
    check_split_covers(ds, split)
    return split


def _subset_ids(split, names: str, ds) -> list[int]:
    if split is None:
        return [int(i) for i in ds.ids]
    ids = []
    for name in names.split(","):
        ids += split.ids(name.strip())
    return sorted(ids)


def _truth(ds) -> dict[int, int]:
    return {int(i): int(c) for i, c in zip(ds.ids, ds.labels)}


class Run:
    """Collects inputs/outputs of one command and writes its manifest."""

    def __init__(self, args):
        self.args = args
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.extra: dict[str, object] = {}

    def input(self, path):
        self.inputs.append(str(path))
        return path

    def write(self, path, data):
        atomic_write(path, data)
        self.outputs.append(str(path))

    def finish(self):
        params = {k: v for k, v in vars(self.args).items() if k not in ("func", "config", "manifest")}
        params.update(self.extra)
        manifest = self.args.manifest or f"{self.outputs[0]}.manifest.txt"
        text = manifest_text(self.args.command, __version__, params, self.inputs, self.outputs)
        atomic_write(manifest, text)


# --- commands ---------------------------------------------------------------

def cmd_ingest(args, run: Run):
    ds = read_dataset(run.input(args.input))
    run.write(args.out, ds.summary())
    if args.export:
        run.write(args.export, export_csv(ds))
    sys.stdout.write(ds.summary())


def cmd_split(args, run: Run):
    ds = read_dataset(run.input(args.dataset))
    if len(args.fractions) != 3:
        raise UsageError("--fractions needs three values")
    try:
        split = split_dataset(ds, args.fractions, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    run.extra["rng"] = RNG_NAME
    run.write(args.out, write_splits(split))
    counts = split.counts()
    print(" ".join(f"{k}={v}" for k, v in counts.items()))


def _grid(args, ds, h) -> GridSpec:
    if args.grid:
        vals = args.grid
        if len(vals) != 5:
            raise UsageError("--grid needs x0,y0,cell,width,height")
        return GridSpec(vals[0], vals[1], vals[2], int(vals[3]), int(vals[4]))
    return GridSpec.fit(ds.bbox, args.grid_cells, args.margin * h)


def _add_grid(p):
    p.add_argument("--grid", type=_floats, help="explicit grid x0,y0,cell,width,height")
    p.add_argument("--grid-cells", type=int, default=64, help="cells along the longer side (auto grid)")
    p.add_argument("--margin", type=float, default=3.0, help="auto grid margin in bandwidths")


def _raster_from_args(args, run: Run):
    ds = read_dataset(run.input(args.dataset))
    split = _load_splits(args, ds)
    if split is not None:
        run.input(args.splits)
    train = training_subset(ds, split)
    try:
        c = train.category_index(args.category)
    except KeyError as exc:
        raise DataError(str(exc.args[0])) from None
    cfg = _kde_cfg(args, train)
    run.extra["kde_h_used"] = repr(cfg.bandwidth)
    return intensity_raster(train, c, _grid(args, train, cfg.bandwidth), cfg)


def cmd_intensity(args, run: Run):
    raster = _raster_from_args(args, run)
    run.write(args.out, raster_csv(raster))
    run.write(f"{args.out}.meta", format_kv(raster_meta(raster)))


def cmd_heatmap(args, run: Run):
    if args.raster:
        meta_path = args.raster_meta or f"{args.raster}.meta"
        with open(run.input(args.raster), encoding="utf-8") as fh:
            body = fh.read()
        with open(run.input(meta_path), encoding="utf-8") as fh:
            meta = fh.read()
        raster = read_raster(body, meta, args.raster)
    elif args.dataset and args.category:
        raster = _raster_from_args(args, run)
    else:
        raise UsageError("heatmap needs --raster or --dataset with --category")
    image, meta = pgm_bytes(raster, args.mode)
    run.write(args.out, image)
    run.write(f"{args.out}.meta", format_kv(meta))


def cmd_lclq(args, run: Run):
    ds = read_dataset(run.input(args.dataset))
    split = _load_splits(args, ds)
    if split is not None:
        run.input(args.splits)
    pts = training_subset(ds, split)
    cfg = _lclq_cfg(args, pts)
    run.extra["lclq_h_used"] = repr(cfg.bandwidth)
    vectors = lclq_vectors(pts, [int(i) for i in pts.ids], cfg)
    run.write(args.out, vectors_to_csv(vectors, pts.n_categories))
    means = mean_lclq(vectors)
    report = "".join(
        f"mean_lclq[{c.name}]={means[c.index]:.6f}\n" for c in pts.categories
    ) + f"isolated={sum(v.isolated for v in vectors)}\n"
    if args.report:
        run.write(args.report, report)
    sys.stdout.write(report)


def cmd_globalclq(args, run: Run):
    ds = read_dataset(run.input(args.dataset))
    split = _load_splits(args, ds)
    if split is not None:
        run.input(args.splits)
    cfg = _lclq_cfg(args, training_subset(ds, split))
    run.extra["lclq_h_used"] = repr(cfg.bandwidth)
    table = global_clq(ds, split, cfg)
    run.write(args.out, table.to_csv())


def cmd_locprobs(args, run: Run):
    ds = read_dataset(run.input(args.dataset))
    split = _load_splits(args, ds)
    if split is not None:
        run.input(args.splits)
    train = training_subset(ds, split)
    ids = _subset_ids(split, args.subset, ds)
    coords = ds.xy[[ds.position(i) for i in ids]]
    if args.order == "first":
        cfg = _kde_cfg(args, train)
        run.extra["kde_h_used"] = repr(cfg.bandwidth)
        table = ProbTable(ids, first_order_table(train, coords, cfg), "first_order")
    else:
        cfg = _lclq_cfg(args, train)
        run.extra["lclq_h_used"] = repr(cfg.bandwidth)
        if args.table:
            with open(run.input(args.table), newline="", encoding="utf-8") as fh:
                clq = GlobalClqTable.from_csv(fh, args.table)
        else:
            clq = global_clq(ds, split, cfg)
        table = ProbTable(ids, second_order_table(train, clq, coords, cfg), "second_order")
    run.write(args.out, table.to_csv())


def _tables(args, run: Run):
    return tuple(
        read_prob_table(run.input(path), source)
        for path, source in zip((args.visual, args.first, args.second), SOURCES)
    )


def cmd_fuse_fit(args, run: Run):
    ds = read_dataset(run.input(args.truth))
    tables = _tables(args, run)
    split = _load_splits(args, ds)
    if split is not None:
        run.input(args.splits)
        ids = split.ids(args.fit_split)
    else:
        ids = [int(i) for i in tables[0].ids]
    active = tuple(s.strip() for s in args.sources.split(","))
    try:
        weights, report = fit_weights(tables, _truth(ds), ids, args.step, active)
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise UsageError(str(exc)) from None
    run.write(args.out, weights.to_text())
    if args.report:
        run.write(args.report, report.render())
    sys.stdout.write(weights.to_text())


def cmd_evaluate(args, run: Run):
    ds = read_dataset(run.input(args.truth))
    split = _load_splits(args, ds)
    if split is not None:
        run.input(args.splits)
    if args.probs:
        probs = read_prob_table(run.input(args.probs), "fused")
        ids = split.ids(args.split) if split is not None else [int(i) for i in probs.ids]
        rows = probs.rows(ids)
    elif args.visual and args.first and args.second and args.weights:
        tables = _tables(args, run)
        with open(run.input(args.weights), encoding="utf-8") as fh:
            w = FusionWeights.from_text(fh.read())
        # without splits, score the ids every source covers
        if split is not None:
            ids = split.ids(args.split)
        else:
            ids = sorted(set.intersection(*(set(t.ids.tolist()) for t in tables)))
        rows = fuse(w, *(t.rows(ids) for t in tables))
    else:
        raise UsageError("evaluate needs --probs or --visual/--first/--second/--weights")
    truth_all = _truth(ds)
    try:
        truth = {i: truth_all[i] for i in ids}
    except KeyError as exc:
        raise DataError(f"id {exc.args[0]} not in truth dataset") from None
    pred = predict(rows)
    preds = {i: int(p) for i, p in zip(ids, pred)}
    report = evaluate(preds, truth, ds.n_categories, [c.name for c in ds.categories])
    run.write(args.out, report.render())
    if args.csv:
        run.write(args.csv, report.to_csv())
    sys.stdout.write(report.render())


def cmd_synth(args, run: Run):
    run.extra["rng"] = RNG_NAME
    if args.preset == "csr":
        ds = csr_dataset(args.n, args.categories, args.seed)
    else:
        ds = segregated_dataset(args.n, args.seed, args.parents, args.spread)
    run.write(args.out, export_csv(ds))
    if args.visual_out:
        spec = OracleSpec(args.accuracy, args.concentration, args.seed + 1)
        try:
            table = noisy_visual_table(_truth(ds), ds.n_categories, spec)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        run.write(args.visual_out, table.to_csv())
    sys.stdout.write(ds.summary())


def cmd_benchmark(args, run: Run):
    cfg = BenchmarkConfig(
        n=args.n,
        seed=args.seed,
        accuracy=args.accuracy,
        concentration=args.concentration,
        kde_bandwidth=args.kde_h,
        lclq_bandwidth=args.lclq_h,
        step=args.step,
        parents_per_class=args.parents,
        spread=args.spread,
    )
    run.extra["rng"] = RNG_NAME
    result = run_benchmark(cfg)
    run.write(args.out, result.render())
    sys.stdout.write(result.render())


# --- parser -----------------------------------------------------------------

REQUIRED = {
    "ingest": ("input", "out"),
    "split": ("dataset", "out"),
    "intensity": ("dataset", "category", "out"),
    "heatmap": ("out",),
    "lclq": ("dataset", "out"),
    "globalclq": ("dataset", "out"),
    "locprobs": ("dataset", "order", "out"),
    "fuse-fit": ("visual", "first", "second", "truth", "out"),
    "evaluate": ("truth", "out"),
    "synth": ("preset", "out"),
    "benchmark": ("out",),
}

INPUT_PATHS = ("input", "dataset", "splits", "visual", "first", "second", "truth", "probs", "weights", "raster", "table")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sppa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sppa {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--manifest", help="manifest path (default: <output>.manifest.txt)")
        p.add_argument("--out", help="primary output path")
        return p

    p = add("ingest", cmd_ingest, "validate a point CSV and summarize it")
    p.add_argument("--input")
    p.add_argument("--export", help="also write the normalized CSV here")

    p = add("split", cmd_split, "stratified train/val/test split")
    p.add_argument("--dataset")
    p.add_argument("--fractions", type=_floats, default=(0.7, 0.15, 0.15))
    p.add_argument("--seed", type=int, default=0)

    p = add("intensity", cmd_intensity, "per-category density raster")
    p.add_argument("--dataset")
    p.add_argument("--splits", help="fit on the training split only")
    p.add_argument("--category")
    _add_kde(p)
    _add_grid(p)

    p = add("heatmap", cmd_heatmap, "export a density raster as PGM")
    p.add_argument("--raster", help="raster CSV written by 'intensity'")
    p.add_argument("--raster-meta", help="raster sidecar (default: <raster>.meta)")
    p.add_argument("--dataset")
    p.add_argument("--splits")
    p.add_argument("--category")
    p.add_argument("--mode", choices=sorted(("pgm8", "pgm16")), default="pgm8")
    _add_kde(p)
    _add_grid(p)

    for name, func, help in (
        ("lclq", cmd_lclq, "LCLQ vector of every (training) point"),
        ("globalclq", cmd_globalclq, "per-category mean LCLQ signatures"),
    ):
        p = add(name, func, help)
        p.add_argument("--dataset")
        p.add_argument("--splits")
        p.add_argument("--cutoff", type=float, default=5.0)
        p.add_argument("--no-truncation", action="store_true")
        _add_lclq(p)
        if name == "lclq":
            p.add_argument("--report", help="write mean LCLQ per category here")

    p = add("locprobs", cmd_locprobs, "first- or second-order probability table")
    p.add_argument("--dataset")
    p.add_argument("--splits")
    p.add_argument("--order", choices=("first", "second"))
    p.add_argument("--subset", default="val,test", help="splits to emit probabilities for")
    p.add_argument("--table", help="precomputed global CLQ table (second order)")
    _add_kde(p)
    _add_lclq(p)

    p = add("fuse-fit", cmd_fuse_fit, "fit fusion weights by lattice search")
    for flag in ("--visual", "--first", "--second", "--truth", "--splits"):
        p.add_argument(flag)
    p.add_argument("--fit-split", default="val")
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--sources", default=",".join(SOURCES))
    p.add_argument("--report", help="write the fit report here")

    p = add("evaluate", cmd_evaluate, "accuracy and confusion matrix")
    for flag in ("--probs", "--visual", "--first", "--second", "--weights", "--truth", "--splits"):
        p.add_argument(flag)
    p.add_argument("--split", default="test")
    p.add_argument("--csv", help="also write the report as CSV")

    p = add("synth", cmd_synth, "generate a synthetic dataset")
    p.add_argument("--preset", choices=("csr", "segregated"))
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--categories", type=int, default=3, help="label count (csr)")
    p.add_argument("--parents", type=float, default=12.0, help="cluster parents per class (segregated)")
    p.add_argument("--spread", type=float, default=0.06, help="offspring spread (segregated)")
    p.add_argument("--visual-out", help="also write a noisy visual probability table")
    p.add_argument("--accuracy", type=float, default=0.68)
    p.add_argument("--concentration", type=float, default=0.8)

    p = add("benchmark", cmd_benchmark, "visual vs. fused accuracy on a synthetic benchmark")
    defaults = BenchmarkConfig()
    p.add_argument("--n", type=int, default=defaults.n)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--accuracy", type=float, default=defaults.accuracy)
    p.add_argument("--concentration", type=float, default=defaults.concentration)
    p.add_argument("--kde-h", type=float, default=defaults.kde_bandwidth)
    p.add_argument("--lclq-h", type=float, default=defaults.lclq_bandwidth)
    p.add_argument("--step", type=float, default=defaults.step)
    p.add_argument("--parents", type=float, default=defaults.parents_per_class)
    p.add_argument("--spread", type=float, default=defaults.spread)
    return parser


def _apply_config(parser, argv):
    """Pre-parse to find ``--config`` and install its values as defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    path = args.config
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        values = parse_kv(fh.read(), path)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"{path}: unknown key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = _truthy(raw)
        elif action.type is not None:
            try:
                defaults[dest] = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{path}: bad value for {key}: {exc}") from None
        else:
            defaults[dest] = raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return 1
        missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) in (None, "")]
        if missing:
            raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
        for key in INPUT_PATHS:
            path = getattr(args, key, None)
            if path and not os.path.exists(path):
                raise UsageError(f"--{key} file not found: {path}")
        for key in ("kde_h", "lclq_h"):
            h = getattr(args, key, None)
            if h is not None and not (h > 0 and math.isfinite(h)):
                raise UsageError(f"--{key.replace('_', '-')} must be positive")
        run = Run(args)
        args.func(args, run)
        run.finish()
        return 0
    except UsageError as exc:
        print(f"sppa: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, KeyError, csv.Error, UnicodeDecodeError) as exc:
        print(f"sppa: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"sppa: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"sppa: cannot write output: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
