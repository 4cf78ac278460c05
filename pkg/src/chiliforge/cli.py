"""Command-line surface: the full pipeline and its individual stages.

Exit codes: 0 success, 1 input error, 2 internal error.
"""

from __future__ import annotations

import os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    # one BLAS thread per worker process keeps runs reproducible and avoids
    # oversubscription under the process pool
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

from . import __version__  # noqa: E402
from .errors import ChiliforgeError  # noqa: E402

CACHE_ENV = "CHILIFORGE_CACHE"


def _add_common(parser):
    parser.add_argument("--config", type=Path, help="pipeline config file")
    parser.add_argument("--seed", type=int, help="dataset split seed")
    parser.add_argument("--radii", help="comma-separated cutout radii in Å")
    parser.add_argument("--workers", type=int, help="worker process count")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--policy", help="policy name (chili3k/chili100k) or file")
    parser.add_argument("--templates", type=Path, help="template config file")
    parser.add_argument("--biso", type=float,
                        help="override the Debye-Waller B for every signal")


def _config_from(args):
    from . import pipeline

    cfg = pipeline.load_config(args.config) if args.config else pipeline.PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.radii:
        cfg.radii = tuple(float(x) for x in args.radii.replace(",", " ").split())
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out_dir = args.out
    if args.policy:
        cfg.policy = args.policy
    if args.templates:
        cfg.templates = str(args.templates)
    if args.biso is not None:
        cfg.biso = args.biso
    if not cfg.radii:
        raise ChiliforgeError("no cutout radii configured")
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="chiliforge",
        description="Build nanoparticle graph datasets from crystal structures.")
    parser.add_argument("--version", action="version",
                        version=f"chiliforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen3k", help="generate the template-derived dataset")
    _add_common(p)

    p = sub.add_parser("fetch-cod", help="download CIFs by id list")
    p.add_argument("--ids", type=Path, required=True, help="csv of ids (first column)")
    p.add_argument("--cache", type=Path,
                   default=os.environ.get(CACHE_ENV),
                   help=f"cache directory (default ${CACHE_ENV})")
    p.add_argument("--endpoint", default=None, help="base URL override")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--ledger", type=Path, help="ledger output path")

    p = sub.add_parser("clean", help="repair CIFs, writing per-file reports")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--policy", help="also curate against this policy")
    p.add_argument("--max-volume", type=float,
                   help="also drop cells at or above this volume (Å³)")

    p = sub.add_parser("cut", help="geometry stage: supercell, edges, cutout levels")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--radii", default="5,10,15,20,25")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate",
                       help="scattering stage: stage dir -> records, or one CIF -> curves")
    p.add_argument("input", type=Path, help="stage directory or .cif file")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--radii", default="5,10,15,20,25",
                   help="radii (single-CIF mode)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--biso", type=float)

    p = sub.add_parser("pack", help="records -> committed dataset directory")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--name", default="dataset")
    _add_common(p)
    p.set_defaults(out_required=True)

    p = sub.add_parser("stats", help="print the summary statistics of a dataset")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--recompute", action="store_true",
                   help="rescan records instead of trusting the manifest")

    p = sub.add_parser("plot", help="render histograms and per-graph curves")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--graph", help="also plot this graph id's six curves")
    return parser


def _cmd_gen3k(args):
    from . import pipeline

    cfg = _config_from(args)
    started = time.time()

    def progress(done, total):
        if done % 25 == 0 or done == total:
            rate = done / max(time.time() - started, 1e-9)
            print(f"  {done}/{total} cells ({rate:.2f} cells/s)", flush=True)

    manifest = pipeline.gen3k(cfg, progress=progress)
    elapsed = time.time() - started
    print(f"gen3k: {len(manifest.checksums)} graphs in {elapsed:.0f}s "
          f"-> {cfg.out_dir / 'dataset'}")
    return 0


def _cmd_fetch_cod(args):
    from . import codclient

    if args.cache is None:
        raise ChiliforgeError(f"--cache or ${CACHE_ENV} required")
    ids = codclient.load_id_list(args.ids.read_bytes())
    job = codclient.FetchJob(cache_dir=args.cache, workers=args.workers)
    if args.endpoint:
        job.endpoint = args.endpoint
    ledger = codclient.fetch_all(ids, job)
    ledger_path = args.ledger or Path(args.cache) / "ledger.tsv"
    codclient.write_ledger(ledger, ledger_path)
    fetched = sum(1 for v in ledger.values() if v in ("fetched", "cached"))
    print(f"fetch-cod: {fetched}/{len(ids)} available, ledger at {ledger_path}")
    return 0


def _cmd_clean(args):
    from . import elements, pipeline

    policy = None
    if args.policy:
        policy = (elements.policy(args.policy)
                  if args.policy in ("chili3k", "chili100k")
                  else elements.load_policy(args.policy))
    cleaned, rejected = pipeline.clean_directory(
        args.in_dir, args.out, policy=policy, max_volume=args.max_volume)
    print(f"clean: {len(cleaned)} cleaned, {len(rejected)} rejected -> {args.out}")
    return 0


def _cmd_cut(args):
    from . import pipeline

    radii = tuple(float(x) for x in args.radii.replace(",", " ").split())
    done = pipeline.cut_directory(args.in_dir, args.out, radii,
                                  workers=args.workers)
    print(f"cut: {len(done)} cells -> {args.out}")
    return 0


def _cmd_simulate(args):
    from . import pipeline

    if args.input.is_dir():
        summaries = pipeline.simulate_directory(args.input, args.out,
                                                workers=args.workers,
                                                biso=args.biso)
        print(f"simulate: {len(summaries)} records -> {args.out}")
    else:
        radii = tuple(float(x) for x in args.radii.replace(",", " ").split())
        written = pipeline.simulate_single_cif(args.input, args.out, radii,
                                               biso=args.biso)
        print(f"simulate: {len(written)} curve files -> {args.out}")
    return 0


def _cmd_pack(args):
    from . import pipeline

    if args.out is None:
        raise ChiliforgeError("pack requires --out")
    cfg = _config_from(args)
    manifest = pipeline.pack_records(args.in_dir, args.out, args.name, cfg)
    print(f"pack: {len(manifest.checksums)} graphs -> {args.out}")
    return 0


def _cmd_stats(args):
    from . import dataset

    ds = dataset.read_dataset(args.in_dir, verify=False)
    if not ds.ids:
        raise ChiliforgeError("empty dataset")
    if args.recompute:
        stats = dataset.statistics(g for _, g in ds.graphs())
        print(stats.to_text(), end="")
    else:
        print("\n".join(ds.manifest.stats_lines))
    return 0


def _cmd_plot(args):
    from . import dataset, plots

    ds = dataset.read_dataset(args.in_dir, verify=False)
    if not ds.ids:
        raise ChiliforgeError("empty dataset")
    stats = dataset.statistics(g.y for _, g in ds.graphs(validate=False))
    written = plots.render_statistics(stats, args.out)
    if args.graph:
        graph = ds.load(args.graph)
        written.append(plots.render_curves(graph, Path(args.out) / f"{args.graph}.png",
                                           title=args.graph))
    print(f"plot: {len(written)} images -> {args.out}")
    return 0


_COMMANDS = {
    "gen3k": _cmd_gen3k,
    "fetch-cod": _cmd_fetch_cod,
    "clean": _cmd_clean,
    "cut": _cmd_cut,
    "simulate": _cmd_simulate,
    "pack": _cmd_pack,
    "stats": _cmd_stats,
    "plot": _cmd_plot,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ChiliforgeError, FileNotFoundError, NotADirectoryError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # pragma: no cover - defensive
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
