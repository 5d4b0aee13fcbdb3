"""Command-line entry point wiring all modules into one pipeline.

Exit codes are a stable contract: 0 success, 1 data/runtime error, 2 usage
error. All artifacts are written atomically; ``--json`` switches stdout to
line-delimited JSON.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from . import clustering as clustering_mod
from .corpus import (BUILTIN_SPLITTER, PRECOMPUTED, ingest_file, make_validation_split,
                     read_manifest, write_manifest)
from .embeddings import load_embeddings, normalize
from .errors import PrunekitError
from .fileio import atomic_write_text, dumps, write_json
from .harness import (BootstrapPlan, PackingConfig, SyntheticCorpusSpec, bin_losses,
                      generate_synthetic_corpus, make_bootstrap_subsets, pack,
                      read_losses, read_packing_layout, shuffled_order,
                      write_packing_layout)
from .pipeline import PipelineConfig, run_pipeline
from .pruning import (STRATEGIES, STRATEGY_NEEDS, PruneReport, Pruner,
                      accounting_table, format_accounting)
from .stats import LengthBinning, bin_histogram, build_cdf, default_binning

FORMAT_VERSIONS = "manifest=1 embeddings=1 clustering=1 packing=1"


def _say(args, message: str, **payload) -> None:
    if getattr(args, "json", False):
        print(dumps({"event": message, **payload}))
    else:
        extras = " ".join(f"{k}={v}" for k, v in payload.items())
        print(f"{message} {extras}".rstrip())


def _parse_bins(text) -> LengthBinning:
    if text is None:
        return default_binning()
    return LengthBinning(tuple(int(e) for e in text.split(",")))


def _load_clustering_dir(path):
    path = Path(path)
    return clustering_mod.load_clustering(path / "clustering.jsonl", path / "centroids.embd")


def cmd_ingest(args) -> int:
    tokenizer = PRECOMPUTED if args.tokenizer == "precomputed" else BUILTIN_SPLITTER
    result = ingest_file(args.input, tokenizer)
    manifest = result.manifest
    if args.validation_per_bin:
        manifest = make_validation_split(manifest, args.validation_per_bin,
                                         _parse_bins(args.bins), args.validation_seed)
    write_manifest(manifest, args.out)
    _say(args, "ingested", docs=manifest.n_docs, tokens=manifest.total_tokens,
         skipped=result.skipped_zero_token, out=str(args.out))
    return 0


def cmd_synth(args) -> int:
    target = None
    if args.calibrate:
        target = (args.calibrate[0], args.calibrate[1])
    spec = SyntheticCorpusSpec(n_docs=args.n_docs, tail_exponent=args.tail_exponent,
                               min_tokens=args.min_tokens, seed=args.seed,
                               calibration_target=target)
    corpus = generate_synthetic_corpus(spec)
    write_manifest(corpus.manifest, args.out)
    payload = {"docs": corpus.manifest.n_docs, "tokens": corpus.manifest.total_tokens,
               "tail_exponent": corpus.tail_exponent, "out": str(args.out)}
    if corpus.achieved_share is not None:
        payload["achieved_share"] = corpus.achieved_share
    _say(args, "synthesized", **payload)
    return 0


def cmd_stats(args) -> int:
    manifest = read_manifest(args.manifest)
    cdf = build_cdf(manifest)
    bins = _parse_bins(args.bins)
    lines = ["doc_rank_fraction,cumulative_token_fraction"]
    for i in range(cdf.total_docs):
        lines.append(f"{(i + 1) / cdf.total_docs!r},"
                     f"{float(cdf.cumulative_tokens[i]) / cdf.total_tokens!r}")
    atomic_write_text(args.cdf_out, "\n".join(lines) + "\n")
    histogram = [{"lo": b.lo, "hi": b.hi, "doc_count": b.doc_count, "token_count": b.token_count}
                 for b in bin_histogram(manifest, bins)]
    write_json(args.hist_out, histogram)
    _say(args, "stats", docs=manifest.n_docs, tokens=manifest.total_tokens,
         cdf=str(args.cdf_out), histogram=str(args.hist_out))
    return 0


def cmd_cluster(args) -> int:
    manifest = read_manifest(args.manifest)
    matrix = normalize(load_embeddings(args.embeddings, manifest))
    clustering = clustering_mod.kmeans(matrix, n_clusters=args.k, max_iter=args.max_iter,
                                       tol=args.tol, seed=args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    clustering_mod.save_clustering(clustering, outdir / "clustering.jsonl",
                                   outdir / "centroids.embd")
    _say(args, "clustered", k=clustering.n_clusters, objective=clustering.objective,
         out=str(outdir))
    return 0


def cmd_audit(args) -> int:
    manifest = read_manifest(args.manifest)
    clustering = _load_clustering_dir(args.clustering)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    sims = clustering_mod.centroid_similarity_matrix(clustering)
    atomic_write_text(outdir / "centroid_similarity.csv",
                      "\n".join(",".join(repr(float(v)) for v in row) for row in sims) + "\n")
    profile = clustering_mod.distance_length_profile(clustering, manifest)
    lines = ["doc_id,distance,token_count"]
    for i in range(profile.doc_ids.size):
        lines.append(f"{int(profile.doc_ids[i])},{float(profile.distances[i])!r},"
                     f"{int(profile.token_counts[i])}")
    atomic_write_text(outdir / "distance_length.csv", "\n".join(lines) + "\n")
    payload = {"spearman": profile.spearman, "degenerate": profile.degenerate,
               "out": str(outdir)}
    if args.near_dup_threshold is not None:
        groups = clustering_mod.near_duplicate_centroid_groups(sims, args.near_dup_threshold)
        write_json(outdir / "near_duplicate_groups.json", groups)
        payload["near_duplicate_groups"] = len(groups)
    _say(args, "audited", **payload)
    return 0


def cmd_prune(args) -> int:
    manifest = read_manifest(args.manifest)
    needs = STRATEGY_NEEDS[args.strategy]
    clustering = matrix = None
    if "clustering" in needs:
        if args.clustering is None:
            raise ValueError(f"strategy {args.strategy!r} requires --clustering")
        clustering = _load_clustering_dir(args.clustering)
    if "embeddings" in needs:
        if args.embeddings is None:
            raise ValueError(f"strategy {args.strategy!r} requires --embeddings")
        matrix = normalize(load_embeddings(args.embeddings, manifest))
    pruner = Pruner(strategy=args.strategy, tokens_frac=args.tokens_frac,
                    docs_frac=args.docs_frac, epsilon=args.epsilon,
                    small_frac=args.small_frac, far_frac=args.far_frac, seed=args.seed)
    pruner.fit(manifest, clustering=clustering, embeddings=matrix)
    report = pruner.report_
    write_json(args.out, report.to_dict())
    ids_path = args.pruned_ids_out or str(args.out) + ".pruned_ids.txt"
    atomic_write_text(ids_path, "".join(f"{i}\n" for i in report.pruned_ids))
    if args.emit_kept_manifest:
        write_manifest(pruner.transform(manifest), args.emit_kept_manifest)
    _say(args, "pruned", strategy=report.strategy, docs_pruned=report.docs_pruned,
         fraction_tokens=report.fraction_tokens, out=str(args.out))
    return 0


def cmd_bootstrap(args) -> int:
    manifest = read_manifest(args.manifest)
    plan = BootstrapPlan.from_seed(args.seed, args.subsets, args.frac)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, sample in enumerate(make_bootstrap_subsets(manifest, plan)):
        write_manifest(sample.manifest, outdir / f"subset_{i:02d}.jsonl")
        atomic_write_text(outdir / f"subset_{i:02d}.indices.txt",
                          "".join(f"{idx}\n" for idx in sample.indices))
    _say(args, "bootstrapped", subsets=plan.n_subsets, frac=plan.subset_frac, out=str(outdir))
    return 0


def cmd_pack(args) -> int:
    manifest = read_manifest(args.manifest)
    config = PackingConfig(context_len=args.context_len)
    if args.order == "shuffle":
        order = shuffled_order(manifest, args.seed)
    else:
        order = manifest.train_ids
    chunks = pack(manifest, order, config)
    write_packing_layout(chunks, args.out, config)
    _say(args, "packed", chunks=len(chunks), context_len=config.context_len,
         out=str(args.out))
    return 0


def cmd_bin_losses(args) -> int:
    manifest = read_manifest(args.manifest)
    chunks, _ = read_packing_layout(args.layout)
    losses = read_losses(args.losses)
    stats = bin_losses(chunks, losses, _parse_bins(args.bins), manifest)
    payload = [{"lo": s.lo, "hi": s.hi, "token_count": s.token_count,
                "mean_loss": s.mean_loss, "perplexity": s.perplexity} for s in stats]
    write_json(args.out, payload)
    _say(args, "binned-losses", bins=len(payload), out=str(args.out))
    return 0


def cmd_report(args) -> int:
    import json as _json

    reports = []
    for path in args.reports:
        with open(path, "r", encoding="utf-8") as fh:
            reports.append(PruneReport.from_dict(_json.load(fh)))
    rows = accounting_table(reports)
    write_json(args.out, [{
        "strategy": r.strategy, "params": r.params,
        "docs_pruned": r.docs_pruned, "tokens_pruned": r.tokens_pruned,
        "fraction_docs": r.fraction_docs, "fraction_tokens": r.fraction_tokens,
    } for r in rows])
    text_out = str(args.out) + ".txt"
    atomic_write_text(text_out, format_accounting(rows) + "\n")
    _say(args, "reported", rows=len(rows), out=str(args.out))
    return 0


def cmd_run(args) -> int:
    config = PipelineConfig.load(args.config)
    summary = run_pipeline(config, threads=args.threads)
    _say(args, "pipeline-complete", out=str(config.output_dir),
         failures=len(summary["failures"]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prunekit",
                                     description="Corpus analytics and data-pruning toolkit")
    parser.add_argument("--version", action="version",
                        version=f"prunekit {__version__} ({FORMAT_VERSIONS})")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true",
                        help="emit line-delimited JSON on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build a manifest from corpus records")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--tokenizer", choices=["builtin-splitter", "precomputed"],
                   default="builtin-splitter")
    p.add_argument("--validation-per-bin", type=int, default=0,
                   help="relabel up to N documents per length bin as validation")
    p.add_argument("--validation-seed", type=int, default=0)
    p.add_argument("--bins", help="comma-separated bin edges (first must be 0)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic heavy-tailed corpus")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--n-docs", type=int, required=True)
    p.add_argument("--tail-exponent", type=float, default=2.0)
    p.add_argument("--min-tokens", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calibrate", nargs=2, type=float, metavar=("DOC_FRACTION", "TOKEN_SHARE"),
                   help="bisect the tail exponent until the longest DOC_FRACTION of "
                        "documents holds TOKEN_SHARE of tokens")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", parents=[common], help="emit length CDF and bin histogram")
    p.add_argument("manifest")
    p.add_argument("--cdf-out", default="cdf.csv")
    p.add_argument("--hist-out", default="histogram.json")
    p.add_argument("--bins")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("cluster", parents=[common], help="spherical k-means over embeddings")
    p.add_argument("manifest")
    p.add_argument("--embeddings", required=True)
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=25)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("audit", parents=[common],
                       help="centroid similarity matrix and distance-vs-length scatter")
    p.add_argument("manifest")
    p.add_argument("--clustering", required=True, help="directory written by 'cluster'")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--near-dup-threshold", type=float,
                   help="also emit centroid groups connected at this cosine similarity")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("prune", parents=[common], help="apply one pruning strategy")
    p.add_argument("manifest")
    p.add_argument("--strategy", required=True, choices=STRATEGIES)
    p.add_argument("--tokens-frac", type=float)
    p.add_argument("--docs-frac", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--small-frac", type=float, default=0.16)
    p.add_argument("--far-frac", type=float, default=0.04)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clustering", help="directory written by 'cluster'")
    p.add_argument("--embeddings")
    p.add_argument("-o", "--out", required=True, help="report JSON path")
    p.add_argument("--pruned-ids-out")
    p.add_argument("--emit-kept-manifest", help="also write the surviving manifest here")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("bootstrap", parents=[common], help="draw seeded bootstrap subsets")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--subsets", type=int, default=3)
    p.add_argument("--frac", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("pack", parents=[common], help="pack train documents into context chunks")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True, help="packing layout path")
    p.add_argument("--context-len", type=int, default=4096)
    p.add_argument("--order", choices=["id", "shuffle"], default="id")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("bin-losses", parents=[common],
                       help="aggregate per-token losses into per-bin perplexity")
    p.add_argument("--manifest", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--losses", required=True)
    p.add_argument("--bins")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_bin_losses)

    p = sub.add_parser("report", parents=[common],
                       help="accounting table from prune report files")
    p.add_argument("reports", nargs="+")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", parents=[common], help="run the full pipeline from a config file")
    p.add_argument("config")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="parallel prune cells; outputs are independent of N")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (PrunekitError, ValueError, OSError) as exc:
        message = str(exc)
        if getattr(args, "json", False):
            print(dumps({"error": message}), file=sys.stderr)
        else:
            print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
