"""Config-driven end-to-end runs: ingest, bootstrap subsets, per-subset
clustering and pruning, accounting, and aggregate statistics.

The output directory layout is stable:

    manifest.jsonl                     canonical manifest
    cdf.csv, histogram.json            length-distribution plot data
    subsets/subset_XX/manifest.jsonl   one directory per bootstrap subset
    subsets/subset_XX/clustering.jsonl, centroids.embd, audit_*.csv
    subsets/subset_XX/reports/NN_<strategy>.json (+ .pruned_ids.txt)
    accounting.json, accounting.txt    per-subset accounting tables
    aggregate.json                     mean/std/stderr across subsets
    summary.json                       config echo plus recorded failures
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import clustering as clustering_mod
from .corpus import (BUILTIN_SPLITTER, PRECOMPUTED, CorpusManifest, ingest_file,
                     make_validation_split, read_manifest, write_manifest)
from .embeddings import EmbeddingMatrix, load_embeddings, normalize, synthetic_embed
from .errors import ConfigError, PrunekitError
from .fileio import atomic_write_text, write_json
from .harness import BootstrapPlan, make_bootstrap_subsets, aggregate, run_matrix
from .pruning import STRATEGIES, STRATEGY_NEEDS, Pruner, accounting_table, format_accounting
from .stats import LengthBinning, bin_histogram, build_cdf, default_binning


@dataclass
class PipelineConfig:
    corpus: Path
    output_dir: Path
    prune_specs: list[dict]
    tokenizer: str = BUILTIN_SPLITTER.mode
    validation: dict | None = None
    embeddings: dict | None = None
    clustering: dict = field(default_factory=dict)
    bootstrap: dict = field(default_factory=dict)
    packing: dict = field(default_factory=dict)
    bins: list[int] | None = None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: cannot read config ({exc})") from exc
        return cls.from_dict(payload, base_dir=path.parent)

    @classmethod
    def from_dict(cls, payload: dict, base_dir=None) -> "PipelineConfig":
        base = Path(base_dir) if base_dir is not None else Path(".")
        try:
            corpus = base / payload["corpus"]
            output_dir = base / payload["output_dir"]
            prune_specs = list(payload["prune_specs"])
        except KeyError as exc:
            raise ConfigError(f"config is missing required field {exc.args[0]!r}") from exc
        embeddings = payload.get("embeddings")
        if embeddings is not None and "path" in embeddings:
            embeddings = dict(embeddings)
            embeddings["path"] = str(base / embeddings["path"])
        config = cls(
            corpus=corpus,
            output_dir=output_dir,
            prune_specs=prune_specs,
            tokenizer=payload.get("tokenizer", BUILTIN_SPLITTER.mode),
            validation=payload.get("validation"),
            embeddings=embeddings,
            clustering=dict(payload.get("clustering", {})),
            bootstrap=dict(payload.get("bootstrap", {})),
            packing=dict(payload.get("packing", {})),
            bins=payload.get("bins"),
        )
        config.validate()
        return config

    def validate(self) -> None:
        if self.tokenizer not in (BUILTIN_SPLITTER.mode, PRECOMPUTED.mode):
            raise ConfigError(f"unknown tokenizer {self.tokenizer!r}")
        if not self.prune_specs:
            raise ConfigError("prune_specs must list at least one strategy")
        for spec in self.prune_specs:
            strategy = spec.get("strategy")
            if strategy not in STRATEGIES:
                raise ConfigError(f"unknown strategy {strategy!r}")
            try:
                Pruner(**spec)
            except TypeError as exc:
                raise ConfigError(f"bad parameters for strategy {strategy!r}: {exc}") from exc
            if "embeddings" in STRATEGY_NEEDS[strategy] and self.embeddings is None:
                raise ConfigError(
                    f"strategy {strategy!r} requires embeddings but none are configured"
                )
            if "clustering" in STRATEGY_NEEDS[strategy] and self.embeddings is None:
                raise ConfigError(
                    f"strategy {strategy!r} requires a clustering, which needs embeddings"
                )
        if self.embeddings is not None and not ({"path", "synthetic"} & set(self.embeddings)):
            raise ConfigError("embeddings config must provide 'path' or 'synthetic'")

    def needs_clustering(self) -> bool:
        return any(STRATEGY_NEEDS[s.get("strategy")] for s in self.prune_specs)

    def binning(self) -> LengthBinning:
        return LengthBinning(tuple(self.bins)) if self.bins else default_binning()


def _load_corpus(config: PipelineConfig) -> CorpusManifest:
    with open(config.corpus, "r", encoding="utf-8") as fh:
        first = fh.readline()
    is_manifest = False
    try:
        is_manifest = json.loads(first).get("format") == "manifest"
    except (json.JSONDecodeError, AttributeError):
        is_manifest = False
    if is_manifest:
        return read_manifest(config.corpus)
    tokenizer = PRECOMPUTED if config.tokenizer == PRECOMPUTED.mode else BUILTIN_SPLITTER
    return ingest_file(config.corpus, tokenizer).manifest


def _resolve_embeddings(config: PipelineConfig, manifest: CorpusManifest):
    if config.embeddings is None:
        return None
    if "path" in config.embeddings:
        # Cosine-based operations assume unit rows; normalize unconditionally.
        return normalize(load_embeddings(config.embeddings["path"], manifest))
    if "synthetic" in config.embeddings:
        params = dict(config.embeddings["synthetic"])
        return synthetic_embed(manifest, dim=int(params.get("dim", 16)),
                               seed=int(params.get("seed", 0)),
                               length_coupling=float(params.get("length_coupling", 0.0)),
                               bins=config.binning())
    raise ConfigError("embeddings config must provide 'path' or 'synthetic'")


def _write_plot_data(manifest: CorpusManifest, bins: LengthBinning, outdir: Path) -> None:
    cdf = build_cdf(manifest)
    lines = ["doc_rank_fraction,cumulative_token_fraction"]
    n = cdf.total_docs
    for i in range(n):
        lines.append(f"{(i + 1) / n!r},{float(cdf.cumulative_tokens[i]) / cdf.total_tokens!r}")
    atomic_write_text(outdir / "cdf.csv", "\n".join(lines) + "\n")
    histogram = [{"lo": b.lo, "hi": b.hi, "doc_count": b.doc_count, "token_count": b.token_count}
                 for b in bin_histogram(manifest, bins)]
    write_json(outdir / "histogram.json", histogram)


def _write_audit(clustering, manifest, outdir: Path) -> None:
    sims = clustering_mod.centroid_similarity_matrix(clustering)
    rows = [",".join(repr(float(v)) for v in row) for row in sims]
    atomic_write_text(outdir / "audit_centroid_similarity.csv", "\n".join(rows) + "\n")
    profile = clustering_mod.distance_length_profile(clustering, manifest)
    lines = ["doc_id,distance,token_count"]
    for i in range(profile.doc_ids.size):
        lines.append(f"{int(profile.doc_ids[i])},{float(profile.distances[i])!r},"
                     f"{int(profile.token_counts[i])}")
    atomic_write_text(outdir / "audit_distance_length.csv", "\n".join(lines) + "\n")


def _spec_tag(index: int, spec: dict) -> str:
    return f"{index:02d}_{spec.get('strategy')}"


def run_pipeline(config: PipelineConfig, threads: int = 1) -> dict:
    """Execute the full pipeline; returns the summary (also written to disk).

    A stage failure inside one subset halts only that subset's dependent
    stages; everything else completes. Artifacts are byte-stable across reruns
    and thread counts.
    """
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    failures: list[dict] = []

    manifest = _load_corpus(config)
    if config.validation:
        manifest = make_validation_split(
            manifest,
            per_bin_quota=int(config.validation.get("per_bin_quota", 1)),
            bins=config.binning(),
            seed=int(config.validation.get("seed", 0)),
        )
    write_manifest(manifest, outdir / "manifest.jsonl")
    bins = config.binning()
    _write_plot_data(manifest, bins, outdir)

    matrix = _resolve_embeddings(config, manifest)

    plan_cfg = config.bootstrap
    if "seeds" in plan_cfg:
        plan = BootstrapPlan(tuple(plan_cfg["seeds"]),
                             float(plan_cfg.get("subset_frac", 0.5)))
    else:
        plan = BootstrapPlan.from_seed(int(plan_cfg.get("seed", 0)),
                                       int(plan_cfg.get("n_subsets", 3)),
                                       float(plan_cfg.get("subset_frac", 0.5)))
    subsets = make_bootstrap_subsets(manifest, plan)

    needs_clustering = config.needs_clustering()
    clusterings = [None] * len(subsets)
    matrices = [None] * len(subsets)
    for i, sample in enumerate(subsets):
        subset_dir = outdir / "subsets" / f"subset_{i:02d}"
        subset_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(sample.manifest, subset_dir / "manifest.jsonl")
        if matrix is None:
            continue
        sliced = EmbeddingMatrix(matrix.data[sample.indices], normalized=matrix.normalized)
        matrices[i] = sliced
        if not needs_clustering:
            continue
        try:
            clusterings[i] = clustering_mod.kmeans(
                sliced,
                n_clusters=int(config.clustering.get("n_clusters", 100)),
                max_iter=int(config.clustering.get("max_iter", 25)),
                tol=float(config.clustering.get("tol", 1e-4)),
                seed=int(config.clustering.get("seed", 0)),
            )
            clustering_mod.save_clustering(clusterings[i], subset_dir / "clustering.jsonl",
                                           subset_dir / "centroids.embd")
            _write_audit(clusterings[i], sample.manifest, subset_dir)
        except (PrunekitError, ValueError) as exc:
            failures.append({"subset": i, "stage": "clustering", "error": str(exc)})

    grid = run_matrix(subsets, [Pruner(**spec) for spec in config.prune_specs],
                      clusterings, matrices, threads=threads)

    accounting_per_subset = []
    for i, row in enumerate(grid):
        subset_dir = outdir / "subsets" / f"subset_{i:02d}" / "reports"
        subset_dir.mkdir(parents=True, exist_ok=True)
        ok_reports = []
        for j, cell in enumerate(row):
            tag = _spec_tag(j, config.prune_specs[j])
            if cell.ok:
                write_json(subset_dir / f"{tag}.json", cell.report.to_dict())
                atomic_write_text(subset_dir / f"{tag}.pruned_ids.txt",
                                  "".join(f"{i_}\n" for i_ in cell.report.pruned_ids))
                ok_reports.append(cell.report)
            else:
                failures.append({"subset": i, "spec": tag, "error": cell.error})
        rows = accounting_table(ok_reports)
        accounting_per_subset.append({
            "subset": i,
            "rows": [{
                "strategy": r.strategy, "params": r.params,
                "docs_pruned": r.docs_pruned, "tokens_pruned": r.tokens_pruned,
                "fraction_docs": r.fraction_docs, "fraction_tokens": r.fraction_tokens,
            } for r in rows],
        })
    write_json(outdir / "accounting.json", accounting_per_subset)

    text_blocks = []
    for i, row in enumerate(grid):
        ok_reports = [cell.report for cell in row if cell.ok]
        text_blocks.append(f"subset {i:02d}\n" + format_accounting(accounting_table(ok_reports)))
    atomic_write_text(outdir / "accounting.txt", "\n\n".join(text_blocks) + "\n")

    aggregates = []
    for j, spec in enumerate(config.prune_specs):
        cells = [grid[i][j] for i in range(len(subsets))]
        docs = [c.report.fraction_docs for c in cells if c.ok]
        tokens = [c.report.fraction_tokens for c in cells if c.ok]
        entry = {"spec": _spec_tag(j, spec), "params": spec, "n_ok": len(docs)}
        if docs:
            entry["fraction_docs"] = aggregate(docs).to_dict()
            entry["fraction_tokens"] = aggregate(tokens).to_dict()
        aggregates.append(entry)
    write_json(outdir / "aggregate.json", aggregates)

    summary = {
        "n_docs": manifest.n_docs,
        "total_tokens": manifest.total_tokens,
        "n_subsets": len(subsets),
        "prune_specs": config.prune_specs,
        "failures": failures,
    }
    write_json(outdir / "summary.json", summary)
    return summary
