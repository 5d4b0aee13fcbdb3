"""Corpus analytics and data-pruning toolkit for LLM training corpora.

Length-based pruning plus the embedding-based baselines it is measured
against, with the surrounding scaffolding: length CDFs, embedding-space
audits, bootstrap subsetting, context-window packing, and length-binned loss
aggregation.
"""

__version__ = "0.1.0"

from .corpus import (BUILTIN_SPLITTER, PRECOMPUTED, CorpusManifest, Document,
                     IngestResult, TokenizerSpec, count_tokens, ingest, ingest_file,
                     make_validation_split, read_manifest, write_manifest)
from .stats import (DEFAULT_BIN_EDGES, BinStat, LengthBinning, LengthCdf,
                    bin_histogram, build_cdf, default_binning,
                    doc_share_covering_top_tokens, token_share_of_longest_docs)
from .embeddings import (EmbeddingMatrix, load_embeddings, normalize,
                         save_embeddings, synthetic_embed)
from .clustering import (Clustering, DistanceLengthProfile, SphericalKMeans,
                         centroid_similarity_matrix, distance_length_profile,
                         kmeans, load_clustering, near_duplicate_centroid_groups,
                         save_clustering)
from .pruning import (STRATEGIES, AccountingRow, PruneReport, Pruner,
                      accounting_table, format_accounting, prune_d4,
                      prune_far_from_centroids, prune_length_shortest_tokens,
                      prune_length_top_tokens, prune_none, prune_random_docs,
                      prune_scip_combined, prune_semdedup, prune_small_clusters,
                      prune_ssl_prototypes)
from .harness import (AggregateStat, BinLossStat, BootstrapPlan, MatrixCell,
                      PackingConfig, Span, SubsetSample, SyntheticCorpus,
                      SyntheticCorpusSpec, aggregate, bin_losses,
                      generate_synthetic_corpus, make_bootstrap_subsets, pack,
                      packed_token_count, read_losses, read_packing_layout,
                      run_matrix, shuffled_order, write_losses, write_packing_layout)
from .pipeline import PipelineConfig, run_pipeline
from .errors import (AlignmentError, CalibrationError, ConfigError, DataError,
                     FormatError, IngestError, PrunekitError)
