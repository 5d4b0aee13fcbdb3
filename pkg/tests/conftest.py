import numpy as np

from prunekit import CorpusManifest


def make_manifest(counts, splits=None, tokenizer_id="builtin-splitter"):
    """Manifest fixture: byte_len is a stand-in, paths are synthetic."""
    counts = list(counts)
    return CorpusManifest(
        counts,
        [c * 4 for c in counts],
        [f"docs/{i:05d}.py" for i in range(len(counts))],
        splits,
        tokenizer_id,
    )


def random_unit_rows(rng, n, dim):
    data = rng.standard_normal((n, dim))
    return data / np.linalg.norm(data, axis=1, keepdims=True)
