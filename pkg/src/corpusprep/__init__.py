"""corpusprep: frequency-aware corpus curation and pre-training data prep.

The pipeline runs in six phases, each with a standalone API and CLI
subcommand:

    ingest     raw line-delimited dumps -> normalized corpus shards
    dedup      exact + MinHash/LSH fuzzy dedup into duplicate clusters,
               keeping top-k variants and natural-frequency metadata
    quality    heuristic gate + classifier ensemble -> per-document
               named signal vectors (never collapsed into one score)
    sample     per-signal upsampling weights merged as a convex mixture
    curriculum staged, quality-annealed, token-budgeted shard emission
    prep       sequence packing with cross-document masks, LR schedule
               evaluation, RoPE length-extension configuration

Every phase is deterministic given (inputs, config, master_seed).
"""

__version__ = "0.1.0"
