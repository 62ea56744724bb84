"""Staged training plan: breadth first, quality-annealed at the end.

A StagePlan orders stages whose quality thresholds never decrease; the
final stage gets the smallest token share and the strictest threshold.
Token shares are exact rationals so stage budgets are integers summing
exactly to the total (largest-remainder rounding). Each stage draws
from the merged sampling distribution restricted to its eligible set,
stratified so tag mixtures land on target, and emits token shards with
checksums. Stage seeds derive from the master seed and stage id, so
re-running one stage never perturbs another.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus
from .dedup import DuplicateCluster
from .errors import ConfigError, UnknownSignalError, ValidationError
from .hashing import derive_seed, sha256_file
from .jsonl import read_json, write_json, write_jsonl
from .quality import signals_from_extra
from .sampling import (
    ClusterSampler,
    MergedDistribution,
    restrict_clusters,
    restrict_distribution,
)
from .tokenizer import Tokenizer

GATE_MAX_CLF = "clf:max"  # max over ensemble scores, the default gate
OTHER_GROUP = "other"


def _fraction(value) -> Fraction:
    # Fraction(str(0.15)) is exactly 3/20; Fraction(0.15) would keep the
    # binary-float artifact and break exact share sums.
    if isinstance(value, Fraction):
        return value
    return Fraction(str(value))


@dataclass(frozen=True)
class StageSpec:
    stage_id: str
    token_share: Fraction
    quality_threshold: float
    mixture: dict[str, Fraction]  # tag group -> target token fraction
    description: str = ""
    gating_signal: str = GATE_MAX_CLF

    @classmethod
    def from_dict(cls, rec: Mapping) -> "StageSpec":
        return cls(
            stage_id=str(rec["stage_id"]),
            token_share=_fraction(rec["token_share"]),
            quality_threshold=float(rec["quality_threshold"]),
            mixture={k: _fraction(v) for k, v in rec["mixture"].items()},
            description=str(rec.get("description", "")),
            gating_signal=str(rec.get("gating_signal", GATE_MAX_CLF)),
        )

    def to_dict(self) -> dict:
        return {
            "stage_id": self.stage_id,
            "token_share": str(self.token_share),
            "quality_threshold": self.quality_threshold,
            "mixture": {k: str(v) for k, v in self.mixture.items()},
            "description": self.description,
            "gating_signal": self.gating_signal,
        }


@dataclass
class StagePlan:
    stages: list[StageSpec]
    total_token_budget: int

    @classmethod
    def from_dict(cls, rec: Mapping) -> "StagePlan":
        return cls(
            stages=[StageSpec.from_dict(s) for s in rec["stages"]],
            total_token_budget=int(rec["total_token_budget"]),
        )

    def to_dict(self) -> dict:
        return {
            "stages": [s.to_dict() for s in self.stages],
            "total_token_budget": self.total_token_budget,
        }

    def stage(self, stage_id: str) -> StageSpec:
        for s in self.stages:
            if s.stage_id == stage_id:
                return s
        raise ConfigError(f"no stage '{stage_id}' in plan")


def paper_shaped_plan(total_token_budget: int) -> StagePlan:
    """Default four-stage plan: code-heavy start, diverse middle, gradual
    sharpening, small strict anneal. Shares and thresholds are config
    defaults, not published values."""
    stages = [
        ("i", "0.15", 0.0, {"code": "0.7", OTHER_GROUP: "0.3"}, "code-heavy warmup"),
        ("ii", "0.45", 0.0, {"code": "0.3", OTHER_GROUP: "0.7"}, "diverse mixture"),
        ("iii", "0.30", 0.5, {"code": "0.3", OTHER_GROUP: "0.7"}, "gradual shift to quality"),
        ("iv", "0.10", 0.9, {"code": "0.3", OTHER_GROUP: "0.7"}, "highest-quality anneal"),
    ]
    return StagePlan(
        stages=[
            StageSpec(
                stage_id=sid,
                token_share=_fraction(share),
                quality_threshold=thr,
                mixture={k: _fraction(v) for k, v in mix.items()},
                description=desc,
            )
            for sid, share, thr, mix, desc in stages
        ],
        total_token_budget=total_token_budget,
    )


def validate_plan(plan: StagePlan) -> list[tuple[str, str]]:
    """All plan invariants as a machine-readable violation list."""
    violations: list[tuple[str, str]] = []
    if not plan.stages:
        violations.append(("empty_plan", "plan has no stages"))
        return violations
    if plan.total_token_budget < 1:
        violations.append(("bad_budget", "total_token_budget must be >= 1"))
    ids = [s.stage_id for s in plan.stages]
    if len(set(ids)) != len(ids):
        violations.append(("duplicate_stage_ids", f"stage ids repeat: {ids}"))
    for s in plan.stages:
        if not 0 < s.token_share < 1:
            violations.append(
                ("share_out_of_range",
                 f"stage {s.stage_id}: share {s.token_share} not in (0,1)")
            )
        mix_sum = sum(s.mixture.values(), Fraction(0))
        if mix_sum != 1:
            violations.append(
                ("mixture_not_one",
                 f"stage {s.stage_id}: mixture sums to {mix_sum}, expected 1")
            )
        if any(f < 0 for f in s.mixture.values()):
            violations.append(
                ("mixture_negative", f"stage {s.stage_id}: negative mixture fraction")
            )
    share_sum = sum((s.token_share for s in plan.stages), Fraction(0))
    if share_sum != 1:
        violations.append(("shares_not_one", f"token shares sum to {share_sum}, expected 1"))
    thresholds = [s.quality_threshold for s in plan.stages]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        violations.append(
            ("thresholds_decreasing", f"quality thresholds decrease: {thresholds}")
        )
    final = plan.stages[-1]
    for s in plan.stages[:-1]:
        if final.token_share >= s.token_share:
            violations.append(
                ("final_share_not_smallest",
                 "final stage must have the strictly smallest token share")
            )
            break
    for s in plan.stages[:-1]:
        if final.quality_threshold <= s.quality_threshold:
            violations.append(
                ("final_threshold_not_strictest",
                 "final stage must have the strictly largest quality threshold")
            )
            break
    return violations


def ensure_valid_plan(plan: StagePlan) -> StagePlan:
    violations = validate_plan(plan)
    if violations:
        raise ValidationError(violations)
    return plan


def stage_budgets(plan: StagePlan) -> dict[str, int]:
    """Integer stage budgets via largest-remainder rounding; sums exactly."""
    total = plan.total_token_budget
    exact = [s.token_share * total for s in plan.stages]
    base = [int(e) for e in exact]  # Fraction -> floor toward zero (all >= 0)
    leftover = total - sum(base)
    remainders = sorted(
        range(len(exact)), key=lambda i: (-(exact[i] - base[i]), i)
    )
    for i in remainders[:leftover]:
        base[i] += 1
    return {s.stage_id: b for s, b in zip(plan.stages, base)}


def gate_value(extra: Mapping[str, str], gating_signal: str) -> float:
    vec = signals_from_extra(extra)
    if gating_signal == GATE_MAX_CLF:
        scores = [v for k, v in vec.signals.items() if k.startswith("clf:")]
        if not scores:
            raise UnknownSignalError("no clf:* signals present for gating")
        return max(scores)
    return vec[gating_signal]


def stage_eligible(annotated: Corpus, stage: StageSpec) -> set[str]:
    """Doc ids whose gating signal meets the stage threshold."""
    eligible = set()
    for doc in annotated:
        if gate_value(doc.extra, stage.gating_signal) >= stage.quality_threshold:
            eligible.add(doc.doc_id)
    return eligible


def mixture_group(extra: Mapping[str, str], mixture: Mapping[str, Fraction]) -> str | None:
    """First mixture tag (in config order) whose tag:<name> fires, else
    "other" when the mixture has a catch-all, else None (doc excluded)."""
    vec = signals_from_extra(extra)
    for group in mixture:
        if group == OTHER_GROUP:
            continue
        if vec.signals.get(f"tag:{group}", 0.0) >= 1.0:
            return group
    return OTHER_GROUP if OTHER_GROUP in mixture else None


@dataclass
class ShardManifest:
    stage_id: str
    shards: list[dict]  # {"file", "tokens", "sha256"}
    total_tokens: int
    seed: int
    group_tokens: dict[str, int] = field(default_factory=dict)
    drawn_docs: int = 0
    max_doc_tokens: int = 0  # bound on budget overshoot

    def to_dict(self) -> dict:
        return {
            "stage_id": self.stage_id,
            "shards": self.shards,
            "total_tokens": self.total_tokens,
            "seed": self.seed,
            "group_tokens": dict(sorted(self.group_tokens.items())),
            "drawn_docs": self.drawn_docs,
            "max_doc_tokens": self.max_doc_tokens,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "ShardManifest":
        return cls(
            stage_id=rec["stage_id"],
            shards=list(rec["shards"]),
            total_tokens=rec["total_tokens"],
            seed=rec["seed"],
            group_tokens=dict(rec.get("group_tokens", {})),
            drawn_docs=rec.get("drawn_docs", 0),
            max_doc_tokens=rec.get("max_doc_tokens", 0),
        )


class _ShardWriter:
    """Accumulates (doc_id, token_ids) records into fixed-capacity shard files."""

    def __init__(self, out_dir: Path, shard_tokens: int):
        self.out_dir = out_dir
        self.shard_tokens = shard_tokens
        self.records: list[dict] = []
        self.tokens = 0
        self.shards: list[dict] = []

    def add(self, doc_id: str, token_ids: list[int]) -> None:
        self.records.append({"doc_id": doc_id, "token_ids": token_ids})
        self.tokens += len(token_ids)
        if self.tokens >= self.shard_tokens:
            self.flush()

    def flush(self) -> None:
        if not self.records:
            return
        name = f"shard_{len(self.shards):04d}.jsonl"
        path = self.out_dir / name
        write_jsonl(path, self.records)
        self.shards.append(
            {"file": name, "tokens": self.tokens, "sha256": sha256_file(path)}
        )
        self.records = []
        self.tokens = 0


def emit_stage(
    stage: StageSpec,
    plan: StagePlan,
    dist: MergedDistribution,
    corpus: Corpus,
    clusters: Sequence[DuplicateCluster],
    tokenizer: Tokenizer,
    master_seed: int,
    out_dir: str | Path,
    shard_tokens: int = 1_000_000,
) -> ShardManifest:
    """Draw, tokenize and shard one stage's token budget.

    `dist` and `clusters` must already be restricted to the stage's
    eligible set (see stage_eligible / restrict_distribution /
    restrict_clusters). Each draw picks the mixture group with the
    largest remaining token deficit, so the stage overshoots its budget
    by at most one document while holding group fractions on target.
    """
    if not dist.probabilities:
        raise ConfigError(f"stage {stage.stage_id}: eligible set is empty")
    budget = stage_budgets(plan)[stage.stage_id]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    groups = list(stage.mixture.keys())
    docs_by_group: dict[str, set[str]] = {g: set() for g in groups}
    for doc_id in dist.probabilities:
        doc = corpus.get(doc_id)
        if doc is None:
            raise ConfigError(f"distribution covers doc missing from corpus: {doc_id}")
        g = mixture_group(doc.extra, stage.mixture)
        if g is not None:
            docs_by_group[g].add(doc_id)

    stage_seed = derive_seed(master_seed, stage.stage_id)
    samplers: dict[str, ClusterSampler] = {}
    rngs: dict[str, np.random.Generator] = {}
    for g in groups:
        target = stage.mixture[g]
        if target == 0:
            continue
        if not docs_by_group[g]:
            raise ConfigError(
                f"stage {stage.stage_id}: mixture group '{g}' has target "
                f"{target} but no eligible documents"
            )
        g_dist = restrict_distribution(dist, docs_by_group[g])
        g_clusters = restrict_clusters(clusters, docs_by_group[g])
        samplers[g] = ClusterSampler.from_distribution(g_dist, g_clusters)
        rngs[g] = np.random.default_rng(derive_seed(stage_seed, g))

    token_cache: dict[str, list[int]] = {}
    writer = _ShardWriter(out_dir, shard_tokens)
    group_tokens = {g: 0 for g in samplers}
    total = 0
    drawn = 0
    max_doc_tokens = 0
    targets = {g: stage.mixture[g] * budget for g in samplers}
    while total < budget:
        g = max(samplers, key=lambda name: (targets[name] - group_tokens[name], name))
        doc_id = samplers[g].draw_one(rngs[g])
        ids = token_cache.get(doc_id)
        if ids is None:
            ids = tokenizer.encode(corpus.get(doc_id).text)
            token_cache[doc_id] = ids
        writer.add(doc_id, ids)
        group_tokens[g] += len(ids)
        total += len(ids)
        drawn += 1
        max_doc_tokens = max(max_doc_tokens, len(ids))
    writer.flush()

    manifest = ShardManifest(
        stage_id=stage.stage_id,
        shards=writer.shards,
        total_tokens=total,
        seed=stage_seed,
        group_tokens=group_tokens,
        drawn_docs=drawn,
        max_doc_tokens=max_doc_tokens,
    )
    write_json(out_dir / "manifest.json", manifest.to_dict())
    return manifest


def read_manifest(path: str | Path) -> ShardManifest:
    return ShardManifest.from_dict(read_json(path))
