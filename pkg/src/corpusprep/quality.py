"""Heuristic gate plus named, uncollapsed per-document quality signals.

The heuristic filter only drops documents that are useless for training
under any weighting (too short, degenerate word shapes, mostly
non-alphabetic, dominated by one repeated line). Everything that
survives gets a QualitySignalVector: one entry per ensemble classifier,
the cluster's natural-frequency counts, and binary domain tags. The
signals are never combined here; mixing them is a sampling-time
decision.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .classifier import QualityClassifier, ngram_hashes
from .corpus import Corpus, Document, with_extra
from .dedup import DuplicateCluster
from .errors import PipelineOrderError, UnknownSignalError
from .jsonl import read_jsonl, write_jsonl

REQUIRED_TAGS = ("code", "math")


@dataclass(frozen=True)
class HeuristicThresholds:
    min_words: int = 20
    min_mean_word_length: float = 2.0
    max_mean_word_length: float = 12.0
    min_alpha_ratio: float = 0.6
    max_line_repeat_ratio: float = 0.5


@dataclass(frozen=True)
class TextStats:
    word_count: int
    mean_word_length: float
    alpha_ratio: float
    max_line_repeat_ratio: float

    def to_dict(self) -> dict:
        return {
            "word_count": self.word_count,
            "mean_word_length": self.mean_word_length,
            "alpha_ratio": self.alpha_ratio,
            "max_line_repeat_ratio": self.max_line_repeat_ratio,
        }


@dataclass
class HeuristicReport:
    verdict: str  # "keep" | "drop"
    reasons: list[str]
    stats: TextStats


def text_stats(text: str) -> TextStats:
    words = text.split()
    word_count = len(words)
    mean_word_length = sum(len(w) for w in words) / word_count if word_count else 0.0
    alpha_ratio = sum(c.isalpha() for c in text) / len(text) if text else 0.0
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if len(lines) <= 1:
        # A single-line document repeats nothing; the ratio only means
        # something once there are lines to compare.
        line_repeat = 0.0
    else:
        line_repeat = max(Counter(lines).values()) / len(lines)
    return TextStats(
        word_count=word_count,
        mean_word_length=mean_word_length,
        alpha_ratio=alpha_ratio,
        max_line_repeat_ratio=line_repeat,
    )


def heuristic_filter(
    doc: Document, thresholds: HeuristicThresholds = HeuristicThresholds()
) -> HeuristicReport:
    """Apply the drop rules; verdict is "drop" iff any rule fails."""
    stats = text_stats(doc.text)
    reasons = []
    if stats.word_count < thresholds.min_words:
        reasons.append("min_words")
    if not (
        thresholds.min_mean_word_length
        <= stats.mean_word_length
        <= thresholds.max_mean_word_length
    ):
        reasons.append("mean_word_length")
    if stats.alpha_ratio < thresholds.min_alpha_ratio:
        reasons.append("alpha_ratio")
    if stats.max_line_repeat_ratio > thresholds.max_line_repeat_ratio:
        reasons.append("line_repeat")
    return HeuristicReport(
        verdict="drop" if reasons else "keep", reasons=reasons, stats=stats
    )


@dataclass
class QualitySignalVector:
    """Named signal map. Required names: one "clf:<model_id>" per ensemble
    member, the three "freq:*" counts, and the binary domain tags."""

    signals: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        try:
            return self.signals[name]
        except KeyError:
            raise UnknownSignalError(f"signal '{name}' not present") from None

    def __contains__(self, name: str) -> bool:
        return name in self.signals

    def validate(self, clf_ids: Sequence[str]) -> None:
        required = {f"clf:{mid}" for mid in clf_ids}
        required |= {"freq:occurrence", "freq:snapshot", "freq:domain"}
        required |= {f"tag:{t}" for t in REQUIRED_TAGS}
        missing = required - set(self.signals)
        if missing:
            raise UnknownSignalError(f"missing signals: {sorted(missing)}")


def signals_to_extra(vec: QualitySignalVector) -> dict[str, str]:
    # repr() round-trips float64 exactly, so extra stays lossless.
    return {name: repr(value) for name, value in vec.signals.items()}


def signals_from_extra(extra: Mapping[str, str]) -> QualitySignalVector:
    prefixes = ("clf:", "freq:", "tag:")
    return QualitySignalVector(
        {k: float(v) for k, v in extra.items() if k.startswith(prefixes)}
    )


@dataclass
class DropRecord:
    doc_id: str
    reasons: list[str]
    stats: TextStats

    def to_record(self) -> dict:
        return {"doc_id": self.doc_id, "reasons": self.reasons, "stats": self.stats.to_dict()}


def annotate(
    corpus: Corpus,
    clusters: Sequence[DuplicateCluster],
    classifiers: Sequence[QualityClassifier],
    domain_classifiers: Mapping[str, QualityClassifier] | None = None,
    thresholds: HeuristicThresholds = HeuristicThresholds(),
    tag_threshold: float = 0.5,
) -> tuple[Corpus, list[DropRecord]]:
    """Attach a QualitySignalVector to every retained, heuristics-surviving doc.

    Requires dedup to have run: every scored document must belong to a
    cluster with retention filled in. Deterministic and idempotent; the
    result never contains a combined score.
    """
    domain_classifiers = domain_classifiers or {}
    cluster_by_doc: dict[str, DuplicateCluster] = {}
    for cluster in clusters:
        if not cluster.retained_ids:
            raise PipelineOrderError(
                f"cluster {cluster.cluster_id} has no retained variants; "
                "run retention before annotation"
            )
        for doc_id in cluster.member_ids:
            cluster_by_doc[doc_id] = cluster

    n_orders = {clf.hyper.orders for clf in classifiers}
    n_orders |= {clf.hyper.orders for clf in domain_classifiers.values()}

    annotated: list[Document] = []
    drops: list[DropRecord] = []
    for cluster in sorted(clusters, key=lambda c: c.cluster_id):
        for doc_id in cluster.retained_ids:
            doc = corpus.get(doc_id)
            if doc is None:
                raise PipelineOrderError(
                    f"retained doc {doc_id} missing from corpus"
                )
            report = heuristic_filter(doc, thresholds)
            if report.verdict == "drop":
                drops.append(DropRecord(doc_id, report.reasons, report.stats))
                continue
            hashes_by_orders = {
                orders: ngram_hashes(doc.text, orders) for orders in n_orders
            }
            signals: dict[str, float] = {}
            for clf in classifiers:
                signals[f"clf:{clf.model_id}"] = clf.score_hashes(
                    hashes_by_orders[clf.hyper.orders]
                )
            signals["freq:occurrence"] = float(cluster.signals.occurrence_count)
            signals["freq:snapshot"] = float(cluster.signals.snapshot_count)
            signals["freq:domain"] = float(cluster.signals.domain_count)
            for tag in REQUIRED_TAGS:
                clf = domain_classifiers.get(tag)
                if clf is None:
                    signals[f"tag:{tag}"] = 0.0
                else:
                    s = clf.score_hashes(hashes_by_orders[clf.hyper.orders])
                    signals[f"tag:{tag}"] = 1.0 if s >= tag_threshold else 0.0
            for tag, clf in domain_classifiers.items():
                if tag in REQUIRED_TAGS:
                    continue
                s = clf.score_hashes(hashes_by_orders[clf.hyper.orders])
                signals[f"tag:{tag}"] = 1.0 if s >= tag_threshold else 0.0
            vec = QualitySignalVector(signals)
            vec.validate([clf.model_id for clf in classifiers])
            updates = {"cluster_id": cluster.cluster_id}
            updates.update(signals_to_extra(vec))
            annotated.append(with_extra(doc, updates))

    missing = [d.doc_id for d in corpus if d.doc_id not in cluster_by_doc]
    if missing:
        raise PipelineOrderError(
            f"{len(missing)} documents have no cluster annotation "
            f"(first: {missing[0]})"
        )
    return Corpus(annotated, provenance=dict(corpus.provenance)), drops


def write_drop_report(drops: Sequence[DropRecord], path) -> int:
    return write_jsonl(path, (d.to_record() for d in drops))


def read_drop_report(path) -> list[dict]:
    return list(read_jsonl(path))
