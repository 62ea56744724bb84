"""Document model and ingestion of raw dumps into the prepared layer.

Input is UTF-8 line-delimited JSON, one document per line, with fields
``url``, ``text``, ``crawl_time`` (ISO-8601), ``snapshot_id`` and an
optional ``language``. Ingestion normalizes text, derives a stable
content hash and document id, and keeps only essential metadata.

Two records with the same normalized text share ``content_hash`` but,
if fetched from different (url, crawl_time), get distinct ``doc_id``s.
"""

from __future__ import annotations

import json
import re
import unicodedata
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence
from urllib.parse import urlsplit

from .errors import RejectedRecord
from .hashing import hash64_hex, hash128_hex
from .jsonl import dumps, read_jsonl, write_jsonl

REQUIRED_FIELDS = ("url", "text", "crawl_time", "snapshot_id")

_BLANK_RUN = re.compile(r"\n{4,}")


@dataclass
class Document:
    """One curated text unit with essential metadata."""

    doc_id: str
    url: str
    crawl_time: str  # canonical UTC ISO-8601, seconds precision
    language: str
    snapshot_id: str
    domain: str
    content_hash: str  # 128-bit hash of normalized text, 32 hex chars
    text: str
    extra: dict[str, str] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "url": self.url,
            "crawl_time": self.crawl_time,
            "language": self.language,
            "snapshot_id": self.snapshot_id,
            "domain": self.domain,
            "content_hash": self.content_hash,
            "text": self.text,
            "extra": self.extra,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Document":
        return cls(
            doc_id=rec["doc_id"],
            url=rec["url"],
            crawl_time=rec["crawl_time"],
            language=rec["language"],
            snapshot_id=rec["snapshot_id"],
            domain=rec["domain"],
            content_hash=rec["content_hash"],
            text=rec["text"],
            extra=dict(rec.get("extra", {})),
        )


@dataclass
class Corpus:
    """Documents in ascending doc_id order; the pipeline's determinism anchor."""

    documents: list[Document]
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.documents.sort(key=lambda d: d.doc_id)
        self._by_id = {d.doc_id: d for d in self.documents}

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def get(self, doc_id: str) -> Document | None:
        return self._by_id.get(doc_id)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id


@dataclass
class IngestReport:
    input_lines: int = 0
    accepted: int = 0
    rejected: dict[str, int] = field(default_factory=dict)

    def reject(self, reason: str) -> None:
        self.rejected[reason] = self.rejected.get(reason, 0) + 1

    @property
    def rejected_total(self) -> int:
        return sum(self.rejected.values())

    def to_dict(self) -> dict:
        return {
            "input_lines": self.input_lines,
            "accepted": self.accepted,
            "rejected": dict(sorted(self.rejected.items())),
            "rejected_total": self.rejected_total,
        }


def normalize_text(raw: str) -> str:
    """Canonical text form: NFC, CRLF -> LF, trimmed, blank runs capped at 2.

    Idempotent: normalize_text(normalize_text(x)) == normalize_text(x).
    """
    t = unicodedata.normalize("NFC", raw)
    while "\r\n" in t:  # rewrite to fixpoint: "\r\r\n" needs two passes
        t = t.replace("\r\n", "\n")
    t = _BLANK_RUN.sub("\n\n\n", t)
    return t.strip()


def extract_domain(url: str) -> str:
    """Registrable-domain stand-in: host, lowercased, leading 'www.' stripped."""
    try:
        host = urlsplit(url).hostname or ""
    except ValueError:
        return ""
    host = host.lower()
    if host.startswith("www."):
        host = host[4:]
    return host


def canonical_crawl_time(value: str) -> str:
    """Parse ISO-8601 and re-emit as UTC at seconds precision."""
    s = value.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError as exc:
        raise RejectedRecord("bad_crawl_time", str(exc)) from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc).replace(microsecond=0)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def content_hash(normalized_text: str) -> str:
    return hash128_hex(normalized_text.encode("utf-8"))


def make_doc_id(chash: str, url: str, crawl_time: str) -> str:
    fetch = hash64_hex(f"{url}\x1f{crawl_time}".encode("utf-8"))
    return f"{chash}-{fetch}"


def ingest_record(raw_record: str) -> Document:
    """Parse one input line into a Document, or raise RejectedRecord."""
    try:
        rec = json.loads(raw_record)
    except json.JSONDecodeError as exc:
        raise RejectedRecord("parse_error", str(exc)) from None
    if not isinstance(rec, dict):
        raise RejectedRecord("parse_error", "record is not an object")
    for name in REQUIRED_FIELDS:
        if name not in rec or rec[name] is None:
            raise RejectedRecord(f"missing_field:{name}")
    if not isinstance(rec["text"], str):
        raise RejectedRecord("bad_field:text", "text is not a string")
    text = normalize_text(rec["text"])
    if not text:
        raise RejectedRecord("empty_text")
    url = str(rec["url"])
    crawl_time = canonical_crawl_time(str(rec["crawl_time"]))
    chash = content_hash(text)
    return Document(
        doc_id=make_doc_id(chash, url, crawl_time),
        url=url,
        crawl_time=crawl_time,
        language=str(rec.get("language") or "und"),
        snapshot_id=str(rec["snapshot_id"]),
        domain=extract_domain(url),
        content_hash=chash,
        text=text,
        extra={},
    )


def _decode_line(raw: bytes, line_start: int) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise RejectedRecord(
            "invalid_utf8", exc.reason, byte_offset=line_start + exc.start
        ) from None


def _ingest_chunk(lines: Sequence[tuple[bytes, int]]) -> tuple[list[Document], dict[str, int]]:
    """Ingest one shard of (raw line bytes, byte offset). Top level for pickling."""
    docs: list[Document] = []
    rejects: dict[str, int] = {}
    for raw, offset in lines:
        try:
            docs.append(ingest_record(_decode_line(raw, offset)))
        except RejectedRecord as err:
            rejects[err.reason] = rejects.get(err.reason, 0) + 1
    return docs, rejects


def _split_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n)) if n else 1
    base, rem = divmod(n, parts)
    ranges = []
    start = 0
    for i in range(parts):
        size = base + (1 if i < rem else 0)
        ranges.append((start, start + size))
        start += size
    return ranges


def ingest_lines(
    lines: Iterable[tuple[bytes, int]], workers: int = 1
) -> tuple[Corpus, IngestReport]:
    """Ingest raw lines, sharding by line ranges when workers > 1.

    The merged corpus is sorted by doc_id and deduplicated on doc_id
    (first occurrence in input order wins), so the result is independent
    of the worker count.
    """
    items = list(lines)
    report = IngestReport(input_lines=len(items))
    if workers > 1 and len(items) > 1:
        ranges = _split_ranges(len(items), workers)
        chunks = [items[a:b] for a, b in ranges]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ingest_chunk, chunks))
    else:
        results = [_ingest_chunk(items)]

    seen: set[str] = set()
    docs: list[Document] = []
    for chunk_docs, chunk_rejects in results:
        for reason, count in chunk_rejects.items():
            report.rejected[reason] = report.rejected.get(reason, 0) + count
        for doc in chunk_docs:
            if doc.doc_id in seen:
                report.reject("duplicate_doc_id")
                continue
            seen.add(doc.doc_id)
            docs.append(doc)
    report.accepted = len(docs)
    return Corpus(docs), report


def _iter_file_lines(path: str | Path) -> Iterator[tuple[bytes, int]]:
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            yield raw.rstrip(b"\r\n"), offset
            offset += len(raw)


def ingest_files(
    paths: Sequence[str | Path], workers: int = 1, source: str = ""
) -> tuple[Corpus, IngestReport]:
    lines: list[tuple[bytes, int]] = []
    for path in paths:
        lines.extend(_iter_file_lines(path))
    corpus, report = ingest_lines(lines, workers=workers)
    corpus.provenance["source"] = source or ",".join(str(p) for p in paths)
    return corpus, report


def write_corpus(corpus: Corpus, path: str | Path) -> int:
    """Serialize documents only; provenance goes to the sidecar report.

    Keeping volatile fields out of the shard file is what makes repeat
    ingests byte-identical.
    """
    return write_jsonl(path, (d.to_record() for d in corpus))


def read_corpus(path: str | Path) -> Corpus:
    return Corpus([Document.from_record(rec) for rec in read_jsonl(path)])


def serialize_corpus(corpus: Corpus) -> bytes:
    return "".join(dumps(d.to_record()) + "\n" for d in corpus).encode("utf-8")


def with_extra(doc: Document, updates: dict[str, str]) -> Document:
    merged = dict(doc.extra)
    merged.update(updates)
    return replace(doc, extra=merged)
