"""Document model, JSONL corpus streaming, URL domain extraction, seed sampling.

A corpus is one or more JSONL shards (optionally gzip-compressed, detected by
magic bytes). Each record is an object with an id field, a text field, and an
optional url field; field names are configurable per reader.
"""

from __future__ import annotations

import gzip
import hashlib
import heapq
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence
from urllib.parse import urlsplit

from .errors import DomainError, EmptyInputError, RecordError

log = logging.getLogger(__name__)

UNKNOWN_DOMAIN = "(unknown)"
_DOMAIN_EXTRA_CHARS = set("._:-")
_GZIP_MAGIC = b"\x1f\x8b"


@dataclass(frozen=True, slots=True)
class Document:
    """One corpus document. char_count is always len(text) (Unicode scalars)."""

    id: str
    text: str
    url: str | None = None
    char_count: int = field(default=-1)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("document id must be a non-empty string")
        if not isinstance(self.text, str):
            raise ValueError("document text must be a string")
        n = len(self.text)
        if self.char_count == -1:
            object.__setattr__(self, "char_count", n)
        elif self.char_count != n:
            raise ValueError(
                f"char_count {self.char_count} does not match text length {n}"
            )


def parse_document(
    line: str,
    *,
    path=None,
    line_no: int | None = None,
    id_field: str = "id",
    text_field: str = "text",
    url_field: str = "url",
) -> Document:
    """Parse one JSONL record into a Document.

    Raises RecordError (with path:line context) on malformed JSON, a missing
    or non-string id/text, or a url that is neither string nor null. Numeric
    ids are coerced to their decimal string form.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"invalid JSON: {exc.msg}", path, line_no) from None
    if not isinstance(obj, dict):
        raise RecordError("record is not a JSON object", path, line_no)

    doc_id = obj.get(id_field)
    if isinstance(doc_id, int) and not isinstance(doc_id, bool):
        doc_id = str(doc_id)
    if not isinstance(doc_id, str) or not doc_id:
        raise RecordError(f"missing or invalid {id_field!r} field", path, line_no)

    text = obj.get(text_field)
    if not isinstance(text, str):
        raise RecordError(f"missing or invalid {text_field!r} field", path, line_no)

    url = obj.get(url_field)
    if url is not None and not isinstance(url, str):
        raise RecordError(f"invalid {url_field!r} field (not a string)", path, line_no)
    return Document(id=doc_id, text=text, url=url)


def document_to_json(doc: Document) -> str:
    """Serialize a Document to one JSONL line (no trailing newline)."""
    obj = {"id": doc.id, "text": doc.text}
    if doc.url is not None:
        obj["url"] = doc.url
    return json.dumps(obj, ensure_ascii=False)


def open_maybe_gzip(path, mode: str = "rt"):
    """Open a file as text, transparently decompressing if it starts with the
    gzip magic bytes. Write modes pick gzip by the .gz suffix instead."""
    path = Path(path)
    if "r" in mode:
        raw = open(path, "rb")
        magic = raw.read(2)
        raw.seek(0)
        if magic == _GZIP_MAGIC:
            return io.TextIOWrapper(gzip.GzipFile(fileobj=raw, mode="rb"), encoding="utf-8")
        return io.TextIOWrapper(raw, encoding="utf-8")
    if path.name.endswith(".gz"):
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


@dataclass(slots=True)
class ShardStats:
    records: int = 0
    bad_records: int = 0


class CorpusReader:
    """Re-iterable streaming reader over JSONL shards.

    Yields documents in shard order then line order, one line at a time
    (shards never need to fit in memory). In skip_bad_records mode malformed
    lines are counted and skipped; otherwise the first one raises
    RecordError. Per-shard stats describe the most recent iteration.
    """

    def __init__(
        self,
        paths: Sequence,
        *,
        id_field: str = "id",
        text_field: str = "text",
        url_field: str = "url",
        skip_bad_records: bool = False,
    ):
        self.paths = [Path(p) for p in paths]
        if not self.paths:
            raise EmptyInputError("no corpus shards given")
        self.id_field = id_field
        self.text_field = text_field
        self.url_field = url_field
        self.skip_bad_records = skip_bad_records
        self.stats: dict[str, ShardStats] = {}

    def __iter__(self) -> Iterator[Document]:
        for path in self.paths:
            yield from self.read_shard(path)

    def read_shard(self, path) -> Iterator[Document]:
        """Stream one shard; also refreshes self.stats for it."""
        stats = self.stats[str(path)] = ShardStats()
        with open_maybe_gzip(path) as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.rstrip("\n").rstrip("\r")
                if not line.strip():
                    # a blank line is not valid JSON; same policy as any bad record
                    stats.bad_records += 1
                    if not self.skip_bad_records:
                        raise RecordError("blank line", path, line_no)
                    continue
                try:
                    doc = parse_document(
                        line,
                        path=path,
                        line_no=line_no,
                        id_field=self.id_field,
                        text_field=self.text_field,
                        url_field=self.url_field,
                    )
                except RecordError:
                    stats.bad_records += 1
                    if not self.skip_bad_records:
                        raise
                    continue
                stats.records += 1
                yield doc

    @property
    def total_bad_records(self) -> int:
        return sum(s.bad_records for s in self.stats.values())


def extract_domain(url: str) -> str:
    """Return the lowercased host of a URL.

    Port and userinfo are stripped; scheme-less inputs like
    "stackoverflow.com/q/1" are accepted; IP literals pass through verbatim.
    Raises DomainError if no plausible host can be found. Idempotent: a
    returned domain extracts to itself.
    """
    if not isinstance(url, str):
        raise DomainError(f"url is not a string: {url!r}")
    candidate = url.strip()
    if not candidate:
        raise DomainError("empty url")
    try:
        parts = urlsplit(candidate)
        if not parts.netloc and "//" not in candidate:
            # scheme-less input like "host.example/path"; a bare "scheme://"
            # must not be retried or the scheme would parse as a host
            parts = urlsplit("//" + candidate)
        host = parts.hostname
    except ValueError as exc:
        raise DomainError(f"unparseable url {url!r}: {exc}") from None
    if not host:
        raise DomainError(f"no host in url: {url!r}")
    host = host.rstrip(".")
    if not _valid_host(host):
        raise DomainError(f"invalid host in url: {url!r}")
    return host


def _valid_host(host: str) -> bool:
    return (
        bool(host)
        and any(ch.isalnum() for ch in host)
        and all(ch.isalnum() or ch in _DOMAIN_EXTRA_CHARS for ch in host)
    )


def domain_of(doc: Document) -> str:
    """Domain bucket for a document: its URL's host, or "(unknown)"."""
    if doc.url is None:
        return UNKNOWN_DOMAIN
    try:
        return extract_domain(doc.url)
    except DomainError:
        return UNKNOWN_DOMAIN


def _priority(rng_seed: int, doc_id: str) -> int:
    """Order-independent uniform sampling key for one document."""
    payload = f"{rng_seed}\x1f{doc_id}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


@dataclass(slots=True)
class SeedSample:
    """Result of sample_seed: identifying params plus the sampled documents."""

    documents: list[Document]
    per_domain_counts: dict[str, int]
    top_k_domains: int
    per_domain: int
    rng_seed: int
    source_shards: tuple[str, ...] = ()


def sample_seed(
    corpus: Iterable[Document],
    top_k_domains: int,
    per_domain: int,
    rng_seed: int,
) -> SeedSample:
    """Uniformly sample up to per_domain docs from each of the top-k domains
    by document count.

    Deterministic in (corpus contents, rng_seed) and invariant to shard or
    stream order: each doc gets a keyed-hash priority and the per_domain
    smallest priorities win. Domain ties at the top-k cut break
    lexicographically. Output order: domain ascending, then priority.
    """
    if top_k_domains < 1:
        raise ValueError("top_k_domains must be >= 1")
    if per_domain < 1:
        raise ValueError("per_domain must be >= 1")
    source_shards: tuple[str, ...] = ()
    if isinstance(corpus, CorpusReader):
        source_shards = tuple(str(p) for p in corpus.paths)
    docs = corpus if isinstance(corpus, (list, tuple)) else list(corpus)
    if not docs:
        raise EmptyInputError("cannot sample from an empty corpus")

    counts = Counter(domain_of(doc) for doc in docs)
    winners = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k_domains]
    selected = {dom for dom, _ in winners}

    # Bottom-k by priority per domain, via a bounded max-heap.
    heaps: dict[str, list] = {dom: [] for dom in selected}
    seq = 0
    for doc in docs:
        dom = domain_of(doc)
        heap = heaps.get(dom)
        if heap is None:
            continue
        entry = (-_priority(rng_seed, doc.id), doc.id, seq, doc)
        seq += 1
        if len(heap) < per_domain:
            heapq.heappush(heap, entry)
        elif entry > heap[0]:
            heapq.heapreplace(heap, entry)

    documents: list[Document] = []
    per_domain_counts: dict[str, int] = {}
    for dom in sorted(selected):
        picked = sorted(((-negp, doc_id, doc) for negp, doc_id, _, doc in heaps[dom]))
        per_domain_counts[dom] = len(picked)
        documents.extend(doc for _, _, doc in picked)
    return SeedSample(
        documents=documents,
        per_domain_counts=per_domain_counts,
        top_k_domains=top_k_domains,
        per_domain=per_domain,
        rng_seed=rng_seed,
        source_shards=source_shards,
    )


def save_seed_sample(sample: SeedSample, path) -> Path:
    """Write the sampled docs as a JSONL shard plus a sidecar manifest.

    The manifest path is returned; it records the sampling parameters and
    per-domain counts so downstream stages can fingerprint this artifact.
    """
    path = Path(path)
    with open_maybe_gzip(path, "wt") as fh:
        for doc in sample.documents:
            fh.write(document_to_json(doc))
            fh.write("\n")
    manifest_path = sidecar_manifest_path(path)
    manifest = {
        "kind": "seed_sample",
        "top_k": sample.top_k_domains,
        "per_domain": sample.per_domain,
        "rng_seed": sample.rng_seed,
        "n_documents": len(sample.documents),
        "per_domain_counts": sample.per_domain_counts,
        "source_shards": list(sample.source_shards),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def sidecar_manifest_path(path) -> Path:
    """seed.jsonl -> seed.manifest.json (gz suffix dropped first)."""
    path = Path(path)
    name = path.name
    if name.endswith(".gz"):
        name = name[: -len(".gz")]
    stem = name.rsplit(".", 1)[0] if "." in name else name
    return path.with_name(stem + ".manifest.json")
