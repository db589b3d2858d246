"""End-to-end orchestration and the scalable filtering step.

Filtering is two-pass: pass 1 scores every document into a 2^16-bin
histogram of positive-class probabilities; the selection threshold is the
highest bin edge whose cumulative mass from above reaches the target count,
with exact-boundary documents admitted by a deterministic keyed hash of
their id until the target is met. Pass 2 replays the bins recorded during
pass 1 (documents are parsed again but scored only once) and writes admitted
documents, preserving within-shard order. Both passes are shard-parallel;
the selected set is invariant to worker count and shard order.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import logging
import shutil
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _backend
from .analysis import (
    DomainDensityRow,
    LengthHistogram,
    density_table_text,
    histogram_svg,
)
from .classifier import ClassifierModel, Hyperparams, score_texts
from .classifier import train as train_classifier
from .classifier import zero_eos
from .compression import CharNgramLM, LossTable, ladder_bpc_rows, load_loss_table, save_loss_table
from .corpus import (
    CorpusReader,
    Document,
    domain_of,
    open_maybe_gzip,
    parse_document,
    sample_seed,
    save_seed_sample,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    EmptyInputError,
    RecordError,
    SafetyError,
    StaleArtifactError,
)
from .manifest import (
    digest_map,
    file_digest,
    outputs_intact,
    params_digest,
    read_stage_manifest,
    write_stage_manifest,
)
from .model_io import load_model, save_model
from .seedset import emit_training_file, select_seed_examples
from .strength import (
    ModelRoster,
    load_roster,
    load_strength_table,
    save_roster,
    save_strength_table,
    score_corpus,
    strength_histogram,
)

log = logging.getLogger(__name__)

SCORE_BINS = 1 << 16
_GZIP_MAGIC = b"\x1f\x8b"
_BATCH_DOCS = 512


# ---------------------------------------------------------------------------
# threshold selection


def _score_bin(p: float) -> int:
    b = int(p * SCORE_BINS)
    return SCORE_BINS - 1 if b >= SCORE_BINS else b


def _doc_hash(rng_seed: int, doc_id: str) -> int:
    payload = f"{rng_seed}\x1e{doc_id}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def _selection_plan(hist: np.ndarray, target: int) -> tuple[int, int, float]:
    """(boundary_bin, need_from_boundary, threshold).

    Documents in bins above boundary_bin are admitted outright; exactly
    need_from_boundary documents from the boundary bin join them via the
    hash tie-break. boundary_bin is SCORE_BINS when nothing is admitted and
    -1 when everything is.
    """
    total = int(hist.sum())
    if target <= 0:
        return SCORE_BINS, 0, 1.0
    if target >= total:
        return -1, 0, 0.0
    cum = 0
    for b in range(SCORE_BINS - 1, -1, -1):
        c = int(hist[b])
        if c == 0:
            continue
        cum += c
        if cum >= target:
            need = target - (cum - c)
            return b, need, b / SCORE_BINS
    raise AssertionError("histogram mass vanished mid-walk")


def compute_threshold(scores: Iterable[float], fraction: float) -> float:
    """Score threshold admitting round(fraction * n) documents.

    Builds the same fixed-resolution histogram the filtering pass uses, so
    the returned edge matches what filter_corpus would apply. Boundary-bin
    ties are broken per-document by hash at filter time; the threshold alone
    admits at least the target count.
    """
    if not (0.0 < fraction <= 1.0):
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    hist = np.zeros(SCORE_BINS, dtype=np.int64)
    n = 0
    for p in scores:
        p = float(p)
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"score out of [0,1]: {p}")
        hist[_score_bin(p)] += 1
        n += 1
    if n == 0:
        raise EmptyInputError("no scores given")
    target = int(n * fraction + 0.5)
    _, _, threshold = _selection_plan(hist, target)
    return threshold


# ---------------------------------------------------------------------------
# filtering


@dataclass
class SelectionConfig:
    """Parameters of one filtering run. Exactly one of fraction / char_budget
    must be set; char_budget converts to an effective fraction using pass-1
    character totals."""

    model_path: str
    input_shards: tuple[str, ...]
    output_dir: str
    fraction: float | None = None
    char_budget: int | None = None
    workers: int = 1
    rng_seed: int = 0
    force: bool = False
    skip_bad_records: bool = False
    id_field: str = "id"
    text_field: str = "text"
    url_field: str = "url"
    report_bins: int = 16

    def validate(self) -> "SelectionConfig":
        if (self.fraction is None) == (self.char_budget is None):
            raise ConfigError("set exactly one of fraction / char_budget")
        if self.fraction is not None and not (0.0 < self.fraction <= 1.0):
            raise ConfigError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.char_budget is not None and self.char_budget < 1:
            raise ConfigError(f"char_budget must be >= 1, got {self.char_budget}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.report_bins < 1:
            raise ConfigError(f"report_bins must be >= 1, got {self.report_bins}")
        if not self.input_shards:
            raise ConfigError("no input shards given")
        names = [Path(p).name for p in self.input_shards]
        if len(set(names)) != len(names):
            raise ConfigError("input shard basenames must be unique")
        return self

    def public_dict(self) -> dict:
        """Everything that identifies the selection outcome. Workers and
        force are excluded: they cannot change the selected set."""
        d = asdict(self)
        d.pop("workers")
        d.pop("force")
        return d


@dataclass
class SelectionReport:
    """Audit record of one filtering run."""

    threshold: float
    target_docs: int
    input_docs: int
    selected_docs: int
    input_chars: int
    selected_chars: int
    fraction_requested: float | None
    char_budget: int | None
    effective_fraction: float
    domain_density: list[DomainDensityRow]
    length_histogram: LengthHistogram
    config_digest: str
    bad_records: int
    shards: list[str]
    selected_per_shard: dict[str, int]
    backend: str
    elapsed_seconds: float
    docs_per_second: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = "selection_report"
        return d

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        )


def load_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _is_gzip(path: Path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(2) == _GZIP_MAGIC


def _iter_batches(path: Path, config: SelectionConfig):
    """Yield (docs, raw_lines, bad_count_so_far) batches from one shard."""
    docs: list[Document] = []
    lines: list[str] = []
    bad = 0
    with open_maybe_gzip(path) as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            try:
                if not line.strip():
                    raise RecordError("blank line", path, line_no)
                doc = parse_document(
                    line,
                    path=path,
                    line_no=line_no,
                    id_field=config.id_field,
                    text_field=config.text_field,
                    url_field=config.url_field,
                )
            except RecordError:
                if not config.skip_bad_records:
                    raise
                bad += 1
                continue
            docs.append(doc)
            lines.append(line)
            if len(docs) >= _BATCH_DOCS:
                yield docs, lines, bad
                docs, lines = [], []
    if docs:
        yield docs, lines, bad
    else:
        yield [], [], bad


@dataclass
class _ShardScan:
    hist: np.ndarray
    bins: np.ndarray
    hashes: np.ndarray
    docs: int
    chars: int
    bad: int


def _scan_shard(model: ClassifierModel, path: Path, config: SelectionConfig) -> _ShardScan:
    hist = np.zeros(SCORE_BINS, dtype=np.int64)
    bins: list[int] = []
    hashes: list[int] = []
    chars = 0
    bad = 0
    for docs, _lines, bad_so_far in _iter_batches(path, config):
        bad = bad_so_far
        if not docs:
            continue
        p_pos = score_texts(model, [d.text for d in docs])
        for doc, p in zip(docs, p_pos):
            b = _score_bin(float(p))
            hist[b] += 1
            bins.append(b)
            hashes.append(_doc_hash(config.rng_seed, doc.id))
            chars += doc.char_count
    return _ShardScan(
        hist=hist,
        bins=np.asarray(bins, dtype=np.int64),
        hashes=np.asarray(hashes, dtype=np.uint64),
        docs=len(bins),
        chars=chars,
        bad=bad,
    )


@dataclass
class _ShardEmit:
    selected: int
    chars: int
    domains: Counter
    lengths: Counter


def _emit_shard(
    scan: _ShardScan,
    in_path: Path,
    out_path: Path,
    config: SelectionConfig,
    boundary: int,
    cutoff: int | None,
) -> _ShardEmit:
    domains: Counter = Counter()
    lengths: Counter = Counter()
    selected = 0
    chars = 0
    idx = 0
    if _is_gzip(in_path):
        out_cm = gzip.open(out_path, "wt", encoding="utf-8")
    else:
        out_cm = open(out_path, "w", encoding="utf-8")
    with out_cm as out:
        for docs, lines, _bad in _iter_batches(in_path, config):
            if idx + len(docs) > scan.docs:
                raise StaleArtifactError(f"{in_path} grew while being filtered")
            for doc, line in zip(docs, lines):
                # both passes parse identically, so the i-th surviving doc
                # here is the i-th entry of the recorded scan arrays
                b = int(scan.bins[idx])
                if b > boundary:
                    admit = True
                elif b == boundary and cutoff is not None:
                    admit = int(scan.hashes[idx]) <= cutoff
                else:
                    admit = False
                idx += 1
                if admit:
                    out.write(line)
                    out.write("\n")
                    selected += 1
                    chars += doc.char_count
                    domains[domain_of(doc)] += doc.char_count
                    lengths[doc.char_count] += 1
    if idx != scan.docs:
        raise StaleArtifactError(f"{in_path} shrank while being filtered")
    return _ShardEmit(selected=selected, chars=chars, domains=domains, lengths=lengths)


def _map_shards(fn, shards: Sequence[Path], workers: int):
    if workers == 1 or len(shards) == 1:
        return [fn(s) for s in shards]
    with ThreadPoolExecutor(max_workers=min(workers, len(shards))) as pool:
        return list(pool.map(fn, shards))


def _length_histogram_from_counts(lengths: Counter, bins: int) -> LengthHistogram:
    if not lengths:
        return LengthHistogram(bin_edges=[0.0, 1.0], counts=[0], mean_chars=0.0, total_docs=0)
    top = max(lengths) + 1
    edges = [i * top / bins for i in range(bins + 1)]
    uniq = np.asarray(sorted(lengths), dtype=np.float64)
    weights = np.asarray([lengths[int(u)] for u in uniq], dtype=np.float64)
    counts, _ = np.histogram(uniq, bins=edges, weights=weights)
    total = int(weights.sum())
    mean = float((uniq * weights).sum() / total)
    return LengthHistogram(
        bin_edges=edges,
        counts=[int(round(c)) for c in counts],
        mean_chars=mean,
        total_docs=total,
    )


def filter_corpus(config: SelectionConfig) -> SelectionReport:
    """Select the top-scoring fraction of a sharded corpus; see the module
    docstring for the two-pass scheme. Selected count lands within one
    document of round(fraction * input_docs)."""
    t0 = time.perf_counter()
    config.validate()
    model = load_model(config.model_path)
    if not model.eos_zeroed:
        log.warning(
            "model %s has a live EOS row; scores will carry a length bias",
            config.model_path,
        )
    shards = [Path(p) for p in config.input_shards]
    for shard in shards:
        if not shard.exists():
            raise FileNotFoundError(f"input shard not found: {shard}")
    out_dir = Path(config.output_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not config.force:
        raise SafetyError(
            f"output directory {out_dir} is not empty; pass force to overwrite"
        )
    out_dir.mkdir(parents=True, exist_ok=True)

    scans = _map_shards(lambda s: _scan_shard(model, s, config), shards, config.workers)
    hist = np.zeros(SCORE_BINS, dtype=np.int64)
    for scan in scans:
        hist += scan.hist
    input_docs = sum(s.docs for s in scans)
    input_chars = sum(s.chars for s in scans)
    bad_records = sum(s.bad for s in scans)
    if input_docs == 0:
        raise EmptyInputError("no parseable documents in the input shards")

    if config.fraction is not None:
        fraction = config.fraction
    else:
        if input_chars == 0:
            raise EmptyInputError("input corpus has zero characters")
        fraction = min(1.0, config.char_budget / input_chars)
    target = int(input_docs * fraction + 0.5)
    boundary, need, threshold = _selection_plan(hist, target)

    cutoff: int | None = None
    if need > 0:
        pool = np.concatenate(
            [s.hashes[s.bins == boundary] for s in scans if s.docs]
        )
        cutoff = int(np.partition(pool, need - 1)[need - 1])

    by_shard = dict(zip(shards, scans))
    emits = _map_shards(
        lambda s: _emit_shard(by_shard[s], s, out_dir / s.name, config, boundary, cutoff),
        shards,
        config.workers,
    )
    selected_docs = sum(e.selected for e in emits)
    selected_chars = sum(e.chars for e in emits)
    domains: Counter = Counter()
    lengths: Counter = Counter()
    for e in emits:
        domains.update(e.domains)
        lengths.update(e.lengths)

    density: list[DomainDensityRow] = []
    if selected_chars > 0:
        density = [
            DomainDensityRow(domain=d, chars=c, char_fraction=c / selected_chars)
            for d, c in domains.items()
        ]
        density.sort(key=lambda r: (-r.chars, r.domain))

    elapsed = time.perf_counter() - t0
    report = SelectionReport(
        threshold=threshold,
        target_docs=target,
        input_docs=input_docs,
        selected_docs=selected_docs,
        input_chars=input_chars,
        selected_chars=selected_chars,
        fraction_requested=config.fraction,
        char_budget=config.char_budget,
        effective_fraction=fraction,
        domain_density=density,
        length_histogram=_length_histogram_from_counts(lengths, config.report_bins),
        config_digest=params_digest(config.public_dict()),
        bad_records=bad_records,
        shards=[str(s) for s in shards],
        selected_per_shard={s.name: e.selected for s, e in zip(shards, emits)},
        backend=_backend.backend_name(),
        elapsed_seconds=elapsed,
        # end-to-end rate; each doc is parsed twice (scan + emit), scored once
        docs_per_second=input_docs / elapsed if elapsed > 0 else 0.0,
    )
    report.save(out_dir / "report.json")
    return report


# ---------------------------------------------------------------------------
# end-to-end runs


def load_config(path) -> dict:
    """Read a TOML or JSON config file (decided by suffix)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".json":
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if suffix == ".toml":
        try:
            import tomllib  # py >= 3.11
        except ImportError:
            import tomli as tomllib
        try:
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    raise ConfigError(f"{path}: config must be .toml or .json")


@dataclass
class RunSummary:
    run_dir: str
    stages: dict[str, str]  # stage -> "ran" | "skipped"
    artifacts: dict[str, str]
    report: SelectionReport | None


def _need(section: Mapping, key: str, where: str):
    if key not in section:
        raise ConfigError(f"config is missing {where}.{key}")
    return section[key]


def run_end_to_end(config: Mapping | str | Path, force: bool = False) -> RunSummary:
    """Run (or resume) the full pipeline described by a run config.

    Stage chain: seed sampling -> ladder losses (or an external loss table)
    -> strength scoring -> seed-set emission -> classifier training (+ EOS
    zeroing) -> filtering. Each stage directory carries a digest manifest;
    completed stages whose inputs still match are skipped, any rerun stage
    cascades downstream, and tampered outputs raise StaleArtifactError
    rather than being overwritten (force reruns everything).
    """
    if not isinstance(config, Mapping):
        config = load_config(config)

    run_cfg = config.get("run", {})
    run_dir = Path(_need(run_cfg, "output_dir", "run"))
    rng_seed = int(run_cfg.get("rng_seed", 0))
    workers = int(run_cfg.get("workers", 1))
    skip_bad = bool(run_cfg.get("skip_bad_records", False))
    fields = {
        "id_field": run_cfg.get("id_field", "id"),
        "text_field": run_cfg.get("text_field", "text"),
        "url_field": run_cfg.get("url_field", "url"),
    }

    seed_cfg = config.get("seed")
    if seed_cfg is None:
        raise ConfigError("config is missing the [seed] section")
    seed_shards = [str(p) for p in _need(seed_cfg, "shards", "seed")]

    ladder_cfg = config.get("ladder")
    losses_cfg = config.get("losses")
    if (ladder_cfg is None) == (losses_cfg is None):
        raise ConfigError("provide exactly one of [ladder] / [losses]")

    seedset_cfg = config.get("seedset")
    if seedset_cfg is None:
        raise ConfigError("config is missing the [seedset] section")
    train_cfg = dict(config.get("train", {}))
    filter_cfg = config.get("filter")
    if filter_cfg is None:
        raise ConfigError("config is missing the [filter] section")
    pool_shards = [str(p) for p in _need(filter_cfg, "shards", "filter")]

    overlap = sorted(set(map(str, seed_shards)) & set(map(str, pool_shards)))
    if overlap:
        log.warning(
            "%d shard(s) feed both seed sampling and filtering: %s "
            "(seed docs can be re-selected; fine for demos, review for production)",
            len(overlap), ", ".join(overlap),
        )

    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "run_config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True, default=str) + "\n"
    )

    stages: dict[str, str] = {}
    artifacts: dict[str, str] = {}
    dirty = bool(force)

    def reader(paths):
        return CorpusReader(paths, skip_bad_records=skip_bad, **fields)

    def run_stage(name: str, params: dict, inputs: dict[str, str], build) -> Path:
        nonlocal dirty
        sdir = run_dir / name
        manifest = read_stage_manifest(sdir)  # StaleArtifactError if corrupt
        if not dirty and manifest is not None:
            if manifest["params"] == params and manifest["inputs"] == inputs:
                if not outputs_intact(sdir, manifest):
                    raise StaleArtifactError(
                        f"stage '{name}' outputs do not match their manifest; "
                        f"delete {sdir} to rebuild or rerun with force"
                    )
                log.info("stage %-8s skipped (up to date)", name)
                stages[name] = "skipped"
                return sdir
            log.info("stage %-8s inputs or params changed; rebuilding", name)
        if sdir.exists():
            shutil.rmtree(sdir)
        sdir.mkdir(parents=True)
        outputs = build(sdir)
        write_stage_manifest(
            sdir, name, params,
            inputs,
            digest_map({k: sdir / k for k in outputs}),
        )
        stages[name] = "ran"
        dirty = True
        return sdir

    # --- seed ------------------------------------------------------------
    seed_params = {
        "top_k_domains": int(_need(seed_cfg, "top_k_domains", "seed")),
        "per_domain": int(_need(seed_cfg, "per_domain", "seed")),
        "rng_seed": rng_seed,
        "skip_bad_records": skip_bad,
        **fields,
    }

    def build_seed(sdir: Path):
        sample = sample_seed(
            reader(seed_shards),
            seed_params["top_k_domains"],
            seed_params["per_domain"],
            rng_seed,
        )
        save_seed_sample(sample, sdir / "seed.jsonl")
        return ["seed.jsonl", "seed.manifest.json"]

    seed_dir = run_stage(
        "seed",
        seed_params,
        {f"shard:{p}": file_digest(p) for p in seed_shards},
        build_seed,
    )
    seed_jsonl = seed_dir / "seed.jsonl"
    artifacts["seed"] = str(seed_jsonl)

    # --- losses ------------------------------------------------------------
    if ladder_cfg is not None:
        sizes = [int(s) for s in _need(ladder_cfg, "sizes", "ladder")]
        ladder_shards = [str(p) for p in _need(ladder_cfg, "shards", "ladder")]
        order = int(ladder_cfg.get("order", 3))
        alpha = float(ladder_cfg.get("alpha", 0.1))
        losses_params = {"sizes": sizes, "order": order, "alpha": alpha}

        def build_losses(sdir: Path):
            text = "\n".join(doc.text for doc in reader(ladder_shards))
            if len(text) < max(sizes):
                raise DegenerateInputError(
                    f"ladder corpus has {len(text)} chars; largest rung needs {max(sizes)}"
                )
            models: dict[str, CharNgramLM] = {}
            outputs = []
            for size in sizes:
                lm = CharNgramLM.train([text[:size]], order=order, alpha=alpha)
                fname = f"lm_{size}.json"
                lm.save(sdir / fname)
                outputs.append(fname)
                models[f"ngram-{size}"] = lm
            roster = ModelRoster.from_pairs(
                [(f"ngram-{size}", float(size)) for size in sizes]
            )
            save_roster(roster, sdir / "roster.json")
            seed_docs = [d for d in reader([seed_jsonl]) if d.char_count > 0]
            rows = ladder_bpc_rows(seed_docs, models)
            save_loss_table(LossTable.from_rows(rows), sdir / "losses.jsonl")
            return outputs + ["roster.json", "losses.jsonl"]

        losses_dir = run_stage(
            "losses",
            losses_params,
            {
                "seed.jsonl": file_digest(seed_jsonl),
                **{f"shard:{p}": file_digest(p) for p in ladder_shards},
            },
            build_losses,
        )
        losses_path = losses_dir / "losses.jsonl"
        roster_path = losses_dir / "roster.json"
    else:
        losses_path = Path(_need(losses_cfg, "table", "losses"))
        roster_path = Path(_need(losses_cfg, "roster", "losses"))
    artifacts["losses"] = str(losses_path)
    artifacts["roster"] = str(roster_path)

    # --- strength ----------------------------------------------------------
    bins = int(config.get("strength", {}).get("bins", 20))

    def build_strength(sdir: Path):
        table = score_corpus(load_loss_table(losses_path), load_roster(roster_path))
        save_strength_table(table, sdir / "strength.jsonl")
        hist = strength_histogram(table, bins=bins)
        (sdir / "histogram.json").write_text(
            json.dumps(
                {"bin_edges": hist.bin_edges, "counts": hist.counts}, indent=2
            )
            + "\n"
        )
        (sdir / "histogram.svg").write_text(
            histogram_svg(
                hist.bin_edges, hist.counts,
                title="Predictive strength distribution", x_label="strength",
            )
        )
        return ["strength.jsonl", "strength.manifest.json", "histogram.json", "histogram.svg"]

    strength_dir = run_stage(
        "strength",
        {"bins": bins},
        {
            "losses.jsonl": file_digest(losses_path),
            "roster.json": file_digest(roster_path),
        },
        build_strength,
    )
    strength_path = strength_dir / "strength.jsonl"
    artifacts["strength"] = str(strength_path)
    artifacts["strength_histogram"] = str(strength_dir / "histogram.json")

    # --- seedset -------------------------------------------------------------
    seedset_params = {
        "pos": int(_need(seedset_cfg, "pos", "seedset")),
        "neg": int(_need(seedset_cfg, "neg", "seedset")),
        "rng_seed": rng_seed,
    }

    def build_seedset(sdir: Path):
        table = load_strength_table(strength_path)
        selection = select_seed_examples(
            table, seedset_params["pos"], seedset_params["neg"], rng_seed
        )
        texts = {doc.id: doc.text for doc in reader([seed_jsonl])}
        emit_training_file(selection, texts, sdir / "train.txt")
        return ["train.txt", "train.manifest.json"]

    seedset_dir = run_stage(
        "seedset",
        seedset_params,
        {
            "strength.jsonl": file_digest(strength_path),
            "seed.jsonl": file_digest(seed_jsonl),
        },
        build_seedset,
    )
    train_file = seedset_dir / "train.txt"
    artifacts["train_file"] = str(train_file)

    # --- train -------------------------------------------------------------
    threads = int(train_cfg.pop("threads", 1))
    apply_zero_eos = bool(train_cfg.pop("zero_eos", True))
    train_cfg.setdefault("seed", rng_seed)
    hp = Hyperparams(**train_cfg)
    train_params = {"hyperparams": vars(hp), "threads": threads, "zero_eos": apply_zero_eos}

    def build_train(sdir: Path):
        model = train_classifier(train_file, hp, threads=threads)
        if apply_zero_eos:
            zero_eos(model)
        save_model(model, sdir / "model.bin")
        return ["model.bin"]

    train_dir = run_stage(
        "train",
        train_params,
        {"train.txt": file_digest(train_file)},
        build_train,
    )
    model_path = train_dir / "model.bin"
    artifacts["model"] = str(model_path)

    # --- filter --------------------------------------------------------------
    fraction = filter_cfg.get("fraction")
    char_budget = filter_cfg.get("char_budget")
    filter_params = {
        "fraction": fraction,
        "char_budget": char_budget,
        "rng_seed": rng_seed,
        "skip_bad_records": skip_bad,
        "report_bins": int(filter_cfg.get("report_bins", 16)),
        **fields,
    }

    report_box: list[SelectionReport] = []

    def build_filter(sdir: Path):
        selection_config = SelectionConfig(
            model_path=str(model_path),
            input_shards=tuple(pool_shards),
            output_dir=str(sdir / "selected"),
            fraction=fraction,
            char_budget=char_budget,
            workers=workers,
            rng_seed=rng_seed,
            force=True,  # the stage framework owns this directory
            skip_bad_records=skip_bad,
            report_bins=filter_params["report_bins"],
            **fields,
        )
        report = filter_corpus(selection_config)
        report_box.append(report)
        hist = report.length_histogram
        (sdir / "length_hist.svg").write_text(
            histogram_svg(
                hist.bin_edges, hist.counts,
                title="Selected document lengths", x_label="characters",
            )
        )
        (sdir / "density.txt").write_text(density_table_text(report.domain_density))
        outputs = ["length_hist.svg", "density.txt", "selected/report.json"]
        outputs += [f"selected/{Path(p).name}" for p in pool_shards]
        return outputs

    filter_dir = run_stage(
        "filter",
        filter_params,
        {
            "model.bin": file_digest(model_path),
            **{f"shard:{p}": file_digest(p) for p in pool_shards},
        },
        build_filter,
    )
    artifacts["selected_dir"] = str(filter_dir / "selected")
    artifacts["report"] = str(filter_dir / "selected" / "report.json")

    report = report_box[0] if report_box else None
    if report is None and stages.get("filter") == "skipped":
        report = _report_from_dict(load_report(filter_dir / "selected" / "report.json"))

    return RunSummary(
        run_dir=str(run_dir),
        stages=stages,
        artifacts=artifacts,
        report=report,
    )


def _report_from_dict(d: dict) -> SelectionReport:
    density = [
        DomainDensityRow(domain=r["domain"], chars=r["chars"], char_fraction=r["char_fraction"])
        for r in d["domain_density"]
    ]
    lh = d["length_histogram"]
    hist = LengthHistogram(
        bin_edges=lh["bin_edges"],
        counts=lh["counts"],
        mean_chars=lh["mean_chars"],
        total_docs=lh["total_docs"],
    )
    return SelectionReport(
        threshold=d["threshold"],
        target_docs=d["target_docs"],
        input_docs=d["input_docs"],
        selected_docs=d["selected_docs"],
        input_chars=d["input_chars"],
        selected_chars=d["selected_chars"],
        fraction_requested=d["fraction_requested"],
        char_budget=d["char_budget"],
        effective_fraction=d["effective_fraction"],
        domain_density=density,
        length_histogram=hist,
        config_digest=d["config_digest"],
        bad_records=d["bad_records"],
        shards=d["shards"],
        selected_per_shard=d["selected_per_shard"],
        backend=d["backend"],
        elapsed_seconds=d["elapsed_seconds"],
        docs_per_second=d["docs_per_second"],
    )
