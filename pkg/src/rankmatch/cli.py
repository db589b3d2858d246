"""Command-line interface.

Every subcommand accepts --config pointing at a TOML or JSON file whose keys
mirror the long flag names (the `run` command uses the sectioned run-config
schema instead); explicit flags override config values. Exit codes: 0 ok,
2 configuration error, 3 data error, 4 unexpected internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, classifier, model_io, pipeline
from .corpus import CorpusReader, sample_seed, save_seed_sample
from .errors import ConfigError, DataError
from .seedset import emit_training_file, select_seed_examples

log = logging.getLogger("rankmatch")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML/JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    p.add_argument("--workers", type=int, default=None, help="parallel workers (default 1)")
    p.add_argument("--skip-bad-records", action="store_true", default=None,
                   help="count and skip malformed records instead of failing")
    p.add_argument("--force", action="store_true", default=None,
                   help="allow overwriting non-empty outputs")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _add_fields(p: argparse.ArgumentParser):
    p.add_argument("--id-field", default=None, help="JSON key holding the doc id")
    p.add_argument("--text-field", default=None, help="JSON key holding the text")
    p.add_argument("--url-field", default=None, help="JSON key holding the url")


class _Options:
    """Layered option lookup: explicit flag, then config file, then default."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.cfg = pipeline.load_config(args.config) if args.config else {}

    def get(self, name: str, default=None, required: bool = False):
        flag = self.args.get(name.replace("-", "_"))
        if flag is not None:
            return flag
        if name in self.cfg:
            return self.cfg[name]
        if required and default is None:
            raise ConfigError(f"missing required option --{name}")
        return default

    def fields(self) -> dict:
        return {
            "id_field": self.get("id-field", "id"),
            "text_field": self.get("text-field", "text"),
            "url_field": self.get("url-field", "url"),
        }

    def reader(self, shards) -> CorpusReader:
        return CorpusReader(
            shards,
            skip_bad_records=bool(self.get("skip-bad-records", False)),
            **self.fields(),
        )


def _cmd_sample_seed(args) -> int:
    opt = _Options(args)
    shards = opt.get("shards", required=True)
    output = Path(opt.get("output", required=True))
    sample = sample_seed(
        opt.reader(shards),
        int(opt.get("top-k-domains", required=True)),
        int(opt.get("per-domain", required=True)),
        int(opt.get("seed", 0)),
    )
    output.parent.mkdir(parents=True, exist_ok=True)
    manifest = save_seed_sample(sample, output)
    print(f"sampled {len(sample.documents)} docs from "
          f"{len(sample.per_domain_counts)} domains -> {output}")
    print(f"manifest: {manifest}")
    return 0


def _cmd_score_strength(args) -> int:
    opt = _Options(args)
    from .compression import load_loss_table
    from .strength import (
        load_roster,
        save_strength_table,
        score_corpus,
        strength_histogram,
    )

    losses = load_loss_table(opt.get("losses", required=True))
    roster = load_roster(opt.get("roster", required=True))
    table = score_corpus(losses, roster)
    output = Path(opt.get("output", required=True))
    output.parent.mkdir(parents=True, exist_ok=True)
    save_strength_table(table, output)
    bins = int(opt.get("bins", 20))
    hist = strength_histogram(table, bins=bins)
    print(f"scored {len(table.scores)} docs against {table.n_models} models "
          f"({losses.quarantined} quarantined, {losses.duplicates} duplicate rows)")
    print(analysis.histogram_text(hist.bin_edges, hist.counts), end="")
    svg_path = opt.get("histogram-svg")
    if svg_path:
        Path(svg_path).write_text(
            analysis.histogram_svg(
                hist.bin_edges, hist.counts,
                title="Predictive strength distribution", x_label="strength",
            )
        )
        print(f"histogram: {svg_path}")
    return 0


def _cmd_build_seedset(args) -> int:
    opt = _Options(args)
    from .strength import load_strength_table

    table = load_strength_table(opt.get("strength", required=True))
    selection = select_seed_examples(
        table,
        int(opt.get("pos", required=True)),
        int(opt.get("neg", required=True)),
        int(opt.get("seed", 0)),
    )
    texts = {d.id: d.text for d in opt.reader(opt.get("corpus", required=True))}
    output = Path(opt.get("output", required=True))
    output.parent.mkdir(parents=True, exist_ok=True)
    lines = emit_training_file(selection, texts, output)
    print(f"wrote {lines} labeled lines -> {output} "
          f"(pos cutoff {selection.pos_cutoff:.4f}, neg cutoff {selection.neg_cutoff:.4f})")
    return 0


def _cmd_train(args) -> int:
    opt = _Options(args)
    hp = classifier.Hyperparams(
        lr=float(opt.get("lr", 0.1)),
        dim=int(opt.get("dim", 100)),
        epochs=int(opt.get("epochs", 5)),
        word_ngrams=int(opt.get("word-ngrams", 2)),
        min_count=int(opt.get("min-count", 1)),
        buckets=int(opt.get("buckets", 2_000_000)),
        seed=int(opt.get("seed", 0)),
    )
    model = classifier.train(
        opt.get("train-file", required=True),
        hp,
        threads=int(opt.get("workers", 1)),
    )
    if not opt.get("no-zero-eos", False):
        classifier.zero_eos(model)
    output = Path(opt.get("output", required=True))
    output.parent.mkdir(parents=True, exist_ok=True)
    model_io.save_model(model, output)
    acc = classifier.training_accuracy(model, opt.get("train-file"))
    print(f"trained on {opt.get('train-file')}; vocab {model.n_words}, "
          f"training accuracy {acc:.4f} -> {output}")
    return 0


def _cmd_inspect_features(args) -> int:
    opt = _Options(args)
    model = model_io.load_model(opt.get("model", required=True))
    token = opt.get("token")
    if token is not None:
        fi = analysis.feature_influence(model, token)
        print(f"{fi.token}\t{fi.influence:+.6f}")
        return 0
    k = int(opt.get("top", 25))
    sign = opt.get("sign", "positive")
    items = analysis.top_features(model, k, sign=sign)
    print(analysis.influence_table_text(items), end="")
    out_json = opt.get("json-out")
    if out_json:
        Path(out_json).write_text(
            json.dumps([vars(fi) for fi in items], indent=2, ensure_ascii=False) + "\n"
        )
    return 0


def _cmd_filter(args) -> int:
    opt = _Options(args)
    fraction = opt.get("fraction")
    budget = opt.get("char-budget")
    config = pipeline.SelectionConfig(
        model_path=str(opt.get("model", required=True)),
        input_shards=tuple(str(s) for s in opt.get("shards", required=True)),
        output_dir=str(opt.get("output-dir", required=True)),
        fraction=float(fraction) if fraction is not None else None,
        char_budget=int(budget) if budget is not None else None,
        workers=int(opt.get("workers", 1)),
        rng_seed=int(opt.get("seed", 0)),
        force=bool(opt.get("force", False)),
        skip_bad_records=bool(opt.get("skip-bad-records", False)),
        report_bins=int(opt.get("report-bins", 16)),
        **opt.fields(),
    )
    report = pipeline.filter_corpus(config)
    print(f"selected {report.selected_docs}/{report.input_docs} docs "
          f"(target {report.target_docs}, threshold {report.threshold:.6f})")
    print(f"chars: {report.selected_chars}/{report.input_chars}; "
          f"{report.docs_per_second:,.0f} docs/s end to end on {report.backend} backend")
    print(f"report: {Path(config.output_dir) / 'report.json'}")
    return 0


def _cmd_stats(args) -> int:
    opt = _Options(args)
    docs = list(opt.reader(opt.get("shards", required=True)))
    if not docs:
        print("no documents")
        return 0
    density = analysis.domain_density(docs)
    edges = analysis.covering_edges((d.char_count for d in docs), bins=int(opt.get("bins", 16)))
    hist = analysis.length_histogram(docs, edges)
    total_chars = sum(d.char_count for d in docs)
    print(f"docs: {len(docs)}   chars: {total_chars}   mean: {hist.mean_chars:.1f}")
    print("top domains by character share:")
    print(analysis.density_table_text(density, top=int(opt.get("top", 20))), end="")
    print("length distribution:")
    print(analysis.histogram_text(hist.bin_edges, hist.counts), end="")
    out_json = opt.get("json-out")
    if out_json:
        payload = {
            "docs": len(docs),
            "chars": total_chars,
            "domain_density": [vars(r) for r in density],
            "length_histogram": vars(hist),
        }
        Path(out_json).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def _cmd_run(args) -> int:
    opt = _Options(args)
    if not args.config:
        raise ConfigError("run requires --config with the pipeline sections")
    config = dict(opt.cfg)
    run_section = dict(config.get("run", {}))
    if args.seed is not None:
        run_section["rng_seed"] = args.seed
    if args.workers is not None:
        run_section["workers"] = args.workers
    if args.skip_bad_records is not None:
        run_section["skip_bad_records"] = args.skip_bad_records
    config["run"] = run_section
    summary = pipeline.run_end_to_end(config, force=bool(args.force))
    for stage, status in summary.stages.items():
        print(f"stage {stage:<8} {status}")
    report = summary.report
    if report is not None:
        print(f"selected {report.selected_docs}/{report.input_docs} docs "
              f"(threshold {report.threshold:.6f})")
    print(f"artifacts under {summary.run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankmatch",
        description="Compression-rank data selection: strength scoring, "
                    "classifier training, corpus filtering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-seed", help="stratified seed sample over top domains")
    _add_common(p)
    _add_fields(p)
    p.add_argument("--shards", nargs="+", default=None)
    p.add_argument("--top-k-domains", type=int, default=None)
    p.add_argument("--per-domain", type=int, default=None)
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_sample_seed)

    p = sub.add_parser("score-strength", help="strength scores from a loss table + roster")
    _add_common(p)
    p.add_argument("--losses", default=None)
    p.add_argument("--roster", default=None)
    p.add_argument("--output", default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--histogram-svg", default=None)
    p.set_defaults(func=_cmd_score_strength)

    p = sub.add_parser("build-seedset", help="labeled training file from a strength table")
    _add_common(p)
    _add_fields(p)
    p.add_argument("--strength", default=None)
    p.add_argument("--corpus", nargs="+", default=None)
    p.add_argument("--pos", type=int, default=None)
    p.add_argument("--neg", type=int, default=None)
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_build_seedset)

    p = sub.add_parser("train", help="train the classifier on a labeled file")
    _add_common(p)
    p.add_argument("--train-file", default=None)
    p.add_argument("--output", default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--word-ngrams", type=int, default=None)
    p.add_argument("--min-count", type=int, default=None)
    p.add_argument("--buckets", type=int, default=None)
    p.add_argument("--no-zero-eos", action="store_true", default=None,
                   help="keep the EOS embedding row (ablation)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("inspect-features", help="feature influences of a model")
    _add_common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--sign", choices=["positive", "negative"], default=None)
    p.add_argument("--token", default=None)
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=_cmd_inspect_features)

    p = sub.add_parser("filter", help="select the top-scoring fraction of a corpus")
    _add_common(p)
    _add_fields(p)
    p.add_argument("--model", default=None)
    p.add_argument("--shards", nargs="+", default=None)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--char-budget", type=int, default=None)
    p.add_argument("--report-bins", type=int, default=None)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("stats", help="corpus statistics: domains, lengths")
    _add_common(p)
    _add_fields(p)
    p.add_argument("--shards", nargs="+", default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("run", help="run or resume the full pipeline from a config")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    except (DataError, OSError, ValueError, LookupError) as exc:
        log.error("%s", exc)
        return 3
    except Exception:  # noqa: BLE001 - the contract is exit code 4 + traceback
        log.exception("internal error")
        return 4


if __name__ == "__main__":
    sys.exit(main())
