"""Batch command-line pipeline: ``synth``, ``ingest``, ``train``, ``evaluate``, ``explain``.

Exit codes: 0 success, 1 validation or data error, 2 missing resource.

The optional ``--config`` file is INI-style::

    [paths]        corpus, lexicon, stoplist, embeddings
    [columns]      text, id, lang, retweet, label
    [split]        ratios = 0.7, 0.15, 0.15   seed = 0
    [exclusions]   drop_retweets = true ... english_threshold = 0.75  min_words = 3
    [model.<kind>] epochs / batch_size / dropout / optimizer / learning_rate /
                   class_weight; any other key goes to the kind's extras

It is copied byte-for-byte into each output directory as ``config.ini``; the
resolved settings are also written as ``effective_config.json``.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from deptweets.corpus import (
    DEFAULT_RATIOS,
    CorpusError,
    ExclusionConfig,
    LabeledExample,
    Provenance,
    apply_exclusions,
    generate_synthetic_tweets,
    ingest_csv,
    load_examples,
    uniform_spec,
    save_examples,
    stratified_split,
    write_csv,
    write_jsonl,
)
from deptweets.evaluation import EvaluationError, compare_models, evaluate, plot_curves, save_report
from deptweets.explain import ExplainError, explain_occlusion, explain_shapley, render_highlights, save_attribution
from deptweets.features import EncoderUnavailable, FeatureError, load_embeddings
from deptweets.labels import DepressionClass
from deptweets.lexicon import Decision, LexiconError, load_lexicons, weak_label
from deptweets.models import (
    FAMILIES,
    ArtifactError,
    ModelKind,
    TrainConfig,
    TrainingError,
    load_artifact,
    save_artifact,
    train_model,
)
from deptweets.textprep import DEFAULT_STOPLIST, load_stoplist, normalize

log = logging.getLogger("deptweets")

EXIT_OK, EXIT_DATA, EXIT_MISSING = 0, 1, 2
_TRAIN_FIELDS = {"epochs": int, "batch_size": int, "dropout": float, "optimizer": str,
                 "learning_rate": float, "class_weight": str}


class MissingResource(Exception):
    pass


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


@dataclass
class PipelineConfig:
    paths: dict[str, str] = field(default_factory=dict)
    columns: dict[str, str] = field(default_factory=dict)
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0
    exclusions: ExclusionConfig = field(default_factory=ExclusionConfig)
    models: dict[str, dict[str, Any]] = field(default_factory=dict)
    source_text: str | None = None

    @classmethod
    def from_ini(cls, text: str) -> "PipelineConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ValueError(f"bad config file: {exc}") from None
        cfg = cls(source_text=text)
        if parser.has_section("paths"):
            cfg.paths = dict(parser["paths"])
        if parser.has_section("columns"):
            cfg.columns = dict(parser["columns"])
        if parser.has_section("split"):
            sec = parser["split"]
            if "ratios" in sec:
                parts = [float(x) for x in sec["ratios"].replace(",", " ").split()]
                if len(parts) != 3:
                    raise ValueError("split.ratios needs three numbers")
                cfg.ratios = tuple(parts)
            cfg.seed = sec.getint("seed", 0)
        if parser.has_section("exclusions"):
            sec = parser["exclusions"]
            values = {}
            for f in dataclasses.fields(ExclusionConfig):
                if f.name in sec:
                    kind = type(getattr(ExclusionConfig(), f.name))
                    if kind is bool:
                        values[f.name] = sec.getboolean(f.name)
                    else:
                        values[f.name] = kind(sec[f.name])
            unknown = set(sec) - {f.name for f in dataclasses.fields(ExclusionConfig)}
            if unknown:
                raise ValueError(f"unknown exclusion settings: {', '.join(sorted(unknown))}")
            cfg.exclusions = ExclusionConfig(**values)
        for section in parser.sections():
            if section.startswith("model."):
                kind = ModelKind(section.split(".", 1)[1]).value
                cfg.models[kind] = {k: _parse_value(v) for k, v in parser[section].items()}
        return cfg

    def train_config(self, kind: ModelKind, seed: int, **extra_overrides) -> TrainConfig:
        overrides: dict[str, Any] = {"seed": seed}
        extras: dict[str, Any] = {}
        for key, value in self.models.get(kind.value, {}).items():
            if key in _TRAIN_FIELDS:
                overrides[key] = None if value in ("none", None) else _TRAIN_FIELDS[key](value)
            else:
                extras[key] = value
        for key, value in extra_overrides.items():
            if value is None:
                continue
            if key in _TRAIN_FIELDS:
                overrides[key] = value
            else:
                extras[key] = value
        return TrainConfig.default(kind, extras=extras, **overrides)

    def to_json(self) -> dict:
        return {
            "paths": dict(sorted(self.paths.items())),
            "columns": dict(sorted(self.columns.items())),
            "split": {"ratios": list(self.ratios), "seed": self.seed},
            "exclusions": dataclasses.asdict(self.exclusions),
            "models": {k: self.models[k] for k in sorted(self.models)},
        }


# --------------------------------------------------------------------------
# helpers


def _write_json(obj: Any, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _load_config(args) -> PipelineConfig:
    if not args.config:
        cfg = PipelineConfig()
    else:
        path = Path(args.config)
        if not path.is_file():
            raise MissingResource(f"config file not found: {path}")
        cfg = PipelineConfig.from_ini(path.read_text(encoding="utf-8"))
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _prepare_out(args, cfg: PipelineConfig, extra: dict | None = None) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.source_text is not None:
        (out / "config.ini").write_text(cfg.source_text, encoding="utf-8")
    effective = cfg.to_json()
    effective.update(extra or {})
    _write_json(effective, out / "effective_config.json")
    return out


def _resource(path_arg: str | None, cfg: PipelineConfig, key: str) -> str | None:
    value = path_arg or cfg.paths.get(key)
    if value and not Path(value).is_file():
        raise MissingResource(f"{key} file not found: {value}")
    return value or None


def _stoplist(args, cfg: PipelineConfig) -> frozenset[str]:
    path = _resource(getattr(args, "stoplist", None), cfg, "stoplist")
    return load_stoplist(path) if path else DEFAULT_STOPLIST


# --------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    lex = load_lexicons(_resource(args.lexicon, cfg, "lexicon"))
    out = _prepare_out(args, cfg, {"synth": {"per_class": args.per_class}})
    pairs = generate_synthetic_tweets(uniform_spec(args.per_class), lex, seed=cfg.seed)
    records = [rec for rec, _ in pairs]
    write_csv(records, out / "synthetic.csv")
    stop = _stoplist(args, cfg)
    save_examples(
        (LabeledExample.from_text(rec.id, rec.text, cls, Provenance.SYNTHETIC, stop) for rec, cls in pairs),
        out / "synthetic.jsonl",
    )
    print(f"wrote {len(records)} synthetic tweets to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    corpus = args.input or cfg.paths.get("corpus")
    if not corpus:
        raise ValueError("no input corpus: pass --input or set paths.corpus")
    if not Path(corpus).is_file():
        raise MissingResource(f"input CSV not found: {corpus}")
    lex = load_lexicons(_resource(args.lexicon, cfg, "lexicon"))
    stop = _stoplist(args, cfg)
    columns = dict(cfg.columns)
    for role in ("text", "id", "lang", "retweet", "label"):
        flag = getattr(args, f"{role}_col")
        if flag:
            columns[role] = flag
    label_col = columns.pop("label", None)
    records = ingest_csv(corpus, columns)
    if label_col and records and label_col not in records[0].raw_row:
        raise CorpusError(f"{corpus}: label column {label_col!r} not found in header")
    kept, excluded = apply_exclusions(records, cfg.exclusions)
    labeled, review = [], []
    for rec in kept:
        manual = (rec.raw_row.get(label_col) or "").strip() if label_col else ""
        if manual:
            try:
                cls = DepressionClass.parse(manual)
            except ValueError as exc:
                raise CorpusError(f"{corpus}: tweet {rec.id}: {exc}") from None
            labeled.append(LabeledExample.from_text(rec.id, rec.text, cls, Provenance.MANUAL, stop))
            continue
        outcome = weak_label(normalize(rec.text), lex)
        if outcome.decision is Decision.NEEDS_REVIEW:
            review.append({"tweet_id": rec.id, "text": rec.text, "reason": outcome.reason,
                           "matches": [m.to_json() for m in outcome.matches]})
            continue
        cls = outcome.label if outcome.decision is Decision.LABELED else DepressionClass.NO_DEPRESSION
        labeled.append(LabeledExample.from_text(rec.id, rec.text, cls, Provenance.LEXICON_WEAK, stop))
    out = _prepare_out(args, cfg, {"ingest": {"input": str(corpus), "lexicon_version": lex.version,
                                              "columns": dict(sorted(columns.items())),
                                              "label_column": label_col}})
    save_examples(labeled, out / "labeled.jsonl")
    write_jsonl(review, out / "review.jsonl")
    reasons = Counter(e.reason for e in excluded)
    _write_json({
        "input_records": len(records),
        "labeled": len(labeled),
        "needs_review": len(review),
        "excluded": len(excluded),
        "reasons": dict(sorted(reasons.items())),
        "excluded_records": [{"tweet_id": e.record.id, "reason": e.reason} for e in excluded],
        "label_counts": dict(sorted(Counter(e.label.value for e in labeled).items())),
    }, out / "exclusions.json")
    print(f"{len(records)} records: {len(labeled)} labeled, {len(review)} for review, {len(excluded)} excluded")
    return EXIT_OK


def _model_kinds(spec: str) -> list[ModelKind]:
    if spec == "all":
        return list(FAMILIES)
    kinds = []
    for name in spec.split(","):
        try:
            kinds.append(ModelKind(name.strip()))
        except ValueError:
            valid = ", ".join(k.value for k in ModelKind)
            raise ValueError(f"unknown model kind {name.strip()!r} (choose from {valid} or all)") from None
    return kinds


def cmd_train(args) -> int:
    cfg = _load_config(args)
    kinds = _model_kinds(args.model)
    data = args.data or cfg.paths.get("dataset")
    if not data:
        raise ValueError("no labeled dataset: pass --data or set paths.dataset")
    if not Path(data).is_file():
        raise MissingResource(f"labeled dataset not found: {data}")
    examples = load_examples(data)
    split = stratified_split(examples, cfg.ratios, cfg.seed)
    configs = {
        k: cfg.train_config(k, cfg.seed, epochs=args.epochs, max_len=args.max_len,
                            class_weight=args.class_weight)
        for k in kinds
    }
    embeddings = None
    if any(k.uses_glove for k in kinds):
        path = _resource(args.embeddings, cfg, "embeddings")
        if not path:
            raise MissingResource("glove model kinds need --embeddings or paths.embeddings")
        first = next(configs[k] for k in kinds if k.uses_glove)
        embeddings = load_embeddings(path, int(first.extras.get("embedding_dim", 100)),
                                     first.extras.get("oov_policy", "zeros"))
    out = _prepare_out(args, cfg, {"train": {
        "data": str(data), "models": [k.value for k in kinds],
        "train_configs": {k.value: configs[k].to_json() for k in kinds},
    }})
    _write_json(split.to_json(), out / "split.json")
    for name, part in split.partitions().items():
        save_examples(part, out / f"{name}.jsonl")
    for kind in kinds:
        log.info("training %s", kind.value)
        artifact = train_model(split.train, configs[kind], split.validation, embeddings)
        save_artifact(artifact, out / kind.value)
        print(f"trained {kind.value} -> {out / kind.value}")
    return EXIT_OK


def _artifact_dirs(root: Path) -> list[Path]:
    if (root / "artifact.json").is_file():
        return [root]
    return sorted(p.parent for p in root.glob("*/artifact.json"))


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    root = Path(args.artifacts)
    dirs = _artifact_dirs(root) if root.is_dir() else []
    if not dirs:
        raise MissingResource(f"no trained artifacts found under {root}")
    data_dir = Path(args.data_dir) if args.data_dir else (root if dirs[0] != root else root.parent)
    partitions = {}
    for name in ("validation", "test"):
        path = data_dir / f"{name}.jsonl"
        if not path.is_file():
            raise MissingResource(f"partition file not found: {path}")
        partitions[name] = load_examples(path)
    out = _prepare_out(args, cfg, {"evaluate": {"artifacts": [d.name for d in dirs]}})
    reports: dict[str, list] = {"validation": [], "test": []}
    for d in dirs:
        artifact = load_artifact(d)
        for name, examples in partitions.items():
            report = evaluate(artifact, examples, dataset_id=name)
            save_report(report, out / f"{d.name}.{name}.json")
            reports[name].append(report)
        if artifact.kind.is_neural and artifact.history.get("train_loss"):
            plot_curves(artifact.history, out / f"{d.name}.curves.png", title=d.name)
    names = [d.name for d in dirs]
    for name, reps in reports.items():
        table = compare_models(reps, names)
        suffix = "" if name == "test" else "_validation"
        (out / f"comparison{suffix}.csv").write_text(table.to_csv(), encoding="utf-8")
        (out / f"comparison{suffix}.txt").write_text(table.to_text(), encoding="utf-8")
        if name == "test":
            print(table.to_text(), end="")
    return EXIT_OK


def cmd_explain(args) -> int:
    cfg = _load_config(args)
    if args.text is not None:
        texts = [args.text]
    else:
        path = Path(args.file)
        if not path.is_file():
            raise MissingResource(f"input text file not found: {path}")
        texts = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        if not texts:
            raise ExplainError(f"{path}: no input lines")
    artifact_dir = Path(args.artifact)
    if not (artifact_dir / "artifact.json").is_file():
        raise MissingResource(f"no artifact.json in {artifact_dir}")
    artifact = load_artifact(artifact_dir)
    seed = cfg.seed
    out = _prepare_out(args, cfg, {"explain": {"artifact": str(artifact_dir), "method": args.method,
                                               "samples": args.samples}})
    for n, text in enumerate(texts, 1):
        if args.method == "occlusion":
            attr = explain_occlusion(artifact, text)
        else:
            attr = explain_shapley(artifact, text, args.samples, seed)
        stem = out / f"explanation_{n:03d}"
        save_attribution(attr, stem.with_suffix(".json"))
        render_highlights(attr, stem)
        print(f"{stem}: {attr.predicted.label.value}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="INI config file (snapshotted into --out)")
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("--out", default=default if suppress else "out", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=default if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deptweets", description=__doc__.split("\n")[0])
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    _globals(p, suppress=True)
    p.add_argument("--per-class", type=int, default=300)
    p.add_argument("--lexicon")
    p.add_argument("--stoplist")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="filter and weak-label a raw tweet CSV")
    _globals(p, suppress=True)
    p.add_argument("--input", help="raw tweet CSV")
    p.add_argument("--lexicon")
    p.add_argument("--stoplist")
    for role in ("text", "id", "lang", "retweet", "label"):
        p.add_argument(f"--{role}-col", dest=f"{role}_col", help=f"CSV column holding the {role}")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train one or more model kinds")
    _globals(p, suppress=True)
    p.add_argument("--data", help="labeled JSONL dataset")
    p.add_argument("--model", default="all", help="model kind, comma list, or 'all'")
    p.add_argument("--embeddings", help="pretrained word-vector text file (glove kinds)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--class-weight", choices=["balanced"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score trained artifacts on validation and test")
    _globals(p, suppress=True)
    p.add_argument("--artifacts", required=True, help="train output dir or a single artifact dir")
    p.add_argument("--data-dir", help="directory holding validation.jsonl and test.jsonl")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="token attributions with highlight reports")
    _globals(p, suppress=True)
    p.add_argument("--artifact", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text")
    group.add_argument("--file", help="one text per line")
    p.add_argument("--method", choices=["occlusion", "shapley"], default="occlusion")
    p.add_argument("--samples", type=int, default=2000)
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MissingResource, FileNotFoundError, EncoderUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (CorpusError, LexiconError, FeatureError, TrainingError, ArtifactError, EvaluationError,
            ExplainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
