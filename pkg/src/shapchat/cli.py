"""Command-line driver for the whole pipeline.

Subcommands: synth, train, explain, gen-global-doc, gen-align, split-corpus,
eval-ppl, eval-loss, ablation, serve. JSON goes to stdout by default; --out
(or --out-dir) writes files atomically (temp + rename), so failures never
leave partial artifacts. Exit codes: 0 ok, 1 usage, 2 bad input/format,
3 backend unreachable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .attribution import BackgroundSet, exact_shap, kernel_shap
from .boosting import TrainParams, train_gbdt
from .errors import BackendError, ShapchatError
from .evaluation import (
    AblationStage,
    EvalReport,
    TokenScore,
    build_ablation_report,
    perplexity,
    qa_loss,
    render_ablation_text,
)
from .finetune import (
    DEFAULT_QUESTION_TEMPLATES,
    DomainCategory,
    QARecord,
    STEP_GLOBAL_EXPLANATION,
    STEP_HUMAN_ALIGNMENT,
    STEP_IN_DOMAIN,
    finetune_config_for_step,
    generate_alignment_dataset,
    generate_global_explanation_doc,
    records_to_jsonl,
    split_in_domain_corpus,
    split_to_manifest_json,
)
from .llm import BackendConfig, MockBackend, score_tokens
from .model import load_ensemble, load_table_csv, save_ensemble, save_table_csv
from .prompts import parse_alpaca
from .synth import generate_synthetic_battery_table

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_BACKEND = 3


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; this CLI reserves 2 for input errors
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write_atomic(path: str, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + f".tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, target)


def _emit(text: str, out: str | None, quiet: bool) -> None:
    if out:
        _write_atomic(out, text)
        if not quiet:
            print(f"wrote {out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _load_model(path: str):
    return load_ensemble(_read_text(path))


def _load_background(path: str, schema) -> BackgroundSet:
    table = load_table_csv(_read_text(path), schema)
    return BackgroundSet(schema=schema, rows=table.rows)


def _budget(text: str):
    if text == "all":
        return "all"
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"--budget must be 'all' or an integer, got {text!r}") from None


def _backend_from_args(args) -> tuple[BackendConfig, object | None]:
    config = BackendConfig.from_env()
    if getattr(args, "mock_constant", None) is not None:
        return config, MockBackend(token_logprob=args.mock_constant)
    return config, None


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    table = generate_synthetic_battery_table(args.n, args.noise_sigma, seed=args.seed)
    _emit(save_table_csv(table), args.out, args.quiet)
    return EXIT_OK


def cmd_train(args) -> int:
    table = load_table_csv(_read_text(args.data))
    if table.targets is None:
        raise InputError(f"{args.data} has no numeric target column to train on")
    params = TrainParams(
        n_trees=args.n_trees,
        max_depth=args.max_depth,
        learning_rate=args.learning_rate,
        min_samples_leaf=args.min_samples_leaf,
        seed=args.seed,
    )
    _emit(save_ensemble(train_gbdt(table, params)), args.out, args.quiet)
    return EXIT_OK


def cmd_explain(args) -> int:
    model = _load_model(args.model)
    background = _load_background(args.background, model.schema)
    row_doc = json.loads(_read_text(args.row))
    if not isinstance(row_doc, dict) or "values" not in row_doc:
        raise InputError(f'{args.row} must be a JSON object {{"values": [...]}}')
    row = tuple(row_doc["values"])
    if args.method == "exact":
        explanation = exact_shap(model, row, background)
    else:
        explanation = kernel_shap(
            model, row, background, budget=_budget(args.budget), seed=args.seed
        )
    _emit(explanation.to_json_text(), args.out, args.quiet)
    return EXIT_OK


def _analysis_json(model, table, background) -> dict:
    """Summary + dependence data behind the global document, for external
    plotting tools."""
    import numpy as np

    from .finetune import auto_explain_table, strongest_partner
    from .summaries import dependence_data, global_summary, top_features

    explanations = auto_explain_table(model, table, background)
    summary = global_summary(explanations)
    encoded = model.schema.encode_rows(table.rows)
    shap_matrix = np.array([e.shap_values for e in explanations])
    d = len(model.schema)
    dependence = []
    for i in top_features(summary, min(15, d)):
        color = strongest_partner(encoded, shap_matrix, i)[0] if d > 1 else i
        dependence.append(dependence_data(explanations, i, color).to_json())
    return {
        "feature_names": list(model.schema.names),
        "summary": summary.to_json(),
        "dependence": dependence,
    }


def cmd_gen_global_doc(args) -> int:
    model = _load_model(args.model)
    table = load_table_csv(_read_text(args.data), model.schema)
    background = _load_background(args.background, model.schema)
    doc = generate_global_explanation_doc(model, table, background, args.category_feature)
    if args.out_dir:
        out = Path(args.out_dir)
        _write_atomic(str(out / "global_explanation.txt"), doc)
        _write_atomic(
            str(out / "analysis.json"), _json_text(_analysis_json(model, table, background))
        )
        _write_atomic(
            str(out / "finetune_config.json"),
            _json_text(finetune_config_for_step(STEP_GLOBAL_EXPLANATION).to_json()),
        )
        if not args.quiet:
            print(f"wrote {args.out_dir}/global_explanation.txt", file=sys.stderr)
    else:
        sys.stdout.write(doc)
    return EXIT_OK


def cmd_gen_align(args) -> int:
    model = _load_model(args.model)
    table = load_table_csv(_read_text(args.data), model.schema)
    background = _load_background(args.background, model.schema)
    templates = DEFAULT_QUESTION_TEMPLATES
    if args.templates:
        lines = [l for l in _read_text(args.templates).splitlines() if l.strip()]
        templates = tuple(lines)
    dataset = generate_alignment_dataset(
        model,
        table,
        background,
        templates=templates,
        k=args.k,
        train_frac=args.train_frac,
        seed=args.seed,
    )
    if args.out_dir:
        out = Path(args.out_dir)
        _write_atomic(str(out / "train.jsonl"), records_to_jsonl(dataset.train))
        _write_atomic(str(out / "eval.jsonl"), records_to_jsonl(dataset.eval))
        _write_atomic(str(out / "provenance.json"), _json_text(dataset.provenance()))
        _write_atomic(
            str(out / "finetune_config.json"),
            _json_text(finetune_config_for_step(STEP_HUMAN_ALIGNMENT).to_json()),
        )
        if not args.quiet:
            print(
                f"wrote {len(dataset.train)} train / {len(dataset.eval)} eval records "
                f"to {args.out_dir}",
                file=sys.stderr,
            )
    else:
        sys.stdout.write(
            _json_text(
                {
                    "train": [r.record.__dict__ for r in dataset.train],
                    "eval": [r.record.__dict__ for r in dataset.eval],
                    "provenance": dataset.provenance(),
                }
            )
        )
    return EXIT_OK


def cmd_split_corpus(args) -> int:
    docs_dir = Path(args.docs_dir)
    if not docs_dir.is_dir():
        raise InputError(f"cannot read {args.docs_dir}: not a directory")
    files = sorted(docs_dir.glob("*.txt"))
    documents = tuple((f.stem, _read_text(str(f))) for f in files)
    category = DomainCategory(name=args.category, documents=documents)
    split = split_in_domain_corpus(category, eval_doc_id=args.eval_doc, seed=args.seed)
    manifest = split_to_manifest_json(split)
    if args.out_dir:
        out = Path(args.out_dir)
        _write_atomic(str(out / "manifest.json"), manifest)
        _write_atomic(
            str(out / "finetune_config.json"),
            _json_text(finetune_config_for_step(STEP_IN_DOMAIN).to_json()),
        )
        if not args.quiet:
            print(f"wrote {args.out_dir}/manifest.json", file=sys.stderr)
    else:
        sys.stdout.write(manifest)
    return EXIT_OK


def _scores_from_file(path: str) -> list[TokenScore]:
    doc = json.loads(_read_text(path))
    if not isinstance(doc, list):
        raise InputError(f"{path} must be a JSON array of token scores")
    return [TokenScore.from_json(entry) for entry in doc]


def cmd_eval_ppl(args) -> int:
    if args.scores:
        scores = _scores_from_file(args.scores)
        document_id = args.document_id or Path(args.scores).stem
    else:
        if not args.doc:
            raise UsageError("eval-ppl needs --scores or --doc")
        text = _read_text(args.doc)
        config, transport = _backend_from_args(args)
        scores = score_tokens(config, "", text, transport=transport)
        document_id = args.document_id or Path(args.doc).stem
    report = EvalReport(
        metric="perplexity",
        value=perplexity(scores),
        n_tokens=len(scores),
        document_id=document_id,
    )
    _emit(_json_text(report.to_json()), args.out, args.quiet)
    return EXIT_OK


def cmd_eval_loss(args) -> int:
    lines = [l for l in _read_text(args.records).splitlines() if l.strip()]
    if not lines:
        raise InputError(f"{args.records} contains no records")
    records = [
        QARecord(record=parse_alpaca(line), row_index=i, seed=args.seed, template_id=0)
        for i, line in enumerate(lines)
    ]
    config, transport = _backend_from_args(args)
    token_count = 0

    def scorer(prompt: str, target: str):
        nonlocal token_count
        scores = score_tokens(config, prompt, target, transport=transport)
        token_count += len(scores)
        return scores

    value = qa_loss(records, scorer)
    report = EvalReport(
        metric="loss",
        value=value,
        n_tokens=token_count,
        document_id=args.document_id or Path(args.records).stem,
    )
    _emit(_json_text(report.to_json()), args.out, args.quiet)
    return EXIT_OK


def cmd_ablation(args) -> int:
    doc = json.loads(_read_text(args.stages))
    if not isinstance(doc, list):
        raise InputError(f"{args.stages} must be a JSON array of stages")
    report = build_ablation_report([AblationStage.from_json(stage) for stage in doc])
    text = render_ablation_text(report) if args.text else report.to_json_text()
    _emit(text, args.out, args.quiet)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import create_app, settings_from_config

    if not args.config:
        raise UsageError("serve needs --config pointing at a service config file")
    config = json.loads(_read_text(args.config))
    settings = settings_from_config(config, mock_backend=args.mock_backend)
    if args.check_backend:
        from .service import ChatService

        if not ChatService(settings).backend_ok():
            raise BackendError(f"backend at {settings.backend_config.base_url} is unreachable")
    app = create_app(settings)
    import uvicorn

    port = args.port or int(config.get("port", 8000))
    uvicorn.run(app, host=args.host, port=port, log_level="warning" if args.quiet else "info")
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for anything random")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--quiet", action="store_true", help="suppress progress notes")
    common.add_argument("--config", help="config file (used by serve)")

    parser = _Parser(prog="shapchat", description=__doc__)
    parser.add_argument("--version", action="version", version=f"shapchat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic battery data (CSV)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a tree ensemble on a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--n-trees", type=int, default=50)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--min-samples-leaf", type=int, default=2)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", parents=[common], help="attribute one prediction")
    p.add_argument("--model", required=True)
    p.add_argument("--row", required=True, help='JSON file {"values": [...]}')
    p.add_argument("--background", required=True, help="background rows (CSV)")
    p.add_argument("--method", choices=("kernel", "exact"), default="kernel")
    p.add_argument("--budget", default="all", help="'all' or a sample count")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser(
        "gen-global-doc", parents=[common], help="stage-2 global explanation document"
    )
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--category-feature", default="battery_type")
    p.add_argument("--out-dir", help="write document + step config here")
    p.set_defaults(func=cmd_gen_global_doc)

    p = sub.add_parser("gen-align", parents=[common], help="stage-3 alignment Q&A sets")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--templates", help="file with one question template per line")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--out-dir", help="write train/eval JSONL + provenance here")
    p.set_defaults(func=cmd_gen_align)

    p = sub.add_parser("split-corpus", parents=[common], help="stage-1 train/eval split")
    p.add_argument("--docs-dir", required=True, help="directory of .txt documents")
    p.add_argument("--category", required=True)
    p.add_argument("--eval-doc", default="auto", help="document id, or 'auto'")
    p.add_argument("--out-dir", help="write manifest + step config here")
    p.set_defaults(func=cmd_split_corpus)

    p = sub.add_parser("eval-ppl", parents=[common], help="perplexity of a document")
    p.add_argument("--scores", help="JSON array of {token_text, logprob}")
    p.add_argument("--doc", help="text file to score via the backend")
    p.add_argument("--document-id")
    p.add_argument(
        "--mock-constant",
        type=float,
        help="score with a mock backend at this constant logprob",
    )
    p.set_defaults(func=cmd_eval_ppl)

    p = sub.add_parser("eval-loss", parents=[common], help="Q&A loss over an alpaca JSONL")
    p.add_argument("--records", required=True)
    p.add_argument("--document-id")
    p.add_argument("--mock-constant", type=float, help="see eval-ppl")
    p.set_defaults(func=cmd_eval_loss)

    p = sub.add_parser("ablation", parents=[common], help="multi-stage metric report")
    p.add_argument("--stages", required=True, help="JSON array of stages")
    p.add_argument("--text", action="store_true", help="aligned table instead of JSON")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("serve", parents=[common], help="run the chat service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.add_argument("--mock-backend", action="store_true", help="echoing mock instead of HTTP")
    p.add_argument("--check-backend", action="store_true", help="exit 3 if backend is down")
    p.set_defaults(func=cmd_serve)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (InputError, ShapchatError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
