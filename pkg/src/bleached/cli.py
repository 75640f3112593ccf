"""Command line entry point: ``bleached <command> ...``.

Exit codes: 0 on success, 1 for bad input data (with file and line where
known), 2 for usage errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import multiprocessing
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import torch

from . import checkpoint, fixtures
from .checkpoint import CheckpointError
from .corpus import CorpusError, Document, dumps_document, read_documents
from .engine import extract_document
from .evaluation import few_shot_sweep, format_table, leave_one_out, score, write_csv
from .ontology import Ontology, OntologyError, load_ontology, trigger_index_set
from .recast import RecastLog, recast_stream
from .selector import EventModel, ModelConfig
from .training import (
    FINETUNE,
    PRETRAIN,
    TrainConfig,
    TrainingError,
    fit,
    pretrain,
    read_examples,
    write_examples,
)

log = logging.getLogger("bleached.cli")

PRECISIONS = {"f64": torch.float64, "f32": torch.float32}


class DataError(Exception):
    """Bad input: reported on stderr with exit status 1."""


# --- logging ------------------------------------------------------------------------


class JsonLines(logging.Formatter):
    def __init__(self):
        super().__init__()
        self.t0 = time.monotonic()

    def format(self, record: logging.LogRecord) -> str:
        out = {
            "t": round(time.monotonic() - self.t0, 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        # a lone dict argument is structured payload, e.g. a refinement step
        if isinstance(record.args, dict):
            out["data"] = record.args
        if record.exc_info:
            out["exc"] = self.formatException(record.exc_info)
        return json.dumps(out, default=str)


def setup_logging(verbose: bool) -> None:
    root = logging.getLogger("bleached")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    if verbose:
        handler.setFormatter(JsonLines())
        root.setLevel(logging.DEBUG)
    else:
        handler.setFormatter(logging.Formatter("bleached: %(message)s"))
        root.setLevel(logging.WARNING)
    root.addHandler(handler)
    root.propagate = False


# --- shared helpers -----------------------------------------------------------------


def sha256_file(path) -> str:
    return checkpoint.file_digest(path)


def sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def read_ontology(path) -> Ontology:
    try:
        return load_ontology(path)
    except OntologyError as exc:
        raise DataError(f"{path}: {exc}") from None


def read_corpus(path) -> list[Document]:
    docs = read_documents(path)
    for k, doc in enumerate(docs, start=1):
        try:
            doc.validate()
        except CorpusError as exc:
            raise DataError(f"{path}: document {k} ({doc.doc_id}): {exc}") from None
    return docs


def load_configs(args, default: TrainConfig) -> tuple[TrainConfig, ModelConfig]:
    """Training and model settings from ``--config``, with ``--seed`` on top."""
    data: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.config}:{exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise DataError(f"{args.config}: expected a JSON object")
    try:
        config = TrainConfig.from_dict({**default.to_dict(), **data})
        model_config = ModelConfig.from_dict(data.get("model", {}))
    except (TypeError, ValueError) as exc:
        raise DataError(f"{args.config}: {exc}") from None
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "max_docs", None) is not None:
        config = replace(config, max_docs=args.max_docs)
    return config, model_config


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def output_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def executor(jobs: int, **kwargs) -> ProcessPoolExecutor:
    # spawn rather than fork: forking after torch has started its thread pool can hang
    return ProcessPoolExecutor(max_workers=jobs, mp_context=multiprocessing.get_context("spawn"), **kwargs)


@dataclass
class FitFn:
    """Picklable training closure so protocol runs can go to worker processes."""

    config: TrainConfig
    model_config: ModelConfig
    precision: str = "f64"
    init: str | None = None

    def __call__(self, ontology: Ontology, docs) -> EventModel:
        dtype = PRECISIONS[self.precision]
        model = checkpoint.load(self.init).to(dtype) if self.init else None
        return fit(ontology, docs, self.config, self.model_config, model=model, dtype=dtype)[0]


# --- commands -----------------------------------------------------------------------


def cmd_validate(args) -> int:
    onto = read_ontology(args.ontology)
    lines = []
    for stmt in onto:
        trig = trigger_index_set(stmt)
        words = " ".join(stmt.tokens[i - 1] for i in trig)
        lines.append(f"{stmt.event_type}\troles={','.join(stmt.roles)}\ttrigger={words}")
    lines.append(f"{len(onto)} event types OK")
    emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_recast(args) -> int:
    summary = RecastLog()
    with open(args.input, encoding="utf-8") as fh:
        kept = list(recast_stream(fh, summary))
    write_examples(args.out, (ex.to_training() for ex in kept))
    report = summary.to_json()
    if args.log:
        write_json(args.log, report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_pretrain(args) -> int:
    config, model_config = load_configs(args, PRETRAIN)
    examples = read_examples(args.examples)
    if not examples:
        raise DataError(f"{args.examples}: no examples")
    model, result = pretrain(examples, config, model_config, dtype=PRECISIONS[args.precision])
    meta = {
        "command": "pretrain",
        "train_config": config.to_dict(),
        "examples_sha256": sha256_file(args.examples),
        "steps": result.steps,
        "final_loss": result.losses[-1] if result.losses else None,
    }
    checkpoint.save(model, args.out, meta)
    log.info("wrote %s after %d steps", args.out, result.steps)
    return 0


def cmd_train(args) -> int:
    config, model_config = load_configs(args, FINETUNE)
    onto = read_ontology(args.ontology)
    docs = read_corpus(args.corpus)
    dtype = PRECISIONS[args.precision]
    model = checkpoint.load(args.init).to(dtype) if args.init else None
    try:
        model, result, examples = fit(onto, docs, config, model_config, model=model, dtype=dtype)
    except CorpusError as exc:
        raise DataError(f"{args.corpus}: {exc}") from None
    meta = {
        "command": "train",
        "train_config": config.to_dict(),
        "ontology_sha256": sha256_file(args.ontology),
        "corpus_sha256": sha256_file(args.corpus),
        "init_sha256": sha256_file(args.init) if args.init else None,
        "examples": len(examples),
        "steps": result.steps,
        "final_loss": result.losses[-1] if result.losses else None,
    }
    checkpoint.save(model, args.out, meta)
    log.info("wrote %s after %d steps", args.out, result.steps)
    return 0


_worker: dict = {}


def _init_worker(model_path: str, ontology_path: str, per_sentence: bool) -> None:
    torch.set_num_threads(1)
    _worker.update(model=checkpoint.load(model_path), ontology=load_ontology(ontology_path),
                   per_sentence=per_sentence)


def _extract_shard(docs: list[Document]) -> list[str]:
    w = _worker
    with torch.no_grad():
        return [dumps_document(extract_document(w["model"], w["ontology"], d, w["per_sentence"])) for d in docs]


def shards(items: list, n: int) -> list[list]:
    """Split into at most ``n`` contiguous, order-preserving chunks."""
    size = max(1, -(-len(items) // n))
    return [items[k : k + size] for k in range(0, len(items), size)]


def cmd_extract(args) -> int:
    onto = read_ontology(args.ontology)
    docs = read_corpus(args.corpus)
    per_sentence = not args.whole_document
    model = checkpoint.load(args.model)
    if not len(onto):
        # nothing to look for, so nothing to report
        lines = []
    elif args.jobs > 1 and len(docs) > 1:
        init = (str(args.model), str(args.ontology), per_sentence)
        with executor(args.jobs, initializer=_init_worker, initargs=init) as pool:
            lines = [line for chunk in pool.map(_extract_shard, shards(docs, args.jobs)) for line in chunk]
    else:
        with torch.no_grad():
            lines = [dumps_document(extract_document(model, onto, d, per_sentence)) for d in docs]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.writelines(line + "\n" for line in lines)
    sidecar = {
        "checkpoint_sha256": sha256_file(args.model),
        "config_sha256": sha256_json(getattr(model, "meta", {}).get("train_config", {})),
        "ontology_sha256": sha256_file(args.ontology),
        "corpus_sha256": sha256_file(args.corpus),
        "per_sentence": per_sentence,
        "documents": len(docs),
    }
    write_json(f"{args.out}.meta.json", sidecar)
    return 0


def report_files(out: Path, stem: str, rows, payload: dict, key: str = "name") -> str:
    """Write ``stem``.json/.txt/.csv under ``out`` and return the text table."""
    table = format_table(rows)
    write_json(out / f"{stem}.json", {**payload, "rows": {str(k): r.to_json() for k, r in rows.items()}})
    (out / f"{stem}.txt").write_text(table + "\n", encoding="utf-8")
    write_csv(out / f"{stem}.csv", rows, key=key)
    return table


def cmd_eval(args) -> int:
    pred = read_corpus(args.pred)
    gold = read_corpus(args.gold)
    types = read_ontology(args.ontology).event_types if args.ontology else None
    try:
        report = score(pred, gold, types)
    except CorpusError as exc:
        raise DataError(f"{args.pred}: {exc}") from None
    out = output_dir(args)
    payload = {"pred_sha256": sha256_file(args.pred), "gold_sha256": sha256_file(args.gold)}
    print(report_files(out, "report", {"all": report}, payload))
    return 0


def cmd_zeroshot(args) -> int:
    from .plotting import plot_per_type

    config, model_config = load_configs(args, FINETUNE)
    onto = read_ontology(args.ontology)
    corpus = read_corpus(args.corpus)
    eval_corpus = read_corpus(args.eval_corpus) if args.eval_corpus else None
    if len(onto) < 2:
        raise DataError(f"{args.ontology}: leave-one-out needs at least two event types")
    train_fn = FitFn(config, model_config, args.precision, str(args.init) if args.init else None)
    try:
        if args.jobs > 1:
            with executor(args.jobs) as pool:
                result = leave_one_out(corpus, onto, train_fn, eval_corpus, map_fn=pool.map)
        else:
            result = leave_one_out(corpus, onto, train_fn, eval_corpus)
    except CorpusError as exc:
        raise DataError(f"{args.corpus}: {exc}") from None
    out = output_dir(args)
    payload = {
        "train_config": config.to_dict(),
        "model_config": model_config.to_dict(),
        "ontology_sha256": sha256_file(args.ontology),
        "corpus_sha256": sha256_file(args.corpus),
        "init_sha256": sha256_file(args.init) if args.init else None,
    }
    print(report_files(out, "zeroshot", result.rows(), payload, key="held_out"))
    plot_per_type(result.reports, out / "zeroshot.png", "held-out event types")
    return 0


def cmd_fewshot(args) -> int:
    from .plotting import plot_learning_curve

    config, model_config = load_configs(args, FINETUNE)
    onto = read_ontology(args.ontology)
    train_docs = read_corpus(args.train)
    test_docs = read_corpus(args.test)
    train_fn = FitFn(config, model_config, args.precision, str(args.init) if args.init else None)
    try:
        curve = few_shot_sweep(train_docs, test_docs, onto, train_fn, args.sizes)
    except CorpusError as exc:
        raise DataError(f"{args.train}: {exc}") from None
    out = output_dir(args)
    payload = {"train_config": config.to_dict(), "model_config": model_config.to_dict(),
               "ontology_sha256": sha256_file(args.ontology)}
    print(report_files(out, "fewshot", {str(k): r for k, r in curve.items()}, payload, key="documents"))
    plot_learning_curve(curve, out / "fewshot.png")
    return 0


def cmd_fixture(args) -> int:
    fixtures.write_bundled(output_dir(args))
    return 0


def emit(args, text: str) -> None:
    if getattr(args, "out", None):
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --- argument parsing ---------------------------------------------------------------


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def int_list(text: str) -> list[int]:
    try:
        values = [positive_int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the seed in the training config")
    common.add_argument("--config", type=Path, help="training config JSON; a 'model' key sets model sizes")
    common.add_argument("--jobs", type=positive_int, default=1, help="worker processes")
    common.add_argument("--precision", choices=sorted(PRECISIONS), default="f64")
    common.add_argument("-v", "--verbose", action="store_true", help="JSON-lines debug logs on stderr")

    parser = argparse.ArgumentParser(prog="bleached", description="Event extraction from bleached statements.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text, out_required=True, out_help="output path"):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.add_argument("--out", type=Path, required=out_required, help=out_help)
        p.set_defaults(func=func)
        return p

    p = add("validate", cmd_validate, "check an ontology file and summarise its statements",
            out_required=False, out_help="write the summary here instead of stdout")
    p.add_argument("ontology", type=Path)

    p = add("recast", cmd_recast, "turn parsed QA records into argument training examples")
    p.add_argument("input", type=Path, help="QA records, one JSON object per line")
    p.add_argument("--log", type=Path, help="also write the summary JSON here")

    p = add("pretrain", cmd_pretrain, "train a fresh model on recast QA examples")
    p.add_argument("examples", type=Path)

    p = add("train", cmd_train, "fit on an annotated corpus, optionally from a pretrained checkpoint")
    p.add_argument("--ontology", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--init", type=Path, help="checkpoint to start from")
    p.add_argument("--max-docs", type=positive_int, help="use only the first N documents")

    p = add("extract", cmd_extract, "extract events with a trained checkpoint")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--ontology", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--whole-document", action="store_true", help="treat each document as one text")

    p = add("eval", cmd_eval, "score predictions against gold annotations", out_help="report directory")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gold", type=Path, required=True)
    p.add_argument("--ontology", type=Path, help="restrict scoring to these event types")

    p = add("zeroshot", cmd_zeroshot, "leave-one-event-type-out evaluation", out_help="report directory")
    p.add_argument("--ontology", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--eval-corpus", type=Path, help="score on this corpus instead of the training corpus")
    p.add_argument("--init", type=Path)

    p = add("fewshot", cmd_fewshot, "learning curve over training-set size", out_help="report directory")
    p.add_argument("--ontology", type=Path, required=True)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--sizes", type=int_list, required=True, help="comma-separated document counts")
    p.add_argument("--init", type=Path)

    add("fixture", cmd_fixture, "write the bundled synthetic ontology, corpus and QA records",
        out_help="directory")
    return parser


DATA_ERRORS = (DataError, OntologyError, CorpusError, CheckpointError, TrainingError, OSError,
               UnicodeDecodeError)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"bleached {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
