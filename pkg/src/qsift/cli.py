"""Command-line surface: tokenize, train, eval, pretrain-mlm, distill, compare.

Flag resolution order: built-in default < config file (--config or the
QSIFT_CONFIG env var, flat key=value lines) < explicit flag. Every run
prints a header line with the seed; all emitted records are JSON lines
with sorted keys, so identical flags and seed reproduce byte-identical
output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import kernels
from .checkpoint import read_config_kv
from .data import class_stats, load_dataset, stratified_sample, stratified_split
from .metrics import MetricsReport
from .models import (
    Model,
    ModelConfig,
    build_model,
    derive_student_config,
    load_model,
    param_count,
    save_model,
)
from .objectives import load_corpus
from .tokenizer import Vocab, encode, load_vocab, wordpiece_tokenize
from .training import TrainConfig, distill, evaluate, pretrain_mlm, train

CONFIG_ENV = "QSIFT_CONFIG"


def _model_flags(sub):
    sub.add_argument("--layers", type=int, help="encoder layer count (default 2)")
    sub.add_argument("--hidden", type=int, help="hidden size (default 64)")
    sub.add_argument("--heads", type=int, help="attention heads (default 2)")
    sub.add_argument("--ff-size", type=int, help="feed-forward width (default 4*hidden)")
    sub.add_argument("--max-len", type=int, help="sequence length (default 192)")
    sub.add_argument("--embedding-size", type=int, help="factorized embedding width (default: hidden)")
    sub.add_argument("--sharing", choices=["none", "ffn_only", "attention_only", "all"],
                     help="cross-layer parameter sharing (default none)")
    sub.add_argument("--positional", choices=["learned", "sinusoidal"],
                     help="positional embedding mode (default learned)")
    sub.add_argument("--no-token-type", action="store_true", default=None,
                     help="drop token-type embeddings")
    sub.add_argument("--no-pooler", action="store_true", default=None,
                     help="drop the pooler head")
    sub.add_argument("--dropout", type=float, help="dropout rate (default 0.1)")


def _train_flags(sub):
    sub.add_argument("--epochs", type=int, help="training epochs (default 3)")
    sub.add_argument("--batch-size", type=int, help="mini-batch size (default 16)")
    sub.add_argument("--lr", type=float, help="Adam learning rate (default 1e-5)")
    sub.add_argument("--clip-norm", type=float, help="global gradient-norm clip (default off)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsift", description=__doc__)
    parser.add_argument("--config", help="key=value config file (or set QSIFT_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="encode text lines to id sequences")
    p.add_argument("--vocab", required=True)
    p.add_argument("--max-len", type=int, help="sequence length (default 192)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="single line of text")
    group.add_argument("--input-file", help="file with one text per line")
    p.add_argument("--seed", type=int, help="run seed (default 0)")

    p = sub.add_parser("train", help="fine-tune the insincerity classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--val-fraction", type=float, help="validation share (default 0.2)")
    p.add_argument("--limit", type=int, help="stratified subsample size")
    p.add_argument("--threshold", type=float, help="decision threshold (default 0.5)")
    p.add_argument("--save", help="checkpoint output path")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    _train_flags(p)
    _model_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on labeled data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--threshold", type=float, help="decision threshold (default 0.5)")
    p.add_argument("--limit", type=int, help="stratified subsample size")
    p.add_argument("--seed", type=int, help="run seed (default 0)")

    p = sub.add_parser("pretrain-mlm", help="masked-token pretraining")
    p.add_argument("--corpus", required=True, help="one segment per line, blank line between documents")
    p.add_argument("--vocab", required=True)
    p.add_argument("--masking", choices=["dynamic", "static"], help="mask regime (default dynamic)")
    p.add_argument("--num-masks", type=int, help="static mask copies (default 4)")
    p.add_argument("--mask-rate", type=float, help="selection rate (default 0.15)")
    p.add_argument("--pair-objective", choices=["none", "nsp", "sop"],
                   help="joint sentence-pair task (default none)")
    p.add_argument("--save", help="checkpoint output path")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    _train_flags(p)
    _model_flags(p)

    p = sub.add_parser("distill", help="train a halved student against a teacher checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--teacher", required=True, help="teacher checkpoint path")
    p.add_argument("--save", help="student checkpoint output path")
    p.add_argument("--temperature", type=float, help="softening temperature (default 2.0)")
    p.add_argument("--w-mlm", type=float, help="hard-target loss weight (default 1)")
    p.add_argument("--w-cos", type=float, help="state-alignment loss weight (default 1)")
    p.add_argument("--w-kd", type=float, help="soft-target loss weight (default 1)")
    p.add_argument("--mask-rate", type=float, help="selection rate (default 0.15)")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    _train_flags(p)

    p = sub.add_parser("compare", help="evaluate several checkpoints side by side")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", action="append", required=True, metavar="NAME=CHECKPOINT",
                   help="repeatable; row label and checkpoint path")
    p.add_argument("--threshold", type=float, help="decision threshold (default 0.5)")
    p.add_argument("--limit", type=int, help="stratified subsample size")
    p.add_argument("--seed", type=int, help="run seed (default 0)")

    return parser


_DEFAULTS = {
    "max_len": 192, "seed": 0, "epochs": 3, "batch_size": 16, "lr": 1e-5,
    "clip_norm": None, "layers": 2, "hidden": 64, "heads": 2, "ff_size": None,
    "embedding_size": None, "sharing": "none", "positional": "learned",
    "no_token_type": False, "no_pooler": False, "dropout": 0.1,
    "val_fraction": 0.2, "threshold": 0.5, "limit": None,
    "masking": "dynamic", "num_masks": 4, "mask_rate": 0.15, "pair_objective": "none",
    "temperature": 2.0, "w_mlm": 1.0, "w_cos": 1.0, "w_kd": 1.0,
}


class Options:
    """Default < config file < explicit flag."""

    def __init__(self, args: argparse.Namespace, file_values: dict):
        self._args = vars(args)
        self._file = file_values

    def __getattr__(self, key: str):
        flag = self._args.get(key)
        if flag is not None:
            return flag
        if key in self._file:
            return self._file[key]
        if key in _DEFAULTS:
            return _DEFAULTS[key]
        raise AttributeError(key)


def _load_file_values(args) -> dict:
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    return read_config_kv(path)


def _header(command: str, opt: Options) -> None:
    print(f"# qsift {command} seed={opt.seed} backend={kernels.backend()}")


def _model_config(opt: Options, vocab: Vocab) -> ModelConfig:
    hidden = opt.hidden
    return ModelConfig(
        num_layers=opt.layers,
        hidden_size=hidden,
        num_heads=opt.heads,
        ff_size=opt.ff_size if opt.ff_size is not None else 4 * hidden,
        vocab_size=len(vocab),
        max_len=opt.max_len,
        embedding_size=opt.embedding_size,
        sharing_mode=opt.sharing,
        use_token_type_embeddings=not opt.no_token_type,
        use_pooler=not opt.no_pooler,
        positional_mode=opt.positional,
        dropout_rate=opt.dropout,
    )


def _train_config(opt: Options, loss: str = "bce") -> TrainConfig:
    return TrainConfig(
        learning_rate=opt.lr, batch_size=opt.batch_size, epochs=opt.epochs,
        seed=opt.seed, loss=loss, clip_norm=opt.clip_norm,
    )


def _load_labeled(opt: Options, vocab: Vocab, max_len: int):
    loaded = load_dataset(opt._args["data"])
    for r in loaded.rejected:
        print(f"# rejected line {r.line_number}: {r.reason}", file=sys.stderr)
    examples = loaded.examples
    if opt.limit is not None:
        examples = stratified_sample(examples, opt.limit, opt.seed)
    return [(encode(e.question_text, vocab, max_len), e.target) for e in examples]


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True))


def _cmd_tokenize(opt: Options) -> int:
    vocab = load_vocab(opt._args["vocab"])
    _header("tokenize", opt)
    if opt._args.get("text") is not None:
        lines = [opt._args["text"]]
    else:
        with open(opt._args["input_file"], encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh]
    for line in lines:
        seq = encode(line, vocab, opt.max_len)
        print(" ".join(str(i) for i in seq.ids))
    return 0


def _cmd_train(opt: Options) -> int:
    vocab = load_vocab(opt._args["vocab"])
    _header("train", opt)
    loaded = load_dataset(opt._args["data"])
    for r in loaded.rejected:
        print(f"# rejected line {r.line_number}: {r.reason}", file=sys.stderr)
    examples = loaded.examples
    if opt.limit is not None:
        examples = stratified_sample(examples, opt.limit, opt.seed)
    stats = class_stats(examples)
    _emit({"record": "dataset", "total": stats.total, "positives": stats.positives,
           "positive_rate": stats.positive_rate})
    train_ex, val_ex = stratified_split(examples, opt.val_fraction, opt.seed)
    cfg = _model_config(opt, vocab)
    model = build_model(cfg, seed=opt.seed)
    _emit({"record": "model", "params": param_count(model)})
    encoded_train = [(encode(e.question_text, vocab, cfg.max_len), e.target) for e in train_ex]
    encoded_val = [(encode(e.question_text, vocab, cfg.max_len), e.target) for e in val_ex]
    history = train(model, encoded_train, _train_config(opt), encoded_val or None)
    for rec in history:
        _emit({"record": "epoch", **rec})
    if encoded_val:
        report = evaluate(model, encoded_val, opt.threshold)
        _emit({"record": "metrics", "split": "validation", **json.loads(report.to_json_line())})
    if opt._args.get("save"):
        save_model(opt._args["save"], model)
        print(f"# saved checkpoint to {opt._args['save']}")
    return 0


def _cmd_eval(opt: Options) -> int:
    vocab = load_vocab(opt._args["vocab"])
    _header("eval", opt)
    model = load_model(opt._args["checkpoint"])
    dataset = _load_labeled(opt, vocab, model.config.max_len)
    report = evaluate(model, dataset, opt.threshold)
    _emit({"record": "metrics", "split": "eval", **json.loads(report.to_json_line())})
    return 0


def _encode_corpus(opt: Options, vocab: Vocab, max_len: int):
    docs = load_corpus(opt._args["corpus"])
    token_docs = [
        [[vocab.id(t) for t in wordpiece_tokenize(seg, vocab)] for seg in doc]
        for doc in docs
    ]
    sequences = [encode(seg, vocab, max_len) for doc in docs for seg in doc]
    return sequences, token_docs


def _cmd_pretrain_mlm(opt: Options) -> int:
    vocab = load_vocab(opt._args["vocab"])
    _header("pretrain-mlm", opt)
    cfg = _model_config(opt, vocab)
    model = build_model(cfg, seed=opt.seed)
    sequences, token_docs = _encode_corpus(opt, vocab, cfg.max_len)
    pair = None if opt.pair_objective == "none" else opt.pair_objective
    history = pretrain_mlm(
        model, sequences, vocab, _train_config(opt, loss="mlm"),
        masking=opt.masking, num_masks=opt.num_masks, rate=opt.mask_rate,
        pair_objective=pair, corpus=token_docs if pair else None,
    )
    for rec in history:
        _emit({"record": "epoch", **rec})
    if opt._args.get("save"):
        save_model(opt._args["save"], model)
        print(f"# saved checkpoint to {opt._args['save']}")
    return 0


def _cmd_distill(opt: Options) -> int:
    vocab = load_vocab(opt._args["vocab"])
    _header("distill", opt)
    teacher = load_model(opt._args["teacher"])
    student_cfg = derive_student_config(teacher.config)
    student = build_model(student_cfg, seed=opt.seed)
    _emit({"record": "model", "teacher_params": param_count(teacher),
           "student_params": param_count(student)})
    sequences, _ = _encode_corpus(opt, vocab, teacher.config.max_len)
    history = distill(
        teacher, student, sequences, vocab, _train_config(opt, loss="distill"),
        rate=opt.mask_rate, temperature=opt.temperature,
        weights=(opt.w_mlm, opt.w_cos, opt.w_kd),
    )
    for rec in history:
        _emit({"record": "epoch", **rec})
    if opt._args.get("save"):
        save_model(opt._args["save"], student)
        print(f"# saved checkpoint to {opt._args['save']}")
    return 0


def _cmd_compare(opt: Options) -> int:
    vocab = load_vocab(opt._args["vocab"])
    _header("compare", opt)
    rows = []
    for entry in opt._args["model"]:
        if "=" not in entry:
            raise ValueError(f"--model needs NAME=CHECKPOINT, got {entry!r}")
        name, _, path = entry.partition("=")
        model = load_model(path)
        dataset = _load_labeled(opt, vocab, model.config.max_len)
        report = evaluate(model, dataset, opt.threshold)
        rows.append((name, report))
    _print_compare_table(rows)
    for name, report in rows:
        _emit({"record": "metrics", "model": name, **json.loads(report.to_json_line())})
    return 0


def _print_compare_table(rows: list[tuple[str, MetricsReport]]) -> None:
    headers = ["Model", "Accuracy", "Precision", "Recall", "F1 Score", "AUC"]
    table = [headers]
    for name, r in rows:
        table.append([name] + [f"{v:.4f}" for v in (r.accuracy, r.precision, r.recall, r.f1, r.auc)])
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    for row in table:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())


_COMMANDS = {
    "tokenize": _cmd_tokenize,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "pretrain-mlm": _cmd_pretrain_mlm,
    "distill": _cmd_distill,
    "compare": _cmd_compare,
}


def run_cli(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        file_values = _load_file_values(args)
        opt = Options(args, file_values)
        return _COMMANDS[args.command](opt)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
