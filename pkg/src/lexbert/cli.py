"""Command-line entry point: ``lexbert <subcommand> [flags]``.

Exit codes: 0 success, 1 data error, 2 usage error. A ``--config`` file of
``key=value`` lines supplies flag defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, LexbertError

log = logging.getLogger("lexbert")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2
PRECISIONS = {"32": "float32", "64": "float64", "float32": "float32", "float64": "float64"}

REQUIRED = {
    "pretrain": ("corpus", "vocab", "out"),
    "finetune": ("checkpoint", "vocab", "task", "train", "dev", "out"),
    "eval-metrics": ("pred", "gold", "kind"),
    "simplify": ("checkpoint", "vocab", "dataset", "out"),
    "inspect-batch": ("constraints", "aux_embeddings"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file of flag defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (receives manifest.json)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="lexbert", description="Lexically informed BERT pretraining and simplification")
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)
    table = {}

    p = subs.add_parser("pretrain", help="MLM+NSP pretraining, alternating with the lexical relation objective")
    _common(p)
    p.add_argument("--corpus")
    p.add_argument("--vocab")
    p.add_argument("--constraints")
    p.add_argument("--aux-embeddings")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--baseline", action="store_true", help="disable the lexical relation objective")
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--batch-k", type=int, default=16)
    p.add_argument("--max-seq-len", type=int, default=128)
    p.add_argument("--lrc-max-len", type=int, default=0)
    p.add_argument("--lrc-ratio", type=int, default=1)
    p.add_argument("--shared-moments", action="store_true")
    p.add_argument("--layers", type=int, default=12)
    p.add_argument("--hidden", type=int, default=768)
    p.add_argument("--heads", type=int, default=12)
    p.add_argument("--intermediate", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--lrc-input", choices=("pooled", "cls"), default="pooled")
    p.add_argument("--log-every", type=int, default=10)
    p.add_argument("--checkpoint-precision", choices=sorted(PRECISIONS), default="32")
    p.add_argument("--resume", help="continue from a checkpoint written by pretrain")
    table["pretrain"] = p

    p = subs.add_parser("finetune", help="train a task head on a pretrained checkpoint")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--task", choices=("cls1", "cls2", "reg"))
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--num-labels", type=int, default=2)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-seq-len", type=int, default=128)
    p.add_argument("--freeze", action="store_true", help="keep encoder weights fixed")
    table["finetune"] = p

    p = subs.add_parser("eval-metrics", help="score predictions against golds")
    _common(p)
    p.add_argument("--pred")
    p.add_argument("--gold")
    p.add_argument("--kind", choices=("cls1", "cls2", "reg"))
    table["eval-metrics"] = p

    p = subs.add_parser("simplify", help="generate and rank substitutes for marked complex words")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--dataset")
    p.add_argument("--aux-embeddings")
    p.add_argument("--freq")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--report", choices=("generation", "pipeline", "both"), default="both")
    p.add_argument("--lm-loss", choices=("sequence", "single"), default="sequence")
    p.add_argument("--max-seq-len", type=int, default=128)
    table["simplify"] = p

    p = subs.add_parser("inspect-batch", help="print one mined relation batch")
    _common(p)
    p.add_argument("--constraints")
    p.add_argument("--aux-embeddings")
    p.add_argument("--vocab", help="when given, encoded token and segment rows are printed")
    p.add_argument("--batch-k", type=int, default=16)
    p.add_argument("--max-len", type=int, default=128)
    table["inspect-batch"] = p
    return parser, table


def read_config(path, sub: argparse.ArgumentParser) -> dict:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            dest = key.lstrip("-").replace("-", "_")
            if dest not in actions:
                raise UsageError(f"{path}: line {lineno}: unknown option {key!r}")
            action = actions[dest]
            if isinstance(action, argparse._StoreTrueAction):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise UsageError(f"{path}: line {lineno}: {key} expects a boolean")
                values[dest] = value.lower() in ("true", "1", "yes")
                continue
            try:
                converted = action.type(value) if action.type else value
            except ValueError:
                raise UsageError(f"{path}: line {lineno}: bad value {value!r} for {key}") from None
            if action.choices and converted not in action.choices:
                raise UsageError(f"{path}: line {lineno}: {key} must be one of {sorted(action.choices)}")
            values[dest] = converted
    return values


def parse(argv: list[str]) -> argparse.Namespace:
    parser, table = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().rstrip())
    if args.config:
        sub = table[args.command]
        sub.set_defaults(**read_config(args.config, sub))
        args = parser.parse_args(argv)
    missing = [d for d in REQUIRED[args.command] if getattr(args, d) is None]
    if missing:
        flags = ", ".join("--" + d.replace("_", "-") for d in missing)
        raise UsageError(f"lexbert {args.command}: error: missing required option(s) {flags}")
    return args


# helpers ---------------------------------------------------------------


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(args: argparse.Namespace, start: str, outputs: dict[str, Path], inputs: dict[str, str]) -> None:
    from . import __version__

    if not args.out:
        return
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("command",)}
    manifest = {
        "command": args.command,
        "flags": flags,
        "seed": args.seed,
        "start": start,
        "end": _now(),
        "checkpoint_hashes": {
            **{f"input:{k}": sha256(v) for k, v in sorted(inputs.items()) if v},
            **{f"output:{k}": sha256(v) for k, v in sorted(outputs.items())},
        },
        "versions": {"lexbert": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# subcommands -----------------------------------------------------------


def cmd_pretrain(args) -> tuple[dict, dict]:
    from .constraints import load_constraints, load_embeddings
    from .model import ModelConfig
    from .pretraining_data import load_corpus
    from .tokenizer import load_vocab
    from .trainer import TrainConfig, Trainer

    vocab = load_vocab(args.vocab)
    docs = load_corpus(args.corpus, vocab)
    constraints = space = None
    if not args.baseline:
        if not args.constraints or not args.aux_embeddings:
            raise ConfigError("pretrain without --baseline needs --constraints and --aux-embeddings")
        constraints = load_constraints(args.constraints)
        space = load_embeddings(args.aux_embeddings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.resume:
        trainer = Trainer.resume(args.resume, docs, vocab, constraints, space)
        steps = args.steps - trainer.step
        log_mode = "a"
    else:
        mc = ModelConfig(
            vocab_size=len(vocab), hidden=args.hidden, layers=args.layers, heads=args.heads,
            intermediate=args.intermediate, max_positions=max(args.max_seq_len, args.lrc_max_len),
            dropout=args.dropout, lrc_input=args.lrc_input,
        )
        tc = TrainConfig(
            base_lr=args.lr, warmup_steps=args.warmup, batch_k=args.batch_k, max_seq_len=args.max_seq_len,
            lrc_max_len=args.lrc_max_len, total_steps=args.steps, seed=args.seed,
            lrc_enabled=not args.baseline, lrc_ratio=args.lrc_ratio, log_every=args.log_every,
            shared_moments=args.shared_moments,
        )
        trainer = Trainer.build(mc, tc, docs, vocab, constraints, space)
        steps = args.steps
        log_mode = "w"
    with open(out / "train_log.jsonl", log_mode, encoding="utf-8") as fh:
        trainer.train(max(steps, 0), log_file=fh)
    ckpt = out / "checkpoint.lxb"
    trainer.save(ckpt, PRECISIONS[args.checkpoint_precision])
    print(f"trained {trainer.step} steps; checkpoint {ckpt}")
    inputs = {"corpus": args.corpus, "vocab": args.vocab, "constraints": args.constraints,
              "aux_embeddings": args.aux_embeddings, "resume": args.resume}
    return {"checkpoint": ckpt, "train_log": out / "train_log.jsonl"}, inputs


def cmd_finetune(args) -> tuple[dict, dict]:
    from .checkpoint import load_checkpoint, save_checkpoint
    from .finetune import FineTuneConfig, FineTuneTask, fine_tune, load_examples
    from .tokenizer import load_vocab

    vocab = load_vocab(args.vocab)
    model = load_checkpoint(args.checkpoint).build_model()
    task = FineTuneTask(args.task, args.num_labels)
    train = load_examples(args.train, task, vocab, args.max_seq_len)
    dev = load_examples(args.dev, task, vocab, args.max_seq_len)
    cfg = FineTuneConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                         freeze_encoder=args.freeze, seed=args.seed)
    result = fine_tune(model, task, train, dev, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "encoder.lxb", model)
    np.savez(out / "head.npz", **result.head)
    summary = {"best_epoch": result.best_epoch, "dev_metrics": result.dev_metrics, "history": result.history}
    (out / "result.json").write_text(_dumps(summary) + "\n", encoding="utf-8")
    print(_dumps(summary))
    inputs = {"checkpoint": args.checkpoint, "vocab": args.vocab, "train": args.train, "dev": args.dev}
    return {"encoder": out / "encoder.lxb", "head": out / "head.npz"}, inputs


def _read_column(path) -> list[float]:
    from .errors import FormatError

    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                values.append(float(line.strip()))
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: {line.strip()!r} is not a number") from None
    return values


def cmd_eval_metrics(args) -> tuple[dict, dict]:
    from .errors import DataError
    from .metrics import metrics

    pred, gold = _read_column(args.pred), _read_column(args.gold)
    if len(pred) != len(gold):
        raise DataError(f"{len(pred)} predictions for {len(gold)} golds")
    if args.kind != "reg":
        pred, gold = [int(p) for p in pred], [int(g) for g in gold]
    print(_dumps(metrics(pred, gold, args.kind)))
    return {}, {"pred": args.pred, "gold": args.gold}


def cmd_simplify(args) -> tuple[dict, dict]:
    from .checkpoint import load_checkpoint
    from .constraints import load_embeddings
    from .simplifier import Simplifier, load_benchmark, load_frequencies, report
    from .tokenizer import load_vocab

    vocab = load_vocab(args.vocab)
    model = load_checkpoint(args.checkpoint).build_model()
    space = load_embeddings(args.aux_embeddings) if args.aux_embeddings else None
    freq = load_frequencies(args.freq) if args.freq else None
    simplifier = Simplifier(model, vocab, space, freq, max_seq_len=args.max_seq_len, k=args.k,
                            lm_loss_mode=args.lm_loss)
    results = [simplifier.simplify(inst) for inst in load_benchmark(args.dataset)]
    rep = report(results, args.report)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "simplify_report.json"
    path.write_text(_dumps(rep) + "\n", encoding="utf-8")
    print(_dumps({k: v for k, v in rep.items() if k != "per_instance"}))
    inputs = {"checkpoint": args.checkpoint, "vocab": args.vocab, "dataset": args.dataset,
              "aux_embeddings": args.aux_embeddings, "freq": args.freq}
    return {"report": path}, inputs


def format_batch(positives, negatives, vocab=None, max_len: int = 128) -> str:
    from .constraints import encode_constraint

    lines = [f"positives ({len(positives)})"]
    for i, p in enumerate(positives):
        lines.append(f"  P{i} {p.w1} {p.w2} {p.relation_source}")
    lines.append(f"negatives ({len(negatives)})")
    for n in negatives:
        lines.append(f"  from P{n.source} slot {n.slot}: {n.w1} {n.w2} cosine={n.cosine:.6f}")
    lines.append("instances")
    for i, pair in enumerate(list(positives) + list(negatives)):
        label = " ".join(str(int(x)) for x in pair.one_hot)
        lines.append(f"  #{i} {pair.label} [{label}] {pair.w1} {pair.w2}")
        if vocab is not None:
            seq = encode_constraint(pair, vocab, max_len)
            lines.append("    " + " ".join(seq.pieces(vocab)))
            lines.append("    " + " ".join(str(s) for s in seq.segment_ids[:seq.length]))
    return "\n".join(lines)


def cmd_inspect_batch(args) -> tuple[dict, dict]:
    from .constraints import PositiveBatcher, load_constraints, load_embeddings, sample_negatives
    from .tokenizer import load_vocab

    constraints = load_constraints(args.constraints)
    space = load_embeddings(args.aux_embeddings)
    vocab = load_vocab(args.vocab) if args.vocab else None
    positives = PositiveBatcher(constraints, args.batch_k, args.seed).next_batch()
    negatives = sample_negatives(positives, space, np.random.default_rng([args.seed, 2]))
    print(f"batch k={args.batch_k} seed={args.seed}")
    print(format_batch(positives, negatives, vocab, args.max_len))
    return {}, {"constraints": args.constraints, "aux_embeddings": args.aux_embeddings, "vocab": args.vocab}


COMMANDS = {
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval-metrics": cmd_eval_metrics,
    "simplify": cmd_simplify,
    "inspect-batch": cmd_inspect_batch,
}


def dispatch(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse(argv)
    except UsageError as exc:
        if argv:
            print(exc, file=sys.stderr)
        else:
            build_parser()[0].print_help(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = _now()
    try:
        outputs, inputs = COMMANDS[args.command](args)
    except (ConfigError, ContractError) as exc:
        print(f"lexbert {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LexbertError, OSError) as exc:
        print(f"lexbert {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    write_manifest(args, start, outputs, inputs)
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
