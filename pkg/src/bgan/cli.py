"""Command line: learn-bpe, train, generate, translate, evaluate.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError
from .config import ConfigError, TrainConfig
from .manifest import write_manifest
from .metrics import generation_bleu, perplexity, tokenized_lines, train_lm, write_report
from .text import Sentence, TextPipeline, read_lines
from .translation import as_batch

log = logging.getLogger("bgan")


class UsageError(Exception):
    pass


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _write_lines(path: Path, lines) -> None:
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _readable(paths) -> None:
    bad = [str(p) for p in paths if not Path(p).is_file()]
    if bad:
        raise UsageError("cannot read input: " + ", ".join(bad))


# -- commands ----------------------------------------------------------------------------------
def cmd_learn_bpe(args) -> None:
    _readable(args.input)
    if args.merges < 0:
        raise UsageError("--merges must be >= 0")
    pipe = TextPipeline.fit([read_lines(p) for p in args.input], args.merges)
    out = Path(args.out)
    vocab_path = out.with_name(out.name + ".vocab.tsv")
    pipe.bpe.save(out)
    pipe.vocab.save(vocab_path)
    write_manifest(_manifest_path(out), {"merges": args.merges}, args.input,
                   {"bpe": out, "vocab": vocab_path})
    log.info("%d merges, vocab of %d written to %s", len(pipe.bpe.merges), len(pipe.vocab), out)


def cmd_train(args) -> None:
    from .trainer import train

    config = TrainConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out_dir is not None:
        config.out_dir = args.out_dir
    config.validate()
    trainer = train(config, resume=args.resume)
    log.info("finished %d iterations in %s", trainer.iteration, config.out_dir)


def cmd_generate(args) -> None:
    from .trainer import load_model

    if args.count < 1:
        raise UsageError("--count must be >= 1")
    model = load_model(args.ckpt)
    lines = model.generate(args.lang, args.count, np.random.default_rng(args.seed))
    out = Path(args.out)
    _write_lines(out, lines)
    write_manifest(_manifest_path(out), {**model.config.to_dict(), "lang": args.lang,
                                         "count": args.count, "generate_seed": args.seed},
                   [args.ckpt], {"sentences": out})


def cmd_translate(args) -> None:
    from .trainer import load_model

    _readable([args.input])
    model = load_model(args.ckpt)
    pipe, tu = model.pipeline, model.tu
    src = args.from_lang
    with open(args.input, encoding="utf-8") as fh:
        raw = [line.rstrip("\n") for line in fh]
    sents = []
    for i, line in enumerate(raw):
        s = pipe.encode_line(line, src)
        if len(s.interior) > tu.max_len:
            log.warning("line %d: %d subwords, truncated to %d", i + 1, len(s.interior), tu.max_len)
            s = Sentence.frame(s.interior[:tu.max_len], src)
        sents.append(s)
    out_lines = [""] * len(raw)
    todo = [i for i, s in enumerate(sents) if s.interior]
    for start in range(0, len(todo), 64):
        chunk = todo[start:start + 64]
        result = tu.translate(as_batch([sents[i] for i in chunk]), 3 - src)
        for i, s in zip(chunk, result.batch.sentences()):
            out_lines[i] = pipe.decode_ids(s.ids)
    out = Path(args.out)
    _write_lines(out, out_lines)
    write_manifest(_manifest_path(out), {**model.config.to_dict(), "from": src},
                   [args.ckpt, args.input], {"translations": out})


def cmd_evaluate(args) -> None:
    needed = [args.gen, args.real_test] + ([args.real_train] if args.mode == "ppl" else [])
    if any(p is None for p in needed):
        raise UsageError(f"--mode {args.mode} needs --gen, --real-test"
                         + (" and --real-train" if args.mode == "ppl" else ""))
    _readable(needed)
    gen = tokenized_lines(read_lines(args.gen))
    test = tokenized_lines(read_lines(args.real_test))
    if not gen or not test:
        raise UsageError("evaluation corpora must be nonempty")
    base = {"language": args.lang, "n_samples": len(gen), "seed": args.seed}
    rows = []
    if args.mode == "bleu":
        for n in range(2, 6):
            rows.append({"metric": f"bleu{n}", "value": generation_bleu(gen, test, n), **base})
    else:
        train = tokenized_lines(read_lines(args.real_train))
        fwd = train_lm(train, args.epochs, args.seed)
        rows.append({"metric": "f_ppl", "value": perplexity(fwd, gen), **base})
        rev = train_lm(gen, args.epochs, args.seed)
        rows.append({"metric": "r_ppl", "value": perplexity(rev, test), **base})
    out = Path(args.out)
    write_report(rows, out)
    from .plotting import plot_report
    figure = plot_report(rows, out.with_suffix(".png"))
    write_manifest(_manifest_path(out), {"mode": args.mode, "lang": args.lang, "seed": args.seed,
                                         "epochs": args.epochs},
                   needed, {"report": out, "figure": figure})
    for r in rows:
        log.info("%s[%s] = %.4f", r["metric"], r["language"], r["value"])


# -- parser ---------------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bgan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("learn-bpe", help="learn joint BPE merges and vocabulary")
    s.add_argument("--input", nargs="+", required=True, help="one corpus file per language")
    s.add_argument("--merges", type=int, required=True)
    s.add_argument("--out", required=True, help="BPE model path; vocab goes to <out>.vocab.tsv")
    s.set_defaults(func=cmd_learn_bpe)

    s = sub.add_parser("train", help="run the training loop from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--out-dir", help="override the config output directory")
    s.add_argument("--resume", help="continue from a checkpoint of this run")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="sample sentences from the latent GAN")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--lang", type=int, choices=(1, 2), required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("translate", help="translate a file line by line")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--from", dest="from_lang", type=int, choices=(1, 2), required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_translate)

    s = sub.add_parser("evaluate", help="BLEU or forward/reverse perplexity report")
    s.add_argument("--mode", choices=("bleu", "ppl"), required=True)
    s.add_argument("--gen", required=True)
    s.add_argument("--real-train")
    s.add_argument("--real-test")
    s.add_argument("--out", required=True)
    s.add_argument("--lang", default="1", help="label for the report's language column")
    s.add_argument("--seed", type=int, default=0, help="language-model seed")
    s.add_argument("--epochs", type=int, default=10, help="language-model training epochs")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"bgan {args.command}: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, ValueError, OSError) as exc:
        print(f"bgan {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
