"""Six-phase training loop, model bundle and run outputs."""
from __future__ import annotations

import csv
import dataclasses
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import no_grad
from .config import TrainConfig
from .gan import Discriminator, Generator, d_loss, g_loss
from .optim import ParamStore, adam_step, clip_grad_norm
from .text import (BatchStream, NoiseConfig, Sentence, TextPipeline, BpeModel, Vocab,
                   length_filter, load_embeddings, read_lines)
from .translation import LatentCode, TranslationUnit, add_code_noise

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("ae1", "ae2", "bt1", "bt2", "d_loss", "g_loss")
PHASES = ("ae", "ae", "bt", "bt", "dis", "gen")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator per named purpose, all derived from one root seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


class BganModel:
    """Translation unit plus latent GAN, built deterministically from a config and vocabulary."""

    def __init__(self, config: TrainConfig, pipeline: TextPipeline):
        self.config = config
        self.pipeline = pipeline
        dtype = np.dtype(config.dtype)
        emb = found = None
        if config.embeddings_path:
            emb, found = load_embeddings(config.embeddings_path, pipeline.vocab, config.d)
        init = substream(config.seed, "init")
        self.tu = TranslationUnit(len(pipeline.vocab), config.d, config.n_layers, config.heads,
                                  config.d_ff, config.t_max, init, dtype, emb, found)
        self.gen = Generator(config.d, config.d_z, config.t_gen, config.gan_heads, 2, init, dtype)
        self.dis = Discriminator(config.d, config.gan_heads, 2, init, dtype)

    @property
    def stores(self) -> list[ParamStore]:
        return [self.tu.store, self.gen.store, self.dis.store]

    def zero_grad(self) -> None:
        for s in self.stores:
            s.zero_grad()

    def generate_codes(self, count: int, rng: np.random.Generator) -> LatentCode:
        with no_grad():
            return self.gen(self.gen.sample_z(count, rng))

    def decode_codes(self, code: LatentCode, lang: int) -> list[str]:
        out = self.tu.greedy_decode(code, lang)
        return [self.pipeline.decode_ids(s.ids) for s in out.batch.sentences()]

    def generate(self, lang: int, count: int, rng: np.random.Generator) -> list[str]:
        return self.decode_codes(self.generate_codes(count, rng), lang)


@dataclass
class PhaseEvent:
    iteration: int
    phase: str
    lang: int


@dataclass
class Trainer:
    """Holds the model, the per-language batch streams and every rng substream of a run."""

    config: TrainConfig
    model: BganModel
    corpora: dict[int, list[Sentence]]
    iteration: int = 0
    phase_log: list[PhaseEvent] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    dropped: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        cfg = self.config
        self.noise = NoiseConfig(cfg.p_drop, cfg.k_shuffle)
        self.rngs = {name: substream(cfg.seed, name) for name in ("noise", "z", "code_noise")}
        self.streams = {lang: BatchStream(self.corpora[lang], cfg.batch_size,
                                          substream(cfg.seed, f"batch{lang}"))
                        for lang in (1, 2)}

    # -- construction ----------------------------------------------------------------
    @classmethod
    def from_lines(cls, config: TrainConfig, lines1: Sequence[str], lines2: Sequence[str],
                   pipeline: TextPipeline | None = None) -> "Trainer":
        if pipeline is None:
            pipeline = TextPipeline.fit([lines1, lines2], config.bpe_merges)
        corpora, dropped = {}, {}
        for lang, lines in ((1, lines1), (2, lines2)):
            sents = [pipeline.encode_line(line, lang) for line in lines]
            corpora[lang], dropped[lang] = length_filter([s for s in sents if s.interior], config.t_max)
            if not corpora[lang]:
                raise ValueError(f"language {lang}: no sentences left after length filtering")
        return cls(config, BganModel(config, pipeline), corpora, dropped=dropped)

    @classmethod
    def from_config(cls, config: TrainConfig) -> "Trainer":
        config.validate()
        lines1, lines2 = read_lines(config.lang1_train), read_lines(config.lang2_train)
        pipeline = None
        if config.bpe_path:
            pipeline = TextPipeline(BpeModel.load(config.bpe_path), Vocab.load(config.vocab_path))
        return cls.from_lines(config, lines1, lines2, pipeline)

    # -- phases ------------------------------------------------------------------------
    def _tu_update(self, loss: ag.Tensor) -> float:
        ag.backward(loss)
        clip_grad_norm(self.model.tu.store, self.config.clip_norm)
        b1, b2 = self.config.betas_tu
        adam_step(self.model.tu.store, self.config.lr_tu, b1, b2, self.config.adam_eps)
        return loss.item()

    def phase_autoencode(self, lang: int) -> float:
        self.model.zero_grad()
        batch = next(self.streams[lang])
        return self._tu_update(self.model.tu.reconstruction_loss(batch, self.noise, self.rngs["noise"]))

    def phase_backtranslate(self, lang: int) -> float:
        self.model.zero_grad()
        batch = next(self.streams[lang])
        return self._tu_update(self.model.tu.cross_domain_loss(batch))

    def real_codes(self, lang: int) -> LatentCode:
        """Noisy, frozen encoder codes of one batch, padded to the generator length."""
        batch = next(self.streams[lang])
        with no_grad():
            code = self.model.tu.encode(batch).padded(self.config.t_gen)
        return add_code_noise(code, self.config.sigma_code_noise, self.rngs["code_noise"])

    def phase_discriminator(self, lang: int, real: LatentCode | None = None) -> float:
        m = self.model
        m.zero_grad()
        real = real if real is not None else self.real_codes(lang)
        with no_grad():
            fake = m.gen(m.gen.sample_z(real.data.shape[0], self.rngs["z"]))
        both = LatentCode(ag.concat([real.data, fake.data], axis=0),
                          np.concatenate([real.mask, fake.mask], axis=0))
        m.dis.set_power_iteration(1, update=True)
        scores = m.dis(both)
        n = real.data.shape[0]
        loss = d_loss(scores[:n], scores[n:])
        ag.backward(loss)
        b1, b2 = self.config.betas_gan
        adam_step(m.dis.store, self.config.lr_gan, b1, b2, self.config.adam_eps)
        return loss.item()

    def phase_generator(self) -> float:
        m = self.model
        m.zero_grad()
        fake = m.gen(m.gen.sample_z(self.config.batch_size, self.rngs["z"]))
        m.dis.set_power_iteration(1, update=False)
        loss = g_loss(m.dis(fake))
        ag.backward(loss)
        b1, b2 = self.config.betas_gan
        adam_step(m.gen.store, self.config.lr_gan, b1, b2, self.config.adam_eps)
        m.dis.store.zero_grad()
        m.dis.set_power_iteration(1, update=True)
        return loss.item()

    def train_iteration(self, iteration: int) -> dict:
        """Run the six ordered updates of one iteration (indices start at 1)."""
        dis_lang = 1 if iteration % 2 == 1 else 2
        record = {"iter": iteration}
        steps = (
            ("ae1", "ae", 1, lambda: self.phase_autoencode(1)),
            ("ae2", "ae", 2, lambda: self.phase_autoencode(2)),
            ("bt1", "bt", 1, lambda: self.phase_backtranslate(1)),
            ("bt2", "bt", 2, lambda: self.phase_backtranslate(2)),
            ("d_loss", "dis", dis_lang, lambda: self.phase_discriminator(dis_lang)),
            ("g_loss", "gen", 0, self.phase_generator),
        )
        for column, phase, lang, run in steps:
            record[column] = run()
            self.phase_log.append(PhaseEvent(iteration, phase, lang))
        self.iteration = iteration
        return record

    # -- whole run ----------------------------------------------------------------------
    def run(self, until: int | None = None, on_record=None) -> list[dict]:
        until = self.config.total_iterations if until is None else until
        out = []
        for it in range(self.iteration + 1, until + 1):
            rec = self.train_iteration(it)
            self.trace.append(rec)
            out.append(rec)
            if on_record is not None:
                on_record(rec)
        return out

    def rng_state(self) -> dict:
        return {"rngs": {k: r.bit_generator.state for k, r in self.rngs.items()},
                "streams": {str(k): s.state() for k, s in self.streams.items()}}

    def set_rng_state(self, state: dict) -> None:
        for k, st in state["rngs"].items():
            self.rngs[k].bit_generator.state = st
        for k, st in state["streams"].items():
            self.streams[int(k)].set_state(st)


def train_iteration(state: Trainer, iter_index: int) -> dict:
    return state.train_iteration(iter_index)


def format_row(rec: dict) -> list[str]:
    return [str(rec["iter"])] + [f"{rec[c]:.6f}" for c in LOSS_COLUMNS]


def write_trace(path: Path, rows: Sequence[dict], append: bool = False) -> None:
    new = not append or not path.exists()
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(("iter",) + LOSS_COLUMNS)
        for rec in rows:
            w.writerow(format_row(rec))


def read_trace(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "iter" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def train(config: TrainConfig, resume: str | Path | None = None, plot: bool = True) -> Trainer:
    """Run a full configured training job, writing trace, checkpoints and manifest to ``out_dir``."""
    from .checkpoint import load_checkpoint, save_checkpoint
    from .manifest import write_manifest

    trainer = Trainer.from_config(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "loss.csv"
    if resume is not None:
        load_checkpoint(resume, trainer)
        kept = [r for r in read_trace(trace_path) if r["iter"] <= trainer.iteration] \
            if trace_path.exists() else []
        write_trace(trace_path, kept)
        trainer.trace = kept
    else:
        write_trace(trace_path, [])
    (out / "config.json").write_text(config.dumps() + "\n", encoding="utf-8")
    trainer.model.pipeline.bpe.save(out / "bpe.model")
    trainer.model.pipeline.vocab.save(out / "vocab.tsv")

    def on_record(rec):
        write_trace(trace_path, [rec], append=True)
        if rec["iter"] % 50 == 0:
            log.info("iter %d  %s", rec["iter"], "  ".join(f"{c}={rec[c]:.4f}" for c in LOSS_COLUMNS))
        if config.checkpoint_every and rec["iter"] % config.checkpoint_every == 0:
            save_checkpoint(trainer, out / f"ckpt_{rec['iter']:06d}.bgan")

    trainer.run(on_record=on_record)
    final = out / "final.bgan"
    save_checkpoint(trainer, final)
    outputs = {"trace": trace_path, "checkpoint": final}
    if plot:
        from .plotting import plot_loss_trace
        outputs["figure"] = plot_loss_trace(trainer.trace, out / "loss.png")
    write_manifest(out / "manifest.json", config.to_dict(),
                   inputs=[config.lang1_train, config.lang2_train], outputs=outputs)
    return trainer


def load_model(ckpt: str | Path) -> BganModel:
    """Rebuild a model from a checkpoint and the config/bpe/vocab files written beside it."""
    from .checkpoint import CheckpointError, load_checkpoint

    ckpt = Path(ckpt)
    run_dir = ckpt.parent
    missing = [n for n in ("config.json", "bpe.model", "vocab.tsv") if not (run_dir / n).is_file()]
    if missing:
        raise CheckpointError(f"{ckpt}: missing run files next to checkpoint: {', '.join(missing)}")
    config = TrainConfig.load(run_dir / "config.json")
    pipeline = TextPipeline(BpeModel.load(run_dir / "bpe.model"), Vocab.load(run_dir / "vocab.tsv"))
    # the checkpoint overwrites initial weights, so the embeddings file need not exist any more
    model = BganModel(dataclasses.replace(config, embeddings_path=None), pipeline)
    model.config = config
    return load_checkpoint(ckpt, model)
