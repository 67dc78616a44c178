"""Instances, SGD training, and recall/precision/F evaluation."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .candidates import NPSpan, candidate_features, extract_candidates, label
from .corpus import Document, EmbeddingMatrix, GENRES, ZeroPronoun, corpus_vocabulary
from .model import ABLATIONS, ModelConfig, ModelParams, resolve

log = logging.getLogger(__name__)

INFINITE_WINDOW = None


@dataclass
class Instance:
    doc: Document = field(repr=False)
    zp: ZeroPronoun
    candidates: list[NPSpan]
    features: list[np.ndarray] = field(repr=False)
    gold: np.ndarray

    @property
    def k(self) -> int:
        return len(self.candidates)

    @property
    def genre(self) -> str:
        return self.doc.genre


@dataclass(frozen=True)
class Hyperparams:
    lr: float = 0.01
    init_range: float = 0.01
    epochs: int = 10
    seed: int = 0
    shuffle: bool = True
    finetune_embeddings: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not self.init_range > 0:
            raise ValueError("init_range must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def build_instances(corpus: Iterable[Document], mode: str = "train") -> list[Instance]:
    """One instance per anaphoric zero pronoun.

    In ``train`` mode instances without candidates or without a coreferent
    candidate are dropped (and counted in the log); ``eval`` mode keeps them.
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    out = []
    dropped = 0
    for doc in corpus:
        for zp in doc.anaphoric_zero_pronouns():
            cands = extract_candidates(zp, doc)
            gold = np.array([label(zp, c) for c in cands], dtype=np.float64)
            if mode == "train" and (not cands or not gold.any()):
                dropped += 1
                continue
            feats = candidate_features(zp, cands, doc) if cands else []
            out.append(Instance(doc, zp, cands, feats, gold))
    if dropped:
        log.info("dropped %d training instance(s) with no reachable antecedent", dropped)
    return out


def init_params(cfg: ModelConfig, hp: Hyperparams, seed: int | None = None,
                vocab: Sequence[str] = (), pretrained: EmbeddingMatrix | None = None
                ) -> ModelParams:
    """Uniform U(-init_range, init_range) initialisation, deterministic per seed."""
    rng = np.random.default_rng(hp.seed if seed is None else seed)
    return ModelParams.create(cfg, vocab, rng, hp.init_range, pretrained)


def instance_loss(params: ModelParams, inst: Instance, ablation: str = "full") -> nn.Tensor:
    res = resolve(inst.zp, inst.candidates, inst.doc, params, ablation, inst.features)
    return nn.cross_entropy(res.probs, inst.gold)


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class TrainResult:
    params: ModelParams
    epoch_losses: list[float]

    def loss_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "mean_loss"])
        for e, loss in enumerate(self.epoch_losses, start=1):
            w.writerow([e, repr(loss)])
        return buf.getvalue()


def train(instances: Sequence[Instance], cfg: ModelConfig, hp: Hyperparams,
          params: ModelParams | None = None, ablation: str = "full",
          pretrained: EmbeddingMatrix | None = None, vocab: Sequence[str] | None = None,
          on_epoch=None) -> TrainResult:
    """Per-instance SGD on the summed cross-entropy.

    ``params`` defaults to :func:`init_params` with a vocabulary built from the
    training documents.  The loss log holds the mean per-instance loss of
    each epoch.
    """
    if not instances:
        raise ValueError("no training instances")
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}")
    if params is None:
        if vocab is None:
            vocab = corpus_vocabulary(_unique_docs(instances))
        params = init_params(cfg, hp, hp.seed, vocab, pretrained)
    tensors = params.tensors()
    if not hp.finetune_embeddings:
        frozen = set(params.embeddings.tensors())
        tensors = [t for t in tensors if t not in frozen]
    order_rng = np.random.default_rng(hp.seed + 1)
    losses = []
    for epoch in range(hp.epochs):
        order = order_rng.permutation(len(instances)) if hp.shuffle else np.arange(len(instances))
        total = 0.0
        for idx in order:
            inst = instances[idx]
            with nn.GradientTape() as tape:
                loss = instance_loss(params, inst, ablation)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NonFiniteLoss(f"non-finite loss {value} at epoch {epoch + 1} on instance "
                                    f"{inst.doc.id} sentence {inst.zp.sentence_idx} "
                                    f"gap {inst.zp.gap_index}")
            total += value
            if loss.requires_grad and tape.records:
                grads = nn.backward(loss, tape)
                nn.sgd_step(tensors, grads, hp.lr)
        losses.append(total / len(instances))
        log.debug("epoch %d mean loss %.6f", epoch + 1, losses[-1])
        if on_epoch is not None:
            on_epoch(epoch + 1, losses[-1], params)
    return TrainResult(params, losses)


def _unique_docs(instances: Iterable[Instance]) -> list[Document]:
    seen, docs = set(), []
    for inst in instances:
        if id(inst.doc) not in seen:
            seen.add(id(inst.doc))
            docs.append(inst.doc)
    return docs


# --------------------------------------------------------------------------
# Evaluation


@dataclass
class Counts:
    gold: int = 0
    attempted: int = 0
    hits: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.gold + other.gold, self.attempted + other.attempted,
                      self.hits + other.hits)

    @property
    def recall(self) -> float:
        return self.hits / self.gold if self.gold else 0.0

    @property
    def precision(self) -> float:
        return self.hits / self.attempted if self.attempted else 0.0

    @property
    def f_score(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class Metrics:
    recall: float
    precision: float
    f_score: float
    counts: Counts
    per_genre: dict[str, Counts]
    ablation: str = "full"

    @classmethod
    def from_counts(cls, overall: Counts, per_genre: dict[str, Counts], ablation: str = "full"
                    ) -> "Metrics":
        return cls(overall.recall, overall.precision, overall.f_score, overall, per_genre, ablation)

    def genre_metrics(self, genre: str) -> tuple[float, float, float]:
        c = self.per_genre[genre]
        return c.recall, c.precision, c.f_score

    def report_csv(self) -> str:
        """Rows Overall then one per genre; R, P, F as percentages with one decimal."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ablation", "source", "R", "P", "F"])
        rows = [("Overall", self.counts)]
        rows += [(g, self.per_genre[g]) for g in sorted(self.per_genre, key=_genre_key)]
        for name, c in rows:
            w.writerow([self.ablation, name, f"{100 * c.recall:.1f}",
                        f"{100 * c.precision:.1f}", f"{100 * c.f_score:.1f}"])
        return buf.getvalue()


def _genre_key(g: str) -> tuple[int, str]:
    return (GENRES.index(g) if g in GENRES else len(GENRES), g)


def evaluate_instances(params: ModelParams, instances: Sequence[Instance],
                       ablation: str = "full") -> Metrics:
    per_genre: dict[str, Counts] = {}
    for inst in instances:
        c = per_genre.setdefault(inst.genre, Counts())
        c.gold += 1
        if inst.k == 0:
            continue
        c.attempted += 1
        res = resolve(inst.zp, inst.candidates, inst.doc, params, ablation, inst.features)
        pred = inst.candidates[res.predicted]
        if pred.chain_id is not None and pred.chain_id == inst.zp.chain_id:
            c.hits += 1
    overall = sum(per_genre.values(), Counts())
    return Metrics.from_counts(overall, per_genre, ablation)


def evaluate(params: ModelParams, corpus: Iterable[Document], cfg: ModelConfig | None = None,
             ablation: str = "full") -> Metrics:
    """Recall, precision and F over every anaphoric zero pronoun in ``corpus``.

    ``cfg`` may override the checkpoint's context window; the parameter shapes
    must match.
    """
    if cfg is not None and cfg != params.config:
        if replace(cfg, context_window=params.config.context_window) != params.config:
            raise ValueError("model config does not match the parameters' shapes")
        params = replace(params, config=cfg)
    return evaluate_instances(params, build_instances(corpus, "eval"), ablation)


# --------------------------------------------------------------------------
# Sweeps


def window_label(w: int | None) -> str:
    return "inf" if w is None else str(w)


def parse_window(text: str | int | None) -> int | None:
    if text is None or isinstance(text, int):
        return text
    t = str(text).strip().lower()
    if t in ("inf", "infinity", "all", "∞"):
        return None
    return int(t)


@dataclass
class SweepRow:
    setting: str
    metrics: Metrics
    epoch_losses: list[float]


def window_sweep(corpus_train: Sequence[Document], corpus_eval: Sequence[Document],
                 cfg: ModelConfig, hp: Hyperparams, windows: Sequence[int | None],
                 pretrained: EmbeddingMatrix | None = None) -> list[SweepRow]:
    """Train and evaluate one model per context window, all from the same seed."""
    if not windows:
        raise ValueError("windows must be non-empty")
    train_inst = build_instances(corpus_train, "train")
    eval_inst = build_instances(corpus_eval, "eval")
    vocab = corpus_vocabulary(corpus_train)
    rows = []
    for w in windows:
        c = replace(cfg, context_window=w)
        result = train(train_inst, c, hp, vocab=vocab, pretrained=pretrained)
        rows.append(SweepRow(window_label(w), evaluate_instances(result.params, eval_inst),
                             result.epoch_losses))
    return rows


def ablation_study(corpus_train: Sequence[Document], corpus_eval: Sequence[Document],
                   cfg: ModelConfig, hp: Hyperparams, modes: Sequence[str] = ABLATIONS,
                   pretrained: EmbeddingMatrix | None = None) -> list[SweepRow]:
    """Retrain from the same seed with each representation ablation."""
    train_inst = build_instances(corpus_train, "train")
    eval_inst = build_instances(corpus_eval, "eval")
    vocab = corpus_vocabulary(corpus_train)
    rows = []
    for mode in modes:
        result = train(train_inst, cfg, hp, ablation=mode, vocab=vocab, pretrained=pretrained)
        rows.append(SweepRow(mode, evaluate_instances(result.params, eval_inst, mode),
                             result.epoch_losses))
    return rows


def sweep_csv(rows: Sequence[SweepRow], key: str = "setting") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key, "R", "P", "F"])
    for r in rows:
        m = r.metrics
        w.writerow([r.setting, f"{100 * m.recall:.1f}", f"{100 * m.precision:.1f}",
                    f"{100 * m.f_score:.1f}"])
    return buf.getvalue()


def training_accuracy(params: ModelParams, instances: Sequence[Instance], ablation: str = "full"
                      ) -> float:
    hits = 0
    for inst in instances:
        res = resolve(inst.zp, inst.candidates, inst.doc, params, ablation, inst.features)
        hits += int(inst.gold[res.predicted] == 1)
    return hits / len(instances) if instances else 0.0
