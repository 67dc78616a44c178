"""The zero-pronoun resolver: ZP-centred LSTM, two-level candidate encoder, scorer.

For a zero pronoun ``zp`` with ordered candidates ``np_1..np_k``::

    f(zp)   = LSTM_pre(preceding words) || LSTM_fol(following words, right to left)
    l(np_i) = MLP(head, first, last, 2 prev, 2 next, avg 5 prev, avg 5 next, avg content)
    g_i     = BiLSTM(l(np_1) .. l(np_k))_i
    s_i     = tanh(W [f(zp); l(np_i); g_i; v_i] + b)
    P(np_i) = softmax(s)_i
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .candidates import FEATURE_DIM, FEATURE_SCHEMA_VERSION, NPSpan, candidate_features
from .corpus import Document, EmbeddingMatrix, ZeroPronoun, lookup
from .nn import LSTMParams, MLPParams, Tensor

ABLATIONS = ("full", "local_only", "global_only")
ZP_COMBINE = ("concat", "average", "sum")
N_LOCAL_BLOCKS = 10

CHECKPOINT_MAGIC = b"ZPSNN-CHECKPOINT"
CHECKPOINT_VERSION = 1


class NoCandidatesError(ValueError):
    """The zero pronoun has an empty candidate set; nothing to rank."""


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int = 100
    zp_hidden: int = 100
    local_hidden: tuple[int, ...] = (300, 200, 100)
    global_hidden: int = 100
    context_window: int | None = None  # None: the whole sentence on each side
    feature_dim: int = FEATURE_DIM
    zp_combine: str = "concat"

    def __post_init__(self):
        object.__setattr__(self, "local_hidden", tuple(int(w) for w in self.local_hidden))
        dims = [self.embedding_dim, self.zp_hidden, self.global_hidden, *self.local_hidden]
        if any(d <= 0 for d in dims) or self.feature_dim < 0:
            raise ValueError(f"model dimensions must be positive: {self}")
        if len(self.local_hidden) != 3:
            raise ValueError("local encoder has exactly three hidden layers")
        if self.context_window is not None and self.context_window < 0:
            raise ValueError("context_window must be >= 0 or None")
        if self.zp_combine not in ZP_COMBINE:
            raise ValueError(f"zp_combine must be one of {ZP_COMBINE}")

    @property
    def zp_dim(self) -> int:
        return 2 * self.zp_hidden if self.zp_combine == "concat" else self.zp_hidden

    @property
    def local_dim(self) -> int:
        return self.local_hidden[-1]

    @property
    def global_dim(self) -> int:
        return 2 * self.global_hidden

    @property
    def scorer_input_dim(self) -> int:
        return self.zp_dim + self.local_dim + self.global_dim + self.feature_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["local_hidden"] = list(self.local_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ModelParams:
    config: ModelConfig
    embeddings: EmbeddingMatrix
    lstm_pre: LSTMParams
    lstm_fol: LSTMParams
    local_mlp: MLPParams
    global_fwd: LSTMParams
    global_bwd: LSTMParams
    scorer_W: Tensor
    scorer_b: Tensor

    def tensors(self) -> list[Tensor]:
        """All trainable tensors in checkpoint order."""
        return [
            *self.embeddings.tensors(),
            *self.lstm_pre.tensors(),
            *self.lstm_fol.tensors(),
            *self.local_mlp.tensors(),
            *self.global_fwd.tensors(),
            *self.global_bwd.tensors(),
            self.scorer_W,
            self.scorer_b,
        ]

    def named(self) -> list[tuple[str, Tensor]]:
        return [(t.name, t) for t in self.tensors()]

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.tensors())

    @classmethod
    def create(cls, cfg: ModelConfig, vocab: Sequence[str], rng: np.random.Generator,
               init_range: float, pretrained: EmbeddingMatrix | None = None) -> "ModelParams":
        """Draw every entry from U(-init_range, init_range) in declared order.

        With ``pretrained`` the vocabulary and matrix come from it (a random
        matrix is still drawn first, so other parameters do not depend on
        whether embeddings were supplied).
        """
        d = cfg.embedding_dim
        u = lambda *shape: rng.uniform(-init_range, init_range, size=shape)
        words = list(vocab) if pretrained is None else pretrained.words()
        matrix = u(d, len(words))
        unk = u(d)
        if pretrained is not None:
            if pretrained.dim != d:
                raise ValueError(f"pretrained embeddings have dim {pretrained.dim}, config wants {d}")
            matrix = pretrained.matrix.data.copy()
        emb = EmbeddingMatrix({w: i for i, w in enumerate(words)}, matrix, unk)
        lstm_pre = LSTMParams.create(d, cfg.zp_hidden, rng, init_range, "lstm_pre")
        lstm_fol = LSTMParams.create(d, cfg.zp_hidden, rng, init_range, "lstm_fol")
        local = MLPParams.create(N_LOCAL_BLOCKS * d, cfg.local_hidden, rng, init_range, "local")
        gf = LSTMParams.create(cfg.local_dim, cfg.global_hidden, rng, init_range, "global_fwd")
        gb = LSTMParams.create(cfg.local_dim, cfg.global_hidden, rng, init_range, "global_bwd")
        W = nn.parameter(u(1, cfg.scorer_input_dim), "scorer.W")
        b = nn.parameter(u(1), "scorer.b")
        return cls(cfg, emb, lstm_pre, lstm_fol, local, gf, gb, W, b)


# --------------------------------------------------------------------------
# Encoders


class _SentenceEmbeddings:
    """Per-forward-pass cache of overt-word embeddings by sentence."""

    def __init__(self, doc: Document, emb: EmbeddingMatrix):
        self.doc = doc
        self.emb = emb
        self._cache: dict[int, tuple[list[Tensor], dict[int, int]]] = {}

    def __call__(self, si: int) -> tuple[list[Tensor], dict[int, int]]:
        hit = self._cache.get(si)
        if hit is None:
            sent = self.doc.sentences[si]
            vecs = [lookup(w, self.emb) for w in sent.words()]
            where = {orig: i for i, orig in enumerate(sent.word_positions())}
            hit = self._cache[si] = (vecs, where)
        return hit


def zp_context(zp: ZeroPronoun, doc: Document, window: int | None) -> tuple[list[int], list[int]]:
    """Overt-word indices before and after the gap, nearest ``window`` on each side."""
    sent = doc.sentences[zp.sentence_idx]
    pos = sent.word_positions()
    before = [i for i, p in enumerate(pos) if p < zp.gap_index]
    after = [i for i, p in enumerate(pos) if p > zp.gap_index]
    if window is not None:
        before = before[len(before) - window:] if window else []
        after = after[:window]
    return before, after


def encode_zp(zp: ZeroPronoun, doc: Document, cfg: ModelConfig | None, params: ModelParams,
              _embs: _SentenceEmbeddings | None = None) -> Tensor:
    cfg = cfg or params.config
    embs = _embs or _SentenceEmbeddings(doc, params.embeddings)
    vecs, _ = embs(zp.sentence_idx)
    before, after = zp_context(zp, doc, cfg.context_window)
    # following context runs right to left so the word next to the gap comes last
    _, h_pre = nn.lstm_run([vecs[i] for i in before], params.lstm_pre)
    _, h_fol = nn.lstm_run([vecs[i] for i in after], params.lstm_fol, reversed=True)
    if cfg.zp_combine == "concat":
        return nn.concat([h_pre, h_fol])
    if cfg.zp_combine == "average":
        return nn.mean([h_pre, h_fol])
    return nn.add(h_pre, h_fol)


def local_inputs(cand: NPSpan, doc: Document, params: ModelParams,
                 _embs: _SentenceEmbeddings | None = None) -> list[Tensor]:
    """The ten embedding blocks fed to the local encoder, in order.

    head, first, last, prev-1, prev-2, next-1, next-2, mean of five preceding
    words, mean of five following words, mean of the NP's own words.  Context
    comes from the NP's sentence; a missing position or an empty average
    contributes a zero vector.
    """
    embs = _embs or _SentenceEmbeddings(doc, params.embeddings)
    vecs, where = embs(cand.sentence_idx)
    d = params.embeddings.dim
    inside = [where[p] for p in range(cand.start, cand.end) if p in where]
    if not inside:
        raise ValueError(f"candidate {cand.key} has no overt words")
    first, last = inside[0], inside[-1]
    n = len(vecs)
    head = where.get(cand.head_index, last)

    def at(i: int) -> Tensor:
        return vecs[i] if 0 <= i < n else nn.zeros(d)

    def avg(idx: list[int]) -> Tensor:
        return nn.mean([vecs[i] for i in idx]) if idx else nn.zeros(d)

    return [
        vecs[head], vecs[first], vecs[last],
        at(first - 1), at(first - 2),
        at(last + 1), at(last + 2),
        avg(list(range(max(0, first - 5), first))),
        avg(list(range(last + 1, min(n, last + 6)))),
        avg(list(range(first, last + 1))),
    ]


def encode_local(cand: NPSpan, doc: Document, params: ModelParams,
                 _embs: _SentenceEmbeddings | None = None) -> Tensor:
    return nn.mlp_forward(nn.concat(local_inputs(cand, doc, params, _embs)), params.local_mlp)


def encode_global(locals_: Sequence[Tensor], params: ModelParams) -> list[Tensor]:
    if not locals_:
        raise NoCandidatesError("empty candidate set")
    fwd, _ = nn.lstm_run(locals_, params.global_fwd)
    bwd, _ = nn.lstm_run(locals_, params.global_bwd, reversed=True)
    bwd = bwd[::-1]  # align with candidate positions
    return [nn.concat([f, b]) for f, b in zip(fwd, bwd)]


# --------------------------------------------------------------------------
# Scoring


@dataclass
class Resolution:
    scores: Tensor          # s_i, each in (-1, 1)
    probs: Tensor           # softmax over candidates
    predicted: int
    zp_repr: Tensor = field(repr=False)
    local_reprs: list[Tensor] = field(repr=False)
    global_reprs: list[Tensor] = field(repr=False)


def score_inputs(zp_repr: Tensor, local_repr: Tensor, global_repr: Tensor,
                 features: Tensor) -> Tensor:
    return nn.concat([zp_repr, local_repr, global_repr, features])


def argmax_nearest(values: np.ndarray) -> int:
    """Index of the maximum; ties go to the largest index (closest candidate).

    NaN entries never win, so a diverged model still yields an index and the
    caller's finiteness check can report it.
    """
    values = np.where(np.isnan(values), -np.inf, np.asarray(values, dtype=np.float64))
    return int(np.flatnonzero(values == values.max())[-1])


def resolve(zp: ZeroPronoun, candidates: Sequence[NPSpan], doc: Document, params: ModelParams,
            ablation: str = "full", features: Sequence[np.ndarray] | None = None) -> Resolution:
    """Score every candidate and pick the most probable one."""
    if ablation not in ABLATIONS:
        raise ValueError(f"ablation must be one of {ABLATIONS}, got {ablation!r}")
    k = len(candidates)
    if k == 0:
        raise NoCandidatesError(f"zero pronoun at sentence {zp.sentence_idx}, token "
                                f"{zp.gap_index} has no candidates")
    cfg = params.config
    if features is None:
        features = candidate_features(zp, list(candidates), doc)
    embs = _SentenceEmbeddings(doc, params.embeddings)
    f = encode_zp(zp, doc, cfg, params, embs)
    locs = [encode_local(c, doc, params, embs) for c in candidates]
    if ablation == "local_only":
        globs = [nn.zeros(cfg.global_dim) for _ in range(k)]
    else:
        globs = encode_global(locs, params)
    blocks = locs if ablation != "global_only" else [nn.zeros(cfg.local_dim)] * k
    scores = []
    for i in range(k):
        x = score_inputs(f, blocks[i], globs[i], Tensor(features[i]))
        scores.append(nn.tanh(nn.affine(params.scorer_W, x, params.scorer_b)))
    s = nn.stack_scalars(scores)
    probs = nn.softmax(s)
    return Resolution(s, probs, argmax_nearest(s.data), f, locs, globs)


# --------------------------------------------------------------------------
# Checkpoints


def checkpoint_bytes(params: ModelParams) -> bytes:
    header = {
        "format_version": CHECKPOINT_VERSION,
        "feature_schema": FEATURE_SCHEMA_VERSION,
        "config": params.config.to_dict(),
        "vocab": params.embeddings.words(),
        "tensors": [[name, list(t.shape)] for name, t in params.named()],
    }
    head = json.dumps(header, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode()
    parts = [CHECKPOINT_MAGIC, b" %d\n" % CHECKPOINT_VERSION, struct.pack("<Q", len(head)), head]
    for _, t in params.named():
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(params: ModelParams, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params))


class CheckpointError(ValueError):
    pass


def params_from_bytes(blob: bytes) -> ModelParams:
    first_nl = blob.find(b"\n")
    magic = blob[:first_nl].split() if first_nl > 0 else []
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file")
    if magic[1] != b"%d" % CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {magic[1].decode(errors='replace')}")
    off = first_nl + 1
    if len(blob) < off + 8:
        raise CheckpointError("checkpoint truncated in header")
    (n,) = struct.unpack("<Q", blob[off:off + 8])
    off += 8
    try:
        header = json.loads(blob[off:off + n].decode())
        schema, cfg_dict = header["feature_schema"], header["config"]
        vocab, layout = header["vocab"], header["tensors"]
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"unreadable checkpoint header: {e}") from None
    off += n
    if schema != FEATURE_SCHEMA_VERSION:
        raise CheckpointError(f"feature schema {schema!r} is not {FEATURE_SCHEMA_VERSION!r}")
    try:
        cfg = ModelConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"bad model config in checkpoint: {e}") from None
    params = ModelParams.create(cfg, vocab, np.random.default_rng(0), 0.0)
    expected = [[name, list(t.shape)] for name, t in params.named()]
    if expected != layout:
        raise CheckpointError("tensor layout in checkpoint does not match its config")
    for name, t in params.named():
        size = t.data.size * 8
        if len(blob) < off + size:
            raise CheckpointError(f"checkpoint truncated in tensor {name}")
        t.data = np.frombuffer(blob[off:off + size], dtype="<f8").astype(np.float64) \
            .reshape(t.shape)
        off += size
    if off != len(blob):
        raise CheckpointError(f"checkpoint has {len(blob) - off} trailing bytes")
    return params


def load_checkpoint(path: str | os.PathLike) -> ModelParams:
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())
