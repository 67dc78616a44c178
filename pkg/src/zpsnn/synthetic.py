"""Synthetic pro-drop corpora in the same shape as the parsed CoNLL documents.

Three layouts are available through ``distractor_mode``:

``off``
    Narrative sentences ``subject verb object``; a dropped subject refers to
    the subject of the previous sentence.  Separable from the hand-crafted
    features alone (sentence distance and grammatical role).

``global``
    Context sentences are sequences of identical frames
    ``ad*5 (NP noun) vv ad*4``.  Every candidate NP therefore has the same
    surrounding words and the same role, and all but one are distinct nouns
    from one pool.  The remaining candidate is a cue noun, and the antecedent
    is the candidate right before it in candidate order.  Nothing about a
    candidate on its own marks it as the antecedent: only the candidate set
    as a whole does.

``longrange``
    Two candidate nouns from different semantic classes; the class of the
    antecedent is signalled by a verb three words after the gap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .corpus import EMPTY_POS, ZP_FORM, Document, ParseNode, Sentence, Token

DISTRACTOR_MODES = ("off", "global", "longrange")

# A tree spec is (label, [children]) or (pos, word); an optional third
# element on an NP gives its chain id.
TreeSpec = Union[tuple, list]


@dataclass(frozen=True)
class SyntheticSpec:
    n_docs: int = 20
    sentences_per_doc: int = 12
    vocab_size: int = 60
    distractor_mode: str = "off"

    def __post_init__(self):
        if self.n_docs < 0 or self.sentences_per_doc <= 0 or self.vocab_size < 8:
            raise ValueError(f"invalid synthetic spec {self}")
        if self.distractor_mode not in DISTRACTOR_MODES:
            raise ValueError(f"distractor_mode must be one of {DISTRACTOR_MODES}")


class Lexicon:
    """Deterministic word lists; nouns are split into disjoint classes."""

    def __init__(self, vocab_size: int):
        self.nouns = [f"n{i:03d}" for i in range(vocab_size)]
        q = vocab_size // 4
        self.targets = self.nouns[:q]
        self.cues = self.nouns[q:2 * q]
        self.neutrals = self.nouns[2 * q:]
        self.pronouns = ["ta", "tamen", "wo", "ni"]
        self.verbs = [f"v{i:02d}" for i in range(max(8, vocab_size // 4))]
        self.frame_pre = [f"pre{i}" for i in range(5)]
        self.frame_post = [f"post{i}" for i in range(4)]
        self.fillers = [f"ad{i}" for i in range(6)]
        # longrange: verb class selects noun class
        half = len(self.verbs) // 2
        self.verb_classes = (self.verbs[:half], self.verbs[half:])
        self.noun_classes = (self.targets, self.cues)


def _build(spec: TreeSpec, tokens: list[Token], mentions: list[tuple[int, int, int]]
           ) -> ParseNode:
    label, body = spec[0], spec[1]
    if isinstance(body, str):
        i = len(tokens)
        tokens.append(Token(i, body, label))
        return ParseNode(label, i, i + 1)
    start = len(tokens)
    node = ParseNode(label, start, start)
    for child in body:
        c = _build(child, tokens, mentions)
        c.parent = node
        node.children.append(c)
    node.end = len(tokens)
    if len(spec) > 2 and spec[2] is not None:
        mentions.append((start, node.end, spec[2]))
    return node


def _sentence(ip_children: list, si: int, chains: dict) -> Sentence:
    tokens: list[Token] = []
    mentions: list[tuple[int, int, int]] = []
    tree = _build(("TOP", [("IP", ip_children)]), tokens, mentions)
    for start, end, cid in mentions:
        chains.setdefault(cid, set()).add((si, start, end))
    return Sentence(tokens, tree)


def _np(word: str, chain: int | None = None, pos: str = "NN") -> tuple:
    return ("NP", [(pos, word)], chain)


def _zp(chain: int | None) -> tuple:
    return ("NP-SBJ", [(EMPTY_POS, ZP_FORM)], chain)


class _Chains:
    def __init__(self):
        self.next = 0

    def new(self) -> int:
        self.next += 1
        return self.next


# --------------------------------------------------------------------------
# Layouts


def _doc_off(rng: np.random.Generator, lex: Lexicon, n_sent: int) -> tuple[list[Sentence], dict]:
    chains: dict = {}
    ids = _Chains()
    sentences = []
    prev_subject: tuple[str, int] | None = None   # (word, chain) of last overt subject
    for si in range(n_sent):
        verb = str(rng.choice(lex.verbs))
        obj_word = str(rng.choice(lex.neutrals))
        if rng.random() < 0.25:
            obj = ("NP", [_np(obj_word), ("CC", "he"), _np(str(rng.choice(lex.neutrals)))], None)
        else:
            obj = _np(obj_word)
        tail = [("VP", [("VV", verb), obj]), ("PU", "。")]
        if prev_subject is not None and rng.random() < 0.6:
            children = [_zp(prev_subject[1]), *tail]
            subject = None
        elif prev_subject is not None and rng.random() < 0.1:
            children = [_zp(None), *tail]       # non-anaphoric
            subject = None
        else:
            if prev_subject is not None and rng.random() < 0.3:
                word, cid = prev_subject        # repeated mention, same entity
            else:
                word, cid = str(rng.choice(lex.targets)), ids.new()
            pos = "PN" if rng.random() < 0.15 else "NN"
            if pos == "PN":
                word = str(rng.choice(lex.pronouns))
            children = [_np(word, cid, pos), *tail]
            subject = (word, cid)
        sentences.append(_sentence(children, si, chains))
        prev_subject = subject
    return sentences, chains


def _frame(word: str, chain: int | None, lex: Lexicon, verb: str) -> list:
    return [
        ("ADVP", [("AD", w) for w in lex.frame_pre]),
        _np(word, chain),
        ("VP", [("VV", verb), *[("AD", w) for w in lex.frame_post]]),
    ]


def _doc_global(rng: np.random.Generator, lex: Lexicon, n_sent: int, per_sentence: int = 3
                ) -> tuple[list[Sentence], dict]:
    chains: dict = {}
    ids = _Chains()
    sentences = []
    verb = lex.verbs[0]
    n = 2 * per_sentence
    while len(sentences) + 3 <= n_sent:
        g = int(rng.integers(n - 1))
        cid = ids.new()
        nouns = rng.choice(lex.neutrals, size=n - 1, replace=len(lex.neutrals) < n - 1)
        words = [str(w) for w in nouns[:g + 1]] + [str(rng.choice(lex.cues))] + \
            [str(w) for w in nouns[g + 1:]]
        slots = [(w, cid if pos == g else None) for pos, w in enumerate(words)]
        for half in (slots[:per_sentence], slots[per_sentence:]):
            children = []
            for word, chain in half:
                children += _frame(word, chain, lex, verb)
            children.append(("PU", "。"))
            sentences.append(_sentence(children, len(sentences), chains))
        zp_children = [_zp(cid), ("VP", [("VV", verb), *[("AD", w) for w in lex.frame_post]]),
                       ("PU", "。")]
        sentences.append(_sentence(zp_children, len(sentences), chains))
    return sentences, chains


def _doc_longrange(rng: np.random.Generator, lex: Lexicon, n_sent: int
                   ) -> tuple[list[Sentence], dict]:
    chains: dict = {}
    ids = _Chains()
    sentences = []
    while len(sentences) + 3 <= n_sent:
        cls = int(rng.integers(2))
        gold_word = str(rng.choice(lex.noun_classes[cls]))
        other_word = str(rng.choice(lex.noun_classes[1 - cls]))
        cid = ids.new()
        gold_first = rng.random() < 0.5
        order = [(gold_word, cid), (other_word, None)]
        if not gold_first:
            order.reverse()
        for word, chain in order:
            verb = str(rng.choice(lex.verbs))
            children = [("ADVP", [("AD", str(rng.choice(lex.fillers)))]), _np(word, chain),
                        ("VP", [("VV", verb), _np(str(rng.choice(lex.neutrals)))]), ("PU", "。")]
            sentences.append(_sentence(children, len(sentences), chains))
        cue_verb = str(rng.choice(lex.verb_classes[cls]))
        # cue verb sits three words after the gap
        zp_children = [_zp(cid),
                       ("VP", [("ADVP", [("AD", lex.fillers[0]), ("AD", lex.fillers[1])]),
                               ("VP", [("VV", cue_verb), _np(str(rng.choice(lex.neutrals)))])]),
                       ("PU", "。")]
        sentences.append(_sentence(zp_children, len(sentences), chains))
    return sentences, chains


_LAYOUTS = {"off": _doc_off, "global": _doc_global, "longrange": _doc_longrange}


def generate_synthetic(seed: int, spec: SyntheticSpec) -> list[Document]:
    """Deterministic synthetic documents (genre ``SYN``) for ``seed`` and ``spec``."""
    rng = np.random.default_rng(seed)
    lex = Lexicon(spec.vocab_size)
    layout = _LAYOUTS[spec.distractor_mode]
    docs = []
    for i in range(spec.n_docs):
        sentences, chains = layout(rng, lex, spec.sentences_per_doc)
        if not sentences:
            raise ValueError(f"sentences_per_doc={spec.sentences_per_doc} too small for "
                             f"mode {spec.distractor_mode!r}")
        doc_id = f"syn/{spec.distractor_mode}/{seed}_{i:04d}"
        docs.append(Document(doc_id, "SYN", sentences, chains, 0))
    return docs


def synthetic_embeddings(words, dim: int = 100, seed: int = 0, scale: float = 1.0):
    """Random embedding table standing in for pretrained vectors.

    Entries are N(0, scale^2 / dim) so each vector has norm close to ``scale``.
    """
    from .corpus import EmbeddingMatrix

    words = sorted(set(words))
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, scale / np.sqrt(dim), size=(dim, len(words)))
    return EmbeddingMatrix({w: i for i, w in enumerate(words)}, matrix, np.zeros(dim))
