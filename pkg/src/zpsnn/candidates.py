"""Candidate antecedents for an anaphoric zero pronoun.

Candidates are NP constituents from the zero pronoun's sentence and the two
sentences before it that end before the gap and are either maximal (no NP
ancestor) or modifier NPs (parent is an NP).  They are ordered by textual
position, earliest first; that order is also the input order of the global
encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Document, ParseNode, Sentence, ZeroPronoun

WINDOW_SENTENCES = 2
CLAUSE_LABELS = frozenset({"IP", "CP"})
VERB_TAGS = frozenset({"VV", "VA", "VC", "VE"})
PRONOUN_TAGS = frozenset({"PN"})

FEATURE_SCHEMA_VERSION = "v1"
FEATURE_NAMES = (
    "sent_dist_0",
    "sent_dist_1",
    "sent_dist_2",
    "np_is_pronoun",
    "np_is_subject",
    "np_is_object",
    "np_length",          # overt tokens, clipped at 8, divided by 8
    "rank_over_k",        # 1-based rank in textual order / k
    "np_is_closest",
    "zp_sentence_initial",
    "zp_following_verb",  # a verb among the next two overt tokens
    "head_matches_other",
)
FEATURE_DIM = len(FEATURE_NAMES)


@dataclass(frozen=True)
class NPSpan:
    sentence_idx: int
    start: int
    end: int
    head_index: int
    chain_id: int | None = None
    node: ParseNode | None = field(default=None, compare=False, repr=False)

    @property
    def key(self) -> tuple[int, int, int]:
        return self.sentence_idx, self.start, self.end


def _has_np_ancestor(node: ParseNode) -> bool:
    p = node.parent
    while p is not None:
        if p.category == "NP":
            return True
        p = p.parent
    return False


def is_candidate_node(node: ParseNode, sentence: Sentence) -> bool:
    if node.category != "NP" or node.is_preterminal:
        return False
    # an NP made only of empty elements is itself a zero pronoun
    if all(t.is_empty for t in sentence.tokens[node.start:node.end]):
        return False
    parent = node.parent
    return not _has_np_ancestor(node) or (parent is not None and parent.category == "NP")


def find_head(np_node: ParseNode, sentence: Sentence) -> int:
    """Rightmost noun-tagged token of the NP, else its rightmost overt token."""
    toks = sentence.tokens[np_node.start:np_node.end]
    for t in reversed(toks):
        if not t.is_empty and t.pos.startswith("N"):
            return t.index
    for t in reversed(toks):
        if not t.is_empty:
            return t.index
    return np_node.end - 1


def extract_candidates(zp: ZeroPronoun, doc: Document) -> list[NPSpan]:
    found: dict[tuple[int, int, int], NPSpan] = {}
    first = max(0, zp.sentence_idx - WINDOW_SENTENCES)
    for si in range(first, zp.sentence_idx + 1):
        sent = doc.sentences[si]
        for node in sent.tree.walk():
            if si == zp.sentence_idx and node.end > zp.gap_index:
                continue
            if not is_candidate_node(node, sent):
                continue
            key = (si, node.start, node.end)
            # pre-order walk: for unary NP chains the outermost node wins
            if key not in found:
                found[key] = NPSpan(si, node.start, node.end, find_head(node, sent),
                                    doc.chain_of(key), node)
    return [found[k] for k in sorted(found)]


def label(zp: ZeroPronoun, cand: NPSpan) -> int:
    """1 when both are in the same coreference chain."""
    return int(zp.chain_id is not None and cand.chain_id is not None
               and zp.chain_id == cand.chain_id)


# --------------------------------------------------------------------------
# Hand-crafted features


def _is_subject(node: ParseNode) -> bool:
    if "-SBJ" in node.label:
        return True
    parent = node.parent
    if parent is None or parent.category not in CLAUSE_LABELS:
        return False
    siblings = parent.children
    idx = next(i for i, c in enumerate(siblings) if c is node)
    return any(c.category == "VP" for c in siblings[idx + 1:])


def _is_object(node: ParseNode) -> bool:
    if "-OBJ" in node.label:
        return True
    parent = node.parent
    if parent is None or parent.category != "VP":
        return False
    siblings = parent.children
    idx = next(i for i, c in enumerate(siblings) if c is node)
    return any(c.is_preterminal and c.label in VERB_TAGS for c in siblings[:idx])


def zp_context_flags(zp: ZeroPronoun, doc: Document) -> tuple[float, float]:
    sent = doc.sentences[zp.sentence_idx]
    before = [t for t in sent.tokens[:zp.gap_index] if not t.is_empty]
    after = [t for t in sent.tokens[zp.gap_index + 1:] if not t.is_empty]
    initial = float(not before)
    following_verb = float(any(t.pos in VERB_TAGS for t in after[:2]))
    return initial, following_verb


def handcrafted_features(zp: ZeroPronoun, cand: NPSpan, doc: Document, candidate_rank: int,
                         k: int, candidates: list[NPSpan] | None = None) -> np.ndarray:
    """The v1 feature vector for one (zero pronoun, candidate) pair.

    ``candidate_rank`` is 1-based in textual order, so the closest candidate
    has rank ``k``.  ``candidates`` is the full candidate list (recomputed
    when omitted) and is only needed for the head-match flag.
    """
    if candidates is None:
        candidates = extract_candidates(zp, doc)
    sent = doc.sentences[cand.sentence_idx]
    v = np.zeros(FEATURE_DIM)
    dist = zp.sentence_idx - cand.sentence_idx
    if 0 <= dist <= 2:
        v[dist] = 1.0
    head_tok = sent.tokens[cand.head_index]
    v[3] = float(head_tok.pos in PRONOUN_TAGS)
    if cand.node is not None:
        v[4] = float(_is_subject(cand.node))
        v[5] = float(_is_object(cand.node))
    overt = sum(1 for t in sent.tokens[cand.start:cand.end] if not t.is_empty)
    v[6] = min(overt, 8) / 8.0
    v[7] = candidate_rank / k
    v[8] = float(candidate_rank == k)
    v[9], v[10] = zp_context_flags(zp, doc)
    head_word = head_tok.form
    v[11] = float(any(c.key != cand.key and
                      doc.sentences[c.sentence_idx].tokens[c.head_index].form == head_word
                      for c in candidates))
    return v


def candidate_features(zp: ZeroPronoun, candidates: list[NPSpan], doc: Document) -> list[np.ndarray]:
    k = len(candidates)
    return [handcrafted_features(zp, c, doc, i + 1, k, candidates)
            for i, c in enumerate(candidates)]
