"""Documents, parse trees and coreference chains in CoNLL-2012 column format.

Each token line carries (at least) seven whitespace-separated columns::

    doc_id  part_no  token_index  form  pos  parse_bit  ...  coref

The parse bit is the usual CoNLL-2012 tree fragment (``(TOP(IP(NP*``) and the
coreference column is the last one (``(3)``, ``(3``, ``3)``, ``-`` or several
of those joined by ``|``).  Zero pronouns appear as ``*pro*`` tokens tagged
``-NONE-``.

Token indices in :class:`Sentence`, :class:`ParseNode` spans, chain spans and
``ZeroPronoun.gap_index`` all use the original coordinates, placeholders
included.  :meth:`Sentence.words` drops empty elements and
:meth:`Sentence.word_positions` gives the mapping back.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .nn import Tensor, gather_column, parameter

ZP_FORM = "*pro*"
EMPTY_POS = "-NONE-"
GENRES = ("NW", "MZ", "WB", "BN", "BC", "TC", "SYN")


class CorpusError(ValueError):
    """Malformed corpus or embedding input."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.message = message
        self.line = line


@dataclass(frozen=True)
class Token:
    index: int
    form: str
    pos: str

    @property
    def is_zp_placeholder(self) -> bool:
        return self.form == ZP_FORM and self.pos == EMPTY_POS

    @property
    def is_empty(self) -> bool:
        """Any empty element (traces included); never fed to an encoder."""
        return self.pos == EMPTY_POS


@dataclass
class ParseNode:
    label: str
    start: int
    end: int
    children: list["ParseNode"] = field(default_factory=list)
    parent: "ParseNode | None" = field(default=None, repr=False, compare=False)

    @property
    def span(self) -> tuple[int, int]:
        return self.start, self.end

    @property
    def is_preterminal(self) -> bool:
        return not self.children

    @property
    def category(self) -> str:
        """Label without function tags: ``NP-SBJ`` -> ``NP``; ``-NONE-`` kept."""
        if self.label.startswith("-"):
            return self.label
        return self.label.split("-")[0].split("=")[0]

    def walk(self) -> Iterator["ParseNode"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParseNode):
            return NotImplemented
        return (self.label, self.start, self.end, self.children) == \
            (other.label, other.start, other.end, other.children)

    def __hash__(self) -> int:
        return hash((self.label, self.start, self.end))

    def to_bracketed(self, tokens: list[Token] | None = None) -> str:
        if self.is_preterminal:
            word = tokens[self.start].form if tokens else "*"
            return f"({self.label} {word})"
        return "(%s %s)" % (self.label, " ".join(c.to_bracketed(tokens) for c in self.children))


@dataclass
class Sentence:
    tokens: list[Token]
    tree: ParseNode

    def __len__(self) -> int:
        return len(self.tokens)

    def words(self) -> list[str]:
        return [t.form for t in self.tokens if not t.is_empty]

    def word_positions(self) -> list[int]:
        """Original token index of each entry of :meth:`words`."""
        return [t.index for t in self.tokens if not t.is_empty]


Span = tuple[int, int, int]  # (sentence_idx, start, end) with end exclusive


@dataclass
class Document:
    id: str
    genre: str
    sentences: list[Sentence]
    chains: dict[int, set[Span]] = field(default_factory=dict)
    part: int = 0

    def chain_of(self, span: Span) -> int | None:
        """Chain id of a mention span, or None for singletons."""
        hits = [cid for cid, spans in self.chains.items() if span in spans]
        return min(hits) if hits else None

    def zero_pronouns(self) -> list["ZeroPronoun"]:
        out = []
        for si, sent in enumerate(self.sentences):
            for tok in sent.tokens:
                if tok.is_zp_placeholder:
                    out.append(ZeroPronoun(si, tok.index, self.chain_of((si, tok.index, tok.index + 1))))
        return out

    def anaphoric_zero_pronouns(self) -> list["ZeroPronoun"]:
        return [zp for zp in self.zero_pronouns() if zp.is_anaphoric(self)]


@dataclass(frozen=True)
class ZeroPronoun:
    sentence_idx: int
    gap_index: int
    chain_id: int | None = None

    def is_anaphoric(self, doc: Document) -> bool:
        """True when the chain has an overt mention ending before the gap."""
        if self.chain_id is None:
            return False
        for si, start, end in doc.chains.get(self.chain_id, ()):
            toks = doc.sentences[si].tokens[start:end]
            if all(t.is_empty for t in toks):
                continue
            if si < self.sentence_idx or (si == self.sentence_idx and end <= self.gap_index):
                return True
        return False


def genre_of(doc_id: str) -> str | None:
    head = doc_id.split("/")[0].upper()
    return head if head in GENRES else None


# --------------------------------------------------------------------------
# Reading


def _parse_bit(bit: str, idx: int, pos: str, stack: list[ParseNode], roots: list[ParseNode],
               lineno: int) -> None:
    star = bit.find("*")
    if star < 0 or bit.count("*") != 1:
        raise CorpusError(f"parse bit {bit!r} must contain exactly one '*'", lineno)
    opens, closes = bit[:star], bit[star + 1:]
    for label in opens.split("(")[1:]:
        if not label:
            raise CorpusError(f"empty constituent label in {bit!r}", lineno)
        node = ParseNode(label, idx, -1, parent=stack[-1] if stack else None)
        if stack:
            stack[-1].children.append(node)
        else:
            roots.append(node)
        stack.append(node)
    leaf = ParseNode(pos, idx, idx + 1, parent=stack[-1] if stack else None)
    if not stack:
        raise CorpusError(f"token outside any constituent in {bit!r}", lineno)
    stack[-1].children.append(leaf)
    if closes.strip(")"):
        raise CorpusError(f"unexpected characters after '*' in {bit!r}", lineno)
    for _ in closes:
        if not stack:
            raise CorpusError(f"unbalanced parse bit {bit!r}: too many ')'", lineno)
        stack.pop().end = idx + 1


def _coref_bit(bit: str, sent_idx: int, idx: int, open_spans: dict[int, list[int]],
               chains: dict[int, set[Span]], lineno: int) -> None:
    if bit == "-":
        return
    for part in bit.split("|"):
        try:
            if part.startswith("(") and part.endswith(")"):
                kind, cid = "single", int(part[1:-1])
            elif part.startswith("("):
                kind, cid = "open", int(part[1:])
            elif part.endswith(")"):
                kind, cid = "close", int(part[:-1])
            else:
                raise ValueError(part)
        except ValueError:
            raise CorpusError(f"malformed coref field {bit!r}", lineno) from None
        if kind == "single":
            chains.setdefault(cid, set()).add((sent_idx, idx, idx + 1))
        elif kind == "open":
            open_spans.setdefault(cid, []).append(idx)
        else:
            starts = open_spans.get(cid)
            if not starts:
                raise CorpusError(f"coref bracket {part!r} closes chain {cid} which is not open",
                                  lineno)
            chains.setdefault(cid, set()).add((sent_idx, starts.pop(), idx + 1))


class _DocBuilder:
    def __init__(self, doc_id: str, part: int, lineno: int):
        genre = genre_of(doc_id)
        if genre is None:
            raise CorpusError(f"cannot infer genre from document id {doc_id!r}", lineno)
        self.doc = Document(doc_id, genre, [], {}, part)
        self.tokens: list[Token] = []
        self.stack: list[ParseNode] = []
        self.roots: list[ParseNode] = []
        self.open_spans: dict[int, list[int]] = {}
        self.first_line = lineno

    def add(self, cols: list[str], lineno: int) -> None:
        if len(cols) < 7:
            raise CorpusError(f"expected at least 7 columns, got {len(cols)}", lineno)
        doc_id, part = cols[0], cols[1]
        if doc_id != self.doc.id or int(part) != self.doc.part:
            raise CorpusError(f"token belongs to {doc_id} part {part}, inside "
                              f"{self.doc.id} part {self.doc.part}", lineno)
        try:
            idx = int(cols[2])
        except ValueError:
            raise CorpusError(f"bad token index {cols[2]!r}", lineno) from None
        if idx != len(self.tokens):
            raise CorpusError(f"non-contiguous token index {idx}, expected {len(self.tokens)}",
                              lineno)
        if not self.tokens:
            self.first_line = lineno
        form, pos = cols[3], cols[4]
        self.tokens.append(Token(idx, form, pos))
        _parse_bit(cols[5], idx, pos, self.stack, self.roots, lineno)
        _coref_bit(cols[-1], len(self.doc.sentences), idx, self.open_spans, self.doc.chains,
                   lineno)

    def end_sentence(self, lineno: int) -> None:
        if not self.tokens:
            return
        if self.stack:
            raise CorpusError(f"unbalanced parse: {len(self.stack)} constituent(s) left open "
                              f"at end of sentence", lineno)
        if len(self.roots) != 1:
            raise CorpusError(f"sentence starting at line {self.first_line} has "
                              f"{len(self.roots)} root constituents", lineno)
        if any(self.open_spans.values()):
            open_ids = sorted(c for c, s in self.open_spans.items() if s)
            raise CorpusError(f"coref chain(s) {open_ids} opened but not closed in sentence",
                              lineno)
        self.doc.sentences.append(Sentence(self.tokens, self.roots[0]))
        self.tokens, self.roots, self.open_spans = [], [], {}


def _parse_begin(line: str, lineno: int) -> tuple[str, int]:
    # "#begin document (doc_id); part 000"
    try:
        rest = line[len("#begin document"):].strip()
        name, part = rest.split(";")
        name = name.strip()
        if name.startswith("(") and name.endswith(")"):
            name = name[1:-1]
        return name, int(part.strip().split()[1])
    except (ValueError, IndexError):
        raise CorpusError(f"malformed document header {line!r}", lineno) from None


def read_conll(stream: Iterable[str], path: str | None = None) -> list[Document]:
    docs: list[Document] = []
    builder: _DocBuilder | None = None
    lineno = 0
    try:
        for lineno, raw in enumerate(stream, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if line.startswith("#begin document"):
                if builder is not None:
                    raise CorpusError("nested #begin document", lineno)
                name, part = _parse_begin(line, lineno)
                builder = _DocBuilder(name, part, lineno)
            elif line.startswith("#end document"):
                if builder is None:
                    raise CorpusError("#end document without #begin", lineno)
                builder.end_sentence(lineno)
                docs.append(builder.doc)
                builder = None
            elif not line.strip():
                if builder is not None:
                    builder.end_sentence(lineno)
            elif line.startswith("#"):
                continue
            else:
                if builder is None:
                    raise CorpusError("token line outside a document", lineno)
                builder.add(line.split(), lineno)
        if builder is not None:
            raise CorpusError("missing #end document", lineno)
    except CorpusError as e:
        if path is not None and e.line is not None:
            raise CorpusError(e.message, e.line, path) from None
        raise
    return docs


def parse_conll(path: str | os.PathLike) -> list[Document]:
    with open(path, encoding="utf-8") as fh:
        return read_conll(fh, str(path))


# --------------------------------------------------------------------------
# Writing


def _parse_bits(sent: Sentence) -> list[str]:
    n = len(sent.tokens)
    opens = [""] * n
    closes = [0] * n

    def visit(node: ParseNode) -> None:
        if node.is_preterminal:
            return
        opens[node.start] += "(" + node.label
        for child in node.children:
            visit(child)
        closes[node.end - 1] += 1

    visit(sent.tree)
    return [opens[i] + "*" + ")" * closes[i] for i in range(n)]


def _coref_bits(doc: Document, si: int, n: int) -> list[str]:
    parts: list[list[str]] = [[] for _ in range(n)]
    spans = sorted((start, -end, cid) for cid, ss in doc.chains.items()
                   for s, start, end in ss if s == si)
    for start, neg_end, cid in spans:
        end = -neg_end
        if end - start == 1:
            parts[start].append(f"({cid})")
        else:
            parts[start].append(f"({cid}")
    for start, neg_end, cid in spans:
        if -neg_end - start > 1:
            parts[-neg_end - 1].append(f"{cid})")
    return ["|".join(p) if p else "-" for p in parts]


def write_conll(docs: Iterable[Document], stream: io.TextIOBase) -> None:
    for doc in docs:
        stream.write(f"#begin document ({doc.id}); part {doc.part:03d}\n")
        for si, sent in enumerate(doc.sentences):
            bits = _parse_bits(sent)
            coref = _coref_bits(doc, si, len(sent.tokens))
            for tok, bit, cb in zip(sent.tokens, bits, coref):
                stream.write(f"{doc.id}\t{doc.part}\t{tok.index}\t{tok.form}\t{tok.pos}\t{bit}\t{cb}\n")
            stream.write("\n")
        stream.write("#end document\n")


def save_conll(docs: Iterable[Document], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_conll(docs, fh)


def dumps_conll(docs: Iterable[Document]) -> str:
    buf = io.StringIO()
    write_conll(docs, buf)
    return buf.getvalue()


def loads_conll(text: str) -> list[Document]:
    return read_conll(io.StringIO(text))


# --------------------------------------------------------------------------
# Embeddings


class EmbeddingMatrix:
    """Word embeddings stored column-wise (``d x |V|``) plus a learned unknown vector.

    ``matrix`` and ``unk_vector`` are trainable tensors, so :func:`lookup`
    results take part in backpropagation.
    """

    def __init__(self, vocab: dict[str, int], matrix: np.ndarray, unk_vector: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        d = matrix.shape[0]
        if matrix.ndim != 2 or matrix.shape[1] != len(vocab):
            raise CorpusError(f"embedding matrix shape {matrix.shape} does not match "
                              f"vocabulary size {len(vocab)}")
        if sorted(vocab.values()) != list(range(len(vocab))):
            raise CorpusError("vocabulary indices must be 0..|V|-1")
        self.vocab = dict(vocab)
        self.matrix = parameter(matrix, "embeddings.matrix")
        self.unk_vector = parameter(np.asarray(unk_vector, dtype=np.float64).reshape(d),
                                    "embeddings.unk")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def tensors(self) -> list[Tensor]:
        return [self.matrix, self.unk_vector]

    def words(self) -> list[str]:
        return sorted(self.vocab, key=self.vocab.__getitem__)


def lookup(word: str, m: EmbeddingMatrix) -> Tensor:
    """Embedding column for ``word``; the shared unknown vector when out of vocabulary."""
    j = m.vocab.get(word)
    if j is None:
        return m.unk_vector
    return gather_column(m.matrix, j)


def load_embeddings(path: str | os.PathLike, dim: int = 100) -> EmbeddingMatrix:
    """Read ``|V| d`` then one ``word f1 ... fd`` row per word.

    The unknown vector starts at zero; :func:`zpsnn.training.init_params`
    draws it from the initialisation distribution instead.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise CorpusError("header must be '|V| d'", 1, str(path))
        try:
            n, d = int(header[0]), int(header[1])
        except ValueError:
            raise CorpusError(f"malformed header {' '.join(header)!r}", 1, str(path)) from None
        if d != dim:
            raise CorpusError(f"embedding dimension {d} does not match configured {dim}",
                              1, str(path))
        vocab: dict[str, int] = {}
        cols = []
        for lineno, line in enumerate(fh, start=2):
            fields = line.split()
            if not fields:
                continue
            word, values = fields[0], fields[1:]
            if len(values) != d:
                raise CorpusError(f"row for {word!r} has {len(values)} values, expected {d}",
                                  lineno, str(path))
            if word in vocab:
                raise CorpusError(f"duplicate word {word!r}", lineno, str(path))
            try:
                cols.append([float(v) for v in values])
            except ValueError:
                raise CorpusError(f"malformed float in row for {word!r}", lineno,
                                  str(path)) from None
            vocab[word] = len(vocab)
        if len(vocab) != n:
            raise CorpusError(f"header announces {n} words, file has {len(vocab)}", None, str(path))
    matrix = np.array(cols, dtype=np.float64).T if cols else np.zeros((d, 0))
    return EmbeddingMatrix(vocab, matrix, np.zeros(d))


def save_embeddings(m: EmbeddingMatrix, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(m)} {m.dim}\n")
        for word in m.words():
            col = m.matrix.data[:, m.vocab[word]]
            fh.write(word + " " + " ".join(repr(float(v)) for v in col) + "\n")


def corpus_vocabulary(docs: Iterable[Document]) -> list[str]:
    """Sorted set of overt word forms in ``docs``."""
    words = set()
    for doc in docs:
        for sent in doc.sentences:
            words.update(sent.words())
    return sorted(words)
