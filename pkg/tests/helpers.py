"""Shared test helpers: tiny model config and hand-written tree fixtures."""

import re

from zpsnn.corpus import loads_conll
from zpsnn.model import ModelConfig

# Small widths keep forward/backward passes cheap in unit tests.
TINY = ModelConfig(embedding_dim=6, zp_hidden=4, local_hidden=(5, 4, 3), global_hidden=3)

# One line per acceptance criterion, printed at the end of the pytest run.
ACCEPTANCE_LINES = []

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def conll_from_trees(doc_id, trees, chains=None):
    """CoNLL text for bracketed trees like ``(TOP (IP (NP (NN x)) (VP (VV y))))``.

    ``chains`` maps ``(sentence, start, end)`` to a chain id.  Written
    independently of the package writer so reading can be tested against it.
    """
    chains = chains or {}
    lines = [f"#begin document ({doc_id}); part 000"]
    for si, text in enumerate(trees):
        toks = _TOKEN.findall(text)
        rows, opens, pos = [], "", 0
        i = 0
        while i < len(toks):
            t = toks[i]
            if t == "(" and toks[i + 2] not in "()" and toks[i + 3] == ")":
                rows.append([toks[i + 2], toks[i + 1], opens + "*"])
                opens = ""
                i += 4
            elif t == "(":
                opens += "(" + toks[i + 1]
                i += 2
            else:
                rows[-1][2] += ")"
                i += 1
        for ti, (form, tag, bit) in enumerate(rows):
            parts = []
            for (s, a, b), cid in sorted(chains.items(), key=lambda kv: (kv[0][1], -kv[0][2])):
                if s != si:
                    continue
                if a == ti and b == ti + 1:
                    parts.append(f"({cid})")
                elif a == ti:
                    parts.append(f"({cid}")
            for (s, a, b), cid in chains.items():
                if s == si and b - a > 1 and b - 1 == ti:
                    parts.append(f"{cid})")
            lines.append(f"{doc_id}\t0\t{ti}\t{form}\t{tag}\t{bit}\t{'|'.join(parts) or '-'}")
        lines.append("")
    lines.append("#end document")
    return "\n".join(lines) + "\n"


def doc_from_trees(trees, chains=None, doc_id="nw/test/00/doc"):
    return loads_conll(conll_from_trees(doc_id, trees, chains))[0]
