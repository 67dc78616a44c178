"""Walk one hand-written document through candidate extraction and scoring.

Run with ``python demos/resolve_one_document.py``.  The model is untrained,
so the interesting part is the plumbing, not the prediction.
"""

import numpy as np

from zpsnn.candidates import FEATURE_NAMES, candidate_features, extract_candidates, label
from zpsnn.corpus import corpus_vocabulary, loads_conll
from zpsnn.model import ModelConfig, ModelParams, resolve

# Two sentences in CoNLL-2012 columns: doc id, part, token index, word, POS,
# parse bit, coreference.  The second sentence opens with a dropped subject.
CONLL = """\
#begin document (nw/demo/00/books); part 000
nw/demo/00/books\t0\t0\t张三\tNR\t(TOP(IP(NP-SBJ*)\t(3)
nw/demo/00/books\t0\t1\t说\tVV\t(VP*\t-
nw/demo/00/books\t0\t2\t他\tPN\t(IP(NP-SBJ*)\t(3)
nw/demo/00/books\t0\t3\t买\tVV\t(VP*\t-
nw/demo/00/books\t0\t4\t了\tAS\t*\t-
nw/demo/00/books\t0\t5\t一些\tCD\t(NP-OBJ(NP*\t(5
nw/demo/00/books\t0\t6\t书\tNN\t*)\t-
nw/demo/00/books\t0\t7\t和\tCC\t*\t-
nw/demo/00/books\t0\t8\t一个\tCD\t(NP*\t-
nw/demo/00/books\t0\t9\t书包\tNN\t*)))))\t5)
nw/demo/00/books\t0\t10\t。\tPU\t*))\t-

nw/demo/00/books\t0\t0\t*pro*\t-NONE-\t(TOP(IP(NP-SBJ*)\t(3)
nw/demo/00/books\t0\t1\t很\tAD\t(VP(ADVP*)\t-
nw/demo/00/books\t0\t2\t喜欢\tVV\t(VP*\t-
nw/demo/00/books\t0\t3\t它们\tPN\t(NP*)))\t(5)
nw/demo/00/books\t0\t4\t。\tPU\t*))\t-

#end document
"""

doc, = loads_conll(CONLL)
zp, = doc.anaphoric_zero_pronouns()
print(f"zero pronoun in sentence {zp.sentence_idx} at token {zp.gap_index}, chain {zp.chain_id}")

# Candidates: NPs from this sentence and the two before it, in textual order.
cands = extract_candidates(zp, doc)
feats = candidate_features(zp, cands, doc)
for c, v in zip(cands, feats):
    words = "".join(t.form for t in doc.sentences[c.sentence_idx].tokens[c.start:c.end])
    on = [n for n, x in zip(FEATURE_NAMES, v) if x == 1]
    print(f"  {words:<12} gold={label(zp, c)}  flags={on}")

# A randomly initialised model still yields a proper distribution.
cfg = ModelConfig(embedding_dim=16, zp_hidden=8, local_hidden=(24, 16, 8), global_hidden=8)
params = ModelParams.create(cfg, corpus_vocabulary([doc]), np.random.default_rng(0), 0.1)
for ablation in ("full", "local_only", "global_only"):
    res = resolve(zp, cands, doc, params, ablation, feats)
    print(f"{ablation:<12} probs={np.round(res.probs.data, 4)}  predicted={res.predicted}")
