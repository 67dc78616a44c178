"""Why the global encoder matters: a corpus where no candidate stands out alone.

In the ``global`` synthetic layout every candidate NP sits in an identical
frame and all but one are distinct nouns from the same pool.  The remaining
candidate is a cue noun, and the antecedent is the candidate right before it.
Only a representation that sees the whole candidate set can find it.

Takes a few minutes on one core.
"""

from zpsnn.model import ModelConfig
from zpsnn.synthetic import SyntheticSpec, generate_synthetic
from zpsnn.training import Hyperparams, ablation_study, sweep_csv

train_docs = generate_synthetic(0, SyntheticSpec(n_docs=50, distractor_mode="global"))
eval_docs = generate_synthetic(1000, SyntheticSpec(n_docs=25, distractor_mode="global"))

# A wider initialisation than the default lets the deep encoders move within
# twenty epochs at this corpus size.
hp = Hyperparams(lr=0.01, init_range=0.1, epochs=20, seed=0)
rows = ablation_study(train_docs, eval_docs, ModelConfig(), hp,
                      ("full", "local_only", "global_only"))
print(sweep_csv(rows, key="system"))

# With seed 0, full reaches 100 while local_only stays near chance (25 here).
for r in rows:
    print(f"{r.setting:<12} final mean loss {r.epoch_losses[-1]:.3f}")
