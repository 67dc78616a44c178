"""Sweep the number of context words fed to the zero-pronoun encoder.

On the ``longrange`` layout the verb that tells the two candidates apart sits
three words after the gap, so a window of one word cannot see it.
"""

from zpsnn.model import ModelConfig
from zpsnn.synthetic import SyntheticSpec, generate_synthetic
from zpsnn.training import Hyperparams, sweep_csv, window_sweep

train_docs = generate_synthetic(0, SyntheticSpec(n_docs=50, distractor_mode="longrange"))
eval_docs = generate_synthetic(1000, SyntheticSpec(n_docs=25, distractor_mode="longrange"))
hp = Hyperparams(lr=0.01, init_range=0.1, epochs=20, seed=0)

rows = window_sweep(train_docs, eval_docs, ModelConfig(), hp, [1, 2, 4, None])
print(sweep_csv(rows, key="window"))

# The zero-pronoun vector is added to every candidate's score input alike, so
# on its own it cannot reorder candidates; any gap between rows comes from how
# the shared weights train.
