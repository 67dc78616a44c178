"""End-to-end gradient check on a small random instance."""

from __future__ import annotations

import numpy as np

from . import nn
from .corpus import corpus_vocabulary
from .model import ModelConfig
from .synthetic import SyntheticSpec, generate_synthetic
from .training import Hyperparams, Instance, build_instances, init_params, instance_loss

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_EPS = 1e-5


def find_instance(k: int = 3, seed: int = 0) -> Instance:
    """First synthetic training instance with exactly ``k`` candidates."""
    for attempt in range(50):
        docs = generate_synthetic(seed + attempt, SyntheticSpec(n_docs=4, sentences_per_doc=8))
        for inst in build_instances(docs, "train"):
            if inst.k == k:
                return inst
    raise LookupError(f"no synthetic instance with {k} candidates")


def gradient_check(seed: int = 0, cfg: ModelConfig | None = None, k: int = 3,
                   init_range: float = 0.2, ablation: str = "full",
                   samples_per_param: int | None = 20, eps: float = GRADCHECK_EPS,
                   grad_hook=None) -> nn.GradCheckResult:
    """Finite-difference check of the training loss through every encoder.

    ``init_range`` is wider than the training default.  Central differences
    at ``eps=1e-5`` carry about 1e-11 of absolute round-off, so an entry whose
    true gradient is near the 1e-8 floor shows a relative error near 1e-3 even
    when backprop is exact.  The zero-pronoun encoder is shared by every
    candidate and its gradients are the smallest; a wider range enlarges them.
    """
    cfg = cfg or ModelConfig()
    inst = find_instance(k, seed)
    hp = Hyperparams(init_range=init_range, seed=seed)
    params = init_params(cfg, hp, seed, corpus_vocabulary([inst.doc]))
    return nn.grad_check_detailed(lambda: instance_loss(params, inst, ablation),
                                  params.tensors(), eps, samples_per_param=samples_per_param,
                                  rng=np.random.default_rng(seed), grad_hook=grad_hook)


def corrupt_first_gradient(grads: dict) -> None:
    """Negative control: scale one analytic gradient so the check must fail."""
    for t, g in grads.items():
        if np.any(g != 0):
            g *= 1.5
            return
