"""Command-line entry point: ``zpsnn {train,eval,ablate,sweep,gradcheck,gen-corpus}``.

Settings come from an optional flat ``key = value`` config file (``#``
comments allowed) and are overridden by flags.  Exit codes: 0 success,
1 check failure, 2 usage or config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace

from .checks import GRADCHECK_EPS, GRADCHECK_TOLERANCE, corrupt_first_gradient, gradient_check
from .corpus import CorpusError, corpus_vocabulary, load_embeddings, parse_conll, save_conll, \
    save_embeddings
from .model import ABLATIONS, CheckpointError, ModelConfig, load_checkpoint, save_checkpoint
from .synthetic import DISTRACTOR_MODES, SyntheticSpec, generate_synthetic, synthetic_embeddings
from .training import Hyperparams, NonFiniteLoss, ablation_study, build_instances, \
    evaluate_instances, parse_window, sweep_csv, train, window_label, window_sweep

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

ABLATION_ROWS = {"full": "Full system", "global_only": "Global information only",
                 "local_only": "Local information only"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    corpus: str | None = None
    eval_corpus: str | None = None
    embeddings: str | None = None
    checkpoint: str | None = None
    report: str | None = None
    loss_log: str | None = None
    # model
    embedding_dim: int = 100
    zp_hidden: int = 100
    local_hidden: tuple[int, ...] = (300, 200, 100)
    global_hidden: int = 100
    context_window: int | None = None
    zp_combine: str = "concat"
    # training
    lr: float = 0.01
    init_range: float = 0.01
    epochs: int = 10
    seed: int = 0
    shuffle: bool = True
    finetune_embeddings: bool = True
    # experiment
    ablation: str = "full"
    windows: tuple[int | None, ...] = (1, 2, 4, 8, None)
    # synthetic corpus
    n_docs: int = 20
    sentences_per_doc: int = 12
    vocab_size: int = 60
    distractor_mode: str = "off"
    synthetic_embedding_scale: float = 0.0

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.embedding_dim, self.zp_hidden, self.local_hidden,
                           self.global_hidden, self.context_window, zp_combine=self.zp_combine)

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(self.lr, self.init_range, self.epochs, self.seed, self.shuffle,
                           self.finetune_embeddings)

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(self.n_docs, self.sentences_per_doc, self.vocab_size,
                             self.distractor_mode)

    def validate(self) -> None:
        try:
            self.model_config()
            self.hyperparams()
            self.synthetic_spec()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {', '.join(ABLATIONS)}")

    def require(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"missing required setting '{name}'")
            if not os.path.exists(value):
                raise ConfigError(f"{name}: no such file: {value}")


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    try:
        if name in ("local_hidden",):
            return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
        if name == "windows":
            return tuple(parse_window(x) for x in raw.replace(" ", "").split(",") if x)
        if name == "context_window":
            return parse_window(raw)
        if name in ("shuffle", "finetune_embeddings"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        kind = {f.name: f.type for f in fields(RunConfig)}[name]
        if kind in ("int",):
            return int(raw)
        if kind in ("float",):
            return float(raw)
        return raw or None
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def read_config(path: str) -> dict:
    known = {f.name for f in fields(RunConfig)}
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown setting '{key}'")
            out[key] = _parse_value(key, value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = read_config(args.config) if args.config else {}
    flag_map = {"seed": "seed", "corpus": "corpus", "eval_corpus": "eval_corpus",
                "embeddings": "embeddings", "checkpoint": "checkpoint", "report": "report",
                "ablation": "ablation", "epochs": "epochs", "lr": "lr", "loss_log": "loss_log"}
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if getattr(args, "window", None) is not None:
        parsed = _parse_value("windows", args.window)
        values["windows"] = parsed
        if len(parsed) == 1:
            values["context_window"] = parsed[0]
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _write(path: str | None, text: str) -> None:
    if path is None:
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _pretrained(cfg: RunConfig, words=None):
    if cfg.embeddings:
        return load_embeddings(cfg.embeddings, cfg.embedding_dim)
    return None


# --------------------------------------------------------------------------
# Subcommands


def cmd_train(cfg: RunConfig) -> int:
    cfg.require("corpus")
    if cfg.embeddings:
        cfg.require("embeddings")
    if cfg.checkpoint is None:
        raise ConfigError("missing required setting 'checkpoint' (output path)")
    docs = parse_conll(cfg.corpus)
    instances = build_instances(docs, "train")
    if not instances:
        raise ConfigError(f"{cfg.corpus}: no usable training instances")
    result = train(instances, cfg.model_config(), cfg.hyperparams(),
                   pretrained=_pretrained(cfg), vocab=corpus_vocabulary(docs),
                   ablation=cfg.ablation)
    save_checkpoint(result.params, cfg.checkpoint)
    log_text = result.loss_csv()
    if cfg.loss_log:
        _write(cfg.loss_log, log_text)
    else:
        sys.stdout.write(log_text)
    print(f"checkpoint written to {cfg.checkpoint}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    cfg.require("checkpoint")
    corpus = cfg.eval_corpus or cfg.corpus
    if corpus is None:
        raise ConfigError("missing required setting 'eval_corpus'")
    cfg.require("eval_corpus" if cfg.eval_corpus else "corpus")
    params = load_checkpoint(cfg.checkpoint)
    wanted = cfg.model_config()
    if replace(wanted, context_window=params.config.context_window) != params.config:
        raise ConfigError(f"checkpoint {cfg.checkpoint} was trained with {params.config}, "
                          f"config asks for {wanted}")
    params = replace(params, config=wanted)
    metrics = evaluate_instances(params, build_instances(parse_conll(corpus), "eval"),
                                 cfg.ablation)
    report = metrics.report_csv()
    _write(cfg.report, report)
    print(f"[{cfg.ablation}] Overall R={100 * metrics.recall:.1f} P={100 * metrics.precision:.1f} "
          f"F={100 * metrics.f_score:.1f}")
    return EXIT_OK


def _train_eval_corpora(cfg: RunConfig):
    cfg.require("corpus", "eval_corpus")
    if cfg.embeddings:
        cfg.require("embeddings")
    return parse_conll(cfg.corpus), parse_conll(cfg.eval_corpus)


def cmd_ablate(cfg: RunConfig) -> int:
    tr, ev = _train_eval_corpora(cfg)
    rows = ablation_study(tr, ev, cfg.model_config(), cfg.hyperparams(),
                          ("full", "global_only", "local_only"), _pretrained(cfg))
    for r in rows:
        r.setting = ABLATION_ROWS[r.setting]
    text = sweep_csv(rows, key="system")
    _write(cfg.report, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    tr, ev = _train_eval_corpora(cfg)
    rows = window_sweep(tr, ev, cfg.model_config(), cfg.hyperparams(), cfg.windows,
                        _pretrained(cfg))
    text = sweep_csv(rows, key="window")
    _write(cfg.report, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, corrupt: bool = False) -> int:
    result = gradient_check(cfg.seed, cfg.model_config(),
                            grad_hook=corrupt_first_gradient if corrupt else None)
    print(f"checked {result.n_checked} entries, eps={GRADCHECK_EPS:g}: "
          f"max relative error {result.max_rel_error:.3e} "
          f"(worst: {result.worst_param} {result.worst_index})")
    if result.max_rel_error < GRADCHECK_TOLERANCE:
        return EXIT_OK
    print(f"gradient check FAILED: {result.worst_param} exceeds {GRADCHECK_TOLERANCE:g}")
    return EXIT_CHECK


def cmd_gen_corpus(cfg: RunConfig) -> int:
    if cfg.corpus is None:
        raise ConfigError("missing required setting 'corpus' (output path)")
    docs = generate_synthetic(cfg.seed, cfg.synthetic_spec())
    save_conll(docs, cfg.corpus)
    n_azp = sum(len(d.anaphoric_zero_pronouns()) for d in docs)
    print(f"wrote {len(docs)} documents ({n_azp} anaphoric zero pronouns) to {cfg.corpus}")
    if cfg.embeddings and cfg.synthetic_embedding_scale > 0:
        emb = synthetic_embeddings(corpus_vocabulary(docs), cfg.embedding_dim, cfg.seed,
                                   cfg.synthetic_embedding_scale)
        save_embeddings(emb, cfg.embeddings)
        print(f"wrote {len(emb)} embeddings to {cfg.embeddings}")
    return EXIT_OK


HELP = {"train": "train a model and write a checkpoint plus a per-epoch loss log",
        "eval": "evaluate a checkpoint and write an R/P/F report (overall and per genre)",
        "ablate": "retrain with full, global-only and local-only representations",
        "sweep": "retrain once per context window and report F for each",
        "gradcheck": "compare backprop gradients with finite differences",
        "gen-corpus": "write a synthetic CoNLL corpus (and optionally embeddings)"}

COMMANDS = {"train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "sweep": cmd_sweep,
            "gradcheck": cmd_gradcheck, "gen-corpus": cmd_gen_corpus}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zpsnn", description="Anaphoric zero pronoun resolution with a "
        "zero-pronoun-specific neural network.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--corpus")
        p.add_argument("--eval-corpus", dest="eval_corpus")
        p.add_argument("--embeddings")
        p.add_argument("--checkpoint")
        p.add_argument("--report")
        p.add_argument("--loss-log", dest="loss_log")
        p.add_argument("--window", help="context window, e.g. 2 or inf; comma list for sweep")
        p.add_argument("--ablation", choices=ABLATIONS)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        if name == "gradcheck":
            p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, corrupt=args.corrupt_gradient)
        return COMMANDS[args.command](cfg)
    except (ConfigError, CorpusError, CheckpointError) as e:
        print(f"zpsnn {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLoss, FloatingPointError) as e:
        print(f"zpsnn {args.command}: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
