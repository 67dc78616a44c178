import csv
import io

import pytest

from zpsnn.cli import (EXIT_CHECK, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, ConfigError, RunConfig,
                       main, read_config)
from zpsnn.corpus import parse_conll
from zpsnn.model import checkpoint_bytes, load_checkpoint

SMALL_MODEL = """\
# small widths so the command-line runs stay fast
embedding_dim = 6
zp_hidden = 4
local_hidden = 5, 4, 3
global_hidden = 3
init_range = 0.2
lr = 0.05
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "run.cfg").write_text(SMALL_MODEL + "epochs = 2\nn_docs = 3\n", encoding="utf-8")
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def gen(capsys, workdir, name="train.conll", seed=7, extra=()):
    path = workdir / name
    code, _, _ = run(capsys, "gen-corpus", "--config", workdir / "run.cfg", "--seed", seed,
                     "--corpus", path, *extra)
    assert code == EXIT_OK
    return path


# --------------------------------------------------------------------------
# Config


def test_read_config(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("epochs = 3  # comment\nlocal-hidden = 7,6,5\ncontext_window = inf\n"
                    "windows = 1, 2, inf\nshuffle = no\nlr = 0.5\ncorpus = a.conll\n"
                    "finetune_embeddings = off\n",
                    encoding="utf-8")
    values = read_config(str(path))
    assert values == {"epochs": 3, "local_hidden": (7, 6, 5), "context_window": None,
                      "windows": (1, 2, None), "shuffle": False, "lr": 0.5,
                      "corpus": "a.conll", "finetune_embeddings": False}
    cfg = RunConfig(**values)
    assert cfg.model_config().local_hidden == (7, 6, 5)
    assert cfg.hyperparams().lr == 0.5 and not cfg.hyperparams().finetune_embeddings


@pytest.mark.parametrize("text,message", [
    ("bogus = 1\n", "unknown setting"),
    ("epochs\n", "key = value"),
    ("epochs = many\n", "bad value for epochs"),
])
def test_bad_config_lines(tmp_path, text, message):
    path = tmp_path / "c.cfg"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError, match=message):
        read_config(str(path))


def test_invalid_config_value_exits_2(capsys, workdir):
    (workdir / "bad.cfg").write_text("lr = -1\n", encoding="utf-8")
    code, _, err = run(capsys, "gradcheck", "--config", workdir / "bad.cfg")
    assert code == EXIT_USAGE and "lr" in err


def test_unknown_subcommand_exits_2(capsys):
    code, _, _ = run(capsys, "fly")
    assert code == EXIT_USAGE


# --------------------------------------------------------------------------
# train / eval


def test_missing_corpus_names_path(capsys, workdir):
    missing = workdir / "nowhere.conll"
    code, _, err = run(capsys, "train", "--config", workdir / "run.cfg", "--corpus", missing,
                       "--checkpoint", workdir / "m.ckpt")
    assert code == EXIT_USAGE
    assert str(missing) in err


def test_train_reload_and_rerun(capsys, workdir):
    corpus = gen(capsys, workdir)
    before = corpus.read_bytes()
    outs = []
    for name in ("a.ckpt", "b.ckpt"):
        code, out, _ = run(capsys, "train", "--config", workdir / "run.cfg", "--corpus", corpus,
                           "--checkpoint", workdir / name, "--loss-log", workdir / f"{name}.csv")
        assert code == EXIT_OK and "checkpoint written" in out
        outs.append((workdir / name).read_bytes())
    assert outs[0] == outs[1]
    assert (workdir / "a.ckpt.csv").read_bytes() == (workdir / "b.ckpt.csv").read_bytes()
    assert (workdir / "a.ckpt.csv").read_text().splitlines()[0] == "epoch,mean_loss"
    # reload and save again: identical bytes, so every parameter came back exactly
    params = load_checkpoint(workdir / "a.ckpt")
    assert checkpoint_bytes(params) == outs[0]
    assert corpus.read_bytes() == before


def test_train_writes_loss_log_to_stdout(capsys, workdir):
    corpus = gen(capsys, workdir)
    code, out, _ = run(capsys, "train", "--config", workdir / "run.cfg", "--corpus", corpus,
                       "--checkpoint", workdir / "m.ckpt", "--epochs", 3)
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "epoch,mean_loss"
    assert [line.split(",")[0] for line in lines[1:4]] == ["1", "2", "3"]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_exits_3(capsys, workdir):
    corpus = gen(capsys, workdir)
    code, _, err = run(capsys, "train", "--config", workdir / "run.cfg", "--corpus", corpus,
                       "--checkpoint", workdir / "m.ckpt", "--lr", 1e308)
    assert code == EXIT_NUMERIC and "numeric failure" in err


def _trained(capsys, workdir, mode="off"):
    corpus = workdir / f"{mode}.conll"
    cfg = workdir / f"{mode}.cfg"
    cfg.write_text(SMALL_MODEL + f"n_docs = 3\ndistractor_mode = {mode}\nepochs = 2\n",
                   encoding="utf-8")
    assert main(["gen-corpus", "--config", str(cfg), "--seed", "7", "--corpus", str(corpus)]) == 0
    assert main(["train", "--config", str(cfg), "--corpus", str(corpus),
                 "--checkpoint", str(workdir / "m.ckpt"), "--loss-log",
                 str(workdir / "loss.csv")]) == 0
    capsys.readouterr()
    return cfg, corpus


def test_eval_report_rows_and_label(capsys, workdir):
    cfg, corpus = _trained(capsys, workdir)
    report = workdir / "report.csv"
    code, out, _ = run(capsys, "eval", "--config", cfg, "--eval-corpus", corpus,
                       "--checkpoint", workdir / "m.ckpt", "--report", report,
                       "--ablation", "local_only")
    assert code == EXIT_OK and out.startswith("[local_only] Overall R=")
    rows = list(csv.reader(io.StringIO(report.read_text(encoding="utf-8"))))
    genres = {d.genre for d in parse_conll(corpus)}
    assert len(rows) - 1 == 1 + len(genres)
    assert rows[0] == ["ablation", "source", "R", "P", "F"]
    assert all(r[0] == "local_only" for r in rows[1:])
    assert [r[1] for r in rows[1:]] == ["Overall", "SYN"]


def test_eval_with_other_window_is_allowed(capsys, workdir):
    cfg, corpus = _trained(capsys, workdir)
    code, _, _ = run(capsys, "eval", "--config", cfg, "--eval-corpus", corpus,
                     "--checkpoint", workdir / "m.ckpt", "--window", 2)
    assert code == EXIT_OK


def test_eval_shape_mismatch_exits_2(capsys, workdir):
    cfg, corpus = _trained(capsys, workdir)
    other = workdir / "other.cfg"
    other.write_text(SMALL_MODEL.replace("zp_hidden = 4", "zp_hidden = 5"), encoding="utf-8")
    code, _, err = run(capsys, "eval", "--config", other, "--eval-corpus", corpus,
                       "--checkpoint", workdir / "m.ckpt")
    assert code == EXIT_USAGE and "trained with" in err


def test_eval_corrupt_checkpoint_exits_2(capsys, workdir):
    cfg, corpus = _trained(capsys, workdir)
    ckpt = workdir / "m.ckpt"
    ckpt.write_bytes(ckpt.read_bytes()[:-10])
    code, _, err = run(capsys, "eval", "--config", cfg, "--eval-corpus", corpus,
                       "--checkpoint", ckpt)
    assert code == EXIT_USAGE and "truncated" in err


def test_eval_is_idempotent(capsys, workdir):
    cfg, corpus = _trained(capsys, workdir)
    texts = []
    for name in ("r1.csv", "r2.csv"):
        assert main(["eval", "--config", str(cfg), "--eval-corpus", str(corpus),
                     "--checkpoint", str(workdir / "m.ckpt"), "--report",
                     str(workdir / name)]) == 0
        texts.append((workdir / name).read_bytes())
    assert texts[0] == texts[1]


def test_train_fit_at_least_matches_heldout(capsys, workdir):
    cfg = workdir / "sep.cfg"
    cfg.write_text(SMALL_MODEL + "n_docs = 6\nepochs = 8\n", encoding="utf-8")
    train_c, eval_c = workdir / "tr.conll", workdir / "ev.conll"
    assert main(["gen-corpus", "--config", str(cfg), "--seed", "7", "--corpus", str(train_c)]) == 0
    assert main(["gen-corpus", "--config", str(cfg), "--seed", "8", "--corpus", str(eval_c)]) == 0
    assert main(["train", "--config", str(cfg), "--corpus", str(train_c), "--checkpoint",
                 str(workdir / "m.ckpt"), "--loss-log", str(workdir / "l.csv")]) == 0
    f = {}
    for name, path in (("train", train_c), ("eval", eval_c)):
        report = workdir / f"{name}.csv"
        assert main(["eval", "--config", str(cfg), "--eval-corpus", str(path),
                     "--checkpoint", str(workdir / "m.ckpt"), "--report", str(report)]) == 0
        f[name] = float(report.read_text().splitlines()[1].split(",")[-1])
    capsys.readouterr()
    assert f["train"] >= f["eval"]


# --------------------------------------------------------------------------
# ablate / sweep / gen-corpus


def test_ablate_report(capsys, workdir):
    tr = gen(capsys, workdir, "tr.conll", 1)
    ev = gen(capsys, workdir, "ev.conll", 2)
    code, out, _ = run(capsys, "ablate", "--config", workdir / "run.cfg", "--corpus", tr,
                       "--eval-corpus", ev, "--epochs", 1, "--report", workdir / "t3.csv")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "system,R,P,F"
    assert [line.split(",")[0] for line in lines[1:]] == [
        "Full system", "Global information only", "Local information only"]
    assert (workdir / "t3.csv").read_text(encoding="utf-8") == out


def test_sweep_report(capsys, workdir):
    tr = gen(capsys, workdir, "tr.conll", 1)
    ev = gen(capsys, workdir, "ev.conll", 2)
    code, out, _ = run(capsys, "sweep", "--config", workdir / "run.cfg", "--corpus", tr,
                       "--eval-corpus", ev, "--epochs", 1, "--window", "1,inf")
    assert code == EXIT_OK
    assert [line.split(",")[0] for line in out.splitlines()] == ["window", "1", "inf"]


def test_sweep_needs_eval_corpus(capsys, workdir):
    tr = gen(capsys, workdir, "tr.conll", 1)
    code, _, err = run(capsys, "sweep", "--config", workdir / "run.cfg", "--corpus", tr)
    assert code == EXIT_USAGE and "eval_corpus" in err


def test_gen_corpus_with_embeddings(capsys, workdir):
    cfg = workdir / "g.cfg"
    cfg.write_text(SMALL_MODEL + "n_docs = 2\nsynthetic_embedding_scale = 1.0\n"
                   "distractor_mode = longrange\n", encoding="utf-8")
    emb = workdir / "emb.txt"
    code, out, _ = run(capsys, "gen-corpus", "--config", cfg, "--corpus", workdir / "c.conll",
                       "--embeddings", emb)
    assert code == EXIT_OK and "embeddings" in out
    header = emb.read_text(encoding="utf-8").splitlines()[0].split()
    assert header[1] == "6"
    # the written table is accepted by training
    code, _, _ = run(capsys, "train", "--config", cfg, "--corpus", workdir / "c.conll",
                     "--embeddings", emb, "--checkpoint", workdir / "m.ckpt", "--epochs", 1)
    assert code == EXIT_OK


# --------------------------------------------------------------------------
# gradcheck


def test_gradcheck_passes_and_repeats(capsys):
    first = run(capsys, "gradcheck", "--seed", 0)
    second = run(capsys, "gradcheck", "--seed", 0)
    assert first[0] == EXIT_OK
    assert "max relative error" in first[1]
    assert first[1] == second[1]


def test_gradcheck_corrupted_fails(capsys):
    code, out, _ = run(capsys, "gradcheck", "--seed", 0, "--corrupt-gradient")
    assert code == EXIT_CHECK
    assert "FAILED" in out and "worst:" in out
