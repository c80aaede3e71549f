"""Command-line behavior: precedence, plumbing, output formats, exit codes."""
import json
import re

import pytest

from dkge.checkpoint import load_checkpoint
from dkge.cli import main, parse_config_file
from dkge.errors import ConfigError

from graphs import TOY_T1, TOY_T2, write_snapshot_dir

FAST_FLAGS = ["--d", "8", "--lr", "0.01", "--batch", "8", "--margin", "2",
              "--max-epochs", "4"]


@pytest.fixture()
def dirs(tmp_path):
    old = tmp_path / "t1"
    new = tmp_path / "t2"
    write_snapshot_dir(old, TOY_T1)
    write_snapshot_dir(new, TOY_T2, test=[("e1", "r1", "e5"), ("e6", "r5", "e3")])
    return tmp_path, old, new


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# -- config handling ----------------------------------------------------------

def test_config_file_parsing(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("dim = 16\nlearning-rate = 0.02  # inline comment\n\n# full line\nmargin=4\n")
    cfg = parse_config_file(p)
    assert cfg == {"dim": 16, "learning_rate": 0.02, "margin": 4.0}


def test_config_file_unknown_key(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("dimension = 16\n")
    with pytest.raises(ConfigError):
        parse_config_file(p)


def test_config_file_bad_value(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("dim = banana\n")
    with pytest.raises(ConfigError):
        parse_config_file(p)


def test_flag_overrides_file_overrides_default(dirs, capsys):
    tmp, old, _ = dirs
    cfg = tmp / "run.cfg"
    cfg.write_text("dim = 16\nmargin = 4\nmax_epochs = 2\nbatch_size = 8\n"
                   "learning_rate = 0.01\n")
    code, out, _ = run(capsys, "train", str(old), str(tmp / "m.pkl"),
                       "--config", str(cfg), "--d", "20")
    assert code == 0
    header = out.splitlines()[0]
    assert header.startswith("config: ")
    assert "dim=20" in header        # flag beats file
    assert "margin=4.0" in header    # file beats default
    assert "batch_size=8" in header
    assert load_checkpoint(tmp / "m.pkl").dim == 20


def test_env_var_names_default_config(dirs, capsys, monkeypatch):
    tmp, old, _ = dirs
    cfg = tmp / "env.cfg"
    cfg.write_text("dim = 12\nmax_epochs = 2\nbatch_size = 8\nmargin = 2\n"
                   "learning_rate = 0.01\n")
    monkeypatch.setenv("DKGE_CONFIG", str(cfg))
    code, out, _ = run(capsys, "train", str(old), str(tmp / "m.pkl"))
    assert code == 0
    assert "dim=12" in out.splitlines()[0]


# -- train --------------------------------------------------------------------

def test_train_writes_checkpoint_and_report(dirs, capsys):
    tmp, old, _ = dirs
    out_path = tmp / "m.pkl"
    code, out, _ = run(capsys, "train", str(old), str(out_path), *FAST_FLAGS)
    assert code == 0
    store = load_checkpoint(out_path)
    assert store.dim == 8
    report = json.loads((tmp / "m.pkl.report.json").read_text())
    assert report["mode"] == "scratch"
    assert report["epochs_run"] == 4
    assert len(report["epoch_losses"]) == 4
    assert "saved checkpoint" in out


def test_train_missing_dir_names_path(tmp_path, capsys):
    code, _, err = run(capsys, "train", str(tmp_path / "nope"),
                       str(tmp_path / "m.pkl"), *FAST_FLAGS)
    assert code == 1
    assert "train.txt" in err
    assert "nope" in err


def test_train_progress_goes_to_log_file(dirs, capsys):
    tmp, old, _ = dirs
    log = tmp / "run.log"
    code, out, _ = run(capsys, "train", str(old), str(tmp / "m.pkl"),
                       "--log-file", str(log), *FAST_FLAGS)
    assert code == 0
    assert "epoch=" not in out
    lines = log.read_text().splitlines()
    assert len(lines) == 4
    assert all(line.startswith("epoch=") for line in lines)


# -- update -------------------------------------------------------------------

def test_update_round_trip(dirs, capsys):
    tmp, old, new = dirs
    run(capsys, "train", str(old), str(tmp / "m1.pkl"), *FAST_FLAGS)
    code, out, _ = run(capsys, "update", str(old), str(new),
                       str(tmp / "m1.pkl"), str(tmp / "m2.pkl"), *FAST_FLAGS)
    assert code == 0
    assert "retrained_triples=8" in out
    report = json.loads((tmp / "m2.pkl.report.json").read_text())
    assert report["mode"] == "online"
    assert report["retrained_triples"] == 8
    assert report["updated_parameters"] == 64
    assert report["frozen_parameters"] > 0
    store = load_checkpoint(tmp / "m2.pkl")
    assert "e7" in store.entity_names


def test_update_mismatched_checkpoint_fails(dirs, capsys):
    tmp, old, new = dirs
    run(capsys, "train", str(old), str(tmp / "m1.pkl"), *FAST_FLAGS)
    code, _, err = run(capsys, "update", str(new), str(new),
                       str(tmp / "m1.pkl"), str(tmp / "m2.pkl"), *FAST_FLAGS)
    assert code == 1
    assert "error:" in err


# -- eval ---------------------------------------------------------------------

def test_eval_prints_metrics_block(dirs, capsys):
    tmp, old, new = dirs
    run(capsys, "train", str(old), str(tmp / "m1.pkl"), *FAST_FLAGS)
    run(capsys, "update", str(old), str(new), str(tmp / "m1.pkl"),
        str(tmp / "m2.pkl"), *FAST_FLAGS)
    code, out, _ = run(capsys, "eval", str(new), str(tmp / "m2.pkl"),
                       "--report-file", str(tmp / "metrics.json"))
    assert code == 0
    block = [l for l in out.splitlines() if l.startswith("mr=")]
    assert len(block) == 1
    assert re.match(r"^mr=\d+\.\d{4} mrr=\d\.\d{4} hits1=\d\.\d{4} "
                    r"hits3=\d\.\d{4} hits10=\d\.\d{4} queries=4 skipped=0$",
                    block[0])
    metrics = json.loads((tmp / "metrics.json").read_text())
    assert metrics["queries"] == 4


def test_eval_requires_test_file(dirs, capsys):
    tmp, old, _ = dirs
    run(capsys, "train", str(old), str(tmp / "m1.pkl"), *FAST_FLAGS)
    code, _, err = run(capsys, "eval", str(old), str(tmp / "m1.pkl"))
    assert code == 1
    assert "test.txt" in err


def test_eval_filter_all_mode(dirs, capsys):
    tmp, old, new = dirs
    run(capsys, "train", str(old), str(tmp / "m1.pkl"), *FAST_FLAGS)
    run(capsys, "update", str(old), str(new), str(tmp / "m1.pkl"),
        str(tmp / "m2.pkl"), *FAST_FLAGS)
    code, out, _ = run(capsys, "eval", str(new), str(tmp / "m2.pkl"),
                       "--filter-mode", "all")
    assert code == 0
    assert any(l.startswith("mr=") for l in out.splitlines())


# -- answer -------------------------------------------------------------------

def test_answer_prints_ranked_lines(dirs, capsys):
    tmp, old, _ = dirs
    run(capsys, "train", str(old), str(tmp / "m1.pkl"), *FAST_FLAGS)
    code, out, _ = run(capsys, "answer", str(old), str(tmp / "m1.pkl"),
                       "e1", "r1", "-k", "3")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 3
    for rank, line in enumerate(lines, start=1):
        m = re.match(r"^(\d+) (\S+) (\d+\.\d{6})$", line)
        assert m, line
        assert int(m.group(1)) == rank
    scores = [float(l.split()[2]) for l in lines]
    assert scores == sorted(scores)


def test_answer_unknown_entity(dirs, capsys):
    tmp, old, _ = dirs
    run(capsys, "train", str(old), str(tmp / "m1.pkl"), *FAST_FLAGS)
    code, _, err = run(capsys, "answer", str(old), str(tmp / "m1.pkl"),
                       "ghost", "r1")
    assert code == 1
    assert "ghost" in err


# -- diff ---------------------------------------------------------------------

def test_diff_toy_output(dirs, capsys):
    _, old, new = dirs
    code, out, _ = run(capsys, "diff", str(old), str(new))
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == ("added_triples=2 deleted_triples=0 emerging_entities=1 "
                        "emerging_relations=1 removed_entities=0 "
                        "removed_relations=0 changed_context=4 retrain_triples=8")
    assert "emerging entity e7" in lines
    assert "emerging relation r7" in lines
    assert "changed entity e1" in lines
    assert "changed relation r5" in lines
    assert "retrain e6 r5 e3" in lines


def test_diff_identical_dirs(dirs, capsys):
    _, old, _ = dirs
    code, out, _ = run(capsys, "diff", str(old), str(old))
    assert code == 0
    assert out.splitlines()[0] == (
        "added_triples=0 deleted_triples=0 emerging_entities=0 "
        "emerging_relations=0 removed_entities=0 removed_relations=0 "
        "changed_context=0 retrain_triples=0")


# -- determinism --------------------------------------------------------------

def test_cli_runs_are_reproducible(dirs, capsys):
    tmp, old, new = dirs
    run(capsys, "train", str(old), str(tmp / "a1.pkl"), *FAST_FLAGS)
    run(capsys, "train", str(old), str(tmp / "b1.pkl"), *FAST_FLAGS)
    assert (tmp / "a1.pkl").read_bytes() == (tmp / "b1.pkl").read_bytes()
    run(capsys, "update", str(old), str(new), str(tmp / "a1.pkl"),
        str(tmp / "a2.pkl"), *FAST_FLAGS)
    run(capsys, "update", str(old), str(new), str(tmp / "b1.pkl"),
        str(tmp / "b2.pkl"), *FAST_FLAGS)
    assert (tmp / "a2.pkl").read_bytes() == (tmp / "b2.pkl").read_bytes()
    ra = json.loads((tmp / "a2.pkl.report.json").read_text())
    rb = json.loads((tmp / "b2.pkl.report.json").read_text())
    ra.pop("seconds"), rb.pop("seconds")
    assert ra == rb
