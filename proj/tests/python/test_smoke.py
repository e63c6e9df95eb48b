"""Smoke tests for the python surface of the extension module."""

import csv
import math
import os

import pytest

import advnlg

TOY_CSV = os.path.join(os.path.dirname(__file__), "..", "fixtures", "toy32.csv")


def test_version_and_tokenizer():
    assert advnlg.__version__
    assert advnlg.tokenize("Wildwood is nice.") == ["wildwood", "is", "nice", "."]
    assert advnlg.detokenize(["hello", ",", "world", "!"]) == "hello, world!"


def test_parse_and_delexicalize_roundtrip():
    mr = "name[Wildwood], food[Indian]"
    parsed = advnlg.parse_mr(mr)
    assert parsed["act"] == "inform"
    assert parsed["slots"] == [("name", "Wildwood"), ("food", "Indian")]

    pair = advnlg.delexicalize(mr, "Wildwood serves Indian food.")
    assert pair["audit"] == []
    restored = advnlg.relexicalize(pair["target_tokens"], pair["substitutions"])
    assert advnlg.tokenize(restored) == advnlg.tokenize("Wildwood serves Indian food.")


def test_gumbel_softmax_limits():
    probs = [0.6, 0.25, 0.1, 0.05]
    flat = advnlg.gumbel_softmax(probs, tau=1e6, seed=3)
    assert all(abs(v - 0.25) < 1e-4 for v in flat)
    sharp = advnlg.gumbel_softmax(probs, tau=1e-6, seed=3)
    assert max(sharp) > 1.0 - 1e-6
    mean = sum(advnlg.sample_gumbel(200000, seed=1)) / 200000
    assert abs(mean - 0.5772156649) < 0.02


def test_bleu_and_significance():
    hyp = [["the", "cat", "sat", "here"]]
    refs = [[["the", "cat", "sat", "here"]]]
    report = advnlg.bleu4(hyp, refs)
    assert math.isclose(report["bleu"], 1.0, abs_tol=1e-12)
    assert advnlg.significance(hyp, hyp, refs, resamples=120, seed=4) == 1.0

    covered, missing, ghosts = advnlg.slot_coverage(
        "Wildwood serves Indian food.", "name[Wildwood], food[Indian]"
    )
    assert (covered, missing, ghosts) == (2, 0, 0)


def test_error_mapping(tmp_path):
    with pytest.raises(advnlg.AdvnlgError):
        advnlg.parse_mr("a[b[c]]")


def test_pipeline_end_to_end(tmp_path):
    prep_dir = str(tmp_path / "prep")
    summary = advnlg.prepare(TOY_CSV, prep_dir, dev_fraction=0.0)
    assert summary["train_pairs"] == 32
    assert summary["audit_lines"] == 0

    overrides = {
        "total_epochs": "4",
        "warmup_epochs": "1",
        "emb_dim": "10",
        "hidden_dim": "14",
        "dropout": "0",
        "batch_size": "8",
        "seed": "11",
        "mode": "advnlg",
    }
    run1 = advnlg.train(prep_dir, str(tmp_path / "run1"), overrides=overrides)
    run2 = advnlg.train(prep_dir, str(tmp_path / "run2"), overrides=overrides)
    assert run1["final_dev_bleu"] == run2["final_dev_bleu"]  # determinism
    assert (tmp_path / "run1" / "best.ckpt").exists()

    mr_file = tmp_path / "inputs.txt"
    lines = []
    with open(TOY_CSV, newline="") as f:
        rows = list(csv.reader(f))[1:3]
        lines = [r[0] for r in rows]
    mr_file.write_text("\n".join(lines) + "\n")

    out_file = str(tmp_path / "preds.tsv")
    n = advnlg.generate(str(tmp_path / "run1" / "best.ckpt"), str(mr_file), out_file,
                        beam=3)
    assert n == 2
    with open(out_file) as f:
        assert len(f.readlines()) == 2

    refs_csv = tmp_path / "refs.csv"
    with open(TOY_CSV, newline="") as f, open(refs_csv, "w", newline="") as out:
        rows = list(csv.reader(f))
        writer = csv.writer(out, quoting=csv.QUOTE_ALL)
        writer.writerow(rows[0])
        writer.writerows(rows[1:3])
    report = advnlg.evaluate(out_file, str(refs_csv))
    assert 0.0 <= report["bleu"] <= 1.0

    inspect = advnlg.inspect_gradients(
        prep_dir,
        str(tmp_path / "inspect.json"),
        draws=8,
        overrides={"emb_dim": "8", "hidden_dim": "10", "batch_size": "4"},
    )
    assert inspect["st_frozen_repeat_variance"] == 0.0
    assert inspect["rl_mean_variance"] > inspect["st_mean_variance"]
