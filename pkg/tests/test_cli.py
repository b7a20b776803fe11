import json
import subprocess
import sys

import numpy as np
import pytest

from charparser.cli import main
from charparser.synthetic import CYRILLIC
from charparser.treebank import load_conllu

TINY = """\
preset = toy
recipe = desk
char_embed_dim = 3
filters = 1:2,2:2,3:2
reader_proj_dim = 4
tagger_hidden = 3
scorer_hidden = 3
labeler_units = 2
epochs = 2
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    main(["synth", "--n", "12", "--seed", "1", "--language", "a", "--output", str(root / "a.conllu")])
    main(["synth", "--n", "12", "--seed", "2", "--language", "b", "--cipher",
          "--output", str(root / "b.conllu")])
    main(["synth", "--n", "5", "--seed", "3", "--language", "a", "--output", str(root / "dev.conllu")])
    (root / "tiny.cfg").write_text(TINY)
    code = main(["train", "--train", f"a={root / 'a.conllu'}", "--train", f"b={root / 'b.conllu'}",
                 "--dev", f"a={root / 'dev.conllu'}", "--share", "reader", "--config",
                 str(root / "tiny.cfg"), "--seed", "3", "--out", str(root / "model"),
                 "--figures", str(root / "fig")])
    assert code == 0
    return root


def test_train_outputs(workspace):
    model = workspace / "model"
    for name in ("manifest.json", "metrics.jsonl", "best.npz", "vocab.tsv", "model.cfg", "model_card.txt"):
        assert (model / name).exists(), name
    assert (workspace / "fig" / "learning_curves.png").stat().st_size > 0
    manifest = json.loads((model / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["command"][1] == "train"
    assert manifest["config"]["train"]["sharing"] == "reader"
    assert manifest["config"]["train"]["weight_decay"] == 1.0
    assert len(manifest["inputs"][0]["sha256"]) == 64
    rec = json.loads((model / "metrics.jsonl").read_text().splitlines()[0])
    assert {"epoch", "language", "UAS", "LAS", "L_h", "L_l", "L_t"} <= set(rec)


def test_train_is_reproducible(workspace, capsys):
    out = workspace / "again"
    code, _, _ = run(capsys, "train", "--train", f"a={workspace / 'a.conllu'}", "--train",
                     f"b={workspace / 'b.conllu'}", "--dev", f"a={workspace / 'dev.conllu'}",
                     "--share", "reader", "--config", workspace / "tiny.cfg", "--seed", 3, "--out", out)
    assert code == 0
    assert (out / "metrics.jsonl").read_text() == (workspace / "model" / "metrics.jsonl").read_text()


def test_missing_train_is_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--out", tmp_path)
    assert code == 2 and "--train" in err


def test_bad_flags_exit_two(tmp_path):
    for argv in (["train", "--train", "nolang", "--out", str(tmp_path)],
                 ["train", "--train", "a=x", "--share", "labeler", "--out", str(tmp_path)],
                 ["bogus"]):
        proc = subprocess.run([sys.executable, "-m", "charparser", *argv], capture_output=True)
        assert proc.returncode == 2, argv


def test_missing_input_is_runtime_failure(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--train", f"a={tmp_path / 'nope.conllu'}", "--out", tmp_path / "m")
    assert code == 1 and "nope.conllu" in err


def test_parse_replaces_heads(workspace, capsys):
    for decoder in ("greedy", "cle"):
        out = workspace / f"parsed_{decoder}.conllu"
        code, _, _ = run(capsys, "parse", "--model", workspace / "model", "--input",
                         workspace / "dev.conllu", "--language", "a", "--decoder", decoder,
                         "--output", out)
        assert code == 0
        gold = load_conllu(workspace / "dev.conllu", "a")
        parsed = load_conllu(out, "a", require_tree=decoder == "cle")
        assert parsed.rejected == 0
        assert [s.forms for s in parsed] == [s.forms for s in gold]
    code, out, _ = run(capsys, "parse", "--model", workspace / "model", "--input",
                       workspace / "dev.conllu", "--language", "a", "--decoder", "cle")
    assert len(out.strip().split("\n\n")) == 5


def test_parse_unknown_language_names_known(workspace, capsys):
    code, _, err = run(capsys, "parse", "--model", workspace / "model", "--input",
                       workspace / "dev.conllu", "--language", "zz")
    assert code == 1 and "a, b" in err


def test_parse_needs_language_for_multilingual_model(workspace, capsys):
    code, _, err = run(capsys, "parse", "--model", workspace / "model", "--input", workspace / "dev.conllu")
    assert code == 2 and "--language" in err


def test_eval_file_against_itself(workspace, capsys):
    code, out, _ = run(capsys, "eval", "--gold", workspace / "dev.conllu", "--system",
                       workspace / "dev.conllu")
    assert code == 0 and out.startswith("UAS 100.00  LAS 100.00")


def test_eval_with_model_jsonl_and_manifest(workspace, capsys):
    manifest = workspace / "eval_manifest.json"
    code, out, _ = run(capsys, "eval", "--gold", workspace / "dev.conllu", "--model",
                       workspace / "model", "--language", "a", "--format", "jsonl",
                       "--manifest", manifest)
    assert code == 0
    lines = [json.loads(x) for x in out.splitlines()]
    assert len(lines) == 6 and "summary" in lines[-1]
    assert json.loads(manifest.read_text())["inputs"][0]["path"].endswith("dev.conllu")


def test_eval_needs_exactly_one_system(workspace, capsys):
    code, _, _ = run(capsys, "eval", "--gold", workspace / "dev.conllu")
    assert code == 2


def test_analyze_analogy_with_offset_embeddings(tmp_path, capsys):
    rng = np.random.default_rng(0)
    offset = rng.normal(size=5)
    latin = "abdegiklmnoprstuvz"
    lines, pairs = [], []
    for c in latin:
        v = rng.normal(size=5)
        lines.append(c + "\t" + " ".join(map(str, v)))
        lines.append(CYRILLIC[c] + "\t" + " ".join(map(str, v + offset)))
        pairs.append(f"{c}\t{CYRILLIC[c]}")
    (tmp_path / "emb.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (tmp_path / "pairs.tsv").write_text("\n".join(pairs) + "\n", encoding="utf-8")
    code, out, _ = run(capsys, "analyze", "analogy", "--embeddings", tmp_path / "emb.tsv",
                       "--pairs", tmp_path / "pairs.tsv", "--figures", tmp_path / "fig")
    assert code == 0 and "100.0%" in out
    assert (tmp_path / "fig" / "analogy_ranks.png").exists()


def test_analyze_analogy_from_model(workspace, capsys, tmp_path):
    (tmp_path / "pairs.tsv").write_text("a\tа\no\tо\nk\tк\n", encoding="utf-8")
    code, out, _ = run(capsys, "analyze", "analogy", "--model", workspace / "model", "--source", "a",
                       "--target", "b", "--pairs", tmp_path / "pairs.tsv", "--format", "jsonl")
    assert code == 0
    assert json.loads(out.splitlines()[-1])["summary"].endswith("/6)")


def test_analyze_neighbors(workspace, capsys):
    code, out, _ = run(capsys, "analyze", "neighbors", "--model", workspace / "model", "--source", "a",
                       "--target", "b", "--target-corpus", workspace / "b.conllu", "-k", 3, "kota", "ten")
    assert code == 0
    rows = out.strip().split("\n")
    assert [r.split("\t")[0] for r in rows] == ["kota", "ten"]
    assert all(len(r.split("\t")[1].split()) == 3 for r in rows)


def test_analyze_pos_errors(workspace, capsys):
    code, out, _ = run(capsys, "analyze", "pos-errors", "--model", workspace / "model", "--input",
                       workspace / "dev.conllu", "--language", "a", "--figures", workspace / "fig")
    assert code == 0 and "P(head wrong | POS wrong)" in out
    assert (workspace / "fig" / "pos_errors.png").exists()


def test_analyze_decoders(workspace, capsys):
    code, out, _ = run(capsys, "analyze", "decoders", "--model", workspace / "model", "--input",
                       workspace / "dev.conllu", "--language", "a", "--figures", workspace / "fig")
    assert code == 0 and "agreement" in out and "cycle rate" in out
    assert (workspace / "fig" / "decoder_deltas.png").exists()
