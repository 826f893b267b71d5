"""The command line veneer: exit codes, output formats, determinism."""

from __future__ import annotations

import json
import random
import string
from pathlib import Path

import pytest

from mteval import cli
from mteval.analysis import EvalMatrix, write_matrix
from mteval.metrics import sp_bleu, word_bleu
from mteval.tokenizer import SubwordModel, load_model, save_model

TRAIN_LINES = [
    "the cat sat on the mat and watched the rain",
    "a dog ran across the field chasing a ball",
    "she opened the window to let in the morning air",
    "the train arrived late because of the storm",
    "children played in the park until the sun went down",
    "he wrote a long letter to his oldest friend",
    "the market sells fresh bread every single morning",
    "mountains rise sharply behind the quiet village",
] * 6


def write_model(tmp_path: Path) -> Path:
    pieces = {"▁" + w: -2.0 for w in ("the", "cat", "dog", "sat", "on", "mat")}
    pieces.update({ch: -6.0 for ch in string.ascii_lowercase})
    pieces["▁"] = -3.0
    path = tmp_path / "model.txt"
    save_model(SubwordModel(pieces), path)
    return path


def write_lines(path: Path, lines: list[str]) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# exit codes


def test_usage_error_exits_2() -> None:
    assert cli.main(["score"]) == 2
    assert cli.main(["no-such-command"]) == 2


def test_domain_error_exits_1_with_json_payload(tmp_path, capsys) -> None:
    hyp = write_lines(tmp_path / "h.txt", ["a"])
    ref = write_lines(tmp_path / "r.txt", ["a"])
    code = cli.main(["score", "--metric", "spbleu", "--hyp", str(hyp), "--ref", str(ref)])
    assert code == 1
    err = capsys.readouterr().err
    payload = json.loads(err.strip())
    assert payload["error"] == "MissingArgument"
    assert "--model" in payload["message"]


# ---------------------------------------------------------------------------
# scoring


def test_score_corpus_tsv_and_json(tmp_path, capsys) -> None:
    model_path = write_model(tmp_path)
    hyps = ["the cat sat on a mat", "the dog sat"]
    refs = ["the cat sat on the mat", "the dog sat"]
    hyp = write_lines(tmp_path / "h.txt", hyps)
    ref = write_lines(tmp_path / "r.txt", refs)
    out_json = tmp_path / "score.json"
    code = cli.main(
        [
            "score",
            "--metric",
            "spbleu",
            "--model",
            str(model_path),
            "--hyp",
            str(hyp),
            "--ref",
            str(ref),
            "--json",
            str(out_json),
        ]
    )
    assert code == 0
    expected = sp_bleu(load_model(model_path), hyps, refs, "corpus")
    line = capsys.readouterr().out.strip()
    assert line == f"spbleu\t{expected.score!r}\t{expected.signature}"
    saved = json.loads(out_json.read_text(encoding="utf-8"))
    assert saved["score"] == expected.score  # repr round-trip, bit for bit
    assert saved["signature"] == expected.signature


def test_score_sentence_level_lines(tmp_path, capsys) -> None:
    hyps = ["the cat sat", "the dog ran far away"]
    refs = ["the cat sat", "the cat sat on the mat"]
    hyp = write_lines(tmp_path / "h.txt", hyps)
    ref = write_lines(tmp_path / "r.txt", refs)
    code = cli.main(
        ["score", "--metric", "bleu", "--hyp", str(hyp), "--ref", str(ref), "--level", "sentence"]
    )
    assert code == 0
    out_lines = capsys.readouterr().out.strip().splitlines()
    assert len(out_lines) == 2
    for index, (h, r) in enumerate(zip(hyps, refs)):
        expected = word_bleu(h, r, "sentence")
        assert out_lines[index] == f"{index}\t{expected.score!r}"
    assert out_lines[0].endswith("\t100.0")


def test_score_sentence_length_mismatch(tmp_path, capsys) -> None:
    hyp = write_lines(tmp_path / "h.txt", ["a", "b"])
    ref = write_lines(tmp_path / "r.txt", ["a"])
    code = cli.main(
        ["score", "--metric", "bleu", "--hyp", str(hyp), "--ref", str(ref), "--level", "sentence"]
    )
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "LengthMismatch"


def test_verbose_prints_resolved_config(tmp_path, capsys) -> None:
    hyp = write_lines(tmp_path / "h.txt", ["a"])
    ref = write_lines(tmp_path / "r.txt", ["a"])
    code = cli.main(
        ["score", "--metric", "chrbleu", "--hyp", str(hyp), "--ref", str(ref), "--verbose"]
    )
    assert code == 0
    err = capsys.readouterr().err
    assert err.startswith("config: ")
    resolved = json.loads(err[len("config: ") :])
    assert resolved["metric"] == "chrbleu"
    assert resolved["level"] == "corpus"


# ---------------------------------------------------------------------------
# tokenizer


def test_tokenizer_train_encode_decode_round_trip(tmp_path, capsys) -> None:
    corpus_path = write_lines(tmp_path / "corpus.txt", TRAIN_LINES)
    model_path = tmp_path / "model.txt"
    code = cli.main(
        [
            "tokenizer",
            "train",
            "--corpus",
            str(corpus_path),
            "--vocab-size",
            "300",
            "--seed",
            "3",
            "--out",
            str(model_path),
        ]
    )
    assert code == 0
    fields = capsys.readouterr().out.strip().split("\t")
    assert fields[0] == str(model_path)
    assert fields[1] == "300"
    assert fields[2] == load_model(model_path).tag()

    probe = ["the cat sat on the mat", "she opened the window"]
    input_path = write_lines(tmp_path / "probe.txt", probe)
    assert (
        cli.main(
            ["tokenizer", "encode", "--model", str(model_path), "--input", str(input_path)]
        )
        == 0
    )
    id_lines = capsys.readouterr().out.strip().splitlines()
    ids_path = write_lines(tmp_path / "ids.txt", id_lines)
    assert (
        cli.main(
            ["tokenizer", "decode", "--model", str(model_path), "--input", str(ids_path)]
        )
        == 0
    )
    assert capsys.readouterr().out.strip().splitlines() == probe


def test_tokenizer_encode_pieces_are_printable(tmp_path, capsys) -> None:
    model_path = write_model(tmp_path)
    input_path = write_lines(tmp_path / "in.txt", ["the cat"])
    code = cli.main(
        ["tokenizer", "encode", "--model", str(model_path), "--input", str(input_path), "--pieces"]
    )
    assert code == 0
    pieces = capsys.readouterr().out.strip().split(" ")
    assert pieces == ["▁the", "▁cat"]


# ---------------------------------------------------------------------------
# workflow


def test_workflow_advance_replay_stats(tmp_path, capsys) -> None:
    log = tmp_path / "events.jsonl"
    steps = [
        (["workflow", "advance", "--log", str(log), "--item", "job-1", "--event", "sourced", "--language", "fra", "--provider", "lsp-2"], "sourced"),
        (["workflow", "advance", "--log", str(log), "--item", "job-1", "--event", "translated"], "translated"),
        (["workflow", "advance", "--log", str(log), "--item", "job-1", "--event", "auto_pass"], "in_human_eval"),
        (["workflow", "advance", "--log", str(log), "--item", "job-1", "--event", "eval_scored", "--score", "93"], "accepted"),
    ]
    for argv, expected_state in steps:
        assert cli.main(argv) == 0
        out = capsys.readouterr().out.strip()
        assert out == f"job-1\t{argv[7]}\t{expected_state}"

    assert cli.main(["workflow", "replay", "--log", str(log)]) == 0
    table = capsys.readouterr().out.strip().splitlines()
    assert table[0] == "item\tlanguage\tprovider\tstate\tround\tre_eval_required\tlast_score"
    assert table[1] == "job-1\tfra\tlsp-2\taccepted\t0\tFalse\t93.0"

    assert cli.main(["workflow", "stats", "--log", str(log)]) == 0
    keys, values = capsys.readouterr().out.strip().splitlines()
    report = dict(zip(keys.split("\t"), values.split("\t")))
    assert report["n_items"] == "1"
    assert report["n_accepted"] == "1"


def test_workflow_advance_rejects_illegal_without_logging(tmp_path, capsys) -> None:
    log = tmp_path / "events.jsonl"
    assert cli.main(["workflow", "advance", "--log", str(log), "--item", "j", "--event", "sourced"]) == 0
    capsys.readouterr()
    code = cli.main(["workflow", "advance", "--log", str(log), "--item", "j", "--event", "eval_scored", "--score", "95"])
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "IllegalTransition"
    # the rejected event must not have been appended
    assert len(log.read_text(encoding="utf-8").splitlines()) == 1
    code = cli.main(["workflow", "advance", "--log", str(log), "--item", "ghost", "--event", "translated"])
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "MalformedEventLog"


# ---------------------------------------------------------------------------
# qa


def test_qa_run_report_and_flags(tmp_path, capsys) -> None:
    model_path = write_model(tmp_path)
    src = write_lines(tmp_path / "src.txt", ["source one", "source two"])
    hyps = ["the cat sat on the mat", "the dog sat on the mat"]
    hyp = write_lines(tmp_path / "hyp.txt", hyps)
    engine_a = write_lines(tmp_path / "a.txt", hyps)  # verbatim engine copy
    engine_b = write_lines(tmp_path / "b.txt", ["unrelated words here", "more unrelated text"])
    flags_tsv = tmp_path / "flags.tsv"
    code = cli.main(
        [
            "qa",
            "run",
            "--src",
            str(src),
            "--hyp",
            str(hyp),
            "--engine-a",
            str(engine_a),
            "--engine-b",
            str(engine_b),
            "--model",
            str(model_path),
            "--flags-tsv",
            str(flags_tsv),
        ]
    )
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["verdict"] == "retranslate"
    assert report["flagged_fraction"] == 1.0
    assert report["n_sentences"] == 2
    rows = flags_tsv.read_text(encoding="utf-8").splitlines()
    assert rows[0] == "line\tlangid_fail\tsource_copy\tlength_outlier\tdisfluent\tengine_copy\tx_vs_a\tx_vs_b"
    first = rows[1].split("\t")
    assert first[5] == "True"  # engine_copy
    assert first[6] == "100.0"  # x_vs_a


def test_qa_run_threshold_overrides(tmp_path, capsys) -> None:
    model_path = write_model(tmp_path)
    src = write_lines(tmp_path / "src.txt", ["source one"])
    hyp = write_lines(tmp_path / "hyp.txt", ["the cat sat"])
    engine_a = write_lines(tmp_path / "a.txt", ["the cat sat"])
    code = cli.main(
        [
            "qa",
            "run",
            "--src",
            str(src),
            "--hyp",
            str(hyp),
            "--engine-a",
            str(engine_a),
            "--model",
            str(model_path),
            "--copy-threshold",
            "100",
        ]
    )
    assert code == 0
    # identity scores exactly 100, the rule is strict, so nothing fires
    assert json.loads(capsys.readouterr().out)["verdict"] == "pass"


def test_qa_run_engine_requires_model(tmp_path, capsys) -> None:
    src = write_lines(tmp_path / "src.txt", ["s"])
    hyp = write_lines(tmp_path / "hyp.txt", ["h"])
    engine_a = write_lines(tmp_path / "a.txt", ["h"])
    code = cli.main(
        ["qa", "run", "--src", str(src), "--hyp", str(hyp), "--engine-a", str(engine_a)]
    )
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "MissingArgument"


# ---------------------------------------------------------------------------
# analysis


def planted_matrix_file(path: Path, n_blocks: int = 4, block_size: int = 4) -> None:
    rng = random.Random(9)
    langs = tuple(f"l{i:02d}" for i in range(n_blocks * block_size))
    scores = {}
    for i, src in enumerate(langs):
        for j, tgt in enumerate(langs):
            if src == tgt:
                continue
            base = 30.0 if i // block_size == j // block_size else 4.0
            scores[(src, tgt)] = base + rng.uniform(-1.5, 1.5)
    write_matrix(EvalMatrix(languages=langs, scores=scores), path)


def test_analyze_cluster_defaults_and_determinism(tmp_path, capsys) -> None:
    matrix_path = tmp_path / "m.tsv"
    planted_matrix_file(matrix_path)
    argv = ["analyze", "cluster", "--matrix", str(matrix_path), "--k", "4"]
    assert cli.main(argv) == 0
    out = capsys.readouterr().out.strip()
    clusters_path = tmp_path / "m.clusters.tsv"
    svg_path = tmp_path / "m.heatmap.svg"
    assert out == f"{clusters_path}\t{svg_path}"
    first_clusters = clusters_path.read_bytes()
    first_svg = svg_path.read_bytes()
    rows = first_clusters.decode("utf-8").splitlines()
    assert rows[0] == "language\tcluster"
    assert len(rows) == 17
    labels = [int(r.split("\t")[1]) for r in rows[1:]]
    assert labels == sorted(labels)  # cluster-contiguous order
    assert first_svg.decode("utf-8").startswith("<svg")

    clusters_path.unlink()
    svg_path.unlink()
    assert cli.main(argv) == 0
    capsys.readouterr()
    assert clusters_path.read_bytes() == first_clusters
    assert svg_path.read_bytes() == first_svg


def test_analyze_matrix_thread_count_invariant(tmp_path, capsys) -> None:
    model_path = write_model(tmp_path)
    root = tmp_path / "corpus" / "devtest"
    root.mkdir(parents=True)
    write_lines(root / "aaa.devtest", ["the cat sat", "the dog sat"])
    write_lines(root / "bbb.devtest", ["the mat sat", "the cat ran"])
    hyp_dir = tmp_path / "hyps"
    hyp_dir.mkdir()
    write_lines(hyp_dir / "aaa-bbb.txt", ["the mat sat", "the dog ran"])
    write_lines(hyp_dir / "bbb-aaa.txt", ["the cat sat", "the dog sat"])
    outputs = []
    for threads in ("1", "4"):
        out_path = tmp_path / f"matrix-{threads}.tsv"
        code = cli.main(
            [
                "analyze",
                "matrix",
                "--corpus-root",
                str(tmp_path / "corpus"),
                "--languages",
                "aaa,bbb",
                "--hyp-dir",
                str(hyp_dir),
                "--model",
                str(model_path),
                "--out",
                str(out_path),
                "--threads",
                threads,
            ]
        )
        assert code == 0
        assert capsys.readouterr().out.strip().endswith("2 directions")
        outputs.append(out_path.read_bytes())
    assert outputs[0] == outputs[1]
    text = outputs[0].decode("utf-8")
    assert "100.0" in text  # bbb->aaa hypothesis equals the reference


def test_analyze_pivot_output(tmp_path, capsys) -> None:
    langs = ("piv", "aaa", "bbb")
    direct = {
        (s, t): 20.0 for s in langs for t in langs if s != t
    }
    routed = dict(direct)
    direct[("aaa", "bbb")] = 30.0
    write_matrix(EvalMatrix(langs, direct), tmp_path / "direct.tsv")
    write_matrix(EvalMatrix(langs, routed), tmp_path / "routed.tsv")
    delta_path = tmp_path / "delta.tsv"
    code = cli.main(
        [
            "analyze",
            "pivot",
            "--direct",
            str(tmp_path / "direct.tsv"),
            "--via-pivot",
            str(tmp_path / "routed.tsv"),
            "--pivot",
            "piv",
            "--out-delta",
            str(delta_path),
        ]
    )
    assert code == 0
    header, values = capsys.readouterr().out.strip().splitlines()
    assert header == "n_compared\tn_direct_wins\tfraction_direct_wins"
    assert values == "2\t1\t0.5"
    assert delta_path.exists()


def test_analyze_bins_table(tmp_path, capsys) -> None:
    langs = ("aaa", "bbb")
    write_matrix(
        EvalMatrix(langs, {("aaa", "bbb"): 10.0, ("bbb", "aaa"): 30.0}),
        tmp_path / "m.tsv",
    )
    write_lines(
        tmp_path / "meta.tsv",
        [
            "code\tfamily\tbitext_with_english\tmono_sentences",
            "aaa\tgermanic\t50000\t0",
            "bbb\tromance\t5000000\t0",
        ],
    )
    code = cli.main(
        ["analyze", "bins", "--matrix", str(tmp_path / "m.tsv"), "--meta", str(tmp_path / "meta.tsv")]
    )
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "\tvery_low\tmedium\tavg"
    assert lines[1] == "very_low\t\t10.00\t10.00"
    assert lines[2] == "medium\t30.00\t\t30.00"
    assert lines[3] == "avg\t30.00\t10.00\t20.00"


def test_analyze_length_and_domain(tmp_path, capsys) -> None:
    model_path = write_model(tmp_path)
    root = tmp_path / "corpus" / "devtest"
    root.mkdir(parents=True)
    write_lines(root / "eng.devtest", ["one two", " ".join(["w"] * 30)])
    write_lines(root / "fra.devtest", ["the cat sat", "the dog ran"])
    hyp = write_lines(tmp_path / "hyp.txt", ["the cat sat", "dog the ran"])
    code = cli.main(
        [
            "analyze",
            "length",
            "--corpus-root",
            str(tmp_path / "corpus"),
            "--pivot",
            "eng",
            "--target",
            "fra",
            "--hyp",
            str(hyp),
            "--model",
            str(model_path),
        ]
    )
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "bucket\tn\tscore\tsignature"
    assert lines[1].startswith("short\t1\t100.0\t")
    assert lines[2] == "medium\t0\t\t"
    assert lines[3].startswith("long\t1\t")

    meta_rows = [
        "\t".join(("split", "line", "article_id", "domain", "topic", "url", "has_links", "has_image")),
        "devtest\t0\tart-1\twikinews\tpolitics\tu\t0\t0",
        "devtest\t1\tart-2\twikivoyage\ttravel\tu\t0\t0",
    ]
    write_lines(tmp_path / "corpus" / "metadata.tsv", meta_rows)
    code = cli.main(
        [
            "analyze",
            "domain",
            "--corpus-root",
            str(tmp_path / "corpus"),
            "--target",
            "fra",
            "--hyp",
            str(hyp),
            "--model",
            str(model_path),
        ]
    )
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[1].startswith("wikinews\t1\t100.0\t")
    assert lines[2].startswith("wikivoyage\t1\t")


def test_stats_json(tmp_path, capsys) -> None:
    root = tmp_path / "corpus" / "dev"
    root.mkdir(parents=True)
    write_lines(root / "eng.dev", ["one two three", "four five"])
    code = cli.main(
        [
            "stats",
            "--corpus-root",
            str(tmp_path / "corpus"),
            "--languages",
            "eng",
            "--splits",
            "dev",
            "--metadata",
            "none",
        ]
    )
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["total_sentences"] == 2
    assert report["split_counts"] == {"dev": 2}
    assert report["avg_words_per_sentence"] == 2.5
    assert report["domain_counts"] == {}
