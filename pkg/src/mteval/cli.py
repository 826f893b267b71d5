"""Single entry point for the whole toolkit.

Every subcommand is deterministic given its flags and seeds, writes
tabular output as TSV and structured output as JSON, and pins line
endings to LF so outputs diff cleanly across platforms.  Domain errors
exit 1 with a machine-readable JSON object on stderr; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analysis, corpus, figures, metrics, qa, tokenizer, workflow
from .errors import DomainError


class MissingArgument(DomainError):
    pass


def _read_lines(path: str) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def _write_text(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _write_json(path: str, payload: object) -> None:
    _write_text(path, json.dumps(payload, ensure_ascii=False, indent=2) + "\n")


def _score_tsv(label: str, result: metrics.BleuScore) -> str:
    return f"{label}\t{result.score!r}\t{result.signature}"


# ---------------------------------------------------------------------------
# tokenizer


def cmd_tokenizer_train(args: argparse.Namespace) -> int:
    corpora = [_read_lines(path) for path in args.corpus]
    plan = tokenizer.temperature_resample(
        [len(c) for c in corpora], args.temperature
    )
    model = tokenizer.train_unigram(
        corpora, plan, args.vocab_size, args.seed, sample_budget=args.budget
    )
    tokenizer.save_model(model, args.out)
    print(f"{args.out}\t{model.vocab_size}\t{model.tag()}")
    return 0


def _input_lines(args: argparse.Namespace) -> list[str]:
    if args.input:
        return _read_lines(args.input)
    return sys.stdin.read().splitlines()


def cmd_tokenizer_encode(args: argparse.Namespace) -> int:
    model = tokenizer.load_model(args.model)
    for line in _input_lines(args):
        ids = tokenizer.encode(model, line)
        if args.pieces:
            print(" ".join(tokenizer.id_to_piece(model, i) for i in ids))
        else:
            print(" ".join(str(i) for i in ids))
    return 0


def cmd_tokenizer_decode(args: argparse.Namespace) -> int:
    model = tokenizer.load_model(args.model)
    for line in _input_lines(args):
        ids = [int(field) for field in line.split()]
        print(tokenizer.decode(model, ids))
    return 0


# ---------------------------------------------------------------------------
# scoring


def cmd_score(args: argparse.Namespace) -> int:
    hyp_lines = _read_lines(args.hyp)
    ref_lines = _read_lines(args.ref)
    model = None
    if args.metric == "spbleu":
        if not args.model:
            raise MissingArgument("--metric spbleu requires --model")
        model = tokenizer.load_model(args.model)

    def one(hyp: str | list, ref: str | list, level: str) -> metrics.BleuScore:
        if args.metric == "spbleu":
            return metrics.sp_bleu(model, hyp, ref, level)
        if args.metric == "chrbleu":
            return metrics.char_bleu(hyp, ref, level)
        return metrics.word_bleu(hyp, ref, level)

    if args.level == "corpus":
        result = one(hyp_lines, ref_lines, "corpus")
        print(_score_tsv(args.metric, result))
        if args.json:
            _write_json(args.json, result.as_dict())
    else:
        if len(hyp_lines) != len(ref_lines):
            raise metrics.LengthMismatch(
                f"{len(hyp_lines)} hypothesis lines, {len(ref_lines)} references"
            )
        rows = [
            one(h, r, "sentence") for h, r in zip(hyp_lines, ref_lines)
        ]
        for index, result in enumerate(rows):
            print(f"{index}\t{result.score!r}")
        if args.json:
            _write_json(
                args.json,
                {"level": "sentence", "scores": [r.as_dict() for r in rows]},
            )
    return 0


# ---------------------------------------------------------------------------
# qa


def cmd_qa_run(args: argparse.Namespace) -> int:
    source_lines = _read_lines(args.src)
    hyp_lines = _read_lines(args.hyp)
    engine_a = _read_lines(args.engine_a) if args.engine_a else None
    engine_b = _read_lines(args.engine_b) if args.engine_b else None
    model = tokenizer.load_model(args.model) if args.model else None
    if engine_a is not None and model is None:
        raise MissingArgument("engine outputs need --model for spBLEU")
    lm = qa.train_char_lm(_read_lines(args.lm_ref)) if args.lm_ref else None
    profiles = None
    if args.profile:
        training = {}
        for spec_pair in args.profile:
            code, _, path = spec_pair.partition("=")
            if not path:
                raise MissingArgument(f"--profile wants CODE=FILE, got {spec_pair!r}")
            training[code] = _read_lines(path)
        profiles = qa.build_profiles(training)
    overrides = {}
    if args.copy_threshold is not None:
        overrides["copy_threshold"] = args.copy_threshold
    if args.margin_threshold is not None:
        overrides["margin_threshold"] = args.margin_threshold
    if args.gate_fraction is not None:
        overrides["corpus_gate_fraction"] = args.gate_fraction
    cfg = qa.CheckConfig(**overrides)
    report = qa.run_checks(
        source_lines,
        hyp_lines,
        engine_a_lines=engine_a,
        engine_b_lines=engine_b,
        model=model,
        cfg=cfg,
        lm=lm,
        profiles=profiles,
        expected_language=args.expect_lang,
        symmetric=not args.one_direction,
    )
    print(json.dumps(report.as_dict(), ensure_ascii=False))
    if args.flags_tsv:
        header = [
            "line",
            "langid_fail",
            "source_copy",
            "length_outlier",
            "disfluent",
            "engine_copy",
            "x_vs_a",
            "x_vs_b",
        ]
        lines = ["\t".join(header)]
        for index, flags in enumerate(report.flags):
            row = flags.as_row()
            lines.append(
                "\t".join(
                    [str(index)]
                    + [
                        "" if row[key] is None else str(row[key])
                        for key in header[1:]
                    ]
                )
            )
        _write_text(args.flags_tsv, "\n".join(lines) + "\n")
    if args.report:
        _write_json(args.report, report.as_dict())
    return 0


# ---------------------------------------------------------------------------
# workflow


def _items_tsv(items: dict[str, workflow.WorkItem]) -> str:
    header = "item\tlanguage\tprovider\tstate\tround\tre_eval_required\tlast_score"
    lines = [header]
    for name in sorted(items):
        item = items[name]
        last = item.score_history[-1] if item.score_history else ""
        lines.append(
            f"{name}\t{item.language}\t{item.provider}\t{item.state}"
            f"\t{item.round}\t{item.re_eval_required}\t{last}"
        )
    return "\n".join(lines) + "\n"


def cmd_workflow_replay(args: argparse.Namespace) -> int:
    items = workflow.replay_log(args.log)
    output = _items_tsv(items)
    if args.out:
        _write_text(args.out, output)
    else:
        print(output, end="")
    return 0


def cmd_workflow_stats(args: argparse.Namespace) -> int:
    items = workflow.replay_log(args.log)
    report = workflow.workflow_stats(list(items.values())).as_dict()
    keys = list(report)
    print("\t".join(keys))
    print("\t".join(repr(report[k]) if isinstance(report[k], float) else str(report[k]) for k in keys))
    return 0


def cmd_workflow_advance(args: argparse.Namespace) -> int:
    items = workflow.replay_log(args.log) if Path(args.log).exists() else {}
    payload: dict = {}
    if args.event == "sourced":
        if args.item in items:
            raise workflow.MalformedEventLog(f"item {args.item!r} already sourced")
        payload = {"language": args.language or args.item}
        if args.provider:
            payload["provider"] = args.provider
        state_after = "sourced"
    else:
        if args.item not in items:
            raise workflow.MalformedEventLog(f"item {args.item!r} not in log")
        if args.score is not None:
            payload["score"] = args.score
        advanced = workflow.advance(items[args.item], args.event, score=args.score)
        state_after = advanced.state
    workflow.append_event(args.log, args.item, args.event, payload=payload)
    print(f"{args.item}\t{args.event}\t{state_after}")
    return 0


# ---------------------------------------------------------------------------
# analysis


def cmd_analyze_matrix(args: argparse.Namespace) -> int:
    languages = args.languages.split(",")
    loaded = corpus.load_corpus(
        args.corpus_root, languages, splits=[args.split], metadata=None
    )
    model = tokenizer.load_model(args.model)
    hyp_dir = Path(args.hyp_dir)
    directions: dict[tuple[str, str], list[str]] = {}
    for src in languages:
        for tgt in languages:
            if src == tgt:
                continue
            path = hyp_dir / f"{src}-{tgt}.txt"
            if path.exists():
                directions[(src, tgt)] = _read_lines(str(path))
    if not directions:
        raise analysis.UnknownDirection(f"no {{src}}-{{tgt}}.txt files in {hyp_dir}")

    def score_one(pair: tuple[tuple[str, str], list[str]]):
        (src, tgt), hyp_lines = pair
        single = analysis.evaluate_matrix(loaded, {(src, tgt): hyp_lines}, model)
        return (src, tgt), single.scores[(src, tgt)]

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        scored = dict(pool.map(score_one, sorted(directions.items())))
    matrix = analysis.EvalMatrix(languages=tuple(languages), scores=scored)
    analysis.write_matrix(matrix, args.out)
    print(f"{args.out}\t{len(scored)} directions")
    return 0


def cmd_analyze_cluster(args: argparse.Namespace) -> int:
    matrix = analysis.read_matrix(args.matrix)
    result = analysis.spectral_cluster(matrix, k=args.k, seed=args.seed)
    stem = Path(args.matrix)
    assignment_path = args.out_assignment or str(
        stem.with_suffix(".clusters.tsv")
    )
    svg_path = args.out_svg or str(stem.with_suffix(".heatmap.svg"))
    lines = ["language\tcluster"]
    for lang in result.order:
        lines.append(f"{lang}\t{result.assignment[lang]}")
    _write_text(assignment_path, "\n".join(lines) + "\n")
    order = list(result.order)
    values = [
        [result.reordered.get(src, tgt) if src != tgt else None for tgt in order]
        for src in order
    ]
    _write_text(
        svg_path,
        figures.svg_heatmap(order, order, values, title="clustered directions"),
    )
    print(f"{assignment_path}\t{svg_path}")
    return 0


def _grouped_tsv(table: analysis.GroupedTable) -> str:
    def fmt(value: float | None) -> str:
        return "" if value is None else f"{value:.2f}"

    lines = ["\t" + "\t".join(table.groups) + "\tavg"]
    for g in table.groups:
        cells = [fmt(table.cells[(g, h)]) for h in table.groups]
        lines.append(g + "\t" + "\t".join(cells) + "\t" + fmt(table.row_avg[g]))
    lines.append(
        "avg\t"
        + "\t".join(fmt(table.col_avg[h]) for h in table.groups)
        + "\t"
        + fmt(table.overall)
    )
    return "\n".join(lines) + "\n"


def _cmd_grouped(args: argparse.Namespace, grouping: str) -> int:
    matrix = analysis.read_matrix(args.matrix)
    meta = analysis.read_language_meta(args.meta)
    table = analysis.group_average(matrix, meta, axis_grouping=grouping)
    output = _grouped_tsv(table)
    if args.out:
        _write_text(args.out, output)
    else:
        print(output, end="")
    return 0


def cmd_analyze_bins(args: argparse.Namespace) -> int:
    return _cmd_grouped(args, "resource_bin")


def cmd_analyze_family(args: argparse.Namespace) -> int:
    return _cmd_grouped(args, "family")


def _breakdown_tsv(rows: list[tuple[str, int, metrics.BleuScore | None]]) -> str:
    lines = ["bucket\tn\tscore\tsignature"]
    for name, count, score in rows:
        if score is None:
            lines.append(f"{name}\t{count}\t\t")
        else:
            lines.append(f"{name}\t{count}\t{score.score!r}\t{score.signature}")
    return "\n".join(lines) + "\n"


def cmd_analyze_length(args: argparse.Namespace) -> int:
    languages = sorted({args.pivot, args.target})
    loaded = corpus.load_corpus(
        args.corpus_root, languages, splits=[args.split], metadata=None
    )
    model = tokenizer.load_model(args.model)
    low, _, high = args.boundaries.partition(",")
    rows = analysis.length_breakdown(
        loaded,
        args.pivot,
        args.target,
        _read_lines(args.hyp),
        model,
        boundaries=(int(low), int(high)),
    )
    print(_breakdown_tsv(rows), end="")
    return 0


def cmd_analyze_domain(args: argparse.Namespace) -> int:
    loaded = corpus.load_corpus(
        args.corpus_root, [args.target], splits=[args.split], metadata="auto"
    )
    model = tokenizer.load_model(args.model)
    rows = analysis.domain_breakdown(
        loaded, args.target, _read_lines(args.hyp), model
    )
    print(_breakdown_tsv(rows), end="")
    return 0


def cmd_analyze_pivot(args: argparse.Namespace) -> int:
    direct = analysis.read_matrix(args.direct)
    via = analysis.read_matrix(args.via_pivot)
    comparison = analysis.pivot_compare(direct, via, args.pivot)
    print("n_compared\tn_direct_wins\tfraction_direct_wins")
    print(
        f"{comparison.n_compared}\t{comparison.n_direct_wins}"
        f"\t{comparison.fraction_direct_wins!r}"
    )
    if args.out_delta:
        analysis.write_matrix(comparison.delta, args.out_delta)
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    languages = args.languages.split(",")
    metadata: str | None = args.metadata
    if metadata == "none":
        metadata = None
    loaded = corpus.load_corpus(
        args.corpus_root,
        languages,
        splits=args.splits.split(","),
        metadata=metadata,
    )
    report = corpus.corpus_stats(loaded, args.pivot or languages[0])
    print(json.dumps(report.as_dict(), ensure_ascii=False, indent=2))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(args.references, args.model, args.data)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--verbose", action="store_true", help="print the resolved configuration"
    )

    parser = argparse.ArgumentParser(
        prog="mteval",
        description="multilingual translation evaluation and QA toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tok = sub.add_parser("tokenizer", help="subword model operations")
    tok_sub = tok.add_subparsers(dest="tok_command", required=True)
    train = tok_sub.add_parser("train", parents=[common])
    train.add_argument("--corpus", action="append", required=True)
    train.add_argument("--vocab-size", type=int, required=True)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--temperature", type=float, default=tokenizer.DEFAULT_TEMPERATURE)
    train.add_argument("--budget", type=int, default=10000)
    train.add_argument("--out", required=True)
    train.set_defaults(func=cmd_tokenizer_train)
    encode = tok_sub.add_parser("encode", parents=[common])
    encode.add_argument("--model", required=True)
    encode.add_argument("--input")
    encode.add_argument("--pieces", action="store_true")
    encode.set_defaults(func=cmd_tokenizer_encode)
    decode = tok_sub.add_parser("decode", parents=[common])
    decode.add_argument("--model", required=True)
    decode.add_argument("--input")
    decode.set_defaults(func=cmd_tokenizer_decode)

    score = sub.add_parser("score", parents=[common], help="BLEU-family scoring")
    score.add_argument(
        "--metric", choices=("bleu", "spbleu", "chrbleu"), default="spbleu"
    )
    score.add_argument("--hyp", required=True)
    score.add_argument("--ref", required=True)
    score.add_argument("--model")
    score.add_argument("--level", choices=("corpus", "sentence"), default="corpus")
    score.add_argument("--json", help="write the full report to this path")
    score.set_defaults(func=cmd_score)

    qa_cmd = sub.add_parser("qa", help="automatic translation checks")
    qa_sub = qa_cmd.add_subparsers(dest="qa_command", required=True)
    run = qa_sub.add_parser("run", parents=[common])
    run.add_argument("--src", required=True)
    run.add_argument("--hyp", required=True)
    run.add_argument("--engine-a")
    run.add_argument("--engine-b")
    run.add_argument("--model")
    run.add_argument("--lm-ref")
    run.add_argument("--profile", action="append", metavar="CODE=FILE")
    run.add_argument("--expect-lang")
    run.add_argument("--copy-threshold", type=float)
    run.add_argument("--margin-threshold", type=float)
    run.add_argument("--gate-fraction", type=float)
    run.add_argument("--one-direction", action="store_true")
    run.add_argument("--flags-tsv")
    run.add_argument("--report")
    run.set_defaults(func=cmd_qa_run)

    wf = sub.add_parser("workflow", help="translation workflow event log")
    wf_sub = wf.add_subparsers(dest="wf_command", required=True)
    replay = wf_sub.add_parser("replay", parents=[common])
    replay.add_argument("--log", required=True)
    replay.add_argument("--out")
    replay.set_defaults(func=cmd_workflow_replay)
    stats_cmd = wf_sub.add_parser("stats", parents=[common])
    stats_cmd.add_argument("--log", required=True)
    stats_cmd.set_defaults(func=cmd_workflow_stats)
    adv = wf_sub.add_parser("advance", parents=[common])
    adv.add_argument("--log", required=True)
    adv.add_argument("--item", required=True)
    adv.add_argument(
        "--event", required=True, choices=("sourced",) + workflow.EVENTS
    )
    adv.add_argument("--score", type=float)
    adv.add_argument("--language")
    adv.add_argument("--provider")
    adv.set_defaults(func=cmd_workflow_advance)

    analyze = sub.add_parser("analyze", help="direction matrices and aggregates")
    an_sub = analyze.add_subparsers(dest="an_command", required=True)
    matrix = an_sub.add_parser("matrix", parents=[common])
    matrix.add_argument("--corpus-root", required=True)
    matrix.add_argument("--languages", required=True)
    matrix.add_argument("--split", default="devtest")
    matrix.add_argument("--hyp-dir", required=True)
    matrix.add_argument("--model", required=True)
    matrix.add_argument("--out", required=True)
    matrix.add_argument("--threads", type=int, default=os.cpu_count())
    matrix.set_defaults(func=cmd_analyze_matrix)
    cluster = an_sub.add_parser("cluster", parents=[common])
    cluster.add_argument("--matrix", required=True)
    cluster.add_argument("--k", type=int, default=8)
    cluster.add_argument("--seed", type=int, default=0)
    cluster.add_argument("--out-assignment")
    cluster.add_argument("--out-svg")
    cluster.set_defaults(func=cmd_analyze_cluster)
    bins = an_sub.add_parser("bins", parents=[common])
    bins.add_argument("--matrix", required=True)
    bins.add_argument("--meta", required=True)
    bins.add_argument("--out")
    bins.set_defaults(func=cmd_analyze_bins)
    family = an_sub.add_parser("family", parents=[common])
    family.add_argument("--matrix", required=True)
    family.add_argument("--meta", required=True)
    family.add_argument("--out")
    family.set_defaults(func=cmd_analyze_family)
    length = an_sub.add_parser("length", parents=[common])
    length.add_argument("--corpus-root", required=True)
    length.add_argument("--split", default="devtest")
    length.add_argument("--pivot", required=True)
    length.add_argument("--target", required=True)
    length.add_argument("--hyp", required=True)
    length.add_argument("--model", required=True)
    length.add_argument("--boundaries", default="15,25")
    length.set_defaults(func=cmd_analyze_length)
    domain = an_sub.add_parser("domain", parents=[common])
    domain.add_argument("--corpus-root", required=True)
    domain.add_argument("--split", default="devtest")
    domain.add_argument("--target", required=True)
    domain.add_argument("--hyp", required=True)
    domain.add_argument("--model", required=True)
    domain.set_defaults(func=cmd_analyze_domain)
    pivot = an_sub.add_parser("pivot", parents=[common])
    pivot.add_argument("--direct", required=True)
    pivot.add_argument("--via-pivot", required=True)
    pivot.add_argument("--pivot", required=True)
    pivot.add_argument("--out-delta")
    pivot.set_defaults(func=cmd_analyze_pivot)

    stats = sub.add_parser("stats", parents=[common], help="corpus statistics")
    stats.add_argument("--corpus-root", required=True)
    stats.add_argument("--languages", required=True)
    stats.add_argument("--splits", default="dev,devtest")
    stats.add_argument("--pivot")
    stats.add_argument(
        "--metadata",
        default="auto",
        help='"auto", "none", or an explicit metadata.tsv path',
    )
    stats.set_defaults(func=cmd_stats)

    serve = sub.add_parser("serve", parents=[common], help="hidden-reference server")
    serve.add_argument("--references", required=True)
    serve.add_argument("--model", required=True)
    serve.add_argument("--data", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "verbose", False):
        resolved = {
            key: value
            for key, value in sorted(vars(args).items())
            if key != "func"
        }
        print(
            "config: " + json.dumps(resolved, ensure_ascii=False, default=str),
            file=sys.stderr,
        )
    try:
        return args.func(args)
    except DomainError as exc:
        print(json.dumps(exc.payload(), ensure_ascii=False), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
