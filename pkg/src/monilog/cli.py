"""Batch entry points for every pipeline stage, composable through files.

Subcommands: gen, replay, parse, calibrate, eval, detect, serve.  Exit code 0
on success, 1 on validation errors (including usage errors), 2 on I/O errors.
The report-producing subcommands (calibrate, eval, detect) also render
figures next to their delimited outputs unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import evaluation, figures
from .detect import (
    DEFAULT_AFTER_TIMEOUT_MS,
    DEFAULT_CONTEXT_LEN,
    DEFAULT_DEDUP_WINDOW,
    DEFAULT_LAG_TOLERANCE,
    DEFAULT_MIN_SAMPLES,
    DEFAULT_MIN_SUPPORT,
    DEFAULT_REPORT_WINDOW,
    DEFAULT_TOP_G,
    DEFAULT_Z_THRESHOLD,
)
from .ingest import NoiseSpec, inject_noise, read_stream, write_stream
from .parsing import (
    ParserParams,
    TemplateMiner,
    parsed_log_from_wire,
    read_templates,
    write_templates,
)
from .pipeline import Pipeline, PipelineConfig
from .preprocess import preprocess_message
from .synthetic import (
    ANOMALY_NONE,
    ANOMALY_QUANTITATIVE,
    ANOMALY_SEQUENTIAL,
    default_corpus_spec,
    generate_synthetic,
    read_ground_truth,
    spec_from_wire,
    write_ground_truth,
)


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    config = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(config, dict):
        raise ValueError("config file must hold a JSON object")
    return config


def _cfg(value, config: dict, section: str, key: str, default):
    if value is not None:
        return value
    return config.get(section, {}).get(key, default)


def _masks(config: dict) -> tuple[tuple[str, str], ...] | None:
    masks = config.get("preprocess", {}).get("masks")
    if not masks:
        return None
    return tuple((str(p), str(r)) for p, r in masks)


def _parser_params(args, config: dict) -> ParserParams:
    return ParserParams(
        tree_depth=int(_cfg(args.depth, config, "parser", "tree_depth", 4)),
        sim_threshold=float(_cfg(args.sim_threshold, config, "parser", "sim_threshold", 0.4)),
        max_children=int(_cfg(getattr(args, "max_children", None), config, "parser", "max_children", 100)),
    )


def _pipeline_config(args, config: dict) -> PipelineConfig:
    return PipelineConfig(
        parser_params=_parser_params(args, config),
        context_len=int(_cfg(args.context_len, config, "detect", "context_len", DEFAULT_CONTEXT_LEN)),
        min_support=int(_cfg(args.min_support, config, "detect", "min_support", DEFAULT_MIN_SUPPORT)),
        top_g=int(_cfg(args.top_g, config, "detect", "top_g", DEFAULT_TOP_G)),
        lag_tolerance=int(_cfg(args.lag_tolerance, config, "detect", "lag_tolerance", DEFAULT_LAG_TOLERANCE)),
        z_threshold=float(_cfg(args.z_threshold, config, "detect", "z_threshold", DEFAULT_Z_THRESHOLD)),
        min_samples=int(_cfg(args.min_samples, config, "detect", "min_samples", DEFAULT_MIN_SAMPLES)),
        report_window=int(_cfg(args.window, config, "detect", "window", DEFAULT_REPORT_WINDOW)),
        after_timeout_ms=int(config.get("detect", {}).get("after_timeout_ms", DEFAULT_AFTER_TIMEOUT_MS)),
        dedup_window=int(_cfg(args.dedup_window, config, "detect", "dedup_window", DEFAULT_DEDUP_WINDOW)),
        online_update=bool(config.get("detect", {}).get("online_update", False)),
        masks=_masks(config),
    )


def _read_records(args, config: dict, path: str):
    fmt = _cfg(getattr(args, "format", None), config, "ingest", "format", "structured")
    source = _cfg(getattr(args, "source", None), config, "ingest", "source", "default")
    records, errors = read_stream(path, fmt=fmt, default_source=source)
    for err in errors:
        print(f"line {err.line_no}: {err.reason}", file=sys.stderr)
    return records


def _read_parsed(path: str):
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(parsed_log_from_wire(json.loads(line)))
    return rows


# -- subcommands ------------------------------------------------------------


def cmd_gen(args, config: dict) -> int:
    injections = []
    if args.seq_rate:
        injections.append((ANOMALY_SEQUENTIAL, args.seq_rate))
    if args.quant_rate:
        injections.append((ANOMALY_QUANTITATIVE, args.quant_rate))
    if args.spec:
        spec = spec_from_wire(
            json.loads(Path(args.spec).read_text(encoding="utf-8")), n_lines=args.n_lines
        )
        if injections:
            spec = replace(spec, anomaly_injections=tuple(injections))
    else:
        spec = default_corpus_spec(args.n_lines or 1000, injections)
    records, truth = generate_synthetic(spec, seed=args.seed)
    write_stream(records, args.output)
    write_ground_truth(truth, args.truth)
    labeled = sum(1 for t in truth if t.anomaly != ANOMALY_NONE)
    print(f"wrote {len(records)} records ({labeled} anomalous) to {args.output}")
    return 0


def cmd_replay(args, config: dict) -> int:
    records = _read_records(args, config, args.input)
    spec = NoiseSpec(
        duplicate_prob=_cfg(args.noise_duplicate, config, "noise", "duplicate_prob", 0.0),
        shuffle_window=int(_cfg(args.noise_shuffle_window, config, "noise", "shuffle_window", 0)),
        shuffle_prob=_cfg(args.noise_shuffle_prob, config, "noise", "shuffle_prob", 0.0),
        twist_prob=_cfg(args.noise_twist, config, "noise", "twist_prob", 0.0),
        seed=args.seed,
    )
    noisy = inject_noise(records, spec)
    write_stream(noisy, args.output)
    print(f"replayed {len(records)} records as {len(noisy)} to {args.output}")
    return 0


def cmd_parse(args, config: dict) -> int:
    inputs = args.input or []
    outputs = args.output or []
    if len(inputs) != len(outputs):
        raise ValueError("--input and --output must be given the same number of times")
    if not inputs:
        raise ValueError("at least one --input/--output pair is required")
    params = _parser_params(args, config)
    masks = _masks(config)
    miner = TemplateMiner(params)
    total = 0
    for in_path, out_path in zip(inputs, outputs):
        records = _read_records(args, config, in_path)
        with open(out_path, "w", encoding="utf-8") as fh:
            for rec in records:
                pre = preprocess_message(rec.message, masks)
                template_id, bindings = miner.parse_tokens(
                    [t.text for t in pre.free_text_tokens]
                )
                row = {
                    "seq_no": rec.seq_no,
                    "ts": rec.to_wire()["ts"],
                    "source": rec.source,
                    "template_id": template_id,
                    "bindings": [text for _, text in bindings],
                    "slots": [pos for pos, _ in bindings],
                    "payload": {k: v for k, v in pre.payload},
                }
                fh.write(json.dumps(row) + "\n")
        total += len(records)
    templates_path = args.templates or str(Path(outputs[0]).with_suffix("")) + ".templates.ndjson"
    write_templates(miner.export_templates(), templates_path)
    print(
        f"parsed {total} records into {miner.template_count} templates "
        f"({templates_path})"
    )
    return 0


def _parse_grid(text: str) -> list[ParserParams]:
    grid = []
    for part in text.split(","):
        depth, _, sim = part.strip().partition(":")
        grid.append(ParserParams(tree_depth=int(depth), sim_threshold=float(sim)))
    return grid


def cmd_calibrate(args, config: dict) -> int:
    records = _read_records(args, config, args.input)
    grid = _parse_grid(args.grid) if args.grid else None
    result = evaluation.calibrate(
        records,
        grid=grid,
        sample_size=args.sample_size or evaluation.DEFAULT_CALIBRATION_SAMPLE_SIZE,
        masks=_masks(config),
    )
    Path(args.output).write_text(json.dumps(result.to_wire(), indent=2), encoding="utf-8")
    if not args.no_figures:
        figures.save_calibration_heatmap(result, Path(args.output).with_suffix(".png"))
    chosen = result.chosen
    print(
        f"chosen: tree_depth={chosen.tree_depth} sim_threshold={chosen.sim_threshold} "
        f"over {len(result.grid_scores)} grid points"
    )
    return 0


def cmd_eval(args, config: dict) -> int:
    records = _read_records(args, config, args.input)
    parsed = _read_parsed(args.parsed)
    templates = read_templates(args.templates)
    truth = read_ground_truth(args.truth)
    if len(parsed) != len(truth) or len(records) != len(truth):
        raise ValueError(
            f"line sets differ: {len(records)} records, {len(parsed)} parsed, "
            f"{len(truth)} truth"
        )
    masks = _masks(config)
    token_lines = [
        [t.text for t in preprocess_message(rec.message, masks).free_text_tokens]
        for rec in records
    ]

    predicted_groups = {row.seq_no: row.template_id for row in parsed}
    truth_groups = {t.line_no: t.template_id for t in truth}
    grouping = evaluation.grouping_accuracy(predicted_groups, truth_groups)

    predicted_labels = []
    truth_labels = []
    for row, truth_line, tokens in zip(parsed, truth, token_lines):
        template = templates[row.template_id]
        predicted_labels.append(
            list(zip(evaluation.template_token_labels(template), template.tokens))
        )
        truth_labels.append(list(zip(truth_line.token_labels, tokens)))
    token_acc = evaluation.token_accuracy(predicted_labels, truth_labels)

    unsup = evaluation.unsupervised_score(
        [(row.template_id, tokens) for row, tokens in zip(parsed, token_lines)],
        templates,
    )

    precision = recall = f1 = None
    if args.anomalies:
        flagged = set()
        for line in Path(args.anomalies).read_text(encoding="utf-8").splitlines():
            if line.strip():
                flagged.add(json.loads(line)["trigger_record"]["seq_no"])
        anomalous = {t.line_no for t in truth if t.anomaly != ANOMALY_NONE}
        counts = evaluation.EvalCounts(
            tp=len(flagged & anomalous),
            fp=len(flagged - anomalous),
            fn=len(anomalous - flagged),
        )
        precision, recall, f1 = evaluation.detection_metrics(counts)

    report = {
        "grouping_accuracy": grouping,
        "token_accuracy": token_acc,
        "unsupervised_score": unsup,
        "unsupervised_score_kind": "homogeneity_x_parsimony",
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "params": {
            "tree_depth": args.depth,
            "sim_threshold": args.sim_threshold,
        }
        if args.depth is not None or args.sim_threshold is not None
        else None,
        "lines": len(truth),
        "templates": len(templates),
    }
    Path(args.output).write_text(json.dumps(report, indent=2), encoding="utf-8")
    if not args.no_figures:
        base = Path(args.output)
        figures.save_metric_bars(report, base.with_suffix(".png"))
        figures.save_template_supports(
            [{"support": t.support} for t in templates.values()],
            base.with_suffix(".supports.png"),
        )
    print(json.dumps({k: report[k] for k in ("grouping_accuracy", "token_accuracy")}))
    return 0


def cmd_detect(args, config: dict) -> int:
    pipeline = Pipeline(_pipeline_config(args, config))
    for parsed in _read_parsed(args.learn):
        pipeline.observe_parsed(parsed)
    reports = []
    for parsed in _read_parsed(args.input):
        reports.extend(pipeline.detect_parsed(parsed))
    reports.extend(pipeline.flush())
    reports.sort(key=lambda r: r.report_id)
    rows = [r.to_wire() for r in reports]
    with open(args.output, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    if not args.no_figures:
        figures.save_anomaly_timeline(rows, Path(args.output).with_suffix(".png"))
    print(f"detected {len(rows)} anomalies -> {args.output}")
    return 0


def cmd_serve(args, config: dict) -> int:
    import uvicorn

    from .service import DATA_DIR_ENV, MonitorService, ServiceConfig, create_app

    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise ValueError(f"--data-dir or the {DATA_DIR_ENV} env var is required")
    service = MonitorService(ServiceConfig(Path(data_dir), _pipeline_config(args, config)))
    if args.learn:
        records = _read_records(args, config, args.learn)
        count = service.learn_records(records)
        print(f"learn phase consumed {count} records", file=sys.stderr)
    port = int(_cfg(args.port, config, "service", "port", 8080))
    uvicorn.run(create_app(service), host=args.host, port=port, log_level="warning")
    return 0


# -- argument wiring ----------------------------------------------------------


def _add_parser_flags(sub) -> None:
    sub.add_argument("--depth", type=int, default=None, help="parse tree depth")
    sub.add_argument("--sim-threshold", type=float, default=None)
    sub.add_argument("--max-children", type=int, default=None)


def _add_detect_flags(sub) -> None:
    sub.add_argument("--context-len", type=int, default=None)
    sub.add_argument("--top-g", type=int, default=None)
    sub.add_argument("--min-support", type=int, default=None)
    sub.add_argument("--lag-tolerance", type=int, default=None)
    sub.add_argument("--dedup-window", type=int, default=None)
    sub.add_argument("--z-threshold", type=float, default=None)
    sub.add_argument("--min-samples", type=int, default=None)
    sub.add_argument("--window", type=int, default=None, help="report context window")


def _add_input_flags(sub) -> None:
    sub.add_argument("--format", choices=("structured", "plain"), default=None)
    sub.add_argument("--source", default=None, help="source tag for plain input")


def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="monilog", description=__doc__)
    parser.add_argument("--config", default=None, help="optional JSON config file")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="generate a synthetic labeled corpus")
    gen.add_argument("--output", required=True)
    gen.add_argument("--truth", required=True)
    gen.add_argument("--n-lines", type=int, default=None)
    gen.add_argument("--spec", default=None, help="corpus spec JSON file")
    gen.add_argument("--seq-rate", type=float, default=0.0)
    gen.add_argument("--quant-rate", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=cmd_gen)

    replay = commands.add_parser("replay", help="replay a stream with noise injected")
    replay.add_argument("--input", required=True)
    replay.add_argument("--output", required=True)
    replay.add_argument("--noise-duplicate", type=float, default=None)
    replay.add_argument("--noise-shuffle-window", type=int, default=None)
    replay.add_argument("--noise-shuffle-prob", type=float, default=None)
    replay.add_argument("--noise-twist", type=float, default=None)
    replay.add_argument("--seed", type=int, default=0)
    _add_input_flags(replay)
    replay.set_defaults(func=cmd_replay)

    parse = commands.add_parser("parse", help="mine templates and structure a stream")
    parse.add_argument("--input", action="append")
    parse.add_argument("--output", action="append")
    parse.add_argument("--templates", default=None)
    _add_parser_flags(parse)
    _add_input_flags(parse)
    parse.set_defaults(func=cmd_parse)

    calibrate = commands.add_parser("calibrate", help="pick parser params on a sample")
    calibrate.add_argument("--input", required=True)
    calibrate.add_argument("--output", required=True)
    calibrate.add_argument("--grid", default=None, help="e.g. 3:0.3,4:0.4")
    calibrate.add_argument("--sample-size", type=int, default=None)
    calibrate.add_argument("--no-figures", action="store_true")
    _add_input_flags(calibrate)
    calibrate.set_defaults(func=cmd_calibrate)

    evalcmd = commands.add_parser("eval", help="score a parse against ground truth")
    evalcmd.add_argument("--input", required=True, help="raw records file")
    evalcmd.add_argument("--parsed", required=True)
    evalcmd.add_argument("--templates", required=True)
    evalcmd.add_argument("--truth", required=True)
    evalcmd.add_argument("--anomalies", default=None)
    evalcmd.add_argument("--output", required=True)
    evalcmd.add_argument("--no-figures", action="store_true")
    evalcmd.add_argument("--depth", type=int, default=None)
    evalcmd.add_argument("--sim-threshold", type=float, default=None)
    _add_input_flags(evalcmd)
    evalcmd.set_defaults(func=cmd_eval)

    detect = commands.add_parser("detect", help="detect anomalies in a parsed stream")
    detect.add_argument("--learn", required=True, help="parsed training stream")
    detect.add_argument("--input", required=True, help="parsed stream to analyze")
    detect.add_argument("--output", required=True)
    detect.add_argument("--no-figures", action="store_true")
    _add_parser_flags(detect)
    _add_detect_flags(detect)
    detect.set_defaults(func=cmd_detect)

    serve = commands.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data-dir", default=None)
    serve.add_argument("--learn", default=None, help="raw records for the learn phase")
    _add_parser_flags(serve)
    _add_detect_flags(serve)
    _add_input_flags(serve)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
