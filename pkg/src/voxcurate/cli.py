"""Command-line interface: scan, score, curate, sweep, eval, synthgen, serve.

Machine output goes to files or stdout; diagnostics go to stderr. Exit
codes: 0 ok, 1 validation or format error, 2 I/O error, 3 pipeline-stage
error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, corpus, curate, dsp, metrics, scoring, synth
from .errors import FormatError, PipelineStageError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_STAGE = 3


def _err(message: str) -> None:
    print(f"voxcurate: {message}", file=sys.stderr)


def load_any_manifest(path: str | Path) -> list[corpus.UtteranceRecord]:
    """Read a manifest in either supported format (sniffed from the first line)."""
    path = Path(path)
    try:
        head = path.read_bytes()[:64].decode("utf-8", errors="replace")
    except FileNotFoundError:
        raise
    if head.startswith("#"):
        return corpus.read_manifest(path)
    result = corpus.load_cv_manifest(path)
    if result.skipped_rows:
        _err(f"skipped {result.skipped_rows} incomplete manifest rows")
    return result.records


def _attach_speaker_means(records: list[corpus.UtteranceRecord]) -> list[corpus.UtteranceRecord]:
    stats = curate.speaker_stats(records)
    return [
        replace(
            r,
            speaker_score=(
                stats[r.speaker_id][0] if stats.get(r.speaker_id) is not None else None
            ),
        )
        for r in records
    ]


def cmd_scan(args: argparse.Namespace) -> int:
    records = load_any_manifest(args.manifest)
    result = curate.scan_records(
        records,
        args.audio_root,
        trim_threshold_dbfs=args.trim_threshold,
        trim_frame_ms=args.frame_ms,
        jobs=args.jobs,
    )
    if result.dropped_empty:
        _err(
            f"dropped {len(result.dropped_empty)} fully-silent records: "
            + ", ".join(result.dropped_empty[:10])
        )
    n = corpus.write_manifest(result.records, args.out)
    _err(f"wrote {len(result.records)} records ({n} bytes) to {args.out}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    records = load_any_manifest(args.manifest)
    external = None
    if args.source == "external":
        if not args.scores:
            raise ValidationError("--source external needs --scores FILE")
        external = scoring.load_external_scores(args.scores)
    result = curate.score_records(
        records,
        source=args.source,
        audio_root=args.audio_root,
        external_scores=external,
        jobs=args.jobs,
    )
    if result.missing:
        raise ValidationError(
            f"{len(result.missing)} records have no external score: "
            + ", ".join(result.missing[:50])
        )
    scored = _attach_speaker_means(result.records)
    n = corpus.write_manifest(scored, args.out)
    _err(f"wrote {len(scored)} scored records ({n} bytes) to {args.out}")
    if args.diagnostics:
        Path(args.diagnostics).write_text(
            scoring.diagnostics_tsv(result.scores), encoding="utf-8"
        )
        _err(f"wrote diagnostics to {args.diagnostics}")
    return EXIT_OK


def _config_from_args(args: argparse.Namespace) -> curate.CurationConfig:
    values: dict[str, object] = {}
    if getattr(args, "config", None):
        values.update(curate.load_config_file(args.config))
    overrides = {
        "score_threshold": args.threshold,
        "threshold_level": args.level,
        "max_speaker_duration_s": args.max_speaker_s,
        "max_utterance_duration_s": args.max_utterance_s,
        "lid_min_prob": args.lid_min_prob,
        "max_cer": args.max_cer,
        "rng_seed": args.seed,
        "score_source": args.source,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if args.all:
        values["min_speaker_duration_s"] = None
    elif args.min_speaker_s is not None:
        values["min_speaker_duration_s"] = args.min_speaker_s
    config = curate.CurationConfig(**values)  # type: ignore[arg-type]
    config.validate()
    return config


def _load_external_for(args: argparse.Namespace):
    if getattr(args, "scores", None):
        return scoring.load_external_scores(args.scores)
    return None


def cmd_curate(args: argparse.Namespace) -> int:
    records = load_any_manifest(args.manifest)
    config = _config_from_args(args)
    curated, report = curate.run_pipeline(
        records,
        config,
        audio_root=args.audio_root,
        external_scores=_load_external_for(args),
        jobs=args.jobs,
    )
    n = corpus.write_manifest(curated, args.out)
    _err(f"wrote {len(curated)} curated records ({n} bytes) to {args.out}")
    if args.report:
        Path(args.report).write_text(report.to_tsv(), encoding="utf-8")
        _err(f"wrote report to {args.report}")
    _err(report.summary_text())
    return EXIT_OK


def _parse_thresholds(text: str) -> list[float | None]:
    out: list[float | None] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if part.lower() in ("none", "baseline"):
            out.append(None)
        else:
            out.append(float(part))
    if not out:
        raise ValidationError("empty threshold list")
    return out


def cmd_sweep(args: argparse.Namespace) -> int:
    records = load_any_manifest(args.manifest)
    config = _config_from_args(args)
    thresholds = (
        _parse_thresholds(args.thresholds)
        if args.thresholds
        else list(curate.DEFAULT_THRESHOLDS)
    )
    rows = curate.threshold_sweep(
        records,
        config,
        thresholds=thresholds,
        audio_root=args.audio_root,
        external_scores=_load_external_for(args),
        jobs=args.jobs,
    )
    print(curate.sweep_table(rows))
    if args.report:
        Path(args.report).write_text(curate.sweep_tsv(rows), encoding="utf-8")
        _err(f"wrote sweep report to {args.report}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    rows: list[tuple[str, str, metrics.MetricSummary]] = []
    if args.cer:
        hyp_path, ref_path = args.cer
        hypotheses = corpus.load_keyed_text(hyp_path)
        records = load_any_manifest(ref_path)
        values = []
        matched = 0
        for record in sorted(records, key=lambda r: r.utterance_id):
            hyp = hypotheses.get(record.utterance_id)
            if hyp is None:
                continue
            matched += 1
            values.append(metrics.cer(hyp, record.transcript))
        if not values:
            raise ValidationError("no hypothesis matched any manifest utterance")
        _err(f"CER over {matched} matched utterances")
        rows.append(("cer", "all", metrics.bootstrap_summary(values, seed=args.seed)))
    elif args.cossim:
        a_path, b_path, pairs_path = args.cossim
        emb_a = metrics.load_embeddings(a_path)
        emb_b = metrics.load_embeddings(b_path)
        values = []
        text = Path(pairs_path).read_text(encoding="utf-8")
        for line_no, line in enumerate(corpus.split_lines(text), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{pairs_path} line {line_no}: expected 2 columns")
            id_a, id_b = parts[0].strip(), parts[1].strip()
            if id_a not in emb_a:
                raise ValidationError(f"{pairs_path} line {line_no}: unknown id {id_a!r}")
            if id_b not in emb_b:
                raise ValidationError(f"{pairs_path} line {line_no}: unknown id {id_b!r}")
            values.append(metrics.cosine_similarity(emb_a[id_a], emb_b[id_b]))
        if not values:
            raise ValidationError("pairs file is empty")
        rows.append(("cos-sim", "pairs", metrics.bootstrap_summary(values, seed=args.seed)))
    elif args.wvmos:
        scores = scoring.load_external_scores(args.wvmos)
        if not scores:
            raise ValidationError(f"no scores in {args.wvmos}")
        rows.append(
            (
                "wvmos",
                "all",
                metrics.wvmos_aggregate(
                    {k: s.value for k, s in scores.items()}, seed=args.seed
                ),
            )
        )
    else:
        raise ValidationError("choose one of --cer, --cossim or --wvmos")
    output = metrics.summary_tsv(rows)
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
        _err(f"wrote metrics to {args.out}")
    else:
        print(output, end="")
    return EXIT_OK


def cmd_synthgen(args: argparse.Namespace) -> int:
    specs = synth.load_speaker_specs(args.spec_file)
    manifest = synth.generate_corpus(specs, args.out_dir)
    total = sum(s.n_utterances for s in specs)
    _err(f"generated {total} utterances for {len(specs)} speakers")
    print(manifest)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .listening.service import create_app
    from .listening.store import ensure_test_from_file

    app = create_app(
        args.data_dir,
        audio_root=args.audio_root,
        ui_dir=args.ui_dir,
    )
    for test_file in args.test_file or ():
        test_id = ensure_test_from_file(app.state.store, test_file)
        _err(f"test '{test_id}' available from {test_file}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--threshold", type=float, default=None, help="pseudo-MOS threshold")
    parser.add_argument(
        "--level", choices=("speaker", "utterance"), default=None,
        help="apply the threshold per speaker (default) or per utterance",
    )
    parser.add_argument(
        "--all", action="store_true",
        help="no minimum speaker duration (keep speakers under 20 min)",
    )
    parser.add_argument("--min-speaker-s", type=float, default=None)
    parser.add_argument("--max-speaker-s", type=float, default=None)
    parser.add_argument("--max-utterance-s", type=float, default=None)
    parser.add_argument("--lid-min-prob", type=float, default=None)
    parser.add_argument("--max-cer", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--source", choices=("external", "proxy"), default=None)
    parser.add_argument("--scores", help="external scores TSV (utterance_id, value)")
    parser.add_argument("--audio-root", help="directory audio paths are relative to")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxcurate",
        description="Curate TTS training data from crowdsourced speech corpora.",
    )
    _add_common(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="decode, trim and measure durations")
    _add_common(p)
    p.add_argument("manifest")
    p.add_argument("--audio-root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trim-threshold", type=float, default=dsp.DEFAULT_TRIM_THRESHOLD_DBFS)
    p.add_argument("--frame-ms", type=float, default=dsp.DEFAULT_TRIM_FRAME_MS)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("score", help="attach utterance scores and speaker means")
    _add_common(p)
    p.add_argument("manifest")
    p.add_argument("--source", choices=("external", "proxy"), required=True)
    p.add_argument("--scores", help="external scores TSV")
    p.add_argument("--audio-root", help="needed for proxy scoring")
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics", help="write proxy diagnostics TSV here")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("curate", help="run the full selection pipeline")
    _add_common(p)
    p.add_argument("manifest")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write the stage/speaker report TSV here")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("sweep", help="pipeline statistics per score threshold")
    _add_common(p)
    p.add_argument("manifest")
    _add_config_flags(p)
    p.add_argument(
        "--thresholds",
        help="comma-separated thresholds; 'none' adds a baseline row "
        "(default: none,2.0,3.0,3.5,3.8,4.0)",
    )
    p.add_argument("--report", help="write the sweep TSV here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="objective metric summaries")
    _add_common(p)
    p.add_argument(
        "--cer", nargs=2, metavar=("HYP_TSV", "REF_MANIFEST"),
        help="character error rate of hypotheses against manifest transcripts",
    )
    p.add_argument(
        "--cossim", nargs=3, metavar=("EMB_A", "EMB_B", "PAIRS_TSV"),
        help="cosine similarity over embedding pairs",
    )
    p.add_argument("--wvmos", metavar="SCORES_TSV", help="aggregate a score file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the metric TSV here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synthgen", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("spec_file")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_synthgen)

    p = sub.add_parser("serve", help="run the listening-test service")
    _add_common(p)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--audio-root", help="directory stimulus audio paths are relative to")
    p.add_argument("--ui-dir", help="serve a built web UI from this directory")
    p.add_argument(
        "--test-file", action="append",
        help="test definition file (one stimulus per line) to load at startup; "
        "the file stem becomes the test id (repeatable)",
    )
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineStageError as exc:
        _err(str(exc))
        return EXIT_STAGE
    except (ValidationError, FormatError) as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
