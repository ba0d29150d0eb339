"""Command-line entry point wiring the pipeline together.

Subcommands: synth (generate a corpus), study (combination + correlation
study on a corpus), serve (run the ingestion service), featurize (export
heatmap CSVs for one session), correlate (correlation study only).

Every run is deterministic given its flags; seeds default to 42 and the
resolved configuration is echoed into every output artifact. The exit code
is 0 iff no operation failed; degradations that are reported inside an
output artifact (for example an undefined correlation at grid size 1) do
not fail the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .events import InvariantViolation, MalformedLine, load_corpus, read_session
from .evaluation import (
    Dataset,
    InfeasibleSplit,
    combination_study,
    constrained_split,
    correlation_study,
    render_report_text,
    study_report,
)
from .featurize import MissingSource, ZeroVariance, build_heatmap, write_heatmap_csv
from .forest import ForestConfig
from .synth import SynthConfig, gen_corpus, write_corpus

DEFAULT_SEED = 42


def _add_synth(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("synth", help="generate a synthetic session corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--users", type=int, default=6)
    p.add_argument("--computers", type=int, default=2)
    p.add_argument("--browsers", type=int, default=2)
    p.add_argument("--recordings", type=int, default=3, help="recordings per user/computer/browser cell")
    p.add_argument("--samples", type=int, default=1200, help="samples per session")
    p.add_argument("--coupling", type=float, default=0.75, help="mouse-follows-gaze probability")
    p.add_argument("--noise", type=float, default=0.02, help="mouse jitter stddev, normalized units")
    p.add_argument("--grid", type=int, default=10)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_synth)


def _add_study(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("study", help="run the source-combination and correlation study")
    p.add_argument("--corpus", required=True, help="corpus directory of *.jsonl sessions")
    p.add_argument("--out", required=True, help="report JSON path (a .txt sibling is written too)")
    p.add_argument("--grid", type=int, default=10)
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--ratio", type=float, default=0.5, help="training fraction of the split")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_study)


def _add_serve(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("serve", help="run the HTTP ingestion service")
    p.add_argument("--listen", default="127.0.0.1:8077", help="host:port to bind")
    p.add_argument("--data-dir", required=True, help="directory for session storage")
    p.add_argument("--fsync", action="store_true", help="fsync after every append")
    p.set_defaults(func=cmd_serve)


def _add_featurize(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("featurize", help="export heatmap CSVs for one session file")
    p.add_argument("--session", required=True, help="session JSONL file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grid", type=int, default=10)
    p.set_defaults(func=cmd_featurize)


def _add_correlate(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("correlate", help="mouse-gaze correlation study on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="summary JSON path")
    p.add_argument("--grid", type=int, default=10)
    p.set_defaults(func=cmd_correlate)


def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        num_users=args.users,
        num_computers=args.computers,
        num_browsers=args.browsers,
        recordings_per_cell=args.recordings,
        samples_per_session=args.samples,
        coupling=args.coupling,
        mouse_noise=args.noise,
        grid_size=args.grid,
        seed=args.seed,
    )
    dataset = gen_corpus(config)
    manifest_path = write_corpus(dataset, args.out, config)
    print(f"wrote {len(dataset.records)} sessions to {args.out}")
    print(f"manifest: {manifest_path}")
    return 0


def cmd_study(args: argparse.Namespace) -> int:
    records = load_corpus(args.corpus)
    dataset = Dataset(records=tuple(records))
    forest_config = ForestConfig(num_trees=args.trees)
    config_echo = {
        "corpus": str(args.corpus),
        "grid_size": args.grid,
        "num_trees": args.trees,
        "ratio": args.ratio,
        "seed": args.seed,
        "forest": {
            "num_trees": forest_config.num_trees,
            "min_leaf_size": forest_config.min_leaf_size,
            "max_depth": forest_config.max_depth,
            "bootstrap": forest_config.bootstrap,
        },
    }
    split = constrained_split(dataset, args.ratio, args.seed)
    study = combination_study(
        dataset,
        grid_size=args.grid,
        forest_config=forest_config,
        seed=args.seed,
        split=split,
    )
    correlation = None
    correlation_error = None
    try:
        correlation = correlation_study(dataset, args.grid)
    except ZeroVariance as exc:
        correlation_error = str(exc)
        print(f"warning: correlation unavailable: {exc}", file=sys.stderr)

    report = study_report(study, correlation, config_echo, args.seed, correlation_error)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    text_path = out.with_suffix(".txt")
    text_path.write_text(render_report_text(report), encoding="utf-8")

    for name, combo in report["combinations"].items():
        print(f"{name}: accuracy {combo['accuracy']:.4f}")
    if correlation is not None:
        print(f"correlation median: {correlation.median:.4f}")
    print(f"report: {out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .ingest import SessionStore, create_app

    try:
        host, port_str = args.listen.rsplit(":", 1)
        port = int(port_str)
    except ValueError:
        print(f"error: --listen must be host:port, got {args.listen!r}", file=sys.stderr)
        return 1
    store = SessionStore(args.data_dir, fsync=args.fsync)
    app = create_app(store)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"error: could not serve on {args.listen}: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_featurize(args: argparse.Namespace) -> int:
    record = read_session(args.session)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.session).stem
    outputs = {}

    mouse_hm = build_heatmap(record.mouse, args.grid)
    if mouse_hm.is_empty:
        print("warning: mouse stream is empty, no mouse heatmap written", file=sys.stderr)
    else:
        path = write_heatmap_csv(mouse_hm, out_dir / f"{stem}.mouse.csv")
        outputs["mouse"] = path.name
        print(f"mouse heatmap: {path}")

    if record.gaze is None:
        print("warning: no gaze stream, no gaze heatmap written", file=sys.stderr)
    else:
        gaze_hm = build_heatmap(record.gaze, args.grid)
        if gaze_hm.is_empty:
            print("warning: gaze stream is empty, no gaze heatmap written", file=sys.stderr)
        else:
            path = write_heatmap_csv(gaze_hm, out_dir / f"{stem}.gaze.csv")
            outputs["gaze"] = path.name
            print(f"gaze heatmap: {path}")

    sidecar = {
        "config": {"session": str(args.session), "grid_size": args.grid},
        "outputs": outputs,
    }
    sidecar_path = out_dir / f"{stem}.featurize.json"
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_correlate(args: argparse.Namespace) -> int:
    records = load_corpus(args.corpus)
    dataset = Dataset(records=tuple(records))
    summary = correlation_study(dataset, args.grid)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": {"corpus": str(args.corpus), "grid_size": args.grid},
        "median": summary.median,
        "q1": summary.q1,
        "q3": summary.q3,
        "whisker_low": summary.whisker_low,
        "whisker_high": summary.whisker_high,
        "coefficients": list(summary.coefficients),
    }
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"correlation median: {summary.median:.4f} (n={len(summary.coefficients)})")
    print(f"summary: {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="userprint",
        description="behavioral user fingerprinting from mouse, gaze, and browser statistics",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_study(sub)
    _add_serve(sub)
    _add_featurize(sub)
    _add_correlate(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        MalformedLine,
        InvariantViolation,
        MissingSource,
        ZeroVariance,
        InfeasibleSplit,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
