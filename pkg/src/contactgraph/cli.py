"""``contactgraph`` command line.

Exit status: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import synth
from .config import RunConfig, load_config
from .data import EvalSegment, encode_segments, read_scores, segment_ids, write_scores
from .errors import ContactGraphError, DataError
from .evaluation import (evaluate_grid, fit_fusion, render_ablation_tables,
                         run_ablations, score_split, score_sequences)
from .graph import deserialize_graph, serialize_graph
from .pipeline import Dataset, graph_from_inputs, load_annotations, load_sequences, load_splits
from .trace import action_vocabulary, filter_contacts, observation_window, stride_profile
from .training import Checkpoint, train_fusion

log = logging.getLogger("contactgraph")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="flat 'section.key = value' config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. train.learning_rate=1e-4 (repeatable)")
    p.add_argument("--seed", type=int, help="seed for every random draw (train.seed)")
    p.add_argument("--threads", type=int, help="worker threads for scoring (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    if data:
        p.add_argument("--traces", help="detection trace TSV")
        p.add_argument("--annotations", help="action annotation TSV")
        p.add_argument("--splits", help="video<TAB>train|val|test file")
        p.add_argument("--embeddings", help="word embedding text file")
        p.add_argument("--fps", type=float, help="video frame rate (default 15)")
        p.add_argument("--identity-features", action="store_true",
                       help="use one-hot node features instead of word embeddings")


def _graph_arg(p):
    p.add_argument("--graph", help="graph file from build-graph (rebuilt from the inputs when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contactgraph",
                     description="Graph-stream action anticipation from hand-object contact traces.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="validate traces/annotations and print statistics")
    _common(p)

    p = sub.add_parser("build-graph", help="build the state/action graph")
    _common(p)
    p.add_argument("--out", required=True, help="graph file to write")

    p = sub.add_parser("features", help="write the node feature matrix")
    _common(p)
    _graph_arg(p)
    p.add_argument("--out", required=True, help="tensor file to write (tensor 'X')")

    p = sub.add_parser("train", help="train the graph stream")
    _common(p)
    _graph_arg(p)
    p.add_argument("--out", required=True, help="checkpoint to write")
    p.add_argument("--log", help="per-epoch log: epoch, train_loss, val_top1, val_top5")
    p.add_argument("--mode", choices=("joint", "two_stage"))
    p.add_argument("--aggregation", choices=("lstm", "mean", "terminal"))
    p.add_argument("--no-gcn", action="store_true", help="feed raw node features to the aggregator")
    p.add_argument("--epochs", type=int, help="maximum epochs (train.max_epochs)")

    p = sub.add_parser("eval", help="score the test split over a grid of anticipation times")
    _common(p)
    _graph_arg(p)
    p.add_argument("--checkpoint", required=True, help="graph-stream checkpoint")
    p.add_argument("--fusion", help="fusion checkpoint from 'fuse' (adds fused rows)")
    p.add_argument("--appearance", help="appearance score file pattern containing {tau}")
    p.add_argument("--tau-grid", help="comma-separated anticipation times in seconds")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", help="report TSV to write")
    p.add_argument("--scores-dir", help="also write graph scores per tau as graph_tau<t>.tsv")

    p = sub.add_parser("ablate", help="train and score the seven ablation settings")
    _common(p)
    _graph_arg(p)
    p.add_argument("--out", help="report TSV to write")
    p.add_argument("--epochs", type=int, help="maximum epochs per setting")

    p = sub.add_parser("predict", help="print the five most likely next actions for one segment")
    _common(p)
    _graph_arg(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--segment", help="segment id <video>#<k>")
    p.add_argument("--video", help="video id (with --frame)")
    p.add_argument("--frame", type=int, help="frame at which the action would start")
    p.add_argument("--tau", type=float, help="anticipation time in seconds (default data.train_tau)")

    p = sub.add_parser("synth", help="generate a synthetic benchmark directory")
    _common(p, data=False)
    p.add_argument("--out", required=True, help="directory to create")
    p.add_argument("--preset", default="learnable", choices=sorted(synth.PRESETS))
    p.add_argument("--train-videos", type=int, default=200)
    p.add_argument("--val-videos", type=int, default=25)
    p.add_argument("--test-videos", type=int, default=50)
    p.add_argument("--steps", type=int, default=240, help="detection steps per video")
    p.add_argument("--embedding-dim", type=int, default=32)
    p.add_argument("--tau-grid", help="anticipation times for appearance score files")

    p = sub.add_parser("fuse", help="train the late-fusion head on frozen stream scores")
    _common(p)
    _graph_arg(p)
    p.add_argument("--out", required=True, help="fusion checkpoint to write")
    p.add_argument("--checkpoint", help="graph-stream checkpoint (scores the validation split)")
    p.add_argument("--appearance", help="appearance score file pattern containing {tau}")
    p.add_argument("--graph-scores", help="precomputed graph score file (instead of --checkpoint)")
    p.add_argument("--appearance-scores", help="appearance score file matching --graph-scores")
    p.add_argument("--epochs", type=int, help="fusion epochs (train.fusion_epochs)")
    return parser


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, _, v = item.partition("=")
        out[k.strip()] = v.strip()
    flag_map = {"traces": "data.traces", "annotations": "data.annotations", "splits": "data.splits",
                "embeddings": "data.embeddings", "fps": "data.fps", "seed": "train.seed",
                "threads": "run.threads", "mode": "train.mode", "aggregation": "train.aggregation",
                "appearance": "eval.appearance", "tau_grid": "eval.tau_grid"}
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = str(value)
    if getattr(args, "identity_features", False):
        out["features.mode"] = "identity"
    if getattr(args, "no_gcn", False):
        out["train.use_gcn"] = "false"
    if getattr(args, "epochs", None) is not None:
        out["train.fusion_epochs" if args.command == "fuse" else "train.max_epochs"] = str(args.epochs)
    return out


def _config(args) -> RunConfig:
    try:
        return load_config(args.config, _overrides(args))
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc).strip("'\"")) from None


def _dataset(cfg: RunConfig, args) -> Dataset:
    graph = deserialize_graph(args.graph) if getattr(args, "graph", None) else None
    return Dataset.load(cfg, graph)


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: RunConfig, args) -> None:
    stream, sequences = load_sequences(cfg)
    n_records = sum(len(r) for r in stream.videos.values())
    print(f"videos\t{len(stream.videos)}")
    print(f"records\t{n_records}")
    strides = stride_profile(stream)
    print("frame_strides\t" + (",".join(f"{k}:{v}" for k, v in sorted(strides.items())) or "-"))
    contacts = filter_contacts(stream, cfg.data.history_seconds, cfg.data.fps)
    reported = resolved = 0
    for vid, recs in stream.videos.items():
        for rec, ts in zip(recs, contacts.videos[vid]):
            for top5, slot in ((rec.contact_right_top5, ts.state.contact_right),
                               (rec.contact_left_top5, ts.state.contact_left)):
                if top5:
                    reported += 1
                    resolved += slot is not None
    print(f"contacts_reported\t{reported}")
    print(f"contacts_resolved\t{resolved}")
    lengths = [len(s.items) for s in sequences.values()]
    print(f"state_items\t{sum(lengths)}")
    print(f"distinct_states\t{len({st for s in sequences.values() for st in s.states()})}")
    if cfg.data.annotations:
        annotations = load_annotations(cfg)
        print(f"annotations\t{len(annotations)}")
        print(f"actions\t{len({(a.verb, a.noun) for a in annotations})}")
        unknown = sorted({a.video_id for a in annotations} - set(sequences))
        if unknown:
            raise DataError(f"annotations reference videos without traces: {unknown[:3]}")
        if cfg.data.splits:
            splits = load_splits(cfg, sorted(sequences))
            counts = Counter(splits[a.video_id] for a in annotations)
            print("annotations_by_split\t" + ",".join(f"{k}:{counts[k]}" for k in ("train", "val", "test")))


def cmd_build_graph(cfg: RunConfig, args) -> None:
    _, sequences = load_sequences(cfg)
    annotations = load_annotations(cfg)
    graph = graph_from_inputs(cfg, sequences, annotations, load_splits(cfg, sorted(sequences)))
    serialize_graph(graph, args.out)
    print(f"wrote {args.out}: {graph.num_states} states, {len(graph.actions)} actions, "
          f"{len(graph.edges)} edges")


def cmd_features(cfg: RunConfig, args) -> None:
    ds = _dataset(cfg, args)
    ad.save_tensors(args.out, {"X": ds.features},
                    {"mode": cfg.features.mode, "nodes": ds.graph.num_nodes})
    print(f"wrote {args.out}: {ds.features.shape[0]} x {ds.features.shape[1]}")


def cmd_train(cfg: RunConfig, args) -> None:
    ds = _dataset(cfg, args)
    lines = []
    ckpt = ds.train(epoch_log=lines.append)
    ckpt.save(args.out)
    if args.log:
        Path(args.log).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    best = ckpt.history[ckpt.epoch - 1] if ckpt.epoch else None
    summary = f" (best epoch {ckpt.epoch}, val top-1 {best['val_top1']:.4f})" if best else ""
    print(f"wrote {args.out}{summary}")


def cmd_eval(cfg: RunConfig, args) -> None:
    ds = _dataset(cfg, args)
    ckpt = Checkpoint.load(args.checkpoint)
    fusion = Checkpoint.load(args.fusion) if args.fusion else None
    report = evaluate_grid(ds, ckpt, cfg.eval.tau_grid, cfg.eval.appearance or None, fusion,
                           split=args.split, threads=cfg.threads)
    if args.scores_dir:
        out = Path(args.scores_dir)
        out.mkdir(parents=True, exist_ok=True)
        for tau in cfg.eval.tau_grid:
            encoded, scores = score_split(ds, ckpt, args.split, tau, cfg.threads)
            write_scores(out / f"graph_tau{tau:g}.tsv", encoded.segment_ids, scores)
    if args.out:
        report.write(args.out)
    print(report.render())
    print()
    print(report.render_grid())


def cmd_ablate(cfg: RunConfig, args) -> None:
    ds = _dataset(cfg, args)
    report = run_ablations(ds, cfg.train, threads=cfg.threads)
    if args.out:
        report.write(args.out)
    print(report.render())
    print()
    print(render_ablation_tables(report))


def cmd_predict(cfg: RunConfig, args) -> None:
    ds = _dataset(cfg, args)
    ckpt = Checkpoint.load(args.checkpoint)
    tau = cfg.data.train_tau if args.tau is None else args.tau
    if args.segment:
        ids = segment_ids(ds.annotations)
        match = [a for sid, a in zip(ids, ds.annotations) if sid == args.segment]
        if not match:
            raise DataError(f"unknown segment {args.segment!r}")
        video, frame = match[0].video_id, match[0].start_frame
    elif args.video is not None and args.frame is not None:
        video, frame = args.video, args.frame
    else:
        raise UsageError("predict needs --segment or both --video and --frame")
    if video not in ds.sequences:
        raise DataError(f"unknown video {video!r}")
    probe_action = ds.graph.action_ids[0] if ds.graph.action_ids else None
    if probe_action is None:
        raise DataError("the graph has no action nodes")
    seg = EvalSegment("query", video, frame, tau, cfg.data.observation_seconds, probe_action)
    if observation_window(frame, tau, cfg.data.observation_seconds, cfg.data.fps)[1] <= 0:
        raise DataError("observation window ends before the start of the video")
    encoded = encode_segments([seg], ds.sequences, ds.indexer, cfg.data.fps, cfg.train.max_sequence_length)
    ds._check_compatible(ckpt.model_config())
    adjacency, features = ds.inputs()
    probs = score_sequences(ckpt, adjacency, features, encoded.sequences)[0]
    order = np.argsort(-probs, kind="stable")[:5]
    labels = ds.action_labels
    for k in order:
        print(f"{labels[k]}\t{probs[k]:.6f}")


def cmd_synth(cfg: RunConfig, args) -> None:
    spec = synth.BenchmarkSpec(preset=args.preset, n_train=args.train_videos, n_val=args.val_videos,
                               n_test=args.test_videos, steps_per_video=args.steps,
                               embedding_dim=args.embedding_dim, seed=cfg.train.seed)
    if min(spec.n_train, spec.steps_per_video, spec.embedding_dim) < 1 or min(spec.n_val, spec.n_test) < 0:
        raise UsageError("video counts, --steps and --embedding-dim must be positive")
    data = synth.write_benchmark(args.out, spec, taus=cfg.eval.tau_grid)
    print(f"wrote {args.out}: {len(data.stream.videos)} videos, {len(data.annotations)} annotations; "
          f"run with --config {Path(args.out) / 'run.cfg'}")


def cmd_fuse(cfg: RunConfig, args) -> None:
    if args.graph_scores or args.appearance_scores:
        if not (args.graph_scores and args.appearance_scores):
            raise UsageError("--graph-scores and --appearance-scores go together")
        annotations = load_annotations(cfg)
        vocab = action_vocabulary((a.verb, a.noun) for a in annotations)
        position = {aid: k for k, aid in enumerate(sorted(vocab.values()))}
        labels = {sid: position[a.action_id] for sid, a in zip(segment_ids(annotations), annotations)}
        ckpt = train_fusion(cfg.train, read_scores(args.graph_scores), read_scores(args.appearance_scores), labels)
    else:
        if not args.checkpoint or not cfg.eval.appearance:
            raise UsageError("fuse needs --checkpoint and --appearance, or --graph-scores and --appearance-scores")
        ds = _dataset(cfg, args)
        ckpt = fit_fusion(ds, Checkpoint.load(args.checkpoint), cfg.eval.appearance, threads=cfg.threads)
    ckpt.save(args.out)
    last = ckpt.history[-1] if ckpt.history else None
    tail = f" (fit top-1 {last['val_top1']:.4f})" if last else " (no training epochs)"
    print(f"wrote {args.out}{tail}")


COMMANDS = {"ingest": cmd_ingest, "build-graph": cmd_build_graph, "features": cmd_features,
            "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "predict": cmd_predict,
            "synth": cmd_synth, "fuse": cmd_fuse}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"contactgraph {args.command}: {exc}", file=sys.stderr)
        return 1
    except ContactGraphError as exc:
        print(f"contactgraph {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"contactgraph {args.command}: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
