"""Command line entry point: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from . import pipeline as P
from .descriptors import FeatureConfig
from .errors import EgoIndexError, StageError
from .evaluation import format_table, segment_ground_truth
from .synth import ScenarioScript, default_scenario, synth_generate

SUBCOMMANDS = ("synth", "segment", "extract", "build-voctree", "train", "decode", "evaluate", "sweep")


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        kind = "unknown_subcommand" if "invalid choice" in message else "bad_flag"
        sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
        sys.exit(2)


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _load_config(args, keys=("m", "features", "seed", "train_fraction")) -> P.RunConfig:
    cfg = P.RunConfig.load(args.config) if getattr(args, "config", None) else P.RunConfig()
    overrides = {}
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    return cfg.replace(**overrides) if overrides else cfg


def _manifest(args):
    return io.DatasetManifest.load(args.manifest)


def cmd_synth(args):
    script = ScenarioScript.from_dict(io.read_json(args.script)) if args.script \
        else default_scenario(scale=args.scale, noise_free=args.noise_free)
    m = synth_generate(script, args.out, seed=args.seed)
    print(f"wrote {m.n_frames} frames to {args.out}")


def cmd_segment(args):
    cfg = _load_config(args)
    seg = P.run_segmentation(_manifest(args), cfg)
    P.save_segmentation(seg, args.out)
    print(f"{len(seg.segments)} segments, {len(seg.cuts)} cuts")


def cmd_build_voctree(args):
    cfg = _load_config(args)
    manifest = _manifest(args)
    segments = io.read_segments(args.segments)
    split = P.make_split(manifest, segments, cfg)
    tree, model = P.build_localization(manifest, segments, split, cfg)
    P.save_localization(args.out, tree, model, cfg)
    print(f"tree with {tree.n_nodes} nodes, {len(model.labels)} training frames")


def cmd_extract(args):
    cfg = _load_config(args)
    cfg.feature_config()
    manifest = _manifest(args)
    seg = P.load_segmentation(args.segments)
    tree, model = P.load_localization(args.voctree)
    table, layout = P.extract_descriptors(manifest, seg, tree, model, cfg)
    io.write_descriptor_table(args.out, table, layout)
    print(f"{len(table)} segment descriptors, layout {layout}")


def cmd_train(args):
    cfg = _load_config(args)
    manifest = _manifest(args)
    segments = io.read_segments(args.segments)
    table, layout = io.read_descriptor_table(args.descriptors)
    split = P.make_split(manifest, segments, cfg)
    models = P.train_models(table, layout, split, manifest.activities,
                            P.load_activity_matrix(manifest), cfg)
    P.save_models(models, args.out)
    io.write_json(Path(args.out) / "run_config.json", cfg.to_dict())
    print(f"trained {len(models.activities)} activity models ({models.features.name}, m={cfg.m})")


def cmd_decode(args):
    models = P.load_models(args.models)
    manifest = _manifest(args)
    segments = io.read_segments(args.segments)
    table, layout = io.read_descriptor_table(args.descriptors)
    cfg_path = Path(args.models) / "run_config.json"
    cfg = P.RunConfig.load(cfg_path) if cfg_path.exists() else _load_config(args)
    test = P.make_split(manifest, segments, cfg).test_indices(len(segments))
    timeline = P.decode(models, table, layout, test)
    P.save_timeline(args.out, timeline, segments, test)
    print(f"decoded {len(timeline)} segments")


def cmd_evaluate(args):
    manifest = _manifest(args)
    segments = io.read_segments(args.segments)
    idx, predicted = P.load_timeline(args.timeline)
    frame_labels = io.read_labels(manifest.path("activity_labels"))
    truth = segment_ground_truth(frame_labels, [segments[i] for i in idx])
    prov = {}
    if args.models:
        cfg = P.RunConfig.load(Path(args.models) / "run_config.json")
        prov = P.provenance(cfg, P.load_models(args.models))
    report, cm = P.evaluate(truth, predicted, manifest.activities, prov)
    P.save_evaluation(args.out, report, cm)
    print(f"accuracy {report.accuracy:.3f}  macro F {report.macro_f_score:.3f}")


def cmd_sweep(args):
    cfg = _load_config(args, keys=("seed",))
    configs = [FeatureConfig.parse(t) for t in args.features.split(";") if t.strip()]
    ranked = P.sweep(_manifest(args), configs, args.m, cfg, args.out)
    print(format_table(ranked))


def build_parser():
    parser = Parser(prog="egoindex", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}",
                                parser_class=Parser)

    def add(name, fn, help_, manifest=True, config=True):
        p = sub.add_parser(name, help=help_)
        if manifest:
            p.add_argument("--manifest", required=True, help="dataset manifest.json")
        if config:
            p.add_argument("--config", help="RunConfig JSON file")
            p.add_argument("--seed", type=int, help="root seed override")
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic scenario dataset", manifest=False, config=False)
    p.add_argument("--out", required=True)
    p.add_argument("--script", help="ScenarioScript JSON (default: seven-activity home scenario)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--noise-free", action="store_true")

    p = add("segment", cmd_segment, "estimate motion and cut the video into segments")
    p.add_argument("--out", required=True, help="segments CSV (cuts and motions written alongside)")

    p = add("build-voctree", cmd_build_voctree, "train the vocabulary tree and 1-NN location model")
    p.add_argument("--segments", required=True)
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--out", required=True)

    p = add("extract", cmd_extract, "compute per-segment descriptors")
    p.add_argument("--segments", required=True)
    p.add_argument("--voctree", required=True)
    p.add_argument("--features")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the activity GMM-HMMs")
    p.add_argument("--segments", required=True)
    p.add_argument("--descriptors", required=True)
    p.add_argument("--features")
    p.add_argument("--m", type=int)
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--out", required=True, help="model directory")

    p = add("decode", cmd_decode, "Viterbi-decode the test segments")
    p.add_argument("--segments", required=True)
    p.add_argument("--descriptors", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "confusion matrix and metrics", config=False)
    p.add_argument("--segments", required=True)
    p.add_argument("--timeline", required=True)
    p.add_argument("--models", help="model directory, for configuration provenance")
    p.add_argument("--out", required=True, help="output directory")

    p = add("sweep", cmd_sweep, "train and evaluate every (features, m) pair")
    p.add_argument("--features", default="cut+loc;tpe+cld+loc",
                   help="';'-separated feature sets, e.g. 'cut+loc;tpe+cld+loc'")
    p.add_argument("--m", type=_int_list, default=[1, 3, 5])
    p.add_argument("--out", required=True)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (EgoIndexError, ValueError, OSError, KeyError) as exc:
        err = {"error": getattr(exc, "code", type(exc).__name__), "message": str(exc),
               "command": args.command}
        if isinstance(exc, StageError):
            err["stage"] = exc.stage
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
