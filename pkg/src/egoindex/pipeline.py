"""Stage functions chaining segmentation, description, training and decoding.

Every stage reads and writes plain files so the CLI can run them one at a
time; ``run_pipeline`` and ``sweep`` chain them in-process.
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import io
from .descriptors import (FeatureConfig, assemble_observation, color_layout, cut_histogram,
                          tpe_histogram, N_CHROMA, N_LUMA)
from .errors import EgoIndexError, InsufficientData, MissingModel, NoLocalizedFrames, StageError
from .evaluation import confusion, format_table, metrics, rank_reports, best_rows, segment_ground_truth
from .hmm import (ActivityModel, ActivityTransitionMatrix, DecodedTimeline, ElementaryHMM,
                  baum_welch, default_variance_floor, flatten, viterbi)
from .localization import (LocationModel, VocabularyTree, build_tree, classify_frame,
                           localization_histogram, quantize_frame)
from .motion import detect_cuts, estimate_motions, merge_short

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    threshold_ratio: float = 0.2
    min_len: int = 5
    robust: bool = True
    n_cut_bins: int = 6
    n_tpe_bins: int = 6
    tpe_step: float = 1.0
    branching: int = 10
    levels: int = 3
    n_components: int = 3
    m: int = 3
    loop_init: float = 0.9
    stay: float = 0.95
    var_floor_ratio: float = 1e-4
    features: str = "cut+loc"
    train_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        checks = [
            (0.0 < self.threshold_ratio <= 1.0, "threshold_ratio must lie in (0, 1]"),
            (self.min_len >= 1, "min_len must be >= 1"),
            (self.n_cut_bins >= 1, "n_cut_bins must be >= 1"),
            (self.n_tpe_bins >= 2, "n_tpe_bins must be >= 2"),
            (self.tpe_step > 0, "tpe_step must be > 0"),
            (self.branching >= 2 and self.levels >= 1, "need branching >= 2 and levels >= 1"),
            (self.n_components >= 1 and self.m >= 1, "need n_components >= 1 and m >= 1"),
            (0.0 < self.loop_init < 1.0 or self.m == 1, "loop_init must lie in (0, 1)"),
            (0.0 < self.stay < 1.0, "stay must lie in (0, 1)"),
            (self.var_floor_ratio > 0, "var_floor_ratio must be > 0"),
            (0.0 < self.train_fraction < 1.0, "train_fraction must lie in (0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig.parse(self.features)

    def replace(self, **kw) -> "RunConfig":
        d = asdict(self)
        d.update(kw)
        return RunConfig(**d)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(io.read_json(path))


def stage_seed(root, stage):
    """Independent per-stage seed derived from the root seed."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1)[0])


# --- segmentation -------------------------------------------------------

@dataclass
class Segmentation:
    segments: list
    cuts: list
    motions: list
    degenerate: list


def sibling(path, suffix):
    p = Path(path)
    return p.with_name(f"{p.stem}_{suffix}.csv")


def run_segmentation(manifest: io.DatasetManifest, config: RunConfig) -> Segmentation:
    fields_, width, height = io.read_motion_fields(manifest.path("motion_fields"))
    motions, degenerate = estimate_motions(fields_, robust=config.robust)
    cuts, _ = detect_cuts(motions, width, height, config.threshold_ratio)
    n = len(motions)
    bounds = [int(c) for c in cuts if c < n - 1] + [n - 1]
    segments = merge_short(bounds, n, config.min_len)
    if degenerate:
        log.info("%d degenerate motion fields inherited the previous motion", len(degenerate))
    return Segmentation(segments, [int(c) for c in cuts], motions, degenerate)


def save_segmentation(seg: Segmentation, path):
    io.write_segments(path, seg.segments)
    io.write_cuts(sibling(path, "cuts"), seg.cuts)
    io.write_motions(sibling(path, "motions"), seg.motions)


def load_segmentation(path) -> Segmentation:
    return Segmentation(io.read_segments(path), io.read_cuts(sibling(path, "cuts")),
                        io.read_motions(sibling(path, "motions")), [])


# --- training split -----------------------------------------------------

def train_split(segments, segment_labels, frame_labels, activities, fraction):
    """Earliest segments of each activity until they cover ``fraction`` of its frames.

    Returns ``{activity: [segment indices]}``.
    """
    totals = {a: 0 for a in activities}
    for lab in frame_labels:
        if lab in totals:
            totals[lab] += 1
    split = {a: [] for a in activities}
    covered = {a: 0 for a in activities}
    for i, (seg, lab) in enumerate(zip(segments, segment_labels)):
        if lab in split and covered[lab] < fraction * totals[lab]:
            split[lab].append(i)
            covered[lab] += seg.length
    return split


def runs(indices):
    """Split sorted indices into runs of consecutive values."""
    out = []
    for i in indices:
        if out and i == out[-1][-1] + 1:
            out[-1].append(i)
        else:
            out.append([i])
    return out


@dataclass
class Split:
    segment_labels: list
    train: dict

    @property
    def train_indices(self):
        return sorted(i for idx in self.train.values() for i in idx)

    def test_indices(self, n):
        used = set(self.train_indices)
        return [i for i in range(n) if i not in used]


def make_split(manifest, segments, config) -> Split:
    frame_labels = io.read_labels(manifest.path("activity_labels"))
    seg_labels = segment_ground_truth(frame_labels, segments)
    return Split(seg_labels, train_split(segments, seg_labels, frame_labels,
                                         manifest.activities, config.train_fraction))


# --- localisation ---------------------------------------------------------

def _frame_groups(frame_index):
    order = np.argsort(frame_index, kind="stable")
    fi = frame_index[order]
    uniq, start = np.unique(fi, return_index=True)
    bounds = list(start) + [len(fi)]
    return {int(f): order[bounds[k]:bounds[k + 1]] for k, f in enumerate(uniq)}


def build_localization(manifest, segments, split: Split, config: RunConfig):
    """Vocabulary tree and 1-NN model from the training segments' descriptor frames."""
    frame_index, vecs = io.read_descriptors(manifest.path("descriptors"))
    groups = _frame_groups(frame_index)
    loc_labels = io.read_labels(manifest.path("location_labels"))
    loc_index = {name: i for i, name in enumerate(manifest.locations)}
    train_frames = [f for i in split.train_indices for f in segments[i].frames() if f in groups]
    if not train_frames:
        raise InsufficientData("no descriptor-bearing frame in the training segments")
    rows = np.concatenate([groups[f] for f in train_frames])
    tree = build_tree(vecs[rows], config.branching, config.levels,
                      seed=stage_seed(config.seed, "voctree"))
    sigs = np.array([quantize_frame(vecs[groups[f]], tree) for f in train_frames])
    labels = np.array([loc_index[loc_labels[f]] for f in train_frames])
    return tree, LocationModel(sigs, labels, len(manifest.locations))


def save_localization(path, tree, model, config):
    io.write_json(path, {"tree": tree.to_dict(), "location_model": model.to_dict(),
                         "seed": stage_seed(config.seed, "voctree")})


def load_localization(path):
    d = io.read_json(path)
    return VocabularyTree.from_dict(d["tree"]), LocationModel.from_dict(d["location_model"])


# --- descriptor extraction -------------------------------------------------

def extract_descriptors(manifest, seg: Segmentation, tree, loc_model, config: RunConfig):
    """Per-segment table of every descriptor.

    Blocks: cut, tpe, cld, loc (1-NN estimates) and loc_gt (ground-truth
    locations of the same descriptor-bearing frames).
    """
    frame_index, vecs = io.read_descriptors(manifest.path("descriptors"))
    groups = _frame_groups(frame_index)
    loc_labels = io.read_labels(manifest.path("location_labels"))
    loc_index = {name: i for i, name in enumerate(manifest.locations)}
    n_loc = len(manifest.locations)
    frames = io.FrameStack(manifest.path("frames"))

    est = {}
    for f, rows in groups.items():
        sig = quantize_frame(vecs[rows], tree)
        est[f] = classify_frame(sig, loc_model) if np.any(sig) else None

    rows_out = []
    for s in seg.segments:
        cut = cut_histogram(seg.cuts, s.start_frame, s.end_frame, config.n_cut_bins)
        tpe = tpe_histogram(seg.motions[s.start_frame:s.end_frame + 1],
                            config.n_tpe_bins, config.tpe_step).as_vector()
        cld = color_layout(frames[s.key_frame]).as_vector()
        loc_frames = [f for f in s.frames() if f in groups]
        try:
            loc = localization_histogram([(f, est[f]) for f in loc_frames], n_loc)
        except NoLocalizedFrames:
            log.warning("segment %d-%d has no localised frame; using a flat histogram",
                        s.start_frame, s.end_frame)
            loc = np.full(n_loc, 1.0 / n_loc)
        gt_frames = loc_frames or list(s.frames())
        loc_gt = localization_histogram([(f, loc_index[loc_labels[f]]) for f in gt_frames], n_loc)
        rows_out.append(np.concatenate([cut, tpe, cld, loc, loc_gt]))

    sizes = [("cut", config.n_cut_bins), ("tpe", 2 * config.n_tpe_bins),
             ("cld", N_LUMA + 2 * N_CHROMA), ("loc", n_loc), ("loc_gt", n_loc)]
    layout, off = [], 0
    for name, ln in sizes:
        layout.append((name, off, ln))
        off += ln
    return np.array(rows_out), tuple(layout)


def observations(table, layout, features: FeatureConfig, ground_truth_loc=False):
    """Observation matrix for the selected features (rows follow ``table``)."""
    spans = {n: (o, ln) for n, o, ln in layout}
    if ground_truth_loc:
        spans["loc"] = spans["loc_gt"]
    out = []
    for row in table:
        parts = {n: row[o:o + ln] for n, (o, ln) in spans.items()}
        out.append(assemble_observation(parts, features).values)
    return np.array(out)


# --- training / decoding ---------------------------------------------------

@dataclass
class TrainedModels:
    activities: list          # of ActivityModel
    act_matrix: ActivityTransitionMatrix
    features: FeatureConfig
    mean: np.ndarray
    scale: np.ndarray
    stay: float
    info: dict

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def composite(self):
        return flatten(self.activities, self.act_matrix, self.stay)


def load_activity_matrix(manifest):
    if "activity_transitions" in manifest.files and manifest.path("activity_transitions").exists():
        P, labels = io.read_matrix(manifest.path("activity_transitions"))
        if list(labels) != list(manifest.activities):
            raise ValueError("activity transition matrix labels differ from the manifest's activities")
        return ActivityTransitionMatrix(P)
    return ActivityTransitionMatrix.uniform(len(manifest.activities))


def train_models(table, layout, split: Split, activities, act_matrix, config: RunConfig) -> TrainedModels:
    """Baum-Welch per activity on its training runs (ground-truth localisation).

    When an activity has too few training segments, the state count is
    capped at the number of observations and the mixture size at the
    observations per state; the effective values are recorded in ``info``.
    """
    features = config.feature_config()
    x = observations(table, layout, features, ground_truth_loc=True)
    train_idx = split.train_indices
    pooled = x[train_idx]
    mean = pooled.mean(axis=0)
    scale = pooled.std(axis=0)
    scale[scale == 0] = 1.0
    z = (x - mean) / scale
    floor = default_variance_floor(z[train_idx], config.var_floor_ratio)

    models, info = [], {"activities": {}}
    base = stage_seed(config.seed, "train")
    for a, label in enumerate(activities):
        idx = split.train.get(label, [])
        if not idx:
            raise InsufficientData(f"activity {label!r} has no training segment")
        seqs = [z[r] for r in runs(idx)]
        n_obs = len(idx)
        m_eff = min(config.m, n_obs)
        k_eff = max(1, min(config.n_components, n_obs // m_eff))
        hmm = baum_welch(seqs, m_eff, k_eff, config.loop_init, seed=base + a, var_floor=floor)
        models.append(ActivityModel(label, hmm))
        info["activities"][label] = {"train_segments": n_obs, "sequences": len(seqs),
                                     "m": m_eff, "n_components": k_eff,
                                     "iterations": len(hmm.history),
                                     "log_likelihood": hmm.history[-1] if hmm.history else None}
    info["seed"] = base
    return TrainedModels(models, act_matrix, features, mean, scale, config.stay, info)


def _activity_file(i):
    return f"activity_{i:02d}.json"


def save_models(models: TrainedModels, out_dir):
    out = Path(out_dir)
    for i, act in enumerate(models.activities):
        io.write_json(out / _activity_file(i), {"label": act.label, "hmm": act.hmm.to_dict()})
    io.write_json(out / "models.json", {
        "activities": [{"label": a.label, "file": _activity_file(i)}
                       for i, a in enumerate(models.activities)],
        "activity_transitions": models.act_matrix.matrix.tolist(),
        "features": models.features.name,
        "mean": models.mean.tolist(), "scale": models.scale.tolist(),
        "stay": models.stay, "info": models.info,
    })


def load_models(model_dir) -> TrainedModels:
    path = Path(model_dir) / "models.json"
    if not path.exists():
        raise MissingModel(f"no trained models at {model_dir} (run 'train' first)")
    d = io.read_json(path)
    acts = []
    for entry in d["activities"]:
        a = io.read_json(Path(model_dir) / entry["file"])
        acts.append(ActivityModel(a["label"], ElementaryHMM.from_dict(a["hmm"])))
    return TrainedModels(acts, ActivityTransitionMatrix(np.array(d["activity_transitions"])),
                         FeatureConfig.parse(d["features"]), np.array(d["mean"]),
                         np.array(d["scale"]), float(d["stay"]), d["info"])


def decode(models: TrainedModels, table, layout, indices) -> DecodedTimeline:
    x = observations(table, layout, models.features)[indices]
    return viterbi(models.composite(), models.standardize(x), with_log_odds=True)


def save_timeline(path, timeline: DecodedTimeline, segments, indices):
    rows = []
    for k, i in enumerate(indices):
        s = segments[i]
        odds = timeline.log_odds[k] if timeline.log_odds is not None else float("nan")
        rows.append([i, s.start_frame, s.end_frame, timeline.labels[k], timeline.states[k], odds])
    io.atomic_write(path, "segment,start_frame,end_frame,activity,state,log_odds\n" + io.format_rows(rows))


def load_timeline(path):
    idx, labels = [], []
    with open(path) as fh:
        fh.readline()
        for line in fh:
            if line.strip():
                parts = line.rstrip("\n").split(",")
                idx.append(int(parts[0]))
                # activity names may contain commas: take everything between the fixed columns
                labels.append(",".join(parts[3:-2]))
    return idx, labels


def evaluate(truth, predicted, activities, provenance):
    cm = confusion(truth, predicted, labels=activities)
    return metrics(cm, provenance), cm


def save_evaluation(out_dir, report, cm):
    out = Path(out_dir)
    io.write_matrix(out / "confusion.csv", cm.counts, cm.labels)
    io.write_matrix(out / "confusion_normalized.csv", cm.normalized(), cm.labels)
    io.write_json(out / "report.json", report.to_dict())


# --- orchestration -----------------------------------------------------------

def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except EgoIndexError as exc:
        raise StageError(name, exc) from exc


@dataclass
class Prepared:
    seg: Segmentation
    split: Split
    tree: VocabularyTree
    loc_model: LocationModel
    table: np.ndarray
    layout: tuple


def prepare(manifest, config: RunConfig, workdir) -> Prepared:
    """Stages shared by every (features, m) cell: segment, localise, extract."""
    work = Path(workdir)
    seg = _stage("segment", run_segmentation, manifest, config)
    save_segmentation(seg, work / "segments.csv")
    split = _stage("split", make_split, manifest, seg.segments, config)
    tree, loc_model = _stage("build-voctree", build_localization, manifest, seg.segments, split, config)
    save_localization(work / "voctree.json", tree, loc_model, config)
    table, layout = _stage("extract", extract_descriptors, manifest, seg, tree, loc_model, config)
    io.write_descriptor_table(work / "descriptors.csv", table, layout)
    return Prepared(seg, split, tree, loc_model, table, layout)


def provenance(config: RunConfig, models: TrainedModels | None = None):
    d = {"features": config.feature_config().name, "m": config.m, "run_config": config.to_dict()}
    if models is not None:
        d["effective"] = models.info["activities"]
    return d


def run_cell(manifest, prep: Prepared, config: RunConfig, workdir):
    work = Path(workdir)
    _stage("extract", config.feature_config)
    act_matrix = load_activity_matrix(manifest)
    models = _stage("train", train_models, prep.table, prep.layout, prep.split,
                    manifest.activities, act_matrix, config)
    save_models(models, work / "models")
    test = prep.split.test_indices(len(prep.seg.segments))
    timeline = _stage("decode", decode, models, prep.table, prep.layout, test)
    save_timeline(work / "timeline.csv", timeline, prep.seg.segments, test)
    truth = [prep.split.segment_labels[i] for i in test]
    report, cm = _stage("evaluate", evaluate, truth, timeline, manifest.activities,
                        provenance(config, models))
    save_evaluation(work, report, cm)
    return timeline, report


def run_pipeline(manifest, config: RunConfig, workdir):
    """segment -> build-voctree -> extract -> train -> decode -> evaluate."""
    _stage("extract", config.feature_config)
    prep = prepare(manifest, config, workdir)
    return run_cell(manifest, prep, config, workdir)


def sweep(manifest, configs, m_values, base: RunConfig, workdir):
    """Train and evaluate every (features, m) pair; returns reports ranked by macro F."""
    work = Path(workdir)
    prep = prepare(manifest, base, work)
    reports = []
    for feats in configs:
        name = feats.name if isinstance(feats, FeatureConfig) else FeatureConfig.parse(feats).name
        for m in m_values:
            cfg = base.replace(features=name, m=int(m))
            _, rep = run_cell(manifest, prep, cfg, work / "cells" / f"{name}_m{m}")
            reports.append(rep)
    ranked = rank_reports(reports)
    rows = [{"measure": measure, "score": score, "features": rep.config["features"],
             "m": rep.config["m"], "accuracy": rep.accuracy}
            for measure, score, rep in best_rows(reports)]
    io.write_json(work / "sweep_report.json", {
        "root_seed": base.seed,
        "ranked": [r.to_dict() for r in ranked],
        "best": rows,
        "table": format_table(reports),
    })
    return ranked
