"""Scripted synthetic scenarios standing in for recorded wearable video.

A script lists activity intervals.  Every activity owns a camera motion
regime, a home location (which fixes the local descriptors a frame shows)
and a colour profile for the rendered frames.  ``synth_generate`` turns a
script into the same files a real recording would be converted to.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import io
from .errors import InvalidScript
from .motion import AffineMotion, BlockMotionField


@dataclass(frozen=True)
class MotionRegime:
    speed: float = 0.0            # mean translation magnitude, px/frame
    speed_jitter: float = 0.0     # std of additive translation noise, px/frame
    turn: float = 0.0             # std of the heading random walk, rad/frame
    deformation: float = 0.0      # std of a2, a3, a5, a6
    noise: float = 0.0            # std of block vector noise, px
    outlier_fraction: float = 0.0


@dataclass(frozen=True)
class ColorProfile:
    quadrants: tuple = ((128, 128, 128),) * 4   # RGB of TL, TR, BL, BR
    noise: float = 0.0


@dataclass(frozen=True)
class ActivitySpec:
    label: str
    location: int
    regime: MotionRegime = MotionRegime()
    color: ColorProfile = ColorProfile()


@dataclass(frozen=True)
class ScenarioScript:
    activities: tuple                  # of ActivitySpec
    intervals: tuple                   # of (label, start_frame, end_frame), inclusive
    locations: tuple                   # location class names
    frame_width: int = 160
    frame_height: int = 120
    image_width: int = 32
    image_height: int = 24
    block_size: int = 16
    descriptor_dim: int = 32
    words_per_location: int = 12
    word_spread: float = 4.0
    descriptors_per_frame: int = 20
    descriptor_noise: float = 0.3
    descriptor_stride: int = 5
    outlier_range: float = 16.0
    fps: float = 25.6
    activity_transitions: tuple | None = None

    @property
    def n_frames(self):
        return self.intervals[-1][2] + 1 if self.intervals else 0

    @property
    def labels(self):
        return [a.label for a in self.activities]

    def activity(self, label):
        for a in self.activities:
            if a.label == label:
                return a
        raise KeyError(label)

    def frame_labels(self):
        out = []
        for label, start, end in self.intervals:
            out.extend([label] * (end - start + 1))
        return out

    def validate(self):
        labels = self.labels
        if not self.activities or len(set(labels)) != len(labels):
            raise InvalidScript("activity labels must be non-empty and unique")
        if not self.intervals:
            raise InvalidScript("script has no intervals")
        expect = 0
        for label, start, end in self.intervals:
            if label not in labels:
                raise InvalidScript(f"interval label {label!r} has no regime")
            if start != expect or end < start:
                raise InvalidScript(f"intervals must tile the frame range (at frame {expect})")
            expect = end + 1
        for a in self.activities:
            if not 0 <= a.location < len(self.locations):
                raise InvalidScript(f"{a.label}: location {a.location} out of range")
            if not 0.0 <= a.regime.outlier_fraction < 0.5:
                raise InvalidScript(f"{a.label}: outlier fraction must lie in [0, 0.5)")
        if min(self.image_width, self.image_height) < 8:
            raise InvalidScript("rendered images must be at least 8x8")
        if self.descriptor_stride < 1 or self.descriptor_stride > 5:
            raise InvalidScript("descriptor stride must be in 1..5 so every 5 frames are localisable")
        if self.activity_transitions is not None:
            P = np.asarray(self.activity_transitions, dtype=float)
            if P.shape != (len(labels), len(labels)) or np.any(P < 0) \
                    or not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
                raise InvalidScript("activity_transitions must be a row-stochastic N_a x N_a matrix")

    def transition_matrix(self, smoothing=0.05):
        """Explicit matrix if given, else smoothed counts of scripted interval changes."""
        if self.activity_transitions is not None:
            return np.asarray(self.activity_transitions, dtype=float)
        index = {lab: i for i, lab in enumerate(self.labels)}
        n = len(index)
        P = np.full((n, n), smoothing)
        seq = [index[lab] for lab, _, _ in self.intervals]
        for a, b in zip(seq, seq[1:]):
            P[a, b] += 1.0
        np.fill_diagonal(P, P.diagonal() + 1.0)
        return P / P.sum(axis=1, keepdims=True)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        acts = []
        for a in d.pop("activities"):
            color = a.get("color", {})
            acts.append(ActivitySpec(
                a["label"], int(a["location"]), MotionRegime(**a.get("regime", {})),
                ColorProfile(tuple(tuple(c) for c in color.get("quadrants", ColorProfile().quadrants)),
                             color.get("noise", 0.0))))
        intervals = tuple((str(lab), int(s), int(e)) for lab, s, e in d.pop("intervals"))
        locations = tuple(d.pop("locations"))
        if d.get("activity_transitions") is not None:
            d["activity_transitions"] = tuple(tuple(r) for r in d["activity_transitions"])
        return cls(tuple(acts), intervals, locations, **d)


def intervals_from_durations(plan):
    """[(label, n_frames), ...] -> tiled (label, start, end) intervals."""
    out, start = [], 0
    for label, n in plan:
        out.append((label, start, start + n - 1))
        start += n
    return tuple(out)


DEFAULT_ACTIVITIES = (
    "moving in home office", "moving in kitchen", "going up/down the stairs",
    "moving outdoors", "moving in the living room", "making coffee", "working on computer",
)


def default_scenario(scale=1.0, noise_free=False) -> ScenarioScript:
    """Seven-activity home scenario with well separated regimes.

    Five "moving" activities walk fast through distinct locations; making
    coffee and working on the computer share a location with a moving
    activity but are near-static.  ``scale`` stretches every interval.
    """
    locations = ("office", "kitchen", "stairs", "outdoors", "living room")

    def regime(speed, turn):
        if noise_free:
            return MotionRegime(speed=speed, turn=turn, deformation=0.001)
        return MotionRegime(speed=speed, speed_jitter=0.15 * speed, turn=turn,
                            deformation=0.001, noise=0.3, outlier_fraction=0.1)

    fast, slow = regime(3.5, 0.05), regime(0.9, 0.02)
    pal = {
        "moving in home office": ((200, 60, 40), (180, 70, 50), (90, 40, 30), (220, 200, 180)),
        "moving in kitchen": ((40, 160, 60), (230, 230, 210), (60, 140, 70), (120, 120, 110)),
        "going up/down the stairs": ((110, 80, 50), (100, 70, 40), (140, 110, 80), (60, 40, 20)),
        "moving outdoors": ((90, 150, 230), (100, 160, 240), (60, 130, 40), (70, 120, 50)),
        "moving in the living room": ((220, 180, 90), (60, 60, 120), (200, 170, 80), (80, 50, 90)),
        "making coffee": ((30, 30, 30), (240, 240, 240), (150, 100, 60), (200, 60, 60)),
        "working on computer": ((20, 40, 90), (30, 50, 110), (200, 200, 200), (170, 160, 150)),
    }
    place = {"moving in home office": 0, "moving in kitchen": 1, "going up/down the stairs": 2,
             "moving outdoors": 3, "moving in the living room": 4, "making coffee": 1,
             "working on computer": 0}
    noise = 0.0 if noise_free else 12.0
    acts = tuple(
        ActivitySpec(lab, place[lab], slow if lab in ("making coffee", "working on computer") else fast,
                     ColorProfile(pal[lab], noise))
        for lab in DEFAULT_ACTIVITIES)

    def n(frames):
        return max(10, int(round(frames * scale)))

    plan = [
        ("moving in home office", n(260)), ("working on computer", n(900)),
        ("moving in home office", n(260)), ("going up/down the stairs", n(260)),
        ("moving in kitchen", n(260)), ("making coffee", n(900)),
        ("moving in kitchen", n(260)), ("moving in the living room", n(260)),
        ("moving outdoors", n(260)), ("moving in the living room", n(260)),
        ("going up/down the stairs", n(260)), ("moving outdoors", n(260)),
    ]
    return ScenarioScript(acts, intervals_from_durations(plan), locations)


def block_centers(width, height, block=16):
    xs = np.arange(block / 2, width, block)
    ys = np.arange(block / 2, height, block)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def render_field(motion: AffineMotion, centers, regime: MotionRegime, rng, outlier_range=16.0):
    disp = motion.displacement(centers)
    if regime.noise > 0:
        disp = disp + rng.normal(0.0, regime.noise, disp.shape)
    if regime.outlier_fraction > 0:
        n_out = int(round(regime.outlier_fraction * len(centers)))
        idx = rng.choice(len(centers), n_out, replace=False)
        disp[idx] = rng.uniform(-outlier_range, outlier_range, (n_out, 2))
    return np.column_stack([centers, disp])


def render_image(color: ColorProfile, width, height, rng):
    img = np.empty((height, width, 3))
    q = np.asarray(color.quadrants, dtype=float)
    hh, hw = height // 2, width // 2
    img[:hh, :hw], img[:hh, hw:], img[hh:, :hw], img[hh:, hw:] = q
    if color.noise > 0:
        img += rng.normal(0.0, color.noise, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def synth_generate(script: ScenarioScript, out_dir, seed=0) -> io.DatasetManifest:
    """Write a complete dataset for ``script`` under ``out_dir``; deterministic in ``seed``."""
    script.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    motion_rng, desc_rng, image_rng, world_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))

    labels = script.frame_labels()
    n = len(labels)
    acts = {a.label: a for a in script.activities}
    centers = block_centers(script.frame_width, script.frame_height, script.block_size)

    heading = 0.0
    truth, fields = [], []
    for k, lab in enumerate(labels):
        r = acts[lab].regime
        heading += motion_rng.normal(0.0, r.turn) if r.turn > 0 else 0.0
        t = r.speed * np.array([np.cos(heading), np.sin(heading)])
        if r.speed_jitter > 0:
            t = t + motion_rng.normal(0.0, r.speed_jitter, 2)
        lin = motion_rng.normal(0.0, r.deformation, 4) if r.deformation > 0 else np.zeros(4)
        m = AffineMotion(t[0], lin[0], lin[1], t[1], lin[2], lin[3])
        truth.append(m)
        fields.append(render_field(m, centers, r, motion_rng, script.outlier_range))

    field_objs = [BlockMotionField(k, script.frame_width, script.frame_height, f)
                  for k, f in enumerate(fields)]

    words = world_rng.normal(0.0, script.word_spread,
                             (len(script.locations), script.words_per_location, script.descriptor_dim))
    desc_frames, desc_vecs = [], []
    for k in range(0, n, script.descriptor_stride):
        loc = acts[labels[k]].location
        pick = desc_rng.integers(0, script.words_per_location, script.descriptors_per_frame)
        v = words[loc, pick] + desc_rng.normal(0.0, script.descriptor_noise,
                                               (script.descriptors_per_frame, script.descriptor_dim))
        desc_frames.extend([k] * script.descriptors_per_frame)
        desc_vecs.append(v)

    images = np.stack([render_image(acts[lab].color, script.image_width, script.image_height, image_rng)
                       for lab in labels])

    io.write_motion_fields(out / "motion_fields.csv", field_objs, script.frame_width, script.frame_height)
    io.write_motions(out / "motion_truth.csv", truth)
    io.write_descriptors(out / "descriptors.csv", desc_frames, np.concatenate(desc_vecs))
    io.write_frame_stack(out / "frames.rgb", images)
    io.write_labels(out / "activity_labels.csv", labels, "activity")
    io.write_labels(out / "location_labels.csv",
                    [script.locations[acts[lab].location] for lab in labels], "location")
    io.write_matrix(out / "activity_transitions.csv", script.transition_matrix(), script.labels)
    io.write_json(out / "script.json", script.to_dict())

    manifest = io.DatasetManifest(
        n_frames=n, frame_width=script.frame_width, frame_height=script.frame_height,
        image_width=script.image_width, image_height=script.image_height,
        descriptor_dim=script.descriptor_dim, activities=script.labels,
        locations=list(script.locations), seed=seed,
        files={"motion_fields": "motion_fields.csv", "motion_truth": "motion_truth.csv",
               "descriptors": "descriptors.csv", "frames": "frames.rgb",
               "activity_labels": "activity_labels.csv", "location_labels": "location_labels.csv",
               "activity_transitions": "activity_transitions.csv", "script": "script.json"},
        root=str(out))
    manifest.save(out / "manifest.json")
    return manifest
