"""Columnar text, JSON and image file formats used between pipeline stages.

All floats are written with ``repr`` so they round-trip exactly, and every
write goes through a temporary file that is renamed into place.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .motion import AffineMotion, BlockMotionField, Segment


def atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_rows(rows):
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in rows)


def _parse_header(line):
    """``# key=value key=value`` -> dict of strings."""
    if not line.startswith("#"):
        raise ValueError(f"expected a '#' header line, got {line!r}")
    return dict(tok.split("=", 1) for tok in line[1:].split())


def _read_table(path, skip):
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return data


# --- motion fields ---------------------------------------------------------

MOTION_COLUMNS = "frame_index,cx,cy,dx,dy"


def write_motion_fields(path, fields, width, height):
    lines = [f"# width={width} height={height} frames={len(fields)}\n", MOTION_COLUMNS + "\n"]
    rows = []
    for f in fields:
        for v in f.vectors.tolist():
            rows.append([f.frame_index, *v])
    atomic_write(path, "".join(lines) + format_rows(rows))


def read_motion_fields(path):
    with open(path) as fh:
        meta = _parse_header(fh.readline())
    width, height, n = int(meta["width"]), int(meta["height"]), int(meta["frames"])
    data = _read_table(path, 2)
    if data.size == 0:
        data = np.empty((0, 5))
    idx = data[:, 0].astype(int)
    order = np.argsort(idx, kind="stable")
    idx, data = idx[order], data[order]
    bounds = np.searchsorted(idx, np.arange(n + 1))
    return [BlockMotionField(k, width, height, data[bounds[k]:bounds[k + 1], 1:])
            for k in range(n)], width, height


def write_motions(path, motions):
    rows = [[k, *m.as_array().tolist()] for k, m in enumerate(motions)]
    atomic_write(path, "frame_index,a1,a2,a3,a4,a5,a6\n" + format_rows(rows))


def read_motions(path):
    data = _read_table(path, 1)
    return [AffineMotion.from_array(r[1:]) for r in data]


# --- local descriptors -----------------------------------------------------

def write_descriptors(path, frame_index, vectors):
    vectors = np.asarray(vectors, dtype=float)
    dim = vectors.shape[1]
    head = f"# dim={dim}\n" + "frame_index," + ",".join(f"d{i}" for i in range(dim)) + "\n"
    rows = [[int(f), *v] for f, v in zip(frame_index, vectors.tolist())]
    atomic_write(path, head + format_rows(rows))


def read_descriptors(path):
    """Returns ``(frame_index array, (n, dim) array)``."""
    with open(path) as fh:
        dim = int(_parse_header(fh.readline())["dim"])
    data = _read_table(path, 2)
    if data.size == 0:
        return np.empty(0, dtype=int), np.empty((0, dim))
    if data.shape[1] != dim + 1:
        raise ValueError(f"{path}: header declares dim={dim}, rows have {data.shape[1] - 1}")
    return data[:, 0].astype(int), data[:, 1:]


# --- labels, segments, cuts ------------------------------------------------

def write_labels(path, labels, column="label"):
    atomic_write(path, f"frame_index,{column}\n" + "".join(f"{i},{lab}\n" for i, lab in enumerate(labels)))


def read_labels(path):
    out = []
    with open(path) as fh:
        fh.readline()
        for line in fh:
            line = line.rstrip("\n")
            if line:
                _, lab = line.split(",", 1)
                out.append(lab)
    return out


def write_segments(path, segments):
    rows = [[s.start_frame, s.end_frame, s.key_frame] for s in segments]
    atomic_write(path, "start_frame,end_frame,key_frame\n" + format_rows(rows))


def read_segments(path):
    data = _read_table(path, 1).astype(int)
    return [Segment(int(r[0]), int(r[1])) for r in data]


def write_cuts(path, cuts):
    atomic_write(path, "cut_frame\n" + "".join(f"{int(c)}\n" for c in cuts))


def read_cuts(path):
    with open(path) as fh:
        fh.readline()
        return [int(line) for line in fh if line.strip()]


def write_matrix(path, matrix, labels):
    head = "label," + ",".join(labels) + "\n"
    rows = [[lab, *row] for lab, row in zip(labels, np.asarray(matrix).tolist())]
    atomic_write(path, head + format_rows(rows))


def read_matrix(path):
    with open(path) as fh:
        labels = fh.readline().rstrip("\n").split(",")[1:]
        rows = [[float(v) for v in line.rstrip("\n").split(",")[1:]] for line in fh if line.strip()]
    return np.array(rows), labels


# --- segment descriptor tables ---------------------------------------------

def write_descriptor_table(path, values, layout):
    """One row per segment, preceded by ``# layout=name:offset:length;...``."""
    values = np.asarray(values, dtype=float)
    spec = ";".join(f"{n}:{o}:{ln}" for n, o, ln in layout)
    cols = ["segment"] + [f"{n}{i}" for n, _, ln in layout for i in range(ln)]
    rows = [[k, *v] for k, v in enumerate(values.tolist())]
    atomic_write(path, f"# layout={spec}\n" + ",".join(cols) + "\n" + format_rows(rows))


def read_descriptor_table(path):
    with open(path) as fh:
        meta = _parse_header(fh.readline())
    layout = []
    for tok in meta["layout"].split(";"):
        n, o, ln = tok.split(":")
        layout.append((n, int(o), int(ln)))
    data = _read_table(path, 2)
    return data[:, 1:], tuple(layout)


# --- images ----------------------------------------------------------------

def write_ppm(path, image):
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape[:2]
    atomic_write(path, f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM supported")
    pos += 1
    return np.frombuffer(raw[pos:pos + w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def write_frame_stack(path, frames):
    """Planar 8-bit RGB frames, (n, 3, h, w) on disk, with a JSON sidecar."""
    frames = np.asarray(frames, dtype=np.uint8)
    n, h, w, _ = frames.shape
    atomic_write(path, np.ascontiguousarray(frames.transpose(0, 3, 1, 2)).tobytes())
    write_json(str(path) + ".json", {"frames": n, "height": h, "width": w, "layout": "planar_rgb8"})


class FrameStack:
    """Random access to a planar RGB frame stack; frames come back as (h, w, 3)."""

    def __init__(self, path):
        meta = read_json(str(path) + ".json")
        self.n, self.height, self.width = meta["frames"], meta["height"], meta["width"]
        self._data = np.memmap(path, dtype=np.uint8, mode="r",
                               shape=(self.n, 3, self.height, self.width))

    def __len__(self):
        return self.n

    def __getitem__(self, k):
        return np.asarray(self._data[k]).transpose(1, 2, 0)


# --- dataset manifest -------------------------------------------------------

@dataclass
class DatasetManifest:
    """Where a dataset's files live (relative to the manifest) plus its shape."""

    n_frames: int
    frame_width: int
    frame_height: int
    image_width: int
    image_height: int
    descriptor_dim: int
    activities: list
    locations: list
    files: dict = field(default_factory=dict)
    seed: int | None = None
    root: str = field(default=".", compare=False)

    def path(self, key):
        return Path(self.root) / self.files[key]

    def to_dict(self):
        d = asdict(self)
        d.pop("root")
        return d

    def save(self, path):
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        d = read_json(path)
        return cls(**d, root=str(Path(path).parent))
