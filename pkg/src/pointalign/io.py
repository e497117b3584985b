"""File formats for every on-disk artifact.

Binary formats are little-endian with a 4-byte magic:

* ``PCF1`` point cloud: u32 count, u8 has-intensity flag, then per point
  3 (or 4, with intensity) float32 values.
* ``DPT1`` depth image: u32 width, u32 height, then row-major float32 meters
  (values <= 0 invalid).
* ``EMB1`` embeddings: u32 dim, u32 count, then per entry a u32
  length-prefixed UTF-8 key and dim float32 values.
* ``TRP1`` triplets: u32 dim, u32 count, then per record u32 caption index,
  dim float32 image embedding, u32 point count, point float32 triples, and
  length-prefixed scene/instance ids.
* ``ENC1`` encoder checkpoint: u32 h1/h2/h3/C header then the eight layer
  tensors as float32 (w1, b1, w2, b2, w3, b3, w4, b4, row-major).

Text formats: calibrations as ``key = v1 v2 ...`` lines with row-major
matrices; detections as TSV ``scene_id u_min v_min u_max v_max score
caption_index`` rows; logits as ``instance_id p1 ... pK``; predictions as
``instance_id cx cy cz name1 p1 ...`` rows.
"""

import struct

import numpy as np

from .collect import TripletRecord, check_vocabulary
from .encoder import EncoderParams
from .geometry import Box2D, CameraCalibration

MAGIC_POINTS = b"PCF1"
MAGIC_DEPTH = b"DPT1"
MAGIC_EMBEDDINGS = b"EMB1"
MAGIC_TRIPLETS = b"TRP1"
MAGIC_ENCODER = b"ENC1"


class FormatError(ValueError):
    """Raised on malformed, truncated or mislabeled files."""


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u8(self):
        return self.take(1)[0]

    def f32(self, n):
        return np.frombuffer(self.take(4 * n), dtype="<f4").astype(np.float64)

    def string(self):
        return self.take(self.u32()).decode("utf-8")

    def expect_magic(self, magic):
        got = self.take(4)
        if got != magic:
            raise FormatError(f"{self.path}: bad magic {got!r}, expected {magic!r}")

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


def _read_binary(path):
    with open(path, "rb") as fh:
        return _Reader(fh.read(), str(path))


def _pack_string(s):
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _f32_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


# -- point clouds -----------------------------------------------------------


def write_point_cloud(path, points, intensity=None):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
    parts = [MAGIC_POINTS, struct.pack("<IB", pts.shape[0], 1 if intensity is not None else 0)]
    if intensity is not None:
        inten = np.asarray(intensity, dtype=np.float64).reshape(-1)
        if inten.shape[0] != pts.shape[0]:
            raise ValueError("intensity must align with points")
        parts.append(_f32_bytes(np.column_stack([pts, inten])))
    else:
        parts.append(_f32_bytes(pts))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_point_cloud(path):
    r = _read_binary(path)
    r.expect_magic(MAGIC_POINTS)
    count = r.u32()
    has_intensity = r.u8()
    width = 4 if has_intensity else 3
    flat = r.f32(count * width)
    r.done()
    rows = flat.reshape(count, width)
    return rows[:, :3].copy(), (rows[:, 3].copy() if has_intensity else None)


# -- depth images -----------------------------------------------------------


def write_depth_image(path, depth):
    grid = np.asarray(depth, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"depth must be 2D, got {grid.shape}")
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_DEPTH + struct.pack("<II", w, h) + _f32_bytes(grid))


def read_depth_image(path):
    r = _read_binary(path)
    r.expect_magic(MAGIC_DEPTH)
    w = r.u32()
    h = r.u32()
    grid = r.f32(w * h).reshape(h, w)
    r.done()
    return grid


# -- calibrations -----------------------------------------------------------

_CALIB_KEYS = {"intrinsics": (3, 3), "camera_extrinsics": (4, 4), "lidar_extrinsics": (4, 4)}


def write_calibration(path, calib):
    lines = ["# pointalign camera calibration (row-major matrices)"]
    for key, _ in _CALIB_KEYS.items():
        values = " ".join(f"{v:.17g}" for v in np.asarray(getattr(calib, key)).reshape(-1))
        lines.append(f"{key} = {values}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_calibration(path):
    found = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = values'")
            key, _, rest = line.partition("=")
            key = key.strip()
            if key not in _CALIB_KEYS:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
            shape = _CALIB_KEYS[key]
            try:
                values = np.array([float(v) for v in rest.split()])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if values.size != shape[0] * shape[1]:
                raise FormatError(
                    f"{path}:{lineno}: {key} needs {shape[0] * shape[1]} values, got {values.size}"
                )
            found[key] = values.reshape(shape)
    missing = [k for k in ("intrinsics", "camera_extrinsics") if k not in found]
    if missing:
        raise FormatError(f"{path}: missing keys {missing}")
    return CameraCalibration(
        intrinsics=found["intrinsics"],
        camera_extrinsics=found["camera_extrinsics"],
        lidar_extrinsics=found.get("lidar_extrinsics"),
    )


# -- detections -------------------------------------------------------------


def write_detections(path, rows):
    """Write (scene_id, Box2D) pairs as tab-separated text."""
    lines = []
    for scene_id, box in rows:
        lines.append(
            "\t".join(
                [
                    scene_id,
                    f"{box.u_min:.17g}",
                    f"{box.v_min:.17g}",
                    f"{box.u_max:.17g}",
                    f"{box.v_max:.17g}",
                    f"{box.score:.17g}",
                    str(box.label_index),
                ]
            )
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def read_detections(path, score_threshold=0.3):
    """Read detections grouped by scene, dropping rows below the threshold."""
    per_scene = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 7:
                raise FormatError(f"{path}:{lineno}: expected 7 tab-separated fields")
            try:
                box = Box2D(
                    u_min=float(parts[1]),
                    v_min=float(parts[2]),
                    u_max=float(parts[3]),
                    v_max=float(parts[4]),
                    score=float(parts[5]),
                    label_index=int(parts[6]),
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if box.score < score_threshold:
                continue
            per_scene.setdefault(parts[0], []).append(box)
    return per_scene


# -- vocabulary --------------------------------------------------------------


def read_vocabulary(path):
    with open(path, "r", encoding="utf-8") as fh:
        captions = [line.strip() for line in fh if line.strip()]
    return check_vocabulary(captions)


def write_vocabulary(path, captions):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(captions) + "\n")


# -- embeddings ---------------------------------------------------------------


def write_embeddings(path, dim, table):
    parts = [MAGIC_EMBEDDINGS, struct.pack("<II", dim, len(table))]
    for key, vec in table.items():
        arr = np.asarray(vec, dtype=np.float64).reshape(-1)
        if arr.shape[0] != dim:
            raise ValueError(f"embedding for {key!r} has dimension {arr.shape[0]}, expected {dim}")
        parts.append(_pack_string(key))
        parts.append(_f32_bytes(arr))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_embeddings(path):
    r = _read_binary(path)
    r.expect_magic(MAGIC_EMBEDDINGS)
    dim = r.u32()
    count = r.u32()
    table = {}
    for _ in range(count):
        key = r.string()
        table[key] = r.f32(dim)
    r.done()
    return dim, table


# -- triplet records ----------------------------------------------------------


def write_triplets(path, records, dim):
    parts = [MAGIC_TRIPLETS, struct.pack("<II", dim, len(records))]
    for rec in records:
        if rec.image_embedding.shape[0] != dim:
            raise ValueError(
                f"record {rec.instance_id}: embedding dimension "
                f"{rec.image_embedding.shape[0]} != {dim}"
            )
        parts.append(struct.pack("<I", rec.caption_index))
        parts.append(_f32_bytes(rec.image_embedding))
        parts.append(struct.pack("<I", rec.points.shape[0]))
        parts.append(_f32_bytes(rec.points))
        parts.append(_pack_string(rec.scene_id))
        parts.append(_pack_string(rec.instance_id))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_triplets(path):
    r = _read_binary(path)
    r.expect_magic(MAGIC_TRIPLETS)
    dim = r.u32()
    count = r.u32()
    records = []
    for _ in range(count):
        caption_index = r.u32()
        embedding = r.f32(dim).astype(np.float32)
        n_points = r.u32()
        points = r.f32(n_points * 3).reshape(n_points, 3).astype(np.float32)
        scene_id = r.string()
        instance_id = r.string()
        records.append(
            TripletRecord(
                caption_index=caption_index,
                image_embedding=embedding,
                points=points,
                scene_id=scene_id,
                instance_id=instance_id,
            )
        )
    r.done()
    return dim, records


# -- encoder checkpoints -------------------------------------------------------


def encoder_bytes(params):
    h1, h2, h3 = params.hidden_sizes
    parts = [MAGIC_ENCODER, struct.pack("<IIII", h1, h2, h3, params.embed_dim)]
    for _, arr in params.layers():
        parts.append(_f32_bytes(arr))
    return b"".join(parts)


def save_encoder(path, params):
    with open(path, "wb") as fh:
        fh.write(encoder_bytes(params))


def load_encoder(path):
    r = _read_binary(path)
    r.expect_magic(MAGIC_ENCODER)
    h1, h2, h3, dim = (r.u32() for _ in range(4))
    shapes = [
        (h1, 3), (h1,), (h2, h1), (h2,), (h3, h2), (h3,), (dim, h3), (dim,),
    ]
    arrays = [r.f32(int(np.prod(s))).reshape(s) for s in shapes]
    r.done()
    return EncoderParams(*arrays)


# -- logits, predictions, step logs ---------------------------------------------


def write_logits(path, instance_ids, probs):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[0] != len(instance_ids):
        raise ValueError("one probability row per instance id required")
    lines = []
    for inst, row in zip(instance_ids, probs):
        lines.append("\t".join([inst] + [f"{p:.12g}" for p in row]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def read_logits(path):
    ids, rows = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise FormatError(f"{path}:{lineno}: expected instance id plus probabilities")
            try:
                row = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            ids.append(parts[0])
            rows.append(row)
    if rows and len({r.shape[0] for r in rows}) != 1:
        raise FormatError(f"{path}: inconsistent class counts across rows")
    return ids, (np.stack(rows) if rows else np.empty((0, 0)))


def write_predictions(path, rows):
    """Rows of (instance_id, center xyz, [(class_name, prob), ...])."""
    lines = []
    for inst, center, ranked in rows:
        fields = [inst] + [f"{c:.9g}" for c in center]
        for name, prob in ranked:
            fields.append(name)
            fields.append(f"{prob:.12g}")
        lines.append("\t".join(fields))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def read_predictions(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 6 or (len(parts) - 4) % 2 != 0:
                raise FormatError(f"{path}:{lineno}: malformed prediction row")
            try:
                center = np.array([float(v) for v in parts[1:4]])
                ranked = [
                    (parts[i], float(parts[i + 1])) for i in range(4, len(parts), 2)
                ]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            rows.append((parts[0], center, ranked))
    return rows


def write_labels(path, rows):
    """Rows of (instance_id, class_name, center xyz)."""
    lines = []
    for inst, name, center in rows:
        lines.append("\t".join([inst, name] + [f"{c:.9g}" for c in center]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def read_labels(path):
    rows = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 tab-separated fields")
            try:
                center = np.array([float(v) for v in parts[2:5]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if parts[0] in rows:
                raise FormatError(f"{path}:{lineno}: duplicate instance id {parts[0]!r}")
            rows[parts[0]] = (parts[1], center)
    return rows
