import numpy as np
import pytest

from pointalign import io
from pointalign.collect import TripletRecord
from pointalign.encoder import init_params
from pointalign.geometry import Box2D, CameraCalibration
from reference import random_intrinsics, random_rigid


def test_point_cloud_roundtrip(tmp_path):
    pts = np.random.default_rng(0).normal(size=(50, 3)).astype(np.float32)
    path = tmp_path / "cloud.pcf"
    io.write_point_cloud(path, pts)
    got, intensity = io.read_point_cloud(path)
    np.testing.assert_array_equal(got.astype(np.float32), pts)
    assert intensity is None


def test_point_cloud_intensity_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(20, 3)).astype(np.float32)
    inten = rng.uniform(size=20).astype(np.float32)
    path = tmp_path / "cloud.pcf"
    io.write_point_cloud(path, pts, inten)
    got, got_inten = io.read_point_cloud(path)
    np.testing.assert_array_equal(got.astype(np.float32), pts)
    np.testing.assert_array_equal(got_inten.astype(np.float32), inten)


def test_point_cloud_magic_and_truncation(tmp_path):
    path = tmp_path / "cloud.pcf"
    io.write_point_cloud(path, np.zeros((5, 3)))
    raw = path.read_bytes()
    (tmp_path / "bad.pcf").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(io.FormatError, match="magic"):
        io.read_point_cloud(tmp_path / "bad.pcf")
    (tmp_path / "trunc.pcf").write_bytes(raw[:-7])
    with pytest.raises(io.FormatError, match="truncated"):
        io.read_point_cloud(tmp_path / "trunc.pcf")


def test_depth_image_roundtrip(tmp_path):
    grid = np.random.default_rng(2).uniform(0.5, 5.0, size=(12, 17)).astype(np.float32)
    path = tmp_path / "frame.dpt"
    io.write_depth_image(path, grid)
    got = io.read_depth_image(path)
    assert got.shape == (12, 17)
    np.testing.assert_array_equal(got.astype(np.float32), grid)


def test_calibration_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    calib = CameraCalibration(random_intrinsics(rng), random_rigid(rng), random_rigid(rng))
    path = tmp_path / "cam.calib"
    io.write_calibration(path, calib)
    got = io.read_calibration(path)
    np.testing.assert_allclose(got.intrinsics, calib.intrinsics, atol=1e-12)
    np.testing.assert_allclose(got.camera_extrinsics, calib.camera_extrinsics, atol=1e-12)
    np.testing.assert_allclose(got.lidar_extrinsics, calib.lidar_extrinsics, atol=1e-12)


def test_calibration_errors(tmp_path):
    path = tmp_path / "cam.calib"
    path.write_text("intrinsics = 1 2 3\n")
    with pytest.raises(io.FormatError, match="9 values"):
        io.read_calibration(path)
    path.write_text("bogus_key = 1\n")
    with pytest.raises(io.FormatError, match="unknown key"):
        io.read_calibration(path)
    path.write_text("intrinsics = 1 0 0 0 1 0 0 0 1\n")
    with pytest.raises(io.FormatError, match="missing"):
        io.read_calibration(path)


def test_detections_roundtrip_and_threshold(tmp_path):
    rows = [
        ("scene_a", Box2D(1.0, 2.0, 30.0, 40.0, score=0.9, label_index=3)),
        ("scene_a", Box2D(5.0, 5.0, 10.0, 10.0, score=0.2, label_index=1)),
        ("scene_b", Box2D(0.0, 0.0, 8.0, 8.0, score=0.31, label_index=0)),
    ]
    path = tmp_path / "det.tsv"
    io.write_detections(path, rows)
    per_scene = io.read_detections(path, score_threshold=0.3)
    assert set(per_scene) == {"scene_a", "scene_b"}
    assert len(per_scene["scene_a"]) == 1  # 0.2 filtered out
    box = per_scene["scene_a"][0]
    assert (box.u_min, box.v_min, box.u_max, box.v_max) == (1.0, 2.0, 30.0, 40.0)
    assert box.label_index == 3
    # threshold 0 keeps everything
    assert len(io.read_detections(path, score_threshold=0.0)["scene_a"]) == 2


def test_detections_malformed(tmp_path):
    path = tmp_path / "det.tsv"
    path.write_text("scene\t1\t2\t3\n")
    with pytest.raises(io.FormatError):
        io.read_detections(path)


def test_vocabulary_roundtrip(tmp_path):
    path = tmp_path / "vocab.txt"
    io.write_vocabulary(path, ["crate", "ball", "post"])
    assert io.read_vocabulary(path) == ["crate", "ball", "post"]
    path.write_text("a\nA\n")
    with pytest.raises(ValueError, match="duplicate"):
        io.read_vocabulary(path)


def test_embeddings_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    table = {f"key {i}": rng.normal(size=8).astype(np.float32) for i in range(5)}
    path = tmp_path / "table.emb"
    io.write_embeddings(path, 8, table)
    dim, got = io.read_embeddings(path)
    assert dim == 8
    assert set(got) == set(table)
    for key in table:
        np.testing.assert_array_equal(got[key].astype(np.float32), table[key])


def test_embeddings_dimension_enforced(tmp_path):
    with pytest.raises(ValueError):
        io.write_embeddings(tmp_path / "x.emb", 4, {"k": np.zeros(3)})


def make_records(n=4, dim=6):
    rng = np.random.default_rng(5)
    return [
        TripletRecord(
            caption_index=int(rng.integers(0, 3)),
            image_embedding=rng.normal(size=dim).astype(np.float32),
            points=rng.normal(size=(int(rng.integers(1, 9)), 3)).astype(np.float32),
            scene_id=f"scene_{i}",
            instance_id=f"scene_{i}:0",
        )
        for i in range(n)
    ]


def test_triplets_roundtrip_bitwise(tmp_path):
    records = make_records()
    path = tmp_path / "data.trp"
    io.write_triplets(path, records, 6)
    payload = path.read_bytes()
    dim, got = io.read_triplets(path)
    assert dim == 6
    assert len(got) == len(records)
    for a, b in zip(records, got):
        assert a.caption_index == b.caption_index
        assert a.scene_id == b.scene_id and a.instance_id == b.instance_id
        np.testing.assert_array_equal(a.image_embedding, b.image_embedding)
        np.testing.assert_array_equal(a.points, b.points)
    # re-serializing the parsed records reproduces the payload bit for bit
    io.write_triplets(tmp_path / "again.trp", got, dim)
    assert (tmp_path / "again.trp").read_bytes() == payload


def test_triplets_empty_and_truncated(tmp_path):
    path = tmp_path / "empty.trp"
    io.write_triplets(path, [], 4)
    dim, got = io.read_triplets(path)
    assert dim == 4 and got == []
    full = tmp_path / "full.trp"
    io.write_triplets(full, make_records(), 6)
    raw = full.read_bytes()
    trunc = tmp_path / "trunc.trp"
    trunc.write_bytes(raw[:-3])
    with pytest.raises(io.FormatError, match="truncated"):
        io.read_triplets(trunc)


def test_encoder_checkpoint_roundtrip(tmp_path):
    params = init_params(8, 16, 12, 6, seed=0)
    # float32-representable weights round trip exactly
    for _, arr in params.layers():
        arr[...] = arr.astype(np.float32)
    path = tmp_path / "enc.ckpt"
    io.save_encoder(path, params)
    got = io.load_encoder(path)
    assert got.hidden_sizes == (8, 16, 12)
    assert got.embed_dim == 6
    for (_, a), (_, b) in zip(params.layers(), got.layers()):
        np.testing.assert_array_equal(a, b)
    # and saving the loaded params reproduces the same bytes
    io.save_encoder(tmp_path / "enc2.ckpt", got)
    assert (tmp_path / "enc2.ckpt").read_bytes() == path.read_bytes()


def test_logits_roundtrip(tmp_path):
    ids = ["a:0", "a:1", "b:0"]
    probs = np.array([[0.2, 0.8], [0.5, 0.5], [1.0, 0.0]])
    path = tmp_path / "logits.tsv"
    io.write_logits(path, ids, probs)
    got_ids, got = io.read_logits(path)
    assert got_ids == ids
    np.testing.assert_allclose(got, probs, atol=1e-12)


def test_logits_inconsistent_rows(tmp_path):
    path = tmp_path / "logits.tsv"
    path.write_text("a\t0.5\t0.5\nb\t1.0\n")
    with pytest.raises(io.FormatError):
        io.read_logits(path)


def test_predictions_roundtrip(tmp_path):
    rows = [
        ("s:0", np.array([1.0, 2.0, 3.0]), [("crate", 0.9), ("ball", 0.1)]),
        ("s:1", np.array([-1.0, 0.5, 2.25]), [("ball", 0.7), ("post", 0.3)]),
    ]
    path = tmp_path / "preds.tsv"
    io.write_predictions(path, rows)
    got = io.read_predictions(path)
    assert len(got) == 2
    for (inst, center, ranked), (gi, gc, gr) in zip(rows, got):
        assert inst == gi
        np.testing.assert_allclose(gc, center, atol=1e-7)
        assert [name for name, _ in gr] == [name for name, _ in ranked]


def test_labels_roundtrip_and_duplicates(tmp_path):
    path = tmp_path / "labels.tsv"
    io.write_labels(path, [("s:0", "crate", np.array([0.0, 1.0, 2.0]))])
    got = io.read_labels(path)
    assert got["s:0"][0] == "crate"
    np.testing.assert_allclose(got["s:0"][1], [0.0, 1.0, 2.0])
    path.write_text("a\tcrate\t0\t0\t0\na\tball\t0\t0\t0\n")
    with pytest.raises(io.FormatError, match="duplicate"):
        io.read_labels(path)
