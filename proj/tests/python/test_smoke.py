"""Smoke tests for the pybind11 module."""

import json
import math

import numpy as np
import pytest

import pointmtl


def test_synth_and_normalize():
    pts, parts = pointmtl.synth_generate("cylinder", m=64, noise=0.0, seed=3)
    assert pts.shape == (64, 3)
    assert len(parts) == 64
    assert set(parts) == {0, 1}
    norms = np.linalg.norm(pts, axis=1)
    assert norms.max() == pytest.approx(1.0, abs=1e-9)

    again, _ = pointmtl.synth_generate("cylinder", m=64, noise=0.0, seed=3)
    assert np.array_equal(pts, again)

    with pytest.raises(pointmtl.CoreError):
        pointmtl.synth_generate("pyramid", m=64)


def test_knn_matches_manual_check():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    idx = pointmtl.knn(pts, 1)
    assert idx.tolist() == [[1], [0], [1]]


def test_chamfer_micro_values():
    a = np.array([[0.0, 0.0, 0.0]])
    b = np.array([[1.0, 0.0, 0.0]])
    assert pointmtl.chamfer(a, b) == pytest.approx(1.0, abs=1e-12)

    a2 = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    b2 = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert pointmtl.chamfer(a2, b2) == pytest.approx(1.25, abs=1e-12)
    assert pointmtl.chamfer(a2, a2) == 0.0


def test_nmi_and_majority_vote():
    assert pointmtl.nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-12)
    assert pointmtl.nmi([0, 0, 1, 1], [5, 5, 9, 9]) == pytest.approx(1.0, abs=1e-12)
    assert pointmtl.majority_vote_accuracy([0, 0, 0], [0, 0, 1]) == pytest.approx(2 / 3)


def test_ahc_groups_separated_pairs():
    feats = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
    labels = pointmtl.ahc_cluster(feats, 2)
    assert labels[0] == labels[1]
    assert labels[2] == labels[3]
    assert labels[0] != labels[2]


def test_config_round_trip():
    cfg = json.loads(pointmtl.desk_config())
    assert cfg["model"]["m"] == 256
    assert cfg["model"]["k_ub"] == 32
    assert cfg["train"]["weights"]["gamma"] == 500.0
    full = json.loads(pointmtl.default_config())
    assert full["model"]["d_shape"] == 512


def test_tiny_training_run(tmp_path):
    root = tmp_path / "data"
    root.mkdir()
    rng = np.random.default_rng(0)
    lines = []
    for i, kind in enumerate(["sphere", "cube", "cylinder", "torus"] * 2):
        pts, parts = pointmtl.synth_generate(kind, m=32, noise=0.0, seed=100 + i)
        name = f"{kind}_{i}.txt"
        with open(root / name, "w") as f:
            for j, p in enumerate(pts):
                row = f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}"
                if len(parts) > 0:
                    row += f" {parts[j]}"
                f.write(row + "\n")
        split = "train" if i < 6 else "test"
        lines.append(f"{name}\t{kind}\t{split}")
    (root / "manifest.tsv").write_text("\n".join(lines) + "\n")

    cfg = json.loads(pointmtl.default_config())
    cfg["model"] = {
        "m": 32,
        "k_list": [4, 6],
        "edge_width": 4,
        "point_conv_width": 4,
        "stack_widths": [8, 12],
        "d_shape": 8,
        "d_point": 20,
        "k_ub": 4,
        "classifier_widths": [8],
        "decoder_widths": [8],
    }
    cfg["train"]["batch_size"] = 3
    cfg["train"]["epochs"] = 2
    cfg["seed"] = 11
    ckpt = tmp_path / "tiny.ckpt"
    history = pointmtl.train(
        json.dumps(cfg), dataset_root=str(root), manifest="manifest.tsv", checkpoint=str(ckpt)
    )
    assert len(history) == 2
    for row in history:
        assert math.isfinite(row["loss"])
        assert 1 <= row["nonempty_clusters"] <= 4
        assert 0.0 <= row["nmi"] <= 1.0
    assert ckpt.exists()

    # Frozen features from the checkpoint.
    feats, labels = pointmtl.extract_shape_features(
        json.dumps(cfg), str(ckpt), dataset_root=str(root), manifest="manifest.tsv", split="train"
    )
    assert feats.shape == (6, 8)
    assert len(labels) == 6

    pts, _ = pointmtl.synth_generate("sphere", m=32, noise=0.0, seed=5)
    shape_feat, point_feats = pointmtl.encode(json.dumps(cfg), str(ckpt), pts)
    assert shape_feat.shape == (1, 8)
    assert point_feats.shape == (32, 20)
