import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from icfdet import boost, dataio, synth
from icfdet import channels as ch
from icfdet.boxes import Annotation, BoundingBox, Detection


def dir_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestImages:
    def test_single_red_pixel(self, tmp_path):
        path = tmp_path / "px.png"
        dataio.save_image(np.array([[[1.0, 0.0, 0.0]]]), path)
        frame = dataio.load_image(path)
        assert frame.shape == (1, 1, 3)
        assert np.array_equal(frame[0, 0], [1.0, 0.0, 0.0])

    @pytest.mark.parametrize("suffix", [".png", ".ppm"])
    def test_write_read_quantization_bound(self, tmp_path, suffix):
        rng = np.random.default_rng(0)
        frame = rng.random((20, 30, 3))
        path = tmp_path / f"img{suffix}"
        dataio.save_image(frame, path)
        back = dataio.load_image(path)
        assert np.abs(back - frame).max() <= 1.0 / 510.0 + 1e-12

    def test_truncated_file_errors(self, tmp_path):
        path = tmp_path / "bad.png"
        good = tmp_path / "good.png"
        dataio.save_image(np.zeros((8, 8, 3)), good)
        path.write_bytes(good.read_bytes()[:30])
        with pytest.raises(dataio.DataError):
            dataio.load_image(path)

    def test_unsupported_suffix(self, tmp_path):
        with pytest.raises(dataio.DataError):
            dataio.load_image(tmp_path / "img.jpg")


class TestManifest:
    def test_empty_manifest(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text(json.dumps({"format_version": 1, "split": "test", "images": []}))
        index = dataio.load_dataset(path)
        assert index.entries == [] and index.split == "test"

    def test_missing_image_reported_with_path(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(
            json.dumps(
                {
                    "format_version": 1,
                    "images": [{"id": "a", "path": "nope.png", "annotations": []}],
                }
            )
        )
        with pytest.raises(dataio.DataError, match="nope.png"):
            dataio.load_dataset(path)

    def test_duplicate_id_rejected(self, tmp_path):
        dataio.save_image(np.zeros((4, 4, 3)), tmp_path / "a.png")
        path = tmp_path / "m.json"
        rec = {"id": "a", "path": "a.png", "annotations": []}
        path.write_text(json.dumps({"format_version": 1, "images": [rec, rec]}))
        with pytest.raises(dataio.DataError, match="duplicate"):
            dataio.load_dataset(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"format_version": 99, "images": []}))
        with pytest.raises(dataio.DataError, match="version"):
            dataio.load_dataset(path)

    def test_round_trip(self, tmp_path):
        dataio.save_image(np.zeros((6, 6, 3)), tmp_path / "img.png")
        index = dataio.DatasetIndex(
            root=tmp_path,
            split="train",
            temporal=False,
            entries=[
                dataio.ImageEntry(
                    image_id="img0",
                    path="img.png",
                    annotations=[Annotation("img0", BoundingBox(1, 2, 3, 4))],
                )
            ],
        )
        m1 = tmp_path / "m1.json"
        m2 = tmp_path / "m2.json"
        dataio.save_dataset(index, m1)
        loaded = dataio.load_dataset(m1)
        dataio.save_dataset(loaded, m2)
        assert m1.read_bytes() == m2.read_bytes()
        assert loaded.entries[0].annotations[0].box == BoundingBox(1, 2, 3, 4)


class TestSynth:
    def test_same_config_byte_identical(self, tmp_path):
        cfg = synth.SynthConfig(
            seed=3, n_train_images=2, n_test_images=1, image_w=160, image_h=140,
            target_h_min=80, target_h_max=100, temporal=True, context=True,
            static_decoys=True,
        )
        synth.generate(cfg, tmp_path / "a")
        synth.generate(cfg, tmp_path / "b")
        assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")

    def test_zero_targets_means_no_annotations(self, tmp_path):
        cfg = synth.SynthConfig(
            seed=1, n_train_images=2, n_test_images=1, image_w=160, image_h=140,
            targets_min=0, targets_max=0, target_h_min=80, target_h_max=100,
        )
        out = synth.generate(cfg, tmp_path)
        assert all(not e.annotations for e in out.train_index.entries)

    def test_annotations_inside_image_and_exact(self, tmp_path):
        cfg = synth.SynthConfig(
            seed=2, n_train_images=3, n_test_images=1, image_w=200, image_h=170,
            target_h_min=80, target_h_max=120,
        )
        out = synth.generate(cfg, tmp_path)
        for e in out.train_index.entries:
            assert e.annotations  # targets requested per image
            for a in e.annotations:
                b = a.box
                assert b.x >= 0 and b.y >= 0
                assert b.x + b.w <= cfg.image_w and b.y + b.h <= cfg.image_h
                assert b.w == pytest.approx(int(b.h) // 2)

    def test_manifest_loads_back(self, tmp_path):
        cfg = synth.SynthConfig(
            seed=4, n_train_images=1, n_test_images=1, image_w=160, image_h=140,
            target_h_min=80, target_h_max=100, temporal=True,
        )
        out = synth.generate(cfg, tmp_path)
        index = dataio.load_dataset(out.train_manifest)
        assert index.temporal
        trip = dataio.load_triplet(index, index.entries[0])
        assert trip.frame_t.shape == (140, 160, 3)

    def test_gray_decoys_luminance_matched(self):
        # colored and gray figures from the same rng settings must agree in Y
        rng1 = np.random.default_rng(5)
        rng2 = np.random.default_rng(5)
        cfg = synth.SynthConfig()
        colored = synth._ped_colors(rng1, cfg, chroma=True)
        gray = synth._ped_colors(rng2, cfg, chroma=False)
        w = ch.LUMA_WEIGHTS / ch.LUMA_WEIGHTS.sum()
        for part in ("head", "torso", "legs"):
            assert float(w @ colored[part]) == pytest.approx(
                float(w @ gray[part]), abs=1e-12
            )
        assert not np.allclose(colored["torso"], gray["torso"])


class TestModelFiles:
    def test_round_trip_preserves_scores(self, tiny_model, tmp_path):
        model, _, cfg = tiny_model
        path = tmp_path / "model.json"
        dataio.save_model(model, path)
        back = dataio.load_model(path)
        rng = np.random.default_rng(8)
        for _ in range(100):
            vec = rng.random(len(model.pool)) * 50.0
            assert boost.score_vector(model, vec) == boost.score_vector(back, vec)
        assert back.trees == model.trees

    def test_save_is_deterministic(self, tiny_model, tmp_path):
        model, _, _ = tiny_model
        dataio.save_model(model, tmp_path / "a.json")
        dataio.save_model(model, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_version_bump_rejected(self, tiny_model, tmp_path):
        model, _, _ = tiny_model
        path = tmp_path / "model.json"
        dataio.save_model(model, path)
        doc = json.loads(path.read_text())
        doc["version"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(dataio.ModelFormatError, match="version"):
            dataio.load_model(path)

    def test_checksum_tamper_rejected(self, tiny_model, tmp_path):
        model, _, _ = tiny_model
        path = tmp_path / "model.json"
        dataio.save_model(model, path)
        doc = json.loads(path.read_text())
        doc["model"]["trees"][0]["alpha"] *= 1.5
        path.write_text(json.dumps(doc))
        with pytest.raises(dataio.ModelFormatError, match="checksum"):
            dataio.load_model(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("")
        with pytest.raises(dataio.ModelFormatError):
            dataio.load_model(path)


class TestDetectionsFiles:
    def test_empty_round_trip(self, tmp_path):
        path = tmp_path / "dets.txt"
        dataio.write_detections([], path)
        assert dataio.read_detections(path) == []

    def test_thousand_random_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        dets = [
            Detection(
                f"img_{int(rng.integers(0, 50)):03d}",
                BoundingBox(*(float(v) for v in rng.uniform(0.01, 500, 4))),
                float(rng.standard_normal() * 10),
            )
            for _ in range(1000)
        ]
        path = tmp_path / "dets.txt"
        dataio.write_detections(dets, path)
        back = dataio.read_detections(path)
        assert back == dets  # exact float round trip, order preserved

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "dets.txt"
        path.write_text("# icfdet-detections 1\nimg 1.0 2.0 3.0 4.0 5.0\nimg 1 2 3 4\n")
        with pytest.raises(dataio.DataError, match=":3"):
            dataio.read_detections(path)
