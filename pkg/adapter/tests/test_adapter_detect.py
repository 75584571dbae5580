import json

import numpy as np
import pytest

from nucleval_adapter import AdapterConfig, AdapterError, ClassicDetector, detect_dir

from _adapter_helpers import run_adapter, write_gray_png


def _detector(**kw) -> ClassicDetector:
    return ClassicDetector(AdapterConfig(**kw))


class TestClassicDetector:
    def test_blank_image_yields_no_detections(self):
        img = np.full((32, 32), 128, dtype=np.uint8)
        assert _detector().detect(img, 32, 32) == []

    def test_single_blob_is_covered_by_a_detection(self):
        img = np.full((40, 50), 10, dtype=np.uint8)
        img[8:20, 12:30] = 235
        dets = _detector().detect(img, 40, 50)
        assert len(dets) >= 1
        covering = [
            d for d in dets
            if d["bbox"][0] <= 12 and d["bbox"][1] <= 8
            and d["bbox"][2] >= 30 and d["bbox"][3] >= 20
        ]
        assert covering, f"no detection covers the blob: {dets}"

    def test_dark_blob_on_bright_background(self):
        img = np.full((30, 30), 230, dtype=np.uint8)
        img[5:12, 6:15] = 25
        dets = _detector().detect(img, 30, 30)
        assert len(dets) == 1
        assert dets[0]["bbox"] == [6.0, 5.0, 15.0, 12.0]
        assert dets[0]["score"] == 1.0

    def test_boxes_respect_bounds_on_arbitrary_images(self, rng):
        for _ in range(25):
            h, w = int(rng.integers(4, 40)), int(rng.integers(4, 40))
            img = rng.integers(0, 256, size=(h, w)).astype(np.uint8)
            for d in _detector().detect(img, h, w):
                x0, y0, x1, y1 = d["bbox"]
                assert 0 <= x0 < x1 <= w
                assert 0 <= y0 < y1 <= h
                assert 0.0 <= d["score"] <= 1.0

    def test_min_area_filters_specks(self):
        img = np.full((20, 20), 10, dtype=np.uint8)
        img[2, 2] = 240  # single-pixel speck
        img[8:16, 8:16] = 240
        dets = _detector(classic_min_area=4).detect(img, 20, 20)
        assert [d["bbox"] for d in dets] == [[8.0, 8.0, 16.0, 16.0]]

    def test_detections_sorted_deterministically(self):
        img = np.full((30, 30), 10, dtype=np.uint8)
        img[20:24, 2:6] = 240
        img[2:6, 20:24] = 240
        img[2:6, 2:6] = 240
        boxes = [d["bbox"] for d in _detector().detect(img, 30, 30)]
        assert boxes == sorted(boxes, key=lambda b: (b[1], b[0], b[3], b[2]))


class TestDetectDir:
    def _images(self, tmp_path, n=3):
        d = tmp_path / "imgs"
        for k in range(n):
            img = np.full((24, 24), 10, dtype=np.uint8)
            img[4 : 8 + k, 4 : 8 + k] = 240
            write_gray_png(img, d / f"tile-{k}.png")
        return d

    def test_writes_one_json_per_image(self, tmp_path):
        images = self._images(tmp_path)
        out = tmp_path / "dets"
        assert detect_dir(AdapterConfig(), images, out) == 3
        files = sorted(p.name for p in out.iterdir())
        assert files == ["tile-0.json", "tile-1.json", "tile-2.json"]
        obj = json.loads((out / "tile-1.json").read_text())
        assert obj["image_id"] == "tile-1"
        assert len(obj["detections"]) == 1

    def test_idempotent_bytes(self, tmp_path):
        images = self._images(tmp_path)
        out = tmp_path / "dets"
        detect_dir(AdapterConfig(), images, out)
        before = {p.name: p.read_bytes() for p in out.iterdir()}
        detect_dir(AdapterConfig(), images, out)
        after = {p.name: p.read_bytes() for p in out.iterdir()}
        assert before == after

    def test_duplicate_stems_rejected(self, tmp_path):
        d = tmp_path / "imgs"
        img = np.zeros((8, 8), dtype=np.uint8)
        write_gray_png(img, d / "a.png")
        from PIL import Image

        Image.fromarray(img, mode="L").save(d / "a.bmp")
        with pytest.raises(AdapterError, match="duplicate image id"):
            detect_dir(AdapterConfig(), d, tmp_path / "out")

    def test_missing_directory_rejected(self, tmp_path):
        with pytest.raises(AdapterError, match="not found"):
            detect_dir(AdapterConfig(), tmp_path / "nope", tmp_path / "out")

    def test_empty_directory_rejected(self, tmp_path):
        d = tmp_path / "imgs"
        d.mkdir()
        with pytest.raises(AdapterError, match="no images"):
            detect_dir(AdapterConfig(), d, tmp_path / "out")


class TestDetectCli:
    def test_detect_command(self, tmp_path):
        d = tmp_path / "imgs"
        img = np.full((16, 16), 10, dtype=np.uint8)
        img[4:12, 4:12] = 240
        write_gray_png(img, d / "only.png")
        res = run_adapter("detect", "--images", d, "--out", tmp_path / "out")
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "out" / "only.json").is_file()

    def test_missing_images_dir_exits_2(self, tmp_path):
        res = run_adapter(
            "detect", "--images", tmp_path / "nope", "--out", tmp_path / "out"
        )
        assert res.returncode == 2
        assert "error" in res.stderr

    def test_usage_error_exits_1(self):
        res = run_adapter("detect", "--images")
        assert res.returncode == 1
