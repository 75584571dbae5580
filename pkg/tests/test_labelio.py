import numpy as np
import pytest
from PIL import Image

from nucleval.errors import DataError
from nucleval.labelio import (
    candidates_to_obj,
    detections_to_obj,
    dump_json,
    load_json,
    parse_candidates_obj,
    parse_detections_obj,
    parse_prompts_obj,
    prompts_to_obj,
    read_label_map,
    write_label_map,
)
from nucleval.masks import BoundingBox, rle_encode
from nucleval.prompts import CandidateMask, Detection, PromptSet


class TestLabelMaps:
    def test_round_trip_preserves_ids(self, tmp_path):
        lab = np.array([[0, 1], [700, 65535]], dtype=np.uint32)
        path = tmp_path / "m.png"
        write_label_map(path, lab)
        again = read_label_map(path)
        assert again.dtype == np.uint32
        assert np.array_equal(again, lab)

    def test_write_is_byte_deterministic(self, tmp_path):
        rng = np.random.default_rng(2)
        lab = rng.integers(0, 50, size=(32, 32))
        write_label_map(tmp_path / "a.png", lab)
        write_label_map(tmp_path / "b.png", lab)
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_id_overflow_rejected(self, tmp_path):
        lab = np.array([[65536]], dtype=np.uint32)
        with pytest.raises(DataError, match="65536"):
            write_label_map(tmp_path / "m.png", lab)

    def test_no_temp_file_left_behind(self, tmp_path):
        write_label_map(tmp_path / "m.png", np.zeros((4, 4), int))
        leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
        assert leftovers == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_label_map(tmp_path / "ghost.png")

    def test_rejects_rgb_image(self, tmp_path):
        path = tmp_path / "rgb.png"
        Image.new("RGB", (4, 4)).save(path)
        with pytest.raises(DataError, match="RGB"):
            read_label_map(path)

    def test_reads_8bit_grayscale(self, tmp_path):
        path = tmp_path / "l.png"
        Image.fromarray(np.array([[0, 9]], dtype=np.uint8), mode="L").save(path)
        assert np.array_equal(read_label_map(path), np.array([[0, 9]]))


class TestJsonHelpers:
    def test_dump_load_round_trip(self, tmp_path):
        path = tmp_path / "x.json"
        dump_json({"b": 1, "a": [1.5]}, path)
        assert load_json(path) == {"b": 1, "a": [1.5]}
        # stable key order and trailing newline for reproducible bytes
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        with pytest.raises(DataError):
            load_json(path)


class TestDetectionsWire:
    def test_round_trip(self):
        dets = [Detection(bbox=BoundingBox(1, 2, 5, 6), score=0.75)]
        obj = detections_to_obj("img", dets)
        assert obj == {
            "image_id": "img",
            "detections": [{"bbox": [1, 2, 5, 6], "score": 0.75}],
        }
        assert parse_detections_obj(obj) == dets

    def test_bounds_enforced(self):
        obj = {"image_id": "i", "detections": [{"bbox": [0, 0, 9, 3], "score": 0.5}]}
        assert parse_detections_obj(obj, bounds=(9, 3))
        with pytest.raises(DataError):
            parse_detections_obj(obj, bounds=(8, 3))

    @pytest.mark.parametrize(
        "det",
        [
            {"bbox": [2, 0, 1, 3], "score": 0.5},  # x1 <= x0
            {"bbox": [0, 0, 1, 1], "score": 1.5},  # score out of range
            {"bbox": [0, 0, 1], "score": 0.5},  # short bbox
            {"score": 0.5},  # no bbox
        ],
    )
    def test_malformed_rejected(self, det):
        with pytest.raises(DataError):
            parse_detections_obj({"image_id": "i", "detections": [det]})


class TestPromptsWire:
    def test_points_round_trip(self):
        ps = PromptSet(kind="points", points=((1.5, 2.0),))
        image_id, again = parse_prompts_obj(prompts_to_obj("img_1", ps))
        assert image_id == "img_1"
        assert again == ps

    def test_boxes_round_trip(self):
        ps = PromptSet(kind="boxes", boxes=(BoundingBox(0, 1, 4, 5),))
        _, again = parse_prompts_obj(prompts_to_obj("img_1", ps))
        assert again == ps

    def test_bad_kind_rejected(self):
        with pytest.raises(DataError):
            parse_prompts_obj({"image_id": "i", "kind": "blobs", "items": []})


class TestCandidatesWire:
    def _rle(self):
        return rle_encode(np.array([[1, 0], [0, 0]], dtype=np.uint8))

    def test_round_trip(self):
        cand = CandidateMask(prompt_index=0, rle=self._rle(), score=0.5)
        obj = candidates_to_obj("img", [cand])
        parsed = parse_candidates_obj(obj, n_prompts=1, size=(2, 2))
        assert parsed == [cand]

    def test_prompt_index_out_of_range(self):
        obj = candidates_to_obj("img", [CandidateMask(1, self._rle(), 0.5)])
        with pytest.raises(DataError, match="prompt_index"):
            parse_candidates_obj(obj, n_prompts=1, size=(2, 2))

    def test_duplicate_prompt_index(self):
        obj = candidates_to_obj(
            "img", [CandidateMask(0, self._rle(), 0.5), CandidateMask(0, self._rle(), 0.6)]
        )
        with pytest.raises(DataError, match="duplicate"):
            parse_candidates_obj(obj, n_prompts=2, size=(2, 2))

    def test_size_mismatch(self):
        obj = candidates_to_obj("img", [CandidateMask(0, self._rle(), 0.5)])
        with pytest.raises(DataError, match="size"):
            parse_candidates_obj(obj, n_prompts=1, size=(3, 3))

    def test_score_out_of_range(self):
        obj = {
            "image_id": "img",
            "candidates": [
                {"prompt_index": 0, "score": 1.5, "rle": self._rle().to_dict()}
            ],
        }
        with pytest.raises(DataError, match="score"):
            parse_candidates_obj(obj, n_prompts=1, size=(2, 2))

    def test_invalid_rle_counts(self):
        obj = {
            "image_id": "img",
            "candidates": [
                {"prompt_index": 0, "score": 0.5, "rle": {"size": [2, 2], "counts": [1, 1]}}
            ],
        }
        with pytest.raises(DataError):
            parse_candidates_obj(obj, n_prompts=1, size=(2, 2))
