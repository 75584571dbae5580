import json
import subprocess

import numpy as np
import pytest

from nucleval_adapter import AdapterConfig, ClassicSegmenter, rle
from nucleval_adapter.backends import Proposal
from nucleval_adapter.serve import handle_request_line

from _adapter_helpers import (
    ADAPTER_ARGV,
    assert_candidates_schema,
    write_gray_png,
)


def _request(image_id="img", width=16, height=12, kind="points", items=None, **extra):
    obj = {
        "image_id": image_id,
        "width": width,
        "height": height,
        "kind": kind,
        "items": items if items is not None else [[4.5, 3.5]],
        "image_path": None,
    }
    obj.update(extra)
    return obj


class TestHandleRequestLine:
    def test_empty_prompt_list(self, stub_segmenter):
        out = handle_request_line(stub_segmenter, json.dumps(_request(items=[])))
        assert out == {"image_id": "img", "candidates": []}

    def test_n_prompts_yield_n_candidates(self, stub_segmenter):
        items = [[2.0, 2.0], [8.0, 5.0], [14.0, 10.0]]
        req = _request(items=items)
        out = handle_request_line(stub_segmenter, json.dumps(req))
        assert_candidates_schema(out, req)
        assert [c["prompt_index"] for c in out["candidates"]] == [0, 1, 2]

    def test_point_prompt_keeps_exact_radius_disc(self, stub_segmenter):
        req = _request(width=32, height=32, items=[[16.0, 16.0]])
        out = handle_request_line(stub_segmenter, json.dumps(req))
        c = out["candidates"][0]
        assert c["score"] == 1.0
        mask = rle.decode(c["rle"])
        r = stub_segmenter.radius
        rows = np.arange(32) + 0.5
        cols = np.arange(32) + 0.5
        expected = ((rows[:, None] - 16.0) ** 2 + (cols[None, :] - 16.0) ** 2) <= r * r
        assert np.array_equal(mask.astype(bool), expected)

    def test_box_prompt_keeps_exact_box(self, stub_segmenter):
        req = _request(kind="boxes", items=[[3, 2, 9, 7]])
        out = handle_request_line(stub_segmenter, json.dumps(req))
        mask = rle.decode(out["candidates"][0]["rle"]).astype(bool)
        expected = np.zeros((12, 16), dtype=bool)
        expected[2:7, 3:9] = True
        assert np.array_equal(mask, expected)
        assert out["candidates"][0]["score"] == 1.0

    def test_reduce_keeps_highest_confidence_first_on_ties(self):
        class FakeSegmenter:
            needs_image = False

            def propose(self, image, height, width, kind, item):
                m = np.zeros((height, width), dtype=bool)
                a, b, c = m.copy(), m.copy(), m.copy()
                a[0, 0] = True
                b[0, 1] = True
                c[0, 2] = True
                return [Proposal(a, 0.4), Proposal(b, 0.9), Proposal(c, 0.9)]

        out = handle_request_line(FakeSegmenter(), json.dumps(_request()))
        mask = rle.decode(out["candidates"][0]["rle"])
        assert out["candidates"][0]["score"] == 0.9
        assert mask[0, 1] == 1 and mask[0, 2] == 0

    def test_malformed_json_yields_error_object(self, stub_segmenter):
        out = handle_request_line(stub_segmenter, "{nope")
        assert "error" in out and "malformed" in out["error"]

    def test_non_object_request(self, stub_segmenter):
        out = handle_request_line(stub_segmenter, "[1, 2, 3]")
        assert "error" in out

    @pytest.mark.parametrize(
        "mutation",
        [
            {"image_id": None},
            {"width": 0},
            {"height": "ten"},
            {"kind": "scribbles"},
            {"items": "none"},
            {"items": [[1.0]]},
            {"items": [[1.0, 2.0, 3.0, 4.0]]},
            {"items": [["x", "y"]]},
        ],
    )
    def test_invalid_requests_yield_error_objects(self, stub_segmenter, mutation):
        req = _request()
        req.update(mutation)
        out = handle_request_line(stub_segmenter, json.dumps(req))
        assert "error" in out

    def test_error_object_echoes_image_id_when_known(self, stub_segmenter):
        out = handle_request_line(
            stub_segmenter, json.dumps(_request(kind="scribbles"))
        )
        assert out["image_id"] == "img"

    def test_classic_without_image_path_is_an_error(self):
        seg = ClassicSegmenter(AdapterConfig(backend="classic"))
        out = handle_request_line(seg, json.dumps(_request()))
        assert "error" in out and "image_path" in out["error"]

    def test_classic_missing_image_file_is_an_error(self, tmp_path):
        seg = ClassicSegmenter(AdapterConfig(backend="classic"))
        req = _request(image_path=str(tmp_path / "gone.png"))
        out = handle_request_line(seg, json.dumps(req))
        assert "error" in out and "not found" in out["error"]

    def test_backend_exception_becomes_error_object(self):
        class Exploding:
            needs_image = False

            def propose(self, image, height, width, kind, item):
                raise RuntimeError("boom")

        out = handle_request_line(Exploding(), json.dumps(_request()))
        assert "error" in out and "boom" in out["error"]


class TestClassicProposals:
    def _tile(self, tmp_path):
        img = np.full((20, 30), 15, dtype=np.uint8)
        img[3:9, 4:12] = 240  # one bright blob
        img[12:18, 18:26] = 240  # another
        path = tmp_path / "tile.png"
        write_gray_png(img, path)
        lab = np.zeros((20, 30), dtype=int)
        lab[3:9, 4:12] = 1
        lab[12:18, 18:26] = 2
        return path, lab

    def test_point_prompt_selects_component_under_point(self, tmp_path):
        path, lab = self._tile(tmp_path)
        seg = ClassicSegmenter(AdapterConfig(backend="classic"))
        req = _request(
            width=30, height=20, items=[[6.5, 5.5]], image_path=str(path)
        )
        out = handle_request_line(seg, json.dumps(req))
        mask = rle.decode(out["candidates"][0]["rle"]).astype(bool)
        assert np.array_equal(mask, lab == 1)
        assert out["candidates"][0]["score"] == 1.0

    def test_point_on_background_yields_empty_mask(self, tmp_path):
        path, _ = self._tile(tmp_path)
        seg = ClassicSegmenter(AdapterConfig(backend="classic"))
        req = _request(width=30, height=20, items=[[0.5, 0.5]], image_path=str(path))
        out = handle_request_line(seg, json.dumps(req))
        c = out["candidates"][0]
        assert c["score"] == 0.0
        assert rle.decode(c["rle"]).sum() == 0

    def test_box_prompt_recovers_component_in_box(self, tmp_path):
        path, lab = self._tile(tmp_path)
        seg = ClassicSegmenter(AdapterConfig(backend="classic"))
        req = _request(
            width=30, height=20, kind="boxes",
            items=[[18, 12, 26, 18]], image_path=str(path),
        )
        out = handle_request_line(seg, json.dumps(req))
        mask = rle.decode(out["candidates"][0]["rle"]).astype(bool)
        assert np.array_equal(mask, lab == 2)


class TestServeProcess:
    def _serve(self):
        return subprocess.Popen(
            [*ADAPTER_ARGV, "serve"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def test_one_response_line_per_request_line_in_order(self):
        proc = self._serve()
        requests = [
            _request(image_id=f"im-{k}", items=[[4.0 + k, 5.0]]) for k in range(5)
        ]
        try:
            for req in requests:
                proc.stdin.write(json.dumps(req) + "\n")
            proc.stdin.flush()
            for req in requests:
                line = proc.stdout.readline()
                out = json.loads(line)
                assert_candidates_schema(out, req)
        finally:
            proc.stdin.close()
            assert proc.wait(timeout=10) == 0

    def test_process_continues_after_malformed_line(self):
        proc = self._serve()
        try:
            proc.stdin.write("this is not json\n")
            proc.stdin.flush()
            out = json.loads(proc.stdout.readline())
            assert "error" in out

            req = _request(image_id="after-error")
            proc.stdin.write(json.dumps(req) + "\n")
            proc.stdin.flush()
            out = json.loads(proc.stdout.readline())
            assert_candidates_schema(out, req)
        finally:
            proc.stdin.close()
            assert proc.wait(timeout=10) == 0

    def test_eof_exits_cleanly(self):
        proc = self._serve()
        proc.stdin.close()
        assert proc.wait(timeout=10) == 0
