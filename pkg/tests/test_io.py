import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from lsregen.exceptions import FormatError, LayoutInvariantError, LayoutJSONError, LayoutSchemaError
from lsregen.io import (
    decode_ppm,
    decode_tensor,
    dumps_canonical,
    encode_ppm,
    encode_tensor,
    from_display,
    layout_from_json,
    layout_to_json,
    quantize,
    read_jsonl,
    read_layout,
    read_ppm,
    read_tensor,
    to_display,
    write_jsonl,
    write_layout,
    write_ppm,
    write_tensor,
)
from lsregen.scene import BoundingBox, LayoutSpec


class TestTensor:
    @given(arrays(np.float64, array_shapes(min_dims=0, max_dims=4, max_side=4)))
    def test_round_trip_bitwise(self, arr):
        out = decode_tensor(encode_tensor(arr))
        assert out.shape == arr.shape and out.tobytes() == arr.tobytes()

    def test_file_round_trip(self, tmp_path, rng):
        arr = rng.standard_normal((5, 3, 4, 4))
        write_tensor(arr, tmp_path / "t.gdt")
        assert np.array_equal(read_tensor(tmp_path / "t.gdt"), arr)

    @pytest.mark.parametrize("mutate", [lambda b: b + b"\0", lambda b: b[:-1], lambda b: b"XXXXXXXX" + b[8:], lambda b: b[:10]])
    def test_corrupt(self, mutate):
        with pytest.raises(FormatError):
            decode_tensor(mutate(encode_tensor(np.ones((2, 2)))))

    def test_read_names_path(self, tmp_path):
        (tmp_path / "bad.gdt").write_bytes(b"nope")
        with pytest.raises(FormatError, match="bad.gdt"):
            read_tensor(tmp_path / "bad.gdt")


class TestPPM:
    @pytest.mark.parametrize("value, byte", [(0.0, 0), (1.0, 255), (0.5, 128), (-0.3, 0), (1.7, 255)])
    def test_quantize(self, value, byte):
        assert quantize(np.full((3, 1, 1), value))[0, 0, 0] == byte

    def test_layout(self):
        img = np.zeros((3, 2, 3))
        img[0, 1, 2] = 1.0
        data = encode_ppm(img)
        assert data.startswith(b"P6\n3 2\n255\n")
        assert data[-3:] == b"\xff\x00\x00"

    def test_round_trip(self, tmp_path, rng):
        img = quantize(rng.random((3, 5, 7))) / 255.0
        write_ppm(img, tmp_path / "a.ppm")
        np.testing.assert_array_equal(read_ppm(tmp_path / "a.ppm"), img)

    def test_display_mapping(self, rng):
        x = rng.uniform(-1, 1, (3, 2, 2))
        np.testing.assert_allclose(from_display(to_display(x)), x)
        assert encode_ppm(np.full((3, 1, 1), -1.0), to_display)[-3:] == b"\0\0\0"

    def test_comments_in_header(self):
        data = b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03"
        np.testing.assert_allclose(decode_ppm(data)[:, 0, 0], np.array([1, 2, 3]) / 255)

    @pytest.mark.parametrize("data", [b"P3\n1 1\n255\n1 2 3", b"P6\n1 1\n65535\n\0\0\0\0\0\0", b"P6\n1 1\n255\n\0\0",
                                      b"P6\n1 1\n255\n\0\0\0\0", b"P6\nx 1\n255\n\0\0\0", b""])
    def test_malformed(self, data):
        with pytest.raises(FormatError):
            decode_ppm(data)

    def test_rejects_non_rgb(self):
        with pytest.raises(ValueError):
            encode_ppm(np.zeros((1, 2, 2)))


EIGHT = LayoutSpec(tuple(BoundingBox(0.1 * i, 0.05 * i, 0.1 + 0.01 * i, 0.3, lab)
                         for i, lab in enumerate(["person", "car", "dog", "cat", "bird", "boat", "chair", "tree"])),
                   (64, 48))


class TestLayoutJSON:
    def test_minimal_document(self):
        spec = layout_from_json('{"canvas":[16,16],"boxes":[{"x":0.1,"y":0.2,"w":0.3,"h":0.4,"label":"car"}]}')
        assert spec.canvas == (16, 16)
        assert spec.boxes[0] == BoundingBox(0.1, 0.2, 0.3, 0.4, "car")

    def test_eight_box_round_trip_bytes(self, tmp_path):
        text = layout_to_json(EIGHT)
        assert text == layout_to_json(layout_from_json(text))
        write_layout(EIGHT, tmp_path / "l.json")
        assert (tmp_path / "l.json").read_text() == text
        assert read_layout(tmp_path / "l.json") == EIGHT

    def test_canonical_form(self):
        text = layout_to_json(LayoutSpec((BoundingBox(0.5, 0.25, 0.25, 0.5, "dog"),), (8, 12)))
        assert text == '{"canvas":[8,12],"boxes":[{"x":0.5,"y":0.25,"w":0.25,"h":0.5,"label":"dog"}]}\n'

    def test_reordered_keys_parse_to_same_spec(self):
        doc = '{"boxes":[{"label":"dog","h":0.5,"w":0.25,"y":0.25,"x":0.5}],"canvas":[8,12]}'
        assert layout_to_json(layout_from_json(doc)).startswith('{"canvas":[8,12]')

    @pytest.mark.parametrize("doc, kind, path", [
        ('{"canvas":[16,16],"boxes":[{"x":0.8,"y":0,"w":0.3,"h":0.2,"label":"car"}]}', LayoutInvariantError, "boxes[0]"),
        ('{"canvas":[16,16],"boxes":[]}', LayoutInvariantError, "boxes"),
        ('{"canvas":[0,16],"boxes":[{"x":0,"y":0,"w":0.3,"h":0.2,"label":"car"}]}', LayoutInvariantError, "canvas[0]"),
        ('{"canvas":[16,16],"boxes":[{"x":0,"y":0,"w":0.3,"h":0.2,"label":"zebra"}]}', LayoutSchemaError, "boxes[0].label"),
        ('{"canvas":[16,16],"boxes":[{"x":0,"y":0,"w":0.3,"label":"car"}]}', LayoutSchemaError, "boxes[0].h"),
        ('{"canvas":[16,16],"boxes":[{"x":"0","y":0,"w":0.3,"h":0.2,"label":"car"}]}', LayoutSchemaError, "boxes[0].x"),
        ('{"canvas":[16,16],"boxes":[{"x":true,"y":0,"w":0.3,"h":0.2,"label":"car"}]}', LayoutSchemaError, "boxes[0].x"),
        ('{"canvas":[16,16],"boxes":[],"extra":1}', LayoutSchemaError, "extra"),
        ('{"canvas":[16.0,16],"boxes":[]}', LayoutSchemaError, "canvas[0]"),
        ('[1,2]', LayoutSchemaError, "$"),
    ])
    def test_error_kinds(self, doc, kind, path):
        with pytest.raises(kind) as info:
            layout_from_json(doc)
        assert info.value.path == path

    def test_nine_boxes(self):
        boxes = ",".join('{"x":0,"y":0,"w":0.1,"h":0.1,"label":"car"}' for _ in range(9))
        with pytest.raises(LayoutInvariantError):
            layout_from_json('{"canvas":[16,16],"boxes":[%s]}' % boxes)

    @pytest.mark.parametrize("doc", ['{"canvas":[16,16],', '{"canvas":[16,16],"canvas":[8,8],"boxes":[]}',
                                     '{"canvas":[16,16],"boxes":[{"x":NaN,"y":0,"w":0.1,"h":0.1,"label":"car"}]}'])
    def test_malformed_json(self, doc):
        with pytest.raises(LayoutJSONError):
            layout_from_json(doc)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_layout(tmp_path / "missing.json")


class TestJSON:
    def test_canonical_dump_sorted(self):
        assert dumps_canonical({"b": 1, "a": [1, 2]}) == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            dumps_canonical({"x": float("nan")})

    def test_jsonl_round_trip(self, tmp_path):
        rows = [{"seed": i, "v": [i, 0.5]} for i in range(3)]
        write_jsonl(rows, tmp_path / "r.jsonl")
        assert read_jsonl(tmp_path / "r.jsonl") == rows
        assert all(json.loads(line) for line in (tmp_path / "r.jsonl").read_text().splitlines())
