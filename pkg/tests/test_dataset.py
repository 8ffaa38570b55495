import json
import os
from pathlib import Path

import numpy as np
import pytest

from shadowsmith.dataset import (
    BoundingBox,
    crop_subimage,
    decode_mask,
    encode_rle,
    load_dataset,
    load_layout,
    serialize_annotations,
    write_dataset,
)
from shadowsmith.errors import DatasetError, MaskDecodeError


def centers_in_rect(x0, y0, x1, y1, width, height):
    """Oracle: pixels whose centers fall inside an axis-aligned rectangle,
    boundary included. Plain interval arithmetic, no polygon code."""
    mask = np.zeros((height, width), dtype=np.uint8)
    for r in range(height):
        for c in range(width):
            px, py = c + 0.5, r + 0.5
            if x0 <= px <= x1 and y0 <= py <= y1:
                mask[r, c] = 1
    return mask


# --- decode_mask -----------------------------------------------------------


def test_rle_single_run_of_ones():
    mask = decode_mask({"size": [2, 2], "counts": [0, 4]}, 2, 2)
    assert np.array_equal(mask, np.ones((2, 2), dtype=np.uint8))


def test_rle_single_zero_run():
    mask = decode_mask({"size": [2, 2], "counts": [4]}, 2, 2)
    assert np.array_equal(mask, np.zeros((2, 2), dtype=np.uint8))


def test_rle_is_column_major():
    # one run of 2 zeros then 2 ones: ones fill column 1 on a 2x2 grid
    mask = decode_mask({"counts": [2, 2]}, 2, 2)
    assert np.array_equal(mask, np.array([[0, 1], [0, 1]], dtype=np.uint8))


def test_rle_count_sum_mismatch():
    with pytest.raises(MaskDecodeError, match="sum"):
        decode_mask({"counts": [3]}, 2, 2)


def test_rle_compressed_counts_rejected():
    with pytest.raises(MaskDecodeError, match="compressed"):
        decode_mask({"counts": "abc", "size": [2, 2]}, 2, 2)


def test_polygon_needs_three_vertices():
    with pytest.raises(MaskDecodeError, match="3 vertices"):
        decode_mask([[0.0, 0.0, 3.0, 0.0]], 4, 4)


def test_polygon_vertices_must_be_in_bounds():
    with pytest.raises(MaskDecodeError, match="outside"):
        decode_mask([[0.0, 0.0, 5.0, 0.0, 5.0, 5.0]], 4, 4)


def test_polygon_square_matches_center_enumeration():
    # axis-aligned square (0,0)-(3,0)-(3,3)-(0,3) on a 4x4 grid
    got = decode_mask([[0.0, 0.0, 3.0, 0.0, 3.0, 3.0, 0.0, 3.0]], 4, 4)
    want = centers_in_rect(0, 0, 3, 3, 4, 4)
    assert np.array_equal(got, want)
    assert got.sum() == 9  # the 3x3 top-left block


def test_polygon_vs_rle_agreement_on_rectangles():
    # same axis-aligned rectangle via both encodings: >= 99% agreement
    rng = np.random.default_rng(5)
    for _ in range(20):
        w, h = 24, 18
        x0, y0 = rng.integers(0, 8, 2)
        x1 = int(x0 + rng.integers(4, 12))
        y1 = int(y0 + rng.integers(4, 8))
        poly = [float(x0), float(y0), float(x1), float(y0),
                float(x1), float(y1), float(x0), float(y1)]
        from_poly = decode_mask([poly], w, h)
        from_rle = decode_mask(encode_rle(centers_in_rect(x0, y0, x1, y1, w, h)), w, h)
        agree = (from_poly == from_rle).mean()
        assert agree >= 0.99


def test_encode_decode_rle_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(10):
        mask = (rng.random((13, 9)) < 0.4).astype(np.uint8)
        assert np.array_equal(decode_mask(encode_rle(mask), 9, 13), mask)


# --- crop_subimage ---------------------------------------------------------


def test_crop_ramp_center(ramp4):
    sub = crop_subimage(ramp4, BoundingBox(1, 1, 2, 2))
    assert sub.tolist() == [[5, 6], [10, 11]]


def test_crop_identity_and_single_pixel(ramp4):
    assert np.array_equal(crop_subimage(ramp4, BoundingBox(0, 0, 4, 4)), ramp4)
    assert crop_subimage(ramp4, BoundingBox(0, 0, 1, 1)).tolist() == [[0]]


def test_crop_returns_independent_copy(ramp4):
    sub = crop_subimage(ramp4, BoundingBox(1, 1, 2, 2))
    sub[0, 0] = 99
    assert ramp4[1, 1] == 5


# --- load_dataset ----------------------------------------------------------


def minimal_images():
    return [({"id": 1, "file_name": "a.png", "width": 4, "height": 4},
             np.arange(16, dtype=np.uint8).reshape(4, 4))]


def square_ann(ann_id=1, bbox=(0.0, 0.0, 2.0, 2.0)):
    return {
        "id": ann_id,
        "image_id": 1,
        "bbox": list(bbox),
        "segmentation": [[0.0, 0.0, 2.0, 0.0, 2.0, 2.0, 0.0, 2.0]],
        "category_id": 1,
        "iscrowd": 0,
        "area": 4,
    }


def test_load_minimal_dataset(tmp_path, write=None):
    from tests.conftest import write_coco_dir

    root = write_coco_dir(tmp_path, minimal_images(), [square_ann()])
    ds = load_dataset(root / "annotations.json", root / "images")
    assert len(ds.images) == 1
    assert len(ds.annotations) == 1
    ann = ds.annotations[0]
    assert ann.bbox == BoundingBox(0, 0, 2, 2)
    assert ann.mask.shape == (4, 4)
    assert ann.mask[: 2, : 2].any()


def test_load_rejects_bbox_outside_image(tmp_path):
    from tests.conftest import write_coco_dir

    bad = square_ann(ann_id=7, bbox=(3.0, 0.0, 2.0, 2.0))  # x+w = 5 > 4
    root = write_coco_dir(tmp_path, minimal_images(), [bad])
    with pytest.raises(DatasetError, match="7"):
        load_dataset(root / "annotations.json", root / "images")


def test_load_rejects_mask_missing_from_bbox(tmp_path):
    from tests.conftest import write_coco_dir

    ann = square_ann()
    ann["bbox"] = [2.0, 2.0, 2.0, 2.0]  # mask occupies the opposite corner
    root = write_coco_dir(tmp_path, minimal_images(), [ann])
    with pytest.raises(DatasetError, match="no pixels inside"):
        load_dataset(root / "annotations.json", root / "images")


def test_malformed_json_reports_byte_offset(tmp_path):
    path = tmp_path / "annotations.json"
    path.write_text('{"images": [}')
    with pytest.raises(DatasetError, match="byte offset 12"):
        load_dataset(path, tmp_path)


def test_missing_image_file_is_named(tmp_path):
    doc = {"images": [{"id": 1, "file_name": "ghost.png", "width": 4, "height": 4}],
           "annotations": []}
    path = tmp_path / "annotations.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(DatasetError, match="ghost.png"):
        load_dataset(path, tmp_path)


def test_bbox_floats_round_half_up(tmp_path):
    from tests.conftest import write_coco_dir

    ann = square_ann()
    ann["bbox"] = [0.5, 0.4, 1.5, 2.6]  # -> [1, 0, 2, 3]
    root = write_coco_dir(tmp_path, minimal_images(), [ann])
    ds = load_dataset(root / "annotations.json", root / "images")
    assert ds.annotations[0].bbox == BoundingBox(1, 0, 2, 3)


def test_dataset_round_trip_bits_and_bytes(tmp_path):
    from tests.conftest import write_coco_dir

    rng = np.random.default_rng(3)
    raster = rng.integers(0, 65536, size=(6, 5), dtype=np.uint16)
    images = [({"id": 1, "file_name": "a.png", "width": 5, "height": 6}, raster)]
    mask = np.zeros((6, 5), dtype=np.uint8)
    mask[1:3, 1:4] = 1
    ann = {"id": 1, "image_id": 1, "bbox": [1, 1, 3, 2], "area": 6,
           "category_id": 1, "iscrowd": 0, "segmentation": encode_rle(mask)}
    root = write_coco_dir(tmp_path / "src", images, [ann])
    ds = load_dataset(root / "annotations.json", root / "images")

    out = tmp_path / "copy"
    write_dataset(ds, out)
    back = load_layout(out)
    assert np.array_equal(back.rasters[1], raster)
    assert np.array_equal(back.annotations[0].mask, ds.annotations[0].mask)
    assert serialize_annotations(back) == serialize_annotations(ds)


HRSID_ROOT = Path(os.environ.get("SHADOWSMITH_HRSID", "data/hrsid"))


@pytest.mark.skipif(not (HRSID_ROOT / "annotations.json").exists(),
                    reason="real HRSID training split not present")
def test_hrsid_training_split_counts():
    ds = load_dataset(HRSID_ROOT / "annotations.json", HRSID_ROOT / "images")
    assert len(ds.images) == 3642
    assert len(ds.annotations) == 11047
