import numpy as np
import pytest
from PIL import Image

from shadowsmith.errors import DatasetError
from shadowsmith.raster import as_raster, level_count, read_png, write_png


@pytest.mark.parametrize("depth,dtype,hi", [(8, np.uint8, 256), (16, np.uint16, 65536)])
def test_png_round_trip_is_lossless(tmp_path, depth, dtype, hi):
    rng = np.random.default_rng(depth)
    raster = rng.integers(0, hi, size=(16, 16), dtype=dtype)
    path = tmp_path / "r.png"
    write_png(raster, path)
    back = read_png(path)
    assert back.dtype == dtype
    assert np.array_equal(back, raster)


def test_read_rejects_multichannel(tmp_path):
    path = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(path)
    with pytest.raises(DatasetError, match="mode"):
        read_png(path)


def test_read_missing_file_names_path(tmp_path):
    with pytest.raises(DatasetError, match="nope.png"):
        read_png(tmp_path / "nope.png")


def test_as_raster_validates():
    arr = as_raster([[0, 255], [1, 2]], depth=8)
    assert arr.dtype == np.uint8
    assert level_count(arr) == 256
    with pytest.raises(DatasetError, match="outside"):
        as_raster([[0, 256]], depth=8)
    with pytest.raises(DatasetError, match="2-D"):
        as_raster(np.zeros((2, 2, 2)), depth=8)
    assert level_count(as_raster([[70000]], depth=16)) == 65536
