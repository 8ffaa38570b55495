import json

import numpy as np
import pytest

from shadowsmith.raster import write_png


@pytest.fixture
def write_coco_dir():
    """Materialize a COCO-style dataset dir from raw dicts + rasters.

    ``images``: list of (record dict, raster). Built with plain json.dumps so
    loader tests do not depend on the package's own writer.
    """

    def _write(root, images, annotations, categories=None):
        img_dir = root / "images"
        img_dir.mkdir(parents=True)
        recs = []
        for rec, raster in images:
            write_png(raster, img_dir / rec["file_name"])
            recs.append(rec)
        doc = {
            "images": recs,
            "annotations": annotations,
            "categories": categories or [{"id": 1, "name": "ship"}],
        }
        (root / "annotations.json").write_text(json.dumps(doc))
        return root

    return _write


@pytest.fixture
def ramp4():
    """4x4 raster with value = row*4 + col."""
    return (np.arange(16, dtype=np.uint8).reshape(4, 4)).copy()
