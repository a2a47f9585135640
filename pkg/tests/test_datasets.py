import json

import numpy as np
import pytest

from snnassign import datasets


def test_roundtrip_value_exact(rng, tmp_path):
    mats = rng.standard_normal((4, 3, 5)) * 1e-12
    path = tmp_path / "data.csv"
    datasets.write_matrix_dataset(path, mats, meta={"seed": 7, "units": "u"})
    back, meta = datasets.read_matrix_dataset(path)
    assert np.array_equal(back, mats)
    assert meta["seed"] == 7
    assert meta["units"] == "u"
    assert meta["count"] == 4
    assert meta["rows"] == 3
    assert meta["cols"] == 5


def test_csv_layout(rng, tmp_path):
    mats = np.arange(8.0).reshape(2, 2, 2)
    path = tmp_path / "d.csv"
    datasets.write_matrix_dataset(path, mats)
    lines = path.read_text().splitlines()
    assert lines[0] == "instanceId,i,j,value"
    assert lines[1] == "0,0,0,0"
    assert len(lines) == 1 + 8
    sidecar = json.loads((tmp_path / "d.csv.meta.json").read_text())
    assert sidecar["count"] == 2


def test_read_rejects_missing_sidecar(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("instanceId,i,j,value\n0,0,0,1.5\n")
    with pytest.raises(OSError):
        datasets.read_matrix_dataset(path)
