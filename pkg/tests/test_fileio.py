import math

import numpy as np
import pytest

from hsrfusion import SpatialResponse, Window
from hsrfusion.fileio import (
    experiment_config_from_dict,
    read_matrix,
    read_spatial_response,
    write_matrix,
    write_spatial_response,
)


def test_matrix_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.normal(scale=[[1e-8], [1.0], [1e8]], size=(3, 4))
    path = tmp_path / "m.csv"
    write_matrix(path, m)
    back = read_matrix(path)
    assert back.shape == m.shape
    assert np.array_equal(back, m)


def test_ragged_rows_name_the_line(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1,2,3\n4,5\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 2"):
        read_matrix(path)


def test_empty_file_reports_zero_rows(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ValueError, match="zero rows"):
        read_matrix(path)


def test_parse_error_names_line_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,oops\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 2, column 2"):
        read_matrix(path)


def test_spatial_response_round_trip(tmp_path):
    g = SpatialResponse(
        sr_pixel_count=6,
        windows=[
            Window(pixels=np.array([0, 1]), weights=np.array([0.5, 0.5])),
            Window(pixels=np.array([2, 3, 4]), weights=np.array([0.25, 0.5, 0.25])),
            Window(pixels=np.array([5]), weights=np.array([1.0])),
        ],
    )
    path = tmp_path / "g.json"
    write_spatial_response(path, g)
    back = read_spatial_response(path)
    assert back.sr_pixel_count == 6
    assert back.hs_pixel_count == 3
    for original, loaded in zip(g.windows, back.windows):
        assert np.array_equal(original.pixels, loaded.pixels)
        assert np.array_equal(original.weights, loaded.weights)


def test_spatial_response_rejects_inconsistent_header(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(
        '{"L": 4, "Lh": 2, "windows": [{"pixels": [0], "weights": [1.0]}]}',
        encoding="utf-8",
    )
    with pytest.raises(ValueError, match="Lh"):
        read_spatial_response(path)


def test_experiment_config_parses_infinite_snr():
    payload = {
        "scene": {
            "sr_bands": 20, "ms_bands": 4, "materials": 2, "width": 8,
            "height": 8, "factor": 2, "max_support": 2,
            "kernel": "uniform", "kernel_size": 2, "seed": 0,
        },
        "snr_db": [15, "inf", None],
        "trials": 2,
        "solver": {"materials": 2},
        "master_seed": 3,
    }
    config = experiment_config_from_dict(payload)
    assert config.snr_db[0] == 15.0
    assert math.isinf(config.snr_db[1])
    assert math.isinf(config.snr_db[2])
    assert config.scene.materials == 2
    assert config.solver.materials == 2
