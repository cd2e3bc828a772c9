import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torus_kam.fourier import SpectralVectorField, TorusMap, random_hermitian
from torus_kam.io import (
    dumps,
    load_config,
    load_spectral,
    save_spectral,
    spectral_from_dict,
    spectral_to_dict,
    validate_config,
    write_csv,
)


@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_scalar_roundtrip(seed, K):
    f = random_hermitian(2, K, np.random.default_rng(seed))
    assert spectral_from_dict(json.loads(dumps(spectral_to_dict(f)))) == f


def test_vector_and_map_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    F = SpectralVectorField.from_components([random_hermitian(2, 2, rng) for _ in range(2)])
    save_spectral(tmp_path / "F.json", F)
    save_spectral(tmp_path / "phi.json", TorusMap(F))
    assert load_spectral(tmp_path / "F.json") == F
    phi = load_spectral(tmp_path / "phi.json")
    assert isinstance(phi, TorusMap) and phi.displacement == F


def test_sparse_storage():
    from torus_kam.fourier import SpectralScalar
    d = spectral_to_dict(SpectralScalar.from_modes(2, 5, {(1, -1): 0.5}))
    assert len(d["entries"]) == 2


@pytest.mark.parametrize("bad", [
    {"kind": "scalar", "n": 2, "K": 1, "entries": [{"k": [2, 0], "re": 1.0}]},
    {"kind": "vector", "n": 2, "K": 1, "components": [[]]},
    {"kind": "tensor", "n": 2, "K": 1},
])
def test_bad_spectra_rejected(bad):
    with pytest.raises(Exception):
        spectral_from_dict(bad)


def test_nonfinite_json():
    text = dumps({"a": float("inf"), "b": float("nan"), "c": np.float64(1.5), "d": np.bool_(True)})
    assert json.loads(text) == {"a": "inf", "b": None, "c": 1.5, "d": True}


def test_config_validation(tmp_path):
    good = {"seed": 1, "omega": "golden", "kam": {"K_max": 16, "calibrate": True}}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(good))
    assert load_config(p) == good
    with pytest.raises(ValueError, match="kam"):
        validate_config({"kam": {"nope": 1}})
    with pytest.raises(ValueError):
        validate_config({"seed": "x"})
    p.write_text("{not json")
    with pytest.raises(ValueError):
        load_config(p)


def test_csv_full_precision(tmp_path):
    path = write_csv(tmp_path / "t.csv", [{"x": 0.1 + 0.2, "y": [1, 2]}, {"x": 1.0}])
    rows = list(csv.DictReader(open(path)))
    assert float(rows[0]["x"]) == 0.1 + 0.2
    assert json.loads(rows[0]["y"]) == [1, 2]
    assert rows[1]["y"] == ""
