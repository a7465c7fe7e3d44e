import numpy as np
import pytest

from fracfujita.core import store
from fracfujita.core.operators import Field, SpaceGrid
from fracfujita.core.store import (ArtifactCache, cache_key, read_csv, read_json, write_csv, write_field, write_json,
                                   write_rows)


def test_csv_round_trip_is_exact(tmp_path):
    columns = {"t": np.array([0.0, 1.0 / 3.0, 1e-300]), "value": np.array([np.pi, -2.5e17, 7.0])}
    path = write_csv(tmp_path / "trace.csv", columns, header={"note": "x"})
    back = read_csv(path)
    assert list(back) == ["t", "value"]
    for name in columns:
        np.testing.assert_array_equal(back[name], columns[name])
    assert read_json(tmp_path / "trace.json") == {"note": "x"}


def test_csv_output_is_byte_identical(tmp_path):
    columns = {"x": np.linspace(-1.0, 1.0, 7), "v": np.exp(np.linspace(0.0, 3.0, 7))}
    first = write_csv(tmp_path / "a.csv", columns, header={"seed": 1})
    second = write_csv(tmp_path / "b.csv", columns, header={"seed": 1})
    assert first.read_bytes() == second.read_bytes()
    assert b"\r" not in first.read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_csv_rejects_ragged_columns(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "bad.csv", {"a": np.zeros(3), "b": np.zeros(2)})


def test_write_rows_formats_mixed_values(tmp_path):
    path = write_rows(tmp_path / "rows.csv", [{"eta": 2, "verdict": "global", "ok": True, "T": None}],
                      ["eta", "verdict", "ok", "T"])
    assert path.read_text().splitlines() == ["eta,verdict,ok,T", "2,global,true,"]


def test_json_sidecar_is_sorted_and_encodes_infinity(tmp_path):
    path = write_json(tmp_path / "s.json", {"b": np.float64(np.inf), "a": np.arange(2), "c": tmp_path})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert text.endswith("\n")
    assert read_json(path) == {"a": [0, 1], "b": "inf", "c": str(tmp_path)}


def test_write_field_records_the_time(tmp_path):
    grid = SpaceGrid(half_width=1.0, points=5)
    field = Field(grid=grid, values=np.arange(5.0), time_stamp=0.25)
    write_field(tmp_path / "final.csv", field, {"verdict": "global"})
    meta = read_json(tmp_path / "final.json")
    assert meta["t"] == 0.25
    assert meta["verdict"] == "global"
    np.testing.assert_array_equal(read_csv(tmp_path / "final.csv")["value"], field.values)


def test_cache_key_depends_only_on_content():
    assert cache_key("profile", alpha=1.5, beta=0.5) == cache_key("profile", beta=0.5, alpha=1.5)
    assert cache_key("profile", alpha=1.5, beta=0.5) != cache_key("profile", alpha=1.5, beta=0.6)
    assert cache_key("profile", alpha=1.5) != cache_key("basis", alpha=1.5)


def test_profile_cache_reloads_bit_for_bit(tmp_path, profile_15, monkeypatch):
    cache = ArtifactCache(str(tmp_path))
    cache.save_profile(profile_15)

    def no_build(params):
        raise AssertionError("profile should come from the cache")

    monkeypatch.setattr(store, "build_kernel_profile", no_build)
    loaded = cache.kernel_profile(profile_15.params.with_eta(4.0))
    assert loaded.params.eta == 4.0
    np.testing.assert_array_equal(loaded.grid, profile_15.grid)
    np.testing.assert_array_equal(loaded.values, profile_15.values)
    assert loaded.near_coeffs == profile_15.near_coeffs
    assert loaded.tail_constant == profile_15.tail_constant
    z = np.array([1e-6, 0.5, 3e4])
    np.testing.assert_array_equal(loaded(z), profile_15(z))


def test_basis_cache_builds_once(tmp_path, monkeypatch):
    cache = ArtifactCache(str(tmp_path))
    built = cache.spectral_basis(1.5, 1.0, 21, 4)
    assert len(list(tmp_path.glob("basis-*.csv"))) == 1

    def no_build(*args):
        raise AssertionError("basis should come from the cache")

    monkeypatch.setattr(store, "build_basis", no_build)
    loaded = cache.spectral_basis(1.5, 1.0, 21, 4)
    assert loaded.approximate
    np.testing.assert_array_equal(loaded.eigenvalues, built.eigenvalues)
    np.testing.assert_array_equal(loaded.vectors, built.vectors)
    assert loaded.grid == built.grid
