import sys
sys.path.append(".")

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.exceptions import (
    DataError,
    GridMismatchError,
    InsufficientMembersError,
    MissingCellError,
    NonFiniteValueError,
)
from src.schemas.ensemble import CorrelationSpec
from src.services.ensemble_io import (
    WindGrid,
    ensemble_statistics,
    flatten_field,
    generate_synthetic_ensemble,
    grid_index,
    grid_points,
    load_ensemble,
    load_ensembles,
    regular_grid,
    save_ensemble,
)
from src.tests.utils.test_helpers import small_grid, synthetic_ensemble, write_ensemble_csv

def _cells(lats, lons):
    return [(lat, lon) for lat in lats for lon in lons]

def test_load_constant_members(tmp_path):
    """Test two constant members on a 2x2 grid"""
    rows = [(m, lat, lon, 10.0, 0.0) for m in (0, 1) for lat, lon in _cells((25.0, 26.0), (-16.0, -15.0))]
    ens = load_ensemble(write_ensemble_csv(tmp_path / "ens.csv", rows))

    assert ens.n_members == 2
    assert ens.grid.shape == (2, 2)
    assert np.all(ens.u == 10.0)
    assert np.all(ens.v == 0.0)
    np.testing.assert_allclose(ens.member_weights, [0.5, 0.5])

def test_members_ordered_by_id(tmp_path):
    """Test that rows may come in any order and members are sorted by id"""
    rows = [(m, lat, lon, float(m), 0.0) for m in (5, 2) for lat, lon in _cells((25.0, 26.0), (-16.0, -15.0))]
    ens = load_ensemble(write_ensemble_csv(tmp_path / "ens.csv", rows[::-1]))

    assert list(ens.member_ids) == [2, 5]
    assert np.all(ens.u[0] == 2.0)
    assert np.all(ens.u[1] == 5.0)

def test_missing_cell_names_member_and_cell(tmp_path):
    """Test that a member lacking a grid cell is reported with the member and the cell"""
    rows = [
        (m, lat, lon, 1.0, 2.0)
        for m in range(4)
        for lat, lon in _cells((25.0, 26.0), (-16.0, -15.0))
        if not (m == 3 and lat == 25.0 and lon == -15.0)
    ]
    with pytest.raises(MissingCellError) as excinfo:
        load_ensemble(write_ensemble_csv(tmp_path / "ens.csv", rows))

    assert excinfo.value.member == 3
    assert excinfo.value.cell == (25.0, -15.0)
    assert "member 3" in str(excinfo.value)
    assert excinfo.value.exit_code == 3

def test_non_finite_value_reports_row(tmp_path):
    """Test that a NaN wind value is reported with its line number"""
    rows = [(m, lat, lon, 1.0, 2.0) for m in (0, 1) for lat, lon in _cells((25.0, 26.0), (-16.0, -15.0))]
    rows[2] = (0, 26.0, -16.0, float("nan"), 2.0)
    with pytest.raises(NonFiniteValueError) as excinfo:
        load_ensemble(write_ensemble_csv(tmp_path / "ens.csv", rows))

    # header is line 1, so the third data row is line 4
    assert excinfo.value.row == 4
    assert excinfo.value.column == "u"

def test_single_member_rejected(tmp_path):
    rows = [(0, lat, lon, 1.0, 2.0) for lat, lon in _cells((25.0, 26.0), (-16.0, -15.0))]
    with pytest.raises(InsufficientMembersError):
        load_ensemble(write_ensemble_csv(tmp_path / "ens.csv", rows))

def test_duplicate_cell_rejected(tmp_path):
    rows = [(m, lat, lon, 1.0, 2.0) for m in (0, 1) for lat, lon in _cells((25.0, 26.0), (-16.0, -15.0))]
    rows.append((1, 25.0, -16.0, 3.0, 3.0))
    with pytest.raises(DataError, match="more than once"):
        load_ensemble(write_ensemble_csv(tmp_path / "ens.csv", rows))

def test_wrong_header_rejected(tmp_path):
    path = tmp_path / "ens.csv"
    path.write_text("id,lat,lon,u,v\n0,25,-16,1,1\n", encoding="utf-8")
    with pytest.raises(DataError, match="expected header"):
        load_ensemble(path)

def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_ensemble(tmp_path / "absent.csv")

def test_synthetic_round_trip_is_bit_exact(tmp_path):
    """Test that save(load(x)) reproduces the file byte for byte"""
    ens = generate_synthetic_ensemble(3, small_grid(), 300, CorrelationSpec(cross_correlation=0.4))
    first = tmp_path / "first.csv"
    second = tmp_path / "second.csv"
    save_ensemble(ens, first)
    loaded = load_ensemble(first)
    save_ensemble(loaded, second)

    assert first.read_bytes() == second.read_bytes()
    reloaded = load_ensemble(second)
    assert np.array_equal(loaded.u, reloaded.u)
    assert np.array_equal(loaded.v, reloaded.v)
    # 9 significant digits
    np.testing.assert_allclose(loaded.u, ens.u, rtol=1e-8)

def test_saved_rows_are_member_then_lat_major(tmp_path):
    ens = synthetic_ensemble(members=2, grid=regular_grid(25.0, 26.0, -16.0, -15.0, 1.0))
    path = tmp_path / "ens.csv"
    save_ensemble(ens, path)
    lines = path.read_text(encoding="utf-8").splitlines()

    assert lines[0] == "member,lat,lon,u,v"
    assert [line.split(",")[:3] for line in lines[1:5]] == [
        ["0", "25", "-16"], ["0", "25", "-15"], ["0", "26", "-16"], ["0", "26", "-15"],
    ]
    assert lines[5].startswith("1,")

def test_grid_index_is_lat_major():
    grid = small_grid()
    points = grid_points(grid)
    n_lat, n_lon = grid.shape

    assert points.shape == (grid.size, 2)
    for i, j in [(0, 0), (0, n_lon - 1), (3, 2), (n_lat - 1, n_lon - 1)]:
        s = grid_index(grid, i, j)
        assert s == i * n_lon + j
        assert tuple(points[s]) == (grid.lats[i], grid.lons[j])
    with pytest.raises(IndexError):
        grid_index(grid, n_lat, 0)

def test_flatten_field_matches_grid_points():
    grid = small_grid()
    lat_mesh, _ = np.meshgrid(grid.lats, grid.lons, indexing="ij")
    np.testing.assert_array_equal(flatten_field(grid, lat_mesh), grid_points(grid)[:, 0])

def test_grid_requires_increasing_axes():
    with pytest.raises(DataError):
        WindGrid(lats=np.array([26.0, 25.0]), lons=np.array([-16.0, -15.0]))
    with pytest.raises(DataError):
        WindGrid(lats=np.array([25.0]), lons=np.array([-16.0, -15.0]))

def test_synthetic_is_deterministic():
    """Test that the same seed gives identical members"""
    first = synthetic_ensemble(seed=11)
    second = synthetic_ensemble(seed=11)
    other = synthetic_ensemble(seed=12)

    assert np.array_equal(first.u, second.u)
    assert np.array_equal(first.v, second.v)
    assert not np.array_equal(first.u, other.u)

def test_infinite_correlation_length_gives_constant_fields():
    """Test that members are spatially constant when the correlation length is infinite"""
    ens = synthetic_ensemble(members=20, correlation_length_deg=math.inf, cross_correlation=0.0)
    for r in range(ens.n_members):
        assert np.all(ens.u[r] == ens.u[r, 0, 0])
        assert np.all(ens.v[r] == ens.v[r, 0, 0])
    # but the members themselves differ
    assert np.std(ens.u[:, 0, 0]) > 0.0

def test_cross_correlation_recovered():
    """Test the co-located u-v sample correlation for rho = 0.8"""
    grid = regular_grid(25.0, 26.0, -16.0, -15.0, 1.0)
    ens = synthetic_ensemble(seed=5, members=5000, grid=grid, cross_correlation=0.8)
    for i in range(2):
        for j in range(2):
            rho = np.corrcoef(ens.u[:, i, j], ens.v[:, i, j])[0, 1]
            assert abs(rho - 0.8) <= 0.03

def test_synthetic_statistics_follow_correlation():
    grid = regular_grid(25.0, 26.0, -16.0, -15.0, 1.0)
    ens = synthetic_ensemble(seed=1, members=4000, grid=grid, mean_u=15.0, std_u=4.0, mean_v=-2.0, std_v=1.0)
    mean_u, mean_v, std_u, std_v = ensemble_statistics(ens)

    np.testing.assert_allclose(mean_u, 15.0, atol=0.3)
    np.testing.assert_allclose(mean_v, -2.0, atol=0.1)
    np.testing.assert_allclose(std_u, 4.0, rtol=0.05)
    np.testing.assert_allclose(std_v, 1.0, rtol=0.05)

def test_invalid_correlation_length_rejected():
    with pytest.raises(ValidationError):
        CorrelationSpec(correlation_length_deg=0.0)
    with pytest.raises(InsufficientMembersError):
        generate_synthetic_ensemble(0, small_grid(), 1)

def test_pooling_renumbers_members(tmp_path):
    """Test that several files are pooled as equally weighted members"""
    grid = regular_grid(25.0, 26.0, -16.0, -15.0, 1.0)
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    save_ensemble(synthetic_ensemble(seed=1, members=3, grid=grid), first)
    save_ensemble(synthetic_ensemble(seed=2, members=2, grid=grid), second)
    pooled = load_ensembles([first, second])

    assert pooled.n_members == 5
    assert list(pooled.member_ids) == [0, 1, 2, 3, 4]
    np.testing.assert_array_equal(pooled.u[3:], load_ensemble(second).u)

def test_pooling_rejects_grid_mismatch(tmp_path):
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    save_ensemble(synthetic_ensemble(members=2, grid=regular_grid(25.0, 26.0, -16.0, -15.0, 1.0)), first)
    save_ensemble(synthetic_ensemble(members=2, grid=regular_grid(25.0, 27.0, -16.0, -15.0, 1.0)), second)
    with pytest.raises(GridMismatchError):
        load_ensembles([first, second])
