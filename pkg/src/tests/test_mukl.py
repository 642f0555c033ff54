import sys
sys.path.append(".")

import numpy as np
import pytest

from src.core.exceptions import DataError, NumericalError
from src.services.ensemble_io import WindEnsemble, grid_points, regular_grid
from src.services.mukl import (
    AssembledCovariance,
    ExpansionWindModel,
    assemble_covariance,
    build_expansion,
    explained_variance_table,
    extract_xi_samples,
    load_expansion,
    reconstruct_member,
    save_expansion,
    selectable_modes,
    solve_eigenproblem,
    truncate,
    truncated,
)
from src.tests.utils.test_helpers import rank_one_ensemble, small_grid, synthetic_ensemble

def test_two_member_covariance_by_hand():
    """Test members +1 and -1 everywhere: C_uu = 2, C_uv = C_vv = 0"""
    grid = regular_grid(25.0, 26.0, -16.0, -15.0, 1.0)
    u = np.stack([np.ones(grid.shape), -np.ones(grid.shape)])
    ens = WindEnsemble(grid=grid, u=u, v=np.zeros_like(u))
    cov = assemble_covariance(ens)

    n = grid.size
    assert cov.matrix.shape == (2 * n, 2 * n)
    np.testing.assert_allclose(cov.matrix[:n, :n], 2.0)
    np.testing.assert_allclose(cov.matrix[:n, n:], 0.0)
    np.testing.assert_allclose(cov.matrix[n:, n:], 0.0)
    np.testing.assert_allclose(cov.mean_u, 0.0)

def test_identical_members_give_zero_covariance():
    grid = regular_grid(25.0, 26.0, -16.0, -15.0, 1.0)
    u = np.full((3,) + grid.shape, 12.0)
    cov = assemble_covariance(WindEnsemble(grid=grid, u=u, v=u.copy()))
    assert np.all(cov.matrix == 0.0)

def test_uncorrelated_components_decouple():
    """Test that rho = 0 leaves the u-v block small at large R"""
    grid = regular_grid(25.0, 26.0, -16.0, -14.0, 1.0)
    ens = synthetic_ensemble(seed=4, members=10_000, grid=grid, cross_correlation=0.0)
    cov = assemble_covariance(ens)
    n = grid.size

    assert np.max(np.abs(cov.matrix[:n, n:])) <= 0.05 * np.max(cov.matrix[:n, :n])

def test_eigenproblem_of_ones():
    """Test the 2x2 matrix of ones with unit weights"""
    cov = AssembledCovariance(matrix=np.ones((2, 2)), weights=np.ones(1))
    eigenvalues, _ = solve_eigenproblem(cov)
    np.testing.assert_allclose(eigenvalues, [2.0, 0.0], atol=1e-12)

def test_eigenproblem_of_diagonal():
    cov = AssembledCovariance(matrix=np.diag([4.0, 3.0, 2.0, 1.0]), weights=np.ones(2))
    eigenvalues, eigenvectors = solve_eigenproblem(cov)

    np.testing.assert_allclose(eigenvalues, [4.0, 3.0, 2.0, 1.0])
    # sign convention makes the largest entry positive
    np.testing.assert_allclose(eigenvectors, np.eye(4), atol=1e-12)

def test_spectral_reconstruction():
    """Test V diag(lambda) V^T = C with unit weights"""
    rng = np.random.default_rng(0)
    x = rng.standard_normal((30, 8))
    matrix = x.T @ x / 29.0
    eigenvalues, eigenvectors = solve_eigenproblem(AssembledCovariance(matrix=matrix, weights=np.ones(4)))

    assert np.all(np.diff(eigenvalues) <= 0.0)
    rebuilt = eigenvectors @ np.diag(eigenvalues) @ eigenvectors.T
    assert np.max(np.abs(rebuilt - matrix)) <= 1e-10 * eigenvalues[0]

def test_weighted_orthonormality():
    """Test that eigenvectors are orthonormal under the weighted inner product"""
    rng = np.random.default_rng(1)
    x = rng.standard_normal((20, 6))
    weights = np.array([0.5, 1.0, 2.0])
    _, eigenvectors = solve_eigenproblem(AssembledCovariance(matrix=x.T @ x / 19.0, weights=weights))

    gram = eigenvectors.T @ (np.tile(weights, 2)[:, None] * eigenvectors)
    np.testing.assert_allclose(gram, np.eye(6), atol=1e-10)

def test_asymmetric_covariance_rejected():
    matrix = np.array([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(NumericalError, match="symmetric"):
        solve_eigenproblem(AssembledCovariance(matrix=matrix, weights=np.ones(1)))

def test_truncate_by_fraction():
    """Test the smallest M reaching the explained fraction"""
    assert truncate(np.array([4.0, 3.0, 2.0, 1.0]), 0.65) == 2
    assert truncate(np.array([4.0, 3.0, 2.0, 1.0]), 0.7) == 2
    assert truncate(np.array([4.0, 3.0, 2.0, 1.0]), 1.0) == 4
    assert truncate(np.array([4.0, 3.0, 2.0, 0.0]), 1.0) == 3
    assert truncate(np.array([1.0, 0.0, 0.0]), 0.3) == 1
    assert truncate(np.array([1.0, 0.0, 0.0]), 1.0) == 1

def test_truncate_rejects_bad_input():
    with pytest.raises(NumericalError):
        truncate(np.zeros(3), 0.5)
    with pytest.raises(ValueError):
        truncate(np.array([1.0, 0.5]), 0.0)
    with pytest.raises(ValueError):
        truncate(np.array([1.0, 0.5]), 1.5)

def test_rank_one_ensemble():
    """Test that m +/- c*g has a single mode and xi samples of equal magnitude"""
    ens = rank_one_ensemble(members=4)
    exp = build_expansion(ens, m=1)

    assert selectable_modes(exp.eigenvalues) == 1
    xi = exp.xi_samples[:, 0]
    # unit sample variance of +/-a over R members: a = sqrt((R - 1) / R)
    np.testing.assert_allclose(np.abs(xi), np.sqrt(3.0 / 4.0), rtol=1e-10)
    assert np.all(np.sign(xi[::2]) == -np.sign(xi[1::2]))

    table = explained_variance_table(exp)
    assert table[0][2] == pytest.approx(100.0)

def test_zero_modes_cannot_be_retained():
    ens = rank_one_ensemble(members=4)
    with pytest.raises(NumericalError, match="exceeds"):
        build_expansion(ens, m=2)

def test_extract_rejects_numerically_zero_mode():
    """Test the guard against modes with zero eigenvalue"""
    ens = rank_one_ensemble(members=4)
    exp = build_expansion(ens, m=1)
    cov = assemble_covariance(ens)
    eigenvalues, eigenvectors = solve_eigenproblem(cov)
    wide = type(exp)(
        grid=exp.grid,
        weights=exp.weights,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors[:, :2],
        mean_u=exp.mean_u,
        mean_v=exp.mean_v,
    )
    with pytest.raises(NumericalError, match="mode 2"):
        extract_xi_samples(wide, ens)

def test_xi_samples_are_standardized():
    """Test zero mean and identity sample covariance of the xi columns"""
    ens = synthetic_ensemble(seed=2, members=40, correlation_length_deg=0.5)
    exp = build_expansion(ens, m=6)

    assert exp.xi_samples.shape == (40, 6)
    np.testing.assert_allclose(exp.xi_samples.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(np.cov(exp.xi_samples, rowvar=False), np.eye(6), atol=1e-8)

def test_full_rank_reconstruction():
    """Test that member fields are rebuilt from their own xi at full rank"""
    ens = synthetic_ensemble(seed=3, members=25, correlation_length_deg=0.5)
    exp = build_expansion(ens, delta=1.0)

    assert exp.m == 24
    span = max(np.ptp(ens.u), np.ptp(ens.v))
    for r in (0, 7, 24):
        u, v = reconstruct_member(exp, exp.xi_samples[r])
        assert np.max(np.abs(u - ens.u[r])) <= 1e-8 * span
        assert np.max(np.abs(v - ens.v[r])) <= 1e-8 * span

def test_zero_xi_is_the_mean():
    ens = synthetic_ensemble(seed=3, members=25)
    exp = build_expansion(ens, m=3)
    u, v = reconstruct_member(exp, np.zeros(3))

    np.testing.assert_allclose(u, ens.u.mean(axis=0), atol=1e-10)
    np.testing.assert_allclose(v, ens.v.mean(axis=0), atol=1e-10)
    with pytest.raises(ValueError):
        reconstruct_member(exp, np.zeros(2))

def test_high_fraction_keeps_nearly_all_modes():
    """Test that delta = 0.999 on a full-rank ensemble keeps close to R - 1 modes"""
    ens = synthetic_ensemble(seed=8, members=40, correlation_length_deg=0.5)
    exp = build_expansion(ens, delta=0.999)
    assert 35 <= exp.m <= 39
    assert exp.cumulative_fraction >= 0.999

def test_build_requires_exactly_one_selector():
    ens = synthetic_ensemble(members=10)
    with pytest.raises(ValueError):
        build_expansion(ens)
    with pytest.raises(ValueError):
        build_expansion(ens, m=2, delta=0.9)

def test_subfunctions_and_scaled_eigenvalues():
    """Test that the u and v halves split the eigenvalue"""
    ens = synthetic_ensemble(seed=6, members=30, cross_correlation=0.5)
    exp = build_expansion(ens, m=4)

    assert exp.subfunctions("u").shape == (exp.n_points, 4)
    np.testing.assert_allclose(
        exp.scaled_eigenvalues("u") + exp.scaled_eigenvalues("v"), exp.retained_eigenvalues, rtol=1e-10
    )
    norms = exp.weights @ exp.normalized_subfunctions("v") ** 2
    np.testing.assert_allclose(norms, 1.0, rtol=1e-10)
    with pytest.raises(ValueError):
        exp.subfunctions("w")

def test_truncated_view():
    ens = synthetic_ensemble(seed=6, members=30)
    exp = build_expansion(ens, m=4)
    small = truncated(exp, 2)

    assert small.m == 2
    np.testing.assert_array_equal(small.xi_samples, exp.xi_samples[:, :2])
    assert small.cumulative_fraction < exp.cumulative_fraction

def test_custom_weights_validated():
    ens = synthetic_ensemble(members=10)
    with pytest.raises(DataError):
        build_expansion(ens, m=1, weights=np.ones(3))

def test_expansion_archive_round_trip(tmp_path):
    """Test that the archive restores every array and is deterministic"""
    ens = synthetic_ensemble(seed=9, members=20)
    exp = build_expansion(ens, m=3)
    first = tmp_path / "a.bin"
    second = tmp_path / "b.bin"
    save_expansion(exp, first)
    save_expansion(build_expansion(ens, m=3), second)

    assert first.read_bytes() == second.read_bytes()
    assert first.read_bytes()[:8] == b"WCDMUKL1"
    loaded = load_expansion(first)
    assert loaded.grid.same_as(exp.grid)
    np.testing.assert_array_equal(loaded.eigenvalues, exp.eigenvalues)
    np.testing.assert_array_equal(loaded.eigenvectors, exp.eigenvectors)
    np.testing.assert_array_equal(loaded.xi_samples, exp.xi_samples)

def test_truncated_archive_rejected(tmp_path):
    exp = build_expansion(synthetic_ensemble(members=10), m=2)
    path = tmp_path / "a.bin"
    save_expansion(exp, path)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(DataError):
        load_expansion(path)

def test_wind_model_matches_reconstruction_at_centers():
    """Test that the interpolated wind of a xi vector equals the reconstructed fields on the grid"""
    ens = synthetic_ensemble(seed=10, members=30)
    exp = build_expansion(ens, m=3)
    model = ExpansionWindModel(exp)
    xi = np.array([0.5, -1.0, 2.0])
    u, v = reconstruct_member(exp, xi)
    wind = model.field(xi)

    for s in (0, 13, exp.n_points - 1):
        lat, lon = grid_points(small_grid())[s]
        wind_u, wind_v = wind(lat, lon)
        assert wind_u == pytest.approx(u.reshape(-1)[s], abs=1e-6)
        assert wind_v == pytest.approx(v.reshape(-1)[s], abs=1e-6)

def test_truncation_error_equals_eigenvalue_tail():
    """Test that the mean-square reconstruction error of the members is the discarded variance"""
    grid = regular_grid(24.0, 28.5, -20.0, -15.5, 0.5)
    ens = synthetic_ensemble(seed=12, members=300, grid=grid, correlation_length_deg=1.0, cross_correlation=0.3)
    exp = build_expansion(ens, m=20)
    stacked = ens.stacked()
    mean = np.concatenate([exp.mean_u, exp.mean_v])

    assert grid.shape == (10, 10)
    for m in range(1, 21):
        view = truncated(exp, m)
        rebuilt = mean + (view.xi_samples * np.sqrt(view.retained_eigenvalues)) @ view.eigenvectors.T
        error = np.sum((stacked - rebuilt) ** 2) / (ens.n_members - 1)
        tail = np.sum(exp.eigenvalues[m:])
        assert error == pytest.approx(tail, rel=1e-6)

def test_scaled_spread_scales_eigenvalues_only():
    """Test that scaling the member deviations by c scales the eigenvalues by c^2 and keeps xi"""
    ens = synthetic_ensemble(seed=14, members=30, cross_correlation=0.4)
    mean_u, mean_v = ens.u.mean(axis=0), ens.v.mean(axis=0)
    c = 3.0
    scaled = WindEnsemble(grid=ens.grid, u=mean_u + c * (ens.u - mean_u), v=mean_v + c * (ens.v - mean_v))

    exp = build_expansion(ens, m=5)
    exp_scaled = build_expansion(scaled, m=5)

    np.testing.assert_allclose(exp_scaled.retained_eigenvalues, c ** 2 * exp.retained_eigenvalues, rtol=1e-8)
    np.testing.assert_allclose(exp_scaled.xi_samples, exp.xi_samples, atol=1e-7)

def test_cross_covariance_bounded_by_variances():
    """Test |C_uv(x, y)| <= sqrt(C_uu(x, x) C_vv(y, y)) for every pair of grid points"""
    ens = synthetic_ensemble(seed=15, members=25, cross_correlation=0.8)
    cov = assemble_covariance(ens)
    n = cov.n_points
    variance_u = np.diag(cov.matrix)[:n]
    variance_v = np.diag(cov.matrix)[n:]

    bound = np.sqrt(np.outer(variance_u, variance_v))
    assert np.all(np.abs(cov.matrix[:n, n:]) <= bound * (1.0 + 1e-12) + 1e-12)
