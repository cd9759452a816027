import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualrd.grid import (
    Grid,
    ScalarField,
    Trajectory,
    apply_laplacian,
    dct,
    grid_from_flags,
    idct,
    laplacian_eigenvalues,
    laplacian_matrix,
    lp_norm_space,
    lp_norm_spacetime,
    neumann_laplacian,
    solve_shifted,
)

finite = st.floats(-10, 10, allow_nan=False)


def test_grid_geometry():
    g = Grid((2.0, 1.0), (8, 4))
    assert g.dims == 2 and g.shape == (8, 4) and g.size == 32
    assert g.spacing == (0.25, 0.25)
    assert g.cell_volume == pytest.approx(1 / 16)
    assert g.measure == 2.0
    x, y = g.centers()
    assert x[0] == pytest.approx(0.125) and x[-1] == pytest.approx(1.875)


@pytest.mark.parametrize(
    "extents,cells",
    [((1.0,), (3,)), ((1.0, 1.0, 1.0), (4, 4, 4)), ((0.0,), (8,)), ((1.0,), (4, 4)), ((math.inf,), (8,))],
)
def test_grid_rejects_bad_input(extents, cells):
    with pytest.raises(ValueError):
        Grid(extents, cells)


def test_grid_json_roundtrip_and_unknown_keys():
    g = Grid((1.0, 2.0), (16, 8))
    assert Grid.from_json(g.to_json()) == g
    with pytest.raises(ValueError):
        Grid.from_dict({"extents": [1.0], "cells": [8], "colour": "red"})
    with pytest.raises(ValueError):
        Grid.from_dict({"dims": 2, "extents": [1.0], "cells": [8]})


def test_scalar_field_is_read_only_and_finite():
    g = Grid((1.0,), (8,))
    f = g.constant(2.0)
    assert f.integral() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        ScalarField(g, np.full(8, np.nan))
    with pytest.raises(ValueError):
        ScalarField(g, np.ones(7))


def test_trajectory_validation():
    g = Grid((1.0,), (4,))
    with pytest.raises(ValueError):
        Trajectory(g, [0.1, 0.2], np.zeros((2, 1, 4)))
    with pytest.raises(ValueError):
        Trajectory(g, [0.0, 0.0], np.zeros((2, 1, 4)))
    tr = Trajectory(g, [0.0, 0.5], np.zeros((2, 4)))
    assert tr.n_species == 1 and tr.horizon == 0.5


def test_constant_field_has_zero_laplacian():
    g = Grid((1.0, 3.0), (8, 12))
    assert np.allclose(neumann_laplacian(g.constant(5.0)).values, 0.0)


@pytest.mark.parametrize("n", [8, 16, 33])
def test_cosine_mode_is_eigenvector(n):
    g = Grid((2.0,), (n,))
    (x,) = g.centers()
    k = 3
    u = np.cos(np.pi * k * x / 2.0)
    lam = laplacian_eigenvalues(g)[k]
    assert np.allclose(apply_laplacian(g, u), lam * u, atol=1e-10)
    assert lam == pytest.approx(-(4 / g.spacing[0] ** 2) * math.sin(math.pi * k / (2 * n)) ** 2)


def test_dct_and_sparse_matrix_agree():
    g = Grid((1.0, 2.0), (6, 5))
    rng = np.random.default_rng(0)
    u = rng.standard_normal(g.shape)
    via_matrix = (laplacian_matrix(g) @ u.ravel()).reshape(g.shape)
    via_dct = idct(g, laplacian_eigenvalues(g) * dct(g, u))
    assert np.allclose(via_matrix, apply_laplacian(g, u), atol=1e-10)
    assert np.allclose(via_dct, apply_laplacian(g, u), atol=1e-10)


@given(arrays(float, (6, 7), elements=finite))
def test_laplacian_conserves_mass(u):
    g = Grid((1.5, 1.0), (6, 7))
    assert abs(apply_laplacian(g, u).sum()) <= 1e-9 * (1 + np.abs(u).sum() / min(g.spacing) ** 2)


@given(arrays(float, (9,), elements=finite), arrays(float, (9,), elements=finite))
def test_laplacian_is_symmetric_and_nonpositive(u, v):
    g = Grid((1.0,), (9,))
    lu, lv = apply_laplacian(g, u), apply_laplacian(g, v)
    scale = 1 + np.abs(u).sum() * np.abs(v).sum() / g.spacing[0] ** 2
    assert abs(np.dot(lu, v) - np.dot(u, lv)) <= 1e-10 * scale
    assert np.dot(lu, u) <= 1e-10 * scale


@given(arrays(float, (8, 8), elements=finite), st.floats(1e-4, 10))
def test_shifted_solve_inverts_operator(rhs, coef):
    g = Grid((1.0, 1.0), (8, 8))
    x = solve_shifted(g, rhs, coef)
    resid = x - coef * apply_laplacian(g, x) - rhs
    assert np.abs(resid).max() <= 1e-9 * (1 + np.abs(rhs).max())
    assert x.sum() == pytest.approx(rhs.sum(), abs=1e-12 * (1 + np.abs(rhs).sum()))


def test_space_norms():
    g = Grid((2.0,), (4,))
    f = ScalarField(g, [1.0, -2.0, 0.0, 1.0])
    assert lp_norm_space(f, 1) == pytest.approx(0.5 * 4)
    assert lp_norm_space(f, 2) == pytest.approx(math.sqrt(0.5 * 6))
    assert lp_norm_space(f, math.inf) == 2.0
    with pytest.raises(ValueError):
        lp_norm_space(f, 0.5)


def test_spacetime_norm_trapezoid():
    g = Grid((1.0,), (4,))
    times = np.linspace(0, 2, 5)
    data = np.array([np.full(4, t) for t in times])
    tr = Trajectory(g, times, data)
    # int_0^2 t^2 dt by trapezoid on 5 points
    assert lp_norm_spacetime(tr, p=2) ** 2 == pytest.approx(2.75)
    with pytest.raises(ValueError):
        lp_norm_spacetime(Trajectory(g, [0.0], data[:1]))


def test_grid_from_flags():
    assert grid_from_flags((16, 8), (2.0,)) == Grid((2.0, 2.0), (16, 8))
    assert grid_from_flags((16,)).extents == (1.0,)
    assert json.loads(grid_from_flags((4, 4)).to_json())["dims"] == 2
