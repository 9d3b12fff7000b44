"""Periodic grid, field, and mask primitives."""

import math

import numpy as np
import pytest

from curvemin.grid import (
    Mask,
    PeriodicGrid,
    ScalarField,
    ball_mask,
    best_translation_overlap,
    connected_components,
    empty_mask,
    full_mask,
    mask_diameter,
    mask_extents,
    rescale_mask,
    sym_diff_volume,
    translate,
    unit_torus,
    volume,
)


def test_grid_basic_properties():
    grid = PeriodicGrid((4, 8), 0.25)
    assert grid.dim == 2
    assert grid.cell_count == 32
    assert grid.cell_volume == pytest.approx(0.0625)
    assert grid.lengths == (1.0, 2.0)
    assert grid.total_volume == pytest.approx(2.0)
    assert grid.periodic == (True, True)


def test_grid_validation():
    with pytest.raises(ValueError):
        PeriodicGrid((0, 4), 0.25)
    with pytest.raises(ValueError):
        PeriodicGrid((4, 4), -1.0)
    with pytest.raises(ValueError):
        PeriodicGrid((4, 4), 0.25, (True,))


def test_unit_torus():
    grid = unit_torus(16)
    assert grid.sides == (16, 16)
    assert grid.spacing == pytest.approx(1.0 / 16)
    assert grid.total_volume == pytest.approx(1.0)
    grid3 = unit_torus(8, dim=3)
    assert grid3.sides == (8, 8, 8)


def test_centers_at_cell_midpoints():
    grid = PeriodicGrid((4, 4), 0.25)
    np.testing.assert_allclose(grid.centers(0), [0.125, 0.375, 0.625, 0.875])


def test_scalar_field_stats():
    grid = unit_torus(8)
    values = np.arange(64, dtype=float).reshape(8, 8) - 31.5
    f = ScalarField(grid, values)
    assert f.mean == pytest.approx(0.0)
    assert f.sup_norm == pytest.approx(31.5)
    with pytest.raises(ValueError):
        ScalarField(grid, np.zeros((4, 4)))


def test_mask_count_and_complement():
    grid = unit_torus(8)
    cells = np.zeros((8, 8), dtype=bool)
    cells[:2] = True
    mask = Mask(grid, cells)
    assert mask.count == 16
    assert mask.complement().count == 48
    assert volume(mask) == pytest.approx(16 / 64)
    assert empty_mask(grid).count == 0
    assert full_mask(grid).count == 64
    assert mask == Mask(grid, cells.copy())
    assert mask != mask.complement()


def test_translate_wraps_and_preserves_volume():
    grid = unit_torus(8)
    rng = np.random.Generator(np.random.Philox(5))
    cells = rng.random((8, 8)) < 0.4
    mask = Mask(grid, cells)
    moved = translate(mask, (3, -2))
    assert moved.count == mask.count
    assert translate(moved, (-3, 2)) == mask
    assert translate(mask, (8, 8)) == mask


def test_ball_mask_volume_and_wrap():
    grid = unit_torus(64)
    ball = ball_mask(grid, (0.5, 0.5), 0.2)
    assert volume(ball) == pytest.approx(math.pi * 0.04, rel=0.05)
    near_edge = ball_mask(grid, (0.01, 0.5), 0.2)
    assert near_edge.count == ball.count


def test_sym_diff_and_overlap_recovery():
    grid = unit_torus(32)
    rng = np.random.Generator(np.random.Philox(11))
    cells = rng.random((32, 32)) < 0.3
    a = Mask(grid, cells)
    b = translate(a, (7, -12))
    assert sym_diff_volume(a, a) == 0.0
    shift, residual = best_translation_overlap(a, b)
    assert residual == 0.0
    assert translate(a, shift) == b


def test_rescale_mask_scales_volume():
    grid = unit_torus(64)
    ball = ball_mask(grid, (0.5, 0.5), 0.15)
    target = unit_torus(96)
    grown = rescale_mask(ball, 2.0, target)
    assert volume(grown) == pytest.approx(4.0 * volume(ball), rel=0.05)


def test_connected_components_periodic():
    grid = unit_torus(16)
    cells = np.zeros((16, 16), dtype=bool)
    cells[2:5, 2:5] = True
    cells[10:12, 10:12] = True
    comps = connected_components(Mask(grid, cells))
    assert [c.count for c in comps] == [9, 4]
    # one blob crossing the periodic seam stays a single component
    wrap = np.zeros((16, 16), dtype=bool)
    wrap[15, 3:6] = True
    wrap[0, 3:6] = True
    assert len(connected_components(Mask(grid, wrap))) == 1


def test_extents_and_diameter():
    grid = unit_torus(32)
    cells = np.zeros((32, 32), dtype=bool)
    cells[4:12, 6:10] = True
    mask = Mask(grid, cells)
    ext = mask_extents(mask)
    assert ext[0] == pytest.approx(8 / 32)
    assert ext[1] == pytest.approx(4 / 32)
    assert mask_diameter(mask) == pytest.approx(max(ext))
