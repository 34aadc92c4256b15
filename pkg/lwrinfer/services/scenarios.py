"""Initial/boundary data for the solver test scenarios."""

from typing import Tuple

import numpy as np

from lwrinfer.schemas.grid import Grid

Scenario = Tuple[np.ndarray, np.ndarray, np.ndarray]


def constant_scenario(grid: Grid, value: float) -> Scenario:
    ic = np.full(grid.n_cells, value)
    bc = np.full(grid.n_bc, value)
    return ic, bc, bc.copy()


def riemann_scenario(grid: Grid, rho_l: float, rho_r: float, x0: float) -> Scenario:
    """Single jump at x0 with boundary values equal to the far-field states."""
    ic = np.where(grid.cell_centers < x0, rho_l, rho_r)
    return ic, np.full(grid.n_bc, rho_l), np.full(grid.n_bc, rho_r)


def square_wave_scenario(grid: Grid, low: float, high: float, start: float, end: float) -> Scenario:
    """Block of high density on a low background: a shock and a rarefaction."""
    x = grid.cell_centers
    ic = np.where((x >= start) & (x < end), high, low)
    bc = np.full(grid.n_bc, low)
    return ic, bc, bc.copy()


SCENARIOS = {
    "constant": constant_scenario,
    "riemann": riemann_scenario,
    "square_wave": square_wave_scenario,
}
