"""Shared oracles for the test suite, kept independent of the library paths."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from orlaplace import Grid2D, ScalarField, VectorField2, boundary_nodes


def direct_poisson(grid, f_values, g_boundary):
    """Direct sparse solve of the standard 5-point system 4u - sum(u_nb) = h^2 f."""
    ny, nx = grid.ny, grid.nx
    ids = -np.ones((ny, nx), dtype=np.int64)
    n = (ny - 2) * (nx - 2)
    ids[1:-1, 1:-1] = np.arange(n).reshape(ny - 2, nx - 2)
    vals = np.zeros((ny, nx))
    jj, ii = boundary_nodes(grid)
    vals[jj, ii] = g_boundary

    center = ids[1:-1, 1:-1].ravel()
    rows = [center]
    cols = [center]
    data = [np.full(n, 4.0)]
    rhs = grid.h**2 * f_values[1:-1, 1:-1].ravel()
    for dj, di in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nb = ids[1 + dj : ny - 1 + dj, 1 + di : nx - 1 + di].ravel()
        inside = nb >= 0
        rows.append(center[inside])
        cols.append(nb[inside])
        data.append(np.full(inside.sum(), -1.0))
        bvals = vals[1 + dj : ny - 1 + dj, 1 + di : nx - 1 + di].ravel()
        rhs[~inside] += bvals[~inside]
    K = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    vals[1:-1, 1:-1] = spla.spsolve(K, rhs).reshape(ny - 2, nx - 2)
    return vals


def bump_cutoff(grid, cx=0.0, cy=0.0, R=0.6):
    """Smooth compact cutoff (1 - s^2)^3 plus its closed-form gradient."""
    X, Y = grid.meshes()
    s2 = ((X - cx) ** 2 + (Y - cy) ** 2) / R**2
    inside = s2 < 1.0
    vals = np.where(inside, (1.0 - s2) ** 3, 0.0)
    gx = np.where(inside, -6.0 * (X - cx) / R**2 * (1.0 - s2) ** 2, 0.0)
    gy = np.where(inside, -6.0 * (Y - cy) / R**2 * (1.0 - s2) ** 2, 0.0)
    return ScalarField(grid, vals), VectorField2(grid, gx, gy)


def fit_slope(hs, errs):
    """Least-squares convergence order: slope of log(err) against log(h)."""
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.asarray(errs, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def square_grid(n_cells, box=(-1.0, 1.0)) -> Grid2D:
    h = (box[1] - box[0]) / n_cells
    return Grid2D(n_cells + 1, n_cells + 1, h, box[0], box[0])
