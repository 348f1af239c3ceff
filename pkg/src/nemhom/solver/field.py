"""Discrete Q-tensor fields on uniform box grids.

Fields store the 5-vector coordinates per node, so the symmetry and trace
constraints hold by construction throughout descent.  The node mask labels
each node as interior (a degree of freedom), inclusion interior (filled by
the harmonic extension, excluded from bulk/elastic sums), or a boundary node
carrying the fixed datum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from ..lattice import Box, InclusionConfig
from ..qtensor import decode5, encode5

INTERIOR = 0
INCLUSION = 1
DIRICHLET = 2


@dataclass(frozen=True)
class Grid:
    """Uniform node grid over a box: n_cells cells per axis, equal spacing."""

    box: Box
    n_cells: tuple

    def __post_init__(self):
        nc = self.n_cells
        n = (int(nc),) * 3 if np.ndim(nc) == 0 else tuple(int(k) for k in nc)
        if len(n) != 3:
            raise ValueError("n_cells must be an int or a 3-tuple")
        if any(k < 2 for k in n):
            raise ValueError("need at least 2 cells per axis")
        object.__setattr__(self, 'n_cells', n)
        h = self.box.edges / np.asarray(n)
        if np.max(np.abs(h - h[0])) > 1e-12 * h[0]:
            raise ValueError(f"grid spacing must be uniform across axes, got {h}")

    @classmethod
    def for_spacing(cls, box: Box, h_max: float) -> 'Grid':
        """Smallest uniform grid with spacing <= h_max (box edges must be
        commensurate, e.g. a cube)."""
        edges = box.edges
        n0 = int(np.ceil(edges[0] / h_max))
        n = tuple(int(round(e / (edges[0] / n0))) for e in edges)
        return cls(box, n)

    @property
    def h(self) -> float:
        return float(self.box.edges[0] / self.n_cells[0])

    @property
    def n_nodes(self) -> tuple:
        return tuple(k + 1 for k in self.n_cells)

    @property
    def axes(self):
        return [np.asarray(self.box.lo)[i] + self.h * np.arange(self.n_nodes[i])
                for i in range(3)]

    def node_positions(self) -> np.ndarray:
        ax = self.axes
        xx, yy, zz = np.meshgrid(*ax, indexing='ij')
        return np.stack([xx, yy, zz], axis=-1)

    def cell_centers_axes(self):
        ax = self.axes
        return [0.5 * (a[:-1] + a[1:]) for a in ax]


Datum = Union[np.ndarray, Callable]


def uniform_uniaxial_datum(s: float, n=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Constant boundary datum s (n x n - Id/3) as a 5-vector."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    return encode5(s * (np.outer(n, n) - np.eye(3) / 3.0))


def _evaluate_datum(g: Datum, positions: np.ndarray) -> np.ndarray:
    if callable(g):
        return np.asarray(g(positions), dtype=float)
    g = np.asarray(g, dtype=float)
    return np.broadcast_to(g, positions.shape[:-1] + (5,)).copy()


def build_mask(grid: Grid, config: Optional[InclusionConfig]) -> np.ndarray:
    """Node labels: interior / inclusion interior / domain boundary.

    Inclusion membership uses the exact analytic inside test of the shape
    (Minkowski gauge), not a voxelized boundary.
    """
    nx, ny, nz = grid.n_nodes
    mask = np.zeros((nx, ny, nz), dtype=np.int8)
    mask[0, :, :] = DIRICHLET
    mask[-1, :, :] = DIRICHLET
    mask[:, 0, :] = DIRICHLET
    mask[:, -1, :] = DIRICHLET
    mask[:, :, 0] = DIRICHLET
    mask[:, :, -1] = DIRICHLET
    if config is None or config.n_inclusions == 0:
        return mask
    scale = config.inclusion_scale
    radius = scale * config.shape.circumradius()
    ax = grid.axes
    lo = np.asarray(grid.box.lo)
    h = grid.h
    for center, rot in zip(config.centers, config.rotations):
        i0 = [max(0, int(np.floor((center[d] - radius - lo[d]) / h)) - 1) for d in range(3)]
        i1 = [min(grid.n_nodes[d], int(np.ceil((center[d] + radius - lo[d]) / h)) + 2)
              for d in range(3)]
        sub = np.stack(np.meshgrid(ax[0][i0[0]:i1[0]], ax[1][i0[1]:i1[1]],
                                   ax[2][i0[2]:i1[2]], indexing='ij'), axis=-1)
        local = np.einsum('ji,...j->...i', rot, sub - center) / scale
        inside = config.shape.gauge(local) <= 1.0
        view = mask[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]]
        view[inside] = INCLUSION
    return mask


@dataclass
class DiscreteField:
    """Q-tensor field sampled at grid nodes (5-vector per node)."""

    grid: Grid
    values: np.ndarray          # (nx, ny, nz, 5)
    mask: np.ndarray            # (nx, ny, nz) int8
    datum: Datum = None

    def __post_init__(self):
        expect = self.grid.n_nodes + (5,)
        if self.values.shape != expect:
            raise ValueError(f"values shape {self.values.shape} != {expect}")
        if self.mask.shape != self.grid.n_nodes:
            raise ValueError("mask shape mismatch")

    @classmethod
    def create(cls, grid: Grid, g: Datum, config: Optional[InclusionConfig] = None,
               initial: Optional[Datum] = None) -> 'DiscreteField':
        """Field with the boundary datum applied exactly on boundary nodes and
        the initial guess (default: the datum itself) elsewhere."""
        mask = build_mask(grid, config)
        pos = grid.node_positions()
        values = _evaluate_datum(initial if initial is not None else g, pos)
        values[mask == DIRICHLET] = _evaluate_datum(g, pos)[mask == DIRICHLET]
        return cls(grid, values, mask, g)

    def copy(self) -> 'DiscreteField':
        return DiscreteField(self.grid, self.values.copy(), self.mask.copy(), self.datum)

    def with_values(self, values: np.ndarray) -> 'DiscreteField':
        return DiscreteField(self.grid, values, self.mask, self.datum)

    @property
    def free(self) -> np.ndarray:
        """Boolean mask of the descent degrees of freedom."""
        return self.mask == INTERIOR

    def matrices(self) -> np.ndarray:
        """(nx, ny, nz, 3, 3) matrix form of the field."""
        return decode5(self.values)

    def sample(self, fn: Callable) -> 'DiscreteField':
        """Replace non-boundary values by fn evaluated at node positions
        (boundary nodes keep the datum)."""
        pos = self.grid.node_positions()
        vals = np.asarray(fn(pos), dtype=float)
        out = self.values.copy()
        keep = self.mask != DIRICHLET
        out[keep] = vals[keep]
        return self.with_values(out)
