"""Discrete harmonic extension across inclusion interiors.

All inclusion-interior nodes solve the 7-point Laplace equation with the
surrounding unmasked node values as boundary data.  The sparse system over
the masked nodes is block-diagonal across inclusions by construction; one
factorization serves every energy evaluation and, being symmetric, also the
adjoint (gradient back-propagation onto the surrounding data ring).
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .field import DiscreteField, Grid, INCLUSION

_OFFSETS = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0],
                     [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.int64)


class HarmonicExtension:
    """Factorized componentwise Laplace fill for every masked node."""

    def __init__(self, grid: Grid, mask: np.ndarray):
        self.shape = mask.shape
        masked = np.argwhere(mask == INCLUSION)
        self.n_masked = len(masked)
        if self.n_masked == 0:
            return
        if (masked.min() == 0 or (masked >= np.asarray(self.shape) - 1).any()):
            raise ValueError("masked nodes must be strictly interior to the grid")
        nx, ny, nz = self.shape
        flat = (masked[:, 0] * ny + masked[:, 1]) * nz + masked[:, 2]
        local = np.full(nx * ny * nz, -1, dtype=np.int64)
        local[flat] = np.arange(self.n_masked)
        neighbours = (masked[:, None, :] + _OFFSETS[None, :, :]).reshape(-1, 3)
        nb_flat = (neighbours[:, 0] * ny + neighbours[:, 1]) * nz + neighbours[:, 2]
        rows = np.repeat(np.arange(self.n_masked), 6)
        nb_local = local[nb_flat]
        internal = nb_local >= 0
        a_rows = np.concatenate([np.arange(self.n_masked), rows[internal]])
        a_cols = np.concatenate([np.arange(self.n_masked), nb_local[internal]])
        a_vals = np.concatenate([np.full(self.n_masked, 6.0),
                                 np.full(internal.sum(), -1.0)])
        self.lu = splu(csc_matrix((a_vals, (a_rows, a_cols)),
                                  shape=(self.n_masked, self.n_masked)))
        self.nodes_flat = flat
        self.ring_rows = rows[~internal]
        self.ring_flat = nb_flat[~internal]

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Copy of the node values with every masked node replaced by its
        discrete harmonic fill (componentwise in the 5-vector basis)."""
        out = values.copy()
        if self.n_masked == 0:
            return out
        flat = out.reshape(-1, values.shape[-1])
        ring_vals = flat[self.ring_flat]
        rhs = np.stack([np.bincount(self.ring_rows, weights=ring_vals[:, c],
                                    minlength=self.n_masked)
                        for c in range(values.shape[-1])], axis=1)
        flat[self.nodes_flat] = self.lu.solve(rhs)
        return out

    def adjoint(self, grad: np.ndarray) -> np.ndarray:
        """Push a gradient with respect to extended (masked) values back onto
        the surrounding data nodes; masked entries come back zeroed."""
        out = grad.copy()
        if self.n_masked == 0:
            return out
        flat = out.reshape(-1, grad.shape[-1])
        g = flat[self.nodes_flat].copy()
        flat[self.nodes_flat] = 0.0
        w = self.lu.solve(g)  # system matrix is symmetric
        ring_w = w[self.ring_rows]
        for c in range(grad.shape[-1]):
            flat[:, c] += np.bincount(self.ring_flat, weights=ring_w[:, c],
                                      minlength=flat.shape[0])
        return out


def harmonic_extension(field: DiscreteField) -> DiscreteField:
    """Field with all inclusion-interior nodes replaced by the harmonic fill."""
    ext = HarmonicExtension(field.grid, field.mask)
    return field.with_values(ext.apply(field.values))
