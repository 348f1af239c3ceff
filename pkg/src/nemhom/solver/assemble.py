"""Energy assembly on uniform grids: the inclusion functional (bulk + elastic
over the unmasked region plus the scaled boundary-anchoring term) and its
homogenized limit (bulk + elastic + homogenized density over the full box).

Discretization: midpoint cell quadrature with trilinear cell means, central
face differences for gradients, exact analytic inside/outside tests for the
inclusion mask, and per-facet trilinear interpolation of the field onto the
scaled inclusion boundary meshes (masked stencil nodes read the harmonic
extension, so the energy is a smooth function of the free nodes only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..energies import (BulkSpec, ElasticSpec, SurfaceSpec, bulk_energy_from_invariants,
                        bulk_gradient, surface_energy_from_invariants, surface_gradient)
from ..errors import GateError
from ..homogenization import FHomEvaluator, RotationField, SurfaceMesh, build_mesh
from ..lattice import InclusionConfig
from ..qtensor import S0_BASIS, decode5, encode5
from .extension import HarmonicExtension
from .field import DiscreteField, Datum, Grid, INCLUSION, build_mask


@dataclass(frozen=True)
class EnergyBreakdown:
    elastic: float
    bulk: float
    surface: float

    @property
    def total(self) -> float:
        return self.elastic + self.bulk + self.surface

    def __add__(self, other: 'EnergyBreakdown') -> 'EnergyBreakdown':
        return EnergyBreakdown(self.elastic + other.elastic, self.bulk + other.bulk,
                               self.surface + other.surface)


# ---------------------------------------------------------------------------
# cell stencils (work on node slabs; adjoints scatter back to nodes)

def _cell_means(v):
    return 0.125 * (v[:-1, :-1, :-1] + v[1:, :-1, :-1] + v[:-1, 1:, :-1]
                    + v[:-1, :-1, 1:] + v[1:, 1:, :-1] + v[1:, :-1, 1:]
                    + v[:-1, 1:, 1:] + v[1:, 1:, 1:])


def _cell_gradients(v, h):
    gx = ((v[1:, :-1, :-1] + v[1:, 1:, :-1] + v[1:, :-1, 1:] + v[1:, 1:, 1:])
          - (v[:-1, :-1, :-1] + v[:-1, 1:, :-1] + v[:-1, :-1, 1:] + v[:-1, 1:, 1:])) / (4 * h)
    gy = ((v[:, 1:, :-1][1:] + v[:, 1:, :-1][:-1] + v[:, 1:, 1:][1:] + v[:, 1:, 1:][:-1])
          - (v[:, :-1, :-1][1:] + v[:, :-1, :-1][:-1] + v[:, :-1, 1:][1:] + v[:, :-1, 1:][:-1])) / (4 * h)
    gz = ((v[:, :-1, 1:][1:] + v[:, 1:, 1:][:-1] + v[:, 1:, 1:][1:] + v[:, :-1, 1:][:-1])
          - (v[:, :-1, :-1][1:] + v[:, 1:, :-1][:-1] + v[:, 1:, :-1][1:] + v[:, :-1, :-1][:-1])) / (4 * h)
    return np.stack([gx, gy, gz], axis=-1)


def _scatter_means(cell, out):
    c = 0.125 * cell
    out[:-1, :-1, :-1] += c
    out[1:, :-1, :-1] += c
    out[:-1, 1:, :-1] += c
    out[:-1, :-1, 1:] += c
    out[1:, 1:, :-1] += c
    out[1:, :-1, 1:] += c
    out[:-1, 1:, 1:] += c
    out[1:, 1:, 1:] += c


def _elastic_density_and_grad(spec: ElasticSpec, d5, want_grad: bool):
    """Density (and optionally d(density)/d(D5)) for cell gradients d5 of
    shape (..., 5, 3)."""
    if spec.family == 'dirichlet':
        dens = np.einsum('...mk,...mk->...', d5, d5)
        return (dens, 2.0 * d5) if want_grad else (dens, None)
    d3 = np.einsum('...mk,mij->...ijk', d5, S0_BASIS)
    t1 = np.einsum('...ijk,...ijk->...', d3, d3)
    div = np.einsum('...ijj->...i', d3)
    t2 = np.einsum('...i,...i->...', div, div)
    t3 = np.einsum('...ijk,...ikj->...', d3, d3)
    dens = spec.L1 * t1 + spec.L2 * t2 + spec.L3 * t3
    if not want_grad:
        return dens, None
    g3 = 2.0 * spec.L1 * d3
    g3 += 2.0 * spec.L3 * np.swapaxes(d3, -1, -2)
    eye = np.eye(3)
    g3 += 2.0 * spec.L2 * np.einsum('...i,jk->...ijk', div, eye)
    g5 = np.einsum('...ijk,mij->...mk', g3, S0_BASIS)
    return dens, g5


class _VolumeTerms:
    """Slab-looped bulk + elastic quadrature shared by both assemblers."""

    def __init__(self, grid: Grid, bulk: BulkSpec, elastic: ElasticSpec,
                 cell_active: Optional[np.ndarray], slab: int = 32):
        self.grid = grid
        self.bulk = bulk
        self.elastic = elastic
        self.cell_active = cell_active
        self.slab = slab

    def _slabs(self):
        ncx = self.grid.n_cells[0]
        for x0 in range(0, ncx, self.slab):
            yield x0, min(x0 + self.slab, ncx)

    def energy(self, values):
        h = self.grid.h
        vol = h ** 3
        e_b = 0.0
        e_e = 0.0
        for x0, x1 in self._slabs():
            v = values[x0:x1 + 1]
            qc = _cell_means(v)
            d5 = _cell_gradients(v, h)
            qm = decode5(qc)
            i2 = np.einsum('...m,...m->...', qc, qc)
            i3 = np.einsum('...ij,...jk,...ki->...', qm, qm, qm)
            fb = bulk_energy_from_invariants(self.bulk, i2, i3)
            fe, _ = _elastic_density_and_grad(self.elastic, d5, False)
            if self.cell_active is not None:
                act = self.cell_active[x0:x1]
                fb = fb * act
                fe = fe * act
            e_b += float(fb.sum()) * vol
            e_e += float(fe.sum()) * vol
        return e_e, e_b

    def gradient(self, values, out):
        h = self.grid.h
        vol = h ** 3
        e_b = 0.0
        e_e = 0.0
        for x0, x1 in self._slabs():
            v = values[x0:x1 + 1]
            qc = _cell_means(v)
            d5 = _cell_gradients(v, h)
            qm = decode5(qc)
            i2 = np.einsum('...m,...m->...', qc, qc)
            i3 = np.einsum('...ij,...jk,...ki->...', qm, qm, qm)
            fb = bulk_energy_from_invariants(self.bulk, i2, i3)
            fe, ge5 = _elastic_density_and_grad(self.elastic, d5, True)
            gb5 = encode5(bulk_gradient(self.bulk, qm))
            if self.cell_active is not None:
                act = self.cell_active[x0:x1]
                fb = fb * act
                fe = fe * act
                gb5 = gb5 * act[..., None]
                ge5 = ge5 * act[..., None, None]
            e_b += float(fb.sum()) * vol
            e_e += float(fe.sum()) * vol
            slab_out = out[x0:x1 + 1]
            _scatter_means(vol * gb5, slab_out)
            gx = vol * ge5[..., 0] / (4 * h)
            gy = vol * ge5[..., 1] / (4 * h)
            gz = vol * ge5[..., 2] / (4 * h)
            # x-faces
            slab_out[1:, :-1, :-1] += gx
            slab_out[1:, 1:, :-1] += gx
            slab_out[1:, :-1, 1:] += gx
            slab_out[1:, 1:, 1:] += gx
            slab_out[:-1, :-1, :-1] -= gx
            slab_out[:-1, 1:, :-1] -= gx
            slab_out[:-1, :-1, 1:] -= gx
            slab_out[:-1, 1:, 1:] -= gx
            # y-faces
            slab_out[:-1, 1:, :-1] += gy
            slab_out[1:, 1:, :-1] += gy
            slab_out[:-1, 1:, 1:] += gy
            slab_out[1:, 1:, 1:] += gy
            slab_out[:-1, :-1, :-1] -= gy
            slab_out[1:, :-1, :-1] -= gy
            slab_out[:-1, :-1, 1:] -= gy
            slab_out[1:, :-1, 1:] -= gy
            # z-faces
            slab_out[:-1, :-1, 1:] += gz
            slab_out[1:, :-1, 1:] += gz
            slab_out[:-1, 1:, 1:] += gz
            slab_out[1:, 1:, 1:] += gz
            slab_out[:-1, :-1, :-1] -= gz
            slab_out[1:, :-1, :-1] -= gz
            slab_out[:-1, 1:, :-1] -= gz
            slab_out[1:, 1:, :-1] -= gz
        return e_e, e_b


def _active_cells(mask: np.ndarray) -> np.ndarray:
    inc = mask == INCLUSION
    return ~(inc[:-1, :-1, :-1] | inc[1:, :-1, :-1] | inc[:-1, 1:, :-1]
             | inc[:-1, :-1, 1:] | inc[1:, 1:, :-1] | inc[1:, :-1, 1:]
             | inc[:-1, 1:, 1:] | inc[1:, 1:, 1:])


class EpsAssembler:
    """Assembles the inclusion energy at fixed eps on one grid.

    The surface term interpolates the field trilinearly at the facet centers
    of every scaled inclusion mesh; stencil nodes falling inside an inclusion
    read the harmonic extension of the current field, and the gradient is
    propagated back through that (linear) fill exactly.
    """

    def __init__(self, grid: Grid, config: InclusionConfig, bulk: BulkSpec,
                 elastic: ElasticSpec, surface: Optional[SurfaceSpec] = None,
                 surface_resolution: int = 4, facet_chunk: int = 600000):
        scale = config.inclusion_scale
        if scale < 2.0 * grid.h:
            raise GateError(
                f"grid does not resolve the inclusions: eps^alpha = {scale:.4g} "
                f"< 2h = {2 * grid.h:.4g}; need h <= {scale / 2:.4g} "
                f"(policy h <= eps^alpha/4 = {scale / 4:.4g})")
        self.grid = grid
        self.config = config
        self.bulk = bulk
        self.elastic = elastic
        self.surface = surface
        self.facet_chunk = facet_chunk
        self.mask = build_mask(grid, config)
        self.extension = HarmonicExtension(grid, self.mask)
        self.cell_active = _active_cells(self.mask)
        self.volume_terms = _VolumeTerms(grid, bulk, elastic, self.cell_active)
        self.mesh: Optional[SurfaceMesh] = None
        if surface is not None and config.n_inclusions > 0:
            self.mesh = build_mesh(config.shape, surface_resolution)
            self._build_surface_tables()

    def _build_surface_tables(self):
        cfg, mesh, grid = self.config, self.mesh, self.grid
        scale = cfg.inclusion_scale
        pts = (cfg.centers[:, None, :]
               + scale * np.einsum('nij,fj->nfi', cfg.rotations, mesh.nodes)).reshape(-1, 3)
        normals = np.einsum('nij,fj->nfi', cfg.rotations, mesh.inward_normals).reshape(-1, 3)
        self.facet_normals = normals
        # J = eps^(3-2a) * sum_i sum_f (eps^(2a) A_f) f_s = eps^3 sum A_f f_s
        self.facet_weights = cfg.eps ** 3 * np.tile(mesh.areas, cfg.n_inclusions)
        lo = np.asarray(grid.box.lo)
        h = grid.h
        rel = (pts - lo) / h
        base = np.clip(np.floor(rel).astype(np.int64), 0,
                       np.asarray(grid.n_cells) - 1)
        frac = rel - base
        nx, ny, nz = grid.n_nodes
        corners = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1],
                            [1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]])
        idx = base[:, None, :] + corners[None, :, :]
        self.stencil_idx = (idx[..., 0] * ny + idx[..., 1]) * nz + idx[..., 2]
        w = np.empty(self.stencil_idx.shape)
        for c, (dx, dy, dz) in enumerate(corners):
            w[:, c] = (np.where(dx, frac[:, 0], 1 - frac[:, 0])
                       * np.where(dy, frac[:, 1], 1 - frac[:, 1])
                       * np.where(dz, frac[:, 2], 1 - frac[:, 2]))
        self.stencil_w = w

    def new_field(self, g: Datum, initial: Optional[Datum] = None) -> DiscreteField:
        field = DiscreteField.create(self.grid, g, self.config, initial)
        field.mask = self.mask  # share the assembler's mask
        return field

    def _check(self, field: DiscreteField):
        if field.mask is not self.mask and not np.array_equal(field.mask, self.mask):
            raise ValueError("field mask does not match the assembler's configuration")

    def _surface_value_grad(self, values, want_grad: bool):
        if self.mesh is None:
            return 0.0, None
        extended = self.extension.apply(values)
        flat = extended.reshape(-1, 5)
        total = 0.0
        grad_flat = np.zeros_like(flat) if want_grad else None
        n_f = len(self.facet_weights)
        for lo_i in range(0, n_f, self.facet_chunk):
            hi_i = min(lo_i + self.facet_chunk, n_f)
            sid = self.stencil_idx[lo_i:hi_i]
            sw = self.stencil_w[lo_i:hi_i]
            nu = self.facet_normals[lo_i:hi_i]
            wq = self.facet_weights[lo_i:hi_i]
            qv = np.einsum('pc,pcm->pm', sw, flat[sid])
            qm = decode5(qv)
            qn = np.einsum('pij,pj->pi', qm, nu)
            i2 = np.einsum('pm,pm->p', qv, qv)
            i3 = np.einsum('pij,pjk,pki->p', qm, qm, qm)
            p1 = np.einsum('pi,pi->p', nu, qn)
            p2 = np.einsum('pi,pi->p', qn, qn)
            vals = surface_energy_from_invariants(self.surface, i2, i3, p1, p2)
            total += float(np.dot(wq, vals))
            if want_grad:
                g = surface_gradient(self.surface, qm, nu) * wq[:, None, None]
                g5 = encode5(g)
                contrib = sw[:, :, None] * g5[:, None, :]
                ids = sid.ravel()
                cflat = contrib.reshape(-1, 5)
                for m in range(5):
                    grad_flat[:, m] += np.bincount(ids, weights=cflat[:, m],
                                                   minlength=len(flat))
        if want_grad:
            g_nodes = grad_flat.reshape(values.shape)
            masked = (self.mask == INCLUSION)[..., None]
            g_data = np.where(masked, 0.0, g_nodes)
            g_thru = self.extension.adjoint(np.where(masked, g_nodes, 0.0))
            return total, g_data + g_thru
        return total, None

    def energy(self, field: DiscreteField) -> EnergyBreakdown:
        self._check(field)
        e_e, e_b = self.volume_terms.energy(field.values)
        e_s, _ = self._surface_value_grad(field.values, False)
        return EnergyBreakdown(e_e, e_b, e_s)

    def gradient(self, field: DiscreteField):
        """(d total / d node values, breakdown); entries at masked and
        boundary nodes are meaningful only for the free-node subset."""
        self._check(field)
        out = np.zeros_like(field.values)
        e_e, e_b = self.volume_terms.gradient(field.values, out)
        e_s, g_s = self._surface_value_grad(field.values, True)
        if g_s is not None:
            out += g_s
        return out, EnergyBreakdown(e_e, e_b, e_s)

    def region_volume(self) -> float:
        """Cell-quadrature measure of the unmasked region."""
        return float(self.cell_active.sum()) * self.grid.h ** 3


class HomAssembler:
    """Assembles the homogenized functional on the full box: bulk + elastic
    plus the cell-midpoint quadrature of the homogenized density."""

    def __init__(self, grid: Grid, bulk: BulkSpec, elastic: ElasticSpec,
                 surface: Optional[SurfaceSpec] = None,
                 shape=None, rotation_field: Optional[RotationField] = None,
                 surface_resolution: Optional[int] = None):
        from ..numerics import numerics
        self.grid = grid
        self.bulk = bulk
        self.elastic = elastic
        self.volume_terms = _VolumeTerms(grid, bulk, elastic, None)
        self.fhom = None
        self.rotation_field = rotation_field or RotationField.identity()
        if surface is not None:
            res = surface_resolution or numerics().quadrature_resolution
            mesh = build_mesh(shape, res)
            self.fhom = FHomEvaluator(surface, mesh, self.rotation_field)
        cx, cy, cz = grid.cell_centers_axes()
        xx, yy, zz = np.meshgrid(cx, cy, cz, indexing='ij')
        self._centers = np.stack([xx, yy, zz], axis=-1)

    def new_field(self, g: Datum, initial: Optional[Datum] = None) -> DiscreteField:
        return DiscreteField.create(self.grid, g, None, initial)

    def _surface_energy(self, values, want_grad: bool):
        if self.fhom is None:
            return 0.0, None
        vol = self.grid.h ** 3
        qc = _cell_means(values)
        qm = decode5(qc)
        x = self._centers if self.rotation_field.name != 'identity' else None
        dens = self.fhom.value(qm, x)
        total = float(dens.sum()) * vol
        if not want_grad:
            return total, None
        g5 = encode5(self.fhom.gradient(qm, x)) * vol
        out = np.zeros_like(values)
        _scatter_means(g5, out)
        return total, out

    def energy(self, field: DiscreteField) -> EnergyBreakdown:
        e_e, e_b = self.volume_terms.energy(field.values)
        e_s, _ = self._surface_energy(field.values, False)
        return EnergyBreakdown(e_e, e_b, e_s)

    def gradient(self, field: DiscreteField):
        out = np.zeros_like(field.values)
        e_e, e_b = self.volume_terms.gradient(field.values, out)
        e_s, g_s = self._surface_energy(field.values, True)
        if g_s is not None:
            out += g_s
        return out, EnergyBreakdown(e_e, e_b, e_s)


def h1_distance(f1: DiscreteField, f2: DiscreteField) -> float:
    """Discrete H1 distance over the whole box (cell quadrature of the
    squared value and gradient differences)."""
    g1, g2 = f1.grid, f2.grid
    if g1.n_cells != g2.n_cells or g1.box != g2.box:
        raise ValueError("fields live on different grids")
    h = g1.h
    diff = f1.values - f2.values
    total = 0.0
    for x0 in range(0, g1.n_cells[0], 32):
        x1 = min(x0 + 32, g1.n_cells[0])
        v = diff[x0:x1 + 1]
        qc = _cell_means(v)
        d5 = _cell_gradients(v, h)
        total += float(np.einsum('...m,...m->', qc, qc)
                       + np.einsum('...mk,...mk->', d5, d5))
    return math.sqrt(total * h ** 3)


def gradient_check(assembler, field: DiscreteField, n_directions: int = 20,
                   seed: int = 0, step: float = 1e-5) -> float:
    """Max relative deviation between assembled directional derivatives and
    central finite differences along random free-node perturbations."""
    rng = np.random.default_rng(seed)
    g, _ = assembler.gradient(field)
    free = field.free
    worst = 0.0
    for _ in range(n_directions):
        p = rng.normal(size=field.values.shape)
        p[~free] = 0.0
        p /= np.sqrt(np.sum(p * p))
        analytic = float(np.sum(g * p))
        fp = assembler.energy(field.with_values(field.values + step * p)).total
        fm = assembler.energy(field.with_values(field.values - step * p)).total
        numeric = (fp - fm) / (2 * step)
        denom = max(abs(numeric), abs(analytic), 1e-12)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
