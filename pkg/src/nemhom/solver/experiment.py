"""Desk-scale verification experiments: shrinking-inclusion limits of the
boundary term, convergence of minimizers toward the homogenized problem, and
the uniform bound of the harmonic extension operator."""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from ..energies import BulkSpec, ElasticSpec, SurfaceSpec, surface_energy
from ..errors import NumericalError
from ..homogenization import (FHomEvaluator, ParticleShape, RotationField,
                              SurfaceMesh, build_mesh)
from ..lattice import Box, InclusionConfig
from ..qtensor import decode5, encode5
from .assemble import (EpsAssembler, HomAssembler, _cell_gradients, _cell_means,
                       h1_distance)
from .extension import HarmonicExtension, harmonic_extension
from .field import DiscreteField, Grid, build_mask
from .minimize import MinimizeOptions, minimize


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def j_direct(q_fn: Callable, config: InclusionConfig, spec: SurfaceSpec,
             mesh: SurfaceMesh, chunk: int = 512) -> float:
    """Boundary term of an analytic field: the scaled facet quadrature over
    every inclusion boundary, eps^3 sum_i sum_f A_f f_s(Q(x_if), R_i nu_f)."""
    total = 0.0
    n = config.n_inclusions
    scale = config.inclusion_scale
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        rot = config.rotations[lo:hi]
        pts = (config.centers[lo:hi, None, :]
               + scale * np.einsum('nij,fj->nfi', rot, mesh.nodes))
        nus = np.einsum('nij,fj->nfi', rot, mesh.inward_normals)
        vals = surface_energy(spec, q_fn(pts), nus)
        total += float(np.einsum('f,nf->', mesh.areas, vals))
    return config.eps ** 3 * total


def j_homogenized(q_fn: Callable, spec: SurfaceSpec, mesh: SurfaceMesh,
                  rotation_field: RotationField, box: Box, n_grid: int = 96) -> float:
    """Volume integral of the homogenized density of an analytic field, by
    midpoint quadrature on an n^3 grid."""
    ev = FHomEvaluator(spec, mesh, rotation_field)
    axes = [lo + (np.arange(n_grid) + 0.5) / n_grid * (hi - lo)
            for lo, hi in zip(box.lo, box.hi)]
    cell = box.volume / n_grid ** 3
    xx, yy = np.meshgrid(axes[0], axes[1], indexing='ij')
    total = 0.0
    for z in axes[2]:
        pts = np.stack([xx, yy, np.full_like(xx, z)], axis=-1)
        x = pts if rotation_field.name != 'identity' else None
        total += float(ev.value(q_fn(pts), x).sum()) * cell
    return total


def gradient_norm_sq(values: np.ndarray, grid: Grid,
                     cell_active: Optional[np.ndarray] = None) -> float:
    """Cell quadrature of |grad Q|^2, optionally restricted to active cells."""
    h = grid.h
    total = 0.0
    for x0 in range(0, grid.n_cells[0], 32):
        x1 = min(x0 + 32, grid.n_cells[0])
        d5 = _cell_gradients(values[x0:x1 + 1], h)
        dens = np.einsum('...mk,...mk->...', d5, d5)
        if cell_active is not None:
            dens = dens * cell_active[x0:x1]
        total += float(dens.sum())
    return total * h ** 3


def random_smooth_field(seed: int, n_modes: int = 3, amplitude: float = 0.5,
                        max_wavenumber: int = 2) -> Callable:
    """Seeded smooth Q-tensor field: a small trigonometric expansion per
    5-vector component; returns pts (..., 3) -> matrices (..., 3, 3)."""
    rng = np.random.default_rng(seed)
    coeff = amplitude * rng.normal(size=(5, n_modes)) / n_modes
    waves = rng.integers(-max_wavenumber, max_wavenumber + 1, size=(5, n_modes, 3))
    phase = rng.uniform(0, 2 * math.pi, size=(5, n_modes))

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        arg = math.pi * np.einsum('...i,mki->...mk', pts, waves) + phase
        v = np.einsum('mk,...mk->...m', coeff, np.sin(arg))
        return decode5(v)

    return fn


def tapered_field(inner: Callable, box: Box, margin: float = 0.3,
                  flat_width: float = 0.1) -> Callable:
    """Smoothly cut a field to zero within `margin` of the box boundary (and
    hold it unchanged further than margin + flat_width inside)."""
    lo = np.asarray(box.lo)
    hi = np.asarray(box.hi)

    def smoothstep(t):
        t = np.clip(t, 0.0, 1.0)
        return t * t * (3.0 - 2.0 * t)

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        d = np.minimum((pts - lo).min(axis=-1), (hi - pts).min(axis=-1))
        w = smoothstep((d - margin) / flat_width)
        return w[..., None, None] * inner(pts)

    return fn


def recovery_check(q_fn: Callable, box: Box, shape: ParticleShape, eps_list,
                   alpha: float, spec: SurfaceSpec,
                   bulk: Optional[BulkSpec] = None,
                   elastic: Optional[ElasticSpec] = None,
                   rotation_field: Optional[RotationField] = None,
                   mesh_resolution: int = 8, j0_grid: int = 96,
                   grid_factor: float = 4.0, field_energies: bool = True) -> dict:
    """Fixed-competitor (constant-sequence) consistency: the boundary term of
    a fixed smooth field approaches its homogenized volume integral as the
    inclusions shrink, and the full grid energies close their gap as well.

    Returns per-eps rows plus the fitted log-log rate of |J_eps - J0|.
    """
    rf = rotation_field or RotationField.identity()
    mesh = build_mesh(shape, mesh_resolution)
    j0 = j_homogenized(q_fn, spec, mesh, rf, box, j0_grid)
    datum = (lambda pts: encode5(q_fn(pts)))
    rows = []
    for eps in eps_list:
        config = InclusionConfig.periodic(box, eps, alpha, shape, rf)
        j_eps = j_direct(q_fn, config, spec, mesh)
        row = {'eps': eps, 'n_inclusions': config.n_inclusions,
               'J_eps': j_eps, 'J0': j0, 'J_gap': abs(j_eps - j0)}
        if field_energies and bulk is not None and elastic is not None:
            grid = Grid.for_spacing(box, eps ** alpha / grid_factor)
            asm = EpsAssembler(grid, config, bulk, elastic, spec,
                               surface_resolution=2)
            field = asm.new_field(datum, initial=datum)
            f_eps = asm.energy(field).total
            hom = HomAssembler(grid, bulk, elastic, spec, shape, rf,
                               surface_resolution=mesh_resolution)
            field0 = hom.new_field(datum, initial=datum)
            f_0 = hom.energy(field0).total
            row.update({'F_eps': f_eps, 'F0': f_0, 'F_gap': abs(f_eps - f_0),
                        'grid_cells': grid.n_cells[0]})
        rows.append(row)
    gaps = [r['J_gap'] for r in rows]
    out = {'rows': rows, 'J0': j0,
           'j_gap_monotone': all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))}
    if len(rows) >= 2 and all(g > 0 for g in gaps):
        out['j_rate'] = fit_loglog_slope([r['eps'] for r in rows], gaps)
    return out


def extension_bound_study(box: Box, shape: ParticleShape, eps_list, alpha: float,
                          n_fields: int = 10, seed: int = 0,
                          grid_factor: float = 4.0,
                          rotation_field: Optional[RotationField] = None) -> dict:
    """Empirical operator constant of the harmonic extension: the ratio
    |grad(extended Q)| over the box to |grad Q| outside the inclusions, for
    seeded smooth fields, across an eps ladder."""
    rf = rotation_field or RotationField.identity()
    rows = []
    for eps in eps_list:
        grid = Grid.for_spacing(box, eps ** alpha / grid_factor)
        config = InclusionConfig.periodic(box, eps, alpha, shape, rf)
        mask = build_mask(grid, config)
        ext = HarmonicExtension(grid, mask)
        from .assemble import _active_cells
        active = _active_cells(mask)
        pos = grid.node_positions()
        ratios = []
        for k in range(n_fields):
            fn = random_smooth_field(seed + k)
            values = encode5(fn(pos))
            extended = ext.apply(values)
            num = gradient_norm_sq(extended, grid)
            den = gradient_norm_sq(values, grid, active)
            ratios.append(math.sqrt(num / den))
        rows.append({'eps': eps, 'grid_cells': grid.n_cells[0],
                     'n_inclusions': config.n_inclusions,
                     'n_masked_nodes': ext.n_masked,
                     'ratio_max': max(ratios), 'ratio_mean': float(np.mean(ratios))})
    r = [row['ratio_max'] for row in rows]
    return {'rows': rows, 'spread': max(r) / min(r)}


def stability_probe(assembler, field: DiscreteField, n_directions: int = 8,
                    seed: int = 0, t: float = 1e-3) -> float:
    """Minimum sampled second difference of the energy along random free-node
    directions (a positivity heuristic at a candidate minimizer, not a proof
    of isolation)."""
    rng = np.random.default_rng(seed)
    e0 = assembler.energy(field).total
    free = field.free[..., None]
    worst = math.inf
    for _ in range(n_directions):
        p = rng.normal(size=field.values.shape)
        p = np.where(free, p, 0.0)
        p /= math.sqrt(float(np.sum(p * p)))
        ep = assembler.energy(field.with_values(field.values + t * p)).total
        em = assembler.energy(field.with_values(field.values - t * p)).total
        worst = min(worst, (ep - 2 * e0 + em) / (t * t))
    return worst


def convergence_experiment(box: Box, shape: ParticleShape, eps_list, alpha: float,
                           bulk: BulkSpec, elastic: ElasticSpec,
                           surface: SurfaceSpec, g,
                           rotation_field: Optional[RotationField] = None,
                           options: Optional[MinimizeOptions] = None,
                           grid_factor: float = 4.0, surface_resolution: int = 2,
                           hom_resolution: int = 8,
                           probe_stability: bool = False) -> dict:
    """Shrinking-inclusion minimizer experiment.

    Per eps: minimize the homogenized functional on the eps grid (from the
    uniaxial extension of the datum), re-minimize the inclusion functional
    from that minimizer restricted to the perforated domain (the constant
    recovery initialization), harmonically extend, and report the H1 distance
    and the energy gap.  Failed inner solves flag their row and the
    experiment continues.
    """
    rf = rotation_field or RotationField.identity()
    opt = options or MinimizeOptions()
    rows = []
    logs = {}
    for eps in eps_list:
        row = {'eps': eps}
        rows.append(row)
        try:
            grid = Grid.for_spacing(box, eps ** alpha / grid_factor)
            row['grid_cells'] = grid.n_cells[0]
            hom = HomAssembler(grid, bulk, elastic, surface, shape, rf,
                               surface_resolution=hom_resolution)
            f0 = hom.new_field(g)
            q0, bd0, log0 = minimize(hom, f0, opt)
            config = InclusionConfig.periodic(box, eps, alpha, shape, rf)
            row['n_inclusions'] = config.n_inclusions
            asm = EpsAssembler(grid, config, bulk, elastic, surface,
                               surface_resolution=surface_resolution)
            fe = asm.new_field(g)
            fe.values[...] = q0.values  # recovery initialization (restriction)
            qe, bde, loge = minimize(asm, fe, opt)
            extended = harmonic_extension(qe)
            row.update({
                'h1_distance': h1_distance(extended, q0),
                'F_eps': bde.total, 'F0': bd0.total,
                'energy_gap': abs(bde.total - bd0.total),
                'grad_norm_sq': gradient_norm_sq(qe.values, grid, asm.cell_active),
                'iterations_hom': len(log0), 'iterations_eps': len(loge),
                'failed': False,
            })
            if probe_stability:
                row['stability_second_difference'] = stability_probe(hom, q0)
            logs[eps] = {'hom': log0, 'eps': loge}
        except NumericalError as err:
            row.update({'failed': True, 'error': str(err)})
    ok = [r for r in rows if not r.get('failed')]
    dist = [r['h1_distance'] for r in ok]
    gaps = [r['energy_gap'] for r in ok]
    return {
        'rows': rows, 'logs': logs,
        'distance_non_increasing': all(dist[i + 1] <= 1.1 * dist[i]
                                       for i in range(len(dist) - 1)),
        'gap_shrinking': all(gaps[i + 1] <= gaps[i] for i in range(len(gaps) - 1)),
    }
