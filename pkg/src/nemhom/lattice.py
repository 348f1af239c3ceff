"""Dilute inclusion families on box domains: periodic center placement,
separation and disjointness accounting, empirical-measure convergence, and
volume fractions."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .homogenization import ParticleShape, RotationField, build_mesh


@dataclass(frozen=True)
class Box:
    """Axis-aligned box domain; the lattice anchor is the coordinate origin,
    so boxes live in the positive octant."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo}, hi={hi}")
        if any(l < 0 for l in lo):
            raise ValueError("box must lie in the positive octant (origin-anchored lattice)")
        object.__setattr__(self, 'lo', lo)
        object.__setattr__(self, 'hi', hi)

    @classmethod
    def unit_cube(cls) -> 'Box':
        return cls((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))

    @property
    def edges(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.edges))

    def boundary_distance(self, points) -> np.ndarray:
        """Distance to the box boundary for points inside (exact face formula)."""
        x = np.asarray(points, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.minimum((x - lo).min(axis=-1), (hi - x).min(axis=-1))

    def contains(self, points) -> np.ndarray:
        x = np.asarray(points, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((x > lo) & (x < hi), axis=-1)

    def to_dict(self) -> dict:
        return {'lo': list(self.lo), 'hi': list(self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> 'Box':
        return cls(tuple(d['lo']), tuple(d['hi']))


def periodic_centers(box: Box, eps: float) -> np.ndarray:
    """Lattice points of spacing eps (integer multiples measured from the
    origin) inside the box at boundary distance >= eps.

    An oversized eps yields an empty array, not an error.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    axes = []
    for lo, hi in zip(box.lo, box.hi):
        k_lo = math.ceil(lo / eps)
        k_hi = math.floor(hi / eps)
        axes.append(eps * np.arange(k_lo, k_hi + 1))
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 3)
    inside = box.contains(grid)
    grid = grid[inside]
    keep = box.boundary_distance(grid) >= eps * (1.0 - 1e-12)
    return grid[keep]


@dataclass(frozen=True)
class InclusionConfig:
    """A scaled/rotated/translated inclusion family inside a box domain:
    inclusion i occupies center_i + eps^alpha R_i P."""

    domain: Box
    eps: float
    alpha: float
    shape: ParticleShape
    centers: np.ndarray
    rotations: np.ndarray
    rotation_field: RotationField = field(default=None, repr=False)

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 1.0 < self.alpha < 1.5:
            warnings.warn(
                f"dilution exponent alpha = {self.alpha} outside the admissible "
                f"window (1, 3/2); downstream convergence guarantees fail",
                UserWarning, stacklevel=2)
        c = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        r = np.asarray(self.rotations, dtype=float).reshape(-1, 3, 3)
        if len(r) != len(c):
            raise ValueError("one rotation per center required")
        object.__setattr__(self, 'centers', c)
        object.__setattr__(self, 'rotations', r)

    @classmethod
    def periodic(cls, domain: Box, eps: float, alpha: float, shape: ParticleShape,
                 rotation_field: RotationField = None) -> 'InclusionConfig':
        rf = rotation_field or RotationField.identity()
        centers = periodic_centers(domain, eps)
        rotations = rf.at(centers) if len(centers) else np.zeros((0, 3, 3))
        return cls(domain, eps, alpha, shape, centers, rotations, rf)

    @property
    def n_inclusions(self) -> int:
        return len(self.centers)

    @property
    def inclusion_scale(self) -> float:
        return self.eps ** self.alpha

    def min_center_distance(self) -> float:
        if len(self.centers) < 2:
            return math.inf
        d, _ = cKDTree(self.centers).query(self.centers, k=2)
        return float(d[:, 1].min())

    def inclusions_disjoint(self, inflation: float = 1.0) -> bool:
        """Bounding-sphere disjointness of the (optionally inflated) inclusions."""
        radius = inflation * self.inclusion_scale * self.shape.circumradius()
        return self.min_center_distance() > 2.0 * radius

    def disjointness_threshold(self, inflation: float = 1.0) -> float:
        """Largest eps for which a periodic lattice of spacing eps keeps the
        inflated inclusions disjoint (bounding-sphere estimate)."""
        if self.alpha <= 1.0:
            return 0.0
        return (1.0 / (2.0 * inflation * self.shape.circumradius())) ** (1.0 / (self.alpha - 1.0))

    def to_dict(self) -> dict:
        return {'domain': self.domain.to_dict(), 'eps': self.eps, 'alpha': self.alpha,
                'shape': self.shape.to_dict(),
                'rotation_field': self.rotation_field.name if self.rotation_field else 'identity',
                'n_inclusions': self.n_inclusions}


def check_separation(config: InclusionConfig) -> float:
    """Separation quality of the configuration: the min over centers of
    (boundary distance + half the nearest-neighbour distance) / eps.
    The inf over an empty neighbour set is +infinity (single-center case)."""
    if config.n_inclusions < 1:
        raise ValueError("separation check needs at least one center")
    bdist = config.domain.boundary_distance(config.centers)
    if config.n_inclusions == 1:
        return float(bdist[0] / config.eps)
    d, _ = cKDTree(config.centers).query(config.centers, k=2)
    return float(np.min(bdist + 0.5 * d[:, 1]) / config.eps)


def default_test_functions():
    """Polynomials up to degree 2 plus two bumps: the spot-check family for
    empirical-measure convergence (not a proof over all continuous functions)."""

    def bump(center, width):
        c = np.asarray(center)

        def f(x):
            r2 = np.sum((x - c) ** 2, axis=-1) / width ** 2
            out = np.zeros(r2.shape)
            inside = r2 < 1.0
            out[inside] = np.exp(-r2[inside] / (1.0 - r2[inside]))
            return out

        return f

    return [
        ('one', lambda x: np.ones(x.shape[:-1])),
        ('x1', lambda x: x[..., 0]),
        ('x2', lambda x: x[..., 1]),
        ('x3', lambda x: x[..., 2]),
        ('x1x2', lambda x: x[..., 0] * x[..., 1]),
        ('x1sq', lambda x: x[..., 0] ** 2),
        ('bump_center', bump((0.5, 0.5, 0.5), 0.4)),
        ('bump_corner', bump((0.25, 0.25, 0.75), 0.3)),
    ]


def riemann_integral(f, box: Box, n: int = 64) -> float:
    """Midpoint-rule volume integral on a dense n^3 grid (the oracle side of
    the measure-convergence check)."""
    axes = [lo + (np.arange(n) + 0.5) / n * (hi - lo)
            for lo, hi in zip(box.lo, box.hi)]
    cell = box.volume / n ** 3
    total = 0.0
    xx, yy = np.meshgrid(axes[0], axes[1], indexing='ij')
    for z in axes[2]:  # slab at a time keeps memory flat
        pts = np.stack([xx, yy, np.full_like(xx, z)], axis=-1)
        total += float(np.sum(f(pts))) * cell
    return total


def measure_convergence_check(configs, test_functions=None, grid_n: int = 64):
    """For each test function and configuration: the gap between the lattice
    sum eps^3 sum_i f(x_i) and the volume integral of f over the domain.
    Returns rows of (name, eps, lattice_sum, integral, error)."""
    test_functions = test_functions or default_test_functions()
    rows = []
    integrals = {}
    for name, f in test_functions:
        for cfg in configs:
            key = (name, cfg.domain)
            if key not in integrals:
                integrals[key] = riemann_integral(f, cfg.domain, grid_n)
            lattice_sum = cfg.eps ** 3 * float(np.sum(f(cfg.centers)))
            exact = integrals[key]
            rows.append({'function': name, 'eps': cfg.eps,
                         'lattice_sum': lattice_sum, 'integral': exact,
                         'error': abs(lattice_sum - exact)})
    return rows


def volume_fraction(config: InclusionConfig, mesh_resolution: int = 8) -> float:
    """Total inclusion volume N eps^(3 alpha) |P|, with the unit-shape volume
    from divergence-theorem quadrature of the boundary mesh."""
    if config.n_inclusions == 0:
        return 0.0
    unit_volume = build_mesh(config.shape, mesh_resolution).enclosed_volume()
    return config.n_inclusions * config.eps ** (3.0 * config.alpha) * unit_volume
