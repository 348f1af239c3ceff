"""Pointwise energy densities: bulk potentials, elastic quadratic forms, and
surface-anchoring families, with gradients and validity gates.

All evaluators broadcast: Q-tensor arguments accept (..., 3, 3) arrays (or a
QTensor), normals accept (..., 3), and return (...) densities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import GateError, IsotropicRegimeWarning
from .numerics import numerics
from .qtensor import (QTensor, S0_BASIS, invariants_pair, project_s0,
                      random_orthogonals, random_q_batch, random_unit_vectors)

FOUR_PI = 4.0 * math.pi


def _as_matrix(q) -> np.ndarray:
    return q.matrix if isinstance(q, QTensor) else np.asarray(q, dtype=float)


# ---------------------------------------------------------------------------
# bulk potentials

@dataclass(frozen=True)
class BulkSpec:
    """Coefficients of a bulk potential, quartic or sextic in the invariants.

    quartic:  a tr(Q^2) - b tr(Q^3) + c (tr(Q^2))^2
    sextic :  a2 tr(Q^2) - a3 tr(Q^3) + a4 (tr(Q^2))^2
              + a5 tr(Q^2) tr(Q^3) + a6 (tr(Q^2))^3 + a6p (tr(Q^3))^2

    The sextic family is gated by a6 > 0 and 6 a6 + a6p > 0, which forces the
    growth floor f_b(Q) >= mu |Q|^6 - C.  The quartic c > 0 gate applies only
    where the design machinery requires it (see require_design_gate).
    """

    family: str
    coeffs: tuple

    def __post_init__(self):
        if self.family == 'quartic':
            if len(self.coeffs) != 3:
                raise ValueError("quartic bulk takes coefficients (a, b, c)")
        elif self.family == 'sextic':
            if len(self.coeffs) != 6:
                raise ValueError("sextic bulk takes coefficients (a2, a3, a4, a5, a6, a6p)")
            a6, a6p = self.coeffs[4], self.coeffs[5]
            if not a6 > 0:
                raise GateError(f"sextic bulk gate violated: a6 > 0 (got a6 = {a6})")
            if not 6.0 * a6 + a6p > 0:
                raise GateError(
                    f"sextic bulk gate violated: 6 a6 + a6' > 0 (got {6.0 * a6 + a6p})")
        else:
            raise ValueError(f"unknown bulk family {self.family!r}")
        object.__setattr__(self, 'coeffs', tuple(float(x) for x in self.coeffs))

    @classmethod
    def quartic(cls, a, b, c) -> 'BulkSpec':
        return cls('quartic', (a, b, c))

    @classmethod
    def sextic(cls, a2, a3, a4, a5, a6, a6p) -> 'BulkSpec':
        return cls('sextic', (a2, a3, a4, a5, a6, a6p))

    def require_design_gate(self, label: str = "c"):
        """Quartic hosts/targets entering the design map need c > 0."""
        if self.family != 'quartic':
            raise GateError("the design map is defined for quartic bulk potentials")
        if not self.coeffs[2] > 0:
            raise GateError(f"design gate violated: {label} > 0 (got {label} = {self.coeffs[2]})")

    def to_dict(self) -> dict:
        if self.family == 'quartic':
            return {'family': 'quartic', 'a': self.coeffs[0], 'b': self.coeffs[1],
                    'c': self.coeffs[2]}
        a2, a3, a4, a5, a6, a6p = self.coeffs
        return {'family': 'sextic', 'a2': a2, 'a3': a3, 'a4': a4, 'a5': a5,
                'a6': a6, 'a6p': a6p}

    @classmethod
    def from_dict(cls, d: dict) -> 'BulkSpec':
        fam = d['family']
        if fam == 'quartic':
            return cls.quartic(d['a'], d['b'], d['c'])
        return cls.sextic(d['a2'], d['a3'], d['a4'], d['a5'], d['a6'], d['a6p'])


def bulk_energy(spec: BulkSpec, q) -> np.ndarray:
    """Scalar bulk density, broadcasting over leading axes of q."""
    i2, i3 = invariants_pair(_as_matrix(q))
    return bulk_energy_from_invariants(spec, i2, i3)


def bulk_energy_from_invariants(spec: BulkSpec, i2, i3):
    if spec.family == 'quartic':
        a, b, c = spec.coeffs
        return a * i2 - b * i3 + c * i2 ** 2
    a2, a3, a4, a5, a6, a6p = spec.coeffs
    return (a2 * i2 - a3 * i3 + a4 * i2 ** 2 + a5 * i2 * i3
            + a6 * i2 ** 3 + a6p * i3 ** 2)


def bulk_energy_invariant_partials(spec: BulkSpec, i2, i3):
    """(d f_b / d i2, d f_b / d i3) as functions of the invariants."""
    if spec.family == 'quartic':
        a, b, c = spec.coeffs
        return a + 2.0 * c * i2, -b * np.ones_like(np.asarray(i3, dtype=float))
    a2, a3, a4, a5, a6, a6p = spec.coeffs
    d2 = a2 + 2.0 * a4 * i2 + a5 * i3 + 3.0 * a6 * i2 ** 2
    d3 = -a3 + a5 * i2 + 2.0 * a6p * i3
    return d2, d3


def bulk_gradient(spec: BulkSpec, q) -> np.ndarray:
    """Gradient of the bulk density, projected onto the trace-free symmetric
    subspace: the directional derivative along any trace-free symmetric P is
    sum_ij grad_ij P_ij."""
    m = _as_matrix(q)
    i2, i3 = invariants_pair(m)
    d2, d3 = bulk_energy_invariant_partials(spec, i2, i3)
    m2 = m @ m
    # d(i2)/dQ = 2Q;  d(i3)/dQ = 3(Q^2 - (i2/3) Id) after projection
    g = (2.0 * d2[..., None, None] * m
         + 3.0 * d3[..., None, None] * (m2 - (i2 / 3.0)[..., None, None] * np.eye(3)))
    return g


def uniaxial_bulk_profile(spec: BulkSpec, s):
    """Bulk density along the uniaxial ray Q(s) = s (n x n - Id/3)."""
    s = np.asarray(s, dtype=float)
    i2 = (2.0 / 3.0) * s ** 2
    i3 = (2.0 / 9.0) * s ** 3
    return bulk_energy_from_invariants(spec, i2, i3)


def _golden_section(f, lo, hi, tol=1e-13, max_iter=200):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if hi - lo < tol * (1.0 + abs(lo) + abs(hi)):
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = f(x2)
    return 0.5 * (lo + hi)


def s_plus(a: float, b: float, c: float) -> float:
    """Scalar order parameter minimizing the quartic bulk along uniaxial rays.

    Bracketed scalar minimization (coarse grid plus golden-section refinement)
    over s >= 0.  When the profile has no positive critical point, the
    minimum sits at s = 0 (isotropic regime) and a warning is emitted.
    """
    if not c > 0:
        raise GateError(f"s_plus requires c > 0 (got c = {c})")
    spec = BulkSpec.quartic(a, b, c)

    def f(s):
        return float(uniaxial_bulk_profile(spec, s))

    # critical points of the profile solve 8 c s^2 - 3 b s + 6 a = 0
    disc = 9.0 * b * b - 192.0 * a * c
    has_positive_critical = disc >= 0 and (3.0 * b + math.sqrt(max(disc, 0.0))) > 0
    if not has_positive_critical:
        warnings.warn("bulk profile has no positive critical point: isotropic-phase regime",
                      IsotropicRegimeWarning, stacklevel=2)

    s_hi = (3.0 * abs(b) + math.sqrt(9.0 * b * b + 192.0 * abs(a) * c)) / (16.0 * c) + 1.0
    grid = np.linspace(0.0, s_hi, 2049)
    vals = uniaxial_bulk_profile(spec, grid)
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    s_min = _golden_section(f, lo, hi)
    if f(0.0) <= f(s_min):
        return 0.0
    return float(s_min)


# ---------------------------------------------------------------------------
# elastic densities

_EQ51 = ("L1 > 0", "-L1 < L3", "L3 < 2 L1", "L2 > -(3/5) L1 - (1/10) L3")


def _violated_inequality(L1, L2, L3) -> Optional[str]:
    if not L1 > 0:
        return _EQ51[0]
    if not -L1 < L3:
        return _EQ51[1]
    if not L3 < 2.0 * L1:
        return _EQ51[2]
    if not L2 > -0.6 * L1 - 0.1 * L3:
        return _EQ51[3]
    return None


@dataclass(frozen=True)
class ElasticSpec:
    """Elastic density: 'dirichlet' is the one-constant form sum (dQ_ij/dx_k)^2;
    'full_ldg' is the three-constant form gated by the strong-convexity
    inequalities on (L1, L2, L3)."""

    family: str
    L1: float = 1.0
    L2: float = 0.0
    L3: float = 0.0

    def __post_init__(self):
        if self.family not in ('dirichlet', 'full_ldg'):
            raise ValueError(f"unknown elastic family {self.family!r}")
        if self.family == 'full_ldg':
            bad = _violated_inequality(self.L1, self.L2, self.L3)
            if bad is not None:
                raise GateError(f"elastic convexity gate violated: {bad}")

    def to_dict(self) -> dict:
        return {'family': self.family, 'L1': self.L1, 'L2': self.L2, 'L3': self.L3}

    @classmethod
    def from_dict(cls, d: dict) -> 'ElasticSpec':
        return cls(d['family'], d.get('L1', 1.0), d.get('L2', 0.0), d.get('L3', 0.0))


def elastic_energy(spec: ElasticSpec, d, validate: bool = True) -> np.ndarray:
    """Elastic density of a gradient tensor d with d[..., i, j, k] = dQ_ij/dx_k."""
    d = np.asarray(d, dtype=float)
    if validate:
        asym = np.max(np.abs(d - np.swapaxes(d, -3, -2)))
        tr = np.max(np.abs(np.einsum('...iik->...k', d)))
        if asym > 1e-8 or tr > 1e-8:
            raise ValueError("gradient tensor must be symmetric trace-free in (i, j)")
    t1 = np.einsum('...ijk,...ijk->...', d, d)
    if spec.family == 'dirichlet':
        return t1
    div = np.einsum('...ijj->...i', d)
    t2 = np.einsum('...i,...i->...', div, div)
    t3 = np.einsum('...ijk,...ikj->...', d, d)
    return spec.L1 * t1 + spec.L2 * t2 + spec.L3 * t3


@dataclass(frozen=True)
class ConvexityCheck:
    passed: bool
    violated: Optional[str]
    min_rayleigh: Optional[float]


def elastic_convexity_check(L1: float, L2: float, L3: float,
                            n_samples: int = 10000, seed: int = 0) -> ConvexityCheck:
    """Strict gate on (L1, L2, L3); on pass, also report the minimum sampled
    Rayleigh quotient of the quadratic form over random unit gradient tensors
    as a consistency probe (it must be positive)."""
    bad = _violated_inequality(L1, L2, L3)
    if bad is not None:
        return ConvexityCheck(False, bad, None)
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n_samples, 5, 3))
    d = np.einsum('...mk,mij->...ijk', g, S0_BASIS)
    norm2 = np.einsum('...ijk,...ijk->...', d, d)
    vals = elastic_energy(ElasticSpec('full_ldg', L1, L2, L3), d, validate=False)
    quotient = vals / norm2
    return ConvexityCheck(True, None, float(quotient.min()))


# ---------------------------------------------------------------------------
# surface anchoring families

_SURFACE_FAMILIES = ('rapini_papoular', 'designed', 'alternative', 'rp_delta',
                     'custom_invariant')


@dataclass(frozen=True)
class SurfaceSpec:
    """A surface-anchoring energy density f_s(Q, nu).

    Every built-in family is a function of the four scalar invariants
    (tr Q^2, tr Q^3, nu.Q nu, nu.Q^2 nu), which makes frame indifference
    structural.  Custom densities are accepted only through that signature.
    """

    family: str
    params: dict = field(default_factory=dict)
    fn: Optional[Callable] = None           # custom_invariant: g(i2, i3, p1, p2)
    fn_partials: Optional[Callable] = None  # optional (g1, g2, g3, g4)

    def __post_init__(self):
        if self.family not in _SURFACE_FAMILIES:
            raise ValueError(f"unknown surface family {self.family!r}")
        p = dict(self.params)
        if self.family == 'rapini_papoular':
            if not p.get('W', 0.0) > 0:
                raise GateError(f"rapini_papoular gate violated: W > 0 (got W = {p.get('W')})")
            p.setdefault('s_plus', 1.0)
        elif self.family in ('designed', 'alternative', 'rp_delta'):
            for key in ('a', 'b', 'c', 'ap', 'bp', 'cp'):
                if key not in p:
                    raise ValueError(f"{self.family} surface spec needs coefficient {key!r}")
            if self.family == 'rp_delta':
                if p['bp'] != p['b']:
                    raise GateError("rp_delta gate violated: b' = b")
                if p['cp'] != p['c']:
                    raise GateError("rp_delta gate violated: c' = c")
                if not p['ap'] > p['a']:
                    raise GateError("rp_delta gate violated: a' > a")
                p.setdefault('include_constant', False)
        elif self.family == 'custom_invariant':
            if self.fn is None:
                raise ValueError("custom_invariant needs fn(i2, i3, p1, p2)")
        object.__setattr__(self, 'params', p)

    @classmethod
    def rapini_papoular(cls, W: float, s_plus: float) -> 'SurfaceSpec':
        return cls('rapini_papoular', {'W': W, 's_plus': s_plus})

    @classmethod
    def custom(cls, fn: Callable, partials: Optional[Callable] = None) -> 'SurfaceSpec':
        return cls('custom_invariant', {}, fn=fn, fn_partials=partials)

    @property
    def homogenized_offset(self) -> float:
        """Additive constant contributed on the unit sphere (rp_delta only)."""
        if self.family == 'rp_delta' and self.params.get('include_constant'):
            return (2.0 / 3.0) * (self.params['ap'] - self.params['a'])
        return 0.0

    def to_dict(self) -> dict:
        if self.family == 'custom_invariant':
            raise ValueError("custom_invariant specs are not serializable")
        return {'family': self.family, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> 'SurfaceSpec':
        d = dict(d)
        return cls(d.pop('family'), d)


def surface_energy_from_invariants(spec: SurfaceSpec, i2, i3, p1, p2):
    """Density from the four scalar invariants; broadcasts."""
    p = spec.params
    if spec.family == 'rapini_papoular':
        w, sp = p['W'], p['s_plus']
        return w * (i2 - 2.0 * sp * p1 + (2.0 / 3.0) * sp * sp)
    if spec.family == 'designed':
        # the middle coefficient carries (b - b'): the cubic invariant enters
        # the bulk potential with a minus sign, so shifting b to b' needs a
        # homogenized contribution of -(b' - b) tr(Q^3)
        ka = 3.0 / FOUR_PI * (p['ap'] - p['a'])
        kb = 15.0 / (2.0 * FOUR_PI) * (p['b'] - p['bp'])
        kc = 15.0 / (2.0 * FOUR_PI) * (p['cp'] - p['c'])
        return ka * p2 + kb * p1 * p2 + kc * p2 ** 2
    if spec.family == 'alternative':
        ka = 15.0 / (2.0 * FOUR_PI) * (p['ap'] - p['a'])
        kb = 15.0 / (2.0 * FOUR_PI) * (p['b'] - p['bp'])
        kc = 15.0 / (2.0 * FOUR_PI) * (p['cp'] - p['c'])
        return ka * p1 ** 2 + kb * p1 * p2 + kc * p2 ** 2
    if spec.family == 'rp_delta':
        c0 = (p['ap'] - p['a']) / FOUR_PI
        const = (2.0 / 3.0) if p.get('include_constant') else 0.0
        return c0 * (i2 - 2.0 * p1 + const)
    return spec.fn(i2, i3, p1, p2)


def surface_energy_invariant_partials(spec: SurfaceSpec, i2, i3, p1, p2):
    """Partial derivatives (d/di2, d/di3, d/dp1, d/dp2) of the density."""
    p = spec.params
    zero = np.zeros(np.broadcast(np.asarray(i2), np.asarray(p1)).shape)
    if spec.family == 'rapini_papoular':
        w, sp = p['W'], p['s_plus']
        return w + zero, zero, -2.0 * w * sp + zero, zero
    if spec.family == 'designed':
        ka = 3.0 / FOUR_PI * (p['ap'] - p['a'])
        kb = 15.0 / (2.0 * FOUR_PI) * (p['b'] - p['bp'])
        kc = 15.0 / (2.0 * FOUR_PI) * (p['cp'] - p['c'])
        return zero, zero, kb * p2 + zero, ka + kb * p1 + 2.0 * kc * p2
    if spec.family == 'alternative':
        ka = 15.0 / (2.0 * FOUR_PI) * (p['ap'] - p['a'])
        kb = 15.0 / (2.0 * FOUR_PI) * (p['b'] - p['bp'])
        kc = 15.0 / (2.0 * FOUR_PI) * (p['cp'] - p['c'])
        return zero, zero, 2.0 * ka * p1 + kb * p2, kb * p1 + 2.0 * kc * p2
    if spec.family == 'rp_delta':
        c0 = (p['ap'] - p['a']) / FOUR_PI
        return c0 + zero, zero, -2.0 * c0 + zero, zero
    if spec.fn_partials is None:
        raise ValueError("custom_invariant spec has no registered partial derivatives")
    return spec.fn_partials(i2, i3, p1, p2)


def _invariant_quadruple(q, nu):
    m = _as_matrix(q)
    nu = np.asarray(nu, dtype=float)
    i2, i3 = invariants_pair(m)
    qn = np.einsum('...ij,...j->...i', m, nu)
    p1 = np.einsum('...i,...i->...', nu, qn)
    p2 = np.einsum('...i,...i->...', qn, qn)  # nu.Q^2 nu = |Q nu|^2 for symmetric Q
    return i2, i3, p1, p2


def surface_energy(spec: SurfaceSpec, q, nu) -> np.ndarray:
    """f_s(Q, nu) for a unit normal nu; broadcasts over leading axes."""
    nu = np.asarray(nu, dtype=float)
    bad = np.max(np.abs(np.einsum('...i,...i->...', nu, nu) - 1.0))
    if bad > 2 * numerics().unit_tol:
        raise ValueError(f"normal must be a unit vector (max ||nu|^2 - 1| = {bad:.3e})")
    return surface_energy_from_invariants(spec, *_invariant_quadruple(q, nu))


def surface_gradient(spec: SurfaceSpec, q, nu) -> np.ndarray:
    """Gradient of f_s with respect to Q, projected onto the trace-free
    symmetric subspace; broadcasts."""
    m = _as_matrix(q)
    nu = np.asarray(nu, dtype=float)
    i2, i3, p1, p2 = _invariant_quadruple(m, nu)
    g1, g2, g3, g4 = surface_energy_invariant_partials(spec, i2, i3, p1, p2)
    eye = np.eye(3)
    m2 = m @ m
    qn = np.einsum('...ij,...j->...i', m, nu)
    nn = np.einsum('...i,...j->...ij', nu, nu)
    sym_nqn = (np.einsum('...i,...j->...ij', nu, qn)
               + np.einsum('...i,...j->...ij', qn, nu))
    g = (2.0 * g1[..., None, None] * m
         + 3.0 * g2[..., None, None] * (m2 - (i2 / 3.0)[..., None, None] * eye)
         + g3[..., None, None] * (nn - eye / 3.0)
         + g4[..., None, None] * (sym_nqn - (2.0 * p1 / 3.0)[..., None, None] * eye))
    return g


def invariance_test(spec_or_fn, n_samples: int = 1000, seed: int = 0,
                    scale: float = 1.0) -> float:
    """Max deviation |f(U Q U^T, U nu) - f(Q, nu)| over random samples with
    U drawn from the full orthogonal group (both determinant signs).

    Accepts a SurfaceSpec, or (for test fixtures) a raw callable f(Q, nu)
    operating on batched (n, 3, 3) / (n, 3) arrays.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    q = random_q_batch(rng, n_samples, scale)
    nu = random_unit_vectors(rng, n_samples)
    u = random_orthogonals(rng, n_samples)
    qc = np.einsum('nij,njk,nlk->nil', u, q, u)
    nuc = np.einsum('nij,nj->ni', u, nu)
    if isinstance(spec_or_fn, SurfaceSpec):
        f0 = surface_energy(spec_or_fn, q, nu)
        f1 = surface_energy(spec_or_fn, qc, nuc)
    else:
        f0 = np.asarray(spec_or_fn(q, nu), dtype=float)
        f1 = np.asarray(spec_or_fn(qc, nuc), dtype=float)
    return float(np.max(np.abs(f1 - f0)))


def growth_constants_estimate(spec: SurfaceSpec, n_samples: int = 100000,
                              radius: float = 3.0, seed: int = 0) -> float:
    """Empirical lower bound on the Lipschitz-growth constant of f_s:
    sup |f(Q1, nu) - f(Q2, nu)| / ((|Q1|^3 + |Q2|^3 + 1) |Q1 - Q2|)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    scale = radius / math.sqrt(5.0)
    q1 = random_q_batch(rng, n_samples, scale)
    q2 = random_q_batch(rng, n_samples, scale)
    nu = random_unit_vectors(rng, n_samples)
    f1 = surface_energy(spec, q1, nu)
    f2 = surface_energy(spec, q2, nu)
    n1 = np.sqrt(np.einsum('nij,nij->n', q1, q1))
    n2 = np.sqrt(np.einsum('nij,nij->n', q2, q2))
    diff = np.sqrt(np.einsum('nij,nij->n', q1 - q2, q1 - q2))
    keep = diff > 1e-12  # exclude degenerate 0/0 pairs
    ratio = np.abs(f1 - f2)[keep] / ((n1 ** 3 + n2 ** 3 + 1.0)[keep] * diff[keep])
    if ratio.size == 0:
        return 0.0
    return float(ratio.max())
