"""Algebra on the 5-dimensional space of symmetric trace-free 3x3 tensors.

The matrix form is what the physics formulas are written in; the 5-vector
form (orthonormal for the Frobenius inner product) is canonical for field
storage, so the symmetry/trace constraints hold by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import numerics

# Orthonormal basis of the symmetric trace-free 3x3 matrices, Frobenius
# inner product.  decode5 of a canonical unit 5-vector returns one of these.
_S = 1.0 / math.sqrt(2.0)
_T = 1.0 / math.sqrt(6.0)
S0_BASIS = np.array([
    [[_S, 0, 0], [0, -_S, 0], [0, 0, 0]],
    [[_T, 0, 0], [0, _T, 0], [0, 0, -2 * _T]],
    [[0, _S, 0], [_S, 0, 0], [0, 0, 0]],
    [[0, 0, _S], [0, 0, 0], [_S, 0, 0]],
    [[0, 0, 0], [0, 0, _S], [0, _S, 0]],
])


def encode5(matrix: np.ndarray) -> np.ndarray:
    """Coordinates of a symmetric trace-free matrix in the orthonormal basis.

    Accepts batched input (..., 3, 3) and returns (..., 5).  Linear isometry:
    |encode5(Q)|_2 equals the Frobenius norm of Q.
    """
    return np.einsum('...ij,kij->...k', np.asarray(matrix, dtype=float), S0_BASIS)


def decode5(vec: np.ndarray) -> np.ndarray:
    """Inverse of encode5; (..., 5) -> (..., 3, 3)."""
    return np.einsum('...k,kij->...ij', np.asarray(vec, dtype=float), S0_BASIS)


def project_s0(matrix: np.ndarray) -> np.ndarray:
    """Orthogonal projection of an arbitrary 3x3 matrix onto the symmetric
    trace-free subspace (symmetrize, subtract tr/3 * Id).  Idempotent."""
    m = np.asarray(matrix, dtype=float)
    sym = 0.5 * (m + np.swapaxes(m, -1, -2))
    tr = np.trace(sym, axis1=-2, axis2=-1)
    return sym - tr[..., None, None] / 3.0 * np.eye(3)


def _as_matrix(q) -> np.ndarray:
    return q.matrix if isinstance(q, QTensor) else np.asarray(q, dtype=float)


def invariants_pair(matrix: np.ndarray):
    """(tr Q^2, tr Q^3) for batched matrices; the workhorse behind invariants."""
    m = np.asarray(matrix, dtype=float)
    i2 = np.einsum('...ij,...ij->...', m, m)
    i3 = np.einsum('...ij,...jk,...ki->...', m, m, m)
    return i2, i3


@dataclass(frozen=True)
class Invariants:
    """The two scalar invariants tr Q^2 and tr Q^3 of a Q-tensor."""

    i2: float
    i3: float

    def __post_init__(self):
        tol = numerics().invariant_bound_tol
        if self.i2 < -tol:
            raise ValueError(f"tr Q^2 must be nonnegative, got {self.i2}")
        # attainable bound for trace-free symmetric 3x3: (tr Q^3)^2 <= (tr Q^2)^3 / 6
        if self.i3 ** 2 > self.i2 ** 3 / 6.0 + tol * (1.0 + self.i2 ** 3):
            raise ValueError(
                f"invariant bound violated: i3^2 = {self.i3**2} > i2^3/6 = {self.i2**3/6}")


@dataclass(frozen=True)
class QTensor:
    """A symmetric trace-free 3x3 tensor, stored in matrix and 5-vector form."""

    matrix: np.ndarray
    vec: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        cfg = numerics()
        asym = np.max(np.abs(m - m.T))
        if asym > cfg.symmetry_tol:
            raise ValueError(f"matrix not symmetric: max |Q_ij - Q_ji| = {asym:.3e}")
        tr = abs(m[0, 0] + m[1, 1] + m[2, 2])
        if tr > cfg.trace_tol:
            raise ValueError(f"matrix not trace-free: |tr Q| = {tr:.3e}")
        m = 0.5 * (m + m.T)
        m = m - np.trace(m) / 3.0 * np.eye(3)
        m.flags.writeable = False
        object.__setattr__(self, 'matrix', m)
        v = encode5(m)
        v.flags.writeable = False
        object.__setattr__(self, 'vec', v)

    @classmethod
    def zero(cls) -> 'QTensor':
        return cls(np.zeros((3, 3)))

    @classmethod
    def from_vec(cls, vec) -> 'QTensor':
        return cls(decode5(np.asarray(vec, dtype=float)))

    def norm(self) -> float:
        """Frobenius norm |Q| = (tr Q^2)^(1/2)."""
        return float(np.linalg.norm(self.vec))

    def invariants(self) -> Invariants:
        return invariants(self)


def from_director(n, s: float) -> QTensor:
    """Uniaxial tensor s (n x n - Id/3) for a unit director n."""
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > numerics().unit_tol:
        raise ValueError(f"director must be a unit vector, |n| = {np.linalg.norm(n)}")
    return QTensor(s * (np.outer(n, n) - np.eye(3) / 3.0))


def invariants(q) -> Invariants:
    i2, i3 = invariants_pair(_as_matrix(q))
    return Invariants(float(i2), float(i3))


@dataclass(frozen=True)
class EigenDecomposition:
    """Sorted eigenvalues and an orthogonal frame with R Q R^T = diag(lambda)."""

    eigenvalues: np.ndarray  # ascending triple, sums to zero
    frame: np.ndarray        # rows are eigenvectors

    def __post_init__(self):
        cfg = numerics()
        lam = np.asarray(self.eigenvalues, dtype=float)
        fr = np.asarray(self.frame, dtype=float)
        if abs(lam.sum()) > cfg.eigen_sum_tol * max(1.0, np.abs(lam).max()):
            raise ValueError(f"eigenvalues of a trace-free tensor must sum to 0, got {lam.sum()}")
        if np.max(np.abs(fr @ fr.T - np.eye(3))) > cfg.orthogonality_tol:
            raise ValueError("frame is not orthogonal")
        object.__setattr__(self, 'eigenvalues', lam)
        object.__setattr__(self, 'frame', fr)


def _jacobi_sweeps(m: np.ndarray, r: np.ndarray, max_sweeps: int = 12):
    """Cyclic Jacobi rotations driving m to diagonal form; updates r in place
    so that r @ A @ r.T stays equal to m."""
    scale = max(np.max(np.abs(m)), 1e-300)
    for _ in range(max_sweeps):
        off = max(abs(m[0, 1]), abs(m[0, 2]), abs(m[1, 2]))
        if off <= 1e-15 * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            if abs(m[p, q]) <= 1e-18 * scale:
                continue
            theta = 0.5 * math.atan2(2.0 * m[p, q], m[p, p] - m[q, q])
            c, s = math.cos(theta), math.sin(theta)
            g = np.eye(3)
            g[p, p] = c
            g[q, q] = c
            g[p, q] = s
            g[q, p] = -s
            m[:] = g @ m @ g.T
            r[:] = g @ r
    return m, r


def eigen_decomposition(q) -> EigenDecomposition:
    """Closed-form (trigonometric Cardano) symmetric 3x3 eigen-solver.

    The most isolated eigenvalue's eigenvector comes from cross products of
    the rows of Q - lambda I; the remaining pair is solved exactly in the
    orthogonal plane.  Near-degenerate spectra (gap below the configured
    threshold) get a Jacobi refinement pass.
    """
    a = _as_matrix(q)
    a = 0.5 * (a + a.T)
    mean = np.trace(a) / 3.0
    b = a - mean * np.eye(3)
    p = math.sqrt(max(np.einsum('ij,ij->', b, b) / 6.0, 0.0))
    if p < 1e-150:
        return EigenDecomposition(np.full(3, mean), np.eye(3))
    c = b / p
    half_det = 0.5 * np.linalg.det(c)
    half_det = min(1.0, max(-1.0, half_det))
    phi = math.acos(half_det) / 3.0
    hi = mean + 2.0 * p * math.cos(phi)
    lo = mean + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    mid = 3.0 * mean - hi - lo
    lam = np.sort([lo, mid, hi])

    # eigenvector of the extreme eigenvalue with the larger adjacent gap
    iso = 2 if (lam[2] - lam[1]) >= (lam[1] - lam[0]) else 0
    rows = a - lam[iso] * np.eye(3)
    crosses = np.array([np.cross(rows[i], rows[j]) for i, j in ((0, 1), (0, 2), (1, 2))])
    norms = np.linalg.norm(crosses, axis=1)
    k = int(np.argmax(norms))
    if norms[k] < 1e-14 * max(np.max(np.abs(rows)), 1.0) ** 2:
        v = np.eye(3)[iso]  # (near-)isotropic: any direction works
    else:
        v = crosses[k] / norms[k]

    # orthonormal complement and exact 2x2 solve in that plane
    u = np.cross(v, np.eye(3)[int(np.argmin(np.abs(v)))])
    u /= np.linalg.norm(u)
    w = np.cross(v, u)
    m00 = u @ a @ u
    m01 = u @ a @ w
    m11 = w @ a @ w
    theta = 0.5 * math.atan2(2.0 * m01, m00 - m11)
    e1 = math.cos(theta) * u + math.sin(theta) * w
    e2 = -math.sin(theta) * u + math.cos(theta) * w
    pair = [(e1 @ a @ e1, e1), (e2 @ a @ e2, e2)]
    pair.sort(key=lambda t: t[0])
    if iso == 2:
        triples = [(pair[0][0], pair[0][1]), (pair[1][0], pair[1][1]), (lam[2], v)]
    else:
        triples = [(lam[0], v), (pair[0][0], pair[0][1]), (pair[1][0], pair[1][1])]
    lam = np.array([t[0] for t in triples])
    frame = np.array([t[1] for t in triples])

    gaps = (lam[1] - lam[0], lam[2] - lam[1])
    if min(gaps) < numerics().degenerate_gap * max(1.0, np.abs(lam).max()):
        m = frame @ a @ frame.T
        m, frame = _jacobi_sweeps(m, frame)
        order = np.argsort(np.diag(m))
        lam = np.diag(m)[order]
        frame = frame[order]

    if np.linalg.det(frame) < 0:
        frame = frame.copy()
        frame[2] = -frame[2]
    lam = lam + (np.trace(a) - lam.sum()) / 3.0
    return EigenDecomposition(lam, frame)


def random_q(seed: int, scale: float = 1.0) -> QTensor:
    """Deterministic random Q-tensor with |Q| <= scale * sqrt(5)."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(seed)
    return QTensor.from_vec(rng.uniform(-scale, scale, size=5))


def random_q_batch(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    """(n, 3, 3) array of random Q-tensors drawn from one generator."""
    return decode5(rng.uniform(-scale, scale, size=(n, 5)))


def random_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, 3, 3) rotations, uniform on SO(3) via normalized quaternions."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty((n, 3, 3))
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - z * w)
    r[:, 0, 2] = 2 * (x * z + y * w)
    r[:, 1, 0] = 2 * (x * y + z * w)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - x * w)
    r[:, 2, 0] = 2 * (x * z - y * w)
    r[:, 2, 1] = 2 * (y * z + x * w)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def random_orthogonals(rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, 3, 3) elements of O(3): uniform rotations times a fair coin for
    determinant -1 (compose with diag(1, 1, -1))."""
    r = random_rotations(rng, n)
    flip = rng.integers(0, 2, size=n).astype(bool)
    r[flip, :, 2] *= -1.0
    return r
