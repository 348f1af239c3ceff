"""Global numerics configuration: every default tolerance lives here."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass
class NumericsConfig:
    """Default tolerances and resolutions, overridable in one place.

    All validation routines read the active config at call time, so a test
    or a CLI run can tighten/loosen everything through ``set_numerics``.
    """

    symmetry_tol: float = 1e-12        # |Q_ij - Q_ji| for a valid Q-tensor
    trace_tol: float = 1e-12           # |tr Q| for a valid Q-tensor
    unit_tol: float = 1e-10            # |1 - |n|| for unit vectors
    orthogonality_tol: float = 1e-10   # |R^T R - I| for frames / rotations
    eigen_residual_tol: float = 1e-9   # |R Q R^T - diag(lambda)|
    eigen_sum_tol: float = 1e-10       # |lambda_1 + lambda_2 + lambda_3|
    invariant_bound_tol: float = 1e-10 # slack in i3^2 <= i2^3 / 6
    degenerate_gap: float = 1e-7       # eigenvalue gap triggering Jacobi refinement
    roundtrip_tol: float = 1e-14       # encode5/decode5 round trip
    mesh_closure_tol: float = 1e-8     # |sum area * outward normal|
    quadrature_resolution: int = 16    # default mesh resolution for psi / f_hom
    identity_resolutions: tuple = (16, 32, 64, 128)  # ladder for moment identities


_ACTIVE = NumericsConfig()


def numerics() -> NumericsConfig:
    """Return the active numerics configuration."""
    return _ACTIVE


def set_numerics(**overrides) -> NumericsConfig:
    """Replace selected fields of the active configuration; returns it."""
    global _ACTIVE
    _ACTIVE = replace(_ACTIVE, **overrides)
    return _ACTIVE


def reset_numerics() -> NumericsConfig:
    """Restore all defaults."""
    global _ACTIVE
    _ACTIVE = NumericsConfig()
    return _ACTIVE
