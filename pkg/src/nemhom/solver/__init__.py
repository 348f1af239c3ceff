"""Uniform-grid discretization and minimization of the inclusion energy and
its homogenized limit, with the harmonic extension across inclusions."""

from .field import Grid, DiscreteField, uniform_uniaxial_datum
from .assemble import (EnergyBreakdown, EpsAssembler, HomAssembler,
                       gradient_check, h1_distance)
from .extension import HarmonicExtension, harmonic_extension
from .minimize import MinimizeOptions, minimize
from .experiment import (convergence_experiment, extension_bound_study,
                         j_direct, j_homogenized, recovery_check, stability_probe)

__all__ = [
    'Grid', 'DiscreteField', 'uniform_uniaxial_datum',
    'EnergyBreakdown', 'EpsAssembler', 'HomAssembler',
    'gradient_check', 'h1_distance',
    'HarmonicExtension', 'harmonic_extension',
    'MinimizeOptions', 'minimize',
    'convergence_experiment', 'extension_bound_study', 'j_direct',
    'j_homogenized', 'recovery_check', 'stability_probe',
]
