"""Homogenized bulk potentials for nematic liquid-crystal colloids.

Surface-anchoring energy design against prescribed quartic bulk coefficients,
sphere-moment identities, dilute inclusion lattices, a 3D Q-tensor energy
minimizer, and counterexample probes, behind one reproducible CLI.
"""

__version__ = "0.1.0"
