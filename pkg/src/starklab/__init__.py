"""starklab: numerical laboratory for inverse scattering of Stark Hamiltonians.

Propagates two-body wave packets in a uniform electric field, evaluates
Dollard-modified scattering operators by finite-time sandwiches, and recovers
pair potentials from high-velocity commutator data by Radon inversion.
"""

__version__ = "0.1.0"
