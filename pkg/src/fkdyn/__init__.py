"""Simulation laboratory for the random-cluster model on finite lattices.

Subpackage map:

- ``lattice``      geometries (torus / box / cylinder), boundary partitions, edge balls
- ``connectivity`` dynamic connected-components engines (naive oracle + fully dynamic)
- ``oracle``       exact enumeration: Gibbs atoms, kernels, mixing times, conductance
- ``dynamics``     heat-bath edge dynamics, grand couplings, restricted chains, SW/ES
- ``phases``       largest-component phase predicates and boundary-layer diagnostics
- ``estimators``   spatial/temporal mixing estimators and the doubling envelope
- ``weights``      annealed phase-weight learning and mixture initialization
- ``cli``          the ``fkdyn`` experiment harness
"""

__version__ = "0.1.0"

from . import errors  # noqa: F401
