"""Energy-stable open boundary conditions for skew-symmetric hyperbolic IBVPs.

Modules:

* :mod:`charbc.specmat` -- symmetric eigendecomposition and spectral splits
* :mod:`charbc.bc` -- boundary operators, penalties and admissibility checks
* :mod:`charbc.sbp` -- summation-by-parts operators and the discrete lifting
* :mod:`charbc.ibvp` -- scalar and system problems, time stepping, energy audits
* :mod:`charbc.experiments`, :mod:`charbc.config`, :mod:`charbc.harness`,
  :mod:`charbc.cli` -- shipped experiments and the command-line harness
"""

from charbc.bc import BoundaryOperatorSpec, Imposition, Kind
from charbc.sbp import Grid, build_sbp_21
from charbc.specmat import SpectralSplit, SymMatrix, eig_sym, split, symmetrize

__version__ = "0.1.0"

__all__ = [
    "BoundaryOperatorSpec",
    "Grid",
    "Imposition",
    "Kind",
    "SpectralSplit",
    "SymMatrix",
    "build_sbp_21",
    "eig_sym",
    "split",
    "symmetrize",
]
