"""Parent Hamiltonians of lattice wave functions from Bisognano-Wichmann entanglement Hamiltonians."""
from .lattice import Geometry, GeometryError, build_bilayer_cylinder, build_chain, ramp_weight
from .operators import OperatorBasis, basis_bilayer, basis_by_name, basis_full, basis_u1, spin_matrices
from .spectra import (
    CapacityError,
    DensityMatrix,
    EigensolverError,
    build_operator,
    excited_state,
    gibbs_state,
    ground_state,
    reduced_density_matrix,
)
from .relent import BWAnsatz, RelativeEntropy, StructuralMismatch, relative_entropy, relent_gradient, relent_hessian
from .optimize import OptimizerConfig, ParentHamiltonian, Trajectory, extract_parent, minimize
from .models import build_model, input_state

__version__ = "0.1.0"
