"""Sparse polynomial chaos expansions via subspace pursuit and D-optimal designs."""
from .basis import BasisSpec, Family, assemble_matrix, b_of_xi, build_basis, eval_basis, evaluate
from .design import Design, augment, phi_d, phi_d_normalized, rrqr_select, subset_select
from .models import duffing_qoi, get_model, ishigami, manufacture, noisy_rhs, wing_weight
from .sampling import RngStream, SamplePool, coherence, sample_coherence_optimal, sample_pool, sample_standard
from .solvers import CandidateOracle, SparseSolution, cross_validate_k, dsp, dsp_cv, lsa, subspace_pursuit

__version__ = "0.1.0"
