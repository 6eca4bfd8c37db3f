from .fields_norms import Field, Parity, Region, WeightedNormSpec, TraceCurve, RadialProfile, HardyProfile, derivative, weighted_norm, axis_trace, outer_trace, log_norm_equivalence_check, hardy_check
from .solver import DiscreteOperator, SolveResult, assemble, assemble_psi, solve, solve_psi, solve_differentiated, reconstruct_velocity, energy_identities
from .mellin import MellinProblem, ModelSolution, BandDifference, Resolvent, solve_model, band_difference, k1_band_difference, residue_constant
from .corrections import CorrectionField, CorrectionKind, build_chi, build_eta, vanishing_order, weighted_chain_norm
