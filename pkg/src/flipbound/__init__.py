"""Single-bit fault analysis for IEEE-754 binary64 data and kernels."""

__version__ = "0.1.0"

from .float_anatomy import FloatAnatomy, decompose, flip_bit, order_of_magnitude_bound, reconstruct
from .scalar_fault import PerturbationRecord, enumerate_perturbations, scalar_abs_error
from .lookup_table import ErrorClass, ErrorClassTally, ErrorLookupTable, ErrorModel, build_lookup_table
from .dot_fault import (ExponentInterval, bound_mantissa_and_sign, classify_errors, dot_product,
                        enumerate_dot_errors, extract_interval)
from .monte_carlo import McConfig, McSurface, generate_vector, per_bit_slice, run_cell, run_surface
from .sparse_la import (CsrMatrix, EquilibrationScaling, apply_scaling_to_rhs, equilibrate, gen_poisson,
                        norms, read_matrix_market, spmv, unscale_solution, write_matrix_market)
from .gmres import GmresConfig, GmresReport, gmres_solve, hessenberg_lsq
