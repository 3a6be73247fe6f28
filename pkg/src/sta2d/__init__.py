"""Invariant-based inverse engineering of two coupled time-dependent
harmonic oscillators: protocol designers (waveguide deflection, state
transfer, 1D expansion) plus two independent propagation engines."""

from .ansatz import (BoundaryConstraint, CosineAnsatz, CosineFamily,
                     PolynomialAnsatz, evaluate, solve_cosine, solve_polynomial)
from .deflection import (DeflectionProtocol, DeflectionSpec,
                         boundary_invariant_form, design_1d_expansion,
                         design_boundary_variant, design_deflection,
                         scaling_factor)
from .dynamics import (GaussianState, GridWavefunction, ObservableRecord,
                       coherent_mode1_state, default_box, make_initial_state,
                       observable_series, observables, product_ground_state,
                       propagate_grid, propagate_moments, waveguide_packet_state)
from .errors import (AnsatzError, ConfigError, DesignError, ReconstructionError,
                     ShootingError, SimulationError, StaError, StateError)
from .invariant import (ReferenceSolution, integrate_reference,
                        linear_invariant_expectation,
                        quadratic_invariant_expectation, symplectic_constant,
                        wronskian_sum, wronskians)
from .model import (ControlSchedule, NormalModeFrame, WaveguideBoundary,
                    linear_ramp_schedule, normal_modes, rotate,
                    table1_targets, waveguide_boundary)
from .transfer import (TransferProtocol, TransferSpec, build_imaginary_parts,
                       reconstruct_frequencies, shoot_transfer)

__version__ = "0.1.0"
