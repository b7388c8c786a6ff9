"""Dynamical random sampling of bandlimited graph signals with a constant source."""

from .dynamics import (AffineSystem, StabilityBounds, apply_pi, evolve, evolve_with_operator,
                       lambda_bar, pi_matrix, stability_bounds)
from .graph import (Graph, GraphError, build_knn_graph, combinatorial_laplacian, grid_graph,
                    load_coords, load_edge_list, normalized_diffusion, normalized_laplacian,
                    random_geometric_graph)
from .metrics import MetricReport, evaluate, mae, mape, relative_error
from .recovery import (RecoveryResult, RegularizerPoly, check_error_bounds, recover_known_basis,
                       recover_regularized)
from .sampling import (CoherenceReport, Measurements, Regime, SampleSet, SamplingPlan,
                       WeightedOperator, coherence_regime1, coherence_regime2,
                       coherence_upper_bound, design_matrix, draw_samples, measure,
                       required_samples, rip_check, sample_complexity)
from .spectral import (ShiftSpectrum, SpectralBasis, bandwidth_for_energy, eigendecompose, gft,
                       igft, random_bandlimited, shift_from_heat)

__version__ = "0.1.0"
