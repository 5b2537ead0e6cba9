"""Reconstruction of edge transmission probabilities from partially
observed spreading cascades on a known directed network.

The package provides a forward message-passing engine for discrete-time
SI dynamics, its forward-mode coupling sensitivities, a reconstruction
optimizer driven by the resulting approximate likelihood, and exact
likelihood baselines (per-node convex fit, brute-force marginalization,
Monte Carlo completion) for comparison.
"""

from .errors import CapacityError, CascadeReconError, DatasetError, ParseError
from .graph import Network, parse_edge_list, serialize_edge_list, validate_couplings
from .cascades import (
    Cascade,
    MaskSpec,
    ObservedCascade,
    apply_mask,
    cascade_substream,
    check_realizable,
    generate_dataset,
    group_cascades,
    monte_carlo_marginals,
    observe_fully,
    parse_mask_spec,
    read_cascades,
    resolve_mask,
    sample_recorded_times,
    simulate_cascade,
    write_cascades,
)
from .dmp import (
    DmpTrace,
    activation_marginal,
    dmp_forward,
    exact_cascade_probability,
    exact_marginals_oracle,
)
from .gradient import (
    EPS_LOG,
    FreeEnergyReport,
    GradTrace,
    dmp_forward_with_gradients,
    free_energy_gradient,
    observed_negative_log_likelihood,
    population_free_energy,
)
from .fit import (
    FitConfig,
    FitResult,
    dmprec_fit,
    identifiable_edges,
    l1_coupling_error,
    projected_gradient_descent,
)
from .baselines import (
    HtsConfig,
    batch_full_log_likelihood,
    full_log_likelihood,
    hts_complete,
    hts_fit,
    marginalized_likelihood,
    netrate_fit,
)

__version__ = "0.1.0"
