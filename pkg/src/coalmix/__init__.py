"""Multispecies-coalescent simulation and detection-boundary analysis toolkit."""

from .coalescent import (
    attach_mutation_probs,
    pair_coalescence_times,
    sample_gene_tree,
    triplet_genealogies,
)
from .detection import (
    GeneSampleSet,
    TestVerdict,
    TwoSampleVerdict,
    agnostic_two_sample_test,
    empirical_quantile,
    mean_test,
    min_test,
    oracle_quantile_test,
)
from .errors import CalibrationError, DomainError, EmbeddingError, SaturationError
from .exact import (
    MixingDensity,
    ThetaPmf,
    binom_weighted_moments,
    empirical_pmf,
    hellinger2,
    hellinger2_partition,
    hellinger_scaling_scan,
    lower_tail,
    mixture_decompose,
    null_mixing_density,
    oracle_tail_probs,
    pmf_theta,
    point_mass_density,
    tensorize_h2,
    tv,
    tv_bracket_m,
)
from .reconstruct import (
    ClockTree,
    DistanceEstimates,
    TripletCall,
    quantile_distance_estimate,
    single_linkage_tree,
    triplet_topology,
)
from .rng import derive_rng, derive_seed
from .sequences import (
    SequenceSet,
    ThetaMatrix,
    jc_expected_theta,
    jc_invert,
    pair_theta_samples,
    simulate_gene_dataset,
    simulate_sequences,
    theta,
    theta_matrix,
    triplet_theta_samples,
)
from .sweep import (
    CalibrationResult,
    SweepConfig,
    SweepRecord,
    calibrate_constants,
    find_m_star,
    power_estimate,
    run_sweep,
    run_trial,
    wilson_interval,
)
from .trees import GeneTree, SpeciesTree, from_newick, pair_tree, single_leaf_tree, triplet_tree

__version__ = "0.1.0"
