"""Tree-structured Gaussian mixtures under a fragmentation prior.

Recursive stick-breaking gives a random weight tree; marginalizing the
weights gives nested-CRP seating; a Gaussian diffusion along the tree gives
the likelihood.  Inference is partially collapsed Gibbs with locations
integrated out of the seating updates.
"""

from .diffusion import (
    CollapsedGaussianTree,
    DiffusionParams,
    GaussianPotential,
    collapsed_leaf_predictive,
    generate_dataset,
    marginal_data_loglik,
    sample_phi,
    transition_sample,
)
from .estimator import DFPMixture
from .evaluate import EvalReport, FitResult, RunConfig, eval_protocol, fit_points, holdout_split
from .fragmentation import (
    DivergenceSchedule,
    MassSequence,
    WeightedTree,
    dfp_sample_weights,
    divergence_alpha,
    frag,
    node_weight,
    sample_assignment_paths,
    sample_stick_fractions,
    stick_break,
)
from .inference import (
    Hyperpriors,
    ModelConfig,
    SamplerState,
    assignment_conditional,
    gibbs_sweep,
    heldout_predictive,
    heldout_predictives,
    init_state,
    log_joint,
    make_state,
    sample_c,
    sample_phi_state,
    sample_tau,
    sample_z_i,
)
from .io import (
    Dataset,
    RunSummary,
    export_newick,
    export_run_json,
    import_newick,
    load_csv,
    load_run_json,
    save_points_csv,
    tree_from_nested,
    tree_to_nested,
)
from .metrics import dendrogram_purity
from .ncrp import (
    branching_log_prob,
    child_probabilities,
    ncrp_sample,
    new_branch_log_prob,
    path_log_prob,
    tree_log_prob,
)
from .tree import ROOT, NodeId, TreeArena
from .validation import GewekeResult, geweke_test

__version__ = "0.1.0"

__all__ = [
    "CollapsedGaussianTree",
    "Dataset",
    "DFPMixture",
    "DiffusionParams",
    "DivergenceSchedule",
    "EvalReport",
    "FitResult",
    "GaussianPotential",
    "GewekeResult",
    "Hyperpriors",
    "MassSequence",
    "ModelConfig",
    "NodeId",
    "ROOT",
    "RunConfig",
    "RunSummary",
    "SamplerState",
    "TreeArena",
    "WeightedTree",
    "assignment_conditional",
    "branching_log_prob",
    "child_probabilities",
    "collapsed_leaf_predictive",
    "dendrogram_purity",
    "dfp_sample_weights",
    "divergence_alpha",
    "eval_protocol",
    "export_newick",
    "export_run_json",
    "fit_points",
    "frag",
    "generate_dataset",
    "geweke_test",
    "gibbs_sweep",
    "heldout_predictive",
    "heldout_predictives",
    "holdout_split",
    "import_newick",
    "init_state",
    "load_csv",
    "load_run_json",
    "log_joint",
    "make_state",
    "marginal_data_loglik",
    "ncrp_sample",
    "new_branch_log_prob",
    "node_weight",
    "path_log_prob",
    "sample_assignment_paths",
    "sample_c",
    "sample_phi",
    "sample_phi_state",
    "sample_stick_fractions",
    "sample_tau",
    "sample_z_i",
    "save_points_csv",
    "stick_break",
    "transition_sample",
    "tree_from_nested",
    "tree_log_prob",
    "tree_to_nested",
]
