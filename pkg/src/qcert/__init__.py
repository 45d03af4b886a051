"""Certify safety and robustness of feed-forward networks by abstracting
activations and input sets with quadratic constraints and solving the
resulting matrix-inequality feasibility problems."""

from .activation_qc import (
    CouplingMode,
    NeuronPartition,
    SlopeRange,
    bounded_qc,
    local_sector,
    relu_global_qc,
    relu_local_qc,
    repeated_qc,
    sector_vector_qc,
    slope_range,
)
from .assembly import (
    LmiProblem,
    SafetyMatrix,
    assemble,
    build_min,
    build_mmid,
    build_mout,
    hyperplane_spec,
    invariance_spec,
    margin_specs,
    polytope_spec,
)
from .input_sets import (
    Box,
    Ellipsoid,
    Polytope,
    Zonotope,
    ellipsoid_qc,
    hyperrect_qc,
    input_qc,
    load_input_set,
    polytope_qc,
    save_input_set,
    zonotope_qc,
)
from .network import (
    Activation,
    CompactNetwork,
    NeuralNetwork,
    compact_form,
    embed_projection,
    forward,
    forward_batch,
    load_network,
    random_network,
    read_network,
    save_network,
    write_network,
)
from .oracle import (
    PatternCertificate,
    exact_max_relu,
    grid_reach,
    sample_lower_bound,
)
from .parammatrix import FREE, NONNEG, ParamMatrix, SideConstraint
from .presolve import NeuronBounds, bounding_box, interval_propagate
from .sdp import (
    CertificateReport,
    SolveResult,
    check_certificate,
    export_sdpa,
    solve,
)
from .verifier import (
    VerificationResult,
    VerifyOptions,
    bound_direction,
    certify_invariance,
    certify_robustness,
    certify_safety,
    largest_invariant_box,
    reach_polytope,
)

__version__ = "0.1.0"
