"""Discrete linear optimal transport and Gromov-Wasserstein structure checks."""
from ._accel import USE_NUMBA
from .cnd import (
    ConcavityError,
    build_concavity_witness,
    centering_matrix,
    certify_cnd,
    separable_concavity_check,
    tensor_cnd_sample_check,
)
from .core import (
    KL_LOSS,
    SQUARE_LOSS,
    CostMatrix,
    Coupling,
    DiffPlan,
    Histogram,
    Permutation,
    QuadTensor,
    SeparableLoss,
    SeparableTensor,
    as_coupling,
    build_dense_tensor,
    get_loss,
    gw_objective_dense,
    gw_objective_separable,
    make_coupling,
    make_histogram,
    product_coupling,
    support,
    tensor_apply,
    uniform,
)
from .gw import (
    bilinear_identity_check,
    bilinear_value,
    check_bilinear_tightness,
    check_qp_lp_stationarity,
    gw_monotonicity_check,
    solve_bilinear,
    solve_gw,
    solve_gw_exact_concave,
    solve_gw_frank_wolfe,
    solve_gw_permutation,
)
from .linear_ot import (
    check_cyclical_monotonicity,
    plan_cost,
    solve_linear_ot,
    solve_monge,
    verify_monge_equals_kantorovich,
)
from .polytope import (
    cycle_perturbation,
    enumerate_vertices,
    extreme_decomposition,
    find_cycle,
    is_extreme,
    northwest_corner,
    support_graph,
)

__version__ = "0.1.0"
