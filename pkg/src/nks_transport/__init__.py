"""Multigroup SAAF-S_N k-eigenvalue solver with Newton-Krylov-Schwarz and
subspace-based algebraic coarsening."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .mesh import (  # noqa: F401
    Region,
    StructuredMesh2D,
    assign_nodes_balanced,
    assign_nodes_lowest_rank,
    build_mesh,
    dual_graph,
    hierarchical_partition,
    node_ratio,
    partition_bisect,
)
from .transport import (  # noqa: F401
    CrossSectionLibrary,
    FluxVector,
    Material,
    TransportProblem,
    apply_A,
    apply_B,
    assemble_block,
    assemble_preconditioner,
    build_quadrature,
    scalar_flux,
)
from .coarsening import (  # noqa: F401
    aggressive_coarsen,
    cljp_coarsen,
    hcljp_coarsen,
    rs_coarsen,
    strength_graph,
)
from .interpolation import (  # noqa: F401
    HierarchyParams,
    build_hierarchy,
    classical_interpolation,
    direct_interpolation,
    expand_interpolation,
    multipass_interpolation,
)
from .solver import (  # noqa: F401
    EigenSolveParams,
    MasmPreconditioner,
    OneLevelPreconditioner,
    inverse_power,
    make_preconditioner,
    newton_eigen,
)
from .config import load_config, parse_config, serialize_config  # noqa: F401
