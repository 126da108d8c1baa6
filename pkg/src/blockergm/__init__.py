"""Two-step likelihood estimation of block-structured exponential-family
random graph models: variational recovery of the block structure, then
parallel Monte Carlo maximum likelihood for the curved size-dependent
parameters, plus simulation, exact small-block oracles, and goodness-of-fit
tooling."""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    Graph,
    Membership,
    SoftMembership,
    dump_edge_list,
    dump_membership,
    load_edge_list,
    load_membership,
    neighborhood_sizes,
    within_subgraph,
)
from .model import (  # noqa: F401
    ModelSpec,
    change_statistics,
    log_unnormalized,
    natural_parameters,
    sufficient_statistics,
)
