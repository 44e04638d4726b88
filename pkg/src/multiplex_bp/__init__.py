"""Community detection in multiplex networks by belief propagation.

Generators for single-layer, WPP-constrained and correlated multiplex
stochastic block models, the ``f_check`` local constraint, BP inference for
all three models, agreement metrics and an experiment harness.
"""

from .model import (
    EMPTY,
    BenchmarkAffinity,
    CommunityStructure,
    Labeling,
    MultiplexNetwork,
    SbmParams,
    WppViolationError,
    generate_correlated,
    generate_multiplex_wpp,
    generate_single_layer,
    labeling_to_structure,
    structure_to_labeling,
)
from .constraints import (
    CheckTable,
    build_check_table,
    f_check,
    f_check_extended,
    satisfies_wpp,
    wpp_check_global,
)
from .bp import BpConfig, DetectionResult, run, run_multilayer_alternating

__version__ = "0.1.0"
