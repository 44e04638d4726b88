from .engine import (
    MODELS,
    BpConfig,
    BpState,
    DetectionResult,
    constrained_sweep,
    correlated_sweep,
    init_state,
    mmap_labels,
    round_robin_pairs,
    run,
    run_multilayer_alternating,
    set_active_pairs,
    single_layer_sweep,
    update_external_field,
)
from .io import write_beliefs, read_beliefs, write_label_csv, read_label_csv

__all__ = [
    "MODELS",
    "BpConfig",
    "BpState",
    "DetectionResult",
    "constrained_sweep",
    "correlated_sweep",
    "init_state",
    "mmap_labels",
    "round_robin_pairs",
    "run",
    "run_multilayer_alternating",
    "set_active_pairs",
    "single_layer_sweep",
    "update_external_field",
    "write_beliefs",
    "read_beliefs",
    "write_label_csv",
    "read_label_csv",
]
