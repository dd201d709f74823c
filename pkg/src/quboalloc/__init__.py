"""Qubit allocation as a QUBO, sampled with simulated annealing."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    Allocation,
    AllocationContext,
    AllocationReport,
    Metric,
    decode,
    encode,
    heatmap_bands,
    naive_swap_count,
    rank_samples,
    spearman,
)
from .anneal import AnnealSchedule, SampleSet, default_beta_range, sample  # noqa: E402
from .circuit import QuantumCircuit, interaction_summary, load_qasm, parse_qasm  # noqa: E402
from .device import (  # noqa: E402
    DeviceModel,
    SwapMode,
    all_pairs_distance,
    builtin_device,
    load_device,
    pairwise_success,
)
from .pipeline import RunConfig, allocate_with_escalation, compare_forms, export_run  # noqa: E402
from .qubo import (  # noqa: E402
    CoefficientForm,
    PenaltyConfig,
    QuboProblem,
    apply_penalties,
    build_base_coefficients,
    energy,
)

__all__ = [
    "Allocation",
    "AllocationContext",
    "AllocationReport",
    "AnnealSchedule",
    "CoefficientForm",
    "DeviceModel",
    "Metric",
    "PenaltyConfig",
    "QuantumCircuit",
    "QuboProblem",
    "RunConfig",
    "SampleSet",
    "SwapMode",
    "all_pairs_distance",
    "allocate_with_escalation",
    "apply_penalties",
    "build_base_coefficients",
    "builtin_device",
    "compare_forms",
    "decode",
    "default_beta_range",
    "encode",
    "energy",
    "export_run",
    "heatmap_bands",
    "interaction_summary",
    "load_device",
    "load_qasm",
    "naive_swap_count",
    "pairwise_success",
    "parse_qasm",
    "rank_samples",
    "sample",
    "spearman",
]
