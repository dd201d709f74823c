"""Decoding sampled bitstrings and scoring the resulting allocations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from .anneal import SampleSet
from .circuit import InteractionSummary, QuantumCircuit, interaction_summary
from .device import DeviceModel, PathFidelityTable, SwapMode
from .qubo import QuboProblem

__all__ = [
    "InvalidAllocationError",
    "Metric",
    "Allocation",
    "Violation",
    "AllocationReport",
    "AllocationContext",
    "HeatmapBands",
    "CorrelationStats",
    "decode",
    "encode",
    "naive_swap_count",
    "log_success_probability",
    "allocation_success_probability",
    "rank_samples",
    "heatmap_bands",
    "shannon_entropy",
    "spearman",
]


class InvalidAllocationError(ValueError):
    pass


class Metric(str, Enum):
    ENERGY = "energy"
    NAIVE_SWAPS = "naive_swaps"
    SUCCESS_PROBABILITY = "success_probability"

    @classmethod
    def coerce(cls, value) -> "Metric":
        if isinstance(value, cls):
            return value
        aliases = {"swaps": cls.NAIVE_SWAPS, "success": cls.SUCCESS_PROBABILITY}
        return aliases.get(str(value)) or cls(str(value))


@dataclass(frozen=True)
class Allocation:
    """``mapping[i]`` is the physical qubit holding logical qubit ``i``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.mapping)) != len(self.mapping):
            raise InvalidAllocationError(f"mapping {self.mapping} is not injective")
        if any(q < 0 for q in self.mapping):
            raise InvalidAllocationError("negative physical qubit")

    @property
    def n_logical(self) -> int:
        return len(self.mapping)


@dataclass(frozen=True)
class Violation:
    """Why a bitstring is not an allocation.

    ``rows`` are logical qubits with zero or several set bits; ``columns`` are
    physical qubits claimed more than once.
    """

    rows: tuple[int, ...]
    columns: tuple[int, ...]


def decode(state, n_logical: int, n_physical: int) -> Allocation | Violation:
    x = np.asarray(state).reshape(n_logical, n_physical)
    row_sums = x.sum(axis=1)
    col_sums = x.sum(axis=0)
    bad_rows = tuple(int(i) for i in np.flatnonzero(row_sums != 1))
    bad_cols = tuple(int(j) for j in np.flatnonzero(col_sums > 1))
    if bad_rows or bad_cols:
        return Violation(bad_rows, bad_cols)
    return Allocation(tuple(int(j) for j in x.argmax(axis=1)))


def encode(allocation: Allocation, n_physical: int) -> np.ndarray:
    x = np.zeros((allocation.n_logical, n_physical), dtype=np.int8)
    x[np.arange(allocation.n_logical), list(allocation.mapping)] = 1
    return x.ravel()


def _require_valid(allocation):
    if not isinstance(allocation, Allocation):
        raise InvalidAllocationError(f"metrics need a valid allocation, got {allocation!r}")


def naive_swap_count(
    allocation: Allocation,
    summary: InteractionSummary,
    distances: np.ndarray,
    swap_mode=SwapMode.ROUND_TRIP,
) -> int:
    """SWAPs added when every two-qubit gate is routed on its own along a shortest path."""
    _require_valid(allocation)
    per_hop = SwapMode.coerce(swap_mode).swaps_per_hop
    m = allocation.mapping
    total = 0
    for i, k, g in summary.pairs():
        total += g * per_hop * (int(distances[m[i], m[k]]) - 1)
    return total


def log_success_probability(
    allocation: Allocation,
    summary: InteractionSummary,
    device: DeviceModel,
    fidelities: PathFidelityTable,
) -> float:
    """Natural log of the circuit success probability; survives underflow."""
    _require_valid(allocation)
    m = np.asarray(allocation.mapping)
    logp = float(np.dot(summary.g_single, np.log(device.p_single[m])))
    for i, k, g in summary.pairs():
        logp += g * math.log(fidelities.p_pair[m[i], m[k]])
    return logp


def allocation_success_probability(
    allocation: Allocation,
    circuit: QuantumCircuit | InteractionSummary,
    device: DeviceModel,
    fidelities: PathFidelityTable,
) -> float:
    summary = circuit if isinstance(circuit, InteractionSummary) else interaction_summary(circuit)
    return math.exp(log_success_probability(allocation, summary, device, fidelities))


@dataclass(frozen=True)
class AllocationReport:
    read_index: int
    energy: float
    allocation: Allocation | None = None
    violation: Violation | None = None
    naive_swaps: int | None = None
    log_success: float | None = None

    @property
    def valid(self) -> bool:
        return self.allocation is not None

    @property
    def success_probability(self) -> float | None:
        return None if self.log_success is None else math.exp(self.log_success)

    @property
    def log10_success_probability(self) -> float | None:
        return None if self.log_success is None else self.log_success / math.log(10.0)

    def value(self, metric) -> float:
        metric = Metric.coerce(metric)
        if metric is Metric.ENERGY:
            return self.energy
        if metric is Metric.NAIVE_SWAPS:
            return float(self.naive_swaps)
        return self.success_probability


@dataclass(frozen=True)
class AllocationContext:
    """Everything needed to score an allocation against one circuit and device."""

    summary: InteractionSummary
    device: DeviceModel
    distances: np.ndarray = field(repr=False)
    fidelities: PathFidelityTable = field(repr=False)

    def report(self, read_index: int, state, energy: float) -> AllocationReport:
        decoded = decode(state, self.summary.n_qubits, self.device.n_qubits)
        if isinstance(decoded, Violation):
            return AllocationReport(read_index, energy, violation=decoded)
        return AllocationReport(
            read_index,
            energy,
            allocation=decoded,
            naive_swaps=naive_swap_count(decoded, self.summary, self.distances, self.fidelities.swap_mode),
            log_success=log_success_probability(decoded, self.summary, self.device, self.fidelities),
        )

    def reports(self, sample_set: SampleSet) -> list[AllocationReport]:
        return [self.report(r, s.state, s.energy) for r, s in enumerate(sample_set)]


def _rank_key(metric: Metric):
    def key(rep: AllocationReport):
        if metric is Metric.ENERGY:
            primary = rep.energy
        elif metric is Metric.NAIVE_SWAPS:
            primary = rep.naive_swaps
        else:
            # log domain keeps underflowed probabilities ordered
            primary = -rep.log_success
        return (primary, rep.energy, rep.read_index)

    return key


def rank_samples(
    sample_set: SampleSet | list[AllocationReport],
    problem: QuboProblem | None = None,
    metric="naive_swaps",
    context: AllocationContext | None = None,
) -> list[AllocationReport]:
    """Reports best-first under ``metric``; invalid samples follow in read order."""
    metric = Metric.coerce(metric)
    if isinstance(sample_set, SampleSet):
        if context is None:
            if metric is not Metric.ENERGY:
                raise ValueError(f"ranking by {metric.value} needs an AllocationContext")
            reports = [
                AllocationReport(r, s.energy, *_decoded(s.state, problem))
                for r, s in enumerate(sample_set)
            ]
        else:
            reports = context.reports(sample_set)
    else:
        reports = list(sample_set)
    valid = sorted((r for r in reports if r.valid), key=_rank_key(metric))
    invalid = [r for r in reports if not r.valid]
    return valid + invalid


def _decoded(state, problem: QuboProblem):
    d = decode(state, problem.n_logical, problem.n_physical)
    return (None, d) if isinstance(d, Violation) else (d, None)


@dataclass(frozen=True)
class HeatmapBands:
    low: np.ndarray
    mid: np.ndarray
    high: np.ndarray
    band_width: float = 5.0
    band_size: int = 1

    def entropies(self) -> tuple[float, float, float]:
        return shannon_entropy(self.low), shannon_entropy(self.mid), shannon_entropy(self.high)


def _usage(allocs: list[Allocation], n_physical: int) -> np.ndarray:
    freq = np.zeros(n_physical)
    for a in allocs:
        freq[list(a.mapping)] += 1
    return freq / len(allocs)


def heatmap_bands(sample_set, problem: QuboProblem, band_width: float = 5.0) -> HeatmapBands:
    """Per-qubit usage in the lowest, middle and highest energy slices of the valid samples."""
    if not 0 < band_width <= 100:
        raise ValueError("band_width is a percentage in (0, 100]")
    valid = []
    for s in sample_set:
        if isinstance(s, AllocationReport):
            alloc = s.allocation
        else:
            alloc = decode(s.state, problem.n_logical, problem.n_physical)
        if isinstance(alloc, Allocation):
            valid.append((s.energy, alloc))
    if len(valid) < 3:
        raise ValueError(f"heatmap bands need at least 3 valid samples, got {len(valid)}")
    order = sorted(range(len(valid)), key=lambda r: valid[r][0])
    ranked = [valid[r][1] for r in order]
    n = len(ranked)
    size = max(1, int(math.floor(n * band_width / 100.0)))
    mid_start = (n - size) // 2
    return HeatmapBands(
        low=_usage(ranked[:size], problem.n_physical),
        mid=_usage(ranked[mid_start : mid_start + size], problem.n_physical),
        high=_usage(ranked[n - size :], problem.n_physical),
        band_width=float(band_width),
        band_size=size,
    )


def shannon_entropy(freq) -> float:
    """Entropy (nats) of a usage-frequency vector after normalising it to sum 1."""
    p = np.asarray(freq, dtype=float)
    total = p.sum()
    if total <= 0:
        return 0.0
    p = p[p > 0] / total
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class CorrelationStats:
    spearman_rho: float
    n: int
    p_value: float = 1.0
    degenerate: bool = False


def spearman(energies, metric_values) -> CorrelationStats:
    """Spearman rank correlation with average ranks for ties."""
    a = np.asarray(energies, dtype=float)
    b = np.asarray(metric_values, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 3:
        raise ValueError("spearman needs at least 3 points")
    if np.all(a == a[0]) or np.all(b == b[0]):
        return CorrelationStats(0.0, int(a.size), 1.0, degenerate=True)
    res = stats.spearmanr(a, b)
    return CorrelationStats(float(res.statistic), int(a.size), float(res.pvalue))
