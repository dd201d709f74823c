"""End-to-end allocation runs: build, escalate penalties, anneal, score, export."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    AllocationContext,
    AllocationReport,
    Metric,
    heatmap_bands,
    rank_samples,
)
from .anneal import AnnealSchedule, SampleSet, default_beta_range, sample
from .circuit import QuantumCircuit, interaction_summary, load_qasm
from .device import DeviceModel, SwapMode, all_pairs_distance, load_device_file, pairwise_success
from .qubo import (
    BaseCoefficients,
    CoefficientForm,
    InfeasibleInstance,
    PenaltyConfig,
    QuboProblem,
    apply_penalties,
    base_penalty_magnitude,
    build_base_coefficients,
)

__all__ = [
    "ConfigError",
    "EscalationExhausted",
    "RunConfig",
    "Instance",
    "RunResult",
    "prepare_instance",
    "allocate_with_escalation",
    "FormSummary",
    "FormComparison",
    "FormComparisonTable",
    "compare_forms",
    "percentage_difference",
    "export_run",
    "HISTOGRAM_BINS",
]

HISTOGRAM_BINS = 50


class ConfigError(ValueError):
    pass


class EscalationExhausted(RuntimeError):
    def __init__(self, history: list[tuple[int, float]]):
        self.history = history
        detail = ", ".join(f"x{m}: {frac:.1%} invalid" for m, frac in history)
        super().__init__(f"penalty escalation exhausted ({detail})")


@dataclass(frozen=True)
class RunConfig:
    circuit_path: str | None = None
    device_path: str | None = None
    distance_exponent: int = 3
    include_error: bool = True
    linear_enabled: bool = True
    swap_mode: str = "round_trip"
    num_reads: int = 1000
    num_sweeps: int = 1000
    seed: int = 0
    penalty_multiplier_max: int = 10
    selection_metric: str = "naive_swaps"
    output_dir: str | None = None
    gamma: float = 0.0  # count-penalty weight as a fraction of phi; 0 disables it
    filter_invalid: bool = False
    drop_idle_qubits: bool = False
    greedy_finish: bool = True

    def __post_init__(self):
        for name in ("distance_exponent", "num_reads", "num_sweeps", "penalty_multiplier_max"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.gamma < 0:
            raise ConfigError("gamma must be nonnegative")
        try:
            SwapMode.coerce(self.swap_mode)
            Metric.coerce(self.selection_metric)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def form(self) -> CoefficientForm:
        return CoefficientForm(self.distance_exponent, self.include_error, self.linear_enabled)

    def echo(self) -> dict:
        doc = asdict(self)
        doc["swap_mode"] = SwapMode.coerce(self.swap_mode).value
        doc["selection_metric"] = Metric.coerce(self.selection_metric).value
        return doc


@dataclass(frozen=True)
class Instance:
    """A circuit/device pair with every derived table the run needs."""

    circuit: QuantumCircuit
    device: DeviceModel
    base: BaseCoefficients = field(repr=False)
    context: AllocationContext = field(repr=False)


def prepare_instance(
    circuit: QuantumCircuit, device: DeviceModel, form: CoefficientForm, swap_mode="round_trip"
) -> Instance:
    distances = all_pairs_distance(device)
    fidelities = pairwise_success(device, swap_mode, distances=distances)
    summary = interaction_summary(circuit)
    base = build_base_coefficients(summary, device, fidelities, form, distances=distances)
    return Instance(circuit, device, base, AllocationContext(summary, device, distances, fidelities))


def _load_inputs(config: RunConfig, circuit, device):
    if circuit is None:
        if not config.circuit_path:
            raise ConfigError("no circuit given")
        if not Path(config.circuit_path).exists():
            raise ConfigError(f"circuit file {config.circuit_path} does not exist")
        circuit = load_qasm(config.circuit_path)
        if config.drop_idle_qubits:
            circuit = circuit.compact()
    if device is None:
        if not config.device_path:
            raise ConfigError("no device given")
        device = load_device_file(config.device_path)
    return circuit, device


@dataclass
class RunResult:
    best: AllocationReport
    reports: list[AllocationReport]
    final_penalty_multiplier: int
    penalties_used: PenaltyConfig
    timings: dict[str, float]
    config: RunConfig
    problem: QuboProblem = field(repr=False)
    sample_set: SampleSet = field(repr=False)
    instance: Instance = field(repr=False)
    history: list[tuple[int, float]] = field(default_factory=list)
    filtered_invalid: int = 0

    @property
    def sample_reports(self) -> list[AllocationReport]:
        return self.reports

    def reports_by_read(self) -> list[AllocationReport]:
        return sorted(self.reports, key=lambda r: r.read_index)


def allocate_with_escalation(
    config: RunConfig,
    circuit: QuantumCircuit | None = None,
    device: DeviceModel | None = None,
) -> RunResult:
    """Run the sampler, multiplying the penalties by 1, 2, 3, ... until every read is valid.

    ``circuit`` and ``device`` override the paths in ``config`` when given.
    With ``filter_invalid`` the first multiplier yielding any valid read wins
    and the invalid reads are dropped instead of re-running the batch.

    Raises:
        ConfigError: unusable configuration or more logical than physical qubits.
        EscalationExhausted: invalid reads remain at ``penalty_multiplier_max``.
    """
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    circuit, device = _load_inputs(config, circuit, device)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        instance = prepare_instance(circuit, device, config.form, config.swap_mode)
    except InfeasibleInstance as exc:
        raise ConfigError(str(exc)) from None
    magnitude = base_penalty_magnitude(instance.base)
    timings["build"] = time.perf_counter() - t0
    timings["anneal"] = 0.0
    timings["analyze"] = 0.0

    history: list[tuple[int, float]] = []
    for mult in range(1, config.penalty_multiplier_max + 1):
        strength = mult * magnitude
        penalties = PenaltyConfig(strength, strength, config.gamma * strength)
        problem = apply_penalties(instance.base, penalties)
        hot, cold = default_beta_range(problem)
        schedule = AnnealSchedule(hot, cold, config.num_sweeps, config.num_reads, config.greedy_finish)

        t0 = time.perf_counter()
        samples = sample(problem, schedule, config.seed)
        timings["anneal"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        reports = instance.context.reports(samples)
        timings["analyze"] += time.perf_counter() - t0
        n_invalid = sum(not r.valid for r in reports)
        history.append((mult, n_invalid / len(reports)))

        done = n_invalid == 0 or (config.filter_invalid and n_invalid < len(reports))
        if done:
            kept = [r for r in reports if r.valid]
            ranked = rank_samples(kept, metric=config.selection_metric)
            return RunResult(
                best=ranked[0],
                reports=ranked,
                final_penalty_multiplier=mult,
                penalties_used=penalties,
                timings=timings,
                config=config,
                problem=problem,
                sample_set=samples,
                instance=instance,
                history=history,
                filtered_invalid=n_invalid,
            )
    raise EscalationExhausted(history)


# ---------------------------------------------------------------------------
# coefficient-form comparison


def percentage_difference(reference: float, candidate: float) -> float:
    """Symmetric percentage difference; negative when ``candidate`` is lower."""
    if reference == candidate:
        return 0.0
    return 100.0 * (candidate - reference) / ((candidate + reference) / 2.0)


def _relative_difference(reference: float, candidate: float) -> float:
    if reference == candidate:
        return 0.0
    if reference == 0:
        return math.copysign(math.inf, candidate)
    return 100.0 * (candidate - reference) / reference


@dataclass(frozen=True)
class FormSummary:
    label: str
    form: CoefficientForm
    mean_swaps: float
    mean_swaps_top1: float
    mean_success: float
    penalty_multiplier: int
    n_valid: int


@dataclass(frozen=True)
class FormComparison:
    reference: str
    candidate: str
    swaps_all_pct: float
    swaps_top1_pct: float
    success_pct: float
    swaps_all_rel: float
    swaps_top1_rel: float
    success_rel: float


@dataclass(frozen=True)
class FormComparisonTable:
    forms: list[FormSummary]
    comparisons: list[FormComparison]

    FORM_FIELDS = ("label", "mean_swaps", "mean_swaps_top1", "mean_success", "penalty_multiplier", "n_valid")
    PAIR_FIELDS = (
        "reference",
        "candidate",
        "swaps_all_pct",
        "swaps_top1_pct",
        "success_pct",
        "swaps_all_rel",
        "swaps_top1_rel",
        "success_rel",
    )

    def rows(self):
        yield ["# forms"]
        yield list(self.FORM_FIELDS)
        for f in self.forms:
            yield [_fmt(getattr(f, k)) for k in self.FORM_FIELDS]
        yield ["# comparisons (negative *_pct favours the candidate on swaps)"]
        yield list(self.PAIR_FIELDS)
        for c in self.comparisons:
            yield [_fmt(getattr(c, k)) for k in self.PAIR_FIELDS]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _summarise(label: str, result: RunResult) -> FormSummary:
    valid = [r for r in result.reports if r.valid]
    by_energy = sorted(valid, key=lambda r: (r.energy, r.read_index))
    top = by_energy[: max(1, math.ceil(0.01 * len(by_energy)))]
    return FormSummary(
        label=label,
        form=result.config.form,
        mean_swaps=float(np.mean([r.naive_swaps for r in valid])),
        mean_swaps_top1=float(np.mean([r.naive_swaps for r in top])),
        mean_success=float(np.mean([r.success_probability for r in valid])),
        penalty_multiplier=result.final_penalty_multiplier,
        n_valid=len(valid),
    )


def compare_forms(
    configs: list[RunConfig],
    circuit: QuantumCircuit | None = None,
    device: DeviceModel | None = None,
) -> FormComparisonTable:
    """Run each configuration and tabulate naive-SWAP and success averages per form.

    Every pair ``(earlier, later)`` gets percentage differences with the earlier
    form as reference, so a negative value favours the later form.
    """
    if len(configs) < 2:
        raise ConfigError("compare_forms needs at least two configurations")
    ref = configs[0]
    for cfg in configs[1:]:
        for key in ("circuit_path", "device_path", "seed"):
            if getattr(cfg, key) != getattr(ref, key):
                raise ConfigError(f"configurations differ in {key}")
        if replace(cfg, distance_exponent=ref.distance_exponent, include_error=ref.include_error,
                   linear_enabled=ref.linear_enabled) != ref:
            raise ConfigError("configurations may differ only in coefficient form")
    circuit, device = _load_inputs(ref, circuit, device)

    summaries = []
    seen: dict[str, int] = {}
    for cfg in configs:
        label = cfg.form.label
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}#{seen[label]}"
        summaries.append(_summarise(label, allocate_with_escalation(cfg, circuit, device)))

    comparisons = []
    for a in range(len(summaries)):
        for b in range(a + 1, len(summaries)):
            A, B = summaries[a], summaries[b]
            comparisons.append(
                FormComparison(
                    reference=A.label,
                    candidate=B.label,
                    swaps_all_pct=percentage_difference(A.mean_swaps, B.mean_swaps),
                    swaps_top1_pct=percentage_difference(A.mean_swaps_top1, B.mean_swaps_top1),
                    success_pct=percentage_difference(A.mean_success, B.mean_success),
                    swaps_all_rel=_relative_difference(A.mean_swaps, B.mean_swaps),
                    swaps_top1_rel=_relative_difference(A.mean_swaps_top1, B.mean_swaps_top1),
                    success_rel=_relative_difference(A.mean_success, B.mean_success),
                )
            )
    return FormComparisonTable(summaries, comparisons)


# ---------------------------------------------------------------------------
# export

SAMPLE_COLUMNS = (
    "read_index",
    "energy",
    "valid",
    "naive_swaps",
    "success_probability",
    "log10_success_probability",
    "mapping",
)


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _report_doc(rep: AllocationReport) -> dict:
    return {
        "read_index": rep.read_index,
        "mapping": list(rep.allocation.mapping),
        "energy": rep.energy,
        "naive_swaps": rep.naive_swaps,
        "success_probability": rep.success_probability,
        "log10_success_probability": rep.log10_success_probability,
    }


def export_run(result: RunResult, output_dir) -> dict[str, Path]:
    """Write the five run artefacts into ``output_dir`` and return their paths."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    paths = {
        "best": out / "best_allocation.json",
        "samples": out / "samples.csv",
        "heatmap": out / "heatmap.csv",
        "histogram": out / "histogram.csv",
        "meta": out / "run_meta.json",
    }
    problem = result.problem

    best = _report_doc(result.best)
    best.update(
        seed=result.config.seed,
        penalty_multiplier=result.final_penalty_multiplier,
        penalties=asdict(result.penalties_used),
        config=result.config.echo(),
        circuit=result.instance.circuit.name,
        device=result.instance.device.name,
    )
    paths["best"].write_text(json.dumps(best, indent=2) + "\n", encoding="utf-8")

    # every read of the final batch, including any dropped by --filter-invalid
    final = result.instance.context.reports(result.sample_set)
    with open(paths["samples"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for rep in final:
            w.writerow(
                [
                    rep.read_index,
                    repr(rep.energy),
                    int(rep.valid),
                    "" if rep.naive_swaps is None else rep.naive_swaps,
                    _num(rep.success_probability),
                    _num(rep.log10_success_probability),
                    " ".join(map(str, rep.allocation.mapping)) if rep.valid else "",
                ]
            )

    with open(paths["heatmap"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("qubit", "low_freq", "mid_freq", "high_freq"))
        valid = [r for r in final if r.valid]
        if len(valid) >= 3:
            bands = heatmap_bands(valid, problem)
            for q in range(problem.n_physical):
                w.writerow((q, repr(float(bands.low[q])), repr(float(bands.mid[q])), repr(float(bands.high[q]))))

    energies = np.array([r.energy for r in final])
    counts, edges = np.histogram(energies, bins=HISTOGRAM_BINS)
    with open(paths["histogram"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin_left", "bin_right", "count"))
        for b in range(HISTOGRAM_BINS):
            w.writerow((repr(float(edges[b])), repr(float(edges[b + 1])), int(counts[b])))

    schedule = result.sample_set.schedule
    meta = {
        "tool_version": __version__,
        "timings_s": result.timings,
        "penalty_multiplier": result.final_penalty_multiplier,
        "penalties": asdict(result.penalties_used),
        "escalation_history": [{"multiplier": m, "invalid_fraction": f} for m, f in result.history],
        "beta_range": [schedule.beta_hot, schedule.beta_cold],
        "num_sweeps": schedule.num_sweeps,
        "num_reads": schedule.num_reads,
        "greedy_finish": schedule.greedy_finish,
        "n_logical": problem.n_logical,
        "n_physical": problem.n_physical,
        "n_quadratic_terms": int(problem.vals.size),
        "filter_invalid": result.config.filter_invalid,
        "filtered_invalid_reads": result.filtered_invalid,
    }
    if result.config.filter_invalid:
        meta["caveat"] = (
            "invalid reads were dropped instead of re-running the batch at a higher penalty; "
            "the surviving reads are not a full sample set"
        )
    paths["meta"].write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return paths
