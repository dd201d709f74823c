import csv
import json
import math

import numpy as np
import pytest

from quboalloc import __version__
from quboalloc.analysis import decode
from quboalloc.circuit import Gate, QuantumCircuit, render_qasm
from quboalloc.device import DeviceModel, builtin_device
from quboalloc.pipeline import (
    ConfigError,
    EscalationExhausted,
    RunConfig,
    allocate_with_escalation,
    compare_forms,
    export_run,
    percentage_difference,
)
from quboalloc.qubo import PenaltyConfig, apply_penalties, energy
from quboalloc.synthetic import random_circuit

MELBOURNE = builtin_device("melbourne")


@pytest.fixture(scope="module")
def small_circuit():
    return random_circuit(5, 120, seed=4, name="five")


@pytest.fixture(scope="module")
def small_run(small_circuit):
    return allocate_with_escalation(RunConfig(num_reads=60, num_sweeps=200, seed=7), small_circuit, MELBOURNE)


def test_single_logical_qubit_terminates_at_one():
    circ = QuantumCircuit(1, (Gate("h", (0,)), Gate("x", (0,))))
    r = allocate_with_escalation(RunConfig(num_reads=50, num_sweeps=100), circ, MELBOURNE)
    assert r.final_penalty_multiplier == 1
    assert all(rep.valid for rep in r.reports)
    # the best single qubit on the device is the natural pick
    assert r.best.allocation.mapping == (int(np.argmax(MELBOURNE.p_single)),)


def test_escalation_soundness(small_run):
    assert small_run.final_penalty_multiplier <= 3
    assert len(small_run.reports) == 60
    assert all(rep.valid for rep in small_run.reports)
    for rep in small_run.reports:
        state = small_run.sample_set[rep.read_index].state
        assert decode(state, 5, 15) == rep.allocation
        assert rep.energy == energy(small_run.problem, state)
    assert set(small_run.timings) == {"load", "build", "anneal", "analyze"}


def test_reports_ranked_by_metric(small_run):
    keys = [(r.naive_swaps, r.energy, r.read_index) for r in small_run.reports]
    assert keys == sorted(keys)
    assert small_run.best is small_run.reports[0]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(penalty_multiplier_max=0),
        dict(num_reads=0),
        dict(distance_exponent=0),
        dict(seed=-1),
        dict(gamma=-0.5),
        dict(swap_mode="teleport"),
        dict(selection_metric="depth"),
    ],
)
def test_config_errors(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


def test_missing_inputs_and_infeasible(tmp_path):
    with pytest.raises(ConfigError):
        allocate_with_escalation(RunConfig(), device=MELBOURNE)
    with pytest.raises(ConfigError, match="does not exist"):
        allocate_with_escalation(RunConfig(circuit_path=str(tmp_path / "nope.qasm")), device=MELBOURNE)
    tiny = DeviceModel.build(2, [(0, 1)])
    with pytest.raises(ConfigError):
        allocate_with_escalation(RunConfig(num_reads=5, num_sweeps=5), QuantumCircuit(3), tiny)


def test_escalation_exhausted_reports_history():
    circ = random_circuit(7, 500, seed=11)
    with pytest.raises(EscalationExhausted) as err:
        cfg = RunConfig(num_reads=50, num_sweeps=1, penalty_multiplier_max=2, greedy_finish=False)
        allocate_with_escalation(cfg, circ, MELBOURNE)
    assert [m for m, _ in err.value.history] == [1, 2]
    assert all(0 < frac <= 1 for _, frac in err.value.history)
    assert "invalid" in str(err.value)


def test_filter_invalid_keeps_partial_batch(tmp_path):
    circ = random_circuit(7, 500, seed=11)
    cfg = RunConfig(num_reads=100, num_sweeps=2, filter_invalid=True, greedy_finish=False)
    r = allocate_with_escalation(cfg, circ, MELBOURNE)
    assert r.filtered_invalid > 0
    assert len(r.reports) == 100 - r.filtered_invalid
    assert all(rep.valid for rep in r.reports)
    paths = export_run(r, tmp_path)
    meta = json.loads(paths["meta"].read_text())
    assert meta["filtered_invalid_reads"] == r.filtered_invalid
    assert "caveat" in meta
    with open(paths["samples"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 100
    assert sum(row["valid"] == "0" for row in rows) == r.filtered_invalid


def test_greedy_finish_repairs_short_runs():
    circ = random_circuit(7, 500, seed=11)
    r = allocate_with_escalation(RunConfig(num_reads=50, num_sweeps=1), circ, MELBOURNE)
    assert r.final_penalty_multiplier == 1 and len(r.reports) == 50


def test_zero_cost_rows_are_degenerate_without_gamma():
    # with phi == theta a second bit in a row costs no penalty, so a row
    # with no base cost has an invalid state tied with every valid one
    perfect = DeviceModel.build(3, [(0, 1), (1, 2)])
    circ = QuantumCircuit(1, (Gate("h", (0,)),))
    r = allocate_with_escalation(RunConfig(num_reads=20, num_sweeps=50, gamma=0.5), circ, perfect)
    assert r.final_penalty_multiplier == 1
    p0 = apply_penalties(r.instance.base, PenaltyConfig(1.0, 1.0))
    assert energy(p0, [1, 0, 0]) == energy(p0, [1, 1, 0])
    assert energy(r.problem, [1, 0, 0]) < energy(r.problem, [1, 1, 0])
    with pytest.raises(EscalationExhausted):
        allocate_with_escalation(RunConfig(num_reads=100, num_sweeps=50, penalty_multiplier_max=2), circ, perfect)


def test_config_paths_idle_qubits(tmp_path):
    circ = QuantumCircuit(4, (Gate("cx", (0, 3)), Gate("h", (3,))), name="gappy")
    path = tmp_path / "gappy.qasm"
    path.write_text(render_qasm(circ))
    cfg = RunConfig(circuit_path=str(path), device_path="melbourne", num_reads=50, num_sweeps=100)
    compact = RunConfig(**{**cfg.echo(), "drop_idle_qubits": True})
    assert allocate_with_escalation(compact).problem.n_logical == 2
    counted = RunConfig(**{**cfg.echo(), "gamma": 0.1})
    r = allocate_with_escalation(counted)
    assert r.problem.n_logical == 4 and all(rep.valid for rep in r.reports)
    with pytest.raises(EscalationExhausted):
        allocate_with_escalation(RunConfig(**{**cfg.echo(), "penalty_multiplier_max": 2}))


# form comparison


def test_percentage_difference():
    assert percentage_difference(10, 10) == 0.0
    assert percentage_difference(0, 0) == 0.0
    assert percentage_difference(10, 5) == pytest.approx(-100 * 5 / 7.5)
    assert percentage_difference(5, 10) == -percentage_difference(10, 5)


def test_compare_identical_forms_is_exactly_zero(small_circuit):
    cfg = RunConfig(num_reads=100, num_sweeps=100, seed=3)
    table = compare_forms([cfg, cfg], small_circuit, MELBOURNE)
    assert [f.label for f in table.forms] == ["d3", "d3#2"]
    (c,) = table.comparisons
    for v in (c.swaps_all_pct, c.swaps_top1_pct, c.success_pct, c.swaps_all_rel, c.swaps_top1_rel, c.success_rel):
        assert v == 0.0


def test_compare_top1_ceiling_and_table(small_circuit):
    cfgs = [RunConfig(num_reads=100, num_sweeps=100, seed=3, distance_exponent=k) for k in (1, 2, 3)]
    table = compare_forms(cfgs, small_circuit, MELBOURNE)
    assert len(table.comparisons) == 3
    # 100 valid reads: the top 1% is exactly the single lowest-energy read
    run = allocate_with_escalation(cfgs[0], small_circuit, MELBOURNE)
    lowest = min(run.reports, key=lambda r: (r.energy, r.read_index))
    assert table.forms[0].n_valid == 100
    assert table.forms[0].mean_swaps_top1 == lowest.naive_swaps
    rows = list(table.rows())
    assert rows[1][0] == "label" and rows[2][0] == "d1"
    for c in table.comparisons:
        assert c.swaps_all_pct == percentage_difference(
            *(next(f.mean_swaps for f in table.forms if f.label == lab) for lab in (c.reference, c.candidate))
        )


def test_compare_rejects_mismatched_configs(small_circuit):
    a = RunConfig(num_reads=10, num_sweeps=10, seed=1)
    with pytest.raises(ConfigError, match="seed"):
        compare_forms([a, RunConfig(num_reads=10, num_sweeps=10, seed=2)], small_circuit, MELBOURNE)
    with pytest.raises(ConfigError, match="only in coefficient form"):
        compare_forms([a, RunConfig(num_reads=20, num_sweeps=10, seed=1)], small_circuit, MELBOURNE)
    with pytest.raises(ConfigError):
        compare_forms([a], small_circuit, MELBOURNE)


# export


def test_export_files_are_schema_valid(small_run, tmp_path):
    paths = export_run(small_run, tmp_path / "out")
    assert sorted(p.name for p in paths.values()) == [
        "best_allocation.json", "heatmap.csv", "histogram.csv", "run_meta.json", "samples.csv",
    ]
    best = json.loads(paths["best"].read_text())
    assert best["mapping"] == list(small_run.best.allocation.mapping)
    assert best["seed"] == 7 and best["config"]["num_reads"] == 60
    assert best["naive_swaps"] == small_run.best.naive_swaps
    assert math.isclose(best["log10_success_probability"], small_run.best.log10_success_probability)

    with open(paths["samples"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 60
    assert [int(r["read_index"]) for r in rows] == list(range(60))
    for r in rows:
        assert len(r["mapping"].split()) == 5
        assert 0 <= float(r["success_probability"]) <= 1

    with open(paths["heatmap"]) as fh:
        heat = list(csv.DictReader(fh))
    assert len(heat) == 15
    for band in ("low_freq", "mid_freq", "high_freq"):
        assert sum(float(h[band]) for h in heat) == pytest.approx(5.0)

    with open(paths["histogram"]) as fh:
        hist = list(csv.DictReader(fh))
    assert len(hist) == 50
    assert sum(int(h["count"]) for h in hist) == 60
    energies = [float(r["energy"]) for r in rows]
    assert float(hist[0]["bin_left"]) == min(energies)
    assert float(hist[-1]["bin_right"]) == max(energies)

    meta = json.loads(paths["meta"].read_text())
    assert meta["tool_version"] == __version__
    assert meta["penalty_multiplier"] == small_run.final_penalty_multiplier
    assert set(meta["timings_s"]) == set(small_run.timings)
    assert "caveat" not in meta


def test_export_is_byte_reproducible(small_circuit, tmp_path):
    cfg = RunConfig(num_reads=40, num_sweeps=150, seed=11)
    a = export_run(allocate_with_escalation(cfg, small_circuit, MELBOURNE), tmp_path / "a")
    b = export_run(allocate_with_escalation(cfg, small_circuit, MELBOURNE), tmp_path / "b")
    for key in ("samples", "best", "heatmap", "histogram"):
        assert a[key].read_bytes() == b[key].read_bytes()


def test_export_unwritable_directory(small_run, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError):
        export_run(small_run, blocker / "sub")
