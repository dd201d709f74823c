"""``alloc`` command line.

Exit codes: 0 success, 2 input error, 3 penalty escalation exhausted.
Every option can also come from ``--config FILE`` (TOML or JSON, keys named
after the long options with dashes or underscores); options on the command
line win over the file.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .circuit import QasmError, load_qasm
from .device import DeviceError, load_device_file
from .pipeline import (
    ConfigError,
    EscalationExhausted,
    RunConfig,
    allocate_with_escalation,
    compare_forms,
    export_run,
    prepare_instance,
)
from .qubo import PenaltyConfig, apply_penalties, base_penalty_magnitude, write_qubo

log = logging.getLogger("quboalloc")

EXIT_INPUT = 2
EXIT_ESCALATION = 3

_SWAP_MODES = {"roundtrip": "round_trip", "oneway": "one_way"}
_METRICS = {"energy": "energy", "swaps": "naive_swaps", "success": "success_probability"}


def _read_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        doc = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        doc = tomllib.loads(text)
    if not isinstance(doc, dict):
        raise click.BadParameter("config file must hold a table/object", param_hint="--config")
    return {str(k).replace("-", "_"): v for k, v in doc.items()}


def _load_config(ctx: click.Context, param, value):
    if value is None:
        return value
    try:
        values = _read_config_file(value)
    except (OSError, ValueError) as exc:
        raise click.BadParameter(str(exc), param_hint="--config") from None
    # flag pairs like --error-term/--no-error-term take the bool under the positive name
    ctx.default_map = {**(ctx.default_map or {}), **values}
    return value


def _shared_options(fn):
    options = [
        click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
                     is_eager=True, expose_value=False, help="TOML or JSON file with option defaults."),
        click.option("--circuit", "circuit", required=True, type=click.Path(dir_okay=False),
                     help="OpenQASM 2.0 circuit."),
        click.option("--device", "device", required=True,
                     help="Device JSON file or builtin name (melbourne, aspen4, sycamore53)."),
        click.option("--swap-mode", type=click.Choice(sorted(_SWAP_MODES)), default="roundtrip", show_default=True),
        click.option("--reads", type=click.IntRange(min=1), default=1000, show_default=True),
        click.option("--sweeps", type=click.IntRange(min=1), default=1000, show_default=True),
        click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True),
        click.option("--metric", type=click.Choice(sorted(_METRICS)), default="swaps", show_default=True,
                     help="Selection metric for the best allocation."),
        click.option("--max-penalty-mult", type=int, default=10, show_default=True),
        click.option("--gamma", type=click.FloatRange(min=0), default=0.0, show_default=True,
                     help="Count-penalty weight as a fraction of phi (0 = off)."),
        click.option("--filter-invalid/--no-filter-invalid", default=False, show_default=True,
                     help="Drop invalid reads instead of re-running at a higher penalty."),
        click.option("--drop-idle-qubits/--keep-idle-qubits", default=False, show_default=True,
                     help="Relabel the circuit onto the qubits that carry gates."),
        click.option("--greedy-finish/--no-greedy-finish", default=True, show_default=True,
                     help="End each read with strictly downhill single flips."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _form_options(fn):
    fn = click.option("--linear-term/--no-linear-term", default=True, show_default=True)(fn)
    fn = click.option("--error-term/--no-error-term", default=True, show_default=True)(fn)
    fn = click.option("--dist-exp", type=click.IntRange(min=1), default=3, show_default=True)(fn)
    return fn


def _make_config(opts: dict, **form) -> RunConfig:
    if opts["max_penalty_mult"] < 1:
        raise ConfigError("--max-penalty-mult must be at least 1")
    return RunConfig(
        circuit_path=opts["circuit"],
        device_path=opts["device"],
        swap_mode=_SWAP_MODES[opts["swap_mode"]],
        num_reads=opts["reads"],
        num_sweeps=opts["sweeps"],
        seed=opts["seed"],
        penalty_multiplier_max=opts["max_penalty_mult"],
        selection_metric=_METRICS[opts["metric"]],
        gamma=opts["gamma"],
        filter_invalid=opts["filter_invalid"],
        drop_idle_qubits=opts["drop_idle_qubits"],
        greedy_finish=opts["greedy_finish"],
        output_dir=opts.get("out"),
        **form,
    )


_ESCALATION_HINT = (
    "hint: logical qubits with little or no cost (idle qubits, near-perfect calibration) "
    "tie with over-assigned rows; try --gamma 0.1 or --drop-idle-qubits"
)


def _exhausted(exc: EscalationExhausted, config: RunConfig):
    message = str(exc)
    if config.gamma == 0:
        message += "\n" + _ESCALATION_HINT
    _fail(message, EXIT_ESCALATION)


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_pair(config: RunConfig):
    try:
        circuit = load_qasm(config.circuit_path)
        if config.drop_idle_qubits:
            circuit = circuit.compact()
        return circuit, load_device_file(config.device_path)
    except FileNotFoundError as exc:
        _fail(str(exc), EXIT_INPUT)
    except (QasmError, DeviceError) as exc:
        _fail(str(exc), EXIT_INPUT)


@click.group()
@click.version_option(__version__, prog_name="alloc")
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def cli(verbose):
    """Qubit allocation via QUBO + simulated annealing."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@_shared_options
@_form_options
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
def run(dist_exp, error_term, linear_term, **opts):
    """Allocate one circuit and write the run artefacts to --out."""
    try:
        config = _make_config(opts, distance_exponent=dist_exp, include_error=error_term,
                              linear_enabled=linear_term)
    except ConfigError as exc:
        _fail(str(exc), EXIT_INPUT)
    circuit, device = _load_pair(config)
    try:
        result = allocate_with_escalation(config, circuit, device)
    except ConfigError as exc:
        _fail(str(exc), EXIT_INPUT)
    except EscalationExhausted as exc:
        _exhausted(exc, config)
    try:
        paths = export_run(result, opts["out"])
    except (ConfigError, OSError) as exc:
        _fail(str(exc), EXIT_INPUT)

    best = result.best
    log.info("timings: %s", result.timings)
    click.echo(f"circuit      {circuit.name} ({circuit.n_qubits} qubits, "
               f"{circuit.n_single} 1q + {circuit.n_two} cx)")
    click.echo(f"device       {device.name} ({device.n_qubits} qubits)")
    click.echo(f"multiplier   {result.final_penalty_multiplier}")
    click.echo(f"mapping      {' '.join(map(str, best.allocation.mapping))}")
    click.echo(f"energy       {best.energy!r}")
    click.echo(f"naive swaps  {best.naive_swaps}")
    click.echo(f"log10 P      {best.log10_success_probability:.6g}")
    click.echo(f"written      {', '.join(p.name for p in paths.values())}")


def _parse_form(text: str) -> dict:
    """``3`` or ``2:noerror`` or ``1:nolinear:noerror``."""
    head, *flags = text.split(":")
    try:
        exp = int(head.lstrip("d"))
    except ValueError:
        raise click.BadParameter(f"bad form {text!r}", param_hint="--form") from None
    unknown = set(flags) - {"noerror", "nolinear"}
    if unknown or exp < 1:
        raise click.BadParameter(f"bad form {text!r}", param_hint="--form")
    return {"distance_exponent": exp, "include_error": "noerror" not in flags,
            "linear_enabled": "nolinear" not in flags}


@cli.command("compare-forms")
@_shared_options
@click.option("--form", "forms", multiple=True, default=("1", "2"), show_default=True,
              help="Coefficient form: distance exponent with optional ':noerror' / ':nolinear'. Repeat.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the table as CSV.")
def compare_forms_cmd(forms, **opts):
    """Run several coefficient forms on one circuit and compare naive SWAP averages."""
    parsed = [_parse_form(f) for f in forms]
    try:
        configs = [_make_config({**opts, "out": None}, **f) for f in parsed]
        circuit, device = _load_pair(configs[0])
        table = compare_forms(configs, circuit, device)
    except ConfigError as exc:
        _fail(str(exc), EXIT_INPUT)
    except EscalationExhausted as exc:
        _exhausted(exc, configs[0])
    rows = list(table.rows())
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerows(rows)
    if opts.get("out"):
        with open(opts["out"], "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)


@cli.command("export-qubo")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False)
@click.option("--circuit", required=True, type=click.Path(dir_okay=False))
@click.option("--device", required=True)
@click.option("--swap-mode", type=click.Choice(sorted(_SWAP_MODES)), default="roundtrip", show_default=True)
@click.option("--penalty-mult", type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True)
@click.option("--gamma", type=click.FloatRange(min=0), default=0.0, show_default=True)
@_form_options
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def export_qubo(circuit, device, swap_mode, penalty_mult, gamma, dist_exp, error_term, linear_term, out):
    """Write the penalised QUBO as 'u v coeff' lines for external solvers."""
    try:
        config = RunConfig(circuit, device, dist_exp, error_term, linear_term, _SWAP_MODES[swap_mode])
    except ConfigError as exc:
        _fail(str(exc), EXIT_INPUT)
    circ, dev = _load_pair(config)
    try:
        instance = prepare_instance(circ, dev, config.form, config.swap_mode)
    except ValueError as exc:
        _fail(str(exc), EXIT_INPUT)
    strength = penalty_mult * base_penalty_magnitude(instance.base)
    problem = apply_penalties(instance.base, PenaltyConfig(strength, strength, gamma * strength))
    write_qubo(problem, out)
    click.echo(f"wrote {problem.n_variables} variables, {problem.vals.size} quadratic terms to {out}")


def main(argv=None):
    cli.main(args=argv, prog_name="alloc")


if __name__ == "__main__":
    main()
