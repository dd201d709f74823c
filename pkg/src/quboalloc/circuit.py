"""Restricted OpenQASM 2.0 reader and gate-count statistics.

Accepted subset::

    program   := [ "OPENQASM 2.0;" ] statement*
    statement := "include" STRING ";"
               | ("qreg" | "creg") ID "[" INT "]" ";"
               | GATE [ "(" expr { "," expr } ")" ] arg { "," arg } ";"
               | "measure" arg "->" arg ";"
               | "barrier" arg { "," arg } ";"
    arg       := ID [ "[" INT "]" ]
    GATE      := u1 | u2 | u3 | rx | ry | rz | h | x | y | z | s | sdg | t | tdg | cx

Whole-register arguments broadcast the same way qelib1 does. ``measure`` and
``barrier`` are validated and then dropped.
"""

from __future__ import annotations

import ast
import bisect
import math
import operator
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QasmError",
    "QasmSyntaxError",
    "QasmBasisError",
    "Gate",
    "QuantumCircuit",
    "InteractionSummary",
    "SINGLE_QUBIT_GATES",
    "TWO_QUBIT_GATES",
    "parse_qasm",
    "load_qasm",
    "render_qasm",
    "interaction_summary",
]

SINGLE_QUBIT_GATES = frozenset(
    {"u1", "u2", "u3", "rx", "ry", "rz", "h", "x", "y", "z", "s", "sdg", "t", "tdg"}
)
TWO_QUBIT_GATES = frozenset({"cx"})

# gates that are valid OpenQASM/qelib1 but outside the allocation basis
_WIDE_GATES = {"ccx": 3, "cswap": 3, "rccx": 3, "rc3x": 4, "c3x": 4, "c3sqrtx": 4, "c4x": 5}
_OTHER_TWO_QUBIT = {"cy", "cz", "ch", "swap", "crx", "cry", "crz", "cu1", "cu3", "rxx", "rzz", "cp", "cu"}

_PARAM_ARITY = {"u1": 1, "u2": 2, "u3": 3, "rx": 1, "ry": 1, "rz": 1}


class QasmError(ValueError):
    """Raised for any input the reader refuses."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


class QasmSyntaxError(QasmError):
    pass


class QasmBasisError(QasmError):
    pass


@dataclass(frozen=True)
class Gate:
    name: str
    operands: tuple[int, ...]
    parameters: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.operands) not in (1, 2):
            raise ValueError(f"gate {self.name} has {len(self.operands)} operands")
        if len(self.operands) == 2 and self.operands[0] == self.operands[1]:
            raise ValueError(f"gate {self.name} repeats operand {self.operands[0]}")


@dataclass(frozen=True)
class QuantumCircuit:
    n_qubits: int
    gates: tuple[Gate, ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        for g in self.gates:
            for q in g.operands:
                if not 0 <= q < self.n_qubits:
                    raise ValueError(f"operand {q} of {g.name} outside [0, {self.n_qubits})")

    @property
    def n_single(self) -> int:
        return sum(1 for g in self.gates if len(g.operands) == 1)

    @property
    def n_two(self) -> int:
        return sum(1 for g in self.gates if len(g.operands) == 2)

    def compact(self) -> "QuantumCircuit":
        """Relabel onto the qubits that carry at least one gate, keeping their order.

        Benchmark files often declare a device-wide register; this recovers the
        circuit's own width. A no-op when every qubit is used.
        """
        used = sorted({q for g in self.gates for q in g.operands})
        if len(used) == self.n_qubits or not used:
            return self
        relabel = {q: r for r, q in enumerate(used)}
        gates = tuple(Gate(g.name, tuple(relabel[q] for q in g.operands), g.parameters) for g in self.gates)
        return QuantumCircuit(len(used), gates, self.name)


@dataclass(frozen=True)
class InteractionSummary:
    """Per-qubit one-qubit gate counts and symmetric two-qubit gate counts."""

    g_single: np.ndarray
    g_pair: np.ndarray = field(repr=False)

    @property
    def n_qubits(self) -> int:
        return int(self.g_single.shape[0])

    def pairs(self):
        """Yield ``(i, k, count)`` for every interacting pair with ``i < k``."""
        ii, kk = np.nonzero(np.triu(self.g_pair, 1))
        for i, k in zip(ii.tolist(), kk.tolist()):
            yield i, k, int(self.g_pair[i, k])


def interaction_summary(circuit: QuantumCircuit) -> InteractionSummary:
    n = circuit.n_qubits
    g_single = np.zeros(n, dtype=np.int64)
    g_pair = np.zeros((n, n), dtype=np.int64)
    for g in circuit.gates:
        if len(g.operands) == 1:
            g_single[g.operands[0]] += 1
        else:
            i, k = g.operands
            g_pair[i, k] += 1
            g_pair[k, i] += 1
    g_single.setflags(write=False)
    g_pair.setflags(write=False)
    return InteractionSummary(g_single, g_pair)


# ---------------------------------------------------------------------------
# parameter expressions

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp, "ln": math.log, "sqrt": math.sqrt}


def _eval_expr(node: ast.AST) -> float:
    if isinstance(node, ast.Expression):
        return _eval_expr(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_expr(node.left), _eval_expr(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval_expr(node.operand))
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in _FUNCS
        and len(node.args) == 1
    ):
        return _FUNCS[node.func.id](_eval_expr(node.args[0]))
    raise ValueError("unsupported expression")


def _parse_param(text: str) -> float:
    src = text.strip().replace("^", "**")
    try:
        return _eval_expr(ast.parse(src, mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError) as exc:
        raise ValueError(f"bad parameter expression {text.strip()!r}") from exc


# ---------------------------------------------------------------------------
# statement reader

_COMMENT = re.compile(r"//[^\n]*")
_HEADER = re.compile(r"OPENQASM\s+(\S+)$")
_INCLUDE = re.compile(r'include\s+"[^"]*"$')
_REG = re.compile(r"(qreg|creg)\s+([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")
_GATE = re.compile(r"([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*(.*)$", re.S)
_ARG = re.compile(r"([A-Za-z_]\w*)\s*(?:\[\s*(\d+)\s*\])?$")


def _statements(text: str):
    """Yield ``(statement, line, column)`` for every ``;``-terminated statement."""
    clean = _COMMENT.sub(lambda m: " " * len(m.group()), text)
    line_starts = [0] + [m.end() for m in re.finditer("\n", clean)]

    def locate(offset):
        row = bisect.bisect_right(line_starts, offset) - 1
        return row + 1, offset - line_starts[row] + 1

    start = 0
    for m in re.finditer(";", clean):
        chunk = clean[start : m.start()]
        stripped = chunk.strip()
        if stripped:
            lead = len(chunk) - len(chunk.lstrip())
            yield (stripped, *locate(start + lead))
        start = m.end()
    tail = clean[start:]
    if tail.strip():
        lead = len(tail) - len(tail.lstrip())
        line, col = locate(start + lead)
        raise QasmSyntaxError("statement is missing a terminating ';'", line, col)


class _Registers:
    def __init__(self):
        self.quantum: dict[str, tuple[int, int]] = {}
        self.classical: dict[str, int] = {}
        self.n_qubits = 0

    def declare(self, kind, name, size, line, col):
        if name in self.quantum or name in self.classical:
            raise QasmSyntaxError(f"register {name!r} declared twice", line, col)
        if size < 1:
            raise QasmSyntaxError(f"register {name!r} must have positive size", line, col)
        if kind == "qreg":
            self.quantum[name] = (self.n_qubits, size)
            self.n_qubits += size
        else:
            self.classical[name] = size

    def qubits(self, arg, line, col) -> list[int]:
        m = _ARG.match(arg.strip())
        if not m:
            raise QasmSyntaxError(f"cannot read qubit argument {arg.strip()!r}", line, col)
        name, index = m.group(1), m.group(2)
        if name not in self.quantum:
            raise QasmSyntaxError(f"unknown quantum register {name!r}", line, col)
        offset, size = self.quantum[name]
        if index is None:
            return list(range(offset, offset + size))
        idx = int(index)
        if idx >= size:
            raise QasmSyntaxError(f"index {idx} out of range for {name}[{size}]", line, col)
        return [offset + idx]

    def check_clbits(self, arg, line, col) -> int:
        m = _ARG.match(arg.strip())
        if not m or m.group(1) not in self.classical:
            raise QasmSyntaxError(f"unknown classical argument {arg.strip()!r}", line, col)
        size = self.classical[m.group(1)]
        if m.group(2) is None:
            return size
        if int(m.group(2)) >= size:
            raise QasmSyntaxError(f"index {m.group(2)} out of range for {m.group(1)}[{size}]", line, col)
        return 1


def _split_args(text: str) -> list[str]:
    parts = text.split(",")
    if any(not p.strip() for p in parts):
        raise ValueError("empty argument")
    return parts


def _broadcast(groups: list[list[int]], name, line, col) -> list[tuple[int, ...]]:
    sizes = {len(g) for g in groups if len(g) > 1}
    if len(sizes) > 1:
        raise QasmSyntaxError(f"register size mismatch in {name}", line, col)
    width = sizes.pop() if sizes else 1
    return [tuple(g[r] if len(g) > 1 else g[0] for g in groups) for r in range(width)]


def parse_qasm(text: str, name: str = "") -> QuantumCircuit:
    """Parse restricted OpenQASM 2.0 into a :class:`QuantumCircuit`.

    Raises:
        QasmSyntaxError: malformed statements or out-of-range operands.
        QasmBasisError: gates outside the one-qubit + CX basis.
    """
    regs = _Registers()
    gates: list[Gate] = []
    first = True
    for stmt, line, col in _statements(text):
        head = _HEADER.match(stmt)
        if head:
            if not first:
                raise QasmSyntaxError("OPENQASM header must come first", line, col)
            if head.group(1) != "2.0":
                raise QasmSyntaxError(f"unsupported OpenQASM version {head.group(1)}", line, col)
            first = False
            continue
        first = False
        if _INCLUDE.match(stmt):
            continue
        m = _REG.match(stmt)
        if m:
            regs.declare(m.group(1), m.group(2), int(m.group(3)), line, col)
            continue
        keyword = stmt.split(None, 1)[0].split("(", 1)[0]
        if keyword in ("gate", "opaque", "if", "reset"):
            raise QasmSyntaxError(f"'{keyword}' statements are not supported", line, col)
        if keyword == "measure":
            parts = stmt[len("measure") :].split("->")
            if len(parts) != 2:
                raise QasmSyntaxError("measure needs 'qubit -> bit'", line, col)
            nq = len(regs.qubits(parts[0], line, col))
            nc = regs.check_clbits(parts[1], line, col)
            if nq != nc:
                raise QasmSyntaxError("measure register sizes differ", line, col)
            continue
        if keyword == "barrier":
            try:
                args = _split_args(stmt[len("barrier") :])
            except ValueError:
                raise QasmSyntaxError("malformed barrier arguments", line, col) from None
            for a in args:
                regs.qubits(a, line, col)
            continue

        m = _GATE.match(stmt)
        if not m or not m.group(3).strip():
            raise QasmSyntaxError(f"cannot parse statement {stmt!r}", line, col)
        gname, params_text, args_text = m.group(1), m.group(2), m.group(3)
        if gname in _WIDE_GATES:
            raise QasmBasisError(
                f"gate {gname!r} acts on {_WIDE_GATES[gname]} qubits; decompose the circuit to "
                "one-qubit gates and cx before allocation",
                line,
                col,
            )
        if gname in _OTHER_TWO_QUBIT:
            raise QasmBasisError(
                f"gate {gname!r} is outside the one-qubit + cx basis; decompose it to cx first",
                line,
                col,
            )
        if gname not in SINGLE_QUBIT_GATES and gname not in TWO_QUBIT_GATES:
            raise QasmBasisError(f"unknown gate {gname!r}", line, col)
        params: tuple[float, ...] = ()
        if params_text is not None and params_text.strip():
            try:
                params = tuple(_parse_param(p) for p in _split_args(params_text))
            except ValueError as exc:
                raise QasmSyntaxError(str(exc), line, col) from None
        if len(params) != _PARAM_ARITY.get(gname, 0):
            raise QasmSyntaxError(
                f"gate {gname!r} takes {_PARAM_ARITY.get(gname, 0)} parameter(s), got {len(params)}",
                line,
                col,
            )
        try:
            args = _split_args(args_text)
        except ValueError:
            raise QasmSyntaxError("malformed gate arguments", line, col) from None
        arity = 1 if gname in SINGLE_QUBIT_GATES else 2
        if len(args) != arity:
            raise QasmSyntaxError(f"gate {gname!r} takes {arity} argument(s), got {len(args)}", line, col)
        for ops in _broadcast([regs.qubits(a, line, col) for a in args], gname, line, col):
            if len(set(ops)) != len(ops):
                raise QasmSyntaxError(f"gate {gname!r} repeats operand {ops[0]}", line, col)
            gates.append(Gate(gname, ops, params))

    if regs.n_qubits == 0:
        raise QasmSyntaxError("no qreg declared")
    return QuantumCircuit(regs.n_qubits, tuple(gates), name)


def load_qasm(path) -> QuantumCircuit:
    from pathlib import Path

    p = Path(path)
    return parse_qasm(p.read_text(encoding="utf-8"), name=p.stem)


def render_qasm(circuit: QuantumCircuit) -> str:
    """Canonical text for a circuit: one flat ``q`` register, one gate per line."""
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{circuit.n_qubits}];"]
    for g in circuit.gates:
        params = f"({','.join(repr(p) for p in g.parameters)})" if g.parameters else ""
        args = ",".join(f"q[{q}]" for q in g.operands)
        lines.append(f"{g.name}{params} {args};")
    return "\n".join(lines) + "\n"
