"""QUBO assembly for qubit allocation.

Variable ``u = i * n_physical + j`` is 1 when logical qubit ``i`` sits on
physical qubit ``j``. Quadratic terms are stored once per unordered pair
``u < v`` in coordinate form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .circuit import InteractionSummary
from .device import DeviceModel, PathFidelityTable, all_pairs_distance

__all__ = [
    "InfeasibleInstance",
    "CoefficientForm",
    "PenaltyConfig",
    "BaseCoefficients",
    "QuboProblem",
    "build_base_coefficients",
    "apply_penalties",
    "base_penalty_magnitude",
    "energy",
    "write_qubo",
    "read_qubo",
]


class InfeasibleInstance(ValueError):
    """More logical qubits than physical qubits."""


@dataclass(frozen=True)
class CoefficientForm:
    """Shape of the cost: ``-ln(p) * gates * distance**distance_exponent``.

    ``include_error=False`` replaces ``-ln(p)`` by 1; ``linear_enabled=False``
    drops the one-qubit-gate terms entirely.
    """

    distance_exponent: int = 3
    include_error: bool = True
    linear_enabled: bool = True

    def __post_init__(self):
        if int(self.distance_exponent) != self.distance_exponent or self.distance_exponent < 1:
            raise ValueError("distance_exponent must be a positive integer")

    @property
    def label(self) -> str:
        tags = [f"d{self.distance_exponent}"]
        if not self.include_error:
            tags.append("noerror")
        if not self.linear_enabled:
            tags.append("nolinear")
        return "-".join(tags)


@dataclass(frozen=True)
class PenaltyConfig:
    phi: float
    theta: float
    gamma: float = 0.0

    def __post_init__(self):
        if min(self.phi, self.theta, self.gamma) < 0:
            raise ValueError("penalty coefficients must be nonnegative")

    def scaled(self, factor: float) -> "PenaltyConfig":
        return PenaltyConfig(self.phi * factor, self.theta * factor, self.gamma * factor)


def _coalesce(n_vars, rows, cols, vals):
    """Sum duplicate ``(u, v)`` entries, drop zeros, return sorted coordinates."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if rows.size == 0:
        return rows, cols, vals
    if np.any(rows >= cols):
        raise ValueError("quadratic keys must satisfy u < v")
    keys, inverse = np.unique(rows * n_vars + cols, return_inverse=True)
    summed = np.bincount(inverse.ravel(), weights=vals, minlength=keys.size)
    keep = summed != 0.0
    keys = keys[keep]
    return keys // n_vars, keys % n_vars, summed[keep]


@dataclass(frozen=True)
class QuboProblem:
    n_logical: int
    n_physical: int
    linear: np.ndarray = field(repr=False)
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)
    offset: float = 0.0
    form: CoefficientForm | None = None
    penalties: PenaltyConfig | None = None

    @classmethod
    def from_terms(cls, n_logical, n_physical, linear, quadratic, offset=0.0, **kw) -> "QuboProblem":
        """Build from a ``{(u, v): coeff}`` map; keys in either order are folded onto ``u < v``."""
        n = n_logical * n_physical
        keys = [(min(u, v), max(u, v)) for u, v in quadratic]
        if any(u == v for u, v in keys):
            raise ValueError("self-pairs belong in the linear vector")
        rows = [u for u, _ in keys]
        cols = [v for _, v in keys]
        r, c, w = _coalesce(n, rows, cols, list(quadratic.values()))
        lin = np.asarray(linear, dtype=float).copy()
        if lin.shape != (n,):
            raise ValueError(f"linear vector must have length {n}")
        return cls(n_logical, n_physical, lin, r, c, w, float(offset), **kw)

    @property
    def n_variables(self) -> int:
        return self.n_logical * self.n_physical

    def index(self, logical: int, physical: int) -> int:
        return logical * self.n_physical + physical

    def unindex(self, u: int) -> tuple[int, int]:
        return divmod(u, self.n_physical)

    @property
    def quadratic(self) -> dict[tuple[int, int], float]:
        return {(int(u), int(v)): float(w) for u, v, w in zip(self.rows, self.cols, self.vals)}

    @cached_property
    def neighbors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric CSR view ``(indptr, indices, weights)`` of the quadratic terms."""
        n = self.n_variables
        src = np.concatenate([self.rows, self.cols])
        dst = np.concatenate([self.cols, self.rows])
        w = np.concatenate([self.vals, self.vals])
        order = np.lexsort((dst, src))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return indptr, dst[order].astype(np.int64), w[order].astype(float)

    def max_abs_coefficient(self) -> float:
        parts = [np.abs(self.linear), np.abs(self.vals)]
        return float(max((p.max() for p in parts if p.size), default=0.0))

    def scaled(self, factor: float) -> "QuboProblem":
        return replace(
            self,
            linear=self.linear * factor,
            vals=self.vals * factor,
            offset=self.offset * factor,
            penalties=None if self.penalties is None else self.penalties.scaled(factor),
        )


@dataclass(frozen=True)
class BaseCoefficients:
    """Cost terms before any constraint penalty is added."""

    n_logical: int
    n_physical: int
    linear: np.ndarray = field(repr=False)
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)
    form: CoefficientForm = CoefficientForm()

    def as_problem(self) -> QuboProblem:
        return QuboProblem(
            self.n_logical, self.n_physical, self.linear, self.rows, self.cols, self.vals, 0.0, self.form, None
        )


def build_base_coefficients(
    summary: InteractionSummary,
    device: DeviceModel,
    fidelities: PathFidelityTable,
    form: CoefficientForm = CoefficientForm(),
    distances: np.ndarray | None = None,
) -> BaseCoefficients:
    n_c, n_p = summary.n_qubits, device.n_qubits
    if n_c > n_p:
        raise InfeasibleInstance(f"circuit needs {n_c} qubits but {device.name or 'device'} has {n_p}")
    d = all_pairs_distance(device) if distances is None else distances
    n = n_c * n_p

    if form.linear_enabled:
        err1 = -np.log(device.p_single) if form.include_error else np.ones(n_p)
        linear = np.outer(summary.g_single.astype(float), err1).ravel()
    else:
        linear = np.zeros(n)

    err2 = -np.log(fidelities.p_pair) if form.include_error else np.ones((n_p, n_p))
    weight = err2 * d.astype(float) ** form.distance_exponent
    np.fill_diagonal(weight, 0.0)
    jj, ll = np.meshgrid(np.arange(n_p), np.arange(n_p), indexing="ij")
    jj, ll, wflat = jj.ravel(), ll.ravel(), weight.ravel()
    rows, cols, vals = [], [], []
    for i, k, g in summary.pairs():
        # ordered terms (ij, kl) and (kl, ij) fold onto one stored entry
        rows.append(i * n_p + jj)
        cols.append(k * n_p + ll)
        vals.append(2.0 * g * wflat)
    if rows:
        r, c, w = _coalesce(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    else:
        r = c = np.zeros(0, dtype=np.int64)
        w = np.zeros(0)
    return BaseCoefficients(n_c, n_p, linear, r, c, w, form)


def base_penalty_magnitude(base: BaseCoefficients) -> float:
    """Largest absolute base coefficient, or 1.0 when every coefficient is zero."""
    m = base.as_problem().max_abs_coefficient()
    return m if m > 0 else 1.0


def apply_penalties(base: BaseCoefficients, penalties: PenaltyConfig) -> QuboProblem:
    """Add the expanded one-hot penalties (and the optional count penalty).

    ``phi * (sum_i x_ij - 1)**2`` per physical qubit and ``theta * (sum_j x_ij - 1)**2``
    per logical qubit, expanded with ``x**2 == x``.
    """
    n_c, n_p = base.n_logical, base.n_physical
    n = n_c * n_p
    phi, theta, gamma = penalties.phi, penalties.theta, penalties.gamma
    grid = np.arange(n).reshape(n_c, n_p)

    rows, cols, vals = [base.rows], [base.cols], [base.vals]
    if phi:
        iu, ku = np.triu_indices(n_c, 1)
        r = grid[iu, :].ravel()
        c = grid[ku, :].ravel()
        rows.append(r)
        cols.append(c)
        vals.append(np.full(r.size, 2.0 * phi))
    if theta:
        ju, lu = np.triu_indices(n_p, 1)
        r = grid[:, ju].ravel()
        c = grid[:, lu].ravel()
        rows.append(r)
        cols.append(c)
        vals.append(np.full(r.size, 2.0 * theta))
    if gamma:
        r, c = np.triu_indices(n, 1)
        rows.append(r)
        cols.append(c)
        vals.append(np.full(r.size, 2.0 * gamma))
    r, c, w = _coalesce(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))

    linear = base.linear - (phi + theta) + gamma * (1 - 2 * n_c)
    offset = phi * n_p + theta * n_c + gamma * n_c**2
    return QuboProblem(n_c, n_p, linear, r, c, w, float(offset), base.form, penalties)


def energy(problem: QuboProblem, state) -> float:
    x = np.asarray(state, dtype=float)
    if x.shape != (problem.n_variables,):
        raise ValueError(f"state has length {x.size}, expected {problem.n_variables}")
    quad = float(np.dot(problem.vals, x[problem.rows] * x[problem.cols])) if problem.vals.size else 0.0
    return problem.offset + float(np.dot(problem.linear, x)) + quad


def write_qubo(problem: QuboProblem, path) -> None:
    """Plain-text export: header comments, then ``u v coeff`` lines (linear as ``u u coeff``)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n_logical {problem.n_logical} n_physical {problem.n_physical}\n")
        fh.write(f"# offset {problem.offset!r}\n")
        for u, b in enumerate(problem.linear):
            if b != 0.0:
                fh.write(f"{u} {u} {float(b)!r}\n")
        for u, v, w in zip(problem.rows.tolist(), problem.cols.tolist(), problem.vals.tolist()):
            fh.write(f"{u} {v} {w!r}\n")


_HEADER_DIMS = re.compile(r"#\s*n_logical\s+(\d+)\s+n_physical\s+(\d+)")
_HEADER_OFFSET = re.compile(r"#\s*offset\s+(\S+)")


def read_qubo(path) -> QuboProblem:
    dims = offset = None
    linear_terms: dict[int, float] = {}
    quad: dict[tuple[int, int], float] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if m := _HEADER_DIMS.match(line):
                    dims = int(m.group(1)), int(m.group(2))
                elif m := _HEADER_OFFSET.match(line):
                    offset = float(m.group(1))
                continue
            u, v, w = line.split()
            u, v = int(u), int(v)
            if u == v:
                linear_terms[u] = linear_terms.get(u, 0.0) + float(w)
            else:
                key = (min(u, v), max(u, v))
                quad[key] = quad.get(key, 0.0) + float(w)
    if dims is None or offset is None:
        raise ValueError(f"{path}: missing n_logical/n_physical or offset header")
    linear = np.zeros(dims[0] * dims[1])
    for u, b in linear_terms.items():
        linear[u] = b
    return QuboProblem.from_terms(dims[0], dims[1], linear, quad, offset)
