"""Hardware graphs with calibration data, hop distances and SWAP-aware pair fidelities."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

import numpy as np

__all__ = [
    "PROBABILITY_FLOOR",
    "DeviceError",
    "SwapMode",
    "DeviceModel",
    "PathFidelityTable",
    "load_device",
    "load_device_file",
    "builtin_device",
    "BUILTIN_DEVICES",
    "all_pairs_distance",
    "best_shortest_path",
    "pairwise_success",
]

PROBABILITY_FLOOR = 1e-12
BUILTIN_DEVICES = ("melbourne", "aspen4", "sycamore53")


class DeviceError(ValueError):
    pass


class SwapMode(str, Enum):
    ROUND_TRIP = "round_trip"
    ONE_WAY = "one_way"

    @classmethod
    def coerce(cls, value) -> "SwapMode":
        if isinstance(value, cls):
            return value
        text = str(value).lower().replace("-", "_")
        aliases = {"roundtrip": cls.ROUND_TRIP, "oneway": cls.ONE_WAY}
        return aliases.get(text) or cls(text)

    @property
    def swaps_per_hop(self) -> int:
        return 2 if self is SwapMode.ROUND_TRIP else 1


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _clamp(p: float, what: str) -> float:
    if not (isinstance(p, (int, float)) and math.isfinite(p)) or p < 0.0 or p > 1.0:
        raise DeviceError(f"{what}: success probability {p!r} outside (0, 1]")
    return max(float(p), PROBABILITY_FLOOR)


@dataclass(frozen=True)
class DeviceModel:
    n_qubits: int
    edges: tuple[tuple[int, int], ...]
    p_single: np.ndarray = field(repr=False)
    p_cx: dict = field(repr=False)
    name: str = ""

    def __post_init__(self):
        if self.n_qubits < 1:
            raise DeviceError("device needs at least one qubit")
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise DeviceError(f"self-loop on qubit {a}")
            if not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise DeviceError(f"edge ({a}, {b}) outside [0, {self.n_qubits})")
            seen.add(_edge(a, b))
        if len(self.p_single) != self.n_qubits:
            raise DeviceError("p_single length does not match qubit count")
        if set(self.p_cx) != seen:
            raise DeviceError("p_cx keys must match the edge set")
        if not _connected(self.n_qubits, self.adjacency):
            raise DeviceError(f"coupling graph of {self.name or 'device'} is not connected")

    @classmethod
    def build(cls, n_qubits, edges, p_single=None, p_cx=None, name=""):
        """Normalise edges, default missing probabilities to 1 and apply the floor."""
        norm = sorted({_edge(int(a), int(b)) for a, b in edges})
        ps = np.ones(n_qubits) if p_single is None else np.asarray(p_single, dtype=float).copy()
        if ps.shape != (n_qubits,):
            raise DeviceError("p_single must have one entry per qubit")
        ps = np.array([_clamp(float(v), f"qubit {q}") for q, v in enumerate(ps)])
        ps.setflags(write=False)
        pcx = {}
        given = {} if p_cx is None else {_edge(*k): v for k, v in p_cx.items()}
        for e in norm:
            pcx[e] = _clamp(given.get(e, 1.0), f"edge {e}")
        extra = set(given) - set(norm)
        if extra:
            raise DeviceError(f"cx calibration for non-edges {sorted(extra)}")
        return cls(n_qubits, tuple(norm), ps, pcx, name)

    @property
    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n_qubits)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for nbrs in adj:
            nbrs.sort()
        return adj

    def cx_success(self, a: int, b: int) -> float:
        return self.p_cx[_edge(a, b)]

    def to_json(self) -> str:
        doc = {
            "name": self.name,
            "n_qubits": self.n_qubits,
            "edges": [list(e) for e in self.edges],
            "single_qubit_success": {str(q): float(p) for q, p in enumerate(self.p_single)},
            "cx_success": {f"{a}-{b}": p for (a, b), p in self.p_cx.items()},
        }
        return json.dumps(doc, indent=2)


def _connected(n: int, adj) -> bool:
    seen = {0}
    todo = [0]
    while todo:
        v = todo.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return len(seen) == n


def load_device(text: str) -> DeviceModel:
    """Read the device JSON schema.

    Directed ``cx_success`` entries given both ways are merged by geometric mean.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeviceError(f"malformed device JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise DeviceError("device JSON must be an object")
    try:
        n = int(doc["n_qubits"])
        edges = [(int(a), int(b)) for a, b in doc["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DeviceError(f"device JSON needs n_qubits and edges: {exc}") from None

    p_single = np.ones(n)
    for key, val in (doc.get("single_qubit_success") or {}).items():
        q = int(key)
        if not 0 <= q < n:
            raise DeviceError(f"calibration for unknown qubit {q}")
        p_single[q] = _clamp(val, f"qubit {q}")

    directed: dict[tuple[int, int], list[float]] = {}
    for key, val in (doc.get("cx_success") or {}).items():
        try:
            a, b = (int(t) for t in str(key).split("-"))
        except ValueError:
            raise DeviceError(f"cx_success key {key!r} is not '<i>-<j>'") from None
        directed.setdefault(_edge(a, b), []).append(_clamp(val, f"edge {key}"))
    p_cx = {e: math.exp(sum(math.log(v) for v in vals) / len(vals)) for e, vals in directed.items()}

    return DeviceModel.build(n, edges, p_single, p_cx, name=str(doc.get("name", "")))


def load_device_file(path) -> DeviceModel:
    from pathlib import Path

    p = Path(path)
    if not p.exists() and str(path) in BUILTIN_DEVICES:
        return builtin_device(str(path))
    dev = load_device(p.read_text(encoding="utf-8"))
    return dev if dev.name else DeviceModel.build(
        dev.n_qubits, dev.edges, dev.p_single, dev.p_cx, name=p.stem
    )


def builtin_device(name: str) -> DeviceModel:
    """Load one of the bundled hardware graphs (``melbourne``, ``aspen4``, ``sycamore53``)."""
    if name not in BUILTIN_DEVICES:
        raise DeviceError(f"unknown builtin device {name!r}; choose from {BUILTIN_DEVICES}")
    text = resources.files("quboalloc").joinpath("data", f"{name}.json").read_text(encoding="utf-8")
    return load_device(text)


def all_pairs_distance(device: DeviceModel) -> np.ndarray:
    """Hop-count distance matrix from a breadth-first search rooted at every qubit."""
    n = device.n_qubits
    adj = device.adjacency
    dist = np.full((n, n), -1, dtype=np.int64)
    for src in range(n):
        row = dist[src]
        row[src] = 0
        queue = deque([src])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if row[w] < 0:
                    row[w] = row[v] + 1
                    queue.append(w)
    dist.setflags(write=False)
    return dist


def _best_paths_from(device: DeviceModel, src: int, adj, dist_row) -> dict[int, tuple[float, tuple[int, ...]]]:
    # BFS layers form a DAG of shortest paths; keep, per node, the highest-fidelity
    # prefix with lexicographic tie-break.
    best = {src: (1.0, (src,))}
    order = sorted(range(device.n_qubits), key=lambda v: dist_row[v])
    for v in order:
        if v == src:
            continue
        cand = None
        for u in adj[v]:
            if dist_row[u] != dist_row[v] - 1:
                continue
            prod_u, path_u = best[u]
            entry = (prod_u * device.cx_success(u, v), path_u + (v,))
            if _better(entry, cand):
                cand = entry
        best[v] = cand
    return best


def best_shortest_path(device: DeviceModel, j: int, l: int, distances=None) -> tuple[int, ...]:
    """Highest-fidelity shortest path from ``j`` to ``l``.

    Fidelity is the product of ``p_cx`` over the path's edges; equal products
    fall back to the lexicographically smallest vertex sequence.
    """
    if j == l:
        raise ValueError("best_shortest_path needs two distinct qubits")
    d = all_pairs_distance(device) if distances is None else distances
    return _best_paths_from(device, j, device.adjacency, d[j])[l][1]


@dataclass(frozen=True)
class PathFidelityTable:
    """Routed-CX success probability for every pair of physical qubits.

    ``paths[(j, l)]`` (``j < l``) is the route taken for that pair: it starts at
    the qubit that is swapped along and ends at the one it meets, so the CX
    runs on its final edge.
    """

    p_pair: np.ndarray = field(repr=False)
    paths: dict = field(repr=False)
    swap_mode: SwapMode = SwapMode.ROUND_TRIP


def _path_success(device: DeviceModel, path, swap_mode: SwapMode) -> float:
    hops = list(zip(path[:-1], path[1:]))
    # each SWAP costs 3 CX on its edge; round trips pay twice
    cx_per_swap = 3 * swap_mode.swaps_per_hop
    p = device.cx_success(*hops[-1])
    for a, b in hops[:-1]:
        p *= device.cx_success(a, b) ** cx_per_swap
    return p


def _better(entry, incumbent) -> bool:
    if incumbent is None:
        return True
    if math.isclose(entry[0], incumbent[0], rel_tol=1e-12, abs_tol=0.0):
        return entry[1] < incumbent[1]
    return entry[0] > incumbent[0]


def _best_routes_from(device: DeviceModel, src: int, adj, dist_row, mode: SwapMode) -> dict:
    """Best route from ``src`` to every other qubit under the routed-CX success.

    The SWAP hops carry a power of their fidelity and the final edge does not,
    so the optimum is the best plain-product path to some neighbour ``u`` of the
    target, followed by the edge ``u -> target``.
    """
    cx_per_swap = 3 * mode.swaps_per_hop
    prefix = _best_paths_from(device, src, adj, dist_row)
    routes = {}
    for v in range(device.n_qubits):
        if v == src:
            continue
        best = None
        for u in adj[v]:
            if dist_row[u] != dist_row[v] - 1:
                continue
            prod_u, path_u = prefix[u]
            entry = (prod_u**cx_per_swap * device.cx_success(u, v), path_u + (v,))
            if _better(entry, best):
                best = entry
        routes[v] = best
    return routes


def pairwise_success(device: DeviceModel, swap_mode=SwapMode.ROUND_TRIP, distances=None) -> PathFidelityTable:
    """Success probability of one CX between every pair of physical qubits.

    One operand is swapped along a shortest path until it is adjacent to the
    other, and the CX runs on the final edge. Among all shortest paths, and
    either operand doing the moving, the route with the highest success is
    used; equal successes fall back to the lexicographically smallest route.
    Taking this maximum keeps the table symmetric and never lets a lower edge
    fidelity raise a pair's success.
    """
    mode = SwapMode.coerce(swap_mode)
    n = device.n_qubits
    d = all_pairs_distance(device) if distances is None else distances
    adj = device.adjacency
    routes = [_best_routes_from(device, j, adj, d[j], mode) for j in range(n)]
    p_pair = np.ones((n, n))
    paths = {}
    for j in range(n):
        for l in range(j + 1, n):
            best = routes[j][l]
            if _better(routes[l][j], best):
                best = routes[l][j]
            paths[(j, l)] = best[1]
            p_pair[j, l] = p_pair[l, j] = max(best[0], PROBABILITY_FLOOR)
    p_pair.setflags(write=False)
    return PathFidelityTable(p_pair, paths, mode)
