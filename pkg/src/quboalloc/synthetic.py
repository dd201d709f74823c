"""Seeded random circuits in the one-qubit + CX basis, for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .circuit import Gate, QuantumCircuit

_ONE_QUBIT = ("h", "x", "t", "tdg", "s", "rz")


def random_circuit(
    n_qubits: int,
    n_two_qubit: int,
    n_single_qubit: int | None = None,
    seed: int = 0,
    concentration: float = 0.5,
    name: str = "",
) -> QuantumCircuit:
    """Random circuit whose CX traffic is unevenly spread over qubit pairs.

    Pair weights are drawn from a symmetric Dirichlet with the given
    ``concentration``; small values give a few dominant pairs, like real
    reversible-logic benchmarks. Every qubit gets at least one gate.
    """
    if n_qubits < 1:
        raise ValueError("n_qubits must be positive")
    rng = np.random.default_rng(seed)
    n_single = n_two_qubit if n_single_qubit is None else n_single_qubit
    gates: list[Gate] = []

    if n_qubits > 1 and n_two_qubit > 0:
        iu, ku = np.triu_indices(n_qubits, 1)
        weights = rng.dirichlet(np.full(iu.size, concentration))
        # a spanning chain in random order keeps every qubit interacting
        perm = rng.permutation(n_qubits)
        chain = [(int(a), int(b)) for a, b in zip(perm[:-1], perm[1:])]
        picks = rng.choice(iu.size, size=max(0, n_two_qubit - len(chain)), p=weights)
        pairs = chain[:n_two_qubit] + [(int(iu[p]), int(ku[p])) for p in picks]
        rng.shuffle(pairs)
        for a, b in pairs:
            ctrl, tgt = (a, b) if rng.random() < 0.5 else (b, a)
            gates.append(Gate("cx", (ctrl, tgt)))

    for q in rng.integers(0, n_qubits, size=n_single):
        gname = _ONE_QUBIT[rng.integers(len(_ONE_QUBIT))]
        params = (float(rng.uniform(-np.pi, np.pi)),) if gname == "rz" else ()
        pos = int(rng.integers(len(gates) + 1))
        gates.insert(pos, Gate(gname, (int(q),), params))

    return QuantumCircuit(n_qubits, tuple(gates), name or f"random_{n_qubits}q_{n_two_qubit}cx_s{seed}")
