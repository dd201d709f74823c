"""Single-flip Metropolis simulated annealing for :class:`~quboalloc.qubo.QuboProblem`.

Each read runs in its own random stream seeded from ``(seed, read_index)``, so a
sample set is bit-identical however the reads are scheduled across threads.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    # skip the TBB probe; an outdated system TBB only produces a warning
    os.environ["NUMBA_THREADING_LAYER"] = "workqueue"

import numba as nb

from .qubo import QuboProblem, energy

__all__ = [
    "AnnealSchedule",
    "Sample",
    "SampleSet",
    "default_beta_range",
    "default_schedule",
    "delta_energy",
    "read_seeds",
    "anneal_once",
    "sample",
]

FALLBACK_BETA_RANGE = (0.1, 10.0)


@dataclass(frozen=True)
class AnnealSchedule:
    """Sweep count, read count and the geometric inverse-temperature ladder.

    With ``greedy_finish`` each read ends with zero-temperature passes that
    take every strictly downhill single flip until none is left, so the
    returned state is a local minimum. Off by default: the plain Metropolis
    trajectory is returned unchanged.
    """

    beta_hot: float
    beta_cold: float
    num_sweeps: int = 1000
    num_reads: int = 1000
    greedy_finish: bool = False

    def __post_init__(self):
        if not (0 < self.beta_hot < self.beta_cold):
            raise ValueError(f"need 0 < beta_hot < beta_cold, got {self.beta_hot}, {self.beta_cold}")
        if self.num_sweeps < 1:
            raise ValueError("num_sweeps must be at least 1")
        if self.num_reads < 1:
            raise ValueError("num_reads must be at least 1")

    def betas(self) -> np.ndarray:
        """Geometric inverse-temperature ladder, one entry per sweep."""
        return np.geomspace(self.beta_hot, self.beta_cold, self.num_sweeps)


@dataclass(frozen=True)
class Sample:
    state: np.ndarray = field(repr=False)
    energy: float = 0.0


@dataclass(frozen=True)
class SampleSet:
    samples: tuple[Sample, ...]
    seed: int
    schedule: AnnealSchedule

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, idx):
        return self.samples[idx]

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.samples])

    @property
    def states(self) -> np.ndarray:
        return np.stack([s.state for s in self.samples])

    def order(self) -> np.ndarray:
        """Read indices sorted by energy; equal energies keep read order."""
        return np.argsort(self.energies, kind="stable")


def default_beta_range(problem: QuboProblem) -> tuple[float, float]:
    """Inverse-temperature endpoints anchored on acceptance probabilities.

    At ``beta_hot`` the largest possible single-flip uphill move is accepted
    with probability 1/2; at ``beta_cold`` the smallest nonzero coefficient is
    accepted with probability 1/100.
    """
    lin = np.abs(problem.linear)
    quad = np.abs(problem.vals)
    nonzero = np.concatenate([lin[lin > 0], quad[quad > 0]])
    if nonzero.size == 0:
        return FALLBACK_BETA_RANGE
    incident = lin.copy()
    np.add.at(incident, problem.rows, quad)
    np.add.at(incident, problem.cols, quad)
    de_max = float(incident.max())
    de_min = float(nonzero.min())
    return math.log(2.0) / de_max, math.log(100.0) / de_min


def default_schedule(
    problem: QuboProblem, num_sweeps: int = 1000, num_reads: int = 1000, greedy_finish: bool = False
) -> AnnealSchedule:
    hot, cold = default_beta_range(problem)
    return AnnealSchedule(hot, cold, num_sweeps, num_reads, greedy_finish)


def delta_energy(problem: QuboProblem, state, flip_index: int) -> float:
    """Energy change from flipping one bit, in O(degree) time."""
    n = problem.n_variables
    if not 0 <= flip_index < n:
        raise IndexError(f"flip index {flip_index} outside [0, {n})")
    x = np.asarray(state)
    indptr, indices, weights = problem.neighbors
    lo, hi = indptr[flip_index], indptr[flip_index + 1]
    local = problem.linear[flip_index] + float(np.dot(weights[lo:hi], x[indices[lo:hi]]))
    return (1 - 2 * int(x[flip_index])) * local


def read_seeds(seed: int, num_reads: int) -> np.ndarray:
    """Per-read 32-bit seeds derived from ``(seed, read_index)``."""
    return np.array(
        [np.random.SeedSequence(seed, spawn_key=(r,)).generate_state(1, np.uint32)[0] for r in range(num_reads)],
        dtype=np.uint32,
    )


@nb.njit(cache=True, nogil=True)
def _flip(u, state, field, indptr, indices, weights):
    sign = -1.0 if state[u] else 1.0
    state[u] = 1 - state[u]
    for p in range(indptr[u], indptr[u + 1]):
        field[indices[p]] += sign * weights[p]


@nb.njit(cache=True, nogil=True)
def _anneal_read(read_seed, linear, indptr, indices, weights, betas, greedy_tol, state):
    np.random.seed(read_seed)
    n = linear.shape[0]
    for u in range(n):
        state[u] = np.random.randint(0, 2)
    field = linear.copy()
    for u in range(n):
        if state[u]:
            for p in range(indptr[u], indptr[u + 1]):
                field[indices[p]] += weights[p]
    order = np.arange(n)
    for s in range(betas.shape[0]):
        beta = betas[s]
        np.random.shuffle(order)
        for t in range(n):
            u = order[t]
            if state[u]:
                de = -field[u]
            else:
                de = field[u]
            if de > 0.0 and np.random.random() >= math.exp(-beta * de):
                continue
            _flip(u, state, field, indptr, indices, weights)
    if greedy_tol < 0.0:
        return
    # zero-temperature finish: strictly downhill flips in index order until none remain
    changed = True
    while changed:
        changed = False
        for u in range(n):
            de = -field[u] if state[u] else field[u]
            if de < -greedy_tol:
                _flip(u, state, field, indptr, indices, weights)
                changed = True


@nb.njit(cache=True, parallel=True)
def _anneal_batch(seeds, linear, indptr, indices, weights, betas, greedy_tol, states):
    for r in nb.prange(seeds.shape[0]):
        _anneal_read(seeds[r], linear, indptr, indices, weights, betas, greedy_tol, states[r])


def _kernel_args(problem: QuboProblem, schedule: AnnealSchedule):
    indptr, indices, weights = problem.neighbors
    linear = np.ascontiguousarray(problem.linear, dtype=np.float64)
    if schedule.greedy_finish:
        # ignore "improvements" at the level of accumulated rounding in the local fields
        scale = max(np.abs(linear).max(initial=0.0), np.abs(weights).max(initial=0.0))
        greedy_tol = 1e-12 * scale
    else:
        greedy_tol = -1.0
    return linear, indptr, indices, weights, schedule.betas(), greedy_tol


def anneal_once(problem: QuboProblem, schedule: AnnealSchedule, rng) -> Sample:
    """One annealing trajectory from a uniformly random start.

    ``rng`` is either an integer read seed or a :class:`numpy.random.Generator`
    from which one is drawn.
    """
    if isinstance(rng, np.random.Generator):
        read_seed = np.uint32(rng.integers(0, 2**32, dtype=np.uint64))
    else:
        read_seed = np.uint32(int(rng) & 0xFFFFFFFF)
    state = np.zeros(problem.n_variables, dtype=np.int8)
    _anneal_read(read_seed, *_kernel_args(problem, schedule), state)
    state.setflags(write=False)
    return Sample(state, energy(problem, state))


def sample(problem: QuboProblem, schedule: AnnealSchedule, seed: int = 0) -> SampleSet:
    """``schedule.num_reads`` independent reads; identical inputs give identical output."""
    seeds = read_seeds(seed, schedule.num_reads)
    states = np.zeros((schedule.num_reads, problem.n_variables), dtype=np.int8)
    _anneal_batch(seeds, *_kernel_args(problem, schedule), states)
    states.setflags(write=False)
    samples = tuple(Sample(states[r], energy(problem, states[r])) for r in range(schedule.num_reads))
    return SampleSet(samples, int(seed), schedule)
