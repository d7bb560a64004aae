"""Simulation of indegree evolutions.

Vertices evolve independently: vertex ``m`` in state ``k`` gains an edge at
step ``n -> n+1`` with probability ``f(k)/n``. That lets us simulate single
vertices by skip-ahead inversion, and the whole population by bucket counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .rules import (
    AttachmentRule,
    phi,
    phi_inverse,
    prefix_arrays,
    psi,
    psi_inverse_floor,
    require_valid,
)
from .streams import Stream, as_stream, run_replicas


class CouplingHorizonError(RuntimeError):
    """Raised when the discrete chain would need a step beyond the budget."""


# ----------------------------------------------------------------------------
# single vertices

@dataclass(frozen=True)
class VertexEvolution:
    birth: int
    jumps: np.ndarray
    horizon: int

    def degree_at(self, n: int) -> int:
        if n < self.birth:
            raise ValueError(f"vertex {self.birth} is not born at step {n}")
        return int(np.searchsorted(self.jumps, n, side="right"))

    @property
    def final_degree(self) -> int:
        return int(self.jumps.size)

    def to_json(self) -> str:
        return json.dumps({"m": self.birth, "jumps": [int(j) for j in self.jumps]})


def simulate_vertex(rule: AttachmentRule, m: int, N: int, rng=None) -> VertexEvolution:
    """Jump history of vertex ``m`` up to step ``N``.

    The randomness for vertex ``m`` depends only on the stream and ``m``, so
    the same vertex inside a whole-population run evolves identically.
    """
    if not 1 <= m <= N:
        raise ValueError("need 1 <= m <= N")
    require_valid(rule)
    code, p0, p1, table = rule.kernel_args()
    k0, k1 = as_stream(rng).key()
    jumps = K.vertex_jumps(code, p0, p1, table, m, N, k0, k1)
    return VertexEvolution(m, jumps, N)


def vertex_degrees(rule: AttachmentRule, m: int, checkpoints, rng=None) -> np.ndarray:
    """Indegree of vertex ``m`` at each step in ``checkpoints`` (sorted)."""
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size == 0 or np.any(np.diff(cps) < 0):
        raise ValueError("checkpoints must be a non-empty sorted sequence")
    code, p0, p1, table = rule.kernel_args()
    k0, k1 = as_stream(rng).key()
    return K.vertex_degrees_at(code, p0, p1, table, m, cps, k0, k1)


@dataclass(frozen=True)
class ArtificialPath:
    """Step path t -> Z[s, t] on artificial time and degree scales."""

    start: float
    times: np.ndarray
    values: np.ndarray

    def value(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < self.start):
            raise ValueError("path is only defined from its start time on")
        idx = np.searchsorted(self.times, t_arr, side="right")
        padded = np.concatenate(([0.0], self.values))
        out = padded[idx]
        return float(out) if np.ndim(t) == 0 else out


def evolution_to_artificial(evolution: VertexEvolution, rule: AttachmentRule) -> ArtificialPath:
    k = np.arange(1, evolution.jumps.size + 1)
    return ArtificialPath(
        start=psi(evolution.birth),
        times=np.asarray(psi(evolution.jumps), dtype=float).reshape(-1),
        values=np.asarray(phi(rule, k.astype(float)), dtype=float).reshape(-1),
    )


@dataclass(frozen=True)
class MartingaleResidual:
    """M_t = Z[s, t] - (t - s)."""

    path: ArtificialPath

    def at(self, t):
        return self.path.value(t) - (np.asarray(t, dtype=float) - self.path.start)


def martingale_residual(path: ArtificialPath) -> MartingaleResidual:
    return MartingaleResidual(path)


# ----------------------------------------------------------------------------
# whole population

@dataclass(frozen=True)
class DegreeDistributionState:
    n: int
    counts: np.ndarray
    total_edges: int

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.n

    def rows(self):
        for k in np.flatnonzero(self.counts):
            yield self.n, int(k), int(self.counts[k])


@dataclass(frozen=True)
class DistributionRun:
    states: list[DegreeDistributionState]
    outdegree: np.ndarray | None  # outdegree[n] = edges created by vertex n


def simulate_distribution(
    rule: AttachmentRule, N: int, checkpoints=None, rng=None, record_outdegree: bool = False
) -> DistributionRun:
    """Bucketed indegree counts at the given checkpoint steps."""
    if N < 1:
        raise ValueError("N must be >= 1")
    cps = np.asarray([N] if checkpoints is None else checkpoints, dtype=np.int64)
    if cps.size == 0 or np.any(np.diff(cps) <= 0) or cps[0] < 1 or cps[-1] > N:
        raise ValueError("checkpoints must be strictly increasing within [1, N]")
    require_valid(rule)
    code, p0, p1, table = rule.kernel_args()
    gen = as_stream(rng).generator()
    snaps, totals, outdeg = K.bucket_run(code, p0, p1, table, N, cps, record_outdegree, gen)
    states = [
        DegreeDistributionState(int(n), np.asarray(c), int(t))
        for n, c, t in zip(cps, snaps, totals)
    ]
    return DistributionRun(states, outdeg if record_outdegree else None)


# ----------------------------------------------------------------------------
# exponential clocks

@dataclass(frozen=True)
class ClockProcess:
    """Independent clocks T[Phi(j)] ~ Exp(f(j)) and the process Z_t."""

    rule: AttachmentRule
    clocks: np.ndarray
    entry_times: np.ndarray  # entry_times[j] = T[0, Phi(j))
    t_max: float

    def Z(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr > self.t_max) or np.any(t_arr < 0):
            raise ValueError("query time outside [0, t_max]")
        j = np.searchsorted(self.entry_times, t_arr, side="right") - 1
        out = np.asarray(phi(self.rule, j.astype(float)))
        return float(out) if np.ndim(t) == 0 else out

    def jumps_by(self, t: float) -> int:
        return int(np.searchsorted(self.entry_times, t, side="right") - 1)


def sample_clock_process(rule: AttachmentRule, t_max: float, rng=None) -> ClockProcess:
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    gen = as_stream(rng).generator()
    clocks = []
    elapsed = 0.0
    j = 0
    chunk = 64
    while elapsed <= t_max:
        f = rule.values(j, j + chunk)
        draws = gen.standard_exponential(chunk) / f
        csum = elapsed + np.cumsum(draws)
        stop = int(np.searchsorted(csum, t_max, side="right"))
        if stop < chunk:
            clocks.append(draws[: stop + 1])
            break
        clocks.append(draws)
        elapsed = float(csum[-1])
        j += chunk
        chunk *= 2
    T = np.concatenate(clocks)
    entry = np.concatenate(([0.0], np.cumsum(T)))
    return ClockProcess(rule, T, entry, float(t_max))


# ----------------------------------------------------------------------------
# quantile coupling

DEFAULT_MAX_STEP = 1e300


@dataclass(frozen=True)
class CouplingRealization:
    birth: int
    states: np.ndarray  # artificial degrees Phi(j) of the traversed states
    fbar: np.ndarray  # f(j) for those states
    entry_steps: np.ndarray  # step at which each state is entered (float)
    discrete_times: np.ndarray  # T_s[u]
    clock_times: np.ndarray  # T[u]
    K: float

    @property
    def mesh(self) -> np.ndarray:
        """Artificial-time increment 1/n at each entry step."""
        return 1.0 / self.entry_steps

    @property
    def cumulative_gap(self) -> np.ndarray:
        """T_s[0,u) - T[0,u) for u = Phi(0), ..., Phi(j_max)."""
        gap = np.cumsum(self.discrete_times - self.clock_times)
        return np.concatenate(([0.0], gap))

    @property
    def discrepancy(self) -> float:
        return float(np.max(np.abs(self.cumulative_gap)))


def coupling_constant(rule: AttachmentRule, j_max: int) -> float:
    j = np.arange(j_max + 1)
    return float(np.sum((rule.values(0, j_max + 1) / (j + 1)) ** 2))


def couple_occupation_times(
    rule: AttachmentRule,
    m: int,
    j_max: int,
    rng=None,
    max_step: float = DEFAULT_MAX_STEP,
) -> CouplingRealization:
    """Couple a vertex born at step ``m`` with exponential clocks up to Phi(j_max).

    One shared uniform U per state drives both sides: the discrete sojourn
    is the right-continuous quantile of its law on the artificial-time grid
    and the clock is ``-log(1-U)/f``.
    """
    if m < 1 or j_max < 0:
        raise ValueError("need m >= 1 and j_max >= 0")
    require_valid(rule)
    fvals, inv, _ = prefix_arrays(rule, max(j_max, 1))
    fvals = np.ascontiguousarray(fvals[:j_max])
    k0, k1 = as_stream(rng).key()
    entry, ts, te, status = K.coupling_run(fvals, m, k0, k1, max_step)
    if status:
        raise CouplingHorizonError(
            f"entry beyond horizon: state {entry.size} needs a step above {max_step:g}"
        )
    return CouplingRealization(
        birth=m,
        states=inv[:j_max].copy(),
        fbar=fvals,
        entry_steps=entry,
        discrete_times=ts,
        clock_times=te,
        K=coupling_constant(rule, j_max),
    )


def couple_from_scales(rule, s: float, u_max: float, rng=None, **kw) -> CouplingRealization:
    """Same as ``couple_occupation_times`` with s in the time grid, u_max in the degree grid."""
    m = psi_inverse_floor(s)
    if not math.isclose(psi(m), s, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError("s must be a point Psi(m) of the artificial time grid")
    x = phi_inverse(rule, u_max)
    j = int(round(x))
    if abs(x - j) > 1e-9:
        raise ValueError("u_max must be a point Phi(j) of the degree grid")
    return couple_occupation_times(rule, m, j, rng, **kw)


def simulate_vertex_degrees_many(
    rule: AttachmentRule, m: int, checkpoints, seed: int, replicas: int, threads=None
) -> np.ndarray:
    """Degrees of vertex ``m`` at the checkpoints, one row per replica."""
    cps = np.asarray(checkpoints, dtype=np.int64)
    require_valid(rule)
    rows = run_replicas(lambda s: vertex_degrees(rule, m, cps, s), seed, replicas, threads)
    return np.vstack(rows)


__all__ = [
    "ArtificialPath",
    "ClockProcess",
    "CouplingHorizonError",
    "CouplingRealization",
    "DegreeDistributionState",
    "DistributionRun",
    "MartingaleResidual",
    "Stream",
    "VertexEvolution",
    "couple_from_scales",
    "couple_occupation_times",
    "evolution_to_artificial",
    "martingale_residual",
    "sample_clock_process",
    "simulate_distribution",
    "simulate_vertex",
    "simulate_vertex_degrees_many",
    "vertex_degrees",
]
