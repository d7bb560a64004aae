"""Hub tracking, persistence, overtaking races and hub-age scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .process import vertex_degrees
from .rules import (
    AttachmentRule,
    Preference,
    classify_preference,
    phi_inverse,
    psi,
    regvar_asymptotics,
    require_valid,
)
from .streams import Stream, as_stream, run_replicas
from .theory import hub_prediction


# ----------------------------------------------------------------------------
# single trajectories

@dataclass(frozen=True)
class HubTrajectory:
    """Every change of the hub identity up to the horizon.

    The hub is the vertex of maximal indegree, ties going to the smallest
    birth index. Event ``i`` says that from step ``steps[i]`` on the hub is
    ``hubs[i]`` with indegree ``maxdegs[i]``; vertex 1 opens the list.
    """

    steps: np.ndarray
    hubs: np.ndarray
    maxdegs: np.ndarray
    horizon: int
    final_maxdeg: int
    audit_failures: int = 0

    @property
    def final_hub(self) -> int:
        return int(self.hubs[-1])

    @property
    def change_count(self) -> int:
        return int(self.steps.size - 1)

    def changes_in(self, lo: int, hi: int) -> int:
        """Number of identity changes at steps in (lo, hi]."""
        s = self.steps[1:]
        return int(np.count_nonzero((s > lo) & (s <= hi)))

    def hub_at(self, n: int) -> int:
        if not 1 <= n <= self.horizon:
            raise ValueError("step outside the simulated range")
        return int(self.hubs[np.searchsorted(self.steps, n, side="right") - 1])

    def rows(self):
        for n, h, d in zip(self.steps, self.hubs, self.maxdegs):
            yield int(n), int(h), int(d)


def track_hub(rule: AttachmentRule, N: int, rng=None, audit_every: int = 0) -> HubTrajectory:
    """Merged event simulation of all N vertices with a priority queue.

    ``audit_every > 0`` re-scans all degrees at every ``audit_every``-th
    change and counts disagreements with the tracked hub.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    require_valid(rule)
    code, p0, p1, table = rule.kernel_args()
    k0, k1 = as_stream(rng).key()
    steps, hubs, degs, fails, _, deg = K.hub_events(code, p0, p1, table, N, k0, k1, audit_every)
    return HubTrajectory(steps, hubs, degs, N, int(deg.max(initial=0)), int(fails))


@dataclass(frozen=True)
class CheckpointHubs:
    checkpoints: np.ndarray
    hubs: np.ndarray
    maxdegs: np.ndarray
    ties: np.ndarray  # number of vertices sharing the max at each checkpoint


def hubs_at_checkpoints(rule: AttachmentRule, checkpoints, rng=None) -> CheckpointHubs:
    """Hub identity and degree at each checkpoint, streaming vertex by vertex."""
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size == 0 or np.any(np.diff(cps) <= 0) or cps[0] < 1:
        raise ValueError("checkpoints must be positive and strictly increasing")
    code, p0, p1, table = rule.kernel_args()
    k0, k1 = as_stream(rng).key()
    hubs, best, ties = K.hub_checkpoints(code, p0, p1, table, int(cps[-1]), cps, k0, k1)
    return CheckpointHubs(cps, hubs, best, ties)


# ----------------------------------------------------------------------------
# persistence

def persistence_checkpoints(N: int) -> np.ndarray:
    pts = [max(1, int(round(N**0.5))), max(1, int(round(N**0.75))), N]
    return np.unique(np.asarray(pts, dtype=np.int64))


@dataclass(frozen=True)
class PersistenceReport:
    N: int
    checkpoints: np.ndarray
    hubs: np.ndarray  # replicas x checkpoints
    maxdegs: np.ndarray
    ties: np.ndarray

    @property
    def replicas(self) -> int:
        return int(self.hubs.shape[0])

    @property
    def fraction_identical(self) -> float:
        """Share of replicas whose hub is the same at every checkpoint."""
        same = np.all(self.hubs == self.hubs[:, :1], axis=1)
        return float(np.mean(same))

    def fraction_same(self, i: int, j: int) -> float:
        return float(np.mean(self.hubs[:, i] == self.hubs[:, j]))

    @property
    def median_hub(self) -> np.ndarray:
        return np.median(self.hubs, axis=0)

    @property
    def tie_fraction(self) -> np.ndarray:
        return np.mean(self.ties > 1, axis=0)

    def summary(self) -> dict:
        return {
            "N": self.N,
            "replicas": self.replicas,
            "checkpoints": [int(c) for c in self.checkpoints],
            "fraction_identical": self.fraction_identical,
            "median_hub": [float(m) for m in self.median_hub],
            "tie_fraction": [float(t) for t in self.tie_fraction],
        }

    def rows(self):
        for r in range(self.replicas):
            for i, c in enumerate(self.checkpoints):
                yield r, int(c), int(self.hubs[r, i]), int(self.maxdegs[r, i]), int(self.ties[r, i])


def persistence_experiment(
    rule: AttachmentRule, N: int, replicas: int, seed: int, threads: int | None = None
) -> PersistenceReport:
    if N < 10:
        raise ValueError("N must be >= 10")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    require_valid(rule)
    cps = persistence_checkpoints(N)
    results = run_replicas(lambda s: hubs_at_checkpoints(rule, cps, s), seed, replicas, threads)
    return PersistenceReport(
        N,
        cps,
        np.vstack([r.hubs for r in results]),
        np.vstack([r.maxdegs for r in results]),
        np.vstack([r.ties for r in results]),
    )


# ----------------------------------------------------------------------------
# races

@dataclass(frozen=True)
class RaceResult:
    m: int
    m_prime: int
    horizon: int
    degree: int
    degree_prime: int

    @property
    def greater(self) -> bool:
        return self.degree > self.degree_prime

    @property
    def tie(self) -> bool:
        return self.degree == self.degree_prime

    @property
    def smaller(self) -> bool:
        return self.degree < self.degree_prime

    @property
    def score(self) -> float:
        return 1.0 if self.greater else 0.5 if self.tie else 0.0


def race(rule: AttachmentRule, m: int, m_prime: int, N: int, rng=None) -> RaceResult:
    if not 1 <= m < m_prime <= N:
        raise ValueError("need 1 <= m < m_prime <= N")
    stream = as_stream(rng)
    cp = np.array([N], dtype=np.int64)
    d = int(vertex_degrees(rule, m, cp, stream)[0])
    d2 = int(vertex_degrees(rule, m_prime, cp, stream)[0])
    return RaceResult(m, m_prime, N, d, d2)


@dataclass(frozen=True)
class OvertakingEstimate:
    estimate: float
    stderr: float
    replicas: int
    greater: int
    ties: int
    smaller: int

    def summary(self) -> dict:
        return {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "replicas": self.replicas,
            "greater": self.greater,
            "ties": self.ties,
            "smaller": self.smaller,
        }


def overtaking_probability(
    rule: AttachmentRule, m: int, m_prime: int, N: int, replicas: int, seed: int,
    threads: int | None = None,
) -> OvertakingEstimate:
    """P(deg m > deg m') at step N, ties scored 1/2."""
    if not 1 <= m < m_prime <= N:
        raise ValueError("need 1 <= m < m_prime <= N")
    require_valid(rule)
    results = run_replicas(lambda s: race(rule, m, m_prime, N, s), seed, replicas, threads)
    scores = np.array([r.score for r in results])
    se = float(scores.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.nan
    return OvertakingEstimate(
        float(scores.mean()),
        se,
        replicas,
        sum(r.greater for r in results),
        sum(r.tie for r in results),
        sum(r.smaller for r in results),
    )


# ----------------------------------------------------------------------------
# hub-age scaling

SCALING_COLUMNS = (
    "n",
    "median_hub",
    "median_offset",
    "predicted_log_hub",
    "predicted_offset",
    "ratio_log_hub",
    "ratio_offset",
    "tie_fraction",
)


@dataclass(frozen=True)
class ScalingTable:
    rows: list[tuple]
    hubs: np.ndarray
    offsets: np.ndarray

    def as_dicts(self) -> list[dict]:
        return [dict(zip(SCALING_COLUMNS, r)) for r in self.rows]


def hub_scaling_experiment(
    rule: AttachmentRule, N_grid, replicas: int, seed: int, threads: int | None = None
) -> ScalingTable:
    """Median hub index and max-degree offset against the natural-scale laws."""
    if classify_preference(rule) is Preference.STRONG:
        raise ValueError("hub scaling laws only hold under weak preference")
    desc = regvar_asymptotics(rule)
    require_valid(rule)
    pred = hub_prediction(desc.alpha, rule)
    grid = np.asarray(sorted(set(int(n) for n in N_grid)), dtype=np.int64)
    if grid.size == 0 or grid[0] < 2:
        raise ValueError("N_grid needs entries >= 2")
    results = run_replicas(lambda s: hubs_at_checkpoints(rule, grid, s), seed, replicas, threads)
    hubs = np.vstack([r.hubs for r in results])
    degs = np.vstack([r.maxdegs for r in results])
    ties = np.vstack([r.ties for r in results])
    centre = np.asarray([phi_inverse(rule, psi(int(n))) for n in grid])
    offsets = degs - centre
    rows = []
    for i, n in enumerate(grid):
        med_hub = float(np.median(hubs[:, i]))
        med_off = float(np.median(offsets[:, i]))
        p_log = float(pred.log_hub_index(n))
        p_off = float(pred.natural_max_offset(n))
        rows.append((
            int(n),
            med_hub,
            med_off,
            p_log,
            p_off,
            math.log(med_hub) / p_log if p_log > 0 else math.nan,
            med_off / p_off,
            float(np.mean(ties[:, i] > 1)),
        ))
    return ScalingTable(rows, hubs, offsets)


__all__ = [
    "CheckpointHubs",
    "HubTrajectory",
    "OvertakingEstimate",
    "PersistenceReport",
    "RaceResult",
    "ScalingTable",
    "Stream",
    "hub_scaling_experiment",
    "hubs_at_checkpoints",
    "overtaking_probability",
    "persistence_experiment",
    "race",
    "track_hub",
]
