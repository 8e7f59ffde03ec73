"""Per-agent stochastic deterioration models.

Each agent carries a health score, the Condition Index (CI), on an integer
scale from 100 (perfect) down to the absorbing failure level 0.  Under the
idle action the CI degrades according to a discretized Weibull wear kernel;
a repair resets it to full.  This module builds those kernels and computes
time-to-absorption (TTA) statistics both exactly (absorbing-chain linear
solve) and by Monte Carlo.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DomainError, ModelError

FULL_CI = 100
NUM_CI_LEVELS = FULL_CI + 1

# Hard cap on total simulated steps in a Monte-Carlo TTA estimate; hitting it
# means the kernel makes no progress toward absorption.
_MC_STEP_CAP = 200_000


@dataclass(frozen=True)
class WeibullParams:
    """Shape/scale pair of the continuous Weibull wear distribution.

    The scenario generator draws shape from [1, 7] and scale from [25, 70]
    (CI units), but any positive pair is a valid model.
    """

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError(
                f"Weibull parameters must be positive, got shape={self.shape}, "
                f"scale={self.scale}"
            )


def weibull_density(params: WeibullParams, x) -> np.ndarray | float:
    """Continuous Weibull pdf (k/lam)*(x/lam)^(k-1)*exp(-(x/lam)^k).

    `x` may be a scalar or an array; every entry must be positive.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise DomainError("weibull_density requires x > 0")
    k, lam = params.shape, params.scale
    z = x_arr / lam
    out = (k / lam) * z ** (k - 1.0) * np.exp(-(z**k))
    return float(out) if np.isscalar(x) else out


@dataclass(frozen=True)
class DeteriorationKernel:
    """Row-stochastic idle-action transition matrix over CI levels.

    ``rows[h, h']`` is the probability of moving from level ``h`` to level
    ``h'`` in one idle step.  Level 0 is absorbing and deterioration never
    raises the level, so the matrix is lower triangular.  ``level_values``
    maps level indices to CI units (identity for the standard 101-level
    grid, multiples of ten for coarsened kernels).
    """

    rows: np.ndarray
    level_values: np.ndarray
    row_cdfs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise ModelError("kernel rows must form a square matrix")
        if np.any(rows < 0):
            raise ModelError("kernel rows contain negative probabilities")
        sums = rows.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            raise ModelError("kernel rows must each sum to 1 within 1e-9")
        if np.any(np.triu(rows, k=1) != 0.0):
            raise ModelError("idle deterioration cannot increase the CI level")
        if rows[0, 0] != 1.0:
            raise ModelError("level 0 must be absorbing")
        rows = rows.copy()
        rows.setflags(write=False)
        values = np.asarray(self.level_values, dtype=float).copy()
        values.setflags(write=False)
        cdfs = np.cumsum(rows, axis=1)
        cdfs[:, -1] = 1.0
        cdfs.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "level_values", values)
        object.__setattr__(self, "row_cdfs", cdfs)

    @property
    def num_states(self) -> int:
        return self.rows.shape[0]

    @property
    def full_level(self) -> int:
        return self.num_states - 1


def build_kernel(params: WeibullParams, num_states: int = NUM_CI_LEVELS) -> DeteriorationKernel:
    """Discretize the Weibull wear distribution into a CI transition kernel.

    For a current level h >= 1 the probability of landing on h' <= h is the
    density of a one-step wear of (h - h' + 1) CI units, normalized over all
    feasible wear amounts:

        rows[h, h'] = f(h - h' + 1) / sum_{d=0..h} f(d + 1)

    Level 0 is a point mass on itself.
    """
    f_vals = weibull_density(params, np.arange(1, num_states + 1, dtype=float))
    cum = np.cumsum(f_vals)
    rows = np.zeros((num_states, num_states))
    rows[0, 0] = 1.0
    for h in range(1, num_states):
        rows[h, : h + 1] = f_vals[h::-1] / cum[h]
    return DeteriorationKernel(rows=rows, level_values=np.arange(num_states, dtype=float))


def coarsen_kernel(kernel: DeteriorationKernel, num_states: int = 11) -> DeteriorationKernel:
    """Aggregate a fine kernel onto a smaller CI grid.

    Level b of the coarse grid represents CI value b * step (step chosen so
    the top level is full CI).  Fine destination levels are binned so that
    only true failure maps to coarse level 0; rows are renormalized.
    """
    fine = kernel.num_states
    if (fine - 1) % (num_states - 1) != 0:
        raise DomainError("coarse grid must evenly divide the fine grid")
    step = (fine - 1) // (num_states - 1)
    # fine level 0 -> coarse 0; fine levels (b-1)*step+1 .. b*step -> coarse b
    bins = np.zeros(fine, dtype=int)
    bins[1:] = (np.arange(1, fine) + step - 1) // step
    rows = np.zeros((num_states, num_states))
    rows[0, 0] = 1.0
    for b in range(1, num_states):
        fine_row = kernel.rows[b * step]
        np.add.at(rows[b], bins, fine_row)
        rows[b] /= rows[b].sum()
    values = kernel.level_values[:: step].copy()
    return DeteriorationKernel(rows=rows, level_values=values)


@dataclass(frozen=True)
class TtaStats:
    """Mean and variance of the idle-policy time to absorption."""

    mean: float
    variance: float
    source: str  # "exact" or "monte_carlo"
    num_runs: int = 0

    def __post_init__(self):
        if self.mean < 0 or self.variance < 0:
            raise ModelError("TTA mean and variance must be nonnegative")


def _transient_solve(kernel: DeteriorationKernel, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - Q) x = rhs over transient levels 1..S-1 (lower triangular)."""
    q = kernel.rows[1:, 1:]
    a = np.eye(q.shape[0]) - q
    if np.any(np.abs(np.diag(a)) < 1e-14):
        raise ModelError("kernel has a level with no progress toward absorption")
    return solve_triangular(a, rhs, lower=True)


def expected_tta_exact(kernel: DeteriorationKernel) -> list[TtaStats]:
    """Exact absorption-time mean and variance from every start level.

    The mean vector solves t(0) = 0, t(h) = 1 + sum_h' P(h, h') t(h'); the
    variance comes from the matching second-moment system.  Both systems are
    lower triangular because deterioration never raises the level.
    """
    n = kernel.num_states
    ones = np.ones(n - 1)
    m1 = _transient_solve(kernel, ones)
    m2 = _transient_solve(kernel, 2.0 * m1 - 1.0)
    means = np.concatenate(([0.0], m1))
    variances = np.concatenate(([0.0], np.maximum(m2 - m1**2, 0.0)))
    return [TtaStats(mean=float(m), variance=float(v), source="exact") for m, v in zip(means, variances)]


def idle_transition_batch(row_cdfs: np.ndarray, levels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One idle draw for a batch of chains sharing one kernel."""
    cdf_rows = row_cdfs[levels]
    u = rng.random(levels.shape[0])
    return (cdf_rows < u[:, None]).sum(axis=1)


def sample_idle_step(kernel: DeteriorationKernel, h: int, rng: np.random.Generator) -> int:
    """Draw the next CI level from row h of the kernel."""
    if not 0 <= h < kernel.num_states:
        raise DomainError(f"level {h} outside 0..{kernel.num_states - 1}")
    return int(idle_transition_batch(kernel.row_cdfs, np.array([h]), rng)[0])


def estimate_tta_mc(
    kernel: DeteriorationKernel, start: int, num_runs: int, seed: int
) -> TtaStats:
    """Monte-Carlo absorption-time statistics from a fixed start level.

    Runs ``num_runs`` independent idle rollouts and reports the sample mean
    and unbiased sample variance.  Deterministic for a fixed seed.
    """
    if num_runs < 1:
        raise DomainError("num_runs must be >= 1")
    if not 0 <= start < kernel.num_states:
        raise DomainError(f"start level {start} outside the kernel grid")
    rng = np.random.default_rng(seed)
    levels = np.full(num_runs, start, dtype=np.int64)
    steps = np.zeros(num_runs, dtype=np.int64)
    total = 0
    while True:
        alive = levels > 0
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        levels[idx] = idle_transition_batch(kernel.row_cdfs, levels[idx], rng)
        steps[idx] += 1
        total += idx.size
        if total > _MC_STEP_CAP + num_runs * kernel.num_states:
            raise ModelError("Monte-Carlo TTA did not absorb; kernel makes no progress")
    mean = float(steps.mean())
    variance = float(steps.var(ddof=1)) if num_runs > 1 else 0.0
    return TtaStats(mean=mean, variance=variance, source="monte_carlo", num_runs=num_runs)


@dataclass(frozen=True)
class AgentModel:
    """One agent: wear parameters, its kernel, and full-CI TTA statistics."""

    agent_id: int
    params: WeibullParams
    kernel: DeteriorationKernel
    tta: TtaStats


def make_agent(
    agent_id: int,
    params: WeibullParams,
    *,
    tta_source: str = "monte_carlo",
    num_runs: int = 1000,
    seed: int = 0,
    num_states: int = NUM_CI_LEVELS,
) -> AgentModel:
    """Build an agent with a precomputed kernel and TTA stats from full CI."""
    kernel = build_kernel(params, num_states=num_states)
    if tta_source == "exact":
        tta = expected_tta_exact(kernel)[kernel.full_level]
    elif tta_source == "monte_carlo":
        tta = estimate_tta_mc(kernel, kernel.full_level, num_runs, seed)
    else:
        raise DomainError(f"unknown tta_source {tta_source!r}")
    return AgentModel(agent_id=agent_id, params=params, kernel=kernel, tta=tta)


AGENT_TABLE_VERSION = 1


def save_agent_table(path, agents: list[AgentModel]) -> None:
    """Write agents (id, shape, scale, TTA stats) to a versioned JSON file."""
    payload = {
        "version": AGENT_TABLE_VERSION,
        "num_states": agents[0].kernel.num_states if agents else NUM_CI_LEVELS,
        "agents": [
            {
                "id": a.agent_id,
                "shape": a.params.shape,
                "scale": a.params.scale,
                "tta_mean": a.tta.mean,
                "tta_var": a.tta.variance,
                "tta_source": a.tta.source,
                "tta_runs": a.tta.num_runs,
            }
            for a in agents
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_agent_table(path) -> list[AgentModel]:
    """Rebuild agents from a table written by :func:`save_agent_table`.

    Kernels are reconstructed from the stored parameters; TTA statistics are
    taken from the file so partitioning reuses the original estimates.
    """
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != AGENT_TABLE_VERSION:
        raise ModelError(f"unsupported agent table version {payload.get('version')!r}")
    num_states = payload.get("num_states", NUM_CI_LEVELS)
    agents = []
    for rec in payload["agents"]:
        params = WeibullParams(shape=rec["shape"], scale=rec["scale"])
        kernel = build_kernel(params, num_states=num_states)
        tta = TtaStats(
            mean=rec["tta_mean"],
            variance=rec["tta_var"],
            source=rec["tta_source"],
            num_runs=rec.get("tta_runs", 0),
        )
        agents.append(AgentModel(agent_id=rec["id"], params=params, kernel=kernel, tta=tta))
    return agents
