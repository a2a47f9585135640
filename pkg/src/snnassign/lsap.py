"""Linear sum assignment instances.

Generation of random cost matrices, the affine objective, the square-output
truncation used for unbalanced problems, and the exact optimum via the
Hungarian solver (zero-padded when there are more workers than jobs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracles

COST_LOW = 1.0
COST_HIGH = 100.0
INPUT_SCALE = 100.0  # network inputs are cost / INPUT_SCALE


@dataclass(frozen=True)
class AssignmentInstance:
    """One cost matrix, workers (rows) x jobs (columns), n >= m."""

    cost: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cost, dtype=float)
        if c.ndim != 2:
            raise ValueError(f"cost must be a matrix, got shape {c.shape}")
        n, m = c.shape
        if n < m or m < 1:
            raise ValueError(f"need n >= m >= 1 workers x jobs, got ({n}, {m})")
        if not np.all(np.isfinite(c)):
            raise ValueError("cost entries must be finite")
        object.__setattr__(self, "cost", c)

    @property
    def n(self) -> int:
        return self.cost.shape[0]

    @property
    def m(self) -> int:
        return self.cost.shape[1]


def sample_costs(n: int, m: int, count: int, rng) -> np.ndarray:
    """Batch of i.i.d. uniform cost matrices, shape (count, n, m)."""
    if n < m or m < 1:
        raise ValueError(f"need n >= m >= 1, got ({n}, {m})")
    if count < 1:
        raise ValueError("count must be >= 1")
    return rng.uniform(COST_LOW, COST_HIGH, size=(count, n, m))


def gen_lsap(n: int, m: int, seed) -> AssignmentInstance:
    rng = np.random.default_rng(seed)
    return AssignmentInstance(sample_costs(n, m, 1, rng)[0])


def lsap_cost(inst: AssignmentInstance, x) -> float:
    """Affine objective tr(H^T X).  The gradient in x is H itself."""
    x = np.asarray(x, dtype=float)
    if x.shape != inst.cost.shape:
        raise ValueError(
            f"assignment shape {x.shape} != cost shape {inst.cost.shape}")
    return float((inst.cost * x).sum())


def truncate_square_output(x_square, m: int) -> np.ndarray:
    """Keep the first m columns of a square assignment.

    When the input is a permutation matrix the result satisfies the
    unbalanced constraints exactly: kept columns still sum to one and every
    row sums to at most one.  Accepts a batch (..., N, N).
    """
    x = np.asarray(x_square, dtype=float)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise ValueError(f"expected a square matrix, got shape {x.shape}")
    if m < 1 or m > x.shape[-1]:
        raise ValueError(f"cannot keep {m} of {x.shape[-1]} columns")
    return x[..., :m]


def lsap_oracle(inst: AssignmentInstance):
    """Optimal assignment for an instance, returned as (Permutation, cost).

    Unbalanced instances are zero-padded to a square problem so idle workers
    park on free dummy jobs; the returned permutation is on the square
    problem and the cost counts real jobs only.
    """
    if inst.n == inst.m:
        return oracles.hungarian_min(inst.cost)
    padded = np.zeros((inst.n, inst.n))
    padded[:, :inst.m] = inst.cost
    return oracles.hungarian_min(padded)


def assigned_cost(cost, perm: oracles.Permutation, m: int) -> float:
    """Cost of a square-permutation assignment restricted to the first m jobs."""
    rows = np.asarray(perm.mapping[:m])
    return float(np.asarray(cost, dtype=float)[rows, np.arange(m)].sum())
