"""Exact assignment machinery.

A shortest-augmenting-path Hungarian solver, factorial-time enumeration for
arbitrary objectives, and the projection of soft doubly stochastic outputs
onto hard permutations.  These are the references every learned solver in
this package is scored against.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

BRUTE_FORCE_LIMIT = 10
_CHUNK = 200_000


@dataclass(frozen=True)
class Permutation:
    """Bijection stored column-major: mapping[j] is the row assigned to
    column j."""

    mapping: tuple

    def __post_init__(self):
        mapping = tuple(int(v) for v in self.mapping)
        object.__setattr__(self, "mapping", mapping)
        if not mapping or sorted(mapping) != list(range(len(mapping))):
            raise ValueError(
                f"{mapping} is not a bijection on 0..{len(mapping) - 1}")

    @property
    def n(self) -> int:
        return len(self.mapping)

    def matrix(self) -> np.ndarray:
        x = np.zeros((self.n, self.n))
        x[np.asarray(self.mapping), np.arange(self.n)] = 1.0
        return x


def _check_cost(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    return c


def hungarian_min(cost):
    """Minimum-cost perfect matching, O(N^3).

    Shortest augmenting paths with row/column potentials (the
    Jonker-Volgenant scheme).  Ties resolve toward lower indices, so a fully
    degenerate cost matrix yields the identity mapping.  Returns
    (Permutation, total cost).
    """
    c = _check_cost(cost)
    n = c.shape[0]
    u = np.zeros(n)                        # row potentials
    v = np.zeros(n + 1)                    # column potentials, slot n virtual
    match = np.full(n + 1, -1, dtype=int)  # match[j]: row assigned to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(n):
        match[n] = i
        j0 = n
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            row = c[i0]
            delta = np.inf
            j1 = -1
            for j in range(n):
                if used[j]:
                    continue
                cur = row[j] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] < 0:
                break
        while j0 != n:  # augment back along the recorded path
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    mapping = tuple(int(r) for r in match[:n])
    total = float(c[match[:n], np.arange(n)].sum())
    return Permutation(mapping), total


def brute_force_min(cost, objective=None):
    """Exact minimizer over all N! permutations.

    `objective` maps a dense permutation matrix to a scalar; when omitted
    the affine cost tr(cost^T X) is evaluated in vectorized sweeps.  Ties go
    to the first minimizer in lexicographic mapping order.  Capped at
    N = 10.  Returns (Permutation, value).
    """
    c = _check_cost(cost)
    n = c.shape[0]
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"enumeration is capped at N={BRUTE_FORCE_LIMIT}, got {n}")
    cols = np.arange(n)
    best_map = None
    best_val = np.inf
    perms = itertools.permutations(range(n))
    if objective is None:
        while True:
            chunk = list(itertools.islice(perms, _CHUNK))
            if not chunk:
                break
            rows = np.asarray(chunk)
            vals = c[rows, cols].sum(axis=1)
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val = float(vals[k])
                best_map = chunk[k]
    else:
        for perm in perms:
            x = np.zeros((n, n))
            x[perm, cols] = 1.0
            val = float(objective(x))
            if val < best_val:
                best_val = val
                best_map = perm
    return Permutation(best_map), best_val


def harden(soft):
    """Project onto the permutation maximizing tr(soft^T X)."""
    s = np.asarray(soft, dtype=float)
    perm, _ = hungarian_min(-s)
    return perm


def affinity(soft) -> float:
    """max over permutations X of tr(soft^T X).

    Equals tr(soft^T harden(soft)) by construction; for a doubly stochastic
    matrix it approaches N as the matrix approaches a permutation.
    """
    s = np.asarray(soft, dtype=float)
    perm = harden(s)
    return float(s[np.asarray(perm.mapping), np.arange(perm.n)].sum())
