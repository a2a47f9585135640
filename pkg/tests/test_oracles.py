import itertools

import numpy as np
import pytest

from snnassign import oracles
from snnassign.sinkhorn import sinkhorn_operator


def test_permutation_validation():
    p = oracles.Permutation((2, 0, 1))
    assert p.n == 3
    with pytest.raises(ValueError):
        oracles.Permutation((0, 0, 1))
    with pytest.raises(ValueError):
        oracles.Permutation((0, 3, 1))


def test_permutation_matrix_row_col_sums():
    p = oracles.Permutation((1, 2, 0, 3))
    x = p.matrix()
    assert x[1, 0] == 1.0 and x[2, 1] == 1.0
    assert np.array_equal(x.sum(axis=0), np.ones(4))
    assert np.array_equal(x.sum(axis=1), np.ones(4))


def test_hungarian_single_cell():
    p, v = oracles.hungarian_min(np.array([[7.0]]))
    assert p.mapping == (0,)
    assert v == 7.0


def test_hungarian_zero_matrix_tie_break():
    p, v = oracles.hungarian_min(np.zeros((4, 4)))
    assert v == 0.0
    assert p.mapping == (0, 1, 2, 3)  # lexicographic-minimal on total ties


def test_hungarian_rejects_nonsquare():
    with pytest.raises(ValueError):
        oracles.hungarian_min(np.zeros((2, 3)))


def test_hungarian_rejects_nonfinite():
    with pytest.raises(ValueError):
        oracles.hungarian_min(np.array([[1.0, np.inf], [0.0, 1.0]]))


def test_hungarian_matches_enumeration(rng):
    # dual-route optimality check over random continuous and integer costs
    for trial in range(200):
        n = int(rng.integers(2, 7))
        if trial % 2:
            cost = rng.integers(1, 101, size=(n, n)).astype(float)
        else:
            cost = rng.normal(size=(n, n))
        p, v = oracles.hungarian_min(cost)
        pb, vb = oracles.brute_force_min(cost)
        assert v == pytest.approx(vb, abs=1e-9)
        direct = sum(cost[p.mapping[j], j] for j in range(n))
        assert v == pytest.approx(direct, abs=1e-12)


def test_brute_force_limit():
    with pytest.raises(ValueError):
        oracles.brute_force_min(np.zeros((11, 11)))


def test_brute_force_2x2():
    p, v = oracles.brute_force_min(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert p.mapping == (0, 1)
    assert v == 0.0


def test_brute_force_constant_tie_break():
    p, v = oracles.brute_force_min(np.full((4, 4), 2.5))
    assert p.mapping == (0, 1, 2, 3)  # first permutation in lexicographic order
    assert v == 10.0


def test_brute_force_custom_objective(rng):
    # quadratic objective: enumerate independently here
    cost = rng.normal(size=(4, 4))

    def objective(x):
        return float(((cost * x).sum()) ** 2 - (cost * x).max())

    p, v = oracles.brute_force_min(cost, objective)
    best = min(
        (objective(oracles.Permutation(pm).matrix()), pm)
        for pm in itertools.permutations(range(4)))
    assert v == pytest.approx(best[0], abs=1e-12)


def test_brute_force_generic_matches_linear_fast_path(rng):
    for _ in range(20):
        cost = rng.normal(size=(5, 5))
        p1, v1 = oracles.brute_force_min(cost)
        p2, v2 = oracles.brute_force_min(
            cost, lambda x: float((cost * x).sum()))
        assert p1.mapping == p2.mapping
        assert v1 == pytest.approx(v2, abs=1e-12)


def test_harden_fixed_point():
    p = oracles.Permutation((2, 0, 1))
    assert oracles.harden(p.matrix()).mapping == p.mapping


def test_harden_uniform_tie_break():
    p = oracles.harden(np.full((3, 3), 1.0 / 3.0))
    assert p.mapping == (0, 1, 2)


def test_harden_matches_enumeration_on_sinkhorn_output(rng):
    for _ in range(50):
        a = rng.standard_normal((3, 3))
        soft = sinkhorn_operator(a, tau=5.0, iterations=4)
        p = oracles.harden(soft)
        best = max(itertools.permutations(range(3)),
                   key=lambda pm: sum(soft[pm[j], j] for j in range(3)))
        got = sum(soft[p.mapping[j], j] for j in range(3))
        want = sum(soft[best[j], j] for j in range(3))
        assert got == pytest.approx(want, abs=1e-12)


def test_affinity_of_permutation_is_n():
    p = oracles.Permutation((1, 0, 3, 2))
    assert oracles.affinity(p.matrix()) == 4.0


def test_affinity_uniform_dsm():
    assert oracles.affinity(np.full((4, 4), 0.25)) == pytest.approx(1.0, abs=0)


def test_affinity_harden_duality(rng):
    # affinity(soft) must equal tr(soft^T . matrix(harden(soft))) exactly
    for _ in range(50):
        soft = rng.uniform(0.0, 1.0, size=(5, 5))
        p = oracles.harden(soft)
        gathered = float(np.sum(soft[np.asarray(p.mapping), np.arange(5)]))
        assert oracles.affinity(soft) == gathered
