"""Two-tier downlink scenarios.

One macro BS at the origin serving a 1 km cell, small-cell BSs on a 500 m
ring, UEs uniform over the disk.  Channels combine distance path loss,
log-normal shadowing and Rayleigh power fading.  On top of the scenarios:
per-link rates, WMMSE power control for a fixed association, an alternating
Hungarian+WMMSE baseline, and a joint brute-force oracle for small N.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import oracles

MACRO_RADIUS_M = 1000.0
SMALL_RING_M = 500.0
MIN_DIST_M = 10.0
PATH_LOSS_FIXED_DB = 120.9
PATH_LOSS_SLOPE_DB = 37.6  # per decade of distance in km
SHADOWING_STD_DB = 8.0
NOISE_DBM = -114.0

ORACLE_LIMIT = 5
WMMSE_TOL = 1e-8
BASELINE_WMMSE_ITERATIONS = 100
ORACLE_WMMSE_ITERATIONS = 200


def dbm_to_watt(dbm) -> float:
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def path_loss_db(distance_m):
    """Distance-only path loss; the model takes distances in kilometers."""
    d_km = np.asarray(distance_m, dtype=float) / 1000.0
    return PATH_LOSS_FIXED_DB + PATH_LOSS_SLOPE_DB * np.log10(d_km)


def sample_shadowing_db(rng, shape):
    return rng.normal(0.0, SHADOWING_STD_DB, size=shape)


def sample_fading(rng, shape):
    # squared magnitude of a unit circularly symmetric complex Gaussian
    return rng.exponential(1.0, size=shape)


def channel_gains(distance_m, rng) -> np.ndarray:
    """Linear channel power gains for the given distances."""
    shape = np.shape(distance_m)
    loss_db = path_loss_db(distance_m) + sample_shadowing_db(rng, shape)
    return 10.0 ** (-loss_db / 10.0) * sample_fading(rng, shape)


@dataclass
class CellScenario:
    bs_positions: np.ndarray   # (n, 2) meters
    ue_positions: np.ndarray   # (n, 2) meters
    power_budgets: np.ndarray  # (n,) watts
    noise_power: float         # watts
    channel_gain: np.ndarray   # (n, n), [i, j] = linear gain BS i -> UE j

    def __post_init__(self):
        g = np.asarray(self.channel_gain, dtype=float)
        n = g.shape[0]
        if g.shape != (n, n) or n < 1:
            raise ValueError(f"channel gain must be square, got {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("channel gains must be finite and positive")
        p = np.asarray(self.power_budgets, dtype=float)
        if p.shape != (n,) or np.any(p <= 0):
            raise ValueError("need one positive power budget per BS")
        if not self.noise_power > 0:
            raise ValueError("noise power must be positive")
        self.channel_gain = g
        self.power_budgets = p
        self.bs_positions = np.asarray(self.bs_positions, dtype=float)
        self.ue_positions = np.asarray(self.ue_positions, dtype=float)

    @property
    def n_nodes(self) -> int:
        return self.channel_gain.shape[0]


def _uniform_disk(rng, shape):
    r = MACRO_RADIUS_M * np.sqrt(rng.uniform(size=shape))
    t = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)


def _sample_geometry(n, count, rng):
    bs = np.zeros((count, n, 2))
    ang = rng.uniform(0.0, 2.0 * np.pi, size=(count, n - 1))
    bs[:, 1:, 0] = SMALL_RING_M * np.cos(ang)
    bs[:, 1:, 1] = SMALL_RING_M * np.sin(ang)
    ue = _uniform_disk(rng, (count, n))
    while True:  # re-draw UEs parked closer than the minimum BS separation
        d = np.linalg.norm(ue[:, :, None, :] - bs[:, None, :, :], axis=-1)
        bad = (d < MIN_DIST_M).any(axis=2)
        if not bad.any():
            break
        ue[bad] = _uniform_disk(rng, (int(bad.sum()),))
    return bs, ue


def sample_gain_matrices(n: int, count: int, rng) -> np.ndarray:
    """Gain tensors only, shape (count, n, n); the cheap path for training."""
    if n < 2:
        raise ValueError("need at least two nodes (one macro, one small cell)")
    if count < 1:
        raise ValueError("count must be >= 1")
    bs, ue = _sample_geometry(n, count, rng)
    d = np.linalg.norm(bs[:, :, None, :] - ue[:, None, :, :], axis=-1)
    return channel_gains(d, rng)


def budget_vector(n: int, p_macro_dbm, p_small_dbm) -> np.ndarray:
    budgets = np.full(n, dbm_to_watt(p_small_dbm))
    budgets[0] = dbm_to_watt(p_macro_dbm)
    return budgets


def sample_scenarios(n, p_macro_dbm, p_small_dbm, count, rng):
    """Draw `count` independent scenarios as a list of CellScenario."""
    if n < 2:
        raise ValueError("need at least two nodes (one macro, one small cell)")
    bs, ue = _sample_geometry(n, count, rng)
    d = np.linalg.norm(bs[:, :, None, :] - ue[:, None, :, :], axis=-1)
    gains = channel_gains(d, rng)
    budgets = budget_vector(n, p_macro_dbm, p_small_dbm)
    noise = dbm_to_watt(NOISE_DBM)
    return [CellScenario(bs[k], ue[k], budgets.copy(), noise, gains[k])
            for k in range(count)]


def gen_cell_scenario(n, p_macro_dbm, p_small_dbm, seed) -> CellScenario:
    rng = np.random.default_rng(seed)
    return sample_scenarios(n, p_macro_dbm, p_small_dbm, 1, rng)[0]


def link_rates(gains, p, noise) -> np.ndarray:
    """r[i, j] = log(1 + p_i h_ij / (noise + sum_{k != i} p_k h_kj)), in nats.

    Broadcasts over leading batch axes of gains (..., n, n) and p (..., n).
    """
    gains = np.asarray(gains, dtype=float)
    p = np.asarray(p, dtype=float)
    ph = p[..., :, None] * gains
    total = noise + ph.sum(axis=-2, keepdims=True)
    other = total - ph  # interference plus noise seen under each server
    return np.log1p(ph / other)


def _check_power(scn: CellScenario, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (scn.n_nodes,):
        raise ValueError(f"power vector shape {p.shape} != ({scn.n_nodes},)")
    if np.any(p < 0) or np.any(p > scn.power_budgets * (1 + 1e-12)):
        raise ValueError("power vector violates the per-BS budgets")
    return p


def rate(scn: CellScenario, p, i: int, j: int) -> float:
    """Achievable rate of UE j when served by BS i at transmit powers p."""
    p = _check_power(scn, p)
    return float(link_rates(scn.channel_gain, p, scn.noise_power)[i, j])


def rate_matrix(scn: CellScenario, p) -> np.ndarray:
    p = _check_power(scn, p)
    return link_rates(scn.channel_gain, p, scn.noise_power)


def sum_rate(scn: CellScenario, x, p) -> float:
    """Association-weighted network sum rate; x may be soft or hard."""
    x = np.asarray(x, dtype=float)
    if x.shape != scn.channel_gain.shape:
        raise ValueError(
            f"association shape {x.shape} != {scn.channel_gain.shape}")
    return float((x * rate_matrix(scn, p)).sum())


def sum_rate_with_grads(gains, x, p, noise):
    """Batched objective with analytic gradients.

    Returns (values (...,), d/dx (..., n, n), d/dp (..., n)); d/dx is the
    rate matrix itself because the objective is linear in x.
    """
    gains = np.asarray(gains, dtype=float)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    ph = p[..., :, None] * gains
    total = noise + ph.sum(axis=-2, keepdims=True)   # T_j, broadcast over rows
    other = total - ph                               # D_ij
    r = np.log1p(ph / other)
    val = (x * r).sum(axis=(-2, -1))
    # d/dp_m = sum_j h_mj A_j + sum_j x_mj h_mj / D_mj
    # with A_j = sum_i x_ij (1/T_j - 1/D_ij)
    a = (x * (1.0 / total - 1.0 / other)).sum(axis=-2)
    dp = (gains * a[..., None, :]).sum(axis=-1) + (x * gains / other).sum(axis=-1)
    return val, r, dp


def _links_sum_rate(g2, v, noise):
    # receiver-major g2[..., j, k]; v are transmit amplitudes per link
    rx = (g2 * (v[..., None, :] ** 2)).sum(axis=-1)
    own = np.diagonal(g2, axis1=-2, axis2=-1) * v ** 2
    return np.log1p(own / (noise + rx - own)).sum(axis=-1)


def _wmmse(g_amp, p_link_max, noise, iterations, tol=None):
    """Scalar-channel weighted-MMSE power control.

    g_amp[..., j, k] is the channel amplitude from the transmitter of link k
    to the receiver of link j.  Starts from full power and applies the
    closed-form receiver / weight / amplitude updates, clamping amplitudes
    to the budget.  Returns (final per-link powers, per-iteration achieved
    sum rates); the rate sequence is non-decreasing.
    """
    g2 = g_amp ** 2
    diag = np.diagonal(g_amp, axis1=-2, axis2=-1)
    vmax = np.sqrt(p_link_max)
    v = vmax.copy()
    trace = []
    for _ in range(iterations):
        rx = noise + (g2 * (v[..., None, :] ** 2)).sum(axis=-1)
        u = diag * v / rx
        w = 1.0 / (1.0 - u * diag * v)
        num = w * u * diag
        den = ((w * u ** 2)[..., :, None] * g2).sum(axis=-2)
        v = np.clip(num / den, 0.0, vmax)
        trace.append(_links_sum_rate(g2, v, noise))
        if tol is not None and len(trace) >= 2:
            prev, cur = trace[-2], trace[-1]
            if np.all(np.abs(cur - prev) <= tol * np.maximum(1.0, np.abs(cur))):
                break
    # sqrt()**2 can overshoot the budget by one ulp; the contract is exact
    return np.minimum(v ** 2, p_link_max), trace


def _link_channels(scn: CellScenario, mapping: np.ndarray):
    # link j serves UE j from BS mapping[j]
    g_amp = np.sqrt(scn.channel_gain[mapping].T)
    p_max = scn.power_budgets[mapping]
    return g_amp, p_max


def wmmse_power(scn: CellScenario, assignment: oracles.Permutation,
                iterations: int, trace: bool = False):
    """Power control for a fixed association.

    Returns the per-BS power vector (trace=False) or a (powers, rates)
    tuple where rates holds the achieved sum rate after every iteration.
    Powers always satisfy 0 <= p_i <= budget_i.
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    if assignment.n != scn.n_nodes:
        raise ValueError(
            f"assignment on {assignment.n} nodes, scenario has {scn.n_nodes}")
    mapping = np.asarray(assignment.mapping)
    g_amp, p_max = _link_channels(scn, mapping)
    p_link, rates = _wmmse(g_amp, p_max, scn.noise_power, iterations,
                           tol=WMMSE_TOL)
    p = np.empty(scn.n_nodes)
    p[mapping] = p_link
    if trace:
        return p, [float(r) for r in rates]
    return p


def hungarian_wmmse_baseline(scn: CellScenario, rounds: int = 10,
                             wmmse_iterations: int = BASELINE_WMMSE_ITERATIONS):
    """Alternate the best association at fixed power with WMMSE at fixed
    association; keeps the best iterate.

    Returns (Permutation, power vector, sum rate).
    """
    if rounds < 1:
        raise ValueError("need at least one round")
    p = scn.power_budgets.copy()
    best = None
    last_mapping = None
    for _ in range(rounds):
        perm, _ = oracles.hungarian_min(-rate_matrix(scn, p))
        p = wmmse_power(scn, perm, wmmse_iterations)
        value = sum_rate(scn, perm.matrix(), p)
        if best is None or value > best[2]:
            best = (perm, p, value)
        if perm.mapping == last_mapping:  # alternation converged
            break
        last_mapping = perm.mapping
    return best


def joint_brute_oracle(scn: CellScenario,
                       wmmse_iterations: int = ORACLE_WMMSE_ITERATIONS):
    """Best association over all N! choices, each with WMMSE-refined powers.

    Capped at N = 5.  Returns (Permutation, power vector, sum rate).
    """
    n = scn.n_nodes
    if n > ORACLE_LIMIT:
        raise ValueError(f"joint enumeration is capped at N={ORACLE_LIMIT}, got {n}")
    perms = np.asarray(list(itertools.permutations(range(n))))
    # batch every association through one WMMSE run
    g_amp = np.sqrt(np.swapaxes(scn.channel_gain[perms], -1, -2))
    p_max = scn.power_budgets[perms]
    p_link, rates = _wmmse(g_amp, p_max, scn.noise_power, wmmse_iterations,
                           tol=WMMSE_TOL)
    values = rates[-1]
    q = int(np.argmax(values))  # first maximizer: lexicographic tie-break
    mapping = perms[q]
    p = np.empty(n)
    p[mapping] = p_link[q]
    return oracles.Permutation(tuple(mapping)), p, float(values[q])
