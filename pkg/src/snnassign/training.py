"""Unsupervised training of Sinkhorn-terminated networks.

Fresh mini-batches are generated every iteration, the problem's own
objective is the loss (no labels anywhere), validation runs periodically on
a fixed set, and the parameters with the best validation cost are returned.
Also holds checkpoint serialization with metadata and evaluation against
the exact baselines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import cell, lsap, nn, oracles
from .sinkhorn import SinkhornConfig


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


LSAP_HIDDEN = (288, 144, 80)
CELL_SHARED_HIDDEN = (576, 432)
CELL_ASSIGN_HIDDEN = (360, 216, 144)
CELL_POWER_HIDDEN = (288, 144)
STANDARDIZATION_SAMPLES = 10_000
STD_FLOOR = 1e-6

# Default activation used while training.  The sharp inference-grade setting
# (tau=20, K=4) saturates to exact 0/1 outputs within a few SGD steps at
# short budgets and its gradient underflows; a softer operator keeps the
# training signal alive.  Temperature picked by validation sweeps.
TRAIN_SINKHORN = SinkhornConfig(tau=10.0, cascades=2, total_iterations=20)

LOG_HEADER = ["iteration", "trainLoss", "valCost", "bestSoFar"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    iterations: int = 20_000
    validation_size: int = 1000
    test_size: int = 1000
    validation_period: int = 500
    seed: int = 0
    sinkhorn: SinkhornConfig = TRAIN_SINKHORN

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 0:
            raise ValueError("iteration count must be >= 0")
        for name in ("batch_size", "validation_size", "test_size",
                     "validation_period"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class LsapProblem:
    n: int
    m: int
    hidden: tuple = LSAP_HIDDEN

    def __post_init__(self):
        if self.n < self.m or self.m < 1:
            raise ValueError(f"need n >= m >= 1, got ({self.n}, {self.m})")


@dataclass(frozen=True)
class CellProblem:
    n: int
    p_macro_dbm: float = 20.0
    p_small_dbm: float = 10.0
    shared_hidden: tuple = CELL_SHARED_HIDDEN
    assign_hidden: tuple = CELL_ASSIGN_HIDDEN
    power_hidden: tuple = CELL_POWER_HIDDEN

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two nodes")

    def budgets(self) -> np.ndarray:
        return cell.budget_vector(self.n, self.p_macro_dbm, self.p_small_dbm)


@dataclass
class LsapModel:
    """A trained (or initialized) assignment network plus what it needs to run."""

    params: nn.MlpParams
    sinkhorn: SinkhornConfig
    n: int
    m: int

    def infer_soft(self, costs) -> np.ndarray:
        """(B, n, m) costs -> (B, n, n) soft square assignments."""
        costs = np.asarray(costs, dtype=float)
        flat = costs.reshape(-1, self.n * self.m) / lsap.INPUT_SCALE
        out, _ = nn.forward(self.params, flat, sinkhorn=self.sinkhorn)
        return out.reshape(-1, self.n, self.n)

    def snapshot(self) -> "LsapModel":
        return LsapModel(self.params.copy(), self.sinkhorn, self.n, self.m)


@dataclass
class JointModel:
    """Shared trunk with an assignment head (Sinkhorn-terminated) and a power
    head (sigmoid-terminated, scaled by the budgets at the problem layer)."""

    shared: nn.MlpParams
    assignment_head: nn.MlpParams
    power_head: nn.MlpParams
    sinkhorn: SinkhornConfig
    input_mean: np.ndarray   # per-entry mean of log10 channel gains
    input_scale: np.ndarray  # per-entry std of log10 channel gains
    n: int

    def standardize(self, gains) -> np.ndarray:
        flat = np.log10(np.asarray(gains, dtype=float).reshape(-1, self.n * self.n))
        return (flat - self.input_mean) / self.input_scale

    def infer(self, gains, budgets):
        """(B, n, n) gains -> (soft (B, n, n), powers (B, n))."""
        trunk, _ = nn.forward(self.shared, self.standardize(gains))
        soft, _ = nn.forward(self.assignment_head, trunk, sinkhorn=self.sinkhorn)
        out, _ = nn.forward(self.power_head, trunk)
        return soft.reshape(-1, self.n, self.n), out * np.asarray(budgets, dtype=float)

    def snapshot(self) -> "JointModel":
        return JointModel(self.shared.copy(), self.assignment_head.copy(),
                          self.power_head.copy(), self.sinkhorn,
                          self.input_mean.copy(), self.input_scale.copy(), self.n)


def forward_joint(model: JointModel, scn: cell.CellScenario):
    """Single-scenario inference: (soft association (n, n), powers (n,))."""
    if scn.n_nodes != model.n:
        raise ValueError(f"model trained for n={model.n}, scenario has {scn.n_nodes}")
    soft, p = model.infer(scn.channel_gain[None], scn.power_budgets)
    return soft[0], p[0]


def train(problem, cfg: TrainConfig):
    """Mini-batch SGD on the problem's own objective.

    Returns (model, log) where log rows are
    (iteration, trainLoss, valCost, bestSoFar); the returned model is the
    validation-best snapshot, or the final (initial) one if no validation
    point was reached.
    """
    if isinstance(problem, LsapProblem):
        return _train_lsap(problem, cfg)
    if isinstance(problem, CellProblem):
        return _train_cell(problem, cfg)
    raise TypeError(f"unknown problem type {type(problem).__name__}")


def _validation_due(t, cfg):
    return t % cfg.validation_period == 0 or t == cfg.iterations


def _train_lsap(problem: LsapProblem, cfg: TrainConfig):
    n, m = problem.n, problem.m
    init_ss, data_ss, val_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    dims = [n * m, *problem.hidden, n * n]
    acts = ["relu"] * len(problem.hidden) + ["sinkhorn-output"]
    params = nn.init_params(dims, acts, init_ss)
    val_costs = lsap.sample_costs(n, m, cfg.validation_size,
                                  np.random.default_rng(val_ss))
    rng = np.random.default_rng(data_ss)
    model = LsapModel(params, cfg.sinkhorn, n, m)
    best_model = model.snapshot()
    best_cost = np.inf
    log = []
    b = cfg.batch_size
    for t in range(1, cfg.iterations + 1):
        costs = lsap.sample_costs(n, m, b, rng)
        x_in = costs.reshape(b, n * m) / lsap.INPUT_SCALE
        try:
            soft, tape = nn.forward(params, x_in, record=True,
                                    sinkhorn=cfg.sinkhorn)
            soft_sq = soft.reshape(b, n, n)
            loss = float((costs * soft_sq[:, :, :m]).sum(axis=(1, 2)).mean())
            if not np.isfinite(loss):
                raise FloatingPointError("non-finite loss")
            grad_out = np.zeros((b, n, n))
            grad_out[:, :, :m] = costs / b  # objective gradient; dummies get none
            grads, _ = nn.backward(params, tape, grad_out.reshape(b, -1))
            params = nn.sgd_step(params, [grads], cfg.learning_rate)
        except FloatingPointError as exc:
            raise TrainingDiverged(
                f"training diverged at iteration {t}: {exc}") from exc
        if _validation_due(t, cfg):
            model = LsapModel(params, cfg.sinkhorn, n, m)
            val_cost = _lsap_mean_cost(model, val_costs)
            if val_cost < best_cost:
                best_cost = val_cost
                best_model = model.snapshot()
            log.append((t, loss, val_cost, best_cost))
    if cfg.iterations == 0:
        best_model = LsapModel(params, cfg.sinkhorn, n, m)
    return best_model, log


def _lsap_mean_cost(model: LsapModel, costs) -> float:
    soft = model.infer_soft(costs)
    total = 0.0
    for k in range(costs.shape[0]):
        perm = oracles.harden(soft[k])
        total += lsap.assigned_cost(costs[k], perm, model.m)
    return total / costs.shape[0]


def _train_cell(problem: CellProblem, cfg: TrainConfig):
    n = problem.n
    init_ss, data_ss, val_ss, stats_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    stats = cell.sample_gain_matrices(n, STANDARDIZATION_SAMPLES,
                                      np.random.default_rng(stats_ss))
    logg = np.log10(stats.reshape(STANDARDIZATION_SAMPLES, -1))
    mu = logg.mean(axis=0)
    sd = np.maximum(logg.std(axis=0), STD_FLOOR)

    sh_ss, as_ss, pw_ss = init_ss.spawn(3)
    trunk_dim = problem.shared_hidden[-1]
    shared = nn.init_params([n * n, *problem.shared_hidden],
                            ["relu"] * len(problem.shared_hidden), sh_ss)
    assign = nn.init_params(
        [trunk_dim, *problem.assign_hidden, n * n],
        ["relu"] * len(problem.assign_hidden) + ["sinkhorn-output"], as_ss)
    power = nn.init_params([trunk_dim, *problem.power_hidden, n],
                           ["relu"] * len(problem.power_hidden) + ["sigmoid"], pw_ss)
    budgets = problem.budgets()
    noise = cell.dbm_to_watt(cell.NOISE_DBM)
    val_gains = cell.sample_gain_matrices(n, cfg.validation_size,
                                          np.random.default_rng(val_ss))
    rng = np.random.default_rng(data_ss)

    def snapshot():
        return JointModel(shared.copy(), assign.copy(), power.copy(),
                          cfg.sinkhorn, mu.copy(), sd.copy(), n)

    best_model = snapshot()
    best_cost = np.inf
    log = []
    b = cfg.batch_size
    for t in range(1, cfg.iterations + 1):
        gains = cell.sample_gain_matrices(n, b, rng)
        x_in = (np.log10(gains.reshape(b, -1)) - mu) / sd
        try:
            trunk, tape_sh = nn.forward(shared, x_in, record=True)
            soft, tape_as = nn.forward(assign, trunk, record=True,
                                       sinkhorn=cfg.sinkhorn)
            out, tape_pw = nn.forward(power, trunk, record=True)
            p = out * budgets
            x_soft = soft.reshape(b, n, n)
            values, dx, dp = cell.sum_rate_with_grads(gains, x_soft, p, noise)
            loss = float(-values.mean())
            if not np.isfinite(loss):
                raise FloatingPointError("non-finite loss")
            g_assign = (-dx / b).reshape(b, -1)
            g_power = (-dp / b) * budgets  # through the budget scaling
            grads_as, d_trunk_as = nn.backward(assign, tape_as, g_assign)
            grads_pw, d_trunk_pw = nn.backward(power, tape_pw, g_power)
            grads_sh, _ = nn.backward(shared, tape_sh, d_trunk_as + d_trunk_pw)
            shared = nn.sgd_step(shared, [grads_sh], cfg.learning_rate)
            assign = nn.sgd_step(assign, [grads_as], cfg.learning_rate)
            power = nn.sgd_step(power, [grads_pw], cfg.learning_rate)
        except FloatingPointError as exc:
            raise TrainingDiverged(
                f"training diverged at iteration {t}: {exc}") from exc
        if _validation_due(t, cfg):
            model = snapshot()
            val_cost = -_cell_mean_rate(model, val_gains, budgets, noise)
            if val_cost < best_cost:
                best_cost = val_cost
                best_model = model
            log.append((t, loss, val_cost, best_cost))
    if cfg.iterations == 0:
        best_model = snapshot()
    return best_model, log


def _cell_mean_rate(model: JointModel, gains, budgets, noise) -> float:
    soft, p = model.infer(gains, budgets)
    rates = cell.link_rates(gains, p, noise)
    total = 0.0
    for k in range(gains.shape[0]):
        perm = oracles.harden(soft[k])
        total += float(rates[k][np.asarray(perm.mapping), np.arange(model.n)].sum())
    return total / gains.shape[0]


@dataclass(frozen=True)
class EvalMetrics:
    instances: int
    mean_cost: float
    oracle_mean_cost: float
    degradation_percent: float
    feasible_fraction: float


def make_test_set(problem, count: int, seed):
    """Problem-appropriate held-out data: a cost stack or a scenario list."""
    rng = np.random.default_rng(seed)
    if isinstance(problem, LsapProblem):
        return lsap.sample_costs(problem.n, problem.m, count, rng)
    if isinstance(problem, CellProblem):
        return cell.sample_scenarios(problem.n, problem.p_macro_dbm,
                                     problem.p_small_dbm, count, rng)
    raise TypeError(f"unknown problem type {type(problem).__name__}")


def evaluate(model, problem, test_set) -> EvalMetrics:
    """Score a model against the problem's exact oracle.

    `model` may be the string "oracle" to push the oracle's own solutions
    through the metric path (degradation is then exactly zero).  For cell
    problems with n > 5 the oracle columns come out as nan.
    """
    if isinstance(problem, LsapProblem):
        return _evaluate_lsap(model, problem, test_set)
    if isinstance(problem, CellProblem):
        return _evaluate_cell(model, problem, test_set)
    raise TypeError(f"unknown problem type {type(problem).__name__}")


def _unbalanced_feasible(x, m) -> bool:
    # columns sum to one, rows to at most one, entries binary
    if not np.all((x == 0.0) | (x == 1.0)):
        return False
    return (np.all(x.sum(axis=0) == 1.0)
            and np.all(x.sum(axis=1) <= 1.0)
            and x.shape[1] == m)


def _evaluate_lsap(model, problem, costs) -> EvalMetrics:
    costs = np.asarray(costs, dtype=float)
    count = costs.shape[0]
    m = problem.m
    oracle_total = 0.0
    total = 0.0
    feasible = 0
    if model == "oracle":
        perms = [lsap.lsap_oracle(lsap.AssignmentInstance(costs[k]))[0]
                 for k in range(count)]
    else:
        soft = model.infer_soft(costs)
        perms = [oracles.harden(soft[k]) for k in range(count)]
    for k in range(count):
        perm = perms[k]
        x = lsap.truncate_square_output(perm.matrix(), m)
        if _unbalanced_feasible(x, m):
            feasible += 1
        total += lsap.assigned_cost(costs[k], perm, m)
        oracle_total += lsap.lsap_oracle(lsap.AssignmentInstance(costs[k]))[1]
    mean = total / count
    omean = oracle_total / count
    return EvalMetrics(count, mean, omean, 100.0 * (mean - omean) / omean,
                       feasible / count)


def _evaluate_cell(model, problem, scenarios) -> EvalMetrics:
    count = len(scenarios)
    budgets = problem.budgets()
    noise = scenarios[0].noise_power
    total = 0.0
    feasible = 0
    if model == "oracle":
        if problem.n > cell.ORACLE_LIMIT:
            raise ValueError("oracle self-evaluation needs n <= 5")
        solutions = [cell.joint_brute_oracle(s) for s in scenarios]
        total = sum(s[2] for s in solutions)
        feasible = count
    else:
        gains = np.stack([s.channel_gain for s in scenarios])
        soft, powers = model.infer(gains, budgets)
        for k, scn in enumerate(scenarios):
            perm = oracles.harden(soft[k])
            p = powers[k]
            ok = np.all(p >= 0) and np.all(p <= scn.power_budgets)
            if ok:
                feasible += 1
            total += cell.sum_rate(scn, perm.matrix(), np.clip(p, 0, scn.power_budgets))
    mean = total / count
    if problem.n <= cell.ORACLE_LIMIT:
        omean = sum(cell.joint_brute_oracle(s)[2] for s in scenarios) / count
        degradation = 100.0 * (omean - mean) / omean
    else:
        omean = float("nan")
        degradation = float("nan")
    return EvalMetrics(count, mean, omean, degradation, feasible / count)


def write_log_csv(path, log) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        for t, loss, val_cost, best in log:
            writer.writerow([t, format(loss, ".17g"), format(val_cost, ".17g"),
                             format(best, ".17g")])


def _meta_value(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def save_checkpoint(path, model, extra_meta=None) -> None:
    """Write network block(s) in SNNCKPT v1 format followed by a metadata
    section (`META <count>` then `key value` lines)."""
    meta = {}
    with open(path, "w") as fh:
        if isinstance(model, LsapModel):
            nn.write_params(fh, model.params)
            meta.update(problem="lsap", n=model.n, m=model.m,
                        cost_scale=lsap.INPUT_SCALE)
        elif isinstance(model, JointModel):
            nn.write_params(fh, model.shared)
            nn.write_params(fh, model.assignment_head)
            nn.write_params(fh, model.power_head)
            meta.update(problem="cell", n=model.n,
                        nets="shared assignment power",
                        input_mean=" ".join(nn._fmt(v) for v in model.input_mean),
                        input_scale=" ".join(nn._fmt(v) for v in model.input_scale))
        else:
            raise TypeError(f"cannot checkpoint {type(model).__name__}")
        meta.update(tau=model.sinkhorn.tau, cascades=model.sinkhorn.cascades,
                    sinkhorn_iterations=model.sinkhorn.total_iterations)
        if extra_meta:
            meta.update(extra_meta)
        fh.write(f"META {len(meta)}\n")
        for key in sorted(meta):
            fh.write(f"{key} {_meta_value(meta[key])}\n")


def load_checkpoint(path):
    """Read a checkpoint back; returns (model, metadata dict)."""
    with open(path) as fh:
        nets = [nn.read_params(fh)]
        while True:
            pos = fh.tell()
            line = fh.readline()
            if line.startswith(nn.CHECKPOINT_MAGIC):
                fh.seek(pos)
                nets.append(nn.read_params(fh))
                continue
            if line.startswith("META"):
                count = int(line.split()[1])
                meta = {}
                for _ in range(count):
                    key, _, value = fh.readline().rstrip("\n").partition(" ")
                    meta[key] = value
                break
            raise ValueError(f"unexpected checkpoint line {line!r}")
    cfg = SinkhornConfig(tau=float(meta["tau"]), cascades=int(meta["cascades"]),
                         total_iterations=int(meta["sinkhorn_iterations"]))
    if meta["problem"] == "lsap":
        if len(nets) != 1:
            raise ValueError("lsap checkpoint must hold exactly one network")
        model = LsapModel(nets[0], cfg, int(meta["n"]), int(meta["m"]))
    elif meta["problem"] == "cell":
        if len(nets) != 3:
            raise ValueError("cell checkpoint must hold three networks")
        mean = np.array([float(v) for v in meta["input_mean"].split()])
        scale = np.array([float(v) for v in meta["input_scale"].split()])
        model = JointModel(nets[0], nets[1], nets[2], cfg, mean, scale,
                           int(meta["n"]))
    else:
        raise ValueError(f"unknown problem family {meta['problem']!r}")
    return model, meta
