"""Differentiable projection onto permutation matrices.

The output activation exponentiates a score matrix with a temperature and
alternates row/column normalization; several such operators are cascaded,
each one re-exponentiating the previous cascade's output.  All iteration
state lives in the log domain so large temperatures never overflow; linear
values are materialized only at cascade boundaries and at the output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Linear-domain floor applied before normalizing user-supplied matrices.
LINEAR_FLOOR = 1e-30


@dataclass(frozen=True)
class SinkhornConfig:
    """Temperature, cascade count and total iteration budget of the output
    activation.  Each cascade runs total_iterations / cascades iterations."""

    tau: float = 20.0
    cascades: int = 4
    total_iterations: int = 20

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"temperature must be positive, got {self.tau}")
        if self.cascades < 1:
            raise ValueError("cascade count must be >= 1")
        if self.total_iterations < 1:
            raise ValueError("iteration budget must be >= 1")
        if self.total_iterations % self.cascades:
            raise ValueError(
                f"cascade count {self.cascades} must divide the iteration "
                f"budget {self.total_iterations}")

    @property
    def iterations_per_cascade(self) -> int:
        return self.total_iterations // self.cascades


@dataclass
class SinkhornTape:
    """Log-domain record of one forward pass.

    One ("exp", z) entry per cascade holding z = tau * input, followed by
    alternating ("row", z) / ("col", z) entries, one pair per iteration.
    """

    tau: float
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)


def _logsumexp(z, axis):
    m = np.max(z, axis=axis, keepdims=True)
    return m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))


def _check_square(a):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def row_normalize(a: np.ndarray) -> np.ndarray:
    """Divide every row by its sum.  Entries must be strictly positive."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if not np.all(a > 0):
        raise ValueError("row normalization needs strictly positive entries")
    a = np.maximum(a, LINEAR_FLOOR)  # guard subnormal rows
    return a / a.sum(axis=-1, keepdims=True)


def col_normalize(a: np.ndarray) -> np.ndarray:
    """Divide every column by its sum.  Entries must be strictly positive."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if not np.all(a > 0):
        raise ValueError("column normalization needs strictly positive entries")
    a = np.maximum(a, LINEAR_FLOOR)
    return a / a.sum(axis=-2, keepdims=True)


def sinkhorn_operator(a, tau, iterations, tape=None, counter=None):
    """Run `iterations` row/column normalization pairs on exp(tau * a).

    Returns the linear-domain result; the final pass is column-wise, so
    every column sums to one.  Accepts one (N, N) matrix or a batch
    (..., N, N).  With a tape supplied, the log-domain intermediates are
    recorded for sinkhorn_backward.
    """
    a = _check_square(a)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(
            f"non-finite input to the Sinkhorn operator (tau={tau})")
    if iterations < 0:
        raise ValueError("iteration count must be >= 0")
    n = a.shape[-1]
    z = float(tau) * a
    if tape is not None:
        tape.records.append(("exp", z.copy()))
    for _ in range(iterations):
        z = z - _logsumexp(z, axis=-1)
        if tape is not None:
            tape.records.append(("row", z))
        z = z - _logsumexp(z, axis=-2)
        if tape is not None:
            tape.records.append(("col", z))
        if counter is not None:
            counter.add_sinkhorn_iteration(n)
    out = np.exp(z)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"Sinkhorn normalization overflowed at tau={tau}")
    return out


def cascaded_activation(a, cfg: SinkhornConfig, tape=None, counter=None):
    """Apply cfg.cascades consecutive Sinkhorn operators.

    Each cascade treats the previous cascade's linear output as a fresh
    score matrix, i.e. it restarts from exp(tau * previous output).
    """
    x = _check_square(a)
    for _ in range(cfg.cascades):
        x = sinkhorn_operator(x, cfg.tau, cfg.iterations_per_cascade,
                              tape=tape, counter=counter)
    return x


def sinkhorn_backward(tape: SinkhornTape, output_grad):
    """Reverse-mode gradient of a recorded forward pass.

    `output_grad` is d(loss)/d(linear output); the return value is
    d(loss)/d(input score matrix), same shape.
    """
    if not tape.records:
        raise RuntimeError("empty Sinkhorn tape; run the forward pass with a tape")
    g = np.asarray(output_grad, dtype=float)
    last = tape.records[-1][1]
    if g.shape != last.shape:
        raise ValueError(
            f"gradient shape {g.shape} does not match tape shape {last.shape}")
    g = g * np.exp(last)  # through the output exponential
    for idx in range(len(tape.records) - 1, -1, -1):
        kind, z = tape.records[idx]
        if kind == "row":
            g = g - np.exp(z) * g.sum(axis=-1, keepdims=True)
        elif kind == "col":
            g = g - np.exp(z) * g.sum(axis=-2, keepdims=True)
        else:  # "exp": z = tau * (cascade input)
            g = tape.tau * g
            if idx > 0:
                # the cascade input was exp() of the previous cascade state
                g = g * np.exp(tape.records[idx - 1][1])
    return g


def affinity_trace(a_batch, tau, cascades, total_iterations):
    """Affinity of the running activation after every iteration.

    Returns an array of shape (batch, total_iterations + 1): column 0 holds
    the affinity of the exp-normalized input (row softmax of tau * A, the
    anchor point before any full normalization pair), column t the affinity
    after t normalization pairs, counted across cascade boundaries.
    """
    from .oracles import affinity

    a = _check_square(np.asarray(a_batch, dtype=float))
    if a.ndim == 2:
        a = a[None]
    if total_iterations % cascades:
        raise ValueError("cascade count must divide the iteration budget")
    per = total_iterations // cascades
    b = a.shape[0]
    out = np.empty((b, total_iterations + 1))
    z = float(tau) * a
    x0 = np.exp(z - _logsumexp(z, axis=-1))
    for i in range(b):
        out[i, 0] = affinity(x0[i])
    col = 1
    for c in range(cascades):
        if c > 0:
            z = float(tau) * np.exp(z)
        for _ in range(per):
            z = z - _logsumexp(z, axis=-1)
            z = z - _logsumexp(z, axis=-2)
            x = np.exp(z)
            for i in range(b):
                out[i, col] = affinity(x[i])
            col += 1
    return out
