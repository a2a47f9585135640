"""Arithmetic-operation accounting for forward-pass complexity reports."""

from dataclasses import dataclass


@dataclass
class OpCounter:
    """Tallies the arithmetic work of one single-instance forward pass.

    The convention is fixed so reported totals stay comparable across runs:

    * dense layer y = W h + b costs 2 * k_out * k_in (one multiply plus one
      accumulate per weight; the bias seeds the accumulator),
    * one Sinkhorn iteration on an N x N matrix costs 4 N^2 - N: the row pass
      reduces each row with N - 1 additions and divides every entry, the
      column pass accumulates rows into a running vector (N additions per
      row) and divides every entry,
    * element-wise activations and exponentials are not counted.

    Counts are per instance; batched calls do not multiply them.
    """

    dense: int = 0
    sinkhorn: int = 0

    @property
    def total(self) -> int:
        return self.dense + self.sinkhorn

    def add_dense(self, k_out: int, k_in: int) -> None:
        self.dense += 2 * k_out * k_in

    def add_sinkhorn_iteration(self, n: int) -> None:
        self.sinkhorn += 4 * n * n - n
