"""Implicit distance-flow product (DFP) matrix.

For an order-``n`` QAP the DFP matrix ``P`` is ``n^2 x n^2`` with rows indexing
the distance entries and columns indexing the flow entries, both in row-major
order: ``P[b*n + l, a*n + k] = dist[b, l] * flow[a, k]`` (0-based).

``Block(a, b)`` is the ``n x n`` tile with rows from distance row ``b`` and
columns from flow row ``a``; selecting it means *factory a goes to location b*.
Under a permutation ``perm`` the cost terms taken from ``Block(a, perm[a])``
are the elements ``(perm[k], k)`` for every factory ``k``.  Read as
``(factory, location)`` pairs, block ``(a, perm[a])`` and element
``(row perm[k], col k)`` give the same pattern, so the chosen blocks and the
chosen in-block elements coincide.

Nothing here materializes ``P`` except :meth:`DfpView.materialize`, which is
meant for tests and refuses ``n > 8``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import IndexOutOfRange, NotAPermutation
from .instances import QapInstance

MATERIALIZE_LIMIT = 8


class BlockId(NamedTuple):
    factory: int
    location: int


class ElementId(NamedTuple):
    row: int
    col: int


def _as_perm(perm, n):
    p = np.asarray(perm, dtype=np.intp)
    if p.shape != (n,) or not np.array_equal(np.sort(p), np.arange(n)):
        raise NotAPermutation(f"not a permutation of 0..{n - 1}: {list(perm)}")
    return p


class DfpView:
    """Read-only view of the DFP matrix of a :class:`QapInstance`."""

    def __init__(self, q: QapInstance):
        self.q = q
        self.n = q.n

    def _check(self, value, upper, what):
        if not 0 <= value < upper:
            raise IndexOutOfRange(f"{what} {value} outside 0..{upper - 1}")

    def element(self, r: int, c: int) -> float:
        n = self.n
        self._check(r, n * n, "row")
        self._check(c, n * n, "column")
        return float(self.q.dist[r // n, r % n] * self.q.flow[c // n, c % n])

    def block(self, a: int, b: int) -> np.ndarray:
        """``Block(a, b)[l, k] = dist[b, l] * flow[a, k]``."""
        self._check(a, self.n, "factory")
        self._check(b, self.n, "location")
        return np.outer(self.q.dist[b], self.q.flow[a])

    def representative(self, a: int, b: int) -> float:
        """The element of ``Block(a, b)`` on a ``d_ii`` row and an ``f_ii`` column."""
        self._check(a, self.n, "factory")
        self._check(b, self.n, "location")
        return float(self.q.dist[b, b] * self.q.flow[a, a])

    def representatives(self) -> np.ndarray:
        """``R[a, b] = flow[a, a] * dist[b, b]`` for all ``n^2`` blocks."""
        return np.outer(np.diag(self.q.flow), np.diag(self.q.dist))

    @staticmethod
    def locate(r: int, c: int, n: int) -> tuple[BlockId, ElementId]:
        """Block and in-block element that DFP entry ``(r, c)`` belongs to."""
        return BlockId(c // n, r // n), ElementId(r % n, c % n)

    def zero_ratio(self) -> float:
        """Fraction of zero entries of the DFP matrix, counted without materializing it."""
        n2 = self.n * self.n
        zd = int(np.count_nonzero(self.q.dist == 0))
        zf = int(np.count_nonzero(self.q.flow == 0))
        # rows hit by a zero distance, plus columns hit by a zero flow, minus overlap
        zeros = zd * n2 + zf * n2 - zd * zf
        return zeros / float(n2 * n2)

    def materialize(self) -> np.ndarray:
        if self.n > MATERIALIZE_LIMIT:
            raise ValueError(f"refusing to materialize DFP for n={self.n} > {MATERIALIZE_LIMIT}")
        return np.outer(self.q.dist.ravel(), self.q.flow.ravel())

    def selected_blocks(self, perm) -> list[BlockId]:
        p = _as_perm(perm, self.n)
        return [BlockId(a, int(p[a])) for a in range(self.n)]

    def selected_elements(self, perm) -> list[ElementId]:
        p = _as_perm(perm, self.n)
        return [ElementId(int(p[k]), k) for k in range(self.n)]

    def cost_from_blocks(self, perm) -> float:
        """Sum of the selected elements of every selected block."""
        p = _as_perm(perm, self.n)
        total = 0.0
        for a in range(self.n):
            blk = self.block(a, int(p[a]))
            total += float(blk[p, np.arange(self.n)].sum())
        return total


def zero_ratio(q: QapInstance) -> float:
    return DfpView(q).zero_ratio()


def stage2_features(dist, flow, perm, first_block, factory):
    """Per-location node features for placing ``factory`` (batched).

    Arguments are stacked over a batch: ``dist``/``flow`` ``(B, n, n)``,
    ``perm`` ``(B, n)`` with ``-1`` for unassigned factories, ``first_block``
    ``(B, 2)`` holding the stage-1 ``(a, b)``, ``factory`` ``(B,)``.

    Returns ``(B, n, 2)`` raw (unnormalized) features:

    * ``[..., 0]`` the factory's column of the stage-1 block,
      ``Block(a, b)[l, factory]``;
    * ``[..., 1]`` the DFP mass that selecting ``Block(factory, l)`` adds given
      the blocks chosen so far: the ``(l, factory)`` element of every selected
      block, the ``(perm[i], i)`` elements of ``Block(factory, l)``, and its
      representative.  This equals the exact increase of the QAP cost.
    """
    bsz, n, _ = dist.shape
    rows = np.arange(bsz)
    a, b = first_block[:, 0], first_block[:, 1]
    col0 = dist[rows, b, :] * flow[rows, a, factory][:, None]

    assigned = perm >= 0
    loc = np.where(assigned, perm, 0)
    w_in = flow[rows, :, factory] * assigned
    w_out = flow[rows, factory, :] * assigned
    d_from = dist[rows[:, None], loc, :]  # (B, i, l) = dist[perm[i], l]
    d_to = dist[rows[:, None], :, loc]  # (B, i, l) = dist[l, perm[i]]
    added = np.einsum("bi,bil->bl", w_in, d_from) + np.einsum("bi,bil->bl", w_out, d_to)
    added += np.diagonal(dist, axis1=1, axis2=2) * flow[rows, factory, factory][:, None]
    return np.stack([col0, added], axis=-1)
