"""Decoding pipelines for matrix-input TSP and two-stage QAP, plus objectives.

Permutations are 0-based numpy arrays.  For the QAP, ``perm[i]`` is the
location of factory ``i``; for the TSP, ``tour[k]`` is the ``k``-th city
visited (tours start at city 0).

Both decoders run a whole batch of same-size instances in lockstep; the
single-instance entry points are batches of one, so training and inference
share one code path.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .dfp import stage2_features
from .errors import DimensionMismatch, NonFiniteValue, NonPositiveBest, NotAPermutation
from .gpn import GpnNet, GraphEmbedConfig, select
from .instances import QapInstance, TspInstance


@dataclass
class Solution:
    perm: np.ndarray
    cost: float
    log_prob_sum: float
    elapsed: float

    def one_based(self) -> list:
        return [int(x) + 1 for x in self.perm]


class MatrixTspGpn(GpnNet):
    """GPN over distance-matrix rows; ``use_lstm`` enables the LSTM query arm."""

    kind = "matrix_tsp"

    def __init__(self, hidden_dim=128, layers=3, use_lstm=False, rng=None, params=None,
                 gamma_init=0.5):
        cfg = GraphEmbedConfig(layers, 1, hidden_dim, gamma_init)
        super().__init__(cfg, use_lstm, rng, params)

    @classmethod
    def from_config(cls, conf, arrays):
        g = conf["graph"]
        params = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
        return cls(g["hidden_dim"], g["layers"], conf["use_lstm"], params=params,
                   gamma_init=g["gamma_init"])


class TwoStageGpn:
    """Block-selection network over ``n^2`` blocks + in-block network over ``n`` locations."""

    kind = "two_stage_qap"
    INBLOCK_FEATURES = 2

    def __init__(self, hidden_dim=128, layers=3, rng=None, block=None, inblock=None,
                 gamma_init=0.5):
        rng = np.random.default_rng(0) if rng is None else rng
        self.block = block or GpnNet(GraphEmbedConfig(layers, 1, hidden_dim, gamma_init), rng=rng)
        self.inblock = inblock or GpnNet(
            GraphEmbedConfig(layers, self.INBLOCK_FEATURES, hidden_dim, gamma_init), rng=rng
        )

    @property
    def params(self) -> dict:
        out = {f"block/{k}": v for k, v in self.block.params.items()}
        out.update({f"inblock/{k}": v for k, v in self.inblock.params.items()})
        return out

    def config(self) -> dict:
        return {"block": self.block.config(), "inblock": self.inblock.config()}

    @classmethod
    def from_config(cls, conf, arrays):
        split = {"block": {}, "inblock": {}}
        for k, v in arrays.items():
            head, name = k.split("/", 1)
            split[head][name] = v
        return cls(block=GpnNet.from_config(conf["block"], split["block"]),
                   inblock=GpnNet.from_config(conf["inblock"], split["inblock"]))


# ---------------------------------------------------------------------------
# objectives

def _check_perm(p, n) -> np.ndarray:
    arr = np.asarray(p)
    if arr.shape != (n,) or not np.issubdtype(arr.dtype, np.integer):
        raise NotAPermutation(f"expected {n} integer indices, got {arr!r}")
    if not np.array_equal(np.sort(arr), np.arange(n)):
        raise NotAPermutation(f"not a permutation of 0..{n - 1}: {arr.tolist()}")
    return arr.astype(np.intp)


def evaluate_qap_cost(q: QapInstance, perm) -> float:
    """``sum_ij dist[perm[i], perm[j]] * flow[i, j]``.

    The sum is correctly rounded (``math.fsum``), so the reported cost does
    not depend on summation order.
    """
    p = _check_perm(perm, q.n)
    return math.fsum((q.dist[np.ix_(p, p)] * q.flow).ravel())


def evaluate_tour(t: TspInstance, tour) -> float:
    """Closed tour length including the edge back to the start.

    Correctly rounded like :func:`evaluate_qap_cost`, so every rotation of a
    tour has the same length and a tour costs exactly what its QAP reduction
    costs.
    """
    p = _check_perm(tour, t.n)
    return math.fsum(t.dist[p, np.roll(p, -1)])


def check_objective_range(inst) -> None:
    """Raise :class:`NonFiniteValue` if some solution's objective could overflow float64.

    Uses the bound ``n^2 * max|d| * max|f|`` (``n * max|d|`` for tours), so a
    passing instance also keeps every DFP element and stage-2 feature finite.
    """
    n = inst.n
    top = float(np.abs(inst.dist).max()) if n else 0.0
    if isinstance(inst, QapInstance):
        with np.errstate(over="ignore"):
            bound = float(n) * n * top * float(np.abs(inst.flow).max())
    else:
        bound = float(n) * top
    if not np.isfinite(bound):
        raise NonFiniteValue(f"objective of {inst.name!r} can exceed the float64 range")


def gap_percent(cost: float, best_known: float) -> float:
    if not best_known > 0:
        raise NonPositiveBest(f"best-known cost must be positive, got {best_known}")
    return 100.0 * (cost - best_known) / best_known


# ---------------------------------------------------------------------------
# feature normalization

def minmax(values: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Min-max scale each row to ``[0, 1]`` over its unmasked entries.

    ``values`` is ``(B, N)`` or ``(B, N, F)`` (scaled per feature).  Masked
    entries become 0, as do rows whose unmasked entries are all equal.
    """
    v = values if values.ndim == 3 else values[..., None]
    if mask is None:
        free = np.ones(v.shape[:2], dtype=bool)
    else:
        free = ~mask
    f3 = free[..., None]
    lo = np.where(f3, v, np.inf).min(axis=1, keepdims=True)
    hi = np.where(f3, v, -np.inf).max(axis=1, keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(f3 & (span > 0), (v - lo) / safe, 0.0)
    return out if values.ndim == 3 else out[..., 0]


# ---------------------------------------------------------------------------
# batched decoders

def decode_tsp_batch(model: MatrixTspGpn, dist: np.ndarray, mode="greedy", rng=None):
    """Decode tours for a ``(B, n, n)`` stack.  Returns ``(tours, log_prob_sum)``.

    ``log_prob_sum`` is a ``(B, 1)`` tensor (on the tape when one is open).
    """
    bsz, n, _ = dist.shape
    rows = np.arange(bsz)
    tours = np.zeros((bsz, n), dtype=np.intp)
    visited = np.zeros((bsz, n), dtype=bool)
    visited[:, 0] = True
    current = np.zeros(bsz, dtype=np.intp)
    total = ad.constant(np.zeros((bsz, 1)))
    hid = model.cfg.hidden_dim
    h = c = ad.constant(np.zeros((bsz, hid))) if model.use_lstm else None
    for step in range(1, n):
        feats = minmax(dist[rows, current, :], visited)
        refs = model.embed(ad.constant(feats.reshape(bsz * n, 1)), bsz)
        query = None
        if model.use_lstm:
            h, c = model.lstm(ad.take_rows(refs, rows * n + current), h, c)
            query = h
        logits = model.logits(refs, bsz, query)
        chosen, logp, _ = select(logits, visited, mode, rng)
        total = ad.add(total, logp)
        tours[:, step] = chosen
        visited[rows, chosen] = True
        current = chosen
    return tours, total


def decode_qap_batch(model: TwoStageGpn, dist: np.ndarray, flow: np.ndarray, mode="greedy",
                     rng=None, policy=None):
    """Two-stage decode of ``(B, n, n)`` distance/flow stacks.

    Stage 1 picks one block from the normalized representatives
    ``flow[a, a] * dist[b, b]`` (node ``a*n + b``), fixing ``perm[a] = b``.
    Stage 2 visits the remaining factories in cyclic order from ``a + 1`` and
    places each at a free location.

    ``policy`` replaces the networks with ``policy(stage, raw_features, mask)
    -> chosen``; the greedy baseline uses it to take the argmin of raw
    features through this exact loop.

    Returns ``(perm, log_prob_sum, first_block)``.
    """
    bsz, n, _ = dist.shape
    rows = np.arange(bsz)
    perm = np.full((bsz, n), -1, dtype=np.intp)
    used = np.zeros((bsz, n), dtype=bool)
    total = ad.constant(np.zeros((bsz, 1)))

    reps = (np.diagonal(flow, axis1=1, axis2=2)[:, :, None]
            * np.diagonal(dist, axis1=1, axis2=2)[:, None, :]).reshape(bsz, n * n)
    no_mask = np.zeros((bsz, n * n), dtype=bool)
    if policy is None:
        refs = model.block.embed(ad.constant(minmax(reps).reshape(bsz * n * n, 1)), bsz)
        chosen, logp, _ = select(model.block.logits(refs, bsz), no_mask, mode, rng)
        total = ad.add(total, logp)
    else:
        chosen = policy(1, reps, no_mask)
    a, b = chosen // n, chosen % n
    perm[rows, a] = b
    used[rows, b] = True
    first = np.stack([a, b], axis=1)

    for step in range(1, n):
        k = (a + step) % n
        raw = stage2_features(dist, flow, perm, first, k)
        if policy is None:
            feats = minmax(raw, used).reshape(bsz * n, TwoStageGpn.INBLOCK_FEATURES)
            refs = model.inblock.embed(ad.constant(feats), bsz)
            loc, logp, _ = select(model.inblock.logits(refs, bsz), used, mode, rng)
            total = ad.add(total, logp)
        else:
            loc = policy(2, raw, used)
        perm[rows, k] = loc
        used[rows, loc] = True
    return perm, total, first


# ---------------------------------------------------------------------------
# single-instance entry points

def solve_matrix_tsp(model: MatrixTspGpn, t: TspInstance, mode="greedy", rng=None) -> Solution:
    if t.n < 2:
        raise DimensionMismatch("matrix TSP decoding needs at least 2 cities")
    start = time.perf_counter()
    tours, total = decode_tsp_batch(model, t.dist[None], mode, rng)
    elapsed = time.perf_counter() - start
    tour = tours[0]
    return Solution(tour, evaluate_tour(t, tour), float(total.data[0, 0]), elapsed)


def solve_qap(model: TwoStageGpn, q: QapInstance, mode="greedy", rng=None) -> Solution:
    start = time.perf_counter()
    perms, total, _ = decode_qap_batch(model, q.dist[None], q.flow[None], mode, rng)
    elapsed = time.perf_counter() - start
    perm = perms[0]
    return Solution(perm, evaluate_qap_cost(q, perm), float(total.data[0, 0]), elapsed)


def batch_costs(dist, flow, perms) -> np.ndarray:
    """QAP cost of each row of ``perms`` against the matching instance."""
    return np.array([kernels.qap_cost(d, f, p) for d, f, p in zip(dist, flow, perms)])


def batch_tour_lengths(dist, tours) -> np.ndarray:
    return np.array([kernels.tour_length(d, t) for d, t in zip(dist, tours)])
