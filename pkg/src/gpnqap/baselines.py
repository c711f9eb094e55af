"""Non-learned reference solvers."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import TooLarge
from .instances import QapInstance, TspInstance
from .solver import _check_perm, decode_qap_batch, evaluate_qap_cost, evaluate_tour

BRUTE_FORCE_LIMIT = 10


@dataclass
class BaselineResult:
    perm: np.ndarray
    cost: float
    elapsed: float
    method: str


def _argmin_policy(column):
    """Policy for :func:`decode_qap_batch` choosing the smallest raw feature."""

    def policy(stage, raw, mask):
        vals = raw if stage == 1 else raw[..., column]
        return np.argmin(np.where(mask, np.inf, vals), axis=1)

    return policy


def _greedy(q: QapInstance, column: int, method: str) -> BaselineResult:
    start = time.perf_counter()
    perm, _, _ = decode_qap_batch(None, q.dist[None], q.flow[None], policy=_argmin_policy(column))
    elapsed = time.perf_counter() - start
    return BaselineResult(perm[0], evaluate_qap_cost(q, perm[0]), elapsed, method)


def greedy_two_stage(q: QapInstance) -> BaselineResult:
    """Greedy counterpart of the two-stage decoder.

    Stage 1 takes the block with the smallest representative (lowest
    ``(a, b)`` on ties); stage 2 gives each factory, in the decoder's cyclic
    order, the free location with the smallest entry in the factory's column
    of the stage-1 block (lowest location on ties).
    """
    return _greedy(q, 0, "greedy")


def greedy_incremental(q: QapInstance) -> BaselineResult:
    """Like :func:`greedy_two_stage` but stage 2 minimizes the exact cost increase."""
    return _greedy(q, 1, "greedy_inc")


def random_perm(n: int, rng, q: QapInstance = None) -> BaselineResult:
    start = time.perf_counter()
    perm = rng.permutation(n).astype(np.intp)
    elapsed = time.perf_counter() - start
    cost = evaluate_qap_cost(q, perm) if q is not None else float("nan")
    return BaselineResult(perm, cost, elapsed, "random")


def two_opt_swap(q: QapInstance, start, max_iters: int = 10_000) -> BaselineResult:
    """Best-improvement pairwise-swap local search from ``start``."""
    p0 = _check_perm(start, q.n)
    t0 = time.perf_counter()
    perm, _, _ = kernels.two_opt(q.dist, q.flow, p0, max_iters)
    elapsed = time.perf_counter() - t0
    return BaselineResult(perm, evaluate_qap_cost(q, perm), elapsed, "two_opt")


def brute_force(instance, limit: int = BRUTE_FORCE_LIMIT) -> BaselineResult:
    """Exact optimum by enumeration (QAP over all permutations, TSP over tours from city 0).

    The reported cost is re-evaluated exactly from the winning permutation.
    """
    if instance.n > limit:
        raise TooLarge(f"brute force limited to n <= {limit}, got {instance.n}")
    t0 = time.perf_counter()
    if isinstance(instance, TspInstance):
        perm, _ = kernels.brute_force_tsp(instance.dist)
    else:
        perm, _ = kernels.brute_force_qap(instance.dist, instance.flow)
    elapsed = time.perf_counter() - t0
    perm = np.asarray(perm, dtype=np.intp)
    if isinstance(instance, TspInstance):
        return BaselineResult(perm, evaluate_tour(instance, perm), elapsed, "brute_force")
    return BaselineResult(perm, evaluate_qap_cost(instance, perm), elapsed, "brute_force")
