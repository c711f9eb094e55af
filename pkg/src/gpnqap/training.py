"""REINFORCE training for both model kinds, plus the dense/sparse model bank.

Every run draws three independent RNG streams from one seed: instance
generation, action sampling and parameter initialization.  Instances are
generated fresh for each step.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tape
from .checkpoint import load_checkpoint, save_checkpoint
from .dfp import zero_ratio
from .errors import NonFiniteValue
from .instances import QapInstance, random_qap_matrices, random_tsp_matrices
from .solver import (MatrixTspGpn, TwoStageGpn, batch_costs, batch_tour_lengths,
                     decode_qap_batch, decode_tsp_batch)

log = logging.getLogger(__name__)

KINDS = ("matrix_tsp", "two_stage_qap")
BASELINES = ("ema", "self_critic", "none")
DEFAULT_TRAIN_N = {"matrix_tsp": 50, "two_stage_qap": 49}
CURVE_FIELDS = ("step", "epoch", "mean_cost", "mean_advantage", "grad_norm", "lr")


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``train_n=None`` picks the per-kind default (50 cities for TSP, order 49
    for QAP).  ``baseline="none"`` disables the reward baseline and exists for
    variance comparisons.
    """

    epochs: int = 10
    batch_size: int = 150
    steps_per_epoch: int = 2500
    lr: float = 1e-3
    lr_decay: float = 0.96
    train_n: Optional[int] = None
    seed: int = 0
    baseline: str = "ema"
    ema_beta: float = 0.9
    sparse_zero_prob: float = 0.7
    zero_prob: float = 0.0
    hidden_dim: int = 128
    layers: int = 3
    use_lstm: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.steps_per_epoch < 1:
            raise ValueError("epochs must be >= 0, batch_size and steps_per_epoch >= 1")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.train_n is not None and self.train_n < 2:
            raise ValueError("train_n must be at least 2")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}, got {self.baseline!r}")
        if not 0 <= self.ema_beta < 1:
            raise ValueError("ema_beta must lie in [0, 1)")
        for p in (self.sparse_zero_prob, self.zero_prob):
            if not 0 <= p < 1:
                raise ValueError("zero probabilities must lie in [0, 1)")

    def n_for(self, kind: str) -> int:
        return self.train_n if self.train_n is not None else DEFAULT_TRAIN_N[kind]


@dataclass
class BaselineState:
    """Reward baseline.  ``value`` is the EMA of batch-mean rewards (``None`` before the first step)."""

    mode: str = "ema"
    beta: float = 0.9
    value: Optional[float] = None

    def update(self, rewards: np.ndarray) -> None:
        if self.mode != "ema":
            return
        m = float(np.mean(rewards))
        self.value = m if self.value is None else self.beta * self.value + (1.0 - self.beta) * m
        if not np.isfinite(self.value):
            raise NonFiniteValue("reward baseline became non-finite")


@dataclass
class StepStats:
    mean_cost: float
    mean_advantage: float
    grad_norm: float
    loss: float


def model_kind(model) -> str:
    return model.kind


def rollout(model, batch, mode="sample", rng=None):
    """Decode a batch; returns ``(costs, log_prob_sum)``.

    ``batch`` is a ``(B, n, n)`` distance stack for the TSP model and a
    ``(dist, flow)`` pair of stacks for the QAP model.
    """
    if model.kind == "matrix_tsp":
        tours, logp = decode_tsp_batch(model, batch, mode, rng)
        return batch_tour_lengths(batch, tours), logp
    dist, flow = batch
    perms, logp, _ = decode_qap_batch(model, dist, flow, mode, rng)
    return batch_costs(dist, flow, perms), logp


def _grad_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def reinforce_step(model, batch, baseline: BaselineState, opt: AdamState, rng) -> StepStats:
    """One policy-gradient update on ``batch``.

    Samples one solution per instance, sets ``reward = -cost`` and minimizes
    ``-mean(advantage * log_prob_sum)`` with the advantage held constant.
    The baseline is updated after the parameter step.
    """
    params = model.params
    with Tape() as tape:
        costs, logp = rollout(model, batch, "sample", rng)
        rewards = -costs
        if baseline.mode == "ema":
            b = float(np.mean(rewards)) if baseline.value is None else baseline.value
            adv = rewards - b
        elif baseline.mode == "self_critic":
            with Tape():  # greedy rollout stays off the training tape
                greedy, _ = rollout(model, batch, "greedy")
            adv = rewards + greedy
        else:
            adv = rewards.copy()
        loss = ad.scale(ad.mean(ad.mul(ad.constant(adv[:, None]), logp)), -1.0)
        by_tensor = tape.backward(loss)
    grads = {name: by_tensor[t] for name, t in params.items() if t in by_tensor}
    norm = _grad_norm(grads)
    if not np.isfinite(norm):
        raise NonFiniteValue(f"non-finite gradient norm at step {opt.step + 1}")
    ad.adam_step(params, grads, opt)
    baseline.update(rewards)
    return StepStats(float(costs.mean()), float(adv.mean()), norm, float(loss.item()))


def new_model(kind: str, cfg: TrainConfig, rng):
    if kind == "matrix_tsp":
        return MatrixTspGpn(cfg.hidden_dim, cfg.layers, cfg.use_lstm, rng=rng)
    if kind == "two_stage_qap":
        return TwoStageGpn(cfg.hidden_dim, cfg.layers, rng=rng)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def lr_after(cfg: TrainConfig, epochs_done: int) -> float:
    """Closed form ``lr * lr_decay**epochs_done`` so no rounding accumulates across epochs."""
    return cfg.lr * cfg.lr_decay ** epochs_done


def make_batch(kind: str, rng, n: int, size: int, zero_prob: float = 0.0):
    if kind == "matrix_tsp":
        return random_tsp_matrices(rng, n, size, zero_prob)
    return random_qap_matrices(rng, n, size, zero_prob)


def streams(seed: int):
    """``(instances, sampling, init)`` generators derived from one seed."""
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


@dataclass
class TrainResult:
    model: object
    curve: list = field(default_factory=list)
    lr: float = 0.0

    def write_curve(self, path) -> None:
        write_curve(self.curve, path)


def write_curve(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CURVE_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def train(kind: str, cfg: TrainConfig, checkpoint=None, curve_csv=None, progress=None) -> TrainResult:
    """Run ``epochs * steps_per_epoch`` REINFORCE steps on fresh instances.

    The learning rate is multiplied by ``lr_decay`` after every epoch (see :func:`lr_after`).  When
    given, the final model goes to ``checkpoint`` and the per-step curve to
    ``curve_csv``.  ``progress(row)`` is called after each step.
    """
    inst_rng, sample_rng, init_rng = streams(cfg.seed)
    model = new_model(kind, cfg, init_rng)
    n = cfg.n_for(kind)
    opt = AdamState(lr=cfg.lr)
    baseline = BaselineState(cfg.baseline, cfg.ema_beta)
    curve = []
    step = 0
    for epoch in range(cfg.epochs):
        for _ in range(cfg.steps_per_epoch):
            batch = make_batch(kind, inst_rng, n, cfg.batch_size, cfg.zero_prob)
            stats = reinforce_step(model, batch, baseline, opt, sample_rng)
            step += 1
            row = {"step": step, "epoch": epoch, "mean_cost": stats.mean_cost,
                   "mean_advantage": stats.mean_advantage, "grad_norm": stats.grad_norm,
                   "lr": opt.lr}
            curve.append(row)
            if progress is not None:
                progress(row)
        opt.lr = lr_after(cfg, epoch + 1)
        log.info("epoch %d done, lr now %.3g", epoch, opt.lr)
    if checkpoint is not None:
        save_checkpoint(model, checkpoint, extra={"train": asdict(cfg)})
    if curve_csv is not None:
        write_curve(curve, curve_csv)
    return TrainResult(model, curve, opt.lr)


# ---------------------------------------------------------------------------
# sparsity-routed model bank

@dataclass
class ModelBank:
    dense_model: TwoStageGpn
    sparse_model: TwoStageGpn
    routing_threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.routing_threshold < 1:
            raise ValueError("routing_threshold must lie in (0, 1)")

    def route(self, q: QapInstance) -> TwoStageGpn:
        return route(self, q)

    def save(self, dense_path, sparse_path) -> None:
        save_checkpoint(self.dense_model, dense_path)
        save_checkpoint(self.sparse_model, sparse_path)

    @classmethod
    def load(cls, dense_path, sparse_path, routing_threshold: float = 0.5) -> "ModelBank":
        return cls(load_checkpoint(dense_path), load_checkpoint(sparse_path), routing_threshold)


def route(bank: ModelBank, q: QapInstance) -> TwoStageGpn:
    """Sparse model iff the instance's DFP zero ratio reaches the threshold."""
    return bank.sparse_model if zero_ratio(q) >= bank.routing_threshold else bank.dense_model


def train_bank(cfg: TrainConfig, routing_threshold: float = 0.5, dense_paths=(None, None),
               sparse_paths=(None, None)) -> ModelBank:
    """Train a dense model (``zero_prob=0``) and a sparse one (``sparse_zero_prob``).

    The two runs use independent seeds derived from ``cfg.seed``.  Path pairs
    are ``(checkpoint, curve_csv)``.
    """
    dense_seed, sparse_seed = (int(s.generate_state(1, np.uint64)[0])
                               for s in np.random.SeedSequence(cfg.seed).spawn(2))
    dense = train("two_stage_qap", replace(cfg, zero_prob=0.0, seed=dense_seed), *dense_paths)
    sparse = train("two_stage_qap", replace(cfg, zero_prob=cfg.sparse_zero_prob, seed=sparse_seed),
                   *sparse_paths)
    return ModelBank(dense.model, sparse.model, routing_threshold)


def evaluate(model, batch, mode="greedy", rng=None) -> np.ndarray:
    """Per-instance costs of decoding ``batch`` without recording a tape."""
    costs, _ = rollout(model, batch, mode, rng)
    return costs


def load_curve(path) -> list:
    with open(Path(path), newline="") as fh:
        return [{k: (int(v) if k in ("step", "epoch") else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]
