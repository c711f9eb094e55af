"""Graph pointer network building blocks.

A batch of ``G`` graphs with ``N`` nodes each is laid out as one
``(G*N, d)`` matrix, graph after graph.  Every graph is complete, so the
neighbourhood aggregation of a node is the mean over all nodes of its graph.

Embedding layer ``l``::

    X_l = gamma_l * X_{l-1} @ theta_l
          + (1 - gamma_l) * tanh(mean(X_{l-1}) @ agg_l + agg_bias_l)

Pointer decoder::

    u_j = v . tanh(W_r r_j + W_q q)      (W_q q dropped when there is no query)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import AllMasked, ShapeMismatch


@dataclass(frozen=True)
class GraphEmbedConfig:
    layers: int = 3
    input_dim: int = 1
    hidden_dim: int = 128
    gamma_init: float = 0.5

    def __post_init__(self):
        if self.layers < 1 or self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("layers and dimensions must be positive")


def _uniform(rng, rows, cols, fan_in=None):
    bound = 1.0 / np.sqrt(rows if fan_in is None else fan_in)
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_params(cfg: GraphEmbedConfig, rng, use_lstm: bool = False) -> dict:
    """Fresh parameters: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per matrix."""
    h = cfg.hidden_dim
    p = {}
    d_prev = cfg.input_dim
    for l in range(1, cfg.layers + 1):
        p[f"theta_{l}"] = _uniform(rng, d_prev, h)
        p[f"gamma_{l}"] = np.full((1, 1), cfg.gamma_init)
        p[f"agg_{l}"] = _uniform(rng, d_prev, h)
        p[f"agg_bias_{l}"] = _uniform(rng, 1, h, fan_in=d_prev)
        d_prev = h
    p["W_r"] = _uniform(rng, h, h)
    p["v"] = _uniform(rng, h, 1)
    if use_lstm:
        p["W_q"] = _uniform(rng, h, h)
        p["lstm_Wx"] = _uniform(rng, h, 4 * h)
        p["lstm_Wh"] = _uniform(rng, h, 4 * h)
        p["lstm_b"] = _uniform(rng, 1, 4 * h, fan_in=h)
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in p.items()}


def graph_embed(x0: Tensor, params: dict, cfg: GraphEmbedConfig, groups: int = 1) -> Tensor:
    """Apply ``cfg.layers`` embedding layers to ``(groups*N, input_dim)`` features."""
    if x0.shape[1] != cfg.input_dim:
        raise ShapeMismatch(f"expected {cfg.input_dim} input features, got {x0.shape[1]}")
    rows = x0.shape[0]
    if rows % groups:
        raise ShapeMismatch(f"{rows} rows do not split into {groups} graphs")
    size = rows // groups
    one = ad.constant(1.0)
    x = x0
    for l in range(1, cfg.layers + 1):
        gamma = params[f"gamma_{l}"]
        local = ad.matmul(x, params[f"theta_{l}"])
        pooled = ad.tanh(ad.add(ad.matmul(ad.group_mean(x, groups), params[f"agg_{l}"]),
                                params[f"agg_bias_{l}"]))
        x = ad.add(ad.mul(gamma, local), ad.mul(ad.sub(one, gamma), ad.group_repeat(pooled, size)))
    return x


def pointer_logits(refs: Tensor, params: dict, groups: int = 1,
                   query: Optional[Tensor] = None) -> Tensor:
    """Raw attention scores, shape ``(groups, N)``.

    The visited-set mask is applied by the softmax (see :func:`masked`), which
    keeps every tensor finite.
    """
    rows = refs.shape[0]
    size = rows // groups
    z = ad.matmul(refs, params["W_r"])
    if query is not None:
        if query.shape[0] != groups:
            raise ShapeMismatch(f"need one query per graph, got {query.shape[0]} for {groups}")
        z = ad.add(z, ad.group_repeat(ad.matmul(query, params["W_q"]), size))
    u = ad.matmul(ad.tanh(z), params["v"])
    return ad.reshape(u, groups, size)


def masked(logits, mask) -> np.ndarray:
    """Logits with masked positions set to ``-inf`` (for reporting)."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    m = np.asarray(mask, dtype=bool).reshape(data.shape)
    return np.where(m, -np.inf, data)


def lstm_step(x: Tensor, h: Tensor, c: Tensor, params: dict):
    """One LSTM step (gate order: input, forget, cell, output)."""
    hid = h.shape[1]
    if x.shape[0] != h.shape[0] or params["lstm_Wx"].shape[0] != x.shape[1]:
        raise ShapeMismatch(f"lstm input {x.shape} / hidden {h.shape}")
    z = ad.add(ad.add(ad.matmul(x, params["lstm_Wx"]), ad.matmul(h, params["lstm_Wh"])),
               params["lstm_b"])
    i = ad.sigmoid(ad.cols(z, 0, hid))
    f = ad.sigmoid(ad.cols(z, hid, 2 * hid))
    g = ad.tanh(ad.cols(z, 2 * hid, 3 * hid))
    o = ad.sigmoid(ad.cols(z, 3 * hid, 4 * hid))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


@dataclass
class PolicyStep:
    logits: np.ndarray
    probs: np.ndarray
    chosen: int
    log_prob: float


def _uniforms(rng, rows: int) -> np.ndarray:
    if isinstance(rng, np.random.Generator):
        return rng.random(rows)
    if len(rng) != rows:
        raise ValueError(f"need one generator per row: {len(rng)} for {rows} rows")
    return np.array([g.random() for g in rng])


def select(logits: Tensor, mask, mode: str = "greedy", rng=None):
    """Pick one position per row.

    Returns ``(chosen, log_prob, probs)`` where ``log_prob`` is a ``(G, 1)``
    tensor connected to the tape.  Greedy takes the argmax probability, lowest
    index on exact ties; ``sample`` draws from the probabilities with ``rng``,
    either one generator for the whole batch or a sequence with one per row.
    """
    mask = np.asarray(mask, dtype=bool).reshape(logits.shape)
    if mask.all(axis=1).any():
        raise AllMasked("no selectable position left")
    probs = ad.masked_softmax(ad.constant(logits.data), mask).data
    if mode == "greedy":
        chosen = np.argmax(probs, axis=1)
    elif mode == "sample":
        if rng is None:
            raise ValueError("sampling needs an rng")
        cdf = np.cumsum(probs, axis=1)
        u = _uniforms(rng, probs.shape[0])[:, None] * cdf[:, -1:]
        chosen = (cdf <= u).sum(axis=1)
        # guard against u landing on the final cumulative value through rounding
        last = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
        chosen = np.minimum(chosen, last)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    log_prob = ad.take(ad.masked_log_softmax(logits, mask), chosen)
    return chosen, log_prob, probs


def policy_select(logits, mask, mode: str = "greedy", rng=None) -> PolicyStep:
    """Single-row convenience wrapper around :func:`select`."""
    if not isinstance(logits, Tensor):
        logits = ad.constant(np.asarray(logits, dtype=np.float64).reshape(1, -1))
    chosen, log_prob, probs = select(logits, mask, mode, rng)
    return PolicyStep(masked(logits, mask)[0], probs[0], int(chosen[0]), float(log_prob.data[0, 0]))


class GpnNet:
    """Encoder (graph embedding) + pointer decoder, optionally with an LSTM query."""

    def __init__(self, cfg: GraphEmbedConfig, use_lstm: bool = False, rng=None, params=None):
        self.cfg = cfg
        self.use_lstm = use_lstm
        if params is None:
            rng = np.random.default_rng(0) if rng is None else rng
            params = init_params(cfg, rng, use_lstm)
        self.params = params

    def embed(self, x0: Tensor, groups: int) -> Tensor:
        return graph_embed(x0, self.params, self.cfg, groups)

    def logits(self, refs: Tensor, groups: int, query: Optional[Tensor] = None) -> Tensor:
        return pointer_logits(refs, self.params, groups, query)

    def lstm(self, x: Tensor, h: Tensor, c: Tensor):
        return lstm_step(x, h, c, self.params)

    def config(self) -> dict:
        return {"graph": asdict(self.cfg), "use_lstm": self.use_lstm}

    @classmethod
    def from_config(cls, conf: dict, arrays: dict) -> "GpnNet":
        cfg = GraphEmbedConfig(**conf["graph"])
        params = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
        return cls(cfg, conf["use_lstm"], params=params)
