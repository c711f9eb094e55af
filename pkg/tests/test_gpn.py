import numpy as np
import pytest

from gpnqap import autodiff as ad
from gpnqap.autodiff import Tape, Tensor
from gpnqap.errors import AllMasked, ShapeMismatch
from gpnqap.gpn import (GpnNet, GraphEmbedConfig, graph_embed, init_params, lstm_step, masked,
                        pointer_logits, policy_select, select)

from oracles import central_diff, embed_loops, lstm_scalar, pointer_loops, rel_err


def arrays(params):
    return {k: v.data for k, v in params.items()}


def test_gamma_one_single_layer_is_linear():
    cfg = GraphEmbedConfig(layers=1, input_dim=2, hidden_dim=5)
    p = init_params(cfg, np.random.default_rng(0))
    p["gamma_1"].data[:] = 1.0
    x = np.random.default_rng(1).normal(size=(4, 2))
    np.testing.assert_array_equal(graph_embed(Tensor(x), p, cfg).data, x @ p["theta_1"].data)


def test_gamma_zero_all_ones_rows_identical():
    cfg = GraphEmbedConfig(layers=1, input_dim=3, hidden_dim=4)
    p = init_params(cfg, np.random.default_rng(2))
    p["gamma_1"].data[:] = 0.0
    out = graph_embed(Tensor(np.ones((6, 3))), p, cfg).data
    assert np.array_equal(out, np.repeat(out[:1], 6, axis=0))


@pytest.mark.parametrize("seed", range(5))
def test_embed_matches_loop_oracle(seed):
    cfg = GraphEmbedConfig(layers=3, input_dim=2, hidden_dim=6, gamma_init=0.3)
    p = init_params(cfg, np.random.default_rng(seed))
    x = np.random.default_rng(seed + 100).normal(size=(4, 2))
    np.testing.assert_allclose(graph_embed(Tensor(x), p, cfg).data, embed_loops(x, arrays(p), 3),
                               rtol=0, atol=1e-12)


def test_batched_embed_equals_per_graph():
    cfg = GraphEmbedConfig(layers=2, input_dim=1, hidden_dim=8)
    p = init_params(cfg, np.random.default_rng(3))
    xs = np.random.default_rng(4).normal(size=(3, 5, 1))
    batched = graph_embed(Tensor(xs.reshape(15, 1)), p, cfg, groups=3).data.reshape(3, 5, 8)
    for g in range(3):
        np.testing.assert_allclose(batched[g], graph_embed(Tensor(xs[g]), p, cfg).data, atol=1e-14)


def test_permutation_equivariance():
    cfg = GraphEmbedConfig(layers=3, input_dim=2, hidden_dim=7)
    p = init_params(cfg, np.random.default_rng(5))
    x = np.random.default_rng(6).normal(size=(9, 2))
    perm = np.random.default_rng(7).permutation(9)
    a = graph_embed(Tensor(x[perm]), p, cfg).data
    b = graph_embed(Tensor(x), p, cfg).data[perm]
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_embed_shape_errors():
    cfg = GraphEmbedConfig(layers=1, input_dim=2, hidden_dim=3)
    p = init_params(cfg, np.random.default_rng(0))
    with pytest.raises(ShapeMismatch):
        graph_embed(Tensor(np.ones((4, 3))), p, cfg)
    with pytest.raises(ShapeMismatch):
        graph_embed(Tensor(np.ones((5, 2))), p, cfg, groups=2)
    with pytest.raises(ValueError):
        GraphEmbedConfig(layers=0)


def test_pointer_logits_match_oracle():
    rng = np.random.default_rng(8)
    p = init_params(GraphEmbedConfig(hidden_dim=4), rng, use_lstm=True)
    refs = rng.normal(size=(3, 4))
    q = rng.normal(size=(1, 4))
    a = arrays(p)
    np.testing.assert_allclose(pointer_logits(Tensor(refs), p).data[0],
                               pointer_loops(refs, a["W_r"], a["v"]), rtol=0, atol=1e-12)
    np.testing.assert_allclose(pointer_logits(Tensor(refs), p, query=Tensor(q)).data[0],
                               pointer_loops(refs, a["W_r"], a["v"], a["W_q"], q[0]),
                               rtol=0, atol=1e-12)


def test_query_free_equals_zero_wq():
    rng = np.random.default_rng(9)
    p = init_params(GraphEmbedConfig(hidden_dim=5), rng, use_lstm=True)
    p["W_q"].data[:] = 0.0
    refs = Tensor(rng.normal(size=(6, 5)))
    with_q = pointer_logits(refs, p, query=Tensor(rng.normal(size=(1, 5)))).data
    np.testing.assert_array_equal(with_q, pointer_logits(refs, p).data)


def test_zero_v_gives_uniform_policy():
    rng = np.random.default_rng(10)
    p = init_params(GraphEmbedConfig(hidden_dim=4), rng)
    p["v"].data[:] = 0.0
    logits = pointer_logits(Tensor(rng.normal(size=(5, 4))), p)
    mask = np.array([[False, True, False, False, True]])
    step = policy_select(logits, mask)
    np.testing.assert_allclose(step.probs, [1 / 3, 0, 1 / 3, 1 / 3, 0])
    assert step.chosen == 0
    assert np.isneginf(step.logits[[1, 4]]).all()


def test_select_examples():
    logits = np.log([[0.2, 0.5, 0.3]])
    assert policy_select(logits, [[False] * 3]).chosen == 1
    assert policy_select([[1.0, 3.0, 3.0]], [[False] * 3]).chosen == 1
    forced = policy_select([[9.0, -4.0, 2.0]], [[True, False, True]])
    assert forced.chosen == 1 and forced.probs[1] == 1.0 and forced.log_prob == 0.0
    with pytest.raises(AllMasked):
        policy_select([[1.0, 2.0]], [[True, True]])
    with pytest.raises(ValueError):
        policy_select([[1.0, 2.0]], [[False, False]], mode="beam")


def test_sampling_frequencies():
    rng = np.random.default_rng(11)
    logits = Tensor(np.log(np.tile([[0.25, 0.75]], (100_000, 1))))
    chosen, logp, _ = select(logits, np.zeros((100_000, 2), bool), "sample", rng)
    assert abs(np.mean(chosen == 0) - 0.25) <= 0.01
    np.testing.assert_allclose(logp.data[:, 0], np.log(np.where(chosen == 0, 0.25, 0.75)))


def test_sampling_never_picks_masked():
    rng = np.random.default_rng(12)
    logits = Tensor(rng.normal(size=(2000, 6)) * 5)
    mask = rng.random((2000, 6)) < 0.5
    mask[np.arange(2000), rng.integers(0, 6, 2000)] = False
    chosen, logp, _ = select(logits, mask, "sample", rng)
    assert not mask[np.arange(2000), chosen].any()
    assert np.isfinite(logp.data).all()


def test_per_row_generators_match_single_row_draws():
    rng = np.random.default_rng(15)
    logits = Tensor(rng.normal(size=(4, 5)))
    mask = np.zeros((4, 5), bool)
    gens = [np.random.default_rng(s) for s in range(4)]
    chosen, _, _ = select(logits, mask, "sample", gens)
    for r in range(4):
        alone, _, _ = select(Tensor(logits.data[r:r + 1]), mask[:1], "sample",
                             np.random.default_rng(r))
        assert chosen[r] == alone[0]
    with pytest.raises(ValueError):
        select(logits, mask, "sample", gens[:2])


def test_lstm_zero_weights_and_oracle():
    rng = np.random.default_rng(13)
    h = 4
    p = init_params(GraphEmbedConfig(hidden_dim=h), rng, use_lstm=True)
    x, h0, c0 = (Tensor(rng.normal(size=(1, h))) for _ in range(3))
    a = arrays(p)
    hn, cn = lstm_step(x, h0, c0, p)
    ho, co = lstm_scalar(x.data[0], h0.data[0], c0.data[0], a["lstm_Wx"], a["lstm_Wh"],
                         a["lstm_b"][0])
    np.testing.assert_allclose(hn.data[0], ho, rtol=0, atol=1e-12)
    np.testing.assert_allclose(cn.data[0], co, rtol=0, atol=1e-12)
    for k in ("lstm_Wx", "lstm_Wh", "lstm_b"):
        p[k].data[:] = 0.0
    hz, _ = lstm_step(x, Tensor(np.zeros((1, h))), Tensor(np.zeros((1, h))), p)
    assert not hz.data.any()
    p["lstm_b"].data[:] = 50.0
    hs, _ = lstm_step(Tensor(np.full((1, h), 100.0)), h0, c0, p)
    assert (np.abs(hs.data) < 1).all()
    with pytest.raises(ShapeMismatch):
        lstm_step(Tensor(np.ones((2, h))), h0, c0, p)


def test_gpn_parameter_gradients_by_finite_difference():
    rng = np.random.default_rng(14)
    net = GpnNet(GraphEmbedConfig(layers=2, input_dim=1, hidden_dim=4), rng=rng)
    x = Tensor(rng.normal(size=(10, 1)))
    mask = np.zeros((2, 5), bool)
    mask[0, 1] = mask[1, 3] = True
    chosen = np.array([2, 4])

    def loss_value():
        logits = net.logits(net.embed(x, 2), 2)
        return ad.sum_all(ad.take(ad.masked_log_softmax(logits, mask), chosen))

    with Tape() as tape:
        grads = tape.backward(loss_value())
    for name, t in net.params.items():
        num = central_diff(lambda: loss_value().item(), t.data)
        assert rel_err(grads.get(t, np.zeros_like(t.data)), num) <= 1e-4, name


def test_masked_helper():
    out = masked(Tensor([[1.0, 2.0]]), [[False, True]])
    assert out[0, 0] == 1.0 and np.isneginf(out[0, 1])


def test_config_round_trip():
    net = GpnNet(GraphEmbedConfig(layers=2, input_dim=2, hidden_dim=3), use_lstm=True,
                 rng=np.random.default_rng(0))
    back = GpnNet.from_config(net.config(), arrays(net.params))
    assert back.cfg == net.cfg and back.use_lstm
    for k in net.params:
        np.testing.assert_array_equal(back.params[k].data, net.params[k].data)
