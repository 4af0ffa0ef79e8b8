import numpy as np
import pytest
from _util import random_state

from qselftrain.dqn import (
    ACCEPT, REJECT, QNetwork, ReplayBuffer, Transition, batch_loss_and_grad, bellman_target,
    dqn_train_step, q_forward, select_action, td_targets,
)
from qselftrain.exceptions import RejectedInputError
from qselftrain.nn import Optimizer, OptimizerConfig, finite_diff_check


def small_net(seed=0, hp_mode="full"):
    return QNetwork(3, 4, hp_mode=hp_mode, content_filters=4, marginal_filters=3, hidden=8,
                    seed=seed)


def transitions(net, rng, k, gamma_terminal=False):
    out = []
    for _ in range(k):
        action = int(rng.integers(2))
        reward = float(rng.normal()) if action == ACCEPT else 0.0
        out.append(Transition(random_state(net, rng), action, reward, random_state(net, rng),
                              bool(gamma_terminal or rng.random() < 0.3)))
    return out


class TestForward:
    def test_zero_network(self):
        net = QNetwork(3, 4, zero=True)
        state = random_state(net, np.random.default_rng(0))
        assert q_forward(net, state).tolist() == [0.0, 0.0]

    def test_output_bias(self):
        net = QNetwork(3, 4, zero=True)
        net.params["out_b"][:] = [0.0, 5.0]
        state = random_state(net, np.random.default_rng(0))
        assert q_forward(net, state).tolist() == [0.0, 5.0]

    def test_batch_equals_single(self):
        net = small_net()
        rng = np.random.default_rng(1)
        states = [random_state(net, rng) for _ in range(6)]
        q, _ = net.forward(states)
        for i, s in enumerate(states):
            assert np.allclose(q[i], q_forward(net, s), atol=1e-12)

    def test_forward_matches_stored_encoding(self):
        # the batched encoder reproduces the state's own h_s and h_p
        net = small_net()
        state = random_state(net, np.random.default_rng(2), n=5)
        _, cache = net.forward([state])
        n_c = net.content_size
        assert np.allclose(cache["full"][0], state.vector(), atol=1e-12)
        assert cache["full"].shape[1] == n_c + 1 + net.marginal_filters + net.n_labels

    def test_default_sizes(self):
        net = QNetwork(50, 7)
        assert net.content_size == 384
        assert net.params["hidden_W"].shape == (256, 384 + 1 + 20 + 7)
        assert net.params["out_W"].shape == (2, 256)


class TestGradients:
    @pytest.mark.parametrize("hp_mode", ["full", "predicted"])
    def test_batch_loss(self, hp_mode):
        net = small_net(3, hp_mode)
        rng = np.random.default_rng(4)
        batch = transitions(net, rng, 5)
        targets = td_targets(net, batch, 0.9)
        params = {k: v.copy() for k, v in net.params.items()}
        err = finite_diff_check(lambda p: batch_loss_and_grad(net, batch, targets, p),
                                params, h=1e-5)
        assert err < 1e-4

    def test_content_encoder_alone(self):
        # loss = sum of q through the content CNN only (other inputs fixed)
        net = small_net(5)
        states = [random_state(net, np.random.default_rng(6), n=4)]
        params = {k: v.copy() for k, v in net.params.items()}

        def loss(p):
            q, cache = net.forward(states, p)
            grads = net.backward(cache, np.ones_like(q), p)
            return float(q.sum()), {k: grads[k] for k in p}

        sub = {k: params[k] for k in params if k.startswith("conv")}
        full = dict(params)

        def content_loss(p):
            full.update(p)
            value, grads = loss(full)
            return value, {k: grads[k] for k in p}

        assert finite_diff_check(content_loss, sub, h=1e-5) < 1e-4

    def test_marginal_encoder_alone(self):
        net = small_net(7)
        states = [random_state(net, np.random.default_rng(8), n=6)]
        params = {k: v.copy() for k, v in net.params.items()}
        sub = {k: params[k] for k in ("marg_W", "marg_b")}

        def loss(p):
            params.update(p)
            q, cache = net.forward(states, params)
            grads = net.backward(cache, np.ones_like(q), params)
            return float(q.sum()), {k: grads[k] for k in p}

        assert finite_diff_check(loss, sub, h=1e-5) < 1e-4


class TestBellman:
    def test_gamma_zero_is_reward(self):
        net = small_net()
        s = random_state(net, np.random.default_rng(0))
        assert bellman_target(0.7, s, False, net, 0.0) == 0.7

    def test_terminal_is_reward(self):
        net = small_net()
        s = random_state(net, np.random.default_rng(0))
        assert bellman_target(-0.2, s, True, net, 0.99) == -0.2

    def test_bootstrap(self):
        net = small_net()
        s = random_state(net, np.random.default_rng(0))
        expected = 0.1 + 0.5 * float(np.max(q_forward(net, s)))
        assert bellman_target(0.1, s, False, net, 0.5) == pytest.approx(expected)

    def test_batch_targets_agree(self):
        net = small_net()
        batch = transitions(net, np.random.default_rng(1), 8)
        got = td_targets(net, batch, 0.9)
        want = [bellman_target(t.reward, t.next_state, t.terminal, net, 0.9) for t in batch]
        assert np.allclose(got, want, atol=1e-12)

    def test_target_network_used(self):
        net, other = small_net(0), small_net(1)
        batch = transitions(net, np.random.default_rng(2), 4, gamma_terminal=False)
        live = [t for t in batch if not t.terminal]
        got = td_targets(net, live, 0.9, target_net=other)
        want = [bellman_target(t.reward, t.next_state, False, other, 0.9) for t in live]
        assert np.allclose(got, want)

    def test_gamma_range(self):
        net = small_net()
        with pytest.raises(RejectedInputError):
            bellman_target(0.0, None, True, net, 1.5)

    def test_converges_to_rewards(self):
        net = small_net(9)
        rng = np.random.default_rng(10)
        batch = transitions(net, rng, 10, gamma_terminal=True)
        opt = Optimizer(OptimizerConfig("adam", 1e-3))
        for _ in range(5000):
            dqn_train_step(net, batch, 0.0, opt)
            q, _ = net.forward([t.state for t in batch])
            got = q[np.arange(10), [t.action for t in batch]]
            if np.max(np.abs(got - [t.reward for t in batch])) < 0.01:
                break
        assert np.max(np.abs(got - [t.reward for t in batch])) < 0.01

    def test_sgd_loss_decreases(self):
        net = small_net(11)
        batch = transitions(net, np.random.default_rng(12), 10, gamma_terminal=True)
        opt = Optimizer(OptimizerConfig("sgd", 1e-3))
        losses = [dqn_train_step(net, batch, 0.0, opt) for _ in range(50)]
        assert all(b <= a for a, b in zip(losses, losses[1:]))


class TestReplay:
    def make(self, reward):
        return Transition(None, ACCEPT, reward, None, True)

    def test_fifo_eviction(self):
        buf = ReplayBuffer(3)
        for r in range(5):
            buf.push(self.make(float(r)))
        assert [t.reward for t in buf.items] == [2.0, 3.0, 4.0]

    def test_uniform_sampling(self):
        buf = ReplayBuffer(10)
        for r in range(4):
            buf.push(self.make(float(r)))
        draws = buf.sample(100_000, np.random.default_rng(0))
        freq = np.bincount([int(t.reward) for t in draws], minlength=4) / 100_000
        assert np.all(np.abs(freq - 0.25) < 0.05)

    def test_empty(self):
        with pytest.raises(RejectedInputError):
            ReplayBuffer(2).sample(1)

    def test_capacity(self):
        with pytest.raises(RejectedInputError):
            ReplayBuffer(0)

    def test_reject_must_be_unrewarded(self):
        with pytest.raises(RejectedInputError):
            Transition(None, REJECT, 1.0, None, True)


class TestPolicy:
    def test_greedy(self):
        rng = np.random.default_rng(0)
        assert select_action(np.array([0.0, 1.0]), 0.0, rng) == ACCEPT
        assert select_action(np.array([1.0, 0.0]), 0.0, rng) == REJECT
        assert select_action(np.array([1.0, 1.0]), 0.0, rng) == REJECT

    def test_full_exploration_is_fair(self):
        rng = np.random.default_rng(1)
        rate = np.mean([select_action(np.array([5.0, 0.0]), 1.0, rng) for _ in range(20_000)])
        assert abs(rate - 0.5) < 0.02


def test_save_load_roundtrip(tmp_path):
    net = small_net(13, "predicted")
    net.save(tmp_path / "a.bin")
    net.save(tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    again = QNetwork.load(tmp_path / "a.bin")
    s = random_state(net, np.random.default_rng(0))
    assert np.array_equal(q_forward(net, s), q_forward(again, s))


def test_load_rejects_garbage(tmp_path):
    (tmp_path / "x").write_bytes(b"junk")
    with pytest.raises(RejectedInputError):
        QNetwork.load(tmp_path / "x")


def test_copy_is_independent():
    net = small_net()
    twin = net.copy()
    twin.params["out_b"] += 1
    assert not np.array_equal(net.params["out_b"], twin.params["out_b"])
