import csv

import numpy as np
import pytest

from hierfusion.network import NetworkShape, init_network
from hierfusion.tree_prior import (
    HierPriorConfig,
    TrainConfig,
    fit,
    leaf_prior_grad_matrix,
    leaf_prior_gradient,
    make_head_state,
    prior_penalty,
    total_loss,
    update_internal,
    write_history_csv,
)

from .oracles import dense_internal_solve, penalty_from_definition


def net_for(tree, d=4, seed=0, layers=0, units=0):
    shape = NetworkShape(d, layers, units, tree.num_leaves)
    return init_network(shape, seed=seed)


class TestConfig:
    def test_defaults(self):
        cfg = HierPriorConfig()
        assert cfg.lambdas == {0: 1.0, 1: 5.0, 2: 10.0}
        assert cfg.sweep_tol == 1e-8
        assert cfg.max_sweeps == 100

    def test_precision_clamps_to_deepest(self):
        cfg = HierPriorConfig(lambdas={0: 1.0, 1: 5.0})
        assert cfg.precision(0) == 1.0
        assert cfg.precision(1) == 5.0
        assert cfg.precision(9) == 5.0

    def test_validation(self):
        with pytest.raises(ValueError):
            HierPriorConfig(lambdas={})
        with pytest.raises(ValueError):
            HierPriorConfig(lambdas={0: -1.0})
        with pytest.raises(ValueError):
            HierPriorConfig(sweep_tol=0)


class TestHeadState:
    def test_leaf_betas_are_head_views(self, tiny_tree):
        net = net_for(tiny_tree)
        state = make_head_state(tiny_tree, net)
        for leaf in tiny_tree.leaves:
            assert np.shares_memory(state.beta(leaf), net.head)
        net.head[tiny_tree.leaf_index("pizza")] = 7.0
        assert np.all(state.beta("pizza") == 7.0)

    def test_root_beta_is_zero(self, tiny_tree):
        state = make_head_state(tiny_tree, net_for(tiny_tree))
        assert np.all(state.beta(tiny_tree.root) == 0)

    def test_leaf_count_mismatch_rejected(self, tiny_tree):
        net = init_network(NetworkShape(4, 0, 0, 9), seed=0)
        with pytest.raises(ValueError, match="leaves"):
            make_head_state(tiny_tree, net)


class TestPenalty:
    def test_hand_computed_two_layer(self, tiny_tree):
        net = net_for(tiny_tree, d=2)
        state = make_head_state(tiny_tree, net)
        cfg = HierPriorConfig(lambdas={0: 2.0, 1: 4.0})
        state.beta("food")[:] = [1.0, 0.0]
        state.beta("nightlife")[:] = [0.0, 0.0]
        net.head[tiny_tree.leaf_index("pizza")] = [1.0, 1.0]
        # edges: food-ROOT (lam0=2): 2/2*1 = 1; nightlife-ROOT: 0
        # pizza-food (lam1=4): 4/2*(0+1) = 2; sushi-food: 4/2*1 = 2
        # bar, club under nightlife: 0
        assert prior_penalty(state, cfg) == pytest.approx(1 + 2 + 2)

    def test_matches_definition_oracle(self, three_layer_tree, rng):
        net = net_for(three_layer_tree, d=5)
        net.head[:] = rng.normal(size=net.head.shape)
        state = make_head_state(three_layer_tree, net)
        for node in ("food", "nightlife", "outdoors", "restaurant", "cafe"):
            state.beta(node)[:] = rng.normal(size=5)
        cfg = HierPriorConfig()
        betas = {n: state.beta(n) for n in three_layer_tree.nodes}
        assert prior_penalty(state, cfg) == pytest.approx(
            penalty_from_definition(three_layer_tree, cfg, betas), rel=1e-12
        )

    def test_lambda_indexed_by_parent_layer(self, three_layer_tree):
        # pizza sits on layer 3 but its edge uses the layer-2 precision
        net = net_for(three_layer_tree, d=1)
        state = make_head_state(three_layer_tree, net)
        cfg = HierPriorConfig(lambdas={0: 1.0, 1: 1.0, 2: 100.0})
        net.head[three_layer_tree.leaf_index("pizza")] = [1.0]
        assert prior_penalty(state, cfg) == pytest.approx(100.0 / 2)


class TestLeafGradient:
    def test_formula(self, tiny_tree, rng):
        net = net_for(tiny_tree, d=3)
        net.head[:] = rng.normal(size=net.head.shape)
        state = make_head_state(tiny_tree, net)
        state.beta("food")[:] = rng.normal(size=3)
        cfg = HierPriorConfig()
        g = leaf_prior_gradient(state, cfg, "pizza")
        expected = 5.0 * (state.beta("pizza") - state.beta("food"))
        np.testing.assert_allclose(g, expected, atol=1e-14)

    def test_matches_numeric_penalty_gradient(self, three_layer_tree, rng):
        net = net_for(three_layer_tree, d=3)
        net.head[:] = rng.normal(size=net.head.shape)
        state = make_head_state(three_layer_tree, net)
        for node in ("food", "restaurant", "cafe", "nightlife", "outdoors"):
            state.beta(node)[:] = rng.normal(size=3)
        cfg = HierPriorConfig()
        grad = leaf_prior_grad_matrix(state, cfg)
        step = 1e-6
        for leaf in three_layer_tree.leaves:
            row = three_layer_tree.leaf_index(leaf)
            for j in range(3):
                orig = net.head[row, j]
                net.head[row, j] = orig + step
                up = prior_penalty(state, cfg)
                net.head[row, j] = orig - step
                down = prior_penalty(state, cfg)
                net.head[row, j] = orig
                assert grad[row, j] == pytest.approx((up - down) / (2 * step), abs=1e-6)


class TestUpdateInternal:
    def test_matches_dense_solve(self, three_layer_tree, rng):
        net = net_for(three_layer_tree, d=4)
        net.head[:] = rng.normal(size=net.head.shape)
        state = make_head_state(three_layer_tree, net)
        cfg = HierPriorConfig(sweep_tol=1e-12, max_sweeps=1000)
        update_internal(state, cfg)

        fixed = {three_layer_tree.root: np.zeros(4)}
        for leaf in three_layer_tree.leaves:
            fixed[leaf] = net.head[three_layer_tree.leaf_index(leaf)]
        solved = dense_internal_solve(three_layer_tree, cfg, fixed)
        for node, beta in solved.items():
            np.testing.assert_allclose(state.beta(node), beta, atol=1e-9)

    def test_never_increases_penalty(self, three_layer_tree, rng):
        net = net_for(three_layer_tree, d=4)
        net.head[:] = rng.normal(size=net.head.shape)
        state = make_head_state(three_layer_tree, net)
        cfg = HierPriorConfig()
        before = prior_penalty(state, cfg)
        update_internal(state, cfg)
        after = prior_penalty(state, cfg)
        assert after <= before + 1e-12

    def test_flat_tree_has_nothing_to_update(self, rng):
        from hierfusion.hierarchy import parse_hierarchy

        flat = parse_hierarchy("a\tROOT\t1\nb\tROOT\t1\n")
        net = net_for(flat, d=2)
        state = make_head_state(flat, net)
        assert update_internal(state, HierPriorConfig()) == 0


class TestTotalLoss:
    def test_decomposes(self, tiny_tree, rng):
        net = net_for(tiny_tree, d=4)
        net.head[:] = rng.normal(size=net.head.shape)
        state = make_head_state(tiny_tree, net)
        cfg = HierPriorConfig()
        X = rng.normal(size=(10, 4))
        y = rng.integers(0, 4, size=10)
        data, pen, tot = total_loss(net, state, cfg, X, y)
        assert tot == pytest.approx(data + pen)
        assert pen == pytest.approx(prior_penalty(state, cfg))

    def test_unbound_state_rejected(self, tiny_tree, rng):
        net_a = net_for(tiny_tree, d=4, seed=0)
        net_b = net_for(tiny_tree, d=4, seed=1)
        state = make_head_state(tiny_tree, net_a)
        X = rng.normal(size=(4, 4))
        y = np.zeros(4, dtype=int)
        with pytest.raises(ValueError, match="bound"):
            total_loss(net_b, state, HierPriorConfig(), X, y)


def synthetic_xy(tree, d, m, rng):
    centers = rng.normal(size=(tree.num_leaves, d)) * 2
    y = rng.integers(0, tree.num_leaves, size=m)
    X = centers[y] + rng.normal(size=(m, d))
    return X, y


class TestFit:
    def test_loss_decreases(self, tiny_tree, rng):
        X, y = synthetic_xy(tiny_tree, 6, 80, rng)
        net = net_for(tiny_tree, d=6)
        result = fit(net, X, y, hierarchy=tiny_tree,
                     train_cfg=TrainConfig(epochs=10, lr=0.2, seed=0))
        losses = [row["total_loss"] for row in result.history]
        assert losses[-1] < losses[0]

    def test_full_batch_alternation_is_monotone(self, tiny_tree, rng):
        X, y = synthetic_xy(tiny_tree, 6, 60, rng)
        net = net_for(tiny_tree, d=6)
        cfg = TrainConfig(epochs=10, batch_size=None, lr=0.1, seed=0)
        result = fit(net, X, y, hierarchy=tiny_tree, train_cfg=cfg,
                     track_step_losses=True)
        losses = [loss for _, loss in result.step_losses]
        diffs = np.diff(losses)
        assert diffs.max() <= 1e-9

    def test_no_prior_and_no_hierarchy_paths_identical(self, tiny_tree, rng):
        X, y = synthetic_xy(tiny_tree, 5, 40, rng)
        cfg = TrainConfig(epochs=5, lr=0.1, seed=3, use_prior=False)
        net_a = net_for(tiny_tree, d=5, seed=1)
        net_b = net_for(tiny_tree, d=5, seed=1)
        fit(net_a, X, y, hierarchy=tiny_tree, train_cfg=cfg)
        fit(net_b, X, y, hierarchy=None, train_cfg=cfg)
        assert np.array_equal(net_a.head, net_b.head)

    def test_use_prior_without_hierarchy_rejected(self, tiny_tree, rng):
        X, y = synthetic_xy(tiny_tree, 5, 10, rng)
        net = net_for(tiny_tree, d=5)
        with pytest.raises(ValueError, match="hierarchy"):
            fit(net, X, y, hierarchy=None, train_cfg=TrainConfig(epochs=1))

    def test_prior_pulls_siblings_together(self, tiny_tree, rng):
        X, y = synthetic_xy(tiny_tree, 5, 60, rng)
        strong = HierPriorConfig(lambdas={0: 20.0, 1: 20.0})
        cfg = TrainConfig(epochs=20, lr=0.05, seed=0)
        net_h = net_for(tiny_tree, d=5, seed=2)
        fit(net_h, X, y, hierarchy=tiny_tree, prior_cfg=strong, train_cfg=cfg)
        net_f = net_for(tiny_tree, d=5, seed=2)
        fit(net_f, X, y, train_cfg=TrainConfig(epochs=20, lr=0.05, seed=0, use_prior=False))

        def sibling_gap(net):
            i, j = tiny_tree.leaf_index("pizza"), tiny_tree.leaf_index("sushi")
            return np.linalg.norm(net.head[i] - net.head[j])

        assert sibling_gap(net_h) < sibling_gap(net_f)

    def test_validation_history(self, tiny_tree, rng):
        X, y = synthetic_xy(tiny_tree, 5, 50, rng)
        Xv, yv = synthetic_xy(tiny_tree, 5, 20, rng)
        net = net_for(tiny_tree, d=5)
        result = fit(net, X, y, hierarchy=tiny_tree,
                     train_cfg=TrainConfig(epochs=3, seed=0), X_val=Xv, y_val=yv)
        assert len(result.history) == 3
        for row in result.history:
            assert 0.0 <= row["macro_f1_val"] <= 1.0
            assert 0.0 <= row["micro_f1_val"] <= 1.0

    def test_label_range_checked(self, tiny_tree, rng):
        net = net_for(tiny_tree, d=4)
        with pytest.raises(ValueError, match="range"):
            fit(net, rng.normal(size=(3, 4)), np.array([0, 1, 9]), hierarchy=tiny_tree)

    def test_history_csv(self, tmp_path, tiny_tree, rng):
        X, y = synthetic_xy(tiny_tree, 4, 30, rng)
        net = net_for(tiny_tree, d=4)
        result = fit(net, X, y, hierarchy=tiny_tree, train_cfg=TrainConfig(epochs=2, seed=0))
        path = tmp_path / "history.csv"
        write_history_csv(path, result.history)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert rows[0]["epoch"] == "1"
        assert float(rows[1]["total_loss"]) == pytest.approx(result.history[1]["total_loss"])
        assert rows[0]["macro_f1_val"] == ""

    def test_state_reuse_continues_training(self, tiny_tree, rng):
        X, y = synthetic_xy(tiny_tree, 5, 50, rng)
        net = net_for(tiny_tree, d=5)
        first = fit(net, X, y, hierarchy=tiny_tree, train_cfg=TrainConfig(epochs=3, seed=0))
        internal_before = first.state.beta("food").copy()
        second = fit(net, X, y, hierarchy=tiny_tree,
                     train_cfg=TrainConfig(epochs=3, seed=1), state=first.state)
        assert second.state is first.state
        assert not np.array_equal(second.state.beta("food"), internal_before)
