import numpy as np
import pytest

from prescient import layers, ndtensor as nd
from prescient.errors import ConfigError, ShapeError

from helpers import gradcheck, linear_probe


def tensorize(arrays, requires_grad=True):
    return {k: nd.Tensor(v.copy(), requires_grad=requires_grad) for k, v in arrays.items()}


class TestTcn:
    def test_identity_configuration(self):
        cfg = layers.TcnConfig(in_features=3, channels=3, layers=1, kernel_size=1)
        params = {
            "tcn.0.w": nd.Tensor(np.eye(3)[:, :, None]),
            "tcn.0.b": nd.Tensor(np.zeros(3)),
        }
        x = nd.Tensor(np.random.default_rng(0).standard_normal((5, 3)))
        out = layers.tcn_forward(x, cfg, params)
        # block output = relu(x) + x for identity conv with zero bias
        np.testing.assert_allclose(out.data, np.maximum(x.data, 0) + x.data)

    def test_output_shape(self):
        cfg = layers.TcnConfig(in_features=3, channels=8, layers=2)
        params = tensorize(layers.init_tcn_params(cfg, np.random.default_rng(1)))
        x = nd.Tensor(np.random.default_rng(2).standard_normal((5, 3)))
        assert layers.tcn_forward(x, cfg, params).shape == (5, 8)

    def test_batched_shape(self):
        cfg = layers.TcnConfig(in_features=3, channels=8, layers=2)
        params = tensorize(layers.init_tcn_params(cfg, np.random.default_rng(1)))
        x = nd.Tensor(np.random.default_rng(2).standard_normal((4, 5, 3)))
        assert layers.tcn_forward(x, cfg, params).shape == (4, 5, 8)

    @pytest.mark.parametrize("schedule", [[1, 2], [1, 4], [2, 2]])
    def test_causality_all_schedules(self, schedule):
        cfg = layers.TcnConfig(in_features=3, channels=6, layers=2, dilations=schedule)
        params = tensorize(layers.init_tcn_params(cfg, np.random.default_rng(3)))
        x = np.random.default_rng(4).standard_normal((8, 3))
        base = layers.tcn_forward(nd.Tensor(x), cfg, params).data
        bumped = x.copy()
        bumped[4] += 9.0
        out = layers.tcn_forward(nd.Tensor(bumped), cfg, params).data
        assert np.array_equal(out[:4], base[:4])
        assert not np.array_equal(out[4:], base[4:])

    def test_feature_mismatch_raises(self):
        cfg = layers.TcnConfig(in_features=3, channels=4, layers=1)
        params = tensorize(layers.init_tcn_params(cfg, np.random.default_rng(0)))
        with pytest.raises(ShapeError):
            layers.tcn_forward(nd.Tensor(np.zeros((5, 2))), cfg, params)

    def test_gradients(self):
        cfg = layers.TcnConfig(in_features=2, channels=3, layers=2)
        init = layers.init_tcn_params(cfg, np.random.default_rng(5))
        names = sorted(init)
        x = np.random.default_rng(6).standard_normal((4, 2))

        def build(tensors):
            params = dict(zip(names, tensors[:-1]))
            return linear_probe(
                layers.tcn_forward(tensors[-1], cfg, params), np.random.default_rng(7)
            )

        gradcheck(build, [init[n] for n in names] + [x])


class TestGru:
    def test_zero_params_zero_output(self):
        cfg = layers.GruConfig(input_size=4, hidden_size=3)
        params = {
            k: nd.Tensor(np.zeros_like(v))
            for k, v in layers.init_gru_params(cfg, np.random.default_rng(0)).items()
        }
        x = nd.Tensor(np.random.default_rng(1).standard_normal((6, 4)))
        out = layers.gru_forward(x, cfg, params)
        np.testing.assert_array_equal(out.data, np.zeros((6, 3)))

    def test_output_shape(self):
        cfg = layers.GruConfig(input_size=8, hidden_size=16)
        params = tensorize(layers.init_gru_params(cfg, np.random.default_rng(2)))
        x = nd.Tensor(np.random.default_rng(3).standard_normal((5, 8)))
        assert layers.gru_forward(x, cfg, params).shape == (5, 16)

    def test_feature_mismatch_raises(self):
        cfg = layers.GruConfig(input_size=8, hidden_size=16)
        params = tensorize(layers.init_gru_params(cfg, np.random.default_rng(2)))
        with pytest.raises(ShapeError):
            layers.gru_forward(nd.Tensor(np.zeros((5, 7))), cfg, params)

    def test_gradients(self):
        cfg = layers.GruConfig(input_size=3, hidden_size=4)
        init = layers.init_gru_params(cfg, np.random.default_rng(4))
        names = sorted(init)
        x = np.random.default_rng(5).standard_normal((4, 3))

        def build(tensors):
            params = dict(zip(names, tensors[:-1]))
            return nd.sum_all(layers.gru_forward(tensors[-1], cfg, params))

        gradcheck(build, [init[n] for n in names] + [x])


class TestTransformer:
    def make(self, dim=6, heads=2, enc="sinusoidal", seed=0):
        cfg = layers.TransformerConfig(model_dim=dim, heads=heads, positional_encoding=enc)
        params = tensorize(layers.init_transformer_params(cfg, np.random.default_rng(seed)))
        return cfg, params

    def test_attention_rows_sum_to_one(self):
        cfg, params = self.make()
        x = nd.Tensor(np.random.default_rng(1).standard_normal((5, 6)))
        collected = []
        layers.transformer_forward(x, cfg, params, collect_attn=collected)
        assert len(collected) == 1
        sums = collected[0].sum(axis=-1)
        np.testing.assert_allclose(sums, np.ones_like(sums), atol=1e-9)

    def test_shape_preserved(self):
        cfg, params = self.make(dim=16, heads=2)
        x = nd.Tensor(np.random.default_rng(2).standard_normal((5, 16)))
        assert layers.transformer_forward(x, cfg, params).shape == (5, 16)

    def test_permutation_equivariance_without_positions(self):
        cfg, params = self.make(enc="none", seed=3)
        rng = np.random.default_rng(4)
        for _ in range(5):
            x = rng.standard_normal((3, 6))
            perm = rng.permutation(3)
            out = layers.transformer_forward(nd.Tensor(x), cfg, params).data
            out_perm = layers.transformer_forward(nd.Tensor(x[perm]), cfg, params).data
            np.testing.assert_allclose(out_perm, out[perm], atol=1e-12)

    def test_indivisible_heads_rejected(self):
        with pytest.raises(ConfigError):
            layers.TransformerConfig(model_dim=6, heads=4)

    def test_gradients(self):
        cfg = layers.TransformerConfig(model_dim=4, heads=2, feedforward_dim=6)
        init = layers.init_transformer_params(cfg, np.random.default_rng(5))
        names = sorted(init)
        x = np.random.default_rng(6).standard_normal((3, 4))

        def build(tensors):
            params = dict(zip(names, tensors[:-1]))
            return linear_probe(
                layers.transformer_forward(tensors[-1], cfg, params),
                np.random.default_rng(7),
            )

        gradcheck(build, [init[n] for n in names] + [x])


class TestPoolAndHeads:
    def test_mean_pool_rows(self):
        out = layers.mean_pool(nd.Tensor([[1.0, 3.0], [3.0, 5.0]]))
        np.testing.assert_array_equal(out.data, [2.0, 4.0])

    def test_mean_pool_single_row_identity(self):
        row = np.random.default_rng(0).standard_normal((1, 7))
        np.testing.assert_array_equal(layers.mean_pool(nd.Tensor(row)).data, row[0])

    def test_mean_pool_matches_sum(self):
        x = np.random.default_rng(1).standard_normal((5, 4))
        np.testing.assert_allclose(layers.mean_pool(nd.Tensor(x)).data, x.sum(axis=0) / 5)

    def test_zero_weight_heads_emit_bias(self):
        params = {
            "head.cont_w": nd.Tensor(np.zeros((4, 6))),
            "head.cont_b": nd.Tensor(np.arange(6.0)),
        }
        z = nd.Tensor(np.random.default_rng(2).standard_normal(4))
        y_cont, y_disc = layers.dual_heads(z, horizon=2, n_cont=3, n_disc=0, params=params)
        np.testing.assert_array_equal(y_cont.data, np.arange(6.0).reshape(2, 3))
        assert y_disc is None

    def test_continuous_only_shapes(self):
        rng = np.random.default_rng(3)
        params = tensorize(layers.init_head_params(16, 1, 25, 0, rng))
        z = nd.Tensor(rng.standard_normal(16))
        y_cont, y_disc = layers.dual_heads(z, 1, 25, 0, params)
        assert y_cont.shape == (1, 25) and y_disc is None

    def test_horizon_must_be_positive(self):
        with pytest.raises(ConfigError):
            layers.dual_heads(nd.Tensor(np.zeros(4)), 0, 2, 0, {})

    def test_gradients_through_both_heads(self):
        rng = np.random.default_rng(4)
        init = layers.init_head_params(5, 2, 3, 2, rng)
        names = sorted(init)
        z = rng.standard_normal(5)

        def build(tensors):
            params = dict(zip(names, tensors[:-1]))
            y_cont, y_disc = layers.dual_heads(tensors[-1], 2, 3, 2, params)
            probe = np.random.default_rng(5)
            return nd.add(linear_probe(y_cont, probe), linear_probe(y_disc, probe))

        gradcheck(build, [init[n] for n in names] + [z])


class TestShapeChain:
    @pytest.mark.parametrize("seed", range(4))
    def test_full_chain_random_configs(self, seed):
        rng = np.random.default_rng(100 + seed)
        w = int(rng.integers(2, 9))
        d = int(rng.integers(1, 12))
        c = int(rng.integers(1, 10))
        heads = int(rng.choice([1, 2, 4]))
        m = heads * int(rng.integers(1, 6))
        tcn_cfg = layers.TcnConfig(in_features=d, channels=c, layers=int(rng.integers(1, 4)))
        gru_cfg = layers.GruConfig(input_size=c, hidden_size=m)
        tf_cfg = layers.TransformerConfig(model_dim=m, heads=heads)
        params = tensorize(
            {
                **layers.init_tcn_params(tcn_cfg, rng),
                **layers.init_gru_params(gru_cfg, rng),
                **layers.init_transformer_params(tf_cfg, rng),
            },
            requires_grad=False,
        )
        x = nd.Tensor(rng.standard_normal((w, d)))
        h = layers.tcn_forward(x, tcn_cfg, params)
        assert h.shape == (w, c)
        h = layers.gru_forward(h, gru_cfg, params)
        assert h.shape == (w, m)
        h = layers.transformer_forward(h, tf_cfg, params)
        assert h.shape == (w, m)
        z = layers.mean_pool(h)
        assert z.shape == (m,)
