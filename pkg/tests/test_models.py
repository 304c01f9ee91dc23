import itertools

import numpy as np
import pytest

from conftest import make_dataset
from lightltv.exceptions import ConfigError, DataError
from lightltv.features import FeatureBatch, FeatureEncoder
from lightltv.models import MODEL_IMPLEMENTATIONS, TABLE_MODELS, build_model, get_model_class
from lightltv.models.base import input_block_forward
from lightltv.models.collab import user_pref
from lightltv.models.crossnet import cross_network
from lightltv.models.fm import fm_inputs, fm_score
from lightltv.models.mf import mf_score
from lightltv.models.ziln import ziln_expected_spend, ziln_head, ziln_loss, ziln_params
from lightltv.tensor import AdamState, ParamStore, grad_check, softplus
from lightltv.train import train_step

ALL_MODELS = list(MODEL_IMPLEMENTATIONS)
N_CONFIGS = 20


def _targets(model, ds, rows, rng):
    if model.uses_raw_targets:
        return ds.spends[rows]
    return rng.normal(size=len(rows))


class TestRegistry:
    def test_every_model_builds(self, small_encoder):
        for model_type in ALL_MODELS:
            model = build_model(model_type, small_encoder)
            assert model.model_type == model_type
            assert model.params.num_params > 0

    def test_table_models_registered(self):
        assert set(TABLE_MODELS) <= set(MODEL_IMPLEMENTATIONS)

    def test_unknown_model(self, small_encoder):
        with pytest.raises(ConfigError, match="Available models"):
            build_model("wide_deep", small_encoder)

    def test_unknown_hyperparameter(self, small_encoder):
        with pytest.raises(ConfigError):
            build_model("mf", small_encoder, dropout=0.5)

    def test_pref_output_must_match_embed_dim(self, small_encoder):
        with pytest.raises(ConfigError):
            build_model("collab", small_encoder, embed_dim=8, pref_mlp_sizes=[8, 4])

    def test_head_must_end_in_one(self, small_encoder):
        with pytest.raises(ConfigError):
            build_model("crossnet", small_encoder, head_mlp_sizes=[16, 2])

    def test_same_seed_same_init(self, small_encoder):
        a = build_model("collab", small_encoder, seed=5)
        b = build_model("collab", small_encoder, seed=5)
        np.testing.assert_array_equal(a.params.flat(), b.params.flat())

    def test_class_lookup(self):
        assert get_model_class("ziln").uses_raw_targets


@pytest.mark.parametrize("model_type", ALL_MODELS)
def test_gradients_match_finite_differences(model_type, small_ds, small_encoder):
    worst = 0.0
    for config in range(N_CONFIGS):
        rng = np.random.default_rng(config)
        embed_dim = int(rng.choice([2, 4, 8]))
        hyperparams = {"embed_dim": embed_dim, "seed": config}
        if model_type == "collab":
            hyperparams["pref_mlp_sizes"] = [6, embed_dim]
        model = build_model(model_type, small_encoder, **hyperparams)
        rows = rng.choice(len(small_ds), size=int(rng.integers(4, 12)), replace=False)
        batch = small_encoder.encode(small_ds, rows)
        targets = _targets(model, small_ds, rows, rng)

        def closure():
            return model.loss_and_backward(batch, targets)

        def pattern():
            return model.activation_pattern(batch)

        # absolute tolerance for near-zero gradients
        err = grad_check(closure, model.params, eps=1e-5, max_coords=12, floor=1e-4, seed=config, pattern=pattern)
        worst = max(worst, err)
    assert worst < 1e-3


@pytest.mark.parametrize("model_type", ["crossnet", "collab", "ziln", "linear", "mlp"])
def test_user_id_free_models_ignore_user_ids(model_type, small_ds, small_encoder):
    model = build_model(model_type, small_encoder)
    batch = small_encoder.encode(small_ds, np.arange(50))
    relabeled = FeatureBatch(
        np.zeros_like(batch.users), batch.games, batch.history, batch.history_len, batch.dense
    )
    np.testing.assert_array_equal(model.score(batch), model.score(relabeled))


def test_mf_depends_on_user_ids(small_ds, small_encoder):
    model = build_model("mf", small_encoder)
    batch = small_encoder.encode(small_ds, np.arange(50))
    relabeled = FeatureBatch(
        (batch.users + 1) % small_encoder.n_users, batch.games, batch.history, batch.history_len, batch.dense
    )
    assert not np.array_equal(model.score(batch), model.score(relabeled))


def test_unknown_user_maps_to_reserved_row(small_ds):
    encoder = FeatureEncoder.from_dataset(small_ds.take(np.flatnonzero(small_ds.users < 100)))
    users = encoder.encode_users(np.array([0, 99, 250]))
    assert users[-1] == encoder.unknown_user
    assert users[0] != encoder.unknown_user


class TestEncoderCatalogs:
    def _encoder(self):
        return FeatureEncoder(paid_catalog_size=5, download_catalog_size=20)

    def test_game_outside_paid_catalog(self):
        ds = make_dataset([(1, 2, 1, 0.0), (1, 7, 1, 3.0)], {1: ([3, 4], 0.0, 0)})
        with pytest.raises(DataError) as exc:
            self._encoder().encode(ds)
        assert exc.value.row == 2
        assert exc.value.column == "game"
        assert "7" in str(exc.value)

    def test_history_outside_download_catalog(self):
        ds = make_dataset([(1, 2, 1, 0.0), (2, 3, 1, 0.0)], {1: ([3], 0.0, 0), 2: ([4, 30], 0.0, 0)})
        with pytest.raises(DataError) as exc:
            self._encoder().encode(ds, np.array([1]))
        assert exc.value.row == 2
        assert exc.value.column == "history"
        assert exc.value.exit_code == 3


@pytest.mark.parametrize("model_type", ["crossnet", "collab", "ziln", "mlp"])
def test_pad_row_stays_zero_through_training(model_type, small_ds, small_encoder):
    model = build_model(model_type, small_encoder)
    rows = np.arange(200)
    batch = small_encoder.encode(small_ds, rows)
    targets = small_ds.spends[rows] if model.uses_raw_targets else np.ones(len(rows))
    state = AdamState(lr=1e-2)
    for _ in range(3):
        train_step(model, batch, targets, state)
    np.testing.assert_array_equal(model.params["hist_emb"].values[small_encoder.pad_id], 0.0)


def test_fm_matches_brute_force(small_ds, small_encoder):
    model = build_model("fm", small_encoder, embed_dim=3)
    rng = np.random.default_rng(0)
    model.params["w"].values[:] = rng.normal(size=model.params["w"].shape)
    model.params["w0"].values[:] = 0.3
    batch = small_encoder.encode(small_ds, np.arange(5))
    idx, val = fm_inputs(batch, model.layout)
    w0, w, V = (model.params[n].values for n in ("w0", "w", "V"))
    out, _ = fm_score(idx, val, w0, w, V)
    for r in range(5):
        expected = w0[0] + sum(w[i] * x for i, x in zip(idx[r], val[r]))
        for a, b in itertools.combinations(range(idx.shape[1]), 2):
            expected += V[idx[r, a]] @ V[idx[r, b]] * val[r, a] * val[r, b]
        assert out[r] == pytest.approx(expected, rel=1e-10, abs=1e-12)


class TestZILN:
    def test_expected_spend(self):
        logits = np.array([[0.0, 1.0, 0.5]])
        sigma = softplus(0.5)
        np.testing.assert_allclose(ziln_expected_spend(logits), [0.5 * np.exp(1.0 + sigma**2 / 2)])

    def test_zero_row_loss(self):
        logits = np.array([[1.5, 0.0, 0.0]])
        loss, _ = ziln_loss(logits, np.array([0.0]))
        assert loss == pytest.approx(softplus(1.5))

    def test_positive_row_loss(self):
        logits = np.array([[0.2, 1.0, 0.3]])
        sigma = softplus(0.3)
        y = 5.0
        expected = (
            softplus(-0.2)
            + np.log(y)
            + np.log(sigma)
            + 0.5 * np.log(2 * np.pi)
            + (np.log(y) - 1.0) ** 2 / (2 * sigma**2)
        )
        loss, _ = ziln_loss(logits, np.array([y]))
        assert loss == pytest.approx(expected)

    def test_large_mu_is_finite(self):
        assert np.isfinite(ziln_expected_spend(np.array([[5.0, 1e4, 3.0]]))).all()

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            ziln_loss(np.zeros((0, 3)), np.zeros(0))


def test_hyperparams_round_trip(small_encoder):
    model = build_model("collab", small_encoder, embed_dim=4, pref_mlp_sizes=[6, 4], seed=9)
    again = build_model("collab", small_encoder, **model.hyperparams())
    np.testing.assert_array_equal(model.params.flat(), again.params.flat())


def test_ziln_head_matches_model_output(small_ds, small_encoder):
    model = build_model("ziln", small_encoder)
    batch = small_encoder.encode(small_ds, np.arange(20))
    logits, _ = model.forward(batch)
    x0, _ = input_block_forward(model.params, batch)
    pay_prob, mu, sigma = ziln_head(x0, model.params, len(model.head_mlp_sizes))
    expected = ziln_params(logits)
    np.testing.assert_allclose(pay_prob, expected[0])
    np.testing.assert_allclose(mu, expected[1])
    np.testing.assert_allclose(sigma, expected[2])
    assert ((pay_prob > 0) & (pay_prob < 1)).all()
    assert (sigma > 0).all()


def _mf_params(n_users=3, n_games=4, k=3):
    params = ParamStore()
    params.add("global_bias", np.array([0.5]))
    params.add("user_bias", np.zeros(n_users))
    params.add("game_bias", np.arange(n_games, dtype=float))
    params.add("user_emb", np.zeros((n_users, k)))
    params.add("game_emb", np.zeros((n_games, k)))
    return params


class TestMF:
    def test_cold_user_scores_biases_only(self):
        params = _mf_params()
        params["game_emb"].values[:] = np.random.default_rng(0).normal(size=(4, 3))
        y, _ = mf_score(np.array([2, 2, 2]), np.array([0, 1, 3]), params)
        np.testing.assert_allclose(y, [0.5, 1.5, 3.5])

    def test_unit_basis_embeddings(self):
        params = _mf_params()
        params["global_bias"].values[:] = 0.0
        params["game_bias"].values[:] = 0.0
        params["user_emb"].values[0] = [1.0, 0.0, 0.0]
        params["game_emb"].values[0] = [1.0, 0.0, 0.0]
        params["game_emb"].values[1] = [0.0, 1.0, 0.0]
        y, _ = mf_score(np.array([0, 0]), np.array([0, 1]), params)
        np.testing.assert_allclose(y, [1.0, 0.0])


class TestCollab:
    def test_all_pad_history_gives_bias_only_preference(self, small_encoder):
        model = build_model("collab", small_encoder, embed_dim=8, pref_mlp_sizes=[8, 16, 32, 8])
        history = np.full((5, small_encoder.history_len), small_encoder.pad_id)
        v_u, _ = user_pref(history, model.params, 4)
        assert v_u.shape == (5, 8)
        # fresh biases are zero and pad rows embed to zero
        np.testing.assert_array_equal(v_u, 0.0)

    def test_preference_has_embed_dim_entries(self, small_ds, small_encoder):
        model = build_model("collab", small_encoder, embed_dim=8)
        batch = small_encoder.encode(small_ds, np.arange(7))
        v_u, _ = user_pref(batch.history, model.params, len(model.pref_mlp_sizes))
        assert v_u.shape == (7, 8)

    def test_unit_preference_passes_game_embedding(self, small_ds, small_encoder):
        k = 4
        model = build_model(
            "collab", small_encoder, embed_dim=k, pref_mlp_sizes=[6, k], cross_layers=0, head_mlp_sizes=[1]
        )
        p = model.params
        p["pref_W1"].values[:] = 0.0
        p["pref_b1"].values[:] = 1.0
        p["head_W0"].values[:] = np.random.default_rng(1).normal(size=p["head_W0"].shape)
        p["head_b0"].values[:] = 0.25
        batch = small_encoder.encode(small_ds, np.arange(12))
        x0, _ = input_block_forward(p, batch)
        W = p["head_W0"].values[0]
        expected = p["game_emb"].values[batch.games] @ W[:k] + x0 @ W[k:] + 0.25
        np.testing.assert_allclose(model.score(batch), expected, rtol=1e-10)


def test_cross_network_without_layers_is_identity():
    x0 = np.random.default_rng(2).normal(size=(3, 5))
    out, caches = cross_network(x0, ParamStore(), 0)
    np.testing.assert_array_equal(out, x0)
    assert caches == []
