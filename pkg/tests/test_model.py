"""ODE residuals, Gumbel-Softmax relaxation, losses, and training loop."""

import numpy as np
import pytest

from opinionlab import model as model_mod
from opinionlab.autodiff import Tensor
from opinionlab.data import OpinionDataset, Post, ProfileCorpus, chronological_split, SplitSpec
from opinionlab.model import (
    OdeParams,
    TrainConfig,
    TrainingDiverged,
    bcm_rhs,
    bcm_rhs_all,
    build_model,
    data_loss,
    degroot_rhs,
    degroot_rhs_all,
    fj_rhs,
    fj_rhs_all,
    gumbel_noise,
    gumbel_softmax,
    gumbel_softmax_sample,
    load_model,
    predict,
    save_model,
    sbcm_rhs,
    sbcm_rhs_all,
    total_loss,
    train,
)


def tiny_dataset(num_users=4, num_steps=6, num_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    posts = tuple(
        Post(u, float(t), int(rng.integers(0, num_classes)))
        for t in range(num_steps) for u in range(num_users)
    )
    return OpinionDataset(posts, num_users, num_classes, float(num_steps))


def tiny_profiles(num_users=4):
    return ProfileCorpus({u: f"profile text number {u}" for u in range(num_users)})


class TestConfig:
    def test_defaults_valid(self):
        cfg = TrainConfig()
        assert cfg.variant == "sbcm"

    def test_round_trip(self):
        cfg = TrainConfig(variant="bcm", alpha=2.0, width=12)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError):
            TrainConfig(variant="magnetic")

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            TrainConfig(alpha=-0.5)
        with pytest.raises(ValueError):
            TrainConfig(beta=-1.0)

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(gumbel_tau=0.0)


class TestRhsContracts:
    """Scalar per-user forms against hand arithmetic, and the vectorized
    forms against the scalar ones."""

    def test_degroot_hand_value(self):
        # weights w_uv = m_u . q_v; u=0 with x=[0.5, -1, 2]:
        # w_01 = 1*0 + 0*1 = 0; w_02 = 1*1 + 0*0 = 1 -> rhs = 0*(-1) + 1*2 = 2
        m = np.array([[1.0, 0.0], [0.2, 0.3], [0.5, 0.5]])
        q = np.array([[9.0, 9.0], [0.0, 1.0], [1.0, 0.0]])
        x = np.array([0.5, -1.0, 2.0])
        assert degroot_rhs(x, m, q, 0) == pytest.approx(2.0)

    def test_fj_hand_value(self):
        # s=0.25, innate_0=0.6, x=[0.2, 0.4, -0.8]:
        # 0.25*(0.4-0.8) + 0.75*0.6 - 0.2 = -0.1 + 0.45 - 0.2 = 0.15
        x = np.array([0.2, 0.4, -0.8])
        assert fj_rhs(x, np.array([0.6, 0, 0]), np.array([0.25, 0, 0]), 0) == pytest.approx(0.15)

    def test_bcm_hand_value(self):
        # gamma -> huge turns the sigmoid into a hard threshold at delta
        x = np.array([0.0, 0.3, 0.9])
        val = bcm_rhs(x, delta=0.5, gamma=1e6, u=0)
        assert val == pytest.approx(0.3 + 0.0, abs=1e-6)  # only the 0.3 neighbor passes

    def test_sbcm_hand_value(self):
        x = np.array([0.1, 0.5, -0.3])
        z = np.array([0.0, 0.75, 0.25])
        expected = 0.75 * (0.5 - 0.1) + 0.25 * (-0.3 - 0.1)
        assert sbcm_rhs(x, z, 0) == pytest.approx(expected)

    def test_vectorized_degroot_matches_scalar(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, 7)
        m = rng.standard_normal((7, 3))
        q = rng.standard_normal((7, 3))
        all_vals = degroot_rhs_all(x, m, q)
        for u in range(7):
            assert all_vals[u] == pytest.approx(degroot_rhs(x, m, q, u))

    def test_vectorized_fj_matches_scalar(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, 6)
        innate = rng.uniform(-1, 1, 6)
        s = rng.uniform(0, 1, 6)
        all_vals = fj_rhs_all(x, innate, s)
        for u in range(6):
            assert all_vals[u] == pytest.approx(fj_rhs(x, innate, s, u))

    def test_vectorized_bcm_matches_scalar(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, 5)
        all_vals = bcm_rhs_all(x, 0.4, 8.0)
        for u in range(5):
            assert all_vals[u] == pytest.approx(bcm_rhs(x, 0.4, 8.0, u))

    def test_vectorized_sbcm_matches_scalar(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-1, 1, 5)
        z = rng.dirichlet(np.ones(5), size=5)
        all_vals = sbcm_rhs_all(x, z)
        for u in range(5):
            assert all_vals[u] == pytest.approx(sbcm_rhs(x, z[u], u))


class TestGumbelSoftmax:
    def test_samples_on_simplex(self):
        rng = np.random.default_rng(0)
        p = np.array([0.2, 0.3, 0.5])
        for _ in range(100):
            z = gumbel_softmax_sample(p, tau=0.5, rng=rng).z_tilde
            assert np.all(z >= 0)
            assert z.sum() == pytest.approx(1.0)

    def test_low_temperature_matches_gumbel_max_oracle(self):
        """At tau -> 0 the argmax of the relaxed sample must have the same
        distribution as argmax(log p + g) computed directly."""
        rng = np.random.default_rng(1)
        p = np.array([0.2, 0.3, 0.5])
        n = 20_000
        noise = gumbel_noise(rng, (n, 3))
        relaxed = gumbel_softmax(np.tile(p, (n, 1)), tau=0.1, noise=noise)
        oracle_pick = np.argmax(np.log(p) + noise, axis=1)
        np.testing.assert_array_equal(relaxed.argmax(axis=1), oracle_pick)
        freq = np.bincount(oracle_pick, minlength=3) / n
        assert np.abs(freq - p).max() < 0.02

    def test_differentiable_in_probabilities(self):
        p = Tensor(np.array([0.2, 0.3, 0.5]), requires_grad=True)
        noise = gumbel_noise(np.random.default_rng(2), (3,))
        z = gumbel_softmax(p, tau=0.5, noise=noise)
        (z * np.array([1.0, 2.0, 3.0])).sum().backward()
        assert p.grad is not None
        assert np.all(np.isfinite(p.grad))

    def test_zero_probability_floored(self):
        z = gumbel_softmax(np.array([0.0, 1.0]), tau=0.5,
                           noise=np.zeros(2))
        assert np.all(np.isfinite(z))
        assert z[1] > z[0]

    def test_batched_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(4), size=6)
        noise = gumbel_noise(rng, (6, 4))
        z = gumbel_softmax(p, tau=0.3, noise=noise)
        np.testing.assert_allclose(z.sum(axis=1), 1.0, atol=1e-12)


class TestOdeParams:
    def test_reparameterized_initial_values(self):
        cfg = TrainConfig(variant="bcm", bcm_delta=0.5, bcm_gamma=10.0)
        params = OdeParams("bcm", 4, cfg, np.random.default_rng(0))
        assert params.delta().item() == pytest.approx(0.5)
        assert params.gamma().item() == pytest.approx(10.0)

    def test_susceptibility_in_unit_interval(self):
        cfg = TrainConfig(variant="fj")
        params = OdeParams("fj", 5, cfg, np.random.default_rng(0))
        params.raw_s.data = np.array([-50.0, -1.0, 0.0, 1.0, 50.0])
        s = params.susceptibility().data
        assert np.all((s >= 0) & (s <= 1))
        assert s[2] == pytest.approx(0.5)

    def test_dict_round_trip(self):
        cfg = TrainConfig(variant="degroot", latent_dim=2)
        params = OdeParams("degroot", 3, cfg, np.random.default_rng(1))
        doc = params.to_dict()
        fresh = OdeParams("degroot", 3, cfg, np.random.default_rng(99))
        fresh.load_dict(doc)
        np.testing.assert_array_equal(fresh.m_factors.data, params.m_factors.data)
        np.testing.assert_array_equal(fresh.q_factors.data, params.q_factors.data)


class TestLosses:
    def setup_method(self):
        self.ds = tiny_dataset()
        self.profiles = tiny_profiles()

    def test_data_loss_matches_hand_cross_entropy(self):
        cfg = TrainConfig(variant="sbcm", num_layers=1, width=3, embed_dim=4, seed=0)
        m = build_model(self.ds, self.profiles, cfg)
        users, times, labels = self.ds.users(), self.ds.times(), self.ds.labels()
        loss = data_loss(m, users, times, labels, m.encode_users())
        probs = m.predict_proba(users, times)
        expected = -np.mean(np.log(probs[np.arange(len(labels)), labels]))
        assert loss.item() == pytest.approx(expected, rel=1e-10)

    def test_alpha_zero_reduces_to_data_loss(self):
        """With both loss weights at zero the composite loss is bit-identical
        to the plain cross-entropy term."""
        cfg = TrainConfig(variant="sbcm", alpha=0.0, beta=0.0, num_layers=1,
                          width=3, embed_dim=4, seed=0)
        m = build_model(self.ds, self.profiles, cfg)
        users, times, labels = self.ds.users(), self.ds.times(), self.ds.labels()
        prof = m.encode_users()
        composite, parts = total_loss(m, users, times, labels, np.array([1.0]))
        plain = data_loss(m, users, times, labels, prof)
        assert composite.item() == plain.item()
        assert parts["ode"] == 0.0
        assert parts["reg"] == 0.0

    def test_ode_term_increases_loss(self):
        cfg = TrainConfig(variant="fj", alpha=5.0, beta=0.0, num_layers=1,
                          width=3, embed_dim=4, seed=0)
        m = build_model(self.ds, self.profiles, cfg)
        users, times, labels = self.ds.users(), self.ds.times(), self.ds.labels()
        composite, parts = total_loss(m, users, times, labels, np.array([1.0, 3.0]))
        assert composite.item() == pytest.approx(parts["data"] + 5.0 * parts["ode"])
        assert parts["ode"] > 0

    def test_l1_term_only_for_factorized_variant(self):
        cfg = TrainConfig(variant="degroot", alpha=0.0, beta=1.0, num_layers=1,
                          width=3, embed_dim=4, seed=0)
        m = build_model(self.ds, self.profiles, cfg)
        users, times, labels = self.ds.users(), self.ds.times(), self.ds.labels()
        _, parts = total_loss(m, users, times, labels, np.array([1.0]))
        expected = np.abs(m.ode.m_factors.data).sum() + np.abs(m.ode.q_factors.data).sum()
        assert parts["reg"] == pytest.approx(expected)

    def test_sbcm_requires_noise(self):
        cfg = TrainConfig(variant="sbcm", alpha=1.0, num_layers=1, width=3,
                          embed_dim=4, seed=0)
        m = build_model(self.ds, self.profiles, cfg)
        users, times, labels = self.ds.users(), self.ds.times(), self.ds.labels()
        with pytest.raises(ValueError):
            total_loss(m, users, times, labels, np.array([1.0]), noise_per_point=None)

    def test_divergence_detected(self):
        cfg = TrainConfig(variant="fj", alpha=1.0, num_layers=1, width=3,
                          embed_dim=4, seed=0)
        m = build_model(self.ds, self.profiles, cfg)
        m.head_w.data = np.full_like(m.head_w.data, np.nan)
        users, times, labels = self.ds.users(), self.ds.times(), self.ds.labels()
        with pytest.raises(TrainingDiverged):
            total_loss(m, users, times, labels, np.array([1.0]))


class TestTraining:
    def test_loss_decreases_on_separable_problem(self):
        """Users with fixed opposite labels: the data loss must fall."""
        posts = tuple(
            Post(u, float(t), 0 if u < 2 else 2)
            for t in range(8) for u in range(4)
        )
        ds = OpinionDataset(posts, 4, 3, 8.0)
        splits = chronological_split(ds, SplitSpec(0.7, 0.3, 0.0))
        cfg = TrainConfig(variant="sbcm", alpha=0.5, beta=0.0, epochs=300,
                          learning_rate=0.01, num_layers=1, width=6, embed_dim=4,
                          batch_size=16, seed=0)
        m, history = train(splits, tiny_profiles(), cfg)
        assert history[-1].data_loss < 0.5 * history[0].data_loss
        preds = m.predict_proba(splits[0].users(), splits[0].times()).argmax(axis=1)
        assert (preds == splits[0].labels()).mean() > 0.9

    def test_history_structure(self):
        ds = tiny_dataset()
        splits = chronological_split(ds, SplitSpec(0.6, 0.4, 0.0))
        cfg = TrainConfig(epochs=3, num_layers=1, width=3, embed_dim=4, seed=0)
        _, history = train(splits, tiny_profiles(), cfg)
        assert [h.epoch for h in history] == [1, 2, 3]
        assert all(np.isfinite(h.total) for h in history)

    def test_deterministic_given_seed(self):
        ds = tiny_dataset()
        splits = chronological_split(ds, SplitSpec(0.6, 0.4, 0.0))
        cfg = TrainConfig(epochs=3, num_layers=1, width=3, embed_dim=4, seed=5)
        m1, h1 = train(splits, tiny_profiles(), cfg)
        m2, h2 = train(splits, tiny_profiles(), cfg)
        assert h1 == h2
        for p1, p2 in zip(m1.parameters(), m2.parameters()):
            np.testing.assert_array_equal(p1.data, p2.data)

    def test_freeze_ode_keeps_dynamics_parameters(self):
        ds = tiny_dataset()
        splits = chronological_split(ds, SplitSpec(0.6, 0.4, 0.0))
        cfg = TrainConfig(variant="degroot", epochs=3, num_layers=1, width=3,
                          embed_dim=4, seed=0, freeze_ode=True)
        m, _ = train(splits, tiny_profiles(), cfg)
        fresh = build_model(splits[0], tiny_profiles(), cfg)
        np.testing.assert_array_equal(m.ode.m_factors.data, fresh.ode.m_factors.data)


class TestPredictAndCheckpoint:
    def test_predict_returns_distribution(self):
        ds = tiny_dataset()
        cfg = TrainConfig(num_layers=1, width=3, embed_dim=4, seed=0)
        m = build_model(ds, tiny_profiles(), cfg)
        probs = predict(m, 2, 3.5)
        assert probs.shape == (3,)
        assert probs.sum() == pytest.approx(1.0)

    def test_predict_unknown_user(self):
        ds = tiny_dataset()
        m = build_model(ds, tiny_profiles(), TrainConfig(num_layers=1, width=3,
                                                         embed_dim=4, seed=0))
        with pytest.raises(ValueError):
            predict(m, 99, 1.0)

    def test_profile_override_changes_output(self):
        ds = tiny_dataset()
        m = build_model(ds, tiny_profiles(), TrainConfig(num_layers=1, width=3,
                                                         embed_dim=4, seed=0))
        base = predict(m, 0, 2.0)
        swapped = predict(m, 0, 2.0, profiles=ProfileCorpus({0: "completely different words"}))
        assert not np.allclose(base, swapped)

    def test_save_load_round_trip(self, tmp_path):
        ds = tiny_dataset()
        profiles = tiny_profiles()
        for variant in ("degroot", "fj", "bcm", "sbcm"):
            cfg = TrainConfig(variant=variant, num_layers=1, width=3, embed_dim=4, seed=0)
            m = build_model(ds, profiles, cfg)
            path = tmp_path / f"{variant}.json"
            save_model(m, path)
            loaded = load_model(path, profiles)
            users, times = ds.users(), ds.times()
            np.testing.assert_allclose(loaded.predict_proba(users, times),
                                       m.predict_proba(users, times), atol=1e-12)

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        ds = tiny_dataset()
        cfg = TrainConfig(num_layers=1, width=3, embed_dim=4, seed=0)
        m = build_model(ds, tiny_profiles(), cfg)
        save_model(m, tmp_path / "a.json")
        save_model(m, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_fj_innate_uses_first_train_posts(self):
        posts = (Post(0, 0.0, 0), Post(1, 0.0, 4), Post(0, 1.0, 2), Post(1, 1.0, 2))
        ds = OpinionDataset(posts, 2, 5, 2.0)
        m = build_model(ds, ProfileCorpus({}), TrainConfig(variant="fj", num_layers=1,
                                                           width=3, embed_dim=4, seed=0))
        np.testing.assert_allclose(m.ode.innate, [-0.8, 0.8])
