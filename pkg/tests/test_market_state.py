import numpy as np
import pytest

from rtblab.autodiff import DenseLayer, Mlp, mlp_forward
from rtblab.errors import ConfigError
from rtblab.market_state import (
    EmpiricalSampler,
    Generator,
    GeneratorSampler,
    UniformSampler,
    WganConfig,
    build_critic,
    build_generator,
    critic_loss,
    generator_forward,
    generator_loss,
    generator_sample,
    train_market_state_model,
)
from rtblab.data import BidRequest
from rtblab.optim import make_mlp
from rtblab.rng import gumbel, stream
from rtblab.synth import SynthSpec, generate_synthetic_market, synth_feature_dict

TOY_CFG = WganConfig(
    batch_size=128,
    lr=1e-3,
    z_dim=8,
    gen_hidden=(16,),
    critic_hidden=(16,),
    max_iters=50,
)


def toy_fdict():
    return synth_feature_dict((2, 3))


def linear_critic(v):
    v = np.asarray(v, dtype=np.float64)
    return Mlp([DenseLayer(v[:, None], np.zeros(1), "identity")])


def unit_rows(width, hot_sets):
    out = np.zeros((len(hot_sets), width))
    for i, hots in enumerate(hot_sets):
        out[i, list(hots)] = 1.0
    return out


class TestGeneratorSampling:
    def test_hard_mode_one_hot_per_field(self):
        fdict = toy_fdict()
        gen = build_generator(fdict, TOY_CFG, stream(50, "gen"))
        rng = stream(50, "draw")
        z = rng.standard_normal((40, gen.z_dim))
        noise = gumbel(rng, (40, fdict.width))
        x = generator_sample(gen, z, TOY_CFG.tau, noise, hard=True)
        for lo, hi in gen.slices:
            block = x[:, lo:hi]
            assert np.all(block.sum(axis=1) == 1.0)
            assert set(np.unique(block)) <= {0.0, 1.0}

    def test_soft_mode_simplex_blocks(self):
        fdict = toy_fdict()
        gen = build_generator(fdict, TOY_CFG, stream(51, "gen"))
        rng = stream(51, "draw")
        z = rng.standard_normal((25, gen.z_dim))
        noise = gumbel(rng, (25, fdict.width))
        x = generator_sample(gen, z, TOY_CFG.tau, noise, hard=False)
        for lo, hi in gen.slices:
            assert np.max(np.abs(x[:, lo:hi].sum(axis=1) - 1.0)) <= 1e-12
            assert np.all(x[:, lo:hi] >= 0.0)

    def test_fixed_seed_reproducible(self):
        fdict = toy_fdict()
        gen = build_generator(fdict, TOY_CFG, stream(52, "gen"))
        a = GeneratorSampler(gen, 0.667, stream(52, "s")).sample_indices(10)
        b = GeneratorSampler(gen, 0.667, stream(52, "s")).sample_indices(10)
        assert np.array_equal(a, b)

    def test_wrong_noise_dim_raises(self):
        fdict = toy_fdict()
        gen = build_generator(fdict, TOY_CFG, stream(53, "gen"))
        with pytest.raises(ConfigError):
            generator_forward(gen, np.zeros((2, gen.z_dim + 1)), 0.667,
                              np.zeros((2, fdict.width)))


class TestCriticLoss:
    def test_identical_batches_unit_norm_linear_critic(self):
        v = np.zeros(4)
        v[0], v[1] = 0.6, 0.8  # unit norm
        critic = linear_critic(v)
        batch = unit_rows(4, [{0}, {1}, {0, 1}])
        loss, grads, parts = critic_loss(critic, batch, batch, 10.0, stream(54, "gp"))
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert parts["penalty"] == pytest.approx(0.0, abs=1e-14)

    def test_lambda_zero_linear_closed_form(self):
        rng = stream(55, "cl")
        v = rng.normal(size=5)
        critic = linear_critic(v)
        real = rng.random((8, 5))
        fake = rng.random((6, 5))
        loss, _, _ = critic_loss(critic, real, fake, 0.0, rng)
        expected = float(v @ (fake.mean(axis=0) - real.mean(axis=0)))
        assert loss == pytest.approx(expected, abs=1e-12)

    def test_recomputation_oracle(self):
        # independent scalar recomputation from scores and penalty values
        rng = stream(56, "cl")
        critic = make_mlp([5, 7, 1], ["tanh", "identity"], rng)
        real = rng.random((9, 5))
        fake = rng.random((9, 5))
        lam = 10.0
        loss, _, parts = critic_loss(critic, real, fake, lam, stream(56, "gp"))
        s_real = mlp_forward(critic, real).mean()
        s_fake = mlp_forward(critic, fake).mean()
        recomputed = float(s_fake - s_real + lam * parts["penalty"])
        assert abs(loss - recomputed) <= 1e-10

    def test_critic_gradients_match_finite_differences(self):
        rng = stream(57, "cl-fd")
        critic = make_mlp([4, 5, 1], ["tanh", "identity"], rng)
        real = rng.random((6, 4))
        fake = rng.random((6, 4))
        gp_rng_key = 99

        def loss():
            v, _, _ = critic_loss(critic, real, fake, 10.0, stream(gp_rng_key, "gp"))
            return v

        _, grads, _ = critic_loss(critic, real, fake, 10.0, stream(gp_rng_key, "gp"))
        h = 1e-5
        for arr, g in zip(critic.arrays(), grads):
            flat, gflat = arr.ravel(), g.ravel()
            for i in range(0, flat.size, max(1, flat.size // 5)):
                orig = flat[i]
                flat[i] = orig + h
                fp = loss()
                flat[i] = orig - h
                fm = loss()
                flat[i] = orig
                fd = (fp - fm) / (2 * h)
                assert abs(gflat[i] - fd) / max(1.0, abs(fd)) < 1e-4


class TestGeneratorLoss:
    def test_constant_critic_zero_gradient(self):
        fdict = toy_fdict()
        gen = build_generator(fdict, TOY_CFG, stream(58, "gen"))
        critic = linear_critic(np.zeros(fdict.width))
        critic.layers[0].b[:] = 3.0
        rng = stream(58, "z")
        z = rng.standard_normal((16, gen.z_dim))
        noise = gumbel(rng, (16, fdict.width))
        loss, grads = generator_loss(gen, critic, z, 0.667, noise)
        assert loss == pytest.approx(-3.0, abs=1e-12)
        assert all(np.max(np.abs(g)) < 1e-15 for g in grads)

    def test_rewarded_feature_logit_pushed_up(self):
        fdict = toy_fdict()
        gen = build_generator(fdict, TOY_CFG, stream(59, "gen"))
        j = 1  # feature the critic pays for
        v = np.zeros(fdict.width)
        v[j] = 2.0
        critic = linear_critic(v)
        rng = stream(59, "z")
        z = rng.standard_normal((64, gen.z_dim))
        noise = gumbel(rng, (64, fdict.width))
        _, grads = generator_loss(gen, critic, z, 0.667, noise)
        head_bias_grad = grads[-1]
        assert head_bias_grad[j] < 0.0  # descent raises that logit

    def test_gradient_matches_finite_differences(self):
        fdict = toy_fdict()
        cfg = WganConfig(batch_size=4, z_dim=3, gen_hidden=(4,),
                         critic_hidden=(4,), activation="tanh")
        gen = build_generator(fdict, cfg, stream(60, "gen"))
        critic = build_critic(fdict.width, cfg, stream(60, "crit"))
        rng = stream(60, "z")
        z = rng.standard_normal((3, 3))
        noise = gumbel(rng, (3, fdict.width))

        def loss():
            v, _ = generator_loss(gen, critic, z, 0.667, noise)
            return v

        _, grads = generator_loss(gen, critic, z, 0.667, noise)
        h = 1e-6
        for arr, g in zip(gen.net.arrays(), grads):
            flat, gflat = arr.ravel(), g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = loss()
                flat[i] = orig - h
                fm = loss()
                flat[i] = orig
                fd = (fp - fm) / (2 * h)
                assert abs(gflat[i] - fd) / max(1.0, abs(fd)) < 1e-4

    def test_descent_on_frozen_linear_critic(self):
        # one plain-GD step with small lr strictly decreases the loss
        fdict = toy_fdict()
        gen = build_generator(fdict, TOY_CFG, stream(61, "gen"))
        rng = stream(61, "z")
        v = rng.normal(size=fdict.width)
        critic = linear_critic(v)
        z = rng.standard_normal((32, gen.z_dim))
        noise = gumbel(rng, (32, fdict.width))
        before, grads = generator_loss(gen, critic, z, 0.667, noise)
        for arr, g in zip(gen.net.arrays(), grads):
            arr -= 1e-3 * g
        after, _ = generator_loss(gen, critic, z, 0.667, noise)
        assert after < before


class TestTraining:
    def test_degenerate_single_atom_market(self):
        fdict = synth_feature_dict((1, 1))
        req = BidRequest(np.array([fdict.offset("f0"), fdict.offset("f1")]), fdict.width)
        data = [req] * 512
        cfg = WganConfig(batch_size=128, lr=1e-3, z_dim=8, gen_hidden=(16,),
                         critic_hidden=(16,), max_iters=600, stop_window=50)
        gen, critic, diag = train_market_state_model(
            data, data, fdict, cfg, stream(62, "train")
        )
        sampler = GeneratorSampler(gen, cfg.tau, stream(62, "draw"))
        idx = sampler.sample_indices(1000)
        hit = np.all(idx == req.indices, axis=1).mean()
        assert hit > 0.99

    def test_fixed_seed_bit_identical_training(self):
        market = generate_synthetic_market(
            SynthSpec(
                field_dims=(2, 3),
                mixture_weights=(1.0,),
                mixture_probs=(((0.7, 0.3), (0.5, 0.3, 0.2)),),
                price_mu=(((0.0, 0.0), (0.0, 0.0, 0.0)), 10.0),
                price_logsig=(((0.0, 0.0), (0.0, 0.0, 0.0)), 0.0),
                logging_bid=(20.0, 20.0),
            ),
            400,
            stream(63, "mkt"),
        )
        cfg = WganConfig(batch_size=64, lr=1e-3, z_dim=8, gen_hidden=(12,),
                         critic_hidden=(12,), max_iters=30)
        runs = []
        for _ in range(2):
            gen, critic, _ = train_market_state_model(
                market.samples.requests, market.samples.requests,
                market.fdict, cfg, stream(63, "train"),
            )
            runs.append((gen, critic))
        for a, b in zip(runs[0][0].net.arrays(), runs[1][0].net.arrays()):
            assert np.array_equal(a, b)
        for a, b in zip(runs[0][1].arrays(), runs[1][1].arrays()):
            assert np.array_equal(a, b)


class TestSamplers:
    def test_empirical_single_record(self):
        req = BidRequest(np.array([0, 2]), 4)
        sampler = EmpiricalSampler([req], stream(64, "emp"))
        assert all(sampler.sample() == req for _ in range(10))

    def test_empirical_frequencies(self):
        reqs = [BidRequest(np.array([i]), 3) for i in range(3)]
        corpus = [reqs[0]] * 6 + [reqs[1]] * 3 + [reqs[2]] * 1
        sampler = EmpiricalSampler(corpus, stream(65, "emp"))
        draws = np.array([sampler.sample().indices[0] for _ in range(100_000)])
        freqs = np.bincount(draws, minlength=3) / draws.size
        assert np.all(np.abs(freqs - [0.6, 0.3, 0.1]) < 0.01)

    def test_empirical_seed_determinism(self):
        reqs = [BidRequest(np.array([i]), 5) for i in range(5)]
        a = [EmpiricalSampler(reqs, stream(66, "e")).sample().indices[0] for _ in range(1)]
        b = [EmpiricalSampler(reqs, stream(66, "e")).sample().indices[0] for _ in range(1)]
        assert a == b

    def test_uniform_sampler_stays_in_blocks(self):
        fdict = toy_fdict()
        sampler = UniformSampler(fdict, stream(67, "u"))
        for _ in range(50):
            req = sampler.sample()
            assert len(req.indices) == len(fdict.fields)
            for (lo, hi), j in zip(sampler.slices, req.indices):
                assert lo <= j < hi
