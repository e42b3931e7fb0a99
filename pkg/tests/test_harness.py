import os

import numpy as np
import pytest

from rtblab import checkpoint as ckpt
from rtblab.agents import ActionGrid, QNetwork, q_forward
from rtblab.cli import main as cli_main
from rtblab.config import cfg_floats, cfg_int, config_lines, effective_config
from rtblab.data import BidRequest, PackedRequests
from rtblab.errors import ConfigError, DataError
from rtblab.evaluate import (
    ResultRow,
    ResultTable,
    budget_sweep,
    evaluate_policy,
    format_pm,
    read_report_tsv,
    write_report,
)
from rtblab.market_state import EmpiricalSampler, UniformSampler, WganConfig, build_generator
from rtblab.mmd import mmd_benchmark, mmd_estimate
from rtblab.rng import stream
from rtblab.synth import SynthSpec, generate_synthetic_market, synth_feature_dict


def onehots(cats, width):
    return [BidRequest(np.array([c]), width) for c in cats]


class TestMmdEstimate:
    def test_identical_sets_zero(self):
        reqs = onehots([0, 1, 2, 0, 1], 4)
        assert mmd_estimate(reqs, list(reqs)) == pytest.approx(0.0, abs=1e-12)

    def test_two_point_closed_form(self):
        # n copies of u vs n copies of v at squared distance 2 (two one-hots)
        n = 16
        xs = onehots([0] * n, 3)
        ys = onehots([1] * n, 3)
        want = np.sqrt(n) * np.sqrt(2.0 - 2.0 * np.exp(-2.0 / 2.0))
        assert mmd_estimate(xs, ys) == pytest.approx(want, abs=1e-12)

    def test_naive_double_loop_oracle(self):
        rng = stream(130, "mmd")
        n, width = 200, 9
        fdict = synth_feature_dict((3, 4))
        xs = [BidRequest(np.array([rng.integers(0, 3), 4 + rng.integers(0, 4)]),
                         fdict.width) for _ in range(n)]
        ys = [BidRequest(np.array([rng.integers(0, 3), 4 + rng.integers(0, 4)]),
                         fdict.width) for _ in range(n)]
        sigma = 1.0
        xd = PackedRequests(xs).dense()
        yd = PackedRequests(ys).dense()

        def k(u, v):
            return np.exp(-np.sum((u - v) ** 2) / (2 * sigma * sigma))

        kxx = np.mean([[k(a, b) for b in xd] for a in xd])
        kyy = np.mean([[k(a, b) for b in yd] for a in yd])
        kxy = np.mean([[k(a, b) for b in yd] for a in xd])
        want = np.sqrt(n) * np.sqrt(max(kxx + kyy - 2 * kxy, 0.0))
        assert abs(mmd_estimate(xs, ys, sigma) - want) <= 1e-10

    def test_symmetry_and_nonnegativity(self):
        rng = stream(131, "mmd")
        xs = onehots(rng.integers(0, 3, size=20), 5)
        ys = onehots(rng.integers(2, 5, size=20), 5)
        assert mmd_estimate(xs, ys) == pytest.approx(mmd_estimate(ys, xs), abs=1e-12)
        assert mmd_estimate(xs, ys) >= 0.0

    def test_tiny_sets_raise(self):
        with pytest.raises(ConfigError):
            mmd_estimate(onehots([0], 2), onehots([1], 2))


class TestMmdBenchmark:
    def corpus(self):
        spec = SynthSpec(
            field_dims=(3, 4),
            mixture_weights=(0.5, 0.5),
            mixture_probs=(
                ((0.94, 0.04, 0.02), (0.9, 0.034, 0.033, 0.033)),
                ((0.02, 0.04, 0.94), (0.034, 0.033, 0.033, 0.9)),
            ),
            price_mu=(((0.0,) * 3, (0.0,) * 4), 10.0),
            price_logsig=(((0.0,) * 3, (0.0,) * 4), 0.0),
            logging_bid=(20.0, 20.0),
        )
        return generate_synthetic_market(spec, 3000, stream(132, "mkt"))

    def test_uniform_sampler_is_far(self):
        market = self.corpus()
        reqs = market.samples.requests
        samplers = {
            "test": EmpiricalSampler(reqs, stream(133, "t")),
            "uniform": UniformSampler(market.fdict, stream(133, "u")),
        }
        rows = mmd_benchmark(reqs, samplers, n=200, repeats=20,
                             rng=stream(133, "ref"))
        assert rows["test"][0] > 0.0  # finite-sample bias is positive
        assert rows["uniform"][0] >= 5.0 * rows["test"][0]

    def test_huge_sigma_flattens_kernel(self):
        market = self.corpus()
        reqs = market.samples.requests
        samplers = {"uniform": UniformSampler(market.fdict, stream(134, "u"))}
        rows = mmd_benchmark(reqs, samplers, n=50, repeats=5, sigma=1e6,
                             rng=stream(134, "ref"))
        assert rows["uniform"][0] == pytest.approx(0.0, abs=1e-3)


class TestCheckpointContainer:
    def test_save_load_save_byte_identical(self, tmp_path):
        rng = stream(135, "ck")
        arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=7)}
        p1, p2 = tmp_path / "c1.ckpt", tmp_path / "c2.ckpt"
        ckpt.save_checkpoint(p1, {"type": "test", "note": "x"}, arrays)
        manifest, loaded = ckpt.load_checkpoint(p1)
        assert manifest["type"] == "test"
        for k in arrays:
            assert np.array_equal(arrays[k], loaded[k])
        ckpt.save_checkpoint(p2, manifest, loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_file_fails_hash(self, tmp_path):
        p = tmp_path / "c.ckpt"
        ckpt.save_checkpoint(p, {"type": "test"}, {"a": np.arange(10.0)})
        raw = p.read_bytes()
        p.write_bytes(raw[:-8])
        with pytest.raises(DataError):
            ckpt.load_checkpoint(p)

    def test_unknown_version_rejected(self, tmp_path):
        p = tmp_path / "c.ckpt"
        p.write_bytes(b"rtbckpt 99\n{}\n")
        with pytest.raises(DataError):
            ckpt.load_checkpoint(p)

    def test_qnet_agent_replay_oracle(self, tmp_path):
        # a fresh process (simulated by reload) reproduces q outputs exactly
        rng = stream(136, "ck")
        qnet = QNetwork.build(6, rng, n_actions=5, shared=8, branch=4)
        grid = ActionGrid.from_max_price(10.0, k=5)
        path = tmp_path / "agent.ckpt"
        ckpt.save_qnet_agent(path, "exddqn", qnet, grid.values, "train", {"seed": 1})
        agent, manifest = ckpt.load_agent(path)
        assert manifest["agent_type"] == "exddqn"
        packed = PackedRequests(onehots(rng.integers(0, 6, size=100), 6))
        b = rng.random(100)
        t = rng.random(100)
        q0 = q_forward(qnet, packed, b, t)
        q1 = q_forward(agent.qnet, packed, b, t)
        assert np.array_equal(q0, q1)

    def test_market_state_round_trip(self, tmp_path):
        fdict = synth_feature_dict((2, 2))
        cfg = WganConfig(z_dim=4, gen_hidden=(6,), critic_hidden=(6,))
        gen = build_generator(fdict, cfg, stream(137, "g"))
        from rtblab.market_state import build_critic

        critic = build_critic(fdict.width, cfg, stream(137, "c"))
        path = tmp_path / "m.ckpt"
        ckpt.save_market_state(path, gen, critic, "test", "hash", {"wgan_tau": 0.667}, 42)
        gen2, critic2, manifest = ckpt.load_market_state(path)
        assert manifest["iterations"] == 42
        assert gen2.slices == gen.slices
        for a, b in zip(gen.net.arrays(), gen2.net.arrays()):
            assert np.array_equal(a, b)
        for a, b in zip(critic.arrays(), critic2.arrays()):
            assert np.array_equal(a, b)


class TestReports:
    def test_single_row(self, tmp_path):
        table = ResultTable(rows=[ResultRow("linbid", 1.0, 40.084, 0.10, 207.0, 10)])
        path = tmp_path / "r.tsv"
        write_report(table, path, "tsv")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("agent\t")
        assert len(lines) == 2

    def test_tsv_round_trip(self, tmp_path):
        table = ResultTable(rows=[
            ResultRow("a", 0.25, 12.345, 0.678, 100.0, 10),
            ResultRow("b", 4.0, 99.999, 1.234, 2070.0, 10),
        ])
        path = tmp_path / "r.tsv"
        write_report(table, path, "tsv")
        rows = read_report_tsv(path)
        for got, want in zip(rows, table.rows):
            assert got.agent == want.agent
            assert got.alpha == want.alpha
            assert got.reward_pct == pytest.approx(want.reward_pct, abs=0.005)
            assert got.std_pct == pytest.approx(want.std_pct, abs=0.005)

    def test_paper_style_pm_formatting(self):
        assert format_pm(40.084, 0.10) == "40.08 ± 0.1"
        assert format_pm(12.0, 0.15) == "12.00 ± 0.15"

    def test_text_format_and_config_echo(self, tmp_path):
        table = ResultTable(rows=[ResultRow("rlb", 1.0, 20.0, 0.5, 10.0, 3)],
                            config_echo=["seed = 1"])
        path = tmp_path / "r.txt"
        write_report(table, path, "text")
        text = path.read_text()
        assert "±" in text and "# seed = 1" in text


class TestConfig:
    def test_profiles_and_overrides(self, tmp_path):
        cfg_file = tmp_path / "c.txt"
        cfg_file.write_text("t0 = 500\n# comment\nrepeats = 3\n")
        cfg = effective_config("desk", cfg_file, ["seed=9"])
        assert cfg_int(cfg, "t0") == 500
        assert cfg_int(cfg, "repeats") == 3
        assert cfg_int(cfg, "seed") == 9
        assert cfg["profile"] == "desk"

    def test_paper_profile_scale(self):
        cfg = effective_config("paper")
        assert cfg_int(cfg, "t0") == 100_000
        assert cfg_int(cfg, "ddqn_total_steps") == 5_000_000
        assert cfg_floats(cfg, "alphas") == (0.25, 0.5, 1.0, 2.0, 4.0)

    def test_unknown_profile_raises(self):
        with pytest.raises(ConfigError):
            effective_config("galactic")

    def test_config_lines_sorted(self):
        lines = config_lines({"b": "2", "a": "1"})
        assert lines == ["a = 1", "b = 2"]


SYNTH_SPEC = """
fields = 3,4
mixture_weights = 0.5,0.5
comp0_f0 = 0.8,0.15,0.05
comp0_f1 = 0.7,0.1,0.1,0.1
comp1_f0 = 0.05,0.15,0.8
comp1_f1 = 0.1,0.1,0.1,0.7
price_mu_f0 = 15,0,-10
price_mu_intercept = 60
price_logsig_intercept = 2.7
click_f0 = 0.5,0,-0.5
click_intercept = -2.5
logging_bid = 40,110
n = 4000
days = 5
seed = 3
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    spec = root / "spec.txt"
    spec.write_text(SYNTH_SPEC)
    assert cli_main(["synth", str(spec), "--out", str(root / "raw")]) == 0
    assert cli_main([
        "ingest", str(root / "raw" / "log.tsv"),
        "--schema", str(root / "raw" / "schema.txt"),
        "--out", str(root / "data"),
    ]) == 0
    return root


class TestCliPipeline:
    def quick_sets(self):
        return ["--set", "t0=50", "--set", "repeats=3",
                "--set", "fit_epochs=40", "--set", "rlb_horizon=25",
                "--set", "wgan_iters=120", "--set", "wgan_batch=64",
                "--set", "wgan_z_dim=8", "--set", "wgan_gen_hidden=16",
                "--set", "wgan_critic_hidden=16", "--set", "wgan_lr=1e-3",
                "--set", "fdqi_outer=2", "--set", "linbid_episodes=2",
                "--set", "alphas=0.5,1,2"]

    def test_full_pipeline(self, workdir):
        d = str(workdir / "data")
        q = self.quick_sets()
        for split in ("train", "test"):
            assert cli_main(["train-market", d, "--split", split,
                             "--out", str(workdir / f"market_{split}.ckpt")] + q) == 0
            assert cli_main(["train-price", d, "--split", split,
                             "--out", str(workdir / f"price_{split}.ckpt")] + q) == 0
            assert cli_main(["train-click", d, "--split", split,
                             "--out", str(workdir / f"click_{split}.ckpt")] + q) == 0

        train_models = ["--data", d, "--market", str(workdir / "market_train.ckpt"),
                        "--price", str(workdir / "price_train.ckpt")]
        assert cli_main(["tune-linbid", *train_models,
                         "--out", str(workdir / "linbid.ckpt")] + q) == 0
        assert cli_main(["solve-rlb", "--data", d,
                         "--out", str(workdir / "rlb.ckpt")] + q) == 0
        assert cli_main(["train-agent", *train_models, "--agent", "fdqi",
                         "--out", str(workdir / "fdqi.ckpt")] + q) == 0

        report = workdir / "report.tsv"
        assert cli_main([
            "evaluate", "--data", d,
            "--market", str(workdir / "market_test.ckpt"),
            "--price", str(workdir / "price_test.ckpt"),
            "--agents", str(workdir / "linbid.ckpt"), str(workdir / "rlb.ckpt"),
            str(workdir / "fdqi.ckpt"),
            "--out", str(report),
        ] + q) == 0
        rows = read_report_tsv(report)
        assert len(rows) == 9  # 3 agents x 3 alphas
        assert all(0.0 <= r.reward_pct <= 100.0 for r in rows)

        assert cli_main(["mmd", "--data", d,
                         "--model", str(workdir / "market_test.ckpt"),
                         "--set", "mmd_n=60", "--set", "mmd_repeats=5"]) == 0

    def test_train_env_checkpoints_rejected_for_test_eval(self, workdir):
        d = str(workdir / "data")
        code = cli_main([
            "evaluate", "--data", d,
            "--market", str(workdir / "market_train.ckpt"),
            "--price", str(workdir / "price_test.ckpt"),
            "--agents", str(workdir / "linbid.ckpt"),
            "--out", str(workdir / "bad.tsv"),
        ] + self.quick_sets())
        assert code == 2

    def test_missing_file_exit_code(self, tmp_path):
        assert cli_main(["stats", str(tmp_path / "nope")]) == 3

    def test_stats_command(self, workdir):
        assert cli_main(["stats", str(workdir / "data")]) == 0


class TestEvaluatePolicy:
    def factory(self, seed=140):
        from rtblab.env import EnvMeta, SimEnv
        from rtblab.market_action import PriceModel

        reqs = onehots([0], 1)
        price = PriceModel(np.array([5.0]), 0.0, np.array([0.0]), -20.0)
        meta = EnvMeta(split="test", cpm_ref=5000.0, t0_ref=20)

        def make(label):
            return SimEnv(EmpiricalSampler(reqs, stream(seed, label, "x")),
                          price, None, "impression", meta, stream(seed, label, "m"))

        return make

    def test_zero_bidder_scores_zero(self):
        from rtblab.agents import ConstantBidAgent

        res = evaluate_policy(self.factory(), ConstantBidAgent(0.0), 100.0, 20, 5)
        assert res.mean == 0.0 and res.std == 0.0

    def test_rich_max_bidder_wins_everything(self):
        from rtblab.agents import ConstantBidAgent

        res = evaluate_policy(self.factory(), ConstantBidAgent(50.0), 1e9, 20, 4)
        assert res.mean == 20.0

    def test_fixed_seed_identical_totals(self):
        from rtblab.agents import ConstantBidAgent

        a = evaluate_policy(self.factory(), ConstantBidAgent(6.0), 30.0, 20, 6)
        b = evaluate_policy(self.factory(), ConstantBidAgent(6.0), 30.0, 20, 6)
        assert a.totals == b.totals

    def test_non_finite_bid_aborts_episode(self):
        class BadAgent:
            def bid(self, obs):
                return float("nan")

        res = evaluate_policy(self.factory(), BadAgent(), 10.0, 20, 3)
        assert res.aborted == 3 and res.totals == []

    def test_budget_sweep_reward_pct_monotone(self):
        from rtblab.agents import ConstantBidAgent

        table = budget_sweep({"const": ConstantBidAgent(6.0)}, self.factory(),
                             cpm_te=5000.0, t0=20, alphas=(0.25, 0.5, 1, 2, 4),
                             repeats=4)
        pcts = [r.reward_pct for r in table.rows]
        assert all(b >= a - 1e-9 for a, b in zip(pcts, pcts[1:]))
        assert table.rows[2].alpha == 1.0
