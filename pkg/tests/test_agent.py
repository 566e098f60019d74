import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from peginhole.agent import (CASES, CaseSpec, CurriculumConfig, CurriculumGateError, EpisodeLog, HyperParams,
                             Learner, ReplayPool, Signals, SnapshotBox, TabularQ, Transition, epsilon_at,
                             evaluate, make_rngs, run_curriculum, success_rate, train_phase,
                             write_episode_csv)
from peginhole.contact_sim import Simulator
from peginhole.controller import Controller
from peginhole.env import InProcessTransport, PegEnv, Phase, PhaseSpec, insertion_spec, search_spec
from peginhole.lstm_q import QNetwork

from .conftest import quiet_config
from .helpers import ChainEnv, ScriptedPolicy, chain_start, chain_value_iteration


def sample_many(pool, n, seed, window):
    """Draw ``n`` windows in minibatches no larger than the pool."""
    rng = np.random.default_rng(seed)
    parts = [pool.sample(len(pool), rng, window) for _ in range(-(-n // len(pool)))]
    return tuple(np.concatenate(p)[:n] for p in zip(*parts))


def tr(ep, step, r=0.0, terminal=False, dim=1, a=0):
    v = float(ep * 1000 + step)
    return Transition(np.full(dim, v), a, r, np.full(dim, v + 1), terminal, ep, step)


class TestEpsilon:
    def test_examples(self):
        assert epsilon_at(0) == 1.0
        assert epsilon_at(100) == pytest.approx(0.5)
        assert epsilon_at(180) == pytest.approx(0.1)
        assert epsilon_at(229) == 0.1
        assert epsilon_at(0, stage=2) == 0.5
        assert epsilon_at(80, stage=2) == pytest.approx(0.1)

    @given(st.integers(0, 10_000), st.sampled_from([1, 2]))
    def test_bounded_and_monotone(self, e, stage):
        hp = HyperParams()
        v = epsilon_at(e, stage, hp)
        assert hp.eps_floor <= v <= (hp.eps_init if stage == 1 else hp.eps_stage2)
        assert epsilon_at(e + 1, stage, hp) <= v

    def test_negative_episode(self):
        with pytest.raises(ValueError):
            epsilon_at(-1)

    def test_bad_hyperparameters(self):
        with pytest.raises(ValueError):
            HyperParams(eps_floor=0.6, eps_stage2=0.5)
        with pytest.raises(ValueError):
            HyperParams(gamma=1.0)
        with pytest.raises(ValueError):
            HyperParams(batch=100, replay_capacity=50)


class TestReplay:
    def test_fifo_eviction(self):
        pool = ReplayPool(20000, 1)
        for k in range(20001):
            pool.append(tr(0, k))
        assert len(pool) == 20000
        assert pool.get(0).step_index == 1
        assert pool.get(19999).step_index == 20000

    def test_reward_range_enforced(self):
        pool = ReplayPool(4, 1)
        with pytest.raises(ValueError):
            pool.append(tr(0, 0, r=1.0))
        pool.append(tr(0, 0, r=-1.0))
        assert len(pool) == 1

    def test_window_reconstruction(self):
        pool = ReplayPool(100, 1)
        for ep, n in ((0, 6), (1, 3), (2, 5)):
            for k in range(n):
                pool.append(tr(ep, k, terminal=k == n - 1))
        X, mask, _, _, T = sample_many(pool, 400, 0, 4)
        for b in range(400):
            last = X[b, -2, 0]
            ep, step = divmod(int(last), 1000)
            n_valid = min(step + 1, 4)
            np.testing.assert_array_equal(mask[b, :4], [0] * (4 - n_valid) + [1] * n_valid)
            want = [ep * 1000 + step - j for j in range(n_valid - 1, -1, -1)]
            np.testing.assert_array_equal(X[b, 4 - n_valid:4, 0], want)
            assert np.all(X[b, :4 - n_valid] == 0.0)
            assert X[b, 4, 0] == last + 1 and mask[b, 4] == 1

    def test_history_lost_to_eviction_is_masked(self):
        pool = ReplayPool(3, 1)
        for k in range(5):
            pool.append(tr(0, k))
        X, mask, *_ = sample_many(pool, 200, 1, 5)
        for b in range(200):
            step = int(X[b, -2, 0])
            assert mask[b, :5].sum() == min(step + 1, 3 - (4 - step))

    def test_window_cap_beyond_episode_changes_nothing(self):
        net = QNetwork(1, 3, 3, 2, input_scale=np.ones(1), rng=np.random.default_rng(0))
        pool = ReplayPool(50, 1)
        for ep in range(4):
            for k in range(4):
                pool.append(tr(ep, k, terminal=k == 3))
        Xa, ma, *_ = pool.sample(16, np.random.default_rng(5), window=4)
        Xb, mb, *_ = pool.sample(16, np.random.default_rng(5), window=12)
        qa = net.q_batch(Xa, ma)[:, -2]
        qb = net.q_batch(Xb, mb)[:, -2]
        np.testing.assert_allclose(qa, qb, atol=1e-14)

    def test_clear_and_small_pool(self):
        pool = ReplayPool(10, 1)
        pool.append(tr(0, 0))
        with pytest.raises(ValueError):
            pool.sample(2, np.random.default_rng(0))
        pool.clear()
        assert len(pool) == 0 and list(pool) == []


class RandomWalk:
    """Never-ending environment that records the chosen actions."""

    n_actions = 4

    def __init__(self, length=10_000):
        self.length = length
        self.k = 0

    def step(self, a):
        from .helpers import _Res
        from peginhole.env import RewardRecord, TerminalKind
        self.k += 1
        done = self.k >= self.length
        rec = RewardRecord(0.0, TerminalKind.TIMEOUT) if done else None
        return _Res(np.array([0.0]), 0.0, done, rec)


def walk_start(env, rng):
    env.k = 0
    return np.array([0.0])


class TestActionLoop:
    def test_uniform_actions_at_full_exploration(self):
        hp = HyperParams(episodes_M=1, eps_floor=1.0, eps_stage2=1.0, batch=1)
        env = RandomWalk()
        pool = ReplayPool(20000, 1)
        train_phase(env, TabularQ(1, 4), hp, make_rngs(3), start=walk_start, pool=pool)
        counts = np.bincount([t.a for t in pool], minlength=4)
        assert counts.sum() == 10_000
        assert stats.chisquare(counts).pvalue > 0.001

    def test_greedy_is_deterministic(self):
        def run():
            hp = HyperParams(episodes_M=3, eps_init=0.0, eps_stage2=0.0, eps_floor=0.0, updates_per_step=0)
            env = PegEnv(InProcessTransport(), search_spec())
            net = QNetwork(rng=np.random.default_rng(1))
            net.theta[:] = np.random.default_rng(2).normal(0, 0.3, net.n_params)
            pool = ReplayPool(1000)
            train_phase(env, net, hp, make_rngs(4), pool=pool)
            return [t.a for t in pool], np.array([t.s for t in pool])
        a1, s1 = run()
        a2, s2 = run()
        assert a1 == a2 and s1.tobytes() == s2.tobytes()

    def test_no_updates_before_threshold(self):
        hp = HyperParams(episodes_M=10, e_threshold=10, batch=4, alpha=0.5)
        logs, learner = train_phase(ChainEnv(), TabularQ(5, 2), hp, make_rngs(0), start=chain_start)
        assert learner.updates == 0
        assert all(lg.updates == 0 for lg in logs)
        assert np.all(learner.qfun.theta == 0.0)

    def test_terminal_flags_and_steps(self):
        hp = HyperParams(episodes_M=20, batch=4)
        pool = ReplayPool(1000, 1)
        logs, _ = train_phase(ChainEnv(), TabularQ(5, 2), hp, make_rngs(1), start=chain_start, pool=pool)
        by_ep = {}
        for t in pool:
            by_ep.setdefault(t.episode_id, []).append(t)
        assert sorted(by_ep) == list(range(20))
        for ep, ts in by_ep.items():
            assert [t.step_index for t in ts] == list(range(len(ts)))
            assert [t.terminal for t in ts] == [False] * (len(ts) - 1) + [True]
            assert logs[ep].steps == len(ts)

    def test_signal_raised_when_done(self):
        hp = HyperParams(episodes_M=2, batch=1)
        sig = Signals()
        from peginhole.agent import run_action_thread
        run_action_thread(ChainEnv(), TabularQ(5, 2), SnapshotBox(np.zeros(10)), ReplayPool(100, 1), hp, sig,
                          make_rngs(0), start=chain_start)
        assert sig.done.is_set() and sig.episode == 2


class TestLearning:
    GAMMA = 0.9

    def test_chain_converges_to_value_iteration(self):
        hp = HyperParams(gamma=self.GAMMA, alpha=0.5, episodes_M=2000, e_threshold=0, batch=4,
                         eps_floor=1.0, eps_stage2=1.0, replay_capacity=20000)
        q = TabularQ(5, 2)
        logs, learner = train_phase(ChainEnv(), q, hp, make_rngs(7), start=chain_start)
        steps = sum(lg.steps for lg in logs)
        assert steps <= 50_000
        want = chain_value_iteration(self.GAMMA)
        err = np.abs(q.table[:4] - want[:4]).max()
        assert err < 1e-6, err

    def test_value_iteration_oracle(self):
        q = chain_value_iteration(0.9)
        assert q[3, 1] == 0.5
        assert q[2, 1] == pytest.approx(0.45)
        assert q[0, 0] == pytest.approx(-0.1 + 0.9 * 0.3645)

    def test_loss_moving_average_decreases(self):
        hp = HyperParams(gamma=0.9, alpha=0.2, episodes_M=300, e_threshold=0, batch=4)
        _, learner = train_phase(ChainEnv(), TabularQ(5, 2), hp, make_rngs(2), start=chain_start)
        loss = np.asarray(learner.losses)
        assert loss[-200:].mean() < 0.1 * loss[:200].mean()

    def test_target_copy_lags(self):
        hp = HyperParams(batch=2, target_sync=5)
        net = QNetwork(1, 2, 2, 2, input_scale=np.ones(1), rng=np.random.default_rng(0))
        pool = ReplayPool(50, 1)
        for k in range(5):
            pool.append(tr(0, k, r=0.5, terminal=k == 4))
        ln = Learner(net, pool, hp, np.random.default_rng(0))
        before = ln.target.theta.copy()
        for _ in range(4):
            ln.update()
        assert ln.target.theta.tobytes() == before.tobytes()
        ln.update()
        assert ln.target.theta.tobytes() == net.theta.tobytes()

    def test_snapshot_published(self):
        hp = HyperParams(batch=2, publish_every=3, alpha=0.5)
        q = TabularQ(5, 2)
        pool = ReplayPool(50, 1)
        for k in range(4):
            pool.append(Transition(np.array([float(k)]), 1, 0.5 if k == 3 else 0.0, np.array([k + 1.0]),
                                   k == 3, 0, k))
        ln = Learner(q, pool, hp, np.random.default_rng(0))
        for _ in range(2):
            ln.update()
        assert ln.box.version == 0 and np.all(ln.box.latest() == 0)
        ln.update()
        assert ln.box.version == 1 and ln.box.latest().tobytes() == q.theta.tobytes()

    def test_threaded_mode_completes(self):
        hp = HyperParams(episodes_M=40, e_threshold=2, batch=4, alpha=0.3)
        class SlowChain(ChainEnv):
            def step(self, a):
                time.sleep(0.002)      # leave the learning thread room to run
                return super().step(a)

        logs, learner = train_phase(SlowChain(), TabularQ(5, 2), hp, make_rngs(0), start=chain_start,
                                    threaded=True)
        assert len(logs) == 40 and learner.updates > 0


def small_hp(**kw):
    base = dict(episodes_M=3, e_threshold=0, batch=8, h1=4, h2=3, window_W=3, alpha=0.01)
    base.update(kw)
    return HyperParams(**base)


def quiet_transport():
    return InProcessTransport(Controller(Simulator(quiet_config())))


class TestLogs:
    def test_deterministic_csv_byte_identical(self, tmp_path):
        def run(path):
            env = PegEnv(InProcessTransport(), search_spec())
            rngs = make_rngs(11)
            net = QNetwork(7, 4, 3, 4, rng=rngs["init"])
            logs, _ = train_phase(env, net, small_hp(), rngs, stage_name="s1")
            write_episode_csv(path, logs)
            return path.read_bytes(), net.theta.tobytes()
        a = run(tmp_path / "a.csv")
        b = run(tmp_path / "b.csv")
        assert a == b
        assert a[0].decode().splitlines()[0] == ",".join(EpisodeLog.FIELDS)

    def test_success_rate(self):
        logs = [EpisodeLog(i, 5, 0.5, 0.1, "success" if i % 4 else "timeout") for i in range(8)]
        assert success_rate(logs, 4) == 0.75
        assert success_rate([], 4) == 0.0


class TestCurriculum:
    def cfg(self, **kw):
        return CurriculumConfig(hp=small_hp(episodes_M=2), stage1=search_spec(1.0, 3.0),
                                stage2=search_spec(3.0, 5.0), insertion=insertion_spec(k_max=20), seed=3, **kw)

    def test_gate_failure_keeps_partial_result(self):
        cfg = self.cfg()
        cfg.hp.gate_success = 1.0
        cfg.stage1 = PhaseSpec(Phase.SEARCH, k_max=5, d0_mm=5.0)
        with pytest.raises(CurriculumGateError) as ei:
            run_curriculum(cfg, InProcessTransport)
        part = ei.value.partial
        assert part.search_stage2 is None and len(part.logs) == 2

    def test_stages_run_in_order(self):
        res = run_curriculum(self.cfg(skip_gate=True), InProcessTransport)
        assert [lg.stage for lg in res.logs] == ["search_stage1"] * 2 + ["search_stage2"] * 2 + ["insertion"] * 2
        assert [lg.episode for lg in res.logs] == list(range(6))
        assert res.insertion.n_actions == 5 and res.search_stage2.n_actions == 4
        assert res.search_stage1.theta.tobytes() != res.search_stage2.theta.tobytes()

    def test_curriculum_is_deterministic(self):
        a = run_curriculum(self.cfg(skip_gate=True), InProcessTransport)
        b = run_curriculum(self.cfg(skip_gate=True), InProcessTransport)
        assert a.insertion.theta.tobytes() == b.insertion.theta.tobytes()


class TestEvaluate:
    def test_scripted_policies_on_both_cases(self):
        s, i = ScriptedPolicy(Phase.SEARCH), ScriptedPolicy(Phase.INSERTION)
        for case in CASES.values():
            rep = evaluate(s, i, case, n_trials=10, seed=1)
            assert rep.n_trials == 10 and rep.success_rate == 1.0
            summ = rep.summary()
            assert summ["total_time_s"] == pytest.approx(summ["search_time_s"] + summ["insertion_time_s"])
            assert summ["initial_position_error_mm"] == case.d0_mm

    def test_histograms_count_successes(self):
        rep = evaluate(ScriptedPolicy(Phase.SEARCH), ScriptedPolicy(Phase.INSERTION), CASES["A"], n_trials=6,
                       seed=2)
        for which, (edges, counts) in rep.histograms(0.2).items():
            assert counts.sum() == 6
            assert edges[0] == 0.0 and np.allclose(np.diff(edges), 0.2)

    def test_failed_search_skips_insertion(self):
        class Away:
            def q_values(self, window):
                px, py = np.asarray(window)[-1, 5:]
                q = np.zeros(4)
                q[(0 if px > 0 else 1) if abs(px) >= abs(py) else (2 if py > 0 else 3)] = 1.0
                return q
        rep = evaluate(Away(), ScriptedPolicy(Phase.INSERTION), CaseSpec("x", 5.0, 10.0, 0.0, 3.0), n_trials=2)
        assert rep.success == [False, False] and rep.insertion_steps == [0, 0]
        assert math.isnan(rep.summary()["total_time_s"])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(1, 6)), min_size=1, max_size=8))
def test_pool_windows_never_cross_episodes(episodes):
    pool = ReplayPool(64, 1)
    for ep, (_, n) in enumerate(episodes):
        for k in range(n):
            pool.append(tr(ep, k, terminal=k == n - 1))
    X, mask, *_ = sample_many(pool, 32, len(episodes), 4)
    for b in range(32):
        ep = int(X[b, -2, 0]) // 1000
        valid = X[b, :4][mask[b, :4] == 1, 0]
        assert np.all(valid // 1000 == ep)
        assert np.all(np.diff(valid) == 1)
