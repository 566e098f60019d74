"""Replay pool, exploration schedule, action/learning loops, curriculum and evaluation."""
from __future__ import annotations

import csv
import logging
import math
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .contact_sim import ResetSpec
from .env import (STATE_DIM, PegEnv, PhaseSpec, TerminalKind, TransportError, insertion_spec,
                  sample_reset, search_spec)
from .lstm_q import Adam, QNetwork, greedy_action

log = logging.getLogger(__name__)


@dataclass
class HyperParams:
    gamma: float = 0.9
    alpha: float = 0.01
    eps_init: float = 1.0
    eps_stage2: float = 0.5
    eps_decay: float = 0.005
    eps_floor: float = 0.1
    episodes_M: int = 230
    e_threshold: int = 10
    batch: int = 64
    window_W: int = 8
    replay_capacity: int = 20000
    clip_norm: float = 1.0
    publish_every: int = 10
    updates_per_step: int = 1
    optimizer: str = "sgd"               # "sgd" or "adam"
    target_sync: int = 0                 # updates between frozen bootstrap copies; 0 = bootstrap from live net
    h1: int = 20
    h2: int = 15
    gate_success: float = 0.6
    gate_window: int = 50

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        for name in ("eps_init", "eps_stage2", "eps_floor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.eps_floor > self.eps_init or self.eps_floor > self.eps_stage2:
            raise ValueError("eps_floor must not exceed the initial exploration rates")
        if self.eps_decay < 0:
            raise ValueError("eps_decay must be >= 0")
        for name in ("episodes_M", "batch", "window_W", "replay_capacity", "publish_every", "h1", "h2",
                     "gate_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.e_threshold < 0 or self.updates_per_step < 0 or self.target_sync < 0:
            raise ValueError("e_threshold, updates_per_step and target_sync must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.batch > self.replay_capacity:
            raise ValueError("batch must not exceed replay_capacity")


def epsilon_at(episode: int, stage: int = 1, hp: HyperParams | None = None) -> float:
    """Exploration rate for a 0-based episode index within a curriculum stage."""
    hp = hp or HyperParams()
    if episode < 0:
        raise ValueError("episode must be >= 0")
    start = hp.eps_init if stage == 1 else hp.eps_stage2
    return max(start - hp.eps_decay * episode, hp.eps_floor)


# -- replay -----------------------------------------------------------------

@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool
    episode_id: int
    step_index: int


class ReplayPool:
    """Fixed-capacity FIFO of transitions stored in ring arrays.

    Appends and reads take a lock, so a reader never sees half a transition.
    Windows of preceding states are rebuilt from the same episode on demand.
    """

    def __init__(self, capacity: int = 20000, state_dim: int = STATE_DIM):
        self.capacity = int(capacity)
        self.S = np.zeros((capacity, state_dim))
        self.S2 = np.zeros((capacity, state_dim))
        self.A = np.zeros(capacity, dtype=np.int64)
        self.R = np.zeros(capacity)
        self.T = np.zeros(capacity, dtype=bool)
        self.EP = np.full(capacity, -1, dtype=np.int64)
        self.STEP = np.full(capacity, -1, dtype=np.int64)
        self.head = 0
        self.size = 0
        self.total = 0
        self.lock = threading.Lock()

    def __len__(self) -> int:
        return self.size

    def append(self, tr: Transition) -> None:
        if not -1.0 <= tr.r < 1.0:
            raise ValueError(f"reward {tr.r} outside [-1, 1)")
        with self.lock:
            i = self.head
            self.S[i] = tr.s
            self.S2[i] = tr.s_next
            self.A[i] = tr.a
            self.R[i] = tr.r
            self.T[i] = tr.terminal
            self.EP[i] = tr.episode_id
            self.STEP[i] = tr.step_index
            self.head = (i + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)
            self.total += 1

    def extend(self, transitions) -> None:
        for tr in transitions:
            self.append(tr)

    def clear(self) -> None:
        with self.lock:
            self.EP[:] = -1
            self.STEP[:] = -1
            self.head = self.size = 0

    def _slot(self, k: int) -> int:
        """Ring slot of the k-th oldest stored transition."""
        start = (self.head - self.size) % self.capacity
        return (start + k) % self.capacity

    def get(self, k: int) -> Transition:
        """k-th oldest transition (0 = oldest)."""
        with self.lock:
            if not 0 <= k < self.size:
                raise IndexError(k)
            i = self._slot(k)
            return Transition(self.S[i].copy(), int(self.A[i]), float(self.R[i]), self.S2[i].copy(),
                              bool(self.T[i]), int(self.EP[i]), int(self.STEP[i]))

    def __iter__(self):
        for k in range(len(self)):
            yield self.get(k)

    def sample(self, batch: int, rng: np.random.Generator, window: int = 8):
        """Uniform minibatch as windows ``[s_{j-W+1}, ..., s_j, s'_j]``.

        Returns ``X`` (B, W+1, d), ``mask`` (B, W+1), actions, rewards and
        terminal flags.  Missing history at the episode start is left-padded.
        """
        with self.lock:
            if self.size < batch:
                raise ValueError("pool smaller than batch")
            ks = rng.integers(0, self.size, batch)
            start = (self.head - self.size) % self.capacity
            idx = (start + ks) % self.capacity
            back = np.arange(window - 1, -1, -1)
            slots = (idx[:, None] - back[None, :]) % self.capacity
            valid = (self.EP[slots] == self.EP[idx][:, None]) & \
                    (self.STEP[slots] == self.STEP[idx][:, None] - back[None, :])
            # a gap makes everything older invalid as well
            valid = np.flip(np.cumprod(np.flip(valid, axis=1), axis=1), axis=1).astype(bool)
            X = np.zeros((batch, window + 1, self.S.shape[1]))
            X[:, :window] = np.where(valid[..., None], self.S[slots], 0.0)
            X[:, window] = self.S2[idx]
            mask = np.ones((batch, window + 1))
            mask[:, :window] = valid
            return X, mask, self.A[idx].copy(), self.R[idx].copy(), self.T[idx].copy()


# -- tabular stand-in -------------------------------------------------------

class TabularQ:
    """Lookup-table Q-function with the same interface the agent loops use.

    States are integer indices carried in the first state component.
    """

    def __init__(self, n_states: int, n_actions: int):
        self.n_states, self.n_actions = n_states, n_actions
        self.theta = np.zeros(n_states * n_actions)

    @property
    def table(self) -> np.ndarray:
        return self.theta.reshape(self.n_states, self.n_actions)

    def copy(self) -> "TabularQ":
        t = TabularQ(self.n_states, self.n_actions)
        t.theta[...] = self.theta
        return t

    def load_theta(self, theta) -> None:
        self.theta[...] = theta

    def q_values(self, window) -> np.ndarray:
        return self.table[int(np.asarray(window)[-1, 0])].copy()

    def td_update(self, X, mask, actions, rewards, terminals, gamma, alpha, clip_norm=None) -> float:
        """Sequential Bellman table updates, one per sampled transition."""
        Q = self.table
        losses = []
        for b in range(len(actions)):
            s, s2 = int(X[b, -2, 0]), int(X[b, -1, 0])
            target = rewards[b] + (0.0 if terminals[b] else gamma * Q[s2].max())
            err = target - Q[s, actions[b]]
            Q[s, actions[b]] += alpha * err
            losses.append(0.5 * err * err)
        return float(np.mean(losses))


# -- shared state between the two loops -------------------------------------

class SnapshotBox:
    """Latest published parameters; readers get an immutable copy."""

    def __init__(self, theta: np.ndarray):
        self._lock = threading.Lock()
        self._theta = theta.copy()
        self.version = 0

    def publish(self, theta: np.ndarray) -> None:
        with self._lock:
            self._theta = theta.copy()
            self.version += 1

    def latest(self) -> np.ndarray:
        with self._lock:
            return self._theta.copy()


@dataclass
class Signals:
    episode: int = 0                     # episodes started so far (1-based count)
    done: threading.Event = field(default_factory=threading.Event)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def start_episode(self) -> int:
        with self.lock:
            self.episode += 1
            return self.episode


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    reward: float
    epsilon: float
    terminal_kind: str
    stage: str = ""
    updates: int = 0
    loss: float = float("nan")

    FIELDS = ("stage", "episode", "steps", "reward", "epsilon", "terminal_kind", "updates", "loss")


class Learner:
    """Owns the training copy of the Q-function and applies minibatch updates."""

    def __init__(self, qfun, pool: ReplayPool, hp: HyperParams, rng: np.random.Generator,
                 box: SnapshotBox | None = None):
        self.qfun = qfun
        self.pool = pool
        self.hp = hp
        self.rng = rng
        self.box = box or SnapshotBox(qfun.theta)
        self.updates = 0
        self.losses: list[float] = []
        self.target = qfun.copy() if hp.target_sync else None
        self.optimizer = Adam(qfun.theta.size) if hp.optimizer == "adam" else None

    def ready(self, signals: Signals) -> bool:
        return signals.episode > self.hp.e_threshold and len(self.pool) >= self.hp.batch

    def update(self) -> float:
        X, mask, a, r, t = self.pool.sample(self.hp.batch, self.rng, self.hp.window_W)
        kw = {}
        if self.target is not None:
            kw["target"] = self.target
        if self.optimizer is not None:
            kw["optimizer"] = self.optimizer
        loss = self.qfun.td_update(X, mask, a, r, t, self.hp.gamma, self.hp.alpha, self.hp.clip_norm, **kw)
        self.updates += 1
        if self.target is not None and self.updates % self.hp.target_sync == 0:
            self.target.load_theta(self.qfun.theta)
        self.losses.append(loss)
        if self.updates % self.hp.publish_every == 0:
            self.box.publish(self.qfun.theta)
        return loss


def run_learning_thread(learner: Learner, signals: Signals, idle_s: float = 0.0005) -> Learner:
    """Learning loop: update while data is available until the action loop signals the end."""
    while not signals.done.is_set():
        if learner.ready(signals):
            learner.update()
        else:
            time.sleep(idle_s)
    learner.box.publish(learner.qfun.theta)
    return learner


MAX_CONSECUTIVE_ABORTS = 3       # then the robot is considered unreachable

StartFn = Callable[[object, np.random.Generator], np.ndarray]


def default_start(env: PegEnv, rng: np.random.Generator) -> np.ndarray:
    return env.reset(sample_reset(env.spec, rng))


def run_action_thread(env, actor, box: SnapshotBox, pool: ReplayPool, hp: HyperParams, signals: Signals,
                      rngs: dict, stage: int = 1, start: StartFn = default_start,
                      after_step: Callable[[], None] | None = None, stage_name: str = "",
                      episode_offset: int = 0, learner: Learner | None = None) -> list[EpisodeLog]:
    """Acting loop over ``hp.episodes_M`` episodes, then raise the termination signal.

    ``actor`` is a Q-function whose parameters are refreshed from ``box`` at
    every episode start.  Transitions of an episode are committed to the pool
    once it ends; an episode cut short by a transport failure is logged and
    dropped.  Three such failures in a row, or a phase in which every episode
    failed, end training with the error.  ``after_step`` lets a single-threaded driver interleave
    learning updates deterministically.
    """
    logs = []
    explore = rngs["explore"]
    aborts = 0
    try:
        for ep in range(hp.episodes_M):
            ep_id = episode_offset + ep
            signals.start_episode()
            actor.load_theta(box.latest())
            eps = epsilon_at(ep, stage, hp)
            buf: list[Transition] = []
            updates0 = learner.updates if learner else 0
            loss0 = len(learner.losses) if learner else 0
            try:
                s = start(env, rngs["env"])
                hist = [s]
                while True:
                    if explore.random() < eps:
                        a = int(explore.integers(env.n_actions))
                    else:
                        a = greedy_action(actor.q_values(np.asarray(hist[-hp.window_W:])))
                    res = env.step(a)
                    buf.append(Transition(s, a, res.reward, res.state, res.terminal, ep_id, len(buf)))
                    s = res.state
                    hist.append(s)
                    if after_step is not None:
                        after_step()
                    if res.terminal:
                        break
            except TransportError as exc:
                aborts += 1
                log.warning("episode %d aborted: %s", ep_id, exc)
                if aborts >= MAX_CONSECUTIVE_ABORTS:
                    raise
                logs.append(EpisodeLog(ep_id, len(buf), float("nan"), eps, "transport_abort", stage_name))
                continue
            aborts = 0
            pool.extend(buf)
            n_upd = (learner.updates - updates0) if learner else 0
            recent = learner.losses[loss0:] if learner else []
            logs.append(EpisodeLog(ep_id, env.k, res.reward, eps, res.record.terminal_kind.value, stage_name,
                                   n_upd, float(np.mean(recent)) if recent else float("nan")))
        if logs and aborts == len(logs):
            raise TransportError(f"all {len(logs)} episodes lost contact with the robot")
    finally:
        signals.done.set()
    return logs


def train_phase(env, qfun, hp: HyperParams, rngs: dict, stage: int = 1, start: StartFn = default_start,
                threaded: bool = False, pool: ReplayPool | None = None, stage_name: str = "",
                episode_offset: int = 0):
    """Train ``qfun`` in place for ``hp.episodes_M`` episodes; returns (logs, learner).

    Deterministic mode interleaves ``updates_per_step`` learning updates after
    every environment step in one thread.  Threaded mode runs the learning
    loop free in a second thread.
    """
    pool = pool if pool is not None else ReplayPool(hp.replay_capacity, env_state_dim(qfun))
    signals = Signals()
    learner = Learner(qfun, pool, hp, rngs["replay"])
    actor = qfun.copy()
    if threaded:
        th = threading.Thread(target=run_learning_thread, args=(learner, signals), daemon=True)
        th.start()
        try:
            logs = run_action_thread(env, actor, learner.box, pool, hp, signals, rngs, stage, start,
                                     stage_name=stage_name, episode_offset=episode_offset, learner=learner)
        finally:
            signals.done.set()
            th.join()
    else:
        def after_step():
            if learner.ready(signals):
                for _ in range(hp.updates_per_step):
                    learner.update()

        logs = run_action_thread(env, actor, learner.box, pool, hp, signals, rngs, stage, start, after_step,
                                 stage_name=stage_name, episode_offset=episode_offset, learner=learner)
        learner.box.publish(learner.qfun.theta)
    return logs, learner


def env_state_dim(qfun) -> int:
    return getattr(qfun, "n_in", 1)


def make_rngs(seed: int) -> dict:
    """Independent streams for the environment, network init, exploration and replay sampling."""
    ss = np.random.SeedSequence(seed)
    names = ("env", "init", "explore", "replay")
    return {n: np.random.default_rng(s) for n, s in zip(names, ss.spawn(len(names)))}


def write_episode_csv(path, logs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EpisodeLog.FIELDS)
        w.writeheader()
        for row in logs:
            d = asdict(row)
            w.writerow({k: (f"{d[k]:.10g}" if isinstance(d[k], float) else d[k]) for k in EpisodeLog.FIELDS})


def success_rate(logs, window: int) -> float:
    tail = [lg for lg in logs[-window:]]
    if not tail:
        return 0.0
    return sum(lg.terminal_kind == TerminalKind.SUCCESS.value for lg in tail) / len(tail)


# -- curriculum -------------------------------------------------------------

class CurriculumGateError(RuntimeError):
    """Stage 1 did not reach the success rate needed to move on.

    ``partial`` holds the stage-1 network and logs so they can still be saved.
    """

    def __init__(self, msg: str, partial: "CurriculumResult | None" = None):
        super().__init__(msg)
        self.partial = partial


@dataclass
class CurriculumConfig:
    hp: HyperParams = field(default_factory=HyperParams)
    stage1: PhaseSpec = field(default_factory=lambda: search_spec(1.0, 3.0))
    stage2: PhaseSpec = field(default_factory=lambda: search_spec(3.0, 5.0))
    insertion: PhaseSpec = field(default_factory=lambda: insertion_spec(
        clearance_um=(10.0, 20.0), tilt_deg=(0.0, 1.6), misalign_deg=0.3))
    insertion_hp: HyperParams | None = None
    seed: int = 0
    threaded: bool = False
    skip_gate: bool = False


@dataclass
class CurriculumResult:
    search_stage1: QNetwork
    search_stage2: QNetwork
    insertion: QNetwork
    logs: list
    losses: dict


class SearchThenInsertStart:
    """Start insertion episodes from where a greedy search run leaves the peg.

    The search uses a 1 mm offset with the episode's plate geometry.  If it
    fails, the episode falls back to a direct engaged start.
    """

    def __init__(self, search_net, search_env: PegEnv, window: int):
        self.search_net = search_net
        self.search_env = search_env
        self.window = window
        self.search_failures = 0

    def __call__(self, env: PegEnv, rng: np.random.Generator) -> np.ndarray:
        spec = sample_reset(env.spec, rng)
        search_reset = ResetSpec((0.0, 0.0), spec.clearance_um, spec.tilt_deg, spec.tilt_azimuth_deg,
                                 spec.rot_xy_deg, 0.0, spec.seed)
        ang = 2 * math.pi * int(rng.integers(self.search_env.spec.n_directions)) / self.search_env.spec.n_directions
        d0 = self.search_env.spec.d0_mm
        search_reset.offset_xy_mm = (d0 * math.cos(ang), d0 * math.sin(ang))
        ok, _ = greedy_rollout(self.search_env, self.search_net, search_reset, self.window)
        if ok:
            return env.continue_from(self.search_env.frame, self.search_env.z_start)
        self.search_failures += 1
        return env.reset(spec)


def greedy_rollout(env: PegEnv, qfun, reset: ResetSpec | None, window: int):
    """ε=0 episode; returns (success, steps).  ``reset=None`` continues from the current state."""
    s = env.reset(reset) if reset is not None else env.continue_from(env.frame, env.z_surface)
    hist = [s]
    while True:
        a = greedy_action(qfun.q_values(np.asarray(hist[-window:])))
        res = env.step(a)
        hist.append(res.state)
        if res.terminal:
            return res.record.terminal_kind is TerminalKind.SUCCESS, env.k


def run_curriculum(cfg: CurriculumConfig, transport_factory: Callable[[], object]) -> CurriculumResult:
    """Search stage 1 (d0=1 mm), search stage 2 (d0=3 mm, warm start), then insertion."""
    hp = cfg.hp
    ss = np.random.SeedSequence(cfg.seed)
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(3)]
    logs = []
    losses = {}

    transport = transport_factory()
    rng1 = make_rngs(seeds[0])
    net = QNetwork(STATE_DIM, hp.h1, hp.h2, cfg.stage1.n_actions, rng=rng1["init"])
    env1 = PegEnv(transport, cfg.stage1)
    lg1, learner1 = train_phase(env1, net, hp, rng1, stage=1, threaded=cfg.threaded, stage_name="search_stage1")
    logs += lg1
    losses["search_stage1"] = learner1.losses
    stage1 = net.copy()
    rate = success_rate(lg1, hp.gate_window)
    log.info("stage 1 success rate over last %d episodes: %.2f", hp.gate_window, rate)
    if rate < hp.gate_success and not cfg.skip_gate:
        raise CurriculumGateError(
            f"search stage 1 success rate {rate:.2f} over the last {hp.gate_window} episodes "
            f"is below the gate {hp.gate_success:.2f}",
            CurriculumResult(stage1, None, None, logs, losses))

    rng2 = make_rngs(seeds[1])
    env2 = PegEnv(transport, cfg.stage2)
    lg2, learner2 = train_phase(env2, net, hp, rng2, stage=2, threaded=cfg.threaded, stage_name="search_stage2",
                                episode_offset=hp.episodes_M)
    logs += lg2
    losses["search_stage2"] = learner2.losses
    stage2 = net.copy()

    ihp = cfg.insertion_hp or hp
    rng3 = make_rngs(seeds[2])
    ins = QNetwork(STATE_DIM, ihp.h1, ihp.h2, cfg.insertion.n_actions, rng=rng3["init"])
    env3 = PegEnv(transport, cfg.insertion)
    starter = SearchThenInsertStart(stage2, PegEnv(transport, cfg.stage1), hp.window_W)
    lg3, learner3 = train_phase(env3, ins, ihp, rng3, stage=1, start=starter, threaded=cfg.threaded,
                                stage_name="insertion", episode_offset=2 * hp.episodes_M)
    logs += lg3
    losses["insertion"] = learner3.losses
    return CurriculumResult(stage1, stage2, ins, logs, losses)


# -- evaluation -------------------------------------------------------------

@dataclass
class CaseSpec:
    name: str
    d0_mm: float
    clearance_um: float
    tilt_deg: float
    grid_c_mm: float
    tilt_azimuth_deg: float = 0.0


CASES = {
    "A": CaseSpec("A", 3.0, 10.0, 0.0, 5.0),
    "B": CaseSpec("B", 1.0, 20.0, 1.6, 3.0),
}


@dataclass
class EvalReport:
    case: CaseSpec
    search_steps: list
    insertion_steps: list
    success: list
    cycle_s: float = 0.04

    @property
    def n_trials(self) -> int:
        return len(self.success)

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.success)) if self.success else 0.0

    def times(self, which: str) -> np.ndarray:
        """Execution times (s) of successful trials for 'search', 'insertion' or 'total'."""
        ok = np.asarray(self.success, bool)
        s = np.asarray(self.search_steps, float)[ok] * self.cycle_s
        i = np.asarray(self.insertion_steps, float)[ok] * self.cycle_s
        return {"search": s, "insertion": i, "total": s + i}[which]

    def summary(self) -> dict:
        def mean(x):
            return float(np.mean(x)) if len(x) else float("nan")
        c = self.case
        return {
            "case": c.name, "clearance_um": c.clearance_um, "angle_error_deg": c.tilt_deg,
            "initial_position_error_mm": c.d0_mm,
            "search_time_s": mean(self.times("search")),
            "insertion_time_s": mean(self.times("insertion")),
            "total_time_s": mean(self.times("total")),
            "success_rate": self.success_rate, "trials": self.n_trials,
        }

    def histograms(self, bin_s: float = 0.2) -> dict:
        """Counts per ``bin_s``-wide time bin for each phase, starting at 0."""
        out = {}
        for which in ("search", "insertion", "total"):
            t = self.times(which)
            top = max(float(t.max()) if len(t) else 0.0, bin_s)
            edges = np.arange(0.0, top + bin_s, bin_s)
            counts, edges = np.histogram(t, bins=edges)
            out[which] = (edges, counts)
        return out


def evaluate(search_net, insertion_net, case: CaseSpec, n_trials: int = 100, seed: int = 0,
             transport=None, window: int = 8, insertion_k_max: int = 300) -> EvalReport:
    """Greedy search followed by greedy insertion, ``n_trials`` times from random offsets."""
    from .env import InProcessTransport

    transport = transport or InProcessTransport()
    s_spec = search_spec(case.d0_mm, case.grid_c_mm, clearance_um=(case.clearance_um,),
                         tilt_deg=(case.tilt_deg,), tilt_azimuth_deg=case.tilt_azimuth_deg)
    i_spec = insertion_spec(k_max=insertion_k_max, clearance_um=(case.clearance_um,), tilt_deg=(case.tilt_deg,),
                            tilt_azimuth_deg=case.tilt_azimuth_deg)
    s_env = PegEnv(transport, s_spec)
    i_env = PegEnv(transport, i_spec)
    rng = np.random.default_rng(seed)
    rep = EvalReport(case, [], [], [], transport_cycle_s(transport))
    for _ in range(n_trials):
        ok, ks = greedy_rollout(s_env, search_net, sample_reset(s_spec, rng), window)
        ki = 0
        if ok:
            i_env.continue_from(s_env.frame, s_env.z_start)
            ok, ki = greedy_rollout(i_env, insertion_net, None, window)
        rep.search_steps.append(ks)
        rep.insertion_steps.append(ki)
        rep.success.append(bool(ok))
    return rep


def transport_cycle_s(transport) -> float:
    ctl = getattr(transport, "controller", None)
    return ctl.cfg.cycle_s if ctl is not None else 0.04
