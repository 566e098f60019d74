"""Small stand-ins shared by the agent, acceptance and service tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from peginhole.env import Phase, RewardRecord, TerminalKind


@dataclass
class _Res:
    state: np.ndarray
    reward: float
    terminal: bool
    record: RewardRecord | None


class ChainEnv:
    """Deterministic 5-state chain.  Action 1 moves right, 0 moves left.

    Stepping right out of state 3 reaches the absorbing goal with reward 0.5.
    Every left move costs 0.1.  Episodes start uniformly in states 0..3.
    """

    n_states = 5
    n_actions = 2
    goal = 4

    def __init__(self):
        self.s = 0
        self.k = 0

    def reset_to(self, s: int) -> np.ndarray:
        self.s, self.k = int(s), 0
        return np.array([float(self.s)])

    def step(self, a: int) -> _Res:
        self.k += 1
        if a == 1:
            self.s += 1
            r = 0.5 if self.s == self.goal else 0.0
        else:
            self.s = max(self.s - 1, 0)
            r = -0.1
        done = self.s == self.goal
        rec = RewardRecord(r, TerminalKind.SUCCESS) if done else None
        return _Res(np.array([float(self.s)]), r, done, rec)


def chain_start(env: ChainEnv, rng: np.random.Generator) -> np.ndarray:
    return env.reset_to(int(rng.integers(0, ChainEnv.goal)))


def chain_value_iteration(gamma: float, tol: float = 1e-14) -> np.ndarray:
    """Exact Q* of :class:`ChainEnv` by repeated Bellman backups."""
    Q = np.zeros((ChainEnv.n_states, 2))
    while True:
        V = Q.max(axis=1)
        V[ChainEnv.goal] = 0.0
        new = np.zeros_like(Q)
        for s in range(ChainEnv.goal):
            new[s, 0] = -0.1 + gamma * V[max(s - 1, 0)]
            new[s, 1] = 0.5 if s + 1 == ChainEnv.goal else gamma * V[s + 1]
        if np.abs(new - Q).max() < tol:
            return new
        Q = new


class ScriptedPolicy:
    """Hand-written moment-following policy exposing ``q_values`` like a network.

    Search: the moment points across the offset, so push along the
    dominant axis of ``(My, -Mx)``.  Insertion: rotate against the tilt
    moment until it is small, otherwise push straight down.
    """

    def __init__(self, phase: Phase, threshold_nm: float = 0.006):
        self.phase = Phase(phase)
        self.threshold = threshold_nm

    def action(self, s) -> int:
        mx, my = s[3], s[4]
        if self.phase is Phase.SEARCH:
            ox, oy = -my, mx
            if abs(ox) > abs(oy):
                return 1 if ox > 0 else 0
            return 3 if oy > 0 else 2
        if max(abs(mx), abs(my)) < self.threshold:
            return 0
        if abs(mx) > abs(my):
            return 1 if mx > 0 else 2
        return 3 if my > 0 else 4

    def q_values(self, window) -> np.ndarray:
        q = np.zeros(4 if self.phase is Phase.SEARCH else 5)
        q[self.action(np.asarray(window)[-1])] = 1.0
        return q
