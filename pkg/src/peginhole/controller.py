"""Hybrid force/position controller emulation with latched actions and 20-sample polling."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .contact_sim import ResetSpec, Simulator


class ProtocolError(ValueError):
    """A command or message did not have the expected shape."""


class StartupError(RuntimeError):
    """The controller was used before an episode was initialised."""


@dataclass
class ActionVector:
    """Desired force (N) and rotation direction, in the order ``[Fx, Fy, Fz, Rx, Ry]``."""
    fd_xyz_n: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rd_xy: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.fd_xyz_n = np.array(self.fd_xyz_n, dtype=float).reshape(-1)
        self.rd_xy = np.array(self.rd_xy, dtype=float).reshape(-1)
        if self.fd_xyz_n.shape != (3,) or self.rd_xy.shape != (2,):
            raise ProtocolError("action needs 3 force and 2 rotation components")

    @classmethod
    def from_array(cls, a) -> "ActionVector":
        a = np.asarray(a, dtype=float).reshape(-1)
        if a.shape != (5,):
            raise ProtocolError(f"action vector must have 5 components, got {a.size}")
        return cls(a[:3], a[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.fd_xyz_n, self.rd_xy])


@dataclass
class SensorFrame:
    forces_n: np.ndarray
    moments_nm: np.ndarray
    pos_mm: np.ndarray
    sample_count: int
    cycle_index: int

    def as_array(self) -> np.ndarray:
        """Wire order: Fx Fy Fz Mx My Px Py Pz cycle."""
        return np.concatenate([self.forces_n, self.moments_nm, self.pos_mm, [float(self.cycle_index)]])

    @classmethod
    def from_array(cls, v, sample_count: int = 20) -> "SensorFrame":
        v = np.asarray(v, dtype=float)
        if v.shape != (9,):
            raise ProtocolError(f"frame needs 9 values, got {v.size}")
        return cls(v[0:3].copy(), v[3:5].copy(), v[5:8].copy(), sample_count, int(v[8]))


class Controller:
    """Robot controller: latches the commanded action and executes it from the next cycle.

    Each :meth:`poll` runs one 40 ms cycle (20 sensor samples at 2 ms) with the
    currently executing action, then promotes the latched command so that it
    drives the following cycle.  An action submitted after frame ``t`` is
    therefore first visible in frame ``t + 2``.
    """

    def __init__(self, sim: Simulator | None = None, realtime: bool = False):
        self.sim = sim or Simulator()
        self.realtime = realtime
        self.cycle = 0
        self.active = ActionVector()
        self.latched: ActionVector | None = None
        self.last_raw: np.ndarray | None = None
        self._ready = False
        self._t_last = None

    @property
    def cfg(self):
        return self.sim.cfg

    def reset(self, spec: ResetSpec) -> None:
        self.sim.reset(spec)
        self.cycle = 0
        self.active = ActionVector()
        self.latched = None
        self.last_raw = None
        self._ready = True

    def submit_action(self, a) -> int:
        """Latch ``a`` (an :class:`ActionVector` or 5 floats); returns the cycle it was received in."""
        if not self._ready:
            raise StartupError("controller not initialised; reset first")
        if not isinstance(a, ActionVector):
            a = ActionVector.from_array(a)
        self.latched = a
        return self.cycle

    def execute_cycle(self, action: ActionVector) -> np.ndarray:
        """Run one control cycle of ``action``; return the raw samples, shape (20, 8)."""
        cfg = self.cfg
        n = cfg.samples_per_cycle
        rot_inc = np.sign(action.rd_xy) * (cfg.rot_step_deg / n)
        return self.sim.run_cycle(action.fd_xyz_n, rot_inc, n, cfg.sample_dt_s)

    def poll(self) -> SensorFrame:
        if not self._ready:
            raise StartupError("no samples yet; reset the controller first")
        raw = self.execute_cycle(self.active)
        if self.latched is not None:
            self.active = self.latched
        self.cycle += 1
        self.last_raw = raw
        mean = raw.mean(axis=0)
        if self.realtime:
            self._sleep_to_cycle()
        return SensorFrame(mean[0:3], mean[3:5], mean[5:8], raw.shape[0], self.cycle)

    def _sleep_to_cycle(self):
        now = time.monotonic()
        if self._t_last is not None:
            wait = self.cfg.cycle_s - (now - self._t_last)
            if wait > 0:
                time.sleep(wait)
        self._t_last = time.monotonic()
