"""Search and insertion environments: states, discrete actions, rewards, termination."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .contact_sim import ResetSpec
from .controller import ActionVector, Controller, SensorFrame

STATE_DIM = 7


class Phase(str, Enum):
    SEARCH = "search"
    INSERTION = "insertion"


N_ACTIONS = {Phase.SEARCH: 4, Phase.INSERTION: 5}


class TerminalKind(str, Enum):
    SUCCESS = "success"
    TIMEOUT = "timeout"
    SAFETY_ABORT = "safety_abort"


@dataclass
class RewardRecord:
    value: float
    terminal_kind: TerminalKind

    def __post_init__(self):
        if not -1.0 <= self.value < 1.0:
            raise ValueError(f"reward {self.value} outside [-1, 1)")


@dataclass
class PhaseSpec:
    phase: Phase = Phase.SEARCH
    k_max: int = 100
    d0_mm: float = 1.0
    grid_c_mm: float = 3.0
    safe_d_mm: float = 10.0
    dz_entry_mm: float = 0.5
    z_goal_mm: float = 19.0
    force_n: float = 20.0
    # episode geometry
    clearance_um: tuple = (10.0,)
    tilt_deg: tuple = (0.0, 0.0)         # uniform range
    tilt_azimuth_deg: float = 0.0
    misalign_deg: float = 0.0            # extra random peg tilt, insertion only
    n_directions: int = 16

    def __post_init__(self):
        self.phase = Phase(self.phase)
        self.clearance_um = tuple(float(c) for c in np.atleast_1d(self.clearance_um))
        self.tilt_deg = tuple(float(t) for t in np.atleast_1d(self.tilt_deg))
        if len(self.tilt_deg) == 1:
            self.tilt_deg = self.tilt_deg * 2
        for name in ("k_max", "d0_mm", "grid_c_mm", "safe_d_mm", "dz_entry_mm", "z_goal_mm",
                     "force_n", "n_directions"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.d0_mm >= self.safe_d_mm:
            raise ValueError("d0_mm must be < safe_d_mm")
        if not self.clearance_um or min(self.clearance_um) <= 0:
            raise ValueError("clearance_um must be positive")
        if self.tilt_deg[0] > self.tilt_deg[1] or max(abs(t) for t in self.tilt_deg) >= 5:
            raise ValueError("tilt_deg must be an increasing range within (-5, 5)")
        if self.misalign_deg < 0:
            raise ValueError("misalign_deg must be >= 0")

    @property
    def n_actions(self) -> int:
        return N_ACTIONS[self.phase]


def search_spec(d0_mm: float = 1.0, grid_c_mm: float = 3.0, **kw) -> PhaseSpec:
    return PhaseSpec(Phase.SEARCH, k_max=100, d0_mm=d0_mm, grid_c_mm=grid_c_mm, **kw)


def insertion_spec(**kw) -> PhaseSpec:
    kw.setdefault("k_max", 300)
    return PhaseSpec(Phase.INSERTION, **kw)


# -- pure functions ---------------------------------------------------------

def round_to_grid(p_mm: float, c_mm: float) -> float:
    """Snap toward zero onto multiples of ``c``: (-c, c) -> 0, [c, 2c) -> c, (-2c, -c] -> -c."""
    if c_mm <= 0:
        raise ValueError("grid constant must be > 0")
    a = abs(p_mm)
    n = math.floor(a / c_mm)
    if c_mm * (n + 1) <= a:     # a / c rounded down across a grid point
        n += 1
    return math.copysign(c_mm * n, p_mm) + 0.0


def reward_success(k: int, k_max: int) -> float:
    if not 1 <= k < k_max:
        raise ValueError(f"success step k={k} must satisfy 1 <= k < k_max={k_max}")
    return 1.0 - k / k_max


def reward_search_fail(d: float, d0: float, big_d: float) -> float:
    if not d0 < big_d:
        raise ValueError("d0 must be < D")
    if d < 0 or d > big_d:
        raise ValueError(f"distance {d} outside [0, D]")
    if d <= d0:
        return 0.0
    return -(d - d0) / (big_d - d0)


def reward_insertion_fail(z: float, z_goal: float) -> float:
    if not 0 <= z <= z_goal:
        raise ValueError(f"displacement {z} outside [0, Z]")
    return -(z_goal - z) / z_goal


def decode_action(phase, index: int, force_n: float = 20.0) -> ActionVector:
    """Map a discrete action index to the controller command.

    Search: +x, -x, +y, -y lateral pushes.  Insertion: straight push, then
    +Rx, -Rx, +Ry, -Ry.  Every action presses down with ``force_n``.
    """
    phase = Phase(phase)
    n = N_ACTIONS[phase]
    if not 0 <= int(index) < n or int(index) != index:
        raise ValueError(f"action index {index} out of range for {phase.value}")
    a = np.zeros(5)
    a[2] = -force_n
    if phase is Phase.SEARCH:
        axis, sign = divmod(int(index), 2)
        a[axis] = force_n if sign == 0 else -force_n
    elif index > 0:
        axis, sign = divmod(int(index) - 1, 2)
        a[3 + axis] = 1.0 if sign == 0 else -1.0
    return ActionVector.from_array(a)


def build_state(frame: SensorFrame, spec: PhaseSpec, center_xy=(0.0, 0.0)) -> np.ndarray:
    if spec.phase is Phase.INSERTION:
        return np.array([0.0, 0.0, frame.forces_n[2], frame.moments_nm[0], frame.moments_nm[1], 0.0, 0.0])
    px = round_to_grid(frame.pos_mm[0] - center_xy[0], spec.grid_c_mm)
    py = round_to_grid(frame.pos_mm[1] - center_xy[1], spec.grid_c_mm)
    return np.array([*frame.forces_n, *frame.moments_nm, px, py])


class Progress(NamedTuple):
    """Phase progress measured from sensed positions."""
    z_drop_mm: float = 0.0        # search: drop below the starting height
    dist_mm: float = 0.0          # search: lateral distance to the nominal hole centre
    depth_mm: float = 0.0         # insertion: depth below the plate surface
    displacement_mm: float = 0.0  # insertion: travel since the phase started


def check_terminal(spec: PhaseSpec, progress: Progress, k: int) -> RewardRecord | None:
    """Episode outcome after action ``k`` (1-based), or None while the episode continues."""
    if spec.phase is Phase.SEARCH:
        if progress.z_drop_mm >= spec.dz_entry_mm and k < spec.k_max:
            return RewardRecord(reward_success(k, spec.k_max), TerminalKind.SUCCESS)
        if progress.dist_mm > spec.safe_d_mm:
            return RewardRecord(-1.0, TerminalKind.SAFETY_ABORT)
        if k >= spec.k_max:
            d = min(progress.dist_mm, spec.safe_d_mm)
            return RewardRecord(reward_search_fail(d, spec.d0_mm, spec.safe_d_mm), TerminalKind.TIMEOUT)
        return None
    if progress.depth_mm >= spec.z_goal_mm and k < spec.k_max:
        return RewardRecord(reward_success(k, spec.k_max), TerminalKind.SUCCESS)
    if k >= spec.k_max:
        z = min(max(progress.displacement_mm, 0.0), spec.z_goal_mm)
        return RewardRecord(reward_insertion_fail(z, spec.z_goal_mm), TerminalKind.TIMEOUT)
    return None


def sample_reset(spec: PhaseSpec, rng: np.random.Generator, engaged_depth_mm: float = 0.6) -> ResetSpec:
    """Random episode start: offset ``d0`` in one of ``n_directions`` directions."""
    j = int(rng.integers(spec.n_directions))
    ang = 2 * math.pi * j / spec.n_directions
    clearance = float(spec.clearance_um[int(rng.integers(len(spec.clearance_um)))])
    lo, hi = spec.tilt_deg
    tilt = float(rng.uniform(lo, hi)) if hi > lo else lo
    rot = (0.0, 0.0)
    if spec.misalign_deg > 0:
        mag = float(rng.uniform(0.0, spec.misalign_deg))
        k = int(rng.integers(spec.n_directions))
        phi = 2 * math.pi * k / spec.n_directions
        rot = (mag * math.cos(phi), mag * math.sin(phi))
    seed = int(rng.integers(2 ** 31))
    if spec.phase is Phase.SEARCH:
        return ResetSpec((spec.d0_mm * math.cos(ang), spec.d0_mm * math.sin(ang)), clearance, tilt,
                         spec.tilt_azimuth_deg, rot, 0.0, seed)
    return ResetSpec((0.0, 0.0), clearance, tilt, spec.tilt_azimuth_deg, rot, engaged_depth_mm, seed)


# -- transports -------------------------------------------------------------

class TransportError(RuntimeError):
    """The robot could not be reached."""


class InProcessTransport:
    """Talks to a :class:`Controller` in the same process."""

    def __init__(self, controller: Controller | None = None):
        self.controller = controller or Controller()

    def reset(self, spec: ResetSpec) -> None:
        self.controller.reset(spec)

    def submit(self, action: ActionVector) -> None:
        self.controller.submit_action(action)

    def poll(self) -> SensorFrame:
        return self.controller.poll()

    def close(self) -> None:
        pass


# -- episode holder ---------------------------------------------------------

@dataclass
class StepResult:
    state: np.ndarray
    reward: float
    terminal: bool
    record: RewardRecord | None
    frame: SensorFrame


@dataclass
class PegEnv:
    """One phase of the task on top of a transport.

    Rewards are given only at episode end.  Heights are judged from the
    sensed peg position, so the per-episode sensor bias cancels.
    """
    transport: object
    spec: PhaseSpec
    center_xy: tuple = (0.0, 0.0)
    k: int = 0
    frame: SensorFrame | None = None
    z_start: float = 0.0
    z_surface: float = 0.0
    done: bool = True
    frames: list = field(default_factory=list)

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    def reset(self, reset: ResetSpec) -> np.ndarray:
        self.transport.reset(reset)
        frame = self.transport.poll()
        surface = frame.pos_mm[2] + reset.engaged_depth_mm
        return self._begin(frame, surface)

    def continue_from(self, frame: SensorFrame, z_surface: float) -> np.ndarray:
        """Start this phase from the live robot state (e.g. right after a successful search)."""
        return self._begin(frame, z_surface)

    def _begin(self, frame: SensorFrame, z_surface: float) -> np.ndarray:
        self.k = 0
        self.frame = frame
        self.frames = [frame]
        self.z_start = float(frame.pos_mm[2])
        self.z_surface = float(z_surface)
        self.done = False
        return build_state(frame, self.spec, self.center_xy)

    def progress(self, frame: SensorFrame) -> Progress:
        p = frame.pos_mm
        return Progress(
            z_drop_mm=self.z_start - p[2],
            dist_mm=float(math.hypot(p[0] - self.center_xy[0], p[1] - self.center_xy[1])),
            depth_mm=self.z_surface - p[2],
            displacement_mm=self.z_start - p[2],
        )

    def step(self, action_index: int) -> StepResult:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        self.transport.submit(decode_action(self.spec.phase, action_index, self.spec.force_n))
        frame = self.transport.poll()
        self.k += 1
        self.frame = frame
        self.frames.append(frame)
        rec = check_terminal(self.spec, self.progress(frame), self.k)
        self.done = rec is not None
        return StepResult(build_state(frame, self.spec, self.center_xy),
                          rec.value if rec else 0.0, self.done, rec, frame)
