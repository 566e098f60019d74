"""Quasi-static contact model of a cylindrical peg pressed onto a plate with a tight hole.

Units: lengths in mm, angles in degrees, forces in N, moments in N·m,
clearance in µm.  ``z_mm = 0`` is the plate surface at the hole centre and
the peg tip moves to negative z once it drops into the hole.

Two regimes are simulated:

* surface contact -- the peg slides under a commanded lateral force against
  Coulomb friction; a thin chamfer ring around the hole pulls it toward the
  centre; rim overlap produces a moment pointing at the hole.
* engaged -- the peg is in the hole and advances under the vertical force
  unless its tilt relative to the hole axis exceeds the two-point-contact
  wedging angle for the current engaged length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

N_SAMPLE_CHANNELS = 8  # Fx Fy Fz Mx My Px Py Pz


@dataclass
class SimConfig:
    friction_mu: float = 0.2
    mobility_mm_per_ns: float = 0.1          # lateral speed per net newton
    chamfer_mm: float = 0.3                  # radial width of the capture ring
    chamfer_slope: float = 1.0               # lateral/vertical force ratio on the chamfer
    entry_depth_mm: float = 0.6              # engagement right after the peg drops in
    moment_gain: float = 0.007               # N·m per effective newton at full overlap
    moment_preload_n: float = 8.0            # vertical force absorbed before the peg tips
    insertion_speed_mm_per_ns: float = 0.75
    insertion_drag_ratio: float = 0.25       # Fz reaction / command while sliding in the bore
    align_moment_gain: float = 0.00625       # N·m per (N·deg) of misalignment when engaged
    grip_compliance_deg: float = 0.15
    rot_step_deg: float = 0.05               # controller rotation increment per cycle
    sigma_force_n: float = 0.1
    sigma_moment_nm: float = 0.02
    sigma_pos_mm: float = 0.002
    force_resolution_n: float = 0.024
    pos_bias_mm: float = 0.06
    sample_dt_s: float = 0.002
    samples_per_cycle: int = 20

    def __post_init__(self):
        if self.friction_mu < 0:
            raise ValueError("friction_mu must be >= 0")
        for name in ("mobility_mm_per_ns", "insertion_speed_mm_per_ns", "force_resolution_n",
                     "sample_dt_s", "rot_step_deg"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("sigma_force_n", "sigma_moment_nm", "sigma_pos_mm", "pos_bias_mm",
                     "chamfer_mm", "moment_gain", "moment_preload_n", "grip_compliance_deg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.samples_per_cycle < 1:
            raise ValueError("samples_per_cycle must be >= 1")

    @property
    def cycle_s(self) -> float:
        return self.sample_dt_s * self.samples_per_cycle


@dataclass
class HoleSpec:
    diameter_mm: float = 35.0
    clearance_um: float = 10.0
    depth_mm: float = 20.0
    tilt_deg: float = 0.0
    tilt_azimuth_deg: float = 0.0
    center_xy_mm: tuple = (0.0, 0.0)
    center_error_xy_mm: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.diameter_mm <= 0:
            raise ValueError("diameter_mm must be > 0")
        if self.clearance_um <= 0:
            raise ValueError("clearance_um must be > 0")
        if self.depth_mm <= 0:
            raise ValueError("depth_mm must be > 0")
        if abs(self.tilt_deg) >= 5:
            raise ValueError("|tilt_deg| must be < 5")

    @property
    def peg_diameter_mm(self) -> float:
        return self.diameter_mm - self.clearance_um * 1e-3

    @property
    def peg_radius_mm(self) -> float:
        return 0.5 * self.peg_diameter_mm

    @property
    def radial_clearance_mm(self) -> float:
        return 0.5e-3 * self.clearance_um

    @property
    def true_center(self) -> np.ndarray:
        return np.asarray(self.center_xy_mm, float) + np.asarray(self.center_error_xy_mm, float)

    @property
    def axis_rot_deg(self) -> np.ndarray:
        """Hole axis orientation expressed as (R_x, R_y) in degrees."""
        az = math.radians(self.tilt_azimuth_deg)
        return self.tilt_deg * np.array([math.cos(az), math.sin(az)])

    def surface_z(self, xy) -> float:
        o = np.asarray(xy, float) - self.true_center
        rx, ry = np.radians(self.axis_rot_deg)
        return math.tan(rx) * o[1] - math.tan(ry) * o[0]


@dataclass
class PegPose:
    xy_mm: np.ndarray = field(default_factory=lambda: np.zeros(2))
    z_mm: float = 0.0
    rot_xy_deg: np.ndarray = field(default_factory=lambda: np.zeros(2))
    depth_mm: float = 0.0

    def __post_init__(self):
        self.xy_mm = np.array(self.xy_mm, dtype=float)
        self.rot_xy_deg = np.array(self.rot_xy_deg, dtype=float)
        if self.depth_mm < 0:
            raise ValueError("depth_mm must be >= 0")

    @property
    def engaged(self) -> bool:
        return self.depth_mm > 0

    def copy(self) -> "PegPose":
        return replace(self, xy_mm=self.xy_mm.copy(), rot_xy_deg=self.rot_xy_deg.copy())


@dataclass
class ContactWrench:
    force_n: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment_nm: np.ndarray = field(default_factory=lambda: np.zeros(2))
    jammed: bool = False

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force_n, self.moment_nm])


# -- geometry ---------------------------------------------------------------

def overlap_fraction(dist_mm: float, peg_radius_mm: float, radial_clearance_mm: float) -> float:
    """Share of the peg face hanging over the hole mouth, linear in the offset.

    1 just outside the clearance circle, 0 once the offset reaches
    ``peg_radius + clearance``.  Inside the clearance circle the face is
    fully unsupported and symmetric, so the value is 0 there too.
    """
    if dist_mm <= radial_clearance_mm:
        return 0.0
    reach = peg_radius_mm + radial_clearance_mm
    return float(np.clip(1.0 - dist_mm / reach, 0.0, 1.0))


def moment_field(offset_xy_mm, fz_n: float, hole: HoleSpec | None = None,
                 cfg: SimConfig | None = None) -> np.ndarray:
    """Contact moment (M_x, M_y) of a peg pressed down at ``offset`` from the hole centre.

    The plate supports the peg on the crescent away from the hole, so the
    reaction tips the peg toward the hole.  Magnitude is
    ``moment_gain * max(fz - preload, 0) * overlap_fraction``; the preload
    is what keeps light pushes below the sensor noise.
    """
    if fz_n < 0:
        raise ValueError("fz_n must be >= 0")
    hole = hole or HoleSpec()
    cfg = cfg or SimConfig()
    o = np.asarray(offset_xy_mm, dtype=float)
    dist = float(np.hypot(o[0], o[1]))
    frac = overlap_fraction(dist, hole.peg_radius_mm, hole.radial_clearance_mm)
    if frac == 0.0:
        return np.zeros(2)
    mag = cfg.moment_gain * max(fz_n - cfg.moment_preload_n, 0.0) * frac
    # u points from the peg toward the hole; support reaction at -u gives M = mag * (-u_y, u_x)
    return mag * np.array([o[1], -o[0]]) / dist


def jam_angle_deg(clearance_um: float, diameter_mm: float, depth_mm: float) -> float:
    """Largest peg tilt (deg) that still fits ``depth_mm`` of engaged length.

    Two-point contact: a peg of diameter d tilted by θ with engaged length l
    spans ``d cosθ + l sinθ`` across the bore of diameter D.  Returns
    ``inf`` while the engaged length is too short for any tilt to wedge.
    """
    big_d = diameter_mm
    d = diameter_mm - clearance_um * 1e-3
    l = depth_mm
    r = math.hypot(d, l)
    if r <= big_d:
        return math.inf
    return math.degrees(math.atan2(l, d) - math.acos(big_d / r))


def max_depth_for_tilt(tilt_deg: float, clearance_um: float, diameter_mm: float) -> float:
    """Deepest engaged length reachable at a given tilt; inverse of :func:`jam_angle_deg`."""
    big_d = diameter_mm
    d = diameter_mm - clearance_um * 1e-3
    th = math.radians(abs(tilt_deg))
    if th == 0.0:
        return math.inf
    th_min = math.acos(d / big_d)
    if th >= th_min:
        return math.sqrt(big_d ** 2 - d ** 2)
    return (big_d - d * math.cos(th)) / math.sin(th)


def effective_misalignment_deg(pose: PegPose, hole: HoleSpec, cfg: SimConfig) -> float:
    mis = pose.rot_xy_deg - hole.axis_rot_deg
    return max(float(np.hypot(mis[0], mis[1])) - cfg.grip_compliance_deg, 0.0)


def inside_clearance(xy_mm, hole: HoleSpec) -> bool:
    o = np.asarray(xy_mm, float) - hole.true_center
    return bool(np.hypot(o[0], o[1]) <= hole.radial_clearance_mm)


def _closest_on_segment(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a.copy()
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return a + t * ab


# -- surface regime ---------------------------------------------------------

def _surface_forces(pose: PegPose, hole: HoleSpec, cmd_force_xy, cmd_fz, cfg):
    """Net driving force and chamfer pull for a peg resting on the plate."""
    o = pose.xy_mm - hole.true_center
    dist = float(np.hypot(o[0], o[1]))
    pull = np.zeros(2)
    rc = hole.radial_clearance_mm
    if rc < dist < rc + cfg.chamfer_mm:
        pull = -cfg.chamfer_slope * cmd_fz * o / dist
    net = np.asarray(cmd_force_xy, float) + pull
    return net, pull


def _lateral_velocity(net: np.ndarray, cmd_fz: float, cfg: SimConfig) -> np.ndarray:
    mag = float(np.hypot(net[0], net[1]))
    fric = cfg.friction_mu * cmd_fz
    if mag <= fric:
        return np.zeros(2)
    return cfg.mobility_mm_per_ns * (mag - fric) * net / mag


def _surface_height(xy: np.ndarray, hole: HoleSpec, cfg: SimConfig) -> float:
    o = xy - hole.true_center
    dist = float(np.hypot(o[0], o[1]))
    z = hole.surface_z(xy)
    edge = hole.radial_clearance_mm + cfg.chamfer_mm
    if dist < edge:
        z -= cfg.chamfer_slope * (edge - dist)
    return z


def step_surface(pose: PegPose, hole: HoleSpec, cmd_force_xy, cmd_fz: float, dt: float,
                 cfg: SimConfig | None = None) -> PegPose:
    """Slide the peg over the plate for ``dt`` seconds; drop it in on reaching the clearance circle."""
    cfg = cfg or SimConfig()
    if dt <= 0:
        raise ValueError("dt must be > 0")
    new = pose.copy()
    if pose.engaged:
        return new
    if inside_clearance(pose.xy_mm, hole) and cmd_fz > 0:
        return _drop_in(new, hole, cfg)
    if cmd_fz <= 0:
        return new
    net, _ = _surface_forces(pose, hole, cmd_force_xy, cmd_fz, cfg)
    v = _lateral_velocity(net, cmd_fz, cfg)
    start = pose.xy_mm
    end = start + v * dt
    closest = _closest_on_segment(start, end, hole.true_center)
    if inside_clearance(closest, hole):
        new.xy_mm = closest
        return _drop_in(new, hole, cfg)
    new.xy_mm = end
    new.z_mm = _surface_height(end, hole, cfg)
    return new


def _drop_in(pose: PegPose, hole: HoleSpec, cfg: SimConfig) -> PegPose:
    pose.depth_mm = min(cfg.entry_depth_mm, hole.depth_mm)
    pose.z_mm = -pose.depth_mm
    return pose


def surface_wrench(pose: PegPose, hole: HoleSpec, cmd_force_xy, cmd_fz: float,
                   cfg: SimConfig | None = None) -> ContactWrench:
    """Reaction on the peg while it is pressed on the plate."""
    cfg = cfg or SimConfig()
    if cmd_fz <= 0 or pose.engaged:
        return ContactWrench()
    net, pull = _surface_forces(pose, hole, cmd_force_xy, cmd_fz, cfg)
    v = _lateral_velocity(net, cmd_fz, cfg)
    speed = float(np.hypot(v[0], v[1]))
    if speed == 0.0:
        lateral = -np.asarray(cmd_force_xy, float)
    else:
        lateral = pull - cfg.friction_mu * cmd_fz * v / speed
    m = moment_field(pose.xy_mm - hole.true_center, cmd_fz, hole, cfg)
    return ContactWrench(np.array([lateral[0], lateral[1], cmd_fz]), m)


# -- engaged regime ---------------------------------------------------------

def step_insertion(pose: PegPose, hole: HoleSpec, cmd_fz: float, cmd_rot_xy, dt: float,
                   cfg: SimConfig | None = None) -> tuple[PegPose, ContactWrench]:
    """Advance an engaged peg for ``dt`` seconds.

    ``cmd_rot_xy`` is the tilt increment (deg) applied during this step.  A
    rotation that would push the peg beyond the tilt allowed at its current
    depth is blocked by the bore walls.
    """
    cfg = cfg or SimConfig()
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not pose.engaged:
        raise ValueError("peg is not engaged in the hole")
    new = pose.copy()
    d_rot = np.asarray(cmd_rot_xy, float)
    if np.any(d_rot != 0):
        trial = new.copy()
        trial.rot_xy_deg = new.rot_xy_deg + d_rot
        before = effective_misalignment_deg(new, hole, cfg)
        after = effective_misalignment_deg(trial, hole, cfg)
        limit = jam_angle_deg(hole.clearance_um, hole.diameter_mm, new.depth_mm)
        if after <= before or after < limit:
            new.rot_xy_deg = trial.rot_xy_deg
    if cmd_fz <= 0:
        return new, ContactWrench()

    eff = effective_misalignment_deg(new, hole, cfg)
    reach = min(max_depth_for_tilt(eff, hole.clearance_um, hole.diameter_mm), hole.depth_mm)
    target = new.depth_mm + cfg.insertion_speed_mm_per_ns * cmd_fz * dt
    jammed = reach <= new.depth_mm
    if not jammed:
        new.depth_mm = min(target, reach)
    new.z_mm = -new.depth_mm
    blocked = jammed or new.depth_mm >= hole.depth_mm
    fz_react = cmd_fz if blocked else cfg.insertion_drag_ratio * cmd_fz
    mis = new.rot_xy_deg - hole.axis_rot_deg
    m = -cfg.align_moment_gain * fz_react * mis
    return new, ContactWrench(np.array([0.0, 0.0, fz_react]), m, jammed=jammed)


def is_jammed(pose: PegPose, hole: HoleSpec, cfg: SimConfig | None = None) -> bool:
    cfg = cfg or SimConfig()
    eff = effective_misalignment_deg(pose, hole, cfg)
    return max_depth_for_tilt(eff, hole.clearance_um, hole.diameter_mm) <= pose.depth_mm


# -- sensing ----------------------------------------------------------------

def quantize(x, step: float):
    """Round half away from zero onto a grid of ``step``."""
    x = np.asarray(x, float)
    return np.sign(x) * np.floor(np.abs(x) / step + 0.5) * step


def sensor_read(truth: ContactWrench, pose: PegPose, rng: np.random.Generator | None = None,
                pos_bias_mm=(0.0, 0.0, 0.0), cfg: SimConfig | None = None) -> np.ndarray:
    """One raw 2 ms sample ``[Fx, Fy, Fz, Mx, My, Px, Py, Pz]``.

    Forces get Gaussian noise and are then quantised to the sensor
    resolution; moments get Gaussian noise; positions carry the episode bias
    plus Gaussian noise.
    """
    cfg = cfg or SimConfig()
    f = np.array(truth.force_n, dtype=float)
    m = np.array(truth.moment_nm, dtype=float)
    p = np.array([pose.xy_mm[0], pose.xy_mm[1], pose.z_mm]) + np.asarray(pos_bias_mm, float)
    if rng is not None:
        if cfg.sigma_force_n > 0:
            f = f + rng.normal(0.0, cfg.sigma_force_n, 3)
        if cfg.sigma_moment_nm > 0:
            m = m + rng.normal(0.0, cfg.sigma_moment_nm, 2)
        if cfg.sigma_pos_mm > 0:
            p = p + rng.normal(0.0, cfg.sigma_pos_mm, 3)
    f = quantize(f, cfg.force_resolution_n)
    return np.concatenate([f, m, p])


# -- episode-level simulator -----------------------------------------------

@dataclass
class ResetSpec:
    """Episode initial condition, relative to the true hole centre."""
    offset_xy_mm: tuple = (1.0, 0.0)
    clearance_um: float = 10.0
    tilt_deg: float = 0.0
    tilt_azimuth_deg: float = 0.0
    rot_xy_deg: tuple = (0.0, 0.0)
    engaged_depth_mm: float = 0.0
    seed: int = 0

    def as_floats(self) -> list[float]:
        return [float(self.offset_xy_mm[0]), float(self.offset_xy_mm[1]), float(self.clearance_um),
                float(self.tilt_deg), float(self.tilt_azimuth_deg), float(self.rot_xy_deg[0]),
                float(self.rot_xy_deg[1]), float(self.engaged_depth_mm), float(self.seed)]

    @classmethod
    def from_floats(cls, v) -> "ResetSpec":
        v = [float(x) for x in v]
        if len(v) != 9:
            raise ValueError(f"reset spec needs 9 values, got {len(v)}")
        return cls((v[0], v[1]), v[2], v[3], v[4], (v[5], v[6]), v[7], int(v[8]))


class Simulator:
    """Ground-truth peg/hole state, stepped in sensor-sample increments.

    :meth:`run_cycle` is the hot path used by the controller.  It does the
    same physics as :func:`step_surface`, :func:`surface_wrench` and
    :func:`step_insertion` with plain floats, and draws a whole cycle's
    sensor noise in one call.
    """

    def __init__(self, cfg: SimConfig | None = None, hole: HoleSpec | None = None):
        self.cfg = cfg or SimConfig()
        self.hole = hole or HoleSpec()
        self.pose = PegPose()
        self.rng = np.random.default_rng(0)
        self.pos_bias = np.zeros(3)
        self.wrench = ContactWrench()
        self._cache_geometry()

    def _cache_geometry(self) -> None:
        h, c = self.hole, self.cfg
        self._cx, self._cy = (float(v) for v in h.true_center)
        self._rc = h.radial_clearance_mm
        self._edge = self._rc + c.chamfer_mm
        self._reach = h.peg_radius_mm + self._rc
        ax, ay = (float(v) for v in h.axis_rot_deg)
        self._axis = (ax, ay)
        self._tan = (math.tan(math.radians(ax)), math.tan(math.radians(ay)))
        self._sigma = np.array([c.sigma_force_n] * 3 + [c.sigma_moment_nm] * 2 + [c.sigma_pos_mm] * 3)

    def reset(self, spec: ResetSpec) -> None:
        self.hole = replace(self.hole, clearance_um=spec.clearance_um, tilt_deg=spec.tilt_deg,
                            tilt_azimuth_deg=spec.tilt_azimuth_deg)
        self._cache_geometry()
        self.rng = np.random.default_rng(spec.seed)
        b = self.cfg.pos_bias_mm
        self.pos_bias = self.rng.uniform(-b, b, 3) if b > 0 else np.zeros(3)
        c = self.hole.true_center
        if spec.engaged_depth_mm > 0:
            depth = min(spec.engaged_depth_mm, self.hole.depth_mm)
            self.pose = PegPose(c.copy(), -depth, spec.rot_xy_deg, depth)
        else:
            xy = c + np.asarray(spec.offset_xy_mm, float)
            self.pose = PegPose(xy, _surface_height(xy, self.hole, self.cfg), spec.rot_xy_deg, 0.0)
        self.wrench = ContactWrench()

    def substep(self, fd_xyz, rot_increment_xy, dt: float) -> ContactWrench:
        """Apply one sample period of a command via the reference step functions."""
        fd = np.asarray(fd_xyz, float)
        press = -fd[2]
        if self.pose.engaged:
            self.pose, self.wrench = step_insertion(self.pose, self.hole, max(press, 0.0),
                                                    rot_increment_xy, dt, self.cfg)
        else:
            d_rot = np.asarray(rot_increment_xy, float)
            if np.any(d_rot != 0):
                self.pose.rot_xy_deg = self.pose.rot_xy_deg + d_rot
            self.pose = step_surface(self.pose, self.hole, fd[:2], press, dt, self.cfg)
            if self.pose.engaged:
                self.wrench = ContactWrench(np.array([0.0, 0.0, press]), np.zeros(2))
            else:
                self.wrench = surface_wrench(self.pose, self.hole, fd[:2], press, self.cfg)
        return self.wrench

    def sample(self) -> np.ndarray:
        return sensor_read(self.wrench, self.pose, self.rng, self.pos_bias, self.cfg)

    # -- fast path ----------------------------------------------------------

    def run_cycle(self, fd_xyz, rot_increment_xy, n: int, dt: float) -> np.ndarray:
        """Run ``n`` samples of one command; return noisy raw samples of shape (n, 8)."""
        if dt <= 0:
            raise ValueError("dt must be > 0")
        fx, fy, fz = (float(v) for v in fd_xyz)
        drx, dry = (float(v) for v in rot_increment_xy)
        press = -fz
        p = self.pose
        st = [float(p.xy_mm[0]), float(p.xy_mm[1]), float(p.z_mm),
              float(p.rot_xy_deg[0]), float(p.rot_xy_deg[1]), float(p.depth_mm)]
        truth = np.empty((n, N_SAMPLE_CHANNELS))
        jammed = False
        for i in range(n):
            if st[5] > 0:
                w, jammed = self._insertion_kernel(st, max(press, 0.0), drx, dry, dt)
            else:
                st[3] += drx
                st[4] += dry
                w = self._surface_kernel(st, fx, fy, press, dt)
            truth[i, :5] = w
            truth[i, 5:] = st[:3]
        p.xy_mm = np.array(st[:2])
        p.z_mm, p.depth_mm = st[2], st[5]
        p.rot_xy_deg = np.array(st[3:5])
        self.wrench = ContactWrench(truth[-1, :3].copy(), truth[-1, 3:5].copy(), jammed)
        return self._sense(truth)

    def _sense(self, truth: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        out = truth + self.rng.standard_normal(truth.shape) * self._sigma
        out[:, 5:] += self.pos_bias
        out[:, :3] = quantize(out[:, :3], cfg.force_resolution_n)
        return out

    def _surface_kernel(self, st: list, fx: float, fy: float, press: float, dt: float) -> tuple:
        cfg = self.cfg
        if press <= 0:
            return (0.0, 0.0, 0.0, 0.0, 0.0)
        x, y = st[0], st[1]
        cx, cy, rc = self._cx, self._cy, self._rc
        if math.hypot(x - cx, y - cy) <= rc:
            return self._drop(st, press)
        vx, vy, _, _ = self._velocity(x, y, fx, fy, press)
        ex, ey = x + vx * dt, y + vy * dt
        dx, dy = ex - x, ey - y
        den = dx * dx + dy * dy
        if den > 0.0:
            t = min(max(((cx - x) * dx + (cy - y) * dy) / den, 0.0), 1.0)
            qx, qy = x + t * dx, y + t * dy
            if math.hypot(qx - cx, qy - cy) <= rc:
                st[0], st[1] = qx, qy
                return self._drop(st, press)
        st[0], st[1] = ex, ey
        ox, oy = ex - cx, ey - cy
        dist = math.hypot(ox, oy)
        z = self._tan[0] * oy - self._tan[1] * ox
        if dist < self._edge:
            z -= cfg.chamfer_slope * (self._edge - dist)
        st[2] = z
        # reaction at the new position
        vx, vy, px, py = self._velocity(ex, ey, fx, fy, press)
        speed = math.hypot(vx, vy)
        if speed == 0.0:
            lx, ly = -fx, -fy
        else:
            f = cfg.friction_mu * press / speed
            lx, ly = px - f * vx, py - f * vy
        mx = my = 0.0
        if dist > rc:
            frac = min(max(1.0 - dist / self._reach, 0.0), 1.0)
            mag = cfg.moment_gain * max(press - cfg.moment_preload_n, 0.0) * frac
            if mag:
                mx, my = mag * oy / dist, -mag * ox / dist
        return (lx, ly, press, mx, my)

    def _velocity(self, x, y, fx, fy, press):
        cfg = self.cfg
        ox, oy = x - self._cx, y - self._cy
        dist = math.hypot(ox, oy)
        px = py = 0.0
        if self._rc < dist < self._edge:
            k = -cfg.chamfer_slope * press / dist
            px, py = k * ox, k * oy
        nx, ny = fx + px, fy + py
        mag = math.hypot(nx, ny)
        fric = cfg.friction_mu * press
        if mag <= fric:
            return 0.0, 0.0, px, py
        k = cfg.mobility_mm_per_ns * (mag - fric) / mag
        return k * nx, k * ny, px, py

    def _drop(self, st: list, press: float) -> tuple:
        st[5] = min(self.cfg.entry_depth_mm, self.hole.depth_mm)
        st[2] = -st[5]
        return (0.0, 0.0, press, 0.0, 0.0)

    def _misalign(self, rx: float, ry: float) -> float:
        return max(math.hypot(rx - self._axis[0], ry - self._axis[1]) - self.cfg.grip_compliance_deg, 0.0)

    def _insertion_kernel(self, st: list, press: float, drx: float, dry: float, dt: float):
        cfg, h = self.cfg, self.hole
        if drx or dry:
            before = self._misalign(st[3], st[4])
            after = self._misalign(st[3] + drx, st[4] + dry)
            if after <= before or after < jam_angle_deg(h.clearance_um, h.diameter_mm, st[5]):
                st[3] += drx
                st[4] += dry
        if press <= 0:
            return (0.0, 0.0, 0.0, 0.0, 0.0), False
        eff = self._misalign(st[3], st[4])
        reach = min(max_depth_for_tilt(eff, h.clearance_um, h.diameter_mm), h.depth_mm)
        jammed = reach <= st[5]
        if not jammed:
            st[5] = min(st[5] + cfg.insertion_speed_mm_per_ns * press * dt, reach)
        st[2] = -st[5]
        blocked = jammed or st[5] >= h.depth_mm
        fz = press if blocked else cfg.insertion_drag_ratio * press
        k = -cfg.align_moment_gain * fz
        return (0.0, 0.0, fz, k * (st[3] - self._axis[0]), k * (st[4] - self._axis[1])), jammed
