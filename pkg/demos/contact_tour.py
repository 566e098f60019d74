"""A guided look at the simulated peg: the moment field, then sliding into the hole and wedging.

Run:  python demos/contact_tour.py
"""
import numpy as np

from peginhole.contact_sim import ResetSpec, SimConfig, jam_angle_deg, moment_field
from peginhole.controller import Controller
from peginhole.env import InProcessTransport, PegEnv, insertion_spec, search_spec

cfg = SimConfig()
print("Moment seen by the wrist sensor 1.1 mm from the hole centre:")
for fz in (10.0, 20.0):
    m = moment_field((1.1, 0.0), fz)
    print(f"  Fz={fz:4.1f} N  |M|={np.linalg.norm(m):.4f} N·m  SNR={np.linalg.norm(m) / cfg.sigma_moment_nm:.2f}")
print("Pressing harder makes the hole visible.  The moment points across the offset,")
print("so a policy can read the direction to the hole from (Mx, My).\n")

env = PegEnv(InProcessTransport(Controller()), search_spec())
s = env.reset(ResetSpec((1.0, 0.0), seed=1))
print("Search from 1 mm on +x, always pushing -x:")
while not env.done:
    res = env.step(1)
    if env.k % 4 == 0 or env.done:
        f = res.frame
        print(f"  cycle {env.k:3d}  x={f.pos_mm[0]:+.3f} mm  z={f.pos_mm[2]:+.3f} mm  My={f.moments_nm[1]:+.4f}")
print(f"  -> {res.record.terminal_kind.value} after {env.k} actions, reward {res.reward:.2f}\n")

print("Wedging angle of a 35 mm peg with 10 µm clearance:")
for depth in (1.0, 5.0, 19.0):
    print(f"  engaged {depth:4.1f} mm -> jams beyond {jam_angle_deg(10.0, 35.0, depth):.3f}°")

ins = PegEnv(InProcessTransport(Controller()), insertion_spec())
ins.reset(ResetSpec(engaged_depth_mm=0.6, tilt_deg=1.6, clearance_um=20.0, seed=3))
while not ins.done:
    res = ins.step(0)
print(f"\nPushing straight down into a hole tilted 1.6°: {res.record.terminal_kind.value} after {ins.k} cycles, "
      f"depth {ins.z_surface - res.frame.pos_mm[2]:.2f} mm")
