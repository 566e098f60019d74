"""Train the search policy for a few dozen episodes and summarise the learning curve.

A full run uses 230 episodes (see ``peginhole train``).  This one is short so it
finishes in under a minute.

Run:  python demos/short_training.py [episodes]
"""
import sys
import tempfile
from pathlib import Path

from peginhole.agent import HyperParams, make_rngs, train_phase, write_episode_csv
from peginhole.env import InProcessTransport, PegEnv, search_spec
from peginhole.lstm_q import QNetwork
from peginhole.report import write_report

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 40
hp = HyperParams(episodes_M=episodes)
rngs = make_rngs(0)
net = QNetwork(7, hp.h1, hp.h2, 4, rng=rngs["init"])
env = PegEnv(InProcessTransport(), search_spec(1.0, 3.0))
logs, learner = train_phase(env, net, hp, rngs, stage_name="search_stage1")
for lg in logs[:: max(1, episodes // 10)]:
    print(f"episode {lg.episode:3d}  eps={lg.epsilon:.2f}  steps={lg.steps:3d}  reward={lg.reward:+.2f}  "
          f"{lg.terminal_kind}")

out = Path(tempfile.mkdtemp(prefix="peginhole_demo_"))
write_episode_csv(out / "episodes.csv", logs)
summary = write_report(out, window=10, plot=False)["search_stage1"]
print(f"\n{learner.updates} learning updates; last-10 mean reward {summary['final_reward_mean']:+.3f}, "
      f"steps {summary['final_steps_mean']:.1f}; curve written to {out}")
