"""Drive the simulated robot over UDP while a lossy link drops one datagram in ten.

Run:  python demos/udp_robot.py
"""
import socket

import numpy as np

from peginhole.contact_sim import ResetSpec
from peginhole.controller import Controller
from peginhole.env import PegEnv, search_spec
from peginhole.robot_service import LossySocket, RobotServer, UdpClient, UdpTransport

server = RobotServer(Controller(), ("127.0.0.1", 0))
thread = server.start_thread()
print("robot service on %s:%d" % server.address)

raw = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
raw.bind(("127.0.0.1", 0))
link = LossySocket(raw, loss=0.1, rng=np.random.default_rng(0))
client = UdpClient(server.address, timeout_s=0.02, attempts=10, sock=link)

env = PegEnv(UdpTransport(client), search_spec())
env.reset(ResetSpec((0.0, 1.0), seed=5))
while not env.done:
    res = env.step(3)        # push -y toward the hole
print(f"episode over UDP: {res.record.terminal_kind.value} in {env.k} actions")
print(f"link dropped {link.dropped} datagrams; client retried {client.retries} times; "
      f"server answered {server.replayed} repeats from its cache")

client.close()
server.shutdown()
thread.join()
server.close()
