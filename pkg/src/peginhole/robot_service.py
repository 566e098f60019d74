"""UDP front end for the controller, plus the matching client and a loss injector.

Wire format (all little-endian)::

    magic  4 bytes  b"PGH1"
    type   u8       1 POLL_REQ  2 POLL_RESP  3 ACTION_REQ  4 ACTION_ACK
                    5 RESET_REQ 6 RESET_ACK  7 ERROR
    seq    u32
    payload         float64 fields, count fixed per type (ERROR: utf-8 text)

POLL_RESP carries ``Fx Fy Fz Mx My Px Py Pz cycle``; ACTION_REQ carries the
5-component action; ACTION_ACK carries the cycle the action was latched in;
RESET_REQ carries either nothing (server picks a random start) or the nine
:class:`~peginhole.contact_sim.ResetSpec` fields.

Every response echoes the request's seq.  The server remembers the last
request and response per client, so a retransmitted request is answered
from that cache instead of being executed twice.
"""
from __future__ import annotations

import logging
import math
import os
import socket
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .contact_sim import ResetSpec
from .controller import ActionVector, Controller, ProtocolError, SensorFrame
from .env import TransportError

log = logging.getLogger(__name__)

MAGIC = b"PGH1"
HEADER = struct.Struct("<4sBI")
MAX_DATAGRAM = 1024
BIND_ENV = "PEGINHOLE_BIND"


class MsgType(IntEnum):
    POLL_REQ = 1
    POLL_RESP = 2
    ACTION_REQ = 3
    ACTION_ACK = 4
    RESET_REQ = 5
    RESET_ACK = 6
    ERROR = 7


PAYLOAD_FLOATS = {
    MsgType.POLL_REQ: (0,),
    MsgType.POLL_RESP: (9,),
    MsgType.ACTION_REQ: (5,),
    MsgType.ACTION_ACK: (1,),
    MsgType.RESET_REQ: (0, 9),
    MsgType.RESET_ACK: (0,),
}


@dataclass(frozen=True)
class Datagram:
    msg_type: MsgType
    seq: int
    payload: tuple = ()          # floats, or a str for ERROR

    def __eq__(self, other):
        if not isinstance(other, Datagram):
            return NotImplemented
        if (self.msg_type, self.seq) != (other.msg_type, other.seq):
            return False
        if self.msg_type is MsgType.ERROR:
            return self.payload == other.payload
        a = np.asarray(self.payload, float)
        b = np.asarray(other.payload, float)
        return a.shape == b.shape and a.tobytes() == b.tobytes()

    def __hash__(self):
        return hash((self.msg_type, self.seq))


def encode(d: Datagram) -> bytes:
    mt = MsgType(d.msg_type)
    if not 0 <= d.seq < 2 ** 32:
        raise ProtocolError("seq must fit in u32")
    head = HEADER.pack(MAGIC, int(mt), d.seq)
    if mt is MsgType.ERROR:
        return head + str(d.payload).encode("utf-8")
    vals = np.asarray(d.payload, dtype="<f8").reshape(-1)
    if vals.size not in PAYLOAD_FLOATS[mt]:
        raise ProtocolError(f"{mt.name} needs {PAYLOAD_FLOATS[mt]} floats, got {vals.size}")
    return head + vals.tobytes()


def decode_header(data: bytes) -> tuple[int, int]:
    if len(data) < HEADER.size:
        raise ProtocolError("datagram shorter than header")
    magic, mt, seq = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ProtocolError("bad magic")
    return mt, seq


def decode(data: bytes) -> Datagram:
    mt_raw, seq = decode_header(data)
    try:
        mt = MsgType(mt_raw)
    except ValueError:
        raise ProtocolError(f"unknown message type {mt_raw}") from None
    body = data[HEADER.size:]
    if mt is MsgType.ERROR:
        return Datagram(mt, seq, body.decode("utf-8", errors="replace"))
    if len(body) % 8:
        raise ProtocolError(f"{mt.name} payload is not a whole number of float64")
    n = len(body) // 8
    if n not in PAYLOAD_FLOATS[mt]:
        raise ProtocolError(f"{mt.name} needs {PAYLOAD_FLOATS[mt]} floats, got {n}")
    return Datagram(mt, seq, tuple(np.frombuffer(body, "<f8").tolist()))


def parse_address(text: str, default_port: int = 9870) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host:
        return port or "127.0.0.1", default_port
    return host, int(port)


# -- fault injection --------------------------------------------------------

class LossySocket:
    """Wraps a UDP socket and randomly drops or duplicates datagrams in both directions."""

    def __init__(self, sock: socket.socket, loss: float = 0.0, duplicate: float = 0.0,
                 rng: np.random.Generator | None = None):
        self.sock = sock
        self.loss = loss
        self.duplicate = duplicate
        self.rng = rng or np.random.default_rng()
        self.dropped = 0

    def sendto(self, data: bytes, addr) -> int:
        if self.rng.random() < self.loss:
            self.dropped += 1
            return len(data)
        n = self.sock.sendto(data, addr)
        if self.rng.random() < self.duplicate:
            self.sock.sendto(data, addr)
        return n

    def recvfrom(self, size: int):
        while True:
            data, addr = self.sock.recvfrom(size)
            if self.rng.random() < self.loss:
                self.dropped += 1
                continue
            return data, addr

    def __getattr__(self, name):
        return getattr(self.sock, name)


# -- server -----------------------------------------------------------------

class RobotServer:
    """Answers datagrams against one controller, one request at a time."""

    def __init__(self, controller: Controller | None = None, bind=("127.0.0.1", 0),
                 default_d0_mm: float = 1.0, seed: int = 0, sock=None):
        self.controller = controller or Controller()
        self.default_d0_mm = default_d0_mm
        self.rng = np.random.default_rng(seed)
        if sock is None:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            try:
                sock.bind(bind)
            except OSError:
                sock.close()
                raise
        self.sock = sock
        self.sock.settimeout(0.05)
        self._stop = threading.Event()
        self._last: dict = {}
        self.handled = 0
        self.replayed = 0

    @property
    def address(self):
        return self.sock.getsockname()

    def _random_reset(self) -> ResetSpec:
        ang = 2 * math.pi * int(self.rng.integers(16)) / 16
        d0 = self.default_d0_mm
        hole = self.controller.sim.hole
        return ResetSpec((d0 * math.cos(ang), d0 * math.sin(ang)), hole.clearance_um, hole.tilt_deg,
                         hole.tilt_azimuth_deg, (0.0, 0.0), 0.0, int(self.rng.integers(2 ** 31)))

    def handle(self, data: bytes, peer=None) -> bytes:
        """Response bytes for one request datagram."""
        try:
            _, seq = decode_header(data)
        except ProtocolError as exc:
            return encode(Datagram(MsgType.ERROR, 0, str(exc)))
        cached = self._last.get(peer)
        if cached is not None and cached[0] == data:
            self.replayed += 1
            return cached[1]
        try:
            req = decode(data)
            resp = self._dispatch(req)
        except (ProtocolError, ValueError, RuntimeError) as exc:
            resp = Datagram(MsgType.ERROR, seq, str(exc))
        out = encode(resp)
        self._last[peer] = (data, out)
        self.handled += 1
        return out

    def _dispatch(self, req: Datagram) -> Datagram:
        ctl = self.controller
        if req.msg_type is MsgType.POLL_REQ:
            return Datagram(MsgType.POLL_RESP, req.seq, tuple(ctl.poll().as_array()))
        if req.msg_type is MsgType.ACTION_REQ:
            cycle = ctl.submit_action(ActionVector.from_array(req.payload))
            return Datagram(MsgType.ACTION_ACK, req.seq, (float(cycle),))
        if req.msg_type is MsgType.RESET_REQ:
            spec = ResetSpec.from_floats(req.payload) if req.payload else self._random_reset()
            ctl.reset(spec)
            return Datagram(MsgType.RESET_ACK, req.seq)
        raise ProtocolError(f"{req.msg_type.name} is not a request")

    def serve_forever(self) -> None:
        log.info("robot service listening on %s:%d", *self.address)
        while not self._stop.is_set():
            try:
                data, peer = self.sock.recvfrom(MAX_DATAGRAM)
            except socket.timeout:
                continue
            except OSError:
                if self._stop.is_set():
                    break
                raise
            self.sock.sendto(self.handle(data, peer), peer)

    def shutdown(self) -> None:
        self._stop.set()

    def close(self) -> None:
        self._stop.set()
        self.sock.close()

    def start_thread(self) -> threading.Thread:
        th = threading.Thread(target=self.serve_forever, daemon=True)
        th.start()
        return th


def serve(bind_address, sim_config=None, hole=None, seed: int = 0, stop: threading.Event | None = None) -> None:
    """Run a robot service until ``stop`` is set (or forever)."""
    from .contact_sim import Simulator

    if isinstance(bind_address, str):
        bind_address = parse_address(bind_address)
    server = RobotServer(Controller(Simulator(sim_config, hole)), bind_address, seed=seed)
    if stop is not None:
        threading.Thread(target=lambda: (stop.wait(), server.shutdown()), daemon=True).start()
    try:
        server.serve_forever()
    finally:
        server.close()


# -- client -----------------------------------------------------------------

class UdpClient:
    """Blocking request/response client with timeout, retries and stale-seq filtering."""

    def __init__(self, server_addr, timeout_s: float = 0.1, attempts: int = 5, sock=None):
        if isinstance(server_addr, str):
            server_addr = parse_address(server_addr)
        self.server_addr = tuple(server_addr)
        self.timeout_s = timeout_s
        self.attempts = attempts
        if sock is None:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            sock.bind(("127.0.0.1" if self.server_addr[0] in ("127.0.0.1", "localhost") else "", 0))
        self.sock = sock
        self.sock.settimeout(timeout_s)
        self.seq = 0
        self.retries = 0
        self.stale = 0

    def roundtrip(self, msg_type: MsgType, payload=()) -> Datagram:
        self.seq = (self.seq + 1) % 2 ** 32
        req = encode(Datagram(msg_type, self.seq, payload))
        for attempt in range(self.attempts):
            if attempt:
                self.retries += 1
            self.sock.sendto(req, self.server_addr)
            try:
                resp = self._await(self.seq)
            except socket.timeout:
                continue
            if resp.msg_type is MsgType.ERROR:
                raise ProtocolError(f"server error: {resp.payload}")
            return resp
        raise TransportError(f"no response to {msg_type.name} seq={self.seq} after {self.attempts} attempts")

    def _await(self, seq: int) -> Datagram:
        while True:
            data, _ = self.sock.recvfrom(MAX_DATAGRAM)
            try:
                resp = decode(data)
            except ProtocolError:
                self.stale += 1
                continue
            if resp.seq != seq:
                self.stale += 1
                continue
            return resp

    def close(self) -> None:
        self.sock.close()


class UdpTransport:
    """Environment transport talking to a :class:`RobotServer`."""

    def __init__(self, client: UdpClient):
        self.client = client

    def reset(self, spec: ResetSpec | None) -> None:
        self.client.roundtrip(MsgType.RESET_REQ, () if spec is None else spec.as_floats())

    def submit(self, action: ActionVector) -> None:
        self.client.roundtrip(MsgType.ACTION_REQ, tuple(action.as_array()))

    def poll(self) -> SensorFrame:
        return SensorFrame.from_array(self.client.roundtrip(MsgType.POLL_REQ).payload)

    def close(self) -> None:
        self.client.close()


def default_bind() -> str:
    return os.environ.get(BIND_ENV, "127.0.0.1:9870")
