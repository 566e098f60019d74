"""Two-layer LSTM Q-network in plain numpy: forward, BPTT and the Q-learning SGD step.

Parameters live in one flat float64 vector ``theta`` with named views into
it, which keeps SGD, gradient clipping and serialisation trivial.

Gate layout inside each LSTM weight matrix is ``[input, forget, output,
candidate]`` along the first axis; weights act on ``[x_t, h_{t-1}]``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

WEIGHT_MAGIC = b"PGHQ"
WEIGHT_VERSION = 1
DEFAULT_INPUT_SCALE = (10.0, 10.0, 20.0, 0.05, 0.05, 5.0, 5.0)


class TrainingError(FloatingPointError):
    """Non-finite values appeared during a parameter update."""


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class RecurrentState:
    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray

    @classmethod
    def zeros(cls, h1: int, h2: int, batch: int | None = None) -> "RecurrentState":
        s1 = (h1,) if batch is None else (batch, h1)
        s2 = (h2,) if batch is None else (batch, h2)
        return cls(np.zeros(s1), np.zeros(s1), np.zeros(s2), np.zeros(s2))


class QNetwork:
    def __init__(self, n_in: int = 7, h1: int = 20, h2: int = 15, n_actions: int = 4,
                 rng: np.random.Generator | None = None, input_scale=None):
        self.n_in, self.h1, self.h2, self.n_actions = int(n_in), int(h1), int(h2), int(n_actions)
        if input_scale is None:
            input_scale = DEFAULT_INPUT_SCALE if n_in == len(DEFAULT_INPUT_SCALE) else np.ones(n_in)
        self.input_scale = np.array(input_scale, dtype=float)
        if self.input_scale.shape != (self.n_in,) or np.any(self.input_scale <= 0):
            raise ValueError("input_scale must be positive with one entry per input")
        self._shapes = [
            ("W1", (4 * self.h1, self.n_in + self.h1)), ("b1", (4 * self.h1,)),
            ("W2", (4 * self.h2, self.h1 + self.h2)), ("b2", (4 * self.h2,)),
            ("Wq", (self.n_actions, self.h2)), ("bq", (self.n_actions,)),
        ]
        self.theta = np.zeros(sum(int(np.prod(s)) for _, s in self._shapes))
        self._bind()
        if rng is not None:
            self.init_params(rng)

    def _bind(self):
        off = 0
        for name, shape in self._shapes:
            n = int(np.prod(shape))
            setattr(self, name, self.theta[off:off + n].reshape(shape))
            off += n

    def views(self, flat: np.ndarray) -> dict:
        out, off = {}, 0
        for name, shape in self._shapes:
            n = int(np.prod(shape))
            out[name] = flat[off:off + n].reshape(shape)
            off += n
        return out

    @property
    def n_params(self) -> int:
        return self.theta.size

    def init_params(self, rng: np.random.Generator) -> None:
        """Uniform(±1/sqrt(fan_in)) weights, zero biases, forget-gate bias +1."""
        for W, fan_in in ((self.W1, self.n_in + self.h1), (self.W2, self.h1 + self.h2), (self.Wq, self.h2)):
            lim = 1.0 / np.sqrt(fan_in)
            W[...] = rng.uniform(-lim, lim, W.shape)
        self.b1[...] = 0.0
        self.b2[...] = 0.0
        self.bq[...] = 0.0
        self.b1[self.h1:2 * self.h1] = 1.0
        self.b2[self.h2:2 * self.h2] = 1.0

    def copy(self) -> "QNetwork":
        net = QNetwork(self.n_in, self.h1, self.h2, self.n_actions, input_scale=self.input_scale)
        net.theta[...] = self.theta
        return net

    def load_theta(self, theta: np.ndarray) -> None:
        self.theta[...] = theta

    # -- forward ------------------------------------------------------------

    def forward_batch(self, X: np.ndarray, mask: np.ndarray | None = None, keep_cache: bool = False):
        """Run a batch of sequences.

        ``X`` has shape (B, T, n_in); ``mask`` (B, T) marks real steps with 1.
        Padded steps leave the recurrent state untouched, so left padding is
        equivalent to starting the sequence later.  Returns the top-layer
        hidden states (B, T, h2) and, if requested, the cache for BPTT.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 3 or X.shape[2] != self.n_in:
            raise ValueError(f"expected input of shape (B, T, {self.n_in}), got {X.shape}")
        B, T, _ = X.shape
        if mask is None:
            mask = np.ones((B, T))
        Xs = X / self.input_scale
        H1, c1s1 = self._layer_forward(self.W1, self.b1, self.h1, Xs, mask, keep_cache)
        H2, c1s2 = self._layer_forward(self.W2, self.b2, self.h2, H1, mask, keep_cache)
        cache = (Xs, mask, H1, c1s1, H2, c1s2) if keep_cache else None
        return H2, cache

    @staticmethod
    def _layer_forward(W, b, H, inputs, mask, keep_cache):
        B, T, _ = inputs.shape
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, T, H))
        steps = []
        n_x = inputs.shape[2]
        Wx, Wh = W[:, :n_x], W[:, n_x:]
        zx = inputs @ Wx.T + b
        for t in range(T):
            z = zx[:, t] + h @ Wh.T
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            o = sigmoid(z[:, 2 * H:3 * H])
            g = np.tanh(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            m = mask[:, t:t + 1]
            if keep_cache:
                steps.append((h, c, i, f, o, g, tc))
            c = m * c_new + (1.0 - m) * c
            h = m * h_new + (1.0 - m) * h
            hs[:, t] = h
        return hs, steps

    def q_batch(self, X, mask=None) -> np.ndarray:
        """Q-values at every step, shape (B, T, n_actions)."""
        H2, _ = self.forward_batch(X, mask)
        return H2 @ self.Wq.T + self.bq

    def forward(self, state_seq) -> tuple[np.ndarray, RecurrentState]:
        """Q-values after feeding ``state_seq`` from a zero recurrent state."""
        X = np.asarray(state_seq, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("state sequence must be a non-empty (T, n_in) array")
        if X.shape[1] != self.n_in:
            raise ValueError(f"state dimension {X.shape[1]} != {self.n_in}")
        H2, cache = self.forward_batch(X[None], keep_cache=True)
        _, _, H1, st1, _, st2 = cache
        f1, f2 = st1[-1], st2[-1]
        c1 = f1[3] * f1[1] + f1[2] * f1[5]
        c2 = f2[3] * f2[1] + f2[2] * f2[5]
        state = RecurrentState(H1[0, -1].copy(), c1[0], H2[0, -1].copy(), c2[0])
        return H2[0, -1] @ self.Wq.T + self.bq, state

    # -- backward -----------------------------------------------------------

    def grad_q(self, X, mask, pos, actions, weights, cache=None) -> np.ndarray:
        """Gradient of ``sum_b weights[b] * Q(X[b, :pos+1], actions[b])`` w.r.t. ``theta``.

        ``cache`` may be passed from an earlier ``forward_batch(..., keep_cache=True)``
        on the same inputs to skip the forward pass.
        """
        if cache is None:
            _, cache = self.forward_batch(X, mask, keep_cache=True)
        Xs, mask, H1, st1, H2, st2 = cache
        grad = np.zeros_like(self.theta)
        gv = self.views(grad)
        actions = np.asarray(actions, dtype=int)
        weights = np.asarray(weights, dtype=float)
        h_top = H2[:, pos]
        np.add.at(gv["bq"], actions, weights)
        np.add.at(gv["Wq"], actions, weights[:, None] * h_top)
        dH2 = np.zeros_like(H2)
        dH2[:, pos] = weights[:, None] * self.Wq[actions]
        dH1 = self._layer_backward(self.W2, self.h2, H1, mask, st2, dH2, gv["W2"], gv["b2"], pos, True)
        self._layer_backward(self.W1, self.h1, Xs, mask, st1, dH1, gv["W1"], gv["b1"], pos, False)
        return grad

    @staticmethod
    def _layer_backward(W, H, inputs, mask, steps, dHs, dW, db, last, need_dx):
        B, T, n_x = inputs.shape
        dh_rec = np.zeros((B, H))
        dc_rec = np.zeros((B, H))
        dX = np.zeros((B, T, n_x)) if need_dx else None
        dZ = np.zeros((B, T, 4 * H))
        Wh = W[:, n_x:]
        for t in range(last, -1, -1):
            h_prev, c_prev, i, f, o, g, tc = steps[t]
            m = mask[:, t:t + 1]
            dh = dHs[:, t] + dh_rec
            dh_new = m * dh
            dc_new = m * dc_rec
            do = dh_new * tc
            dc = dc_new + dh_new * o * (1.0 - tc * tc)
            dz = dZ[:, t]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = do * o * (1.0 - o)
            dz[:, 3 * H:] = dc * i * (1.0 - g * g)
            dc_rec = dc * f + (1.0 - m) * dc_rec
            dh_rec = dz @ Wh + (1.0 - m) * dh
        h_prevs = np.stack([s[0] for s in steps[:last + 1]], axis=1)
        xh = np.concatenate([inputs[:, :last + 1], h_prevs], axis=2)
        dZl = dZ[:, :last + 1]
        dW += dZl.reshape(-1, dZl.shape[-1]).T @ xh.reshape(-1, xh.shape[-1])
        db += dZl.sum(axis=(0, 1))
        if need_dx:
            dX[:, :last + 1] = dZl @ W[:, :n_x]
        return dX

    def q_values(self, window) -> np.ndarray:
        return self.forward(window)[0]

    def td_update(self, X, mask, actions, rewards, terminals, gamma: float, alpha: float,
                  clip_norm: float | None = 1.0, target: "QNetwork | None" = None, optimizer=None) -> float:
        """Q-learning step on a batch of windows ending ``[..., s, s']``.

        One forward pass gives both ``Q(s, .)`` (second to last step) and the
        bootstrap ``max Q(s', .)`` (last step, no gradient).  The step is the
        batch mean of ``(target - Q(s, a)) * dQ(s, a)/dtheta``.  Returns the
        mean squared TD loss before the update.  With ``target`` given, the
        bootstrap comes from that frozen copy instead.  ``optimizer`` (e.g.
        :class:`Adam`) rescales the clipped gradient before the step.
        """
        X = np.asarray(X, dtype=float)
        T = X.shape[1]
        H2, cache = self.forward_batch(X, mask, keep_cache=True)
        q = H2[:, T - 2:] @ self.Wq.T + self.bq
        actions = np.asarray(actions, dtype=int)
        term = np.asarray(terminals, dtype=bool)
        q_next = q[:, 1] if target is None else target.q_batch(X, mask)[:, T - 1]
        boot = np.where(term, 0.0, q_next.max(axis=1))
        targets = np.asarray(rewards, float) + gamma * boot
        err = targets - q[np.arange(len(actions)), 0, actions]
        g = self.grad_q(X, mask, T - 2, actions, err / len(actions), cache=cache)
        self.sgd_step(g, alpha, clip_norm, optimizer)
        return float(0.5 * np.mean(err ** 2))

    def sgd_step(self, grad_ascent: np.ndarray, alpha: float, clip_norm: float | None = 1.0,
                 optimizer=None) -> float:
        """``theta += alpha * g`` with optional global-norm clipping; returns the pre-clip norm."""
        if not np.all(np.isfinite(grad_ascent)):
            bad = self._nonfinite_report(grad_ascent)
            raise TrainingError(f"non-finite gradient in {bad}")
        norm = float(np.sqrt(grad_ascent @ grad_ascent))
        scale = 1.0
        if clip_norm is not None and norm > clip_norm:
            scale = clip_norm / norm
        if optimizer is None:
            self.theta += (alpha * scale) * grad_ascent
        else:
            self.theta += alpha * optimizer.direction(scale * grad_ascent)
        if not np.all(np.isfinite(self.theta)):
            raise TrainingError(f"non-finite parameters after update in {self._nonfinite_report(self.theta)}")
        return norm

    def _nonfinite_report(self, flat) -> list[str]:
        return [k for k, v in self.views(flat).items() if not np.all(np.isfinite(v))]

    # -- persistence --------------------------------------------------------

    def to_bytes(self) -> bytes:
        head = WEIGHT_MAGIC + struct.pack("<5I", WEIGHT_VERSION, self.n_in, self.h1, self.h2, self.n_actions)
        return head + self.input_scale.astype("<f8").tobytes() + self.theta.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "QNetwork":
        if data[:4] != WEIGHT_MAGIC:
            raise ValueError("not a weight file (bad magic)")
        version, n_in, h1, h2, n_actions = struct.unpack_from("<5I", data, 4)
        if version != WEIGHT_VERSION:
            raise ValueError(f"unsupported weight file version {version}")
        off = 4 + 20
        scale = np.frombuffer(data, "<f8", n_in, off)
        off += 8 * n_in
        net = cls(n_in, h1, h2, n_actions, input_scale=scale)
        if len(data) != off + 8 * net.n_params:
            raise ValueError("weight file length does not match its header")
        net.theta[...] = np.frombuffer(data, "<f8", net.n_params, off)
        return net

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "QNetwork":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# -- Q-learning pieces ------------------------------------------------------

class Adam:
    """Bias-corrected first/second moment rescaling of an ascent direction."""

    def __init__(self, n: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def direction(self, g: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


def td_target(r: float, q_next, gamma: float, terminal: bool) -> float:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    if terminal:
        return float(r)
    return float(r + gamma * np.max(q_next))


def greedy_action(q_values) -> int:
    """Index of the largest Q-value; ties go to the lowest index."""
    q = np.asarray(q_values)
    if q.size == 0:
        raise ValueError("empty q_values")
    return int(np.argmax(q))


def forward(net: QNetwork, state_seq):
    return net.forward(state_seq)


def backward_update(net: QNetwork, sequence, action: int, target: float, alpha: float,
                    clip_norm: float | None = None) -> QNetwork:
    """One SGD step on ``0.5 * (target - Q(sequence, action))**2`` through the whole sequence.

    Equivalent to ``theta += alpha * (target - Q) * dQ/dtheta``.  Updates
    ``net`` in place and returns it.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if not 0 <= action < net.n_actions:
        raise ValueError(f"action {action} out of range")
    X = np.asarray(sequence, dtype=float)[None]
    q, _ = net.forward(X[0])
    err = float(target) - float(q[action])
    if err == 0.0:
        return net
    g = net.grad_q(X, None, X.shape[1] - 1, [action], [err])
    net.sgd_step(g, alpha, clip_norm)
    return net


def batch_update(net: QNetwork, X, mask, actions, targets, alpha: float,
                 clip_norm: float | None = 1.0, pos: int | None = None) -> float:
    """Minibatch version: mean of per-sample updates at step ``pos``; returns the mean loss."""
    X = np.asarray(X, dtype=float)
    if pos is None:
        pos = X.shape[1] - 1
    H2, _ = net.forward_batch(X[:, :pos + 1], None if mask is None else mask[:, :pos + 1])
    q = H2[:, pos] @ net.Wq.T + net.bq
    actions = np.asarray(actions, dtype=int)
    err = np.asarray(targets, float) - q[np.arange(len(actions)), actions]
    B = len(actions)
    g = net.grad_q(X[:, :pos + 1], None if mask is None else mask[:, :pos + 1], pos, actions, err / B)
    net.sgd_step(g, alpha, clip_norm)
    return float(0.5 * np.mean(err ** 2))
